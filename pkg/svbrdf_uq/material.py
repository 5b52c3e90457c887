"""Image and SVBRDF map-stack value types.

All image data is linear-light.  Arrays are stored as ``(height, width,
channels)`` and are made read-only at construction, so instances can be shared
freely.
"""
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from svbrdf_uq.errors import DimensionMismatchError
from svbrdf_uq.utils import luminance

DEFAULT_PPI: float = 200.0
# Lower bound on the tangent-space z component used when decoding
Z_FLOOR: float = 1e-4
UNIT_NORM_TOL: float = 1e-5
QUANTIZATION_LEVELS: int = 65535


def _frozen(data) -> np.ndarray:
    arr = np.array(data, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """A row-major image with 1 or 3 channels and a pixels-per-inch tag."""

    data: np.ndarray
    ppi: float = DEFAULT_PPI

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3 or data.shape[-1] not in (1, 3):
            raise ValueError(
                "ImageGrid data must have shape (H, W, 1) or (H, W, 3);"
                " got {}".format(data.shape)
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("ImageGrid values must be finite")
        if not self.ppi > 0:
            raise ValueError("ppi must be positive; got {}".format(self.ppi))
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "ppi", float(self.ppi))

    @classmethod
    def constant(
        cls, value: float, width: int, height: int, channels: int = 1, ppi=DEFAULT_PPI
    ) -> "ImageGrid":
        return cls(np.full((height, width, channels), float(value)), ppi=ppi)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape[:2]

    def luminance(self) -> np.ndarray:
        """Return the ``(H, W)`` luminance of this image."""
        return luminance(self.data)

    def with_data(self, data) -> "ImageGrid":
        return ImageGrid(data, ppi=self.ppi)


@dataclass(frozen=True, eq=False)
class NormalMap:
    """Per-pixel tangent-space normals, stored as ``(H, W, 3)`` vectors.

    Construction only checks shapes and finiteness; unit length and ``z > 0``
    are reported by `validate_stack`.
    """

    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 3 or vectors.shape[-1] != 3:
            raise ValueError(
                "NormalMap vectors must have shape (H, W, 3); got {}".format(
                    vectors.shape
                )
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("NormalMap vectors must be finite")
        object.__setattr__(self, "vectors", _frozen(vectors))

    @classmethod
    def flat(cls, width: int, height: int) -> "NormalMap":
        v = np.zeros((height, width, 3))
        v[..., 2] = 1.0
        return cls(v)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.vectors.shape[:2]


@dataclass(frozen=True, eq=False)
class MapStack:
    """The specular-lobe parameter maps: normals, specular and roughness."""

    normals: NormalMap
    specular: ImageGrid
    roughness: ImageGrid

    def __post_init__(self):
        for name in ("specular", "roughness"):
            grid = getattr(self, name)
            if grid.channels != 1:
                raise DimensionMismatchError(
                    "{} must be single-channel; got {} channels".format(
                        name, grid.channels
                    )
                )
        shapes = {self.normals.shape, self.specular.shape, self.roughness.shape}
        if len(shapes) != 1:
            raise DimensionMismatchError(
                "Map dimensions disagree: normals {}, specular {}, roughness {}".format(
                    self.normals.shape, self.specular.shape, self.roughness.shape
                )
            )

    @classmethod
    def from_arrays(
        cls,
        normals: np.ndarray,
        specular: np.ndarray,
        roughness: np.ndarray,
        ppi: float = DEFAULT_PPI,
    ) -> "MapStack":
        """Build a stack from plain ``(H, W, 3)``, ``(H, W)`` and ``(H, W)`` arrays."""
        return cls(
            NormalMap(normals),
            ImageGrid(specular, ppi=ppi),
            ImageGrid(roughness, ppi=ppi),
        )

    @classmethod
    def flat(
        cls,
        width: int,
        height: int,
        specular: float = 0.04,
        roughness: float = 0.5,
        ppi: float = DEFAULT_PPI,
    ) -> "MapStack":
        return cls(
            NormalMap.flat(width, height),
            ImageGrid.constant(specular, width, height, ppi=ppi),
            ImageGrid.constant(roughness, width, height, ppi=ppi),
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.normals.shape

    @property
    def height(self) -> int:
        return self.normals.height

    @property
    def width(self) -> int:
        return self.normals.width

    @property
    def ppi(self) -> float:
        return self.specular.ppi

    def spec(self) -> np.ndarray:
        """The ``(H, W)`` specular values."""
        return self.specular.data[..., 0]

    def rough(self) -> np.ndarray:
        """The ``(H, W)`` roughness values."""
        return self.roughness.data[..., 0]


class Violation(NamedTuple):
    map: str
    pixel: Optional[Tuple[int, int]]
    rule: str
    value: float


def check_dimensions(*shapes: Tuple[int, ...], what: str = "inputs"):
    """Raise a `DimensionMismatchError` unless all `shapes` agree."""
    if len(set(tuple(s) for s in shapes)) > 1:
        raise DimensionMismatchError(
            "Dimensions of {} disagree: {}".format(what, ", ".join(map(str, shapes)))
        )


def encode_normals(n: NormalMap, ppi: float = DEFAULT_PPI) -> ImageGrid:
    """Encode unit normals into a 3-channel image with ``c = (v + 1) / 2``."""
    return ImageGrid((n.vectors + 1.0) / 2.0, ppi=ppi)


def decode_normals(img: ImageGrid) -> NormalMap:
    """Decode an encoded normals image back into unit vectors.

    The decoded vector ``v = 2 c - 1`` has its z component clamped to at least
    `Z_FLOOR` and is then renormalized, so every pixel decodes to a unit
    vector; the zero vector of a mid-grey pixel becomes ``(0, 0, 1)``.
    """
    if img.channels != 3:
        raise DimensionMismatchError(
            "Normals images need 3 channels; got {}".format(img.channels)
        )
    v = 2.0 * img.data - 1.0
    v[..., 2] = np.maximum(v[..., 2], Z_FLOOR)
    return NormalMap(v / np.linalg.norm(v, axis=-1, keepdims=True))


def quantize16(data: np.ndarray) -> np.ndarray:
    """Quantize values in ``[0, 1]`` to ``uint16``."""
    q = np.round(np.clip(data, 0.0, 1.0) * QUANTIZATION_LEVELS)
    return q.astype(np.uint16)


def dequantize16(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) / QUANTIZATION_LEVELS


def validate_stack(m: MapStack) -> List[Violation]:
    """List every invariant violation in a map stack.

    Each `Violation` names the map, the ``(row, col)`` pixel, the rule and
    the offending value.  An empty list means the stack is valid.  This
    never raises.
    """
    violations: List[Violation] = []

    def _report(map_name, mask, rule, values):
        for r, c in np.argwhere(mask):
            violations.append(
                Violation(map_name, (int(r), int(c)), rule, float(values[r, c]))
            )

    v = m.normals.vectors
    norms = np.linalg.norm(v, axis=-1)
    _report("normals", np.abs(norms - 1.0) > UNIT_NORM_TOL, "unit_norm", norms)
    _report("normals", v[..., 2] <= 0.0, "positive_z", v[..., 2])

    for name, values in (("specular", m.spec()), ("roughness", m.rough())):
        _report(name, (values < 0.0) | (values > 1.0), "range_0_1", values)

    return violations
