"""Procedural ground-truth materials, simulated scans, augmentation and splits."""
import dataclasses
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy import ndimage
from scipy.spatial import cKDTree

from svbrdf_uq import io
from svbrdf_uq.errors import ContractError
from svbrdf_uq.material import DEFAULT_PPI, ImageGrid, MapStack, NormalMap
from svbrdf_uq.renderer import render_scan
from svbrdf_uq.utils import derive_seed, normalize_vectors

logger = logging.getLogger(__name__)

MIN_SIZE: int = 64
DEFAULT_SIZE: int = 128
TEST_FRACTION: float = 0.1
MIN_PER_FAMILY: int = 10
# Display transform used for the HSV jitter
DISPLAY_GAMMA: float = 2.2

# Seed streams under a dataset's master seed
_MATERIAL_STREAM = 1
_SPLIT_STREAM = 2

MANIFEST_FILE: str = "manifest.json"


class MaterialFamily(str, Enum):
    PLAIN_WEAVE = "plain_weave"
    TWILL = "twill"
    SATIN = "satin"
    JERSEY_KNIT = "jersey_knit"
    RIB_KNIT = "rib_knit"
    LEATHER_GRAIN = "leather_grain"

    @classmethod
    def parse(cls, family: Union[str, "MaterialFamily"]) -> "MaterialFamily":
        try:
            return cls(family)
        except ValueError:
            raise ContractError(
                "Unsupported material family {!r}; choose from {}".format(
                    family, ", ".join(f.value for f in cls)
                )
            ) from None

    @property
    def index(self) -> int:
        return list(MaterialFamily).index(self)


Range = Tuple[float, float]


@dataclass(frozen=True)
class FamilyParams:
    """Generator parameter ranges of a family.

    `period` is the yarn (or cell) period in pixels at `DEFAULT_PPI`;
    `amplitude` scales the height field's slopes.
    """

    period: Range
    amplitude: Range
    spec_base: Range
    rough_base: Range
    spec_var: float = 0.08
    rough_var: float = 0.08
    noise_cell: float = 24.0
    noise_amp: float = 0.01

    def __post_init__(self):
        for name in ("period", "amplitude", "spec_base", "rough_base"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ContractError("Empty {} range ({}, {})".format(name, lo, hi))
        for name in ("spec_base", "rough_base"):
            lo, hi = getattr(self, name)
            if lo < 0.0 or hi > 1.0:
                raise ContractError("{} range must lie in [0, 1]".format(name))


FAMILY_PARAMS: Dict[MaterialFamily, FamilyParams] = {
    MaterialFamily.PLAIN_WEAVE: FamilyParams(
        period=(6.0, 10.0),
        amplitude=(0.25, 0.45),
        spec_base=(0.15, 0.30),
        rough_base=(0.55, 0.75),
    ),
    MaterialFamily.TWILL: FamilyParams(
        period=(7.0, 12.0),
        amplitude=(0.3, 0.5),
        spec_base=(0.20, 0.35),
        rough_base=(0.45, 0.65),
    ),
    MaterialFamily.SATIN: FamilyParams(
        period=(5.0, 8.0),
        amplitude=(0.35, 0.6),
        spec_base=(0.60, 0.80),
        rough_base=(0.15, 0.30),
        spec_var=0.12,
        rough_var=0.05,
    ),
    MaterialFamily.JERSEY_KNIT: FamilyParams(
        period=(8.0, 12.0),
        amplitude=(0.3, 0.5),
        spec_base=(0.10, 0.25),
        rough_base=(0.65, 0.85),
    ),
    MaterialFamily.RIB_KNIT: FamilyParams(
        period=(8.0, 14.0),
        amplitude=(0.35, 0.6),
        spec_base=(0.10, 0.25),
        rough_base=(0.60, 0.80),
    ),
    MaterialFamily.LEATHER_GRAIN: FamilyParams(
        period=(10.0, 16.0),
        amplitude=(0.4, 0.7),
        spec_base=(0.30, 0.50),
        rough_base=(0.35, 0.55),
        rough_var=0.1,
    ),
}


@dataclass(frozen=True, eq=False)
class MaterialSample:
    """A ground-truth stack with its simulated scan.

    `base_color` is the albedo the scan was rendered with.
    """

    id: str
    family: MaterialFamily
    gt: MapStack
    scan: ImageGrid
    base_color: ImageGrid
    seed: int
    ppi: float

    def __post_init__(self):
        if self.scan.shape != self.gt.shape or self.base_color.shape != self.gt.shape:
            raise ContractError(
                "Sample {}: scan {} and maps {} disagree in size".format(
                    self.id, self.scan.shape, self.gt.shape
                )
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.gt.shape

    def replace(self, **changes) -> "MaterialSample":
        return dataclasses.replace(self, **changes)


def value_noise(
    shape: Tuple[int, int], cell: float, rng: np.random.Generator
) -> np.ndarray:
    """Smooth lattice noise with zero mean and unit peak amplitude.

    Random lattice values every `cell` pixels are blended with the quintic
    fade curve.
    """
    h, w = shape
    cell = max(cell, 1.0)
    grid_shape = (int(np.ceil(h / cell)) + 2, int(np.ceil(w / cell)) + 2)
    grid = rng.uniform(-1.0, 1.0, size=grid_shape)

    def _axis(n):
        t = np.arange(n) / cell
        i = np.floor(t).astype(int)
        f = t - i
        return i, f * f * f * (f * (f * 6.0 - 15.0) + 10.0)

    ri, rf = _axis(h)
    ci, cf = _axis(w)
    ri, ci = ri[:, None], ci[None, :]
    rf, cf = rf[:, None], cf[None, :]

    top = grid[ri, ci] + cf * (grid[ri, ci + 1] - grid[ri, ci])
    bottom = grid[ri + 1, ci] + cf * (grid[ri + 1, ci + 1] - grid[ri + 1, ci])
    res = top + rf * (bottom - top)
    res -= res.mean()
    peak = np.max(np.abs(res))
    return res / peak if peak > 0 else res


def cell_noise(
    shape: Tuple[int, int], cell: float, rng: np.random.Generator
) -> np.ndarray:
    """Voronoi ``F2 - F1`` distances, scaled to ``[0, 1]``; low along cell borders."""
    h, w = shape
    n_points = max(4, int(round(h * w / (cell * cell))))
    points = rng.uniform(0.0, 1.0, size=(n_points, 2)) * [h, w]
    rows, cols = np.mgrid[0:h, 0:w]
    query = np.column_stack([rows.ravel(), cols.ravel()]).astype(float)
    dist, _ = cKDTree(points).query(query, k=2)
    res = (dist[:, 1] - dist[:, 0]).reshape(h, w)
    return res / max(res.max(), 1e-12)


def _height_field(
    family: MaterialFamily,
    shape: Tuple[int, int],
    period: float,
    rng: np.random.Generator,
) -> np.ndarray:
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    phase_r, phase_c = rng.uniform(0.0, 2.0 * np.pi, size=2)
    u = 2.0 * np.pi * cols / period + phase_c
    v = 2.0 * np.pi * rows / period + phase_r

    if family is MaterialFamily.PLAIN_WEAVE:
        # alternating over/under crossings
        height = np.sin(u) * np.sin(v)
    elif family is MaterialFamily.TWILL:
        height = np.sin(u + 0.5 * v) + 0.3 * np.sin(2.0 * v)
    elif family is MaterialFamily.SATIN:
        # long floats: strong horizontal ridges with a faint crossing
        height = np.sin(v) + 0.15 * np.sin(0.25 * u)
    elif family is MaterialFamily.JERSEY_KNIT:
        # interlocking V loops
        height = np.cos(u + np.pi * np.abs(np.sin(0.5 * v))) * np.abs(np.sin(v))
    elif family is MaterialFamily.RIB_KNIT:
        height = np.abs(np.sin(0.5 * u)) + 0.2 * np.sin(v)
    else:
        grain = cell_noise(shape, period, rng)
        height = np.sqrt(grain) + 0.2 * value_noise(shape, 0.5 * period, rng)

    height = height - height.mean()
    return height / max(np.max(np.abs(height)), 1e-12)


def normals_from_height(height: np.ndarray, amplitude: float) -> np.ndarray:
    """Tangent-space normals of the surface ``z = amplitude * height``.

    Pixel units are used horizontally; x runs along columns and y against rows.
    """
    d_row, d_col = np.gradient(height)
    n = np.stack(
        [-amplitude * d_col, amplitude * d_row, np.ones_like(height)], axis=-1
    )
    return normalize_vectors(n)


def generate_material(
    family: Union[str, MaterialFamily],
    seed: int,
    size: int = DEFAULT_SIZE,
    ppi: float = DEFAULT_PPI,
    id: Optional[str] = None,
) -> MaterialSample:
    """Generate one synthetic material of a family.

    The output depends only on ``(family, seed, size, ppi)``.  Spatial
    periods scale with `ppi`, so a material keeps its physical yarn size at
    any resolution.

    Raises
    ------
    ContractError
        If `family` is unsupported or ``size < 64``.
    """
    family = MaterialFamily.parse(family)
    if size < MIN_SIZE:
        raise ContractError(
            "Materials must be at least {} pixels; got {}".format(MIN_SIZE, size)
        )

    params = FAMILY_PARAMS[family]
    rng = np.random.default_rng([family.index, int(seed)])
    shape = (size, size)
    scale = ppi / DEFAULT_PPI

    period = rng.uniform(*params.period) * scale
    amplitude = rng.uniform(*params.amplitude)
    spec_base = rng.uniform(*params.spec_base)
    rough_base = rng.uniform(*params.rough_base)

    height = _height_field(family, shape, period, rng)
    # slopes of about `amplitude` at any resolution
    normals = normals_from_height(height, amplitude * period / (2.0 * np.pi))

    # shared low-frequency tone; the scan carries it more strongly than the maps
    tone = value_noise(shape, params.noise_cell * scale, rng)
    detail = value_noise(shape, 0.5 * period, rng)

    spec = spec_base + params.spec_var * height + params.noise_amp * (tone + detail)
    rough = rough_base - params.rough_var * height + params.noise_amp * (detail - tone)
    gt = MapStack.from_arrays(
        normals, np.clip(spec, 0.0, 1.0), np.clip(rough, 0.0, 1.0), ppi=ppi
    )

    hue = rng.uniform(0.0, 1.0)
    saturation = rng.uniform(0.2, 0.6)
    value = rng.uniform(0.35, 0.75)
    rgb = hsv_to_rgb([hue, saturation, value])
    shading = 1.0 + 0.1 * height + 0.05 * tone
    base = np.clip(shading[..., None] * rgb, 0.0, 1.0)
    base_color = ImageGrid(base, ppi=ppi)

    scan = render_scan(gt, base_color)
    return MaterialSample(
        id=id or "{}_{:06d}".format(family.value, int(seed)),
        family=family,
        gt=gt,
        scan=scan,
        base_color=base_color,
        seed=int(seed),
        ppi=float(ppi),
    )


@dataclass(frozen=True)
class AugmentationPolicy:
    """Which augmentations `augment` applies, and their magnitudes.

    Geometric transforms (`crop`, `rotate`, `rescale`) act on the scan and on
    every map; the rest act on the scan only.  The default policy is the
    identity.
    """

    crop: Optional[int] = None
    rotate: bool = False
    max_angle_deg: float = 0.0
    rescale: Optional[Tuple[float, float]] = None
    hsv_jitter: bool = False
    value_jitter: float = 0.10
    saturation_jitter: float = 0.05
    noise_std: float = 0.0
    blur_sigma: float = 0.0
    erase_fraction: float = 0.0

    def __post_init__(self):
        if self.rescale is not None:
            object.__setattr__(self, "rescale", tuple(float(x) for x in self.rescale))
            lo, hi = self.rescale
            if not 0 < lo <= hi:
                raise ContractError("Invalid rescale range {}".format(self.rescale))
        if self.crop is not None and self.crop < 1:
            raise ContractError("Crop size must be positive")
        for name in ("max_angle_deg", "noise_std", "blur_sigma", "erase_fraction"):
            if getattr(self, name) < 0:
                raise ContractError("{} must be non-negative".format(name))
        if self.erase_fraction >= 1.0:
            raise ContractError("erase_fraction must be below 1")

    @property
    def is_identity(self) -> bool:
        return (
            self.crop is None
            and not self.rotate
            and self.rescale is None
            and not self.hsv_jitter
            and self.noise_std == 0
            and self.blur_sigma == 0
            and self.erase_fraction == 0
        )

    @classmethod
    def training_default(cls, crop: Optional[int] = None) -> "AugmentationPolicy":
        return cls(
            crop=crop,
            rotate=True,
            max_angle_deg=10.0,
            rescale=(0.9, 1.1),
            hsv_jitter=True,
            noise_std=0.01,
            blur_sigma=0.8,
            erase_fraction=0.05,
        )

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        if self.rescale is not None:
            d["rescale"] = list(self.rescale)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "AugmentationPolicy":
        return cls(**d)


def _map_planes(sample: MaterialSample) -> Dict[str, np.ndarray]:
    return {
        "normals": sample.gt.normals.vectors,
        "spec": sample.gt.specular.data,
        "rough": sample.gt.roughness.data,
        "scan": sample.scan.data,
        "base": sample.base_color.data,
    }


def _rebuild(sample: MaterialSample, planes: Dict[str, np.ndarray], ppi: float):
    gt = MapStack(
        NormalMap(normalize_vectors(planes["normals"])),
        ImageGrid(np.clip(planes["spec"], 0.0, 1.0), ppi=ppi),
        ImageGrid(np.clip(planes["rough"], 0.0, 1.0), ppi=ppi),
    )
    return sample.replace(
        gt=gt,
        scan=ImageGrid(np.clip(planes["scan"], 0.0, 1.0), ppi=ppi),
        base_color=ImageGrid(np.clip(planes["base"], 0.0, 1.0), ppi=ppi),
        ppi=ppi,
    )


def _rotate_tangent(vectors: np.ndarray, angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    x, y = vectors[..., 0], vectors[..., 1]
    return np.stack([c * x - s * y, s * x + c * y, vectors[..., 2]], axis=-1)


def rotate_sample(
    sample: MaterialSample, quarter_turns: int = 0, angle_deg: float = 0.0
) -> MaterialSample:
    """Rotate a sample counterclockwise by ``90 * quarter_turns + angle_deg`` degrees.

    Quarter turns are exact; the extra angle resamples bilinearly with
    reflected borders.  Normals are rotated in the tangent plane along with
    their pixels.
    """
    k = int(quarter_turns) % 4
    planes = _map_planes(sample)
    if k:
        planes = {key: np.rot90(p, k, axes=(0, 1)) for key, p in planes.items()}
        n = planes["normals"]
        for _ in range(k):
            # a quarter turn maps (x, y) to (-y, x) without rounding
            n = np.stack([-n[..., 1], n[..., 0], n[..., 2]], axis=-1)
        planes["normals"] = n

    if angle_deg:
        planes = {
            key: ndimage.rotate(
                p, angle_deg, axes=(1, 0), reshape=False, order=1, mode="reflect"
            )
            for key, p in planes.items()
        }
        planes["normals"] = _rotate_tangent(planes["normals"], np.deg2rad(angle_deg))

    return _rebuild(sample, planes, sample.ppi)


def crop_sample(sample: MaterialSample, size: int, row: int = 0, col: int = 0):
    """Cut a `size` × `size` window with its top-left corner at ``(row, col)``.

    Raises
    ------
    ContractError
        If the window does not fit inside the sample.
    """
    h, w = sample.shape
    if size > min(h, w):
        raise ContractError(
            "Crop of {} pixels is larger than the {}x{} source".format(size, h, w)
        )
    if not (0 <= row <= h - size and 0 <= col <= w - size):
        raise ContractError(
            "Crop window at ({}, {}) leaves the source".format(row, col)
        )
    planes = {
        key: p[row : row + size, col : col + size]
        for key, p in _map_planes(sample).items()
    }
    return _rebuild(sample, planes, sample.ppi)


def rescale_sample(sample: MaterialSample, factor: float) -> MaterialSample:
    """Resample a sample by `factor` (bilinear); its ppi scales with it."""
    if not factor > 0:
        raise ContractError("Rescale factor must be positive")
    planes = {
        key: ndimage.zoom(p, (factor, factor, 1), order=1, mode="nearest")
        for key, p in _map_planes(sample).items()
    }
    return _rebuild(sample, planes, sample.ppi * factor)


def jitter_hsv(
    scan: np.ndarray, value_scale: float, saturation_scale: float
) -> np.ndarray:
    """Scale the HSV value and saturation of a linear scan in display space."""
    display = np.clip(scan, 0.0, 1.0) ** (1.0 / DISPLAY_GAMMA)
    if display.shape[-1] == 1:
        display = np.clip(display * value_scale, 0.0, 1.0)
    else:
        hsv = rgb_to_hsv(display)
        hsv[..., 1] = np.clip(hsv[..., 1] * saturation_scale, 0.0, 1.0)
        hsv[..., 2] = np.clip(hsv[..., 2] * value_scale, 0.0, 1.0)
        display = hsv_to_rgb(hsv)
    return display ** DISPLAY_GAMMA


def augment(
    sample: MaterialSample, policy: AugmentationPolicy, seed: int
) -> MaterialSample:
    """Apply a random draw of `policy` to a sample, reproducibly per `seed`.

    The identity policy returns `sample` itself.
    """
    if policy.is_identity:
        return sample

    rng = np.random.default_rng(seed)
    res = sample

    if policy.rotate:
        k = int(rng.integers(4))
        angle = rng.uniform(-policy.max_angle_deg, policy.max_angle_deg)
        res = rotate_sample(res, k, angle if policy.max_angle_deg > 0 else 0.0)
    if policy.rescale is not None:
        res = rescale_sample(res, rng.uniform(*policy.rescale))
    if policy.crop is not None:
        h, w = res.shape
        if policy.crop > min(h, w):
            raise ContractError(
                "Crop of {} pixels is larger than the {}x{} source".format(
                    policy.crop, h, w
                )
            )
        row = int(rng.integers(h - policy.crop + 1))
        col = int(rng.integers(w - policy.crop + 1))
        res = crop_sample(res, policy.crop, row, col)

    scan = np.array(res.scan.data)
    if policy.hsv_jitter:
        scan = jitter_hsv(
            scan,
            1.0 + rng.uniform(-policy.value_jitter, policy.value_jitter),
            1.0 + rng.uniform(-policy.saturation_jitter, policy.saturation_jitter),
        )
    if policy.noise_std > 0:
        scan = scan + rng.normal(0.0, policy.noise_std, size=scan.shape)
    if policy.blur_sigma > 0:
        sigma = rng.uniform(0.0, policy.blur_sigma)
        scan = ndimage.gaussian_filter(scan, sigma=(sigma, sigma, 0))
    if policy.erase_fraction > 0:
        h, w = res.shape
        area = rng.uniform(0.0, policy.erase_fraction) * h * w
        aspect = rng.uniform(0.5, 2.0)
        eh = int(np.clip(round(np.sqrt(area * aspect)), 1, h))
        ew = int(np.clip(round(np.sqrt(area / aspect)), 1, w))
        r0 = int(rng.integers(h - eh + 1))
        c0 = int(rng.integers(w - ew + 1))
        scan[r0 : r0 + eh, c0 : c0 + ew] = rng.uniform(0.0, 1.0, size=scan.shape[-1])

    return res.replace(scan=ImageGrid(np.clip(scan, 0.0, 1.0), ppi=res.ppi))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Generated materials with a stratified train/test split."""

    samples: Tuple[MaterialSample, ...]
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    seed: int
    families: Tuple[MaterialFamily, ...]

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ContractError("Material ids must be unique")
        train, test = set(self.train_ids), set(self.test_ids)
        if train & test or (train | test) != set(ids):
            raise ContractError("The split must partition the dataset")

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> Dict[str, MaterialSample]:
        return {s.id: s for s in self.samples}

    def train(self) -> List[MaterialSample]:
        index = self.by_id()
        return [index[i] for i in self.train_ids]

    def test(self) -> List[MaterialSample]:
        index = self.by_id()
        return [index[i] for i in self.test_ids]


def n_test_for(n: int, fraction: float = TEST_FRACTION) -> int:
    """Size of a family's test share: ``fraction * n`` rounded, at least 1."""
    return max(1, int(np.floor(fraction * n + 0.5)))


def stratified_split(
    samples: Sequence[MaterialSample], seed: int, fraction: float = TEST_FRACTION
) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Split ids into train and test with every family in the same proportion."""
    rng = np.random.default_rng([int(seed), _SPLIT_STREAM])
    train, test = [], []
    for family in MaterialFamily:
        ids = sorted(s.id for s in samples if s.family is family)
        if not ids:
            continue
        order = rng.permutation(len(ids))
        n_test = n_test_for(len(ids), fraction)
        test.extend(sorted(ids[i] for i in order[:n_test]))
        train.extend(sorted(ids[i] for i in order[n_test:]))
    return tuple(train), tuple(test)


def make_dataset(
    n_per_family: int,
    families: Optional[Iterable[Union[str, MaterialFamily]]] = None,
    seed: int = 0,
    size: int = DEFAULT_SIZE,
    ppi: float = DEFAULT_PPI,
) -> Dataset:
    """Generate `n_per_family` materials per family and split them 90/10.

    Raises
    ------
    ContractError
        If ``n_per_family < 10`` or a family is unsupported.
    """
    if n_per_family < MIN_PER_FAMILY:
        raise ContractError(
            "At least {} materials per family are needed; got {}".format(
                MIN_PER_FAMILY, n_per_family
            )
        )
    fams = tuple(
        MaterialFamily.parse(f)
        for f in (families if families is not None else MaterialFamily)
    )
    if not fams:
        raise ContractError("No material families selected")

    samples = []
    for family in fams:
        for i in range(n_per_family):
            material_seed = derive_seed(seed, _MATERIAL_STREAM, family.index, i)
            samples.append(
                generate_material(
                    family,
                    material_seed,
                    size,
                    ppi,
                    id="{}_{:04d}".format(family.value, i),
                )
            )

    train, test = stratified_split(samples, seed)
    logger.info(
        "Generated %d materials (%d train / %d test) over %d families",
        len(samples),
        len(train),
        len(test),
        len(fams),
    )
    return Dataset(tuple(samples), train, test, int(seed), fams)


def save_sample(directory: str, sample: MaterialSample):
    """Write a sample's maps, scan and base color with a ``meta.json`` sidecar."""
    io.save_stack(
        directory,
        sample.gt,
        {"name": sample.id, "family": sample.family.value, "seed": sample.seed},
    )
    io.write_png16(os.path.join(directory, "scan.png"), sample.scan)
    io.write_png16(os.path.join(directory, "base_color.png"), sample.base_color)


def load_sample(directory: str) -> MaterialSample:
    """Read a sample written by `save_sample`.

    Map values come back quantized to 16 bits.
    """
    gt, meta = io.load_stack(directory)
    scan = io.read_png16(os.path.join(directory, "scan.png"), gt.ppi)
    base_path = os.path.join(directory, "base_color.png")
    base = io.read_png16(base_path, gt.ppi) if os.path.exists(base_path) else scan
    return MaterialSample(
        id=str(meta.get("name", os.path.basename(os.path.normpath(directory)))),
        family=MaterialFamily.parse(meta["family"]),
        gt=gt,
        scan=scan,
        base_color=base,
        seed=int(meta.get("seed", 0)),
        ppi=gt.ppi,
    )


def save_dataset(root: str, dataset: Dataset):
    """Write one folder per material plus a ``manifest.json`` with the split."""
    os.makedirs(root, exist_ok=True)
    for sample in dataset.samples:
        save_sample(os.path.join(root, sample.id), sample)
    io.write_json(
        os.path.join(root, MANIFEST_FILE),
        {
            "seed": dataset.seed,
            "families": [f.value for f in dataset.families],
            "materials": [s.id for s in dataset.samples],
            "train": list(dataset.train_ids),
            "test": list(dataset.test_ids),
        },
    )
    logger.info("Wrote %d materials to %s", len(dataset), root)


def load_dataset(root: str) -> Dataset:
    """Read a dataset written by `save_dataset`."""
    manifest = io.read_json(os.path.join(root, MANIFEST_FILE))
    samples = tuple(load_sample(os.path.join(root, i)) for i in manifest["materials"])
    return Dataset(
        samples,
        tuple(manifest["train"]),
        tuple(manifest["test"]),
        int(manifest["seed"]),
        tuple(MaterialFamily.parse(f) for f in manifest["families"]),
    )
