import hashlib
from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from svbrdf_uq.errors import ContractError
from svbrdf_uq.material import ImageGrid, MapStack, check_dimensions

# Disney conventions: alpha = roughness ** 2 and F0 = 0.08 * specular
SPECULAR_F0_SCALE: float = 0.08
# Keeps the GGX distribution finite at roughness 0
ALPHA_MIN: float = 1e-3

DEFAULT_RENDER_SET_SIZE: int = 50
DEFAULT_RENDER_SET_SEED: int = 0

# Sampler bounds: view colatitude <= 70 deg, half-vector colatitude <= 30 deg,
# and reflected lights must have z >= 0.05 (about 87 deg)
_MAX_VIEW_SIN: float = float(np.sin(np.deg2rad(70.0)))
_MAX_HALF_SIN: float = float(np.sin(np.deg2rad(30.0)))
_MIN_LIGHT_COS: float = 0.05

SCAN_LIGHT_COUNT: int = 32
SCAN_VIEW = np.r_[0.0, 0.0, 1.0]

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def as_direction(v: Sequence[float]) -> np.ndarray:
    """Validate and normalize an upper-hemisphere direction.

    Raises
    ------
    ContractError
        If `v` has zero length or points into the lower hemisphere.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ContractError("A direction is a 3-vector; got shape {}".format(v.shape))
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm < 1e-12:
        raise ContractError("Direction {} has no length".format(v.tolist()))
    v = v / norm
    if v[2] <= 0.0:
        raise ContractError(
            "Direction {} is not in the upper hemisphere".format(v.tolist())
        )
    return v


def direction_from_angles(theta_deg: float, phi_deg: float = 0.0) -> np.ndarray:
    """Build a direction from its colatitude and azimuth in degrees."""
    theta, phi = np.deg2rad(theta_deg), np.deg2rad(phi_deg)
    return as_direction(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )


def reflect(v: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror `v` about `n` (both pointing away from the surface)."""
    return 2.0 * _dot(v, n)[..., None] * n - v


@dataclass(frozen=True, eq=False)
class RenderSet:
    """An ordered set of ``(light, view)`` direction pairs."""

    lights: np.ndarray
    views: np.ndarray

    def __post_init__(self):
        lights = np.atleast_2d(np.asarray(self.lights, dtype=float))
        views = np.atleast_2d(np.asarray(self.views, dtype=float))
        if lights.shape != views.shape or lights.shape[-1] != 3:
            raise ContractError(
                "Lights {} and views {} must both have shape (S, 3)".format(
                    lights.shape, views.shape
                )
            )
        if lights.shape[0] < 1:
            raise ContractError("A render set needs at least one pair")
        lights = np.stack([as_direction(x) for x in lights])
        views = np.stack([as_direction(x) for x in views])
        lights.setflags(write=False)
        views.setflags(write=False)
        object.__setattr__(self, "lights", lights)
        object.__setattr__(self, "views", views)

    def __len__(self) -> int:
        return self.lights.shape[0]

    def pairs(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        return zip(self.lights, self.views)

    def permuted(self, order: Sequence[int]) -> "RenderSet":
        order = np.asarray(order)
        return RenderSet(self.lights[order], self.views[order])

    def digest(self) -> str:
        """A short, stable hash of the pair coordinates."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.lights, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.views, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class RadianceImage:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ContractError("Radiance values must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _smith_lambda(cos_theta: np.ndarray, a2: np.ndarray) -> np.ndarray:
    c2 = cos_theta * cos_theta
    return 0.5 * (np.sqrt(1.0 + a2 * (1.0 - c2) / c2) - 1.0)


def ggx_specular(normal, spec, rough, l, v) -> np.ndarray:
    r"""Evaluate the isotropic GGX specular lobe.

    .. math::

        s = \frac{D(h) F(v, h) G(l, v)}{4 (n \cdot l)(n \cdot v)}

    with the Trowbridge-Reitz distribution ``D`` at ``alpha = rough**2``, the
    height-correlated Smith masking term ``G`` and Schlick's Fresnel with
    ``F0 = 0.08 * spec``.  All arguments broadcast against each other
    (`normal`, `l` and `v` along a trailing axis of length 3).  The value is
    exactly symmetric in `l` and `v`.

    Parameters
    ----------
    normal
        Unit normals, shape ``(..., 3)``.
    spec
        Specular values in ``[0, 1]``.
    rough
        Roughness values in ``[0, 1]``.
    l, v
        Unit light and view directions, shape ``(3,)`` or ``(..., 3)``.

    Returns
    -------
    The non-negative specular reflectance; zero wherever ``n . l <= 0`` or
    ``n . v <= 0``.
    """
    n = np.asarray(normal, dtype=float)
    l = np.asarray(l, dtype=float)
    v = np.asarray(v, dtype=float)
    spec = np.asarray(spec, dtype=float)
    rough = np.asarray(rough, dtype=float)

    lv_sum = l + v
    lv_norm = np.linalg.norm(lv_sum, axis=-1)
    h = lv_sum / lv_norm[..., None]

    nl = _dot(n, l)
    nv = _dot(n, v)
    nh = _dot(n, h)
    # v . h == l . h; this form keeps the lobe exactly symmetric
    vh = np.clip((1.0 + _dot(l, v)) / lv_norm, 0.0, 1.0)

    visible = (nl > 0.0) & (nv > 0.0)
    nl_safe = np.where(visible, nl, 1.0)
    nv_safe = np.where(visible, nv, 1.0)

    alpha = np.maximum(rough * rough, ALPHA_MIN)
    a2 = alpha * alpha

    denom_d = nh * nh * (a2 - 1.0) + 1.0
    d = a2 / (np.pi * denom_d * denom_d)

    g = 1.0 / (1.0 + _smith_lambda(nl_safe, a2) + _smith_lambda(nv_safe, a2))

    f0 = SPECULAR_F0_SCALE * spec
    f = f0 + (1.0 - f0) * (1.0 - vh) ** 5

    res = d * f * g / (4.0 * (nl_safe * nv_safe))

    return np.where(visible, res, 0.0)


def _check_albedo(m: MapStack, albedo: ImageGrid):
    check_dimensions(m.shape, albedo.shape, what="map stack and albedo")


def shade(m: MapStack, albedo: ImageGrid, l, v) -> RadianceImage:
    r"""Evaluate :math:`f_{l,v} = A / \pi + s_{l,v}(M)` per pixel.

    The cosine foreshortening term is not included.  The diffuse term is
    emitted regardless of the geometry.
    """
    _check_albedo(m, albedo)
    l, v = as_direction(l), as_direction(v)
    spec = ggx_specular(m.normals.vectors, m.spec(), m.rough(), l, v)
    return RadianceImage(albedo.data / np.pi + spec[..., None])


def cosine_weight(l) -> float:
    """Return :math:`\\cos \\theta_l`, clamped to ``[0, 1]``."""
    l = as_direction(l)
    return float(np.clip(l[2], 0.0, 1.0))


def _halton(d: int, seed: int) -> qmc.Halton:
    rng = np.random.default_rng(seed)
    try:
        return qmc.Halton(d=d, scramble=True, rng=rng)
    except TypeError:
        # SciPy < 1.15 names the generator argument `seed`
        return qmc.Halton(d=d, scramble=True, seed=rng)


def sample_render_set(
    n: int = DEFAULT_RENDER_SET_SIZE, seed: int = DEFAULT_RENDER_SET_SEED
) -> RenderSet:
    """Generate a deterministic set of `n` light/view pairs.

    Views are drawn from a cosine-weighted hemisphere (colatitude at most 70
    degrees) and half-vectors from a cosine-weighted cap of 30 degrees, both
    from a scrambled Halton sequence; each light is the view mirrored about
    its half-vector.  Pairs whose light would fall below about 87 degrees are
    skipped, so the result is biased toward moderate elevations and includes
    near-mirror configurations.

    Raises
    ------
    ContractError
        If ``n < 1``.
    """
    if n < 1:
        raise ContractError("A render set needs n >= 1; got {}".format(n))

    engine = _halton(4, seed)
    lights, views = [], []
    while len(lights) < n:
        u = engine.random(max(2 * n, 16))

        sin_v = np.sqrt(u[:, 0]) * _MAX_VIEW_SIN
        phi_v = 2.0 * np.pi * u[:, 1]
        sin_h = np.sqrt(u[:, 2]) * _MAX_HALF_SIN
        phi_h = 2.0 * np.pi * u[:, 3]

        v = np.stack(
            [sin_v * np.cos(phi_v), sin_v * np.sin(phi_v), np.sqrt(1.0 - sin_v ** 2)],
            axis=-1,
        )
        h = np.stack(
            [sin_h * np.cos(phi_h), sin_h * np.sin(phi_h), np.sqrt(1.0 - sin_h ** 2)],
            axis=-1,
        )
        l = reflect(v, h)

        for l_i, v_i in zip(l, v):
            if l_i[2] >= _MIN_LIGHT_COS and len(lights) < n:
                lights.append(l_i)
                views.append(v_i)

    return RenderSet(np.stack(lights), np.stack(views))


def scan_lights(count: int = SCAN_LIGHT_COUNT) -> np.ndarray:
    """A fixed, cosine-distributed spiral of `count` hemisphere directions."""
    i = np.arange(count)
    sin_t = np.sqrt((i + 0.5) / count)
    phi = i * _GOLDEN_ANGLE
    return np.stack(
        [sin_t * np.cos(phi), sin_t * np.sin(phi), np.sqrt(1.0 - sin_t ** 2)], axis=-1
    )


def render_scan(m: MapStack, base_color: ImageGrid) -> ImageGrid:
    """Simulate a flatbed scan of a material under near-diffuse lighting.

    The result averages the cosine-weighted ``shade`` values over the fixed
    `scan_lights` set with the view at the zenith, normalized so that a flat,
    purely diffuse pixel reproduces its base color, and clipped to ``[0, 1]``.
    """
    _check_albedo(m, base_color)
    normals = m.normals.vectors
    lights = scan_lights()

    acc = np.zeros(base_color.data.shape)
    for l in lights:
        f = shade(m, base_color, l, SCAN_VIEW).values
        foreshortening = np.maximum(_dot(normals, l), 0.0)
        acc += foreshortening[..., None] * f

    acc *= np.pi / np.sum(lights[:, 2])

    return ImageGrid(np.clip(acc, 0.0, 1.0), ppi=base_color.ppi)
