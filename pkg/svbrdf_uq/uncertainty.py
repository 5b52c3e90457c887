import logging
import math
import warnings
from dataclasses import dataclass
from typing import Any, Dict, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from svbrdf_uq.errors import (
    ContractError,
    InsufficientSamplesError,
    DimensionMismatchError,
)
from svbrdf_uq.material import ImageGrid, MapStack, NormalMap, check_dimensions
from svbrdf_uq.renderer import RenderSet, cosine_weight, ggx_specular
from svbrdf_uq.utils import derive_seed, population_std

logger = logging.getLogger(__name__)

DEFAULT_DROPOUT_RATE: float = 0.2
DEFAULT_MC_SAMPLES: int = 16
DEFAULT_EPS: float = 1e-12
GREY_ALBEDO: float = 0.5


@runtime_checkable
class StochasticPredictor(Protocol):
    """Anything that maps an input image to a map stack, optionally with dropout.

    ``predict(image, seed=None)`` is the deterministic pass; passing an integer
    `seed` draws one stochastic pass.
    """

    dropout_rate: float

    def predict(self, image: ImageGrid, seed: Optional[int] = None) -> MapStack:
        ...  # pragma: no cover


def grey_albedo(width: int, height: int, value: float = GREY_ALBEDO, ppi=200.0):
    """The constant neutral-grey albedo used by the render-space metrics."""
    return ImageGrid.constant(value, width, height, ppi=ppi)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """`N` stochastic predictions for a single input."""

    samples: Tuple[MapStack, ...]
    source: str = ""
    dropout_rate: float = DEFAULT_DROPOUT_RATE
    seed: Optional[int] = None

    def __post_init__(self):
        samples = tuple(self.samples)
        if len(samples) < 1:
            raise ContractError("A sample set needs at least one sample")
        check_dimensions(*(m.shape for m in samples), what="samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.samples[0].shape

    def stacked(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(N, H, W, 3)`` normals and ``(N, H, W)`` specular/roughness."""
        return (
            np.stack([m.normals.vectors for m in self.samples]),
            np.stack([m.spec() for m in self.samples]),
            np.stack([m.rough() for m in self.samples]),
        )


@dataclass(frozen=True, eq=False)
class UncertaintyReport:
    sigma_normals: np.ndarray
    sigma_spec: np.ndarray
    sigma_rough: np.ndarray
    sigma_brdf_map: np.ndarray
    sigma_brdf: float
    n: int
    eps: float
    dropout_rate: float
    render_set_hash: str

    def scalars(self) -> Dict[str, Any]:
        return {
            "sigma_brdf": self.sigma_brdf,
            "sigma_normals_mean": float(np.mean(self.sigma_normals)),
            "sigma_spec_mean": float(np.mean(self.sigma_spec)),
            "sigma_rough_mean": float(np.mean(self.sigma_rough)),
            "n": self.n,
            "eps": self.eps,
            "dropout_rate": self.dropout_rate,
            "render_set_hash": self.render_set_hash,
        }


def mc_sample(
    predictor: StochasticPredictor,
    input: ImageGrid,
    n: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    source: str = "",
) -> SampleSet:
    """Draw `n` MC-dropout predictions for `input`.

    Sample ``j`` uses the dropout seed ``derive_seed(seed, j)``, so the set is
    reproducible and independent of evaluation order.

    Raises
    ------
    TypeError
        If `predictor` has no stochastic mode.
    """
    if not isinstance(predictor, StochasticPredictor):
        raise TypeError(
            "MC sampling needs a predictor with a stochastic mode;"
            " got {}".format(type(predictor).__name__)
        )
    if n < 1:
        raise ContractError("At least one sample is needed; got {}".format(n))

    samples = [predictor.predict(input, seed=derive_seed(seed, j)) for j in range(n)]
    logger.debug("Drew %d MC samples for %s", n, source or "<input>")

    return SampleSet(
        tuple(samples), source=source, dropout_rate=predictor.dropout_rate, seed=seed
    )


def _require_variance(u: SampleSet):
    if len(u) < 2:
        raise InsufficientSamplesError(
            "Standard deviations need N >= 2 samples; got {}".format(len(u))
        )


def per_map_std(u: SampleSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel-wise population standard deviation of each map.

    The normals' deviation is the L2 norm of the per-component deviations.

    Returns
    -------
    sigma_normals, sigma_spec, sigma_rough
        ``(H, W)`` arrays.
    """
    _require_variance(u)
    normals, spec, rough = u.stacked()
    sigma_normals = np.sqrt(np.sum(population_std(normals, axis=0) ** 2, axis=-1))
    return sigma_normals, population_std(spec, axis=0), population_std(rough, axis=0)


def sigma_brdf(
    u: SampleSet,
    s: RenderSet,
    k: Optional[ImageGrid] = None,
    eps: float = DEFAULT_EPS,
    variance_inside: bool = False,
) -> Tuple[float, np.ndarray]:
    r"""Compute the render-space uncertainty of a sample set.

    For each pair in `s`, every sample is rendered against the grey albedo
    `k` and weighted by :math:`\cos\theta_l`; the pixel-wise standard deviation
    over samples, :math:`\sigma_{l,v}`, is attenuated by a cube root.  Per pixel

    .. math::

        \log \max\left( \frac{1}{|S|} \sqrt{ \sum_{(l,v) \in S}
            \sqrt[3]{\sigma_{l,v}} }, \epsilon \right)

    With `variance_inside` the ``1 / |S|`` factor moves inside the root.

    Returns
    -------
    The mean over pixels and the ``(H, W)`` log map.
    """
    _require_variance(u)
    if len(s) < 1:
        raise ContractError("The render set is empty")
    if len(s) < 8:
        warnings.warn("sigma_brdf with fewer than 8 light/view pairs is very noisy")
    if k is None:
        h, w = u.shape
        k = grey_albedo(w, h)
    check_dimensions(u.shape, k.shape, what="samples and albedo")

    normals, spec, rough = u.stacked()
    diffuse = k.data / np.pi

    acc = np.zeros(u.shape)
    for l, v in s.pairs():
        renders = (diffuse + ggx_specular(normals, spec, rough, l, v)[..., None]) * (
            cosine_weight(l)
        )
        sigma_lv = population_std(renders, axis=0).mean(axis=-1)
        acc += np.cbrt(sigma_lv)

    if variance_inside:
        inner = np.sqrt(acc / len(s))
    else:
        inner = np.sqrt(acc) / len(s)

    log_map = np.log(np.maximum(inner, eps))
    # fsum keeps the mean of a constant map exact
    return math.fsum(log_map.ravel()) / log_map.size, log_map


def build_report(
    u: SampleSet,
    s: RenderSet,
    k: Optional[ImageGrid] = None,
    eps: float = DEFAULT_EPS,
    variance_inside: bool = False,
) -> UncertaintyReport:
    """Aggregate the per-map deviations and the render-space uncertainty."""
    sigma_normals, sigma_spec, sigma_rough = per_map_std(u)
    scalar, log_map = sigma_brdf(u, s, k, eps, variance_inside)
    return UncertaintyReport(
        sigma_normals=sigma_normals,
        sigma_spec=sigma_spec,
        sigma_rough=sigma_rough,
        sigma_brdf_map=log_map,
        sigma_brdf=scalar,
        n=len(u),
        eps=eps,
        dropout_rate=u.dropout_rate,
        render_set_hash=s.digest(),
    )


def sample_mean(u: SampleSet) -> MapStack:
    """The per-pixel mean of a sample set, with renormalized normals."""
    normals, spec, rough = u.stacked()
    mean_n = normals.mean(axis=0)
    mean_n /= np.linalg.norm(mean_n, axis=-1, keepdims=True)
    return MapStack(
        NormalMap(mean_n),
        ImageGrid(spec.mean(axis=0), ppi=u.samples[0].ppi),
        ImageGrid(rough.mean(axis=0), ppi=u.samples[0].ppi),
    )


def render_deviation(
    u: SampleSet,
    gt: MapStack,
    s: RenderSet,
    k: Optional[ImageGrid] = None,
    region: Optional[Tuple[slice, slice]] = None,
) -> np.ndarray:
    """Mean absolute radiance deviation of each sample from the ground truth.

    Renders are cosine weighted and averaged over `s` and over the pixels of
    `region` (the whole image by default).

    Returns
    -------
    An array of length ``N``.
    """
    if gt.shape != u.shape:
        raise DimensionMismatchError("Ground truth and samples disagree in shape")
    if k is None:
        h, w = u.shape
        k = grey_albedo(w, h)
    region = region or (slice(None), slice(None))

    normals, spec, rough = u.stacked()
    dev = np.zeros(len(u))
    for l, v in s.pairs():
        cos = cosine_weight(l)
        ref = ggx_specular(gt.normals.vectors, gt.spec(), gt.rough(), l, v)
        est = ggx_specular(normals, spec, rough, l, v)
        # the diffuse term is shared and cancels
        diff = np.abs(est - ref[None])[(slice(None),) + tuple(region)]
        dev += cos * diff.reshape(len(u), -1).mean(axis=1)

    return dev / len(s)


def mc_scores(
    predictor: StochasticPredictor,
    inputs: Sequence[ImageGrid],
    s: RenderSet,
    n: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    eps: float = DEFAULT_EPS,
) -> Dict[str, np.ndarray]:
    """Scalar uncertainties for several inputs, all sampled with the same seed.

    Returns
    -------
    A dict of arrays keyed by ``sigma_brdf``, ``sigma_normals``, ``sigma_spec``
    and ``sigma_rough`` (spatial means of the per-map deviations).
    """
    keys = ("sigma_brdf", "sigma_normals", "sigma_spec", "sigma_rough")
    res: Dict[str, list] = {key: [] for key in keys}
    for image in inputs:
        u = mc_sample(predictor, image, n, seed)
        h, w = u.shape
        report = build_report(u, s, grey_albedo(w, h, ppi=image.ppi), eps)
        res["sigma_brdf"].append(report.sigma_brdf)
        res["sigma_normals"].append(float(np.mean(report.sigma_normals)))
        res["sigma_spec"].append(float(np.mean(report.sigma_spec)))
        res["sigma_rough"].append(float(np.mean(report.sigma_rough)))
    return {key: np.asarray(vals) for key, vals in res.items()}
