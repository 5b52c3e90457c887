import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.ndimage import correlate1d
from scipy.stats import entropy

from svbrdf_uq.errors import (
    ContractError,
    ImageTooSmallError,
    UndefinedCorrelationError,
)
from svbrdf_uq.material import ImageGrid, MapStack, NormalMap, check_dimensions
from svbrdf_uq.renderer import RenderSet, cosine_weight, shade
from svbrdf_uq.utils import luminance, round_odd

logger = logging.getLogger(__name__)

DEFAULT_MI_BINS: int = 64
DEFAULT_BOX_SIZE_FACTOR: float = 0.1275
# Denominators below this make e2 and e3 infinite
SMALL: float = 1e-9

ARTIFACT_MAPS: Tuple[str, ...] = ("specular", "roughness")

ArrayLike = Union[ImageGrid, np.ndarray]


def _plane(x: ArrayLike) -> np.ndarray:
    """Return a ``(H, W)`` float plane for an image or array."""
    if isinstance(x, ImageGrid):
        return x.luminance()
    return luminance(np.asarray(x, dtype=float))


def _values(x: ArrayLike) -> np.ndarray:
    if isinstance(x, ImageGrid):
        return x.data
    return np.asarray(x, dtype=float)


def map_l1(a: ArrayLike, b: ArrayLike) -> float:
    """Mean absolute error between two maps."""
    a, b = _values(a), _values(b)
    check_dimensions(a.shape, b.shape, what="maps")
    return float(np.mean(np.abs(a - b)))


def angular_error(a: NormalMap, b: NormalMap) -> float:
    """Mean angle, in degrees, between corresponding normals."""
    check_dimensions(a.shape, b.shape, what="normal maps")
    cos = np.clip(np.sum(a.vectors * b.vectors, axis=-1), -1.0, 1.0)
    return float(np.rad2deg(np.mean(np.arccos(cos))))


def pearson(a: ArrayLike, b: ArrayLike) -> float:
    """Pearson correlation of the flattened pixels of two maps.

    Raises
    ------
    UndefinedCorrelationError
        If either input has zero variance.
    """
    a, b = _values(a), _values(b)
    check_dimensions(a.shape, b.shape, what="maps")
    a, b = a.ravel(), b.ravel()
    if a.size < 2:
        raise ContractError("Pearson correlation needs at least 2 pixels")

    da = a - a.mean()
    db = b - b.mean()
    saa, sbb = np.sum(da * da), np.sum(db * db)
    if saa <= 0.0 or sbb <= 0.0:
        raise UndefinedCorrelationError(
            "Correlation is undefined for a constant input"
        )
    return float(np.clip(np.sum(da * db) / np.sqrt(saa * sbb), -1.0, 1.0))


def brdf_distance(
    gt: MapStack, est: MapStack, s: RenderSet, k: ImageGrid
) -> Tuple[float, np.ndarray]:
    r"""Compute the render-space perceptual distance between two map stacks.

    Per pixel,

    .. math::

        d = \sqrt{ \frac{1}{|S|} \sum_{(l, v) \in S}
            \sqrt[3]{ \cos^2\theta_l \left( f_{l,v}(M_{gt}, K)
            - f_{l,v}(\hat{M}, K) \right)^2 } }

    Squared radiance differences are averaged over channels before the cube
    root when `k` has several channels.

    Returns
    -------
    The mean of `d` over pixels and the ``(H, W)`` map of `d`.
    """
    check_dimensions(gt.shape, est.shape, k.shape, what="stacks and albedo")
    if len(s) < 1:
        raise ContractError("The render set is empty")

    acc = np.zeros(gt.shape)
    for l, v in s.pairs():
        diff = shade(gt, k, l, v).values - shade(est, k, l, v).values
        cos = cosine_weight(l)
        acc += np.cbrt(cos * cos * np.mean(diff * diff, axis=-1))

    d_map = np.sqrt(acc / len(s))
    return float(d_map.mean()), d_map


def box_filter(plane: np.ndarray, box: int) -> np.ndarray:
    """Apply a `box` × `box` mean filter with replicate padding."""
    weights = np.full(box, 1.0 / box)
    res = correlate1d(plane, weights, axis=0, mode="nearest")
    return correlate1d(res, weights, axis=1, mode="nearest")


def homogeneity(img: ArrayLike, box: int) -> float:
    """Measure how patchy the low frequencies of an image are.

    The image is box-filtered, then compared with itself shifted by `box`
    pixels up, down, left and right; the mean absolute difference over each
    overlap region is averaged over the four shifts.  Three-channel images are
    reduced to luminance first.

    Raises
    ------
    ImageTooSmallError
        If the image is not larger than ``3 * box`` in each dimension.
    """
    if box < 3 or box % 2 == 0:
        raise ContractError("The box size must be odd and >= 3; got {}".format(box))

    plane = _plane(img)
    h, w = plane.shape
    if h <= 3 * box or w <= 3 * box:
        raise ImageTooSmallError(
            "A {}x{} image is too small for a box of {} pixels".format(h, w, box)
        )

    f = box_filter(plane, box)

    diffs = []
    for dr, dc in ((-box, 0), (box, 0), (0, -box), (0, box)):
        a = f[max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)]
        b = f[max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)]
        diffs.append(np.mean(np.abs(a - b)))

    return float(np.mean(diffs))


def _histogram_range(x: np.ndarray) -> np.ndarray:
    return np.clip(x.ravel(), 0.0, 1.0)


def marginal_entropy(a: ArrayLike, bins: int = DEFAULT_MI_BINS) -> float:
    """Entropy, in nats, of the `bins`-bin histogram of `a` over ``[0, 1]``."""
    counts, _ = np.histogram(_histogram_range(_plane(a)), bins=bins, range=(0.0, 1.0))
    return float(entropy(counts))


def mutual_information(
    a: ArrayLike, b: ArrayLike, bins: int = DEFAULT_MI_BINS
) -> float:
    """Histogram estimate, in nats, of the mutual information of two images.

    Both marginals use `bins` equal-width bins over ``[0, 1]``; values outside
    that range are clipped into it.
    """
    if bins < 2:
        raise ContractError("At least 2 bins are needed; got {}".format(bins))

    a, b = _plane(a), _plane(b)
    check_dimensions(a.shape, b.shape, what="images")

    joint, _, _ = np.histogram2d(
        _histogram_range(a),
        _histogram_range(b),
        bins=bins,
        range=[[0.0, 1.0], [0.0, 1.0]],
    )
    mi = (
        entropy(joint.sum(axis=1))
        + entropy(joint.sum(axis=0))
        - entropy(joint.ravel())
    )
    return float(max(mi, 0.0))


@dataclass(frozen=True)
class MapThresholds:
    t1: float
    t2: float
    t3: float

    def __post_init__(self):
        if not all(t > 0 for t in self.as_tuple()):
            raise ContractError("Artifact thresholds must be positive: {}".format(self))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.t1, self.t2, self.t3)


@dataclass(frozen=True)
class ArtifactThresholds:
    """Per-map artifact thresholds and the box-filter size factor.

    The defaults were tuned at 1000 PPI on manually labeled textures.
    """

    specular: MapThresholds = field(
        default_factory=lambda: MapThresholds(0.01, 1.41, 1.33)
    )
    roughness: MapThresholds = field(
        default_factory=lambda: MapThresholds(0.01, 0.99, 3.12)
    )
    box_size_factor: float = DEFAULT_BOX_SIZE_FACTOR

    def __post_init__(self):
        if not self.box_size_factor > 0:
            raise ContractError("box_size_factor must be positive")

    def box_size(self, ppi: float) -> int:
        """The odd box-filter size, in pixels, at a given resolution."""
        return round_odd(self.box_size_factor * ppi)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "specular": dict(zip(("t1", "t2", "t3"), self.specular.as_tuple())),
            "roughness": dict(zip(("t1", "t2", "t3"), self.roughness.as_tuple())),
            "box_size_factor": self.box_size_factor,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ArtifactThresholds":
        try:
            return cls(
                specular=MapThresholds(
                    **{k: float(v) for k, v in d["specular"].items()}
                ),
                roughness=MapThresholds(
                    **{k: float(v) for k, v in d["roughness"].items()}
                ),
                box_size_factor=float(d["box_size_factor"]),
            )
        except (KeyError, TypeError) as e:
            raise ContractError("Malformed thresholds: {}".format(e)) from e


@dataclass(frozen=True)
class MapArtifactReport:
    e1: float
    e2: float
    e3: float
    exceeded: Tuple[bool, bool, bool]

    @property
    def verdict(self) -> bool:
        return sum(self.exceeded) >= 2


@dataclass(frozen=True)
class ArtifactReport:
    specular: MapArtifactReport
    roughness: MapArtifactReport
    box_size: int

    @property
    def verdict(self) -> bool:
        return self.specular.verdict or self.roughness.verdict

    def to_dict(self) -> Dict[str, Any]:
        res: Dict[str, Any] = {"box_size": self.box_size, "verdict": self.verdict}
        for name in ARTIFACT_MAPS:
            rep = getattr(self, name)
            res[name] = {
                "e1": rep.e1,
                "e2": rep.e2,
                "e3": rep.e3,
                "exceeded": list(rep.exceeded),
                "verdict": rep.verdict,
            }
        return res


def artifact_scores(
    input: ImageGrid, stack: MapStack, box: int, bins: int = DEFAULT_MI_BINS
) -> Dict[str, Tuple[float, float, float]]:
    """Compute ``(e1, e2, e3)`` for the specular and roughness maps.

    ``e1 = H(m)``, ``e2 = H(m) / H(input)`` and ``e3 = 1 / MI(input, m)``;
    ``e2`` and ``e3`` are infinite when their denominators are below `SMALL`.
    """
    check_dimensions(input.shape, stack.shape, what="input and stack")

    h_input = homogeneity(input, box)
    res = {}
    for name in ARTIFACT_MAPS:
        m = getattr(stack, name)
        e1 = homogeneity(m, box)
        e2 = e1 / h_input if h_input >= SMALL else np.inf
        mi = mutual_information(input, m, bins)
        e3 = 1.0 / mi if mi >= SMALL else np.inf
        res[name] = (e1, e2, e3)
    return res


def detect_artifacts(
    input: ImageGrid,
    stack: MapStack,
    th: Optional[ArtifactThresholds] = None,
    bins: int = DEFAULT_MI_BINS,
) -> ArtifactReport:
    """Flag patchy artifacts in the specular and roughness maps of a stack.

    A map is flagged when at least two of its three scores exceed their
    thresholds; the stack is flagged when any map is.  The box size follows the
    input's resolution.
    """
    th = th or ArtifactThresholds()
    box = th.box_size(input.ppi)
    scores = artifact_scores(input, stack, box, bins)

    reports = {}
    for name in ARTIFACT_MAPS:
        e = scores[name]
        t = getattr(th, name).as_tuple()
        exceeded = tuple(bool(e_i > t_i) for e_i, t_i in zip(e, t))
        reports[name] = MapArtifactReport(e[0], e[1], e[2], exceeded)  # type: ignore

    return ArtifactReport(box_size=box, **reports)


def checkerboard(shape: Tuple[int, int], cell: int) -> np.ndarray:
    """A 0/1 checkerboard with square cells of `cell` pixels."""
    rows = np.arange(shape[0])[:, None] // cell
    cols = np.arange(shape[1])[None, :] // cell
    return ((rows + cols) % 2).astype(float)


def inject_checkerboard(
    stack: MapStack, cell: int, amplitude: float = 0.3, target: str = "specular"
) -> MapStack:
    """Add a zero-mean checkerboard of peak-to-peak `amplitude` to one map."""
    if target not in ARTIFACT_MAPS:
        raise ContractError("Can only corrupt one of {}".format(ARTIFACT_MAPS))
    pattern = amplitude * (checkerboard(stack.shape, cell) - 0.5)
    spec, rough = stack.spec(), stack.rough()
    if target == "specular":
        spec = np.clip(spec + pattern, 0.0, 1.0)
    else:
        rough = np.clip(rough + pattern, 0.0, 1.0)
    return MapStack.from_arrays(stack.normals.vectors, spec, rough, ppi=stack.ppi)


def calibrate_thresholds(
    clean: Sequence[Tuple[ImageGrid, MapStack]],
    corrupted_specular: Sequence[Tuple[ImageGrid, MapStack]],
    corrupted_roughness: Sequence[Tuple[ImageGrid, MapStack]],
    box_size_factor: float = DEFAULT_BOX_SIZE_FACTOR,
    n_candidates: int = 9,
    bins: int = DEFAULT_MI_BINS,
) -> ArtifactThresholds:
    """Fit per-map thresholds on labeled clean and corrupted stacks.

    For each map, candidate thresholds are midpoints between quantiles of the
    observed scores; the triple that minimizes false positives on `clean` plus
    misses on the corresponding corrupted set is kept (the first in grid order
    on ties).
    """
    th = ArtifactThresholds(box_size_factor=box_size_factor)

    def _scores(pairs, name):
        out = []
        for inp, st in pairs:
            out.append(artifact_scores(inp, st, th.box_size(inp.ppi), bins)[name])
        return np.nan_to_num(np.asarray(out, dtype=float), posinf=1e12)

    fitted = {}
    for name, corrupted in (
        ("specular", corrupted_specular),
        ("roughness", corrupted_roughness),
    ):
        neg, pos = _scores(clean, name), _scores(corrupted, name)
        both = np.concatenate([neg, pos])
        qs = np.linspace(0.0, 1.0, n_candidates + 1)
        candidates = []
        for j in range(3):
            edges = np.quantile(both[:, j], qs)
            candidates.append(np.maximum(0.5 * (edges[:-1] + edges[1:]), SMALL))

        best, best_err = None, np.inf
        for t in itertools.product(*candidates):
            t = np.asarray(t)
            neg_flag = np.sum(neg > t, axis=1) >= 2
            pos_flag = np.sum(pos > t, axis=1) >= 2
            err = int(np.sum(neg_flag)) + int(np.sum(~pos_flag))
            if err < best_err:
                best, best_err = t, err

        logger.info("Calibrated %s thresholds %s (%d errors)", name, best, best_err)
        fitted[name] = MapThresholds(*(float(x) for x in best))

    return ArtifactThresholds(box_size_factor=box_size_factor, **fitted)


REPORT_COLUMNS: Tuple[str, ...] = (
    "material",
    "l1_spec",
    "l1_rough",
    "angular_deg",
    "pearson_spec",
    "pearson_rough",
    "l_brdf",
    "artifact",
)


def _pearson_or_nan(a, b, what: str) -> float:
    try:
        return pearson(a, b)
    except UndefinedCorrelationError:
        logger.warning("Pearson correlation of %s is undefined; reporting NaN", what)
        return float("nan")


def evaluate_stack(
    gt: MapStack,
    est: MapStack,
    s: RenderSet,
    k: ImageGrid,
    scan: Optional[ImageGrid] = None,
    thresholds: Optional[ArtifactThresholds] = None,
    material: str = "",
) -> Dict[str, Any]:
    """Compute the metric report row for one estimated stack.

    ``artifact`` is ``None`` when no `scan` is given.
    """
    l_brdf, _ = brdf_distance(gt, est, s, k)
    artifact = None
    if scan is not None:
        artifact = detect_artifacts(scan, est, thresholds).verdict
    return {
        "material": material,
        "l1_spec": map_l1(gt.specular, est.specular),
        "l1_rough": map_l1(gt.roughness, est.roughness),
        "angular_deg": angular_error(gt.normals, est.normals),
        "pearson_spec": _pearson_or_nan(gt.specular, est.specular, material + "/spec"),
        "pearson_rough": _pearson_or_nan(
            gt.roughness, est.roughness, material + "/rough"
        ),
        "l_brdf": l_brdf,
        "artifact": artifact,
    }


def evaluate_many(rows: Iterable[Dict[str, Any]]) -> pd.DataFrame:
    """Collect report rows into a frame with the report columns first."""
    frame = pd.DataFrame(list(rows))
    if frame.empty:
        return pd.DataFrame(columns=list(REPORT_COLUMNS))
    first = [c for c in REPORT_COLUMNS if c in frame.columns]
    rest = [c for c in frame.columns if c not in first]
    return frame[first + rest]


def correlation_matrix(
    frame: pd.DataFrame, columns: Optional[List[str]] = None
) -> pd.DataFrame:
    """Pearson correlation matrix among error and uncertainty columns."""
    if columns is None:
        columns = [
            c
            for c in (
                "l1_spec",
                "l1_rough",
                "angular_deg",
                "sigma_normals",
                "sigma_spec",
                "sigma_rough",
                "sigma_brdf",
                "l_brdf",
            )
            if c in frame.columns
        ]
    return frame[columns].astype(float).corr(method="pearson")


def family_summary(
    frame: pd.DataFrame, columns: Sequence[str] = ("sigma_brdf", "l_brdf")
) -> pd.DataFrame:
    """Per-family mean and median of uncertainty and error columns."""
    cols = [c for c in columns if c in frame.columns]
    return frame.groupby("family")[cols].agg(["mean", "median", "count"])
