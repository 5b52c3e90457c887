"""A small patch-MLP predictor of map stacks with MC-dropout support.

Every pixel is predicted from the ``(2 r + 1)**2`` neighborhood of the input's
luminance and its two slopes.  A shared ``tanh`` trunk feeds three linear
heads (normals, specular, roughness); dropout acts on the trunk's output.
"""
import dataclasses
import json
import logging
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from svbrdf_uq.errors import (
    ContractError,
    DimensionMismatchError,
    TrainingDivergedError,
    WeightsFormatError,
    WeightsVersionError,
)
from svbrdf_uq.material import (
    ImageGrid,
    MapStack,
    NormalMap,
    Z_FLOOR,
    check_dimensions,
)

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC: bytes = b"UMTK"
WEIGHTS_FORMAT_VERSION: int = 1

HEADS: Tuple[Tuple[str, int], ...] = (("normals", 2), ("specular", 1), ("roughness", 1))
FEATURE_PLANES: int = 3
# Brings input slopes to roughly the luminance range
_SLOPE_GAIN: float = 10.0
_PREDICT_CHUNK: int = 16384


@dataclass(frozen=True)
class PredictorConfig:
    patch_radius: int = 2
    hidden_widths: Tuple[int, ...] = (32, 32)
    dropout_rate: float = 0.2
    map_loss_weights: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    learning_rate: float = 3e-3
    epochs: int = 40
    steps_per_epoch: int = 50
    batch_pixels: int = 512
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(
            self, "hidden_widths", tuple(int(x) for x in self.hidden_widths)
        )
        object.__setattr__(
            self, "map_loss_weights", tuple(float(x) for x in self.map_loss_weights)
        )
        if self.patch_radius < 0:
            raise ContractError("patch_radius must be >= 0")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ContractError(
                "hidden_widths must be a nonempty list of positive widths"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must be in [0, 1)")
        if len(self.map_loss_weights) != 3 or min(self.map_loss_weights) <= 0:
            raise ContractError("map_loss_weights must be three positive values")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError("Unknown optimizer {!r}".format(self.optimizer))
        if min(self.epochs, self.steps_per_epoch, self.batch_pixels) < 1:
            raise ContractError("epochs, steps_per_epoch and batch_pixels must be >= 1")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")

    @property
    def n_features(self) -> int:
        k = 2 * self.patch_radius + 1
        return FEATURE_PLANES * k * k

    def replace(self, **changes) -> "PredictorConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        d["map_loss_weights"] = list(self.map_loss_weights)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "PredictorConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ContractError(
                "Unknown predictor settings: {}".format(sorted(unknown))
            )
        return cls(**d)


def param_shapes(cfg: PredictorConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Names and shapes of all parameters, in declaration order."""
    shapes = []
    fan_in = cfg.n_features
    for i, width in enumerate(cfg.hidden_widths):
        shapes.append(("trunk.{}.W".format(i), (fan_in, width)))
        shapes.append(("trunk.{}.b".format(i), (width,)))
        fan_in = width
    for name, width in HEADS:
        shapes.append(("{}.W".format(name), (fan_in, width)))
        shapes.append(("{}.b".format(name), (width,)))
    return shapes


def init_params(cfg: PredictorConfig, rng: np.random.Generator) -> List[np.ndarray]:
    """Glorot-uniform weights and zero biases."""
    params = []
    for name, shape in param_shapes(cfg):
        if name.endswith(".W"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params.append(rng.uniform(-limit, limit, size=shape))
        else:
            params.append(np.zeros(shape))
    return params


@dataclass(frozen=True, eq=False)
class PredictorWeights:
    """Trained parameters (``float32``) with the configuration that made them."""

    config: PredictorConfig
    params: Tuple[np.ndarray, ...]
    version: int = WEIGHTS_FORMAT_VERSION

    def __post_init__(self):
        params = []
        for p in self.params:
            p = np.array(p, dtype=np.float32)
            p.setflags(write=False)
            params.append(p)
        object.__setattr__(self, "params", tuple(params))

    def check(self):
        """Raise if the parameters do not match the configuration."""
        expected = param_shapes(self.config)
        if len(expected) != len(self.params):
            raise DimensionMismatchError(
                "Expected {} parameter arrays; got {}".format(
                    len(expected), len(self.params)
                )
            )
        for (name, shape), p in zip(expected, self.params):
            if p.shape != shape:
                raise DimensionMismatchError(
                    "Parameter {} has shape {}; the config implies {}".format(
                        name, p.shape, shape
                    )
                )
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise ContractError("Predictor weights contain non-finite values")

    def with_dropout(self, dropout_rate: float) -> "PredictorWeights":
        return PredictorWeights(
            self.config.replace(dropout_rate=dropout_rate), self.params, self.version
        )


def feature_planes(image: ImageGrid, radius: int) -> np.ndarray:
    """Edge-padded input planes (centered luminance, x slope, y slope).

    Returns
    -------
    An array of shape ``(3, H + 2 r, W + 2 r)``.
    """
    lum = image.luminance()
    d_row, d_col = np.gradient(lum)
    # x points along columns, y up (against rows)
    planes = np.stack([lum - 0.5, _SLOPE_GAIN * d_col, -_SLOPE_GAIN * d_row])
    return np.pad(planes, ((0, 0), (radius, radius), (radius, radius)), mode="edge")


def gather_features(
    planes: np.ndarray, rows: np.ndarray, cols: np.ndarray, radius: int
) -> np.ndarray:
    """Flattened neighborhoods of the given pixels, shape ``(B, n_features)``."""
    k = 2 * radius + 1
    windows = sliding_window_view(planes, (k, k), axis=(1, 2))
    patches = windows[:, rows, cols]
    return np.ascontiguousarray(patches.transpose(1, 0, 2, 3)).reshape(len(rows), -1)


def _forward(
    params: Sequence[np.ndarray],
    x: np.ndarray,
    cfg: PredictorConfig,
    mask: Optional[np.ndarray] = None,
):
    n_trunk = len(cfg.hidden_widths)
    acts = [x]
    a = x
    for i in range(n_trunk):
        a = np.tanh(a @ params[2 * i] + params[2 * i + 1])
        acts.append(a)

    keep = mask if mask is not None else 1.0 - cfg.dropout_rate
    h = a * keep

    w_n, b_n, w_s, b_s, w_r, b_r = params[2 * n_trunk :]

    xy = np.tanh(h @ w_n + b_n)
    z2 = 1.0 - np.sum(xy * xy, axis=1)
    zc = np.sqrt(np.maximum(z2, Z_FLOOR ** 2))
    vec = np.column_stack([xy, zc])
    norm = np.linalg.norm(vec, axis=1, keepdims=True)
    normals = vec / norm

    spec = expit(h @ w_s + b_s)[:, 0]
    rough = expit(h @ w_r + b_r)[:, 0]

    cache = {
        "acts": acts,
        "keep": keep,
        "h": h,
        "xy": xy,
        "z2": z2,
        "zc": zc,
        "norm": norm,
    }
    return (normals, spec, rough), cache


def pixel_loss(outputs, targets, weights: Sequence[float]) -> float:
    """Weighted sum of the per-map mean absolute errors of array outputs."""
    (normals, spec, rough), (t_normals, t_spec, t_rough) = outputs, targets
    lam_n, lam_s, lam_r = weights
    return float(
        lam_n * np.mean(np.abs(normals - t_normals))
        + lam_s * np.mean(np.abs(spec - t_spec))
        + lam_r * np.mean(np.abs(rough - t_rough))
    )


def loss_pixel(pred: MapStack, gt: MapStack, weights: Sequence[float] = (1, 1, 1)):
    r"""Per-map weighted L1 loss between two map stacks.

    .. math::

        \lambda_n \overline{|\Delta n|} + \lambda_s \overline{|\Delta s|}
        + \lambda_r \overline{|\Delta r|}

    where the normals term averages over pixels and vector components.
    """
    check_dimensions(pred.shape, gt.shape, what="predicted and reference stacks")
    return pixel_loss(
        (pred.normals.vectors, pred.spec(), pred.rough()),
        (gt.normals.vectors, gt.spec(), gt.rough()),
        weights,
    )


def loss_and_grad(
    params: Sequence[np.ndarray],
    x: np.ndarray,
    targets: Tuple[np.ndarray, np.ndarray, np.ndarray],
    cfg: PredictorConfig,
    mask: Optional[np.ndarray] = None,
) -> Tuple[float, List[np.ndarray]]:
    """Evaluate the pixel loss on a batch and its gradient by backpropagation.

    Parameters
    ----------
    params
        Parameter arrays in `param_shapes` order.
    x
        Batch features, shape ``(B, n_features)``.
    targets
        ``(B, 3)`` normals and ``(B,)`` specular and roughness targets.
    mask
        Dropout keep-mask for the trunk output, shape ``(B, width)``; without
        one the deterministic scaling is used.
    """
    outputs, cache = _forward(params, x, cfg, mask)
    normals, spec, rough = outputs
    t_normals, t_spec, t_rough = targets
    lam_n, lam_s, lam_r = cfg.map_loss_weights
    loss = pixel_loss(outputs, targets, cfg.map_loss_weights)

    n_batch = x.shape[0]
    d_normals = lam_n * np.sign(normals - t_normals) / normals.size
    d_spec = lam_s * np.sign(spec - t_spec) / n_batch
    d_rough = lam_r * np.sign(rough - t_rough) / n_batch

    # through the renormalization n = v / |v|
    proj = np.sum(normals * d_normals, axis=1, keepdims=True)
    d_vec = (d_normals - normals * proj) / cache["norm"]

    xy, zc = cache["xy"], cache["zc"]
    active = cache["z2"] > Z_FLOOR ** 2
    d_xy = d_vec[:, :2] - (d_vec[:, 2] * active / zc)[:, None] * xy
    d_pre_n = d_xy * (1.0 - xy * xy)
    d_pre_s = (d_spec * spec * (1.0 - spec))[:, None]
    d_pre_r = (d_rough * rough * (1.0 - rough))[:, None]

    n_trunk = len(cfg.hidden_widths)
    w_n, _, w_s, _, w_r, _ = params[2 * n_trunk :]
    h = cache["h"]

    head_grads = [
        h.T @ d_pre_n,
        d_pre_n.sum(axis=0),
        h.T @ d_pre_s,
        d_pre_s.sum(axis=0),
        h.T @ d_pre_r,
        d_pre_r.sum(axis=0),
    ]

    d_a = (d_pre_n @ w_n.T + d_pre_s @ w_s.T + d_pre_r @ w_r.T) * cache["keep"]

    acts = cache["acts"]
    trunk_grads: List[np.ndarray] = [np.empty(0)] * (2 * n_trunk)
    for i in range(n_trunk - 1, -1, -1):
        a = acts[i + 1]
        dz = d_a * (1.0 - a * a)
        trunk_grads[2 * i] = acts[i].T @ dz
        trunk_grads[2 * i + 1] = dz.sum(axis=0)
        d_a = dz @ params[2 * i].T

    return loss, trunk_grads + head_grads


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Momentum:
    def __init__(self, params, lr, momentum):
        self.lr, self.momentum = lr, momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, vel in zip(params, grads, self.velocity):
            vel *= self.momentum
            vel -= self.lr * g
            p += vel


def _material_targets(gt: MapStack):
    return (
        gt.normals.vectors.reshape(-1, 3),
        gt.spec().ravel(),
        gt.rough().ravel(),
    )


def train(
    dataset: Sequence[Tuple[ImageGrid, MapStack]], cfg: PredictorConfig
) -> Tuple[PredictorWeights, np.ndarray]:
    """Fit the predictor to ``(input, ground truth)`` pairs.

    Each step samples up to eight materials and an equal share of
    `cfg.batch_pixels` random pixels from each, draws fresh dropout masks and
    takes one optimizer step on the weighted L1 loss.  Everything random comes
    from `cfg.seed`, so runs are bitwise reproducible.

    Returns
    -------
    weights
        The trained `PredictorWeights`.
    loss_curve
        The mean training loss of each epoch.

    Raises
    ------
    TrainingDivergedError
        If the loss becomes non-finite.
    """
    if len(dataset) == 0:
        raise ContractError("Cannot train on an empty dataset")

    r = cfg.patch_radius
    planes, targets, shapes = [], [], []
    for image, gt in dataset:
        check_dimensions(image.shape, gt.shape, what="input and ground truth")
        planes.append(feature_planes(image, r))
        targets.append(_material_targets(gt))
        shapes.append(gt.shape)

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    if cfg.optimizer == "adam":
        opt: Any = _Adam(params, cfg.learning_rate)
    else:
        opt = _Momentum(params, cfg.learning_rate, cfg.momentum)

    n_mat = len(dataset)
    per_step = min(n_mat, 8)
    per_mat = max(1, cfg.batch_pixels // per_step)
    width = cfg.hidden_widths[-1]

    curve = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for step in range(cfg.steps_per_epoch):
            chosen = np.sort(rng.choice(n_mat, size=per_step, replace=False))
            feats, t_n, t_s, t_r = [], [], [], []
            for m in chosen:
                h, w = shapes[m]
                rows = rng.integers(h, size=per_mat)
                cols = rng.integers(w, size=per_mat)
                feats.append(gather_features(planes[m], rows, cols, r))
                flat = rows * w + cols
                tn, ts, tr = targets[m]
                t_n.append(tn[flat])
                t_s.append(ts[flat])
                t_r.append(tr[flat])

            x = np.concatenate(feats)
            mask = (rng.random((x.shape[0], width)) >= cfg.dropout_rate).astype(float)
            loss, grads = loss_and_grad(
                params,
                x,
                (np.concatenate(t_n), np.concatenate(t_s), np.concatenate(t_r)),
                cfg,
                mask,
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    "Training loss became {} at epoch {}, step {}"
                    " (learning rate {})".format(loss, epoch, step, cfg.learning_rate)
                )
            opt.step(params, grads)
            epoch_losses.append(loss)

        curve.append(float(np.mean(epoch_losses)))
        logger.debug("epoch %d: loss %.6f", epoch, curve[-1])

    logger.info(
        "Trained on %d materials for %d epochs; final loss %.5f",
        n_mat,
        cfg.epochs,
        curve[-1],
    )
    return PredictorWeights(cfg, tuple(params)), np.asarray(curve)


def predict(
    w: PredictorWeights, input: ImageGrid, seed: Optional[int] = None
) -> MapStack:
    """Predict a map stack for `input`.

    Without a `seed` this is the deterministic pass, which scales the trunk
    output by ``1 - dropout_rate``.  With a `seed`, one stochastic pass is
    drawn with Bernoulli keep-masks per pixel and unit.
    """
    w.check()
    cfg = w.config
    params = [p.astype(float) for p in w.params]
    h, width = input.shape
    n_pix = h * width
    r = cfg.patch_radius

    planes = feature_planes(input, r)
    rows, cols = np.divmod(np.arange(n_pix), width)

    mask = None
    if seed is not None:
        rng = np.random.default_rng(seed)
        units = cfg.hidden_widths[-1]
        mask = (rng.random((n_pix, units)) >= cfg.dropout_rate).astype(float)

    normals = np.empty((n_pix, 3))
    spec = np.empty(n_pix)
    rough = np.empty(n_pix)
    for start in range(0, n_pix, _PREDICT_CHUNK):
        sl = slice(start, min(start + _PREDICT_CHUNK, n_pix))
        x = gather_features(planes, rows[sl], cols[sl], r)
        (n_out, s_out, r_out), _ = _forward(
            params, x, cfg, None if mask is None else mask[sl]
        )
        normals[sl], spec[sl], rough[sl] = n_out, s_out, r_out

    return MapStack(
        NormalMap(normals.reshape(h, width, 3)),
        ImageGrid(spec.reshape(h, width), ppi=input.ppi),
        ImageGrid(rough.reshape(h, width), ppi=input.ppi),
    )


class Predictor:
    """A `PredictorWeights` bundle usable as a stochastic predictor.

    Parameters
    ----------
    weights
        The trained weights.
    dropout_rate
        Replaces the trained dropout rate for both passes, if given.
    """

    def __init__(self, weights: PredictorWeights, dropout_rate: Optional[float] = None):
        if dropout_rate is not None:
            weights = weights.with_dropout(dropout_rate)
        weights.check()
        self.weights = weights

    @property
    def dropout_rate(self) -> float:
        return self.weights.config.dropout_rate

    def predict(self, image: ImageGrid, seed: Optional[int] = None) -> MapStack:
        return predict(self.weights, image, seed)


_HEADER = struct.Struct("<4sII")


def save_weights(w: PredictorWeights) -> bytes:
    """Serialize weights: magic, version, config JSON, then ``<f4`` tensors."""
    w.check()
    blob = json.dumps(w.config.to_dict(), sort_keys=True).encode("utf-8")
    chunks = [_HEADER.pack(WEIGHTS_MAGIC, w.version, len(blob)), blob]
    chunks.extend(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in w.params)
    return b"".join(chunks)


def load_weights(data: bytes) -> PredictorWeights:
    """Parse bytes written by `save_weights`.

    Raises
    ------
    WeightsVersionError
        If the payload has another format version.
    WeightsFormatError
        If the payload is truncated or otherwise corrupt.
    """
    if len(data) < _HEADER.size:
        raise WeightsFormatError(
            "Weights payload is truncated ({} bytes)".format(len(data))
        )
    magic, version, blob_len = _HEADER.unpack_from(data, 0)
    if magic != WEIGHTS_MAGIC:
        raise WeightsFormatError("Not a weights payload (magic {!r})".format(magic))
    if version != WEIGHTS_FORMAT_VERSION:
        raise WeightsVersionError(
            "Weights format version {} is not supported (expected {})".format(
                version, WEIGHTS_FORMAT_VERSION
            )
        )

    offset = _HEADER.size
    if len(data) < offset + blob_len:
        raise WeightsFormatError("Weights payload is truncated inside the config")
    try:
        cfg = PredictorConfig.from_dict(
            json.loads(data[offset : offset + blob_len].decode("utf-8"))
        )
    except (ValueError, TypeError) as e:
        raise WeightsFormatError(
            "Corrupt config in weights payload: {}".format(e)
        ) from e
    offset += blob_len

    params = []
    for name, shape in param_shapes(cfg):
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(data):
            raise WeightsFormatError("Weights payload is truncated at {}".format(name))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        params.append(arr.astype(np.float32).reshape(shape))
        offset = end

    if offset != len(data):
        raise WeightsFormatError(
            "Weights payload has {} unexpected trailing bytes".format(
                len(data) - offset
            )
        )

    return PredictorWeights(cfg, tuple(params), version)
