"""Reading and writing images, map stacks, render sets, thresholds and weights."""
import json
import logging
import os
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import png

from svbrdf_uq.errors import ContractError
from svbrdf_uq.material import (
    DEFAULT_PPI,
    QUANTIZATION_LEVELS,
    ImageGrid,
    MapStack,
    decode_normals,
    dequantize16,
    encode_normals,
    quantize16,
)
from svbrdf_uq.metrics import ArtifactThresholds
from svbrdf_uq.predictor import PredictorWeights, load_weights, save_weights
from svbrdf_uq.renderer import RenderSet, as_direction
from svbrdf_uq.uncertainty import UncertaintyReport

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

STACK_FILES: Dict[str, str] = {
    "normals": "normals.png",
    "specular": "specular.png",
    "roughness": "roughness.png",
}
META_FILE: str = "meta.json"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("{} is not JSON serializable".format(type(obj).__name__))


def write_json(path: PathLike, obj: Any):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def read_json(path: PathLike) -> Any:
    with open(path) as f:
        return json.load(f)


def write_png16(path: PathLike, img: Union[ImageGrid, np.ndarray]):
    """Write a ``[0, 1]`` image as a 16-bit grey or RGB PNG."""
    data = img.data if isinstance(img, ImageGrid) else np.asarray(img, dtype=float)
    if data.ndim == 2:
        data = data[..., None]
    h, w, c = data.shape
    if c not in (1, 3):
        raise ContractError("Only 1- and 3-channel images can be written")
    rows = quantize16(data).reshape(h, w * c)
    writer = png.Writer(width=w, height=h, greyscale=(c == 1), bitdepth=16)
    with open(path, "wb") as f:
        writer.write(f, rows.tolist())


def read_png16(path: PathLike, ppi: float = DEFAULT_PPI) -> ImageGrid:
    """Read a PNG as linear values in ``[0, 1]``; alpha is dropped.

    Images of other bit depths are rescaled to ``[0, 1]`` as well.
    """
    width, height, rows, info = png.Reader(filename=str(path)).asDirect()
    planes = info["planes"]
    data = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    data = data.reshape(height, width, planes)
    if info.get("alpha"):
        data = data[..., :-1]
    levels = 2 ** info["bitdepth"] - 1
    if levels == QUANTIZATION_LEVELS:
        values = dequantize16(data)
    else:
        values = data / float(levels)
    return ImageGrid(values, ppi=ppi)


def write_render_set(path: PathLike, s: RenderSet):
    """Write one ``lx ly lz vx vy vz`` line per pair."""
    with open(path, "w") as f:
        for l, v in s.pairs():
            f.write(" ".join("{!r}".format(float(x)) for x in np.concatenate([l, v])))
            f.write("\n")


def read_render_set(path: PathLike) -> RenderSet:
    """Read a render set file; blank lines and ``#`` comments are skipped.

    Raises
    ------
    ContractError
        On malformed lines or directions with ``z <= 0``.
    """
    lights, views = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values = [float(x) for x in line.split()]
            except ValueError:
                raise ContractError(
                    "{}:{}: expected 6 numbers".format(path, lineno)
                ) from None
            if len(values) != 6:
                raise ContractError(
                    "{}:{}: expected 6 numbers, got {}".format(
                        path, lineno, len(values)
                    )
                )
            try:
                lights.append(as_direction(values[:3]))
                views.append(as_direction(values[3:]))
            except ContractError as e:
                raise ContractError("{}:{}: {}".format(path, lineno, e)) from None
    if not lights:
        raise ContractError("{}: no light/view pairs".format(path))
    return RenderSet(np.stack(lights), np.stack(views))


def write_thresholds(path: PathLike, th: ArtifactThresholds):
    write_json(path, th.to_dict())


def read_thresholds(path: PathLike) -> ArtifactThresholds:
    return ArtifactThresholds.from_dict(read_json(path))


def write_weights(path: PathLike, w: PredictorWeights):
    with open(path, "wb") as f:
        f.write(save_weights(w))


def read_weights(path: PathLike) -> PredictorWeights:
    with open(path, "rb") as f:
        return load_weights(f.read())


def save_stack(
    directory: PathLike, stack: MapStack, meta: Optional[Dict[str, Any]] = None
):
    """Write a stack as three 16-bit PNGs plus a ``meta.json`` sidecar.

    The sidecar always records ``ppi``, ``width`` and ``height``; `meta` adds
    to it (e.g. ``name`` and ``family``).
    """
    os.makedirs(directory, exist_ok=True)
    write_png16(
        os.path.join(directory, STACK_FILES["normals"]),
        encode_normals(stack.normals, stack.ppi),
    )
    write_png16(os.path.join(directory, STACK_FILES["specular"]), stack.specular)
    write_png16(os.path.join(directory, STACK_FILES["roughness"]), stack.roughness)

    sidecar = dict(meta or {})
    sidecar.update(ppi=stack.ppi, width=stack.width, height=stack.height)
    write_json(os.path.join(directory, META_FILE), sidecar)


def load_stack(directory: PathLike) -> Tuple[MapStack, Dict[str, Any]]:
    """Read a stack written by `save_stack`, with its sidecar."""
    meta_path = os.path.join(directory, META_FILE)
    meta = read_json(meta_path) if os.path.exists(meta_path) else {}
    ppi = float(meta.get("ppi", DEFAULT_PPI))

    normals = decode_normals(
        read_png16(os.path.join(directory, STACK_FILES["normals"]), ppi)
    )
    spec = read_png16(os.path.join(directory, STACK_FILES["specular"]), ppi)
    rough = read_png16(os.path.join(directory, STACK_FILES["roughness"]), ppi)
    if spec.channels != 1 or rough.channels != 1:
        raise ContractError(
            "{}: specular and roughness maps must be single-channel".format(directory)
        )
    return MapStack(normals, spec, rough), meta


def _normalized(values: np.ndarray) -> Tuple[np.ndarray, float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi > lo:
        return (values - lo) / (hi - lo), lo, hi
    return np.zeros_like(values), lo, hi


def save_uncertainty_report(directory: PathLike, report: UncertaintyReport):
    """Write the uncertainty maps as 16-bit PNGs and the scalars as JSON.

    Each map is stretched affinely to ``[0, 1]``; its original minimum and
    maximum are stored under ``ranges`` in ``uncertainty.json``.
    """
    os.makedirs(directory, exist_ok=True)
    ranges = {}
    for name in ("sigma_normals", "sigma_spec", "sigma_rough", "sigma_brdf_map"):
        values, lo, hi = _normalized(getattr(report, name))
        write_png16(os.path.join(directory, name + ".png"), values)
        ranges[name] = [lo, hi]

    summary = report.scalars()
    summary["ranges"] = ranges
    write_json(os.path.join(directory, "uncertainty.json"), summary)
    logger.info("Wrote uncertainty report to %s", directory)
