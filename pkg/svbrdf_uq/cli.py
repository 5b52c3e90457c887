"""Command-line entry points.

Every command resolves its options as: explicit flag, then the ``options`` of
a ``--config`` file written by an earlier run, then the built-in default.  The
resolved options are echoed to ``run_config.json`` in the output directory,
so ``--config <that file>`` replays a run exactly.
"""
import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from svbrdf_uq import io
from svbrdf_uq.active_learning import (
    DEFAULT_SCHEDULE,
    compare_strategies,
    run_loop,
    summarize_runs,
    to_frame,
)
from svbrdf_uq.errors import ContractError, ImageTooSmallError
from svbrdf_uq.material import DEFAULT_PPI, ImageGrid
from svbrdf_uq.metrics import (
    ArtifactThresholds,
    calibrate_thresholds,
    correlation_matrix,
    detect_artifacts,
    evaluate_many,
    evaluate_stack,
    family_summary,
    inject_checkerboard,
)
from svbrdf_uq.predictor import Predictor, PredictorConfig, predict, train
from svbrdf_uq.renderer import (
    DEFAULT_RENDER_SET_SEED,
    DEFAULT_RENDER_SET_SIZE,
    RenderSet,
    as_direction,
    cosine_weight,
    sample_render_set,
    shade,
)
from svbrdf_uq.synthdata import (
    DEFAULT_SIZE,
    MANIFEST_FILE,
    Dataset,
    MaterialFamily,
    load_dataset,
    make_dataset,
    save_dataset,
)
from svbrdf_uq.uncertainty import (
    DEFAULT_EPS,
    DEFAULT_MC_SAMPLES,
    build_report,
    grey_albedo,
    mc_sample,
    render_deviation,
    sample_mean,
)

logger = logging.getLogger(__name__)

RUN_CONFIG_FILE: str = "run_config.json"
LOG_FORMAT: str = "%(asctime)s %(name)s %(levelname)s %(message)s"
# Recipe for the desk-scale artifact thresholds; ``calibrate --config`` on it
# writes ``thresholds.json`` next to it
DESK_CALIBRATION: str = os.path.join(
    os.path.dirname(__file__), "data", RUN_CONFIG_FILE
)

_TRAINING_DEFAULTS: Dict[str, Any] = {
    k: v
    for k, v in PredictorConfig().to_dict().items()
    if k not in ("seed", "map_loss_weights", "momentum")
}
_TRAINING_DEFAULTS["loss_weights"] = [1.0, 1.0, 1.0]

_DATASET_DEFAULTS: Dict[str, Any] = {
    "families": [f.value for f in MaterialFamily],
    "per_family": 20,
    "size": DEFAULT_SIZE,
    "ppi": DEFAULT_PPI,
}

_RENDER_SET_DEFAULTS: Dict[str, Any] = {
    "render_set": None,
    "render_set_size": DEFAULT_RENDER_SET_SIZE,
    "render_seed": DEFAULT_RENDER_SET_SEED,
}


@dataclass(frozen=True)
class RunConfig:
    """A command and its fully resolved options."""

    command: str
    options: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.options[key]

    def to_dict(self) -> Dict[str, Any]:
        return {"command": self.command, "options": dict(sorted(self.options.items()))}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunConfig":
        try:
            return cls(str(d["command"]), dict(d["options"]))
        except (KeyError, TypeError) as e:
            raise ContractError("Malformed run config: {}".format(e)) from e


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma-separated numbers: {!r}".format(text)
        )


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma-separated integers: {!r}".format(text)
        )


def _names(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _seeds(text: str) -> List[int]:
    """``"5"`` means seeds 0 to 4; a comma-separated list is taken as is."""
    values = _ints(text)
    if "," not in text and len(values) == 1:
        return list(range(values[0]))
    return values


def _write_run_config(directory: str, cfg: RunConfig):
    os.makedirs(directory, exist_ok=True)
    io.write_json(os.path.join(directory, RUN_CONFIG_FILE), cfg.to_dict())


def _render_set(cfg: RunConfig) -> RenderSet:
    if cfg["render_set"]:
        return io.read_render_set(cfg["render_set"])
    return sample_render_set(cfg["render_set_size"], cfg["render_seed"])


def _thresholds(cfg: RunConfig) -> ArtifactThresholds:
    if cfg.options.get("thresholds"):
        return io.read_thresholds(cfg["thresholds"])
    return ArtifactThresholds()


def _predictor_config(cfg: RunConfig, seed: int) -> PredictorConfig:
    return PredictorConfig(
        patch_radius=cfg["patch_radius"],
        hidden_widths=tuple(cfg["hidden_widths"]),
        dropout_rate=cfg["dropout_rate"],
        map_loss_weights=tuple(cfg["loss_weights"]),
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        steps_per_epoch=cfg["steps_per_epoch"],
        batch_pixels=cfg["batch_pixels"],
        optimizer=cfg["optimizer"],
        seed=seed,
    )


def _is_dataset(path: str) -> bool:
    return os.path.isfile(os.path.join(path, MANIFEST_FILE))


def _dataset(cfg: RunConfig, seed: int) -> Dataset:
    if cfg.options.get("input"):
        return load_dataset(cfg["input"])
    return make_dataset(
        cfg["per_family"], cfg["families"], seed, cfg["size"], cfg["ppi"]
    )


def _read_scan(path: str, ppi: Optional[float] = None) -> ImageGrid:
    """A scan from a PNG path or a material folder containing ``scan.png``."""
    if os.path.isdir(path):
        meta_path = os.path.join(path, io.META_FILE)
        if ppi is None and os.path.exists(meta_path):
            ppi = io.read_json(meta_path).get("ppi")
        path = os.path.join(path, "scan.png")
    return io.read_png16(path, ppi or DEFAULT_PPI)


def _stack_dirs(path: str) -> Dict[str, str]:
    """Map stack folders by name: `path` itself, or its stack subfolders."""
    if os.path.isfile(os.path.join(path, io.STACK_FILES["normals"])):
        return {os.path.basename(os.path.normpath(path)): path}
    res = {}
    for name in sorted(os.listdir(path)):
        sub = os.path.join(path, name)
        if os.path.isfile(os.path.join(sub, io.STACK_FILES["normals"])):
            res[name] = sub
    if not res:
        raise ContractError("{}: no map stacks found".format(path))
    return res


def cmd_synth(cfg: RunConfig):
    """Generate a synthetic dataset with its stratified split."""
    dataset = make_dataset(
        cfg["per_family"], cfg["families"], cfg["seed"], cfg["size"], cfg["ppi"]
    )
    save_dataset(cfg["output"], dataset)
    _write_run_config(cfg["output"], cfg)
    print(
        "{} materials ({} train / {} test) written to {}".format(
            len(dataset), len(dataset.train_ids), len(dataset.test_ids), cfg["output"]
        )
    )


def cmd_train(cfg: RunConfig):
    """Train the predictor on the training split of a dataset."""
    dataset = load_dataset(cfg["input"])
    pcfg = _predictor_config(cfg, cfg["seed"])
    weights, curve = train([(s.scan, s.gt) for s in dataset.train()], pcfg)

    os.makedirs(cfg["output"], exist_ok=True)
    io.write_weights(os.path.join(cfg["output"], "weights.umtk"), weights)
    pd.DataFrame({"epoch": np.arange(len(curve)), "loss": curve}).to_csv(
        os.path.join(cfg["output"], "loss.csv"), index=False
    )
    _write_run_config(cfg["output"], cfg)
    print("final training loss {:.6f}".format(curve[-1]))


def cmd_predict(cfg: RunConfig):
    """Predict the map stack of one scan."""
    weights = io.read_weights(cfg["weights"])
    scan = _read_scan(cfg["input"], cfg["ppi"])
    stack = predict(weights, scan)
    io.save_stack(cfg["output"], stack, {"name": os.path.basename(cfg["input"])})
    _write_run_config(cfg["output"], cfg)


def cmd_metrics(cfg: RunConfig):
    """Compare estimated stacks with reference stacks of the same names."""
    estimates = _stack_dirs(cfg["input"])
    references = _stack_dirs(cfg["reference"])
    missing = sorted(set(estimates) - set(references))
    if missing:
        raise ContractError("No reference stack for {}".format(", ".join(missing)))

    s = _render_set(cfg)
    th = _thresholds(cfg)
    rows = []
    for name, est_dir in estimates.items():
        est, _ = io.load_stack(est_dir)
        gt, meta = io.load_stack(references[name])
        scan = None
        scan_path = os.path.join(references[name], "scan.png")
        if os.path.exists(scan_path):
            scan = io.read_png16(scan_path, gt.ppi)
            if min(scan.shape) <= 3 * th.box_size(scan.ppi):
                logger.warning("%s: scan too small for the artifact detector", name)
                scan = None
        k = grey_albedo(gt.width, gt.height, ppi=gt.ppi)
        row = evaluate_stack(gt, est, s, k, scan, th, name)
        row["family"] = meta.get("family")
        rows.append(row)

    frame = evaluate_many(rows)
    os.makedirs(cfg["output"], exist_ok=True)
    frame.to_csv(os.path.join(cfg["output"], "report.csv"), index=False)
    io.write_json(
        os.path.join(cfg["output"], "report.json"),
        {
            "render_set_hash": s.digest(),
            "materials": frame.to_dict(orient="records"),
            "mean": frame.mean(numeric_only=True).to_dict(),
        },
    )
    _write_run_config(cfg["output"], cfg)
    print(frame.mean(numeric_only=True).to_string())


def _uncertainty_row(predictor, scan, gt, s, cfg: RunConfig, seed: int, name: str):
    u = mc_sample(predictor, scan, cfg["mc_samples"], seed, source=name)
    h, w = u.shape
    k = grey_albedo(w, h, ppi=scan.ppi)
    report = build_report(u, s, k, cfg["eps"], cfg["variance_inside"])
    row = {
        "material": name,
        "sigma_brdf": report.sigma_brdf,
        "sigma_normals": float(np.mean(report.sigma_normals)),
        "sigma_spec": float(np.mean(report.sigma_spec)),
        "sigma_rough": float(np.mean(report.sigma_rough)),
    }
    if gt is not None:
        row.update(evaluate_stack(gt, predictor.predict(scan), s, k, material=name))
        del row["artifact"]
        row["render_deviation"] = float(np.mean(render_deviation(u, gt, s, k)))
    return u, report, row


def cmd_uncertainty(cfg: RunConfig):
    """MC-dropout uncertainty of one scan, or of a dataset's test split.

    A single scan also gets the mean of its samples; when it is a material
    folder, each sample's render deviation from the folder's stack too.
    """
    weights = io.read_weights(cfg["weights"])
    predictor = Predictor(weights, cfg["dropout"])
    s = _render_set(cfg)
    out = cfg["output"]

    if _is_dataset(cfg["input"]):
        dataset = load_dataset(cfg["input"])
        samples = dataset.test() if cfg["split"] == "test" else list(dataset.samples)
        rows = []
        for sample in samples:
            _, _, row = _uncertainty_row(
                predictor, sample.scan, sample.gt, s, cfg, cfg["seed"], sample.id
            )
            row["family"] = sample.family.value
            rows.append(row)
        frame = pd.DataFrame(rows)
        os.makedirs(out, exist_ok=True)
        frame.to_csv(os.path.join(out, "uncertainty.csv"), index=False)
        correlation_matrix(frame).to_csv(os.path.join(out, "correlation.csv"))
        family_summary(frame).to_csv(os.path.join(out, "family_summary.csv"))
        if cfg["plot"]:  # pragma: no cover
            from svbrdf_uq.utils import plot_correlation_matrix

            ax = plot_correlation_matrix(correlation_matrix(frame))
            ax.figure.savefig(os.path.join(out, "correlation.png"), dpi=150)
    else:
        scan = _read_scan(cfg["input"], cfg["ppi"])
        gt = None
        if os.path.isdir(cfg["input"]) and os.path.isfile(
            os.path.join(cfg["input"], io.STACK_FILES["normals"])
        ):
            gt, _ = io.load_stack(cfg["input"])
        u, report, _ = _uncertainty_row(
            predictor, scan, gt, s, cfg, cfg["seed"], os.path.basename(cfg["input"])
        )
        io.save_uncertainty_report(out, report)
        io.save_stack(os.path.join(out, "mean"), sample_mean(u), {"mc_samples": len(u)})
        if gt is not None:
            deviation = render_deviation(u, gt, s)
            pd.DataFrame(
                {"sample": np.arange(len(u)), "render_deviation": deviation}
            ).to_csv(os.path.join(out, "render_deviation.csv"), index=False)
        print("sigma_brdf {:.6f}".format(report.sigma_brdf))

    _write_run_config(out, cfg)


def cmd_artifact(cfg: RunConfig):
    """Run the artifact detector on a stack and its input scan."""
    stack, _ = io.load_stack(cfg["input"])
    scan = _read_scan(cfg["scan"] or cfg["input"], stack.ppi)
    report = detect_artifacts(scan, stack, _thresholds(cfg))
    os.makedirs(cfg["output"], exist_ok=True)
    io.write_json(os.path.join(cfg["output"], "artifact.json"), report.to_dict())
    _write_run_config(cfg["output"], cfg)
    print("artifact" if report.verdict else "clean")


def cmd_active(cfg: RunConfig):
    """Compare sample-selection strategies over several master seeds."""
    dataset = _dataset(cfg, cfg["data_seed"])
    s = _render_set(cfg)
    out = cfg["output"]
    os.makedirs(os.path.join(out, "runs"), exist_ok=True)

    states = []
    for strategy in cfg["strategy"]:
        for seed in cfg["seeds"]:
            state = run_loop(
                dataset.train(),
                dataset.test(),
                _predictor_config(cfg, seed),
                cfg["schedule"],
                strategy,
                seed,
                cfg["mc_samples"],
                s,
                cfg["eps"],
            )
            io.write_json(
                os.path.join(
                    out, "runs", "{}-{}.json".format(state.strategy.name, seed)
                ),
                state.to_dict(),
            )
            states.append(state)

    frame = to_frame(states)
    frame.to_csv(os.path.join(out, "active_learning.csv"), index=False)
    summarize_runs(frame).to_csv(os.path.join(out, "summary.csv"), index=False)

    names = {st.strategy.name for st in states}
    if {"sigma_brdf", "random"} <= names:
        comparison = {
            str(f): compare_strategies(frame, f) for f in sorted(set(frame["fraction"]))
        }
        io.write_json(os.path.join(out, "comparison.json"), comparison)

    if cfg["plot"]:  # pragma: no cover
        from svbrdf_uq.utils import plot_active_learning_curves

        fig, _ = plot_active_learning_curves(frame)
        fig.savefig(os.path.join(out, "active_learning.png"), dpi=150)

    _write_run_config(out, cfg)


def cmd_render(cfg: RunConfig):
    """Render a stack under one light/view pair, cosine weighted."""
    stack, _ = io.load_stack(cfg["input"])
    l, v = as_direction(cfg["light"]), as_direction(cfg["view"])
    if cfg["albedo_image"]:
        albedo = io.read_png16(cfg["albedo_image"], stack.ppi)
    else:
        albedo = ImageGrid.constant(
            cfg["albedo"], stack.width, stack.height, ppi=stack.ppi
        )

    radiance = shade(stack, albedo, l, v).values * cosine_weight(l)
    os.makedirs(cfg["output"], exist_ok=True)
    io.write_png16(
        os.path.join(cfg["output"], "render.png"), np.clip(radiance, 0.0, 1.0)
    )
    io.write_json(
        os.path.join(cfg["output"], "render.json"),
        {
            "min": float(radiance.min()),
            "max": float(radiance.max()),
            "clipped_fraction": float(np.mean(radiance > 1.0)),
        },
    )
    _write_run_config(cfg["output"], cfg)


def cmd_calibrate(cfg: RunConfig):
    """Fit artifact thresholds on clean and checkerboard-corrupted stacks."""
    dataset = _dataset(cfg, cfg["seed"])
    base = ArtifactThresholds(box_size_factor=cfg["box_size_factor"])

    clean, bad_spec, bad_rough = [], [], []
    for sample in dataset.samples:
        box = base.box_size(sample.ppi)
        if min(sample.shape) <= 3 * box:
            raise ImageTooSmallError(
                "{}: {} pixels is too small for a box of {}".format(
                    sample.id, min(sample.shape), box
                )
            )
        clean.append((sample.scan, sample.gt))
        for target, bad in (("specular", bad_spec), ("roughness", bad_rough)):
            corrupted = inject_checkerboard(sample.gt, box, cfg["amplitude"], target)
            bad.append((sample.scan, corrupted))

    th = calibrate_thresholds(clean, bad_spec, bad_rough, cfg["box_size_factor"])
    os.makedirs(cfg["output"], exist_ok=True)
    io.write_thresholds(os.path.join(cfg["output"], "thresholds.json"), th)
    _write_run_config(cfg["output"], cfg)


def _add_render_set_options(p: argparse.ArgumentParser):
    p.add_argument("--render-set", dest="render_set", help="light/view pair file")
    p.add_argument("--render-set-size", dest="render_set_size", type=int)
    p.add_argument("--render-seed", dest="render_seed", type=int)


def _add_dataset_options(p: argparse.ArgumentParser):
    p.add_argument("--families", type=_names, help="comma-separated families")
    p.add_argument("--per-family", dest="per_family", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--ppi", type=float)


def _add_training_options(p: argparse.ArgumentParser):
    p.add_argument("--patch-radius", dest="patch_radius", type=int)
    p.add_argument("--hidden", dest="hidden_widths", type=_ints, help="e.g. 32,32")
    p.add_argument("--dropout", dest="dropout_rate", type=float)
    p.add_argument("--loss-weights", dest="loss_weights", type=_floats)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int)
    p.add_argument("--batch-pixels", dest="batch_pixels", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])


def _add_uq_options(p: argparse.ArgumentParser):
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--eps", type=float)


_Command = Tuple[Callable[[RunConfig], None], Dict[str, Any], Tuple[str, ...]]

COMMANDS: Dict[str, _Command] = {
    "synth": (
        cmd_synth,
        dict(_DATASET_DEFAULTS, output=None, seed=None),
        ("output", "seed"),
    ),
    "train": (
        cmd_train,
        dict(_TRAINING_DEFAULTS, input=None, output=None, seed=None),
        ("input", "output", "seed"),
    ),
    "predict": (
        cmd_predict,
        {"weights": None, "input": None, "output": None, "ppi": None},
        ("weights", "input", "output"),
    ),
    "metrics": (
        cmd_metrics,
        dict(
            _RENDER_SET_DEFAULTS,
            input=None,
            reference=None,
            output=None,
            thresholds=None,
        ),
        ("input", "reference", "output"),
    ),
    "uncertainty": (
        cmd_uncertainty,
        dict(
            _RENDER_SET_DEFAULTS,
            weights=None,
            input=None,
            output=None,
            seed=None,
            mc_samples=DEFAULT_MC_SAMPLES,
            eps=DEFAULT_EPS,
            dropout=None,
            variance_inside=False,
            split="test",
            ppi=None,
            plot=False,
        ),
        ("weights", "input", "output", "seed"),
    ),
    "artifact": (
        cmd_artifact,
        {"input": None, "scan": None, "output": None, "thresholds": None},
        ("input", "output"),
    ),
    "active": (
        cmd_active,
        dict(
            _TRAINING_DEFAULTS,
            **_DATASET_DEFAULTS,
            **_RENDER_SET_DEFAULTS,
            input=None,
            output=None,
            seeds=None,
            data_seed=None,
            strategy=["sigma_brdf", "random"],
            schedule=list(DEFAULT_SCHEDULE),
            mc_samples=DEFAULT_MC_SAMPLES,
            eps=DEFAULT_EPS,
            plot=False,
        ),
        ("output", "seeds"),
    ),
    "render": (
        cmd_render,
        {
            "input": None,
            "output": None,
            "light": [0.0, 0.0, 1.0],
            "view": [0.0, 0.0, 1.0],
            "albedo": 0.5,
            "albedo_image": None,
        },
        ("input", "output"),
    ),
    "calibrate": (
        cmd_calibrate,
        dict(
            _DATASET_DEFAULTS,
            input=None,
            output=None,
            seed=None,
            amplitude=0.3,
            box_size_factor=ArtifactThresholds().box_size_factor,
        ),
        ("output", "seed"),
    ),
}


# options required only when the command generates its dataset
SYNTH_REQUIRED = {"active": ("data_seed",)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svbrdf-uq",
        description="SVBRDF map prediction with render-space uncertainty",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def _command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument(
            "--config", help="replay the options of a {}".format(RUN_CONFIG_FILE)
        )
        p.add_argument("--output", "-o")
        return p

    p = _command("synth", "generate a synthetic dataset")
    p.add_argument("--seed", type=int)
    _add_dataset_options(p)

    p = _command("train", "train the predictor on a dataset's training split")
    p.add_argument("--input", "-i", help="dataset folder")
    p.add_argument("--seed", type=int)
    _add_training_options(p)

    p = _command("predict", "predict the maps of a scan")
    p.add_argument("--input", "-i", help="scan PNG or material folder")
    p.add_argument("--weights", "-w")
    p.add_argument("--ppi", type=float)

    p = _command("metrics", "compare estimated and reference stacks")
    p.add_argument("--input", "-i", help="estimated stack(s)")
    p.add_argument("--reference", "-r", help="reference stack(s)")
    p.add_argument("--thresholds")
    _add_render_set_options(p)

    p = _command("uncertainty", "MC-dropout uncertainty of a scan or a dataset")
    p.add_argument("--input", "-i", help="scan PNG, material folder or dataset")
    p.add_argument("--weights", "-w")
    p.add_argument("--seed", type=int)
    p.add_argument("--dropout", type=float, help="override the trained dropout rate")
    p.add_argument(
        "--variance-inside", dest="variance_inside", action="store_const", const=True
    )
    p.add_argument("--split", choices=["test", "all"])
    p.add_argument("--ppi", type=float)
    p.add_argument("--plot", action="store_const", const=True)
    _add_uq_options(p)
    _add_render_set_options(p)

    p = _command("artifact", "detect artifacts in a stack")
    p.add_argument("--input", "-i", help="stack folder")
    p.add_argument("--scan", help="input scan (default: <input>/scan.png)")
    p.add_argument("--thresholds")

    p = _command("active", "run the active-learning comparison")
    p.add_argument("--input", "-i", help="dataset folder (default: generate one)")
    p.add_argument("--seeds", type=_seeds, help="a count, or a comma-separated list")
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--strategy", type=_names, help="comma-separated strategies")
    p.add_argument("--schedule", type=_floats)
    p.add_argument("--plot", action="store_const", const=True)
    _add_uq_options(p)
    _add_render_set_options(p)
    _add_dataset_options(p)
    _add_training_options(p)

    p = _command("render", "render a stack under one light and view")
    p.add_argument("--input", "-i", help="stack folder")
    p.add_argument("--light", type=_floats, help="x,y,z")
    p.add_argument("--view", type=_floats, help="x,y,z")
    p.add_argument("--albedo", type=float, help="constant albedo")
    p.add_argument("--albedo-image", dest="albedo_image")

    p = _command("calibrate", "fit artifact thresholds")
    p.add_argument("--input", "-i", help="dataset folder (default: generate one)")
    p.add_argument("--seed", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--box-size-factor", dest="box_size_factor", type=float)
    _add_dataset_options(p)

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the ``--config`` file and explicit flags, in that order."""
    _, defaults, _ = COMMANDS[args.command]
    options = dict(defaults)
    if args.config:
        loaded = RunConfig.from_dict(io.read_json(args.config))
        if loaded.command != args.command:
            raise ContractError(
                "{} holds a {!r} run, not {!r}".format(
                    args.config, loaded.command, args.command
                )
            )
        unknown = set(loaded.options) - set(defaults)
        if unknown:
            raise ContractError(
                "Unknown options in {}: {}".format(args.config, sorted(unknown))
            )
        options.update(loaded.options)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    return RunConfig(args.command, options)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        cfg = resolve_config(args)
        func, _, required = COMMANDS[args.command]
        missing = [k for k in required if cfg.options.get(k) is None]
        if not cfg.options.get("input"):
            # a synthesized dataset needs its own seed
            missing += [
                k for k in SYNTH_REQUIRED.get(args.command, ()) if cfg[k] is None
            ]
        if missing:
            parser.error(
                "{}: missing {}".format(
                    args.command, ", ".join("--" + k.replace("_", "-") for k in missing)
                )
            )
        func(cfg)
    except (ContractError, OSError, ValueError, KeyError) as e:
        msg = str(e).splitlines()[0] if str(e) else ""
        print("{}: {}: {}".format(args.command, type(e).__name__, msg), file=sys.stderr)
        return 1

    return 0
