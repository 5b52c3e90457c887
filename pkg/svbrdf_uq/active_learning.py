"""Uncertainty-guided growth of the labeled training set."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from svbrdf_uq.errors import ContractError, ScheduleError
from svbrdf_uq.metrics import evaluate_stack
from svbrdf_uq.predictor import (
    Predictor,
    PredictorConfig,
    PredictorWeights,
    predict,
    train,
)
from svbrdf_uq.renderer import RenderSet, sample_render_set
from svbrdf_uq.synthdata import MaterialSample
from svbrdf_uq.uncertainty import (
    DEFAULT_EPS,
    DEFAULT_MC_SAMPLES,
    grey_albedo,
    mc_scores,
)
from svbrdf_uq.utils import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE: Tuple[float, ...] = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_SEEDS: Tuple[int, ...] = (0, 1, 2, 3, 4)
MIN_MATERIALS: int = 10
MIN_FIRST_FRACTION: float = 0.05

METRIC_NAMES: Tuple[str, ...] = (
    "l_brdf",
    "l1_spec",
    "l1_rough",
    "angular_deg",
    "pearson_spec",
    "pearson_rough",
)

# Seed stream of the per-round pool scoring
_SCORE_STREAM = 7


class StrategyKind(str, Enum):
    SIGMA_BRDF = "sigma_brdf"
    SIGMA_NORMALS = "sigma_normals"
    SIGMA_SPEC = "sigma_spec"
    SIGMA_ROUGH = "sigma_rough"
    RANDOM = "random"


@dataclass(frozen=True)
class Strategy:
    """A sample-selection strategy; `seed` only applies to ``random``."""

    kind: StrategyKind
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.seed is not None and self.kind is not StrategyKind.RANDOM:
            raise ContractError("Only the random strategy takes a seed")

    @classmethod
    def parse(cls, text: Union[str, "Strategy"]) -> "Strategy":
        """Parse ``"sigma_brdf"``, ``"random"`` or ``"random:<seed>"``.

        >>> Strategy.parse("random:3").seed
        3
        """
        if isinstance(text, Strategy):
            return text
        name, _, seed = str(text).partition(":")
        try:
            kind = StrategyKind(name)
        except ValueError:
            raise ContractError(
                "Unknown strategy {!r}; choose from {}".format(
                    text, ", ".join(k.value for k in StrategyKind)
                )
            ) from None
        return cls(kind, int(seed) if seed else None)

    @property
    def name(self) -> str:
        return self.kind.value


def validate_schedule(schedule: Sequence[float]) -> Tuple[float, ...]:
    """Check that a budget schedule is strictly increasing from >= 0.05 to 1.

    Raises
    ------
    ScheduleError
    """
    schedule = tuple(float(f) for f in schedule)
    if not schedule:
        raise ScheduleError("The schedule is empty")
    if schedule[0] < MIN_FIRST_FRACTION:
        raise ScheduleError(
            "The schedule must start at >= {}; got {}".format(
                MIN_FIRST_FRACTION, schedule[0]
            )
        )
    if schedule[-1] != 1.0:
        raise ScheduleError("The schedule must end at 1.0; got {}".format(schedule[-1]))
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ScheduleError(
            "The schedule must be strictly increasing: {}".format(schedule)
        )
    return schedule


def labeled_counts(n: int, schedule: Sequence[float]) -> List[int]:
    """Labeled-set sizes per round: ``fraction * n`` rounded, at least 1.

    >>> labeled_counts(120, DEFAULT_SCHEDULE)
    [12, 24, 48, 72, 96, 120]
    """
    return [max(1, int(np.floor(f * n + 0.5))) for f in schedule]


def score_pool(
    w: PredictorWeights,
    pool: Sequence[MaterialSample],
    strategy: Union[str, Strategy],
    mc_n: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    render_set: Optional[RenderSet] = None,
    eps: float = DEFAULT_EPS,
) -> List[Tuple[str, float]]:
    """Rank pool materials by a strategy's score.

    Per-map strategies score a material by the spatial mean of its per-map
    deviation; ``sigma_brdf`` by its scalar render-space uncertainty.  Every
    material is sampled with the same dropout seed.  ``random`` draws scores
    from `seed` (and the strategy's own seed) only.

    Returns
    -------
    ``(id, score)`` pairs by decreasing score, ties by increasing id.
    """
    strategy = Strategy.parse(strategy)
    if len(pool) == 0:
        raise ContractError("Cannot score an empty pool")

    ids = [s.id for s in pool]
    if strategy.kind is StrategyKind.RANDOM:
        entropy = (seed,) if strategy.seed is None else (strategy.seed, seed)
        rng = np.random.default_rng(derive_seed(*entropy))
        ordered = sorted(ids)
        draws = dict(zip(ordered, rng.random(len(ordered))))
        scores = np.array([draws[i] for i in ids])
    else:
        s = render_set if render_set is not None else sample_render_set()
        res = mc_scores(Predictor(w), [p.scan for p in pool], s, mc_n, seed, eps)
        scores = res[strategy.kind.value]

    for i, score in zip(ids, scores):
        logger.debug("%s score of %s: %.6g", strategy.name, i, score)

    return sorted(zip(ids, (float(x) for x in scores)), key=lambda t: (-t[1], t[0]))


def evaluate_weights(
    w: PredictorWeights,
    test: Sequence[MaterialSample],
    render_set: RenderSet,
) -> Dict[str, float]:
    """Mean test metrics of the deterministic predictions.

    Undefined correlations are skipped in the Pearson means.
    """
    rows = []
    for sample in test:
        h, wd = sample.shape
        est = predict(w, sample.scan)
        rows.append(
            evaluate_stack(
                sample.gt,
                est,
                render_set,
                grey_albedo(wd, h, ppi=sample.ppi),
                material=sample.id,
            )
        )
    frame = pd.DataFrame(rows)
    return {name: float(frame[name].mean()) for name in METRIC_NAMES}


@dataclass(frozen=True)
class RoundRecord:
    round: int
    fraction: float
    n_labeled: int
    selected: Tuple[str, ...]
    metrics: Dict[str, float]
    train_seed: int
    final_loss: float
    scores: Tuple[Tuple[str, float], ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "round": self.round,
            "fraction": self.fraction,
            "n_labeled": self.n_labeled,
            "selected": list(self.selected),
            "metrics": dict(self.metrics),
            "train_seed": self.train_seed,
            "final_loss": self.final_loss,
            "scores": [[i, s] for i, s in self.scores],
        }


@dataclass
class ActiveLearningState:
    """The labeled/unlabeled partition and the history of completed rounds.

    `records[r].scores` holds the pool scores that produced the selection of
    round ``r + 1``.
    """

    strategy: Strategy
    seed: int
    schedule: Tuple[float, ...]
    labeled: Tuple[str, ...] = ()
    unlabeled: Tuple[str, ...] = ()
    records: List[RoundRecord] = field(default_factory=list)

    @property
    def round_index(self) -> int:
        return len(self.records)

    def label(self, ids: Sequence[str]):
        ids = set(ids)
        if not ids <= set(self.unlabeled):
            raise ContractError("Can only label pool materials")
        self.labeled = tuple(sorted(set(self.labeled) | ids))
        self.unlabeled = tuple(i for i in self.unlabeled if i not in ids)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "strategy": self.strategy.name,
            "strategy_seed": self.strategy.seed,
            "seed": self.seed,
            "schedule": list(self.schedule),
            "labeled": list(self.labeled),
            "unlabeled": list(self.unlabeled),
            "rounds": [r.to_dict() for r in self.records],
        }


def run_loop(
    train_set: Sequence[MaterialSample],
    test_set: Sequence[MaterialSample],
    cfg: PredictorConfig,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    strategy: Union[str, Strategy] = "sigma_brdf",
    seed: int = 0,
    mc_n: int = DEFAULT_MC_SAMPLES,
    render_set: Optional[RenderSet] = None,
    eps: float = DEFAULT_EPS,
) -> ActiveLearningState:
    """Run the budget schedule for one strategy and master seed.

    Round 0 labels a random subset drawn from `seed`.  Every round retrains
    from scratch with the seed ``derive_seed(seed, round)`` on the sorted
    labeled ids and evaluates on `test_set`; between rounds the pool is scored
    and its top materials are labeled up to the next budget.

    Raises
    ------
    ScheduleError
        If the schedule is invalid.
    ContractError
        If there are fewer than 10 training materials or no test materials.
    """
    schedule = validate_schedule(schedule)
    strategy = Strategy.parse(strategy)
    if len(train_set) < MIN_MATERIALS:
        raise ContractError(
            "Active learning needs at least {} training materials; got {}".format(
                MIN_MATERIALS, len(train_set)
            )
        )
    if len(test_set) == 0:
        raise ContractError("The test split is empty")

    s = render_set if render_set is not None else sample_render_set()
    by_id = {m.id: m for m in train_set}
    ids = sorted(by_id)
    counts = labeled_counts(len(ids), schedule)

    state = ActiveLearningState(strategy, int(seed), schedule, unlabeled=tuple(ids))
    rng = np.random.default_rng(seed)
    first = sorted(str(i) for i in rng.choice(ids, size=counts[0], replace=False))
    state.label(first)
    selected: Tuple[str, ...] = tuple(first)

    for r, fraction in enumerate(schedule):
        train_seed = derive_seed(seed, r)
        data = [(by_id[i].scan, by_id[i].gt) for i in state.labeled]
        weights, curve = train(data, cfg.replace(seed=train_seed))
        metrics = evaluate_weights(weights, test_set, s)
        logger.info(
            "%s seed %d round %d: %d labeled (%.0f%%), test L_BRDF %.5f",
            strategy.name,
            seed,
            r,
            len(state.labeled),
            100 * fraction,
            metrics["l_brdf"],
        )

        scores: List[Tuple[str, float]] = []
        next_selected: Tuple[str, ...] = ()
        if r + 1 < len(schedule) and state.unlabeled:
            pool = [by_id[i] for i in state.unlabeled]
            scores = score_pool(
                weights,
                pool,
                strategy,
                mc_n,
                derive_seed(seed, r, _SCORE_STREAM),
                s,
                eps,
            )
            k = counts[r + 1] - len(state.labeled)
            next_selected = tuple(i for i, _ in scores[:k])

        state.records.append(
            RoundRecord(
                round=r,
                fraction=fraction,
                n_labeled=len(state.labeled),
                selected=selected,
                metrics=metrics,
                train_seed=train_seed,
                final_loss=float(curve[-1]),
                scores=tuple(scores),
            )
        )
        if next_selected:
            state.label(next_selected)
        selected = next_selected

    return state


def run_experiment(
    train_set: Sequence[MaterialSample],
    test_set: Sequence[MaterialSample],
    cfg: PredictorConfig,
    strategies: Sequence[Union[str, Strategy]] = ("sigma_brdf", "random"),
    seeds: Sequence[int] = DEFAULT_SEEDS,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    mc_n: int = DEFAULT_MC_SAMPLES,
    render_set: Optional[RenderSet] = None,
    eps: float = DEFAULT_EPS,
) -> List[ActiveLearningState]:
    """Run every strategy under every master seed."""
    s = render_set if render_set is not None else sample_render_set()
    return [
        run_loop(train_set, test_set, cfg, schedule, strategy, seed, mc_n, s, eps)
        for strategy in strategies
        for seed in seeds
    ]


def to_frame(states: Sequence[ActiveLearningState]) -> pd.DataFrame:
    """One row per (run, round, metric), ready for CSV and plotting."""
    rows = []
    for state in states:
        run = "{}-{}".format(state.strategy.name, state.seed)
        for rec in state.records:
            for metric, value in rec.metrics.items():
                rows.append(
                    {
                        "run": run,
                        "round": rec.round,
                        "fraction": rec.fraction,
                        "strategy": state.strategy.name,
                        "seed": state.seed,
                        "metric": metric,
                        "value": value,
                    }
                )
    return pd.DataFrame(
        rows,
        columns=["run", "round", "fraction", "strategy", "seed", "metric", "value"],
    )


def summarize_runs(frame: pd.DataFrame) -> pd.DataFrame:
    """Median over seeds of every (strategy, fraction, metric)."""
    return (
        frame.groupby(["strategy", "fraction", "metric"])["value"]
        .median()
        .reset_index()
    )


def compare_strategies(
    frame: pd.DataFrame,
    fraction: float,
    candidate: str = "sigma_brdf",
    baseline: str = "random",
    metric: str = "l_brdf",
) -> Dict[str, Any]:
    """Compare two strategies on one (lower-is-better) metric at one budget.

    Returns
    -------
    The two medians over seeds and the number of seeds in which the
    candidate is no worse than the baseline.
    """
    sel = frame[(frame["metric"] == metric) & np.isclose(frame["fraction"], fraction)]
    table = (
        sel.pivot_table(index="seed", columns="strategy", values="value")
        if not sel.empty
        else pd.DataFrame()
    )
    if candidate not in table or baseline not in table:
        raise ContractError(
            "Both {} and {} runs are needed at fraction {}".format(
                candidate, baseline, fraction
            )
        )
    paired = table[[candidate, baseline]].dropna()
    return {
        "candidate_median": float(paired[candidate].median()),
        "baseline_median": float(paired[baseline].median()),
        "wins": int((paired[candidate] <= paired[baseline]).sum()),
        "seeds": int(len(paired)),
    }
