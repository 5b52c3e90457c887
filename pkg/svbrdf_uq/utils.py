from typing import Any, Dict, Optional, Sequence, Tuple

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib import cm
from matplotlib.axes import Axes
from matplotlib.colors import Colormap

# Rec. 709 luma weights for linear RGB
LUMA_WEIGHTS = np.r_[0.2126, 0.7152, 0.0722]


def derive_seed(*entropy: int) -> int:
    """Derive a 32-bit seed from a sequence of integers.

    The same `entropy` always gives the same seed, and distinct sequences give
    statistically independent seeds.  This is how every stochastic step
    (sample index, round index, material index) gets its own stream from a
    single master seed.

    Parameters
    ----------
    entropy
        Non-negative integers, e.g. ``(master_seed, round_index)``.

    Returns
    -------
    A Python ``int`` in ``[0, 2**32)``.
    """
    # the length goes first; SeedSequence zero-pads short entropy
    ss = np.random.SeedSequence([len(entropy)] + [int(e) for e in entropy])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def population_std(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Compute the population (``ddof=0``) standard deviation along `axis`.

    The data is shifted by its first element along `axis` before the usual
    two-pass computation, so that identical samples give exactly zero rather
    than a rounding residue.
    """
    x = np.asarray(x, dtype=float)
    first = np.take(x, [0], axis=axis)
    d = x - first
    m = d.mean(axis=axis, keepdims=True)
    var = np.mean((d - m) ** 2, axis=axis)
    return np.sqrt(var)


def round_odd(x: float, minimum: int = 3) -> int:
    """Round `x` to the nearest odd integer, with a lower bound of `minimum`.

    >>> round_odd(25.5)
    25
    >>> round_odd(1.2)
    3
    """
    res = 2 * int(np.floor((x - 1.0) / 2.0 + 0.5)) + 1
    return max(res, minimum)


def luminance(data: np.ndarray) -> np.ndarray:
    """Reduce an ``(H, W, C)`` array to ``(H, W)`` luminance.

    Single-channel inputs are returned as-is (without the channel axis).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        return data
    if data.shape[-1] == 1:
        return data[..., 0]
    if data.shape[-1] == 3:
        return data @ LUMA_WEIGHTS
    raise ValueError("Expected 1 or 3 channels, got {}".format(data.shape[-1]))


def normalize_vectors(v: np.ndarray) -> np.ndarray:
    """Scale the last axis of `v` to unit L2 norm."""
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def plot_active_learning_curves(
    data: pd.DataFrame,
    metrics: Sequence[str] = ("l_brdf", "l1_spec", "l1_rough", "angular_deg"),
    figsize: Tuple[int, ...] = (12, 8),
    title: Optional[str] = None,
    plot_kwargs: Optional[Dict[str, Any]] = None,
):  # pragma: no cover
    """Plot test metrics against the labeled fraction for each strategy.

    Parameters
    ----------
    data: DataFrame
        A "long" frame with columns ``run, round, fraction, strategy, metric,
        value`` (the flat experiment log).  Values are reduced to the median
        over runs.
    metrics: sequence of str
        The metrics to plot, one axis each.
    plot_kwargs: dict (optional)
        Keywords passed to ``Axes.plot``.

    Returns
    -------
    fig, axes
    """
    plot_kwargs = plot_kwargs or {}
    plot_kwargs.setdefault("marker", "o")

    n = len(metrics)
    ncols = min(n, 2)
    nrows = int(np.ceil(n / ncols))
    fig, axes = plt.subplots(nrows=nrows, ncols=ncols, figsize=figsize, squeeze=False)

    medians = (
        data.groupby(["strategy", "metric", "fraction"])["value"].median().reset_index()
    )

    for ax, metric in zip(axes.flat, metrics):
        metric_data = medians[medians.metric == metric]
        for strategy, strategy_data in metric_data.groupby("strategy"):
            ax.plot(
                strategy_data.fraction,
                strategy_data.value,
                label=strategy,
                **plot_kwargs,
            )
        ax.set_xlabel("labeled fraction")
        ax.set_ylabel(metric)
        ax.legend()

    for ax in list(axes.flat)[n:]:
        ax.set_visible(False)

    if title:
        fig.suptitle(title)

    plt.tight_layout()

    return fig, axes


def plot_correlation_matrix(
    corr: pd.DataFrame,
    axes: Optional[Axes] = None,
    colormap: Colormap = cm.RdBu_r,
    annotate: bool = True,
) -> Axes:  # pragma: no cover
    """Draw a Pearson correlation matrix as an annotated heat-map.

    Parameters
    ==========
    corr
        A square frame, e.g. the result of `metrics.correlation_matrix`.
    axes
        The Matplotlib axes to use for plotting.
    colormap
        The colormap used for the correlation values in ``[-1, 1]``.
    annotate
        Write each value in its cell.

    """
    if axes is None:
        _, axes = plt.subplots(nrows=1, ncols=1, figsize=(7, 6))

    im = axes.imshow(corr.values, cmap=colormap, vmin=-1.0, vmax=1.0)
    axes.set_xticks(range(len(corr.columns)))
    axes.set_xticklabels(corr.columns, rotation=45, ha="right")
    axes.set_yticks(range(len(corr.index)))
    axes.set_yticklabels(corr.index)

    if annotate:
        for i in range(corr.shape[0]):
            for j in range(corr.shape[1]):
                axes.text(j, i, "{:.2f}".format(corr.values[i, j]), ha="center")

    axes.figure.colorbar(im, ax=axes)

    return axes
