"""Scoring decisions on data sets and scoring algorithms from their transducer.

Data-set level: confusion matrices (ties split between the tied
decisions), per-datum utility yields, achievable bounds and rescaled
yields. Algorithm level: the expected utility of an augmented classifier
integrated over a grid of outputs, the distribution of its long-run
utility across posterior samples, and the probability that one algorithm
beats another.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .decide import DecisionOutcome, choose_indices, utility_matrix
from .errors import CoverageError, DimensionError, EmptyDataError
from .model import TransducerModel

DEFAULT_CELLS = 512
DEFAULT_CELLS_MULTI = 64
MIN_COVERAGE = 0.999
DEFAULT_QUANTILES = (0.125, 0.875)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Decision-by-true-class tallies; ties contribute fractional points."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.ndim != 2:
            raise DimensionError("confusion counts must be a 2-D array")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def class_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def accumulate_confusion(decisions, truths, n_decisions: int, n_classes: int,
                         tie_sets: Sequence[Sequence[int]] | None = None) -> ConfusionMatrix:
    """Tally decisions against true classes.

    Parameters
    ----------
    decisions : sequence of int or DecisionOutcome
    truths : sequence of int
    n_decisions, n_classes : int
    tie_sets : sequence of sequences of int, optional
        Per-record tied decisions; a record tied between ``m`` decisions
        adds ``1/m`` to each of them (half a point in the binary case).
        Taken from the outcomes when ``decisions`` are DecisionOutcomes.
    """
    decisions = list(decisions)
    truths = np.asarray(truths)
    if len(decisions) != truths.shape[0]:
        raise DimensionError(f"{len(decisions)} decisions for {truths.shape[0]} truths")
    if tie_sets is None:
        tie_sets = [d.tie_set if isinstance(d, DecisionOutcome) else (int(d),) for d in decisions]
    elif len(tie_sets) != len(decisions):
        raise DimensionError("one tie set per decision is required")
    counts = np.zeros((n_decisions, n_classes))
    for ties, c in zip(tie_sets, truths):
        if not 0 <= c < n_classes:
            raise DimensionError(f"true class {c} out of range for {n_classes} classes")
        ties = tuple(ties)
        if any(not 0 <= i < n_decisions for i in ties):
            raise DimensionError(f"decision {ties} out of range for {n_decisions} decisions")
        share = 1.0 / len(ties)
        for i in ties:
            counts[i, c] += share
    return ConfusionMatrix(counts)


def utility_yield(U, confusion) -> float:
    """Per-datum utility: grand sum of ``U * C`` divided by the count."""
    U = np.asarray(utility_matrix(U), dtype=float)
    C = confusion.counts if isinstance(confusion, ConfusionMatrix) else np.asarray(confusion, float)
    if U.shape != C.shape:
        raise DimensionError(f"utility shape {U.shape} does not match confusion shape {C.shape}")
    total = C.sum()
    if total == 0:
        raise EmptyDataError("confusion matrix is empty")
    return float((U * C).sum() / total)


def achievable_bounds(U, class_counts) -> tuple[float, float]:
    """Worst and best per-datum yields for the given class totals.

    Every datum of class ``c`` receives the worst (best) entry of column
    ``c``.
    """
    U = np.asarray(utility_matrix(U), dtype=float)
    counts = np.asarray(class_counts, dtype=float)
    if counts.ndim != 1 or counts.shape[0] != U.shape[1]:
        raise DimensionError(f"need {U.shape[1]} class counts")
    n = counts.sum()
    if n <= 0:
        raise EmptyDataError("class counts are empty")
    return float(counts @ U.min(axis=0) / n), float(counts @ U.max(axis=0) / n)


def rescaled_yield(value: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if not hi > lo:
        raise ValueError(f"degenerate achievable bounds {bounds}")
    return (value - lo) / (hi - lo)


def raw_argmax_decisions(outputs, threshold: float = 0.5):
    """Decisions of the classifier used as-is, with tie masks.

    One-dimensional outputs are scores for class 1 compared against
    ``threshold`` (equality is a tie). Multi-dimensional outputs are
    per-class scores and the largest wins.
    """
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 1 or outputs.shape[1] == 1:
        s = outputs.reshape(-1)
        return (s > threshold).astype(int), s == threshold
    best = outputs.max(axis=1, keepdims=True)
    hits = outputs == best
    return hits.argmax(axis=1), hits.sum(axis=1) > 1


def binary_confusion(decisions, ties, truths) -> np.ndarray:
    """Fast 2x2 confusion counts with half points for ties."""
    decisions = np.asarray(decisions)
    ties = np.asarray(ties, dtype=bool)
    truths = np.asarray(truths)
    counts = np.zeros((2, 2))
    for c in (0, 1):
        col = truths == c
        tied = np.count_nonzero(col & ties)
        ones = np.count_nonzero(col & ~ties & (decisions == 1))
        counts[1, c] = ones + 0.5 * tied
        counts[0, c] = np.count_nonzero(col) - counts[1, c]
    return counts


def sweep_rescaled_yields(matrices, truths, probabilities, baseline=None):
    """Rescaled yields of utility-optimal decisions for many 2x2 matrices.

    Parameters
    ----------
    matrices : sequence of 2x2 arrays
    truths : array (n,) of true classes
    probabilities : array (n, 2) of class probabilities per datum
    baseline : (decisions, tie_mask), optional
        Utility-blind decisions scored against every matrix as well.

    Returns
    -------
    augmented : array (len(matrices),)
    standard : array (len(matrices),) or None
    """
    truths = np.asarray(truths)
    probabilities = np.asarray(probabilities, dtype=float)
    class_counts = np.bincount(truths, minlength=2)
    base_cm = binary_confusion(*baseline, truths) if baseline is not None else None
    aug, std = [], []
    for U in matrices:
        bounds = achievable_bounds(U, class_counts)
        d, t = choose_indices(U, probabilities)
        aug.append(rescaled_yield(utility_yield(U, binary_confusion(d, t, truths)), bounds))
        if base_cm is not None:
            std.append(rescaled_yield(utility_yield(U, base_cm), bounds))
    return np.array(aug), (np.array(std) if base_cm is not None else None)


# -- algorithm-level evaluation -------------------------------------------


@dataclass(frozen=True)
class OutputGrid:
    """Axis-aligned grid of cells over the output space.

    ``edges`` holds one increasing array of cell boundaries per output
    dimension; cells are ordered with the last dimension varying fastest.
    """

    edges: tuple[np.ndarray, ...]

    @classmethod
    def uniform(cls, lower, upper, cells):
        lower, upper = np.atleast_1d(lower), np.atleast_1d(upper)
        cells = np.broadcast_to(np.atleast_1d(cells), lower.shape)
        return cls(tuple(np.linspace(lo, hi, int(n) + 1) for lo, hi, n in zip(lower, upper, cells)))

    @property
    def y_dim(self) -> int:
        return len(self.edges)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def centers(self) -> np.ndarray:
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        return np.array(list(itertools.product(*mids)), dtype=float).reshape(-1, self.y_dim)

    @property
    def corners(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of every cell, each shape (cells, d)."""
        lows = [e[:-1] for e in self.edges]
        highs = [e[1:] for e in self.edges]
        return (np.array(list(itertools.product(*lows)), dtype=float).reshape(-1, self.y_dim),
                np.array(list(itertools.product(*highs)), dtype=float).reshape(-1, self.y_dim))

    def refine(self, factor: int) -> "OutputGrid":
        return OutputGrid.uniform([e[0] for e in self.edges], [e[-1] for e in self.edges],
                                  [n * factor for n in self.shape])


def default_grid(model: TransducerModel, cells: int | None = None) -> OutputGrid:
    """Grid spanning the calibration data range widened by three spreads.

    Falls back to the components' own extent (mean +- 6 sd) for models
    without a data summary in their provenance.
    """
    if cells is None:
        cells = DEFAULT_CELLS if model.y_dim == 1 else DEFAULT_CELLS_MULTI
    summary = model.provenance.get("data_summary")
    if summary:
        lo = np.asarray(summary["y_min"], float)
        hi = np.asarray(summary["y_max"], float)
        std = np.asarray(summary["y_std"], float)
        std = np.where(std > 0, std, 1.0)
        return OutputGrid.uniform(lo - 3 * std, hi + 3 * std, cells)
    mu = model.means.reshape(-1, model.y_dim)
    sd = model.stddevs.reshape(-1, model.y_dim)
    live = model.weights.reshape(-1) > 0
    return OutputGrid.uniform((mu - 6 * sd)[live].min(axis=0), (mu + 6 * sd)[live].max(axis=0), cells)


def _interval_mass(lo, hi, mu, sigma):
    """Gaussian probability of [lo, hi], accurate in both tails."""
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    upper = a > 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def _sample_cell_masses(model: TransducerModel, grid: OutputGrid) -> np.ndarray:
    """Probability of every cell under every posterior sample, shape (cells, T)."""
    if grid.y_dim != model.y_dim:
        raise DimensionError(f"grid has {grid.y_dim} dimensions, model has {model.y_dim}")
    lo, hi = grid.corners
    T, K = model.n_samples, model.n_components
    mu, sigma = model._mu, model._sigma
    out = np.empty((lo.shape[0], T))
    step = max(1, (1 << 21) // mu.shape[0])
    for start in range(0, lo.shape[0], step):
        sl = slice(start, start + step)
        mass = np.ones((lo[sl].shape[0], mu.shape[0]))
        for j in range(model.y_dim):
            mass *= _interval_mass(lo[sl, j, None], hi[sl, j, None], mu[None, :, j], sigma[None, :, j])
        out[sl] = (mass.reshape(-1, T, K) * model.weights[None]).sum(axis=2)
    return out


@dataclass(frozen=True)
class AlgorithmEvaluation:
    expected_utility: float
    long_run_samples: np.ndarray
    grid: OutputGrid
    coverage: float


def _grid_pieces(model, grid):
    grid = grid or default_grid(model)
    sample_mass = _sample_cell_masses(model, grid)
    pooled_mass = sample_mass.mean(axis=1)
    coverage = float(pooled_mass.sum())
    if coverage < MIN_COVERAGE:
        raise CoverageError(
            f"grid covers {coverage:.6f} of the output mass, need {MIN_COVERAGE}", coverage
        )
    return grid, sample_mass, pooled_mass, coverage


def optimal_policy(model: TransducerModel, U, grid: OutputGrid | None = None) -> np.ndarray:
    """Utility-maximizing decision at every grid cell centre (lowest on ties)."""
    grid = grid or default_grid(model)
    U = np.asarray(utility_matrix(U), dtype=float)
    d, _ = choose_indices(U, model.conditional_class(grid.centers))
    return d


def policy_utility(model: TransducerModel, U, policy, grid: OutputGrid | None = None) -> float:
    """Expected utility of a fixed decision per grid cell."""
    grid, _, mass, coverage = _grid_pieces(model, grid)
    U = np.asarray(utility_matrix(U), dtype=float)
    p = model.conditional_class(grid.centers)
    gains = (U[np.asarray(policy)] * p).sum(axis=1)
    return float(mass @ gains / coverage)


def algorithm_expected_utility(model: TransducerModel, U, grid: OutputGrid | None = None) -> float:
    """Expected utility of the augmented classifier, integrated on a grid.

    Each cell contributes its probability mass times the best expected
    utility at its centre; the sum is normalized by the covered mass.
    """
    return evaluate_algorithm(model, U, grid, long_run=False).expected_utility


def long_run_utility_distribution(model: TransducerModel, U, grid: OutputGrid | None = None):
    """Per-posterior-sample long-run utility, shape (T,)."""
    return evaluate_algorithm(model, U, grid).long_run_samples


def evaluate_algorithm(model: TransducerModel, U, grid: OutputGrid | None = None,
                       long_run: bool = True) -> AlgorithmEvaluation:
    U = np.asarray(utility_matrix(U), dtype=float)
    if U.shape[1] != model.n_classes:
        raise DimensionError(f"utility matrix has {U.shape[1]} columns for {model.n_classes} classes")
    grid, sample_mass, pooled_mass, coverage = _grid_pieces(model, grid)
    centers = grid.centers
    best = (model.conditional_class(centers) @ U.T).max(axis=1)
    expected = float(pooled_mass @ best / coverage)
    samples = np.empty(0)
    if long_run:
        curves = model.per_sample_curves(centers)  # (cells, T, C)
        best_t = (curves @ U.T).max(axis=2)  # (cells, T)
        samples = (sample_mass * best_t).sum(axis=0) / sample_mass.sum(axis=0)
    return AlgorithmEvaluation(expected, samples, grid, coverage)


def prob_superior(u_a, u_b) -> float:
    """Probability that a draw of ``u_a`` exceeds a draw of ``u_b``.

    Exact over all ordered pairs; tied pairs count one half.
    """
    a = np.sort(np.asarray(u_a, dtype=float).ravel())
    b = np.sort(np.asarray(u_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptyDataError("both utility samples must be non-empty")
    below = np.searchsorted(b, a, side="left").sum()
    at_most = np.searchsorted(b, a, side="right").sum()
    ties = at_most - below
    pairs = a.size * b.size
    # integer numerators; report the smaller side directly so that the two
    # orders sum to exactly one
    twice_wins = 2 * int(below) + int(ties)
    if twice_wins <= pairs:
        return twice_wins / (2 * pairs)
    return 1.0 - (2 * pairs - twice_wins) / (2 * pairs)


@dataclass(frozen=True)
class QuantileBand:
    y: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    quantiles: tuple[float, float]


def variability_band(model: TransducerModel, y_grid, q_lo: float = DEFAULT_QUANTILES[0],
                     q_hi: float = DEFAULT_QUANTILES[1], curve_kind: str = "class-conditional",
                     c: int = 1) -> QuantileBand:
    """Pointwise quantiles of the per-sample curves for class ``c``.

    ``curve_kind="class-conditional"`` bands p(c | y);
    ``"generative"`` bands the density p(y | c). ``center`` is the pooled
    curve, which need not lie inside the band.
    """
    if not 0 <= q_lo < q_hi <= 1:
        raise ValueError("need 0 <= q_lo < q_hi <= 1")
    if model.n_samples < 8:
        warnings.warn(f"only {model.n_samples} posterior samples; band quantiles are unreliable",
                      stacklevel=2)
    y, _ = model._as_outputs(y_grid)
    if curve_kind == "class-conditional":
        curves = model.per_sample_curves(y)[:, :, c]
        center = model.conditional_class(y)[:, c]
    else:
        curves = model.per_sample_curves(y, kind="generative", c=c)
        center = model.conditional_output(c, y)
    lower, upper = np.quantile(curves, [q_lo, q_hi], axis=1)
    return QuantileBand(y.squeeze(-1) if y.shape[1] == 1 else y, lower, upper, center, (q_lo, q_hi))
