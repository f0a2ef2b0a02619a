"""Maximum-expected-utility decisions over rectangular utility matrices.

A utility matrix has one row per decision and one column per true class.
Two matrices related by a positive scale and a constant shift induce the
same decisions; :func:`canonical_form` picks the representative with
smallest entry 0 and largest entry 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, NoScaleError


class TieRule(str, enum.Enum):
    REPORT = "report-tie"
    SPLIT_HALF = "split-half"
    SEEDED_UNIFORM = "seeded-uniform"


class Threshold(str, enum.Enum):
    """Sentinels of :func:`decision_threshold` when no finite cut exists."""

    ALWAYS = "always"
    NEVER = "never"
    INDIFFERENT = "indifferent"


def utility_matrix(U) -> np.ndarray:
    """Validate and return ``U`` as a 2-D array.

    Matrices holding :class:`~fractions.Fraction` entries stay exact
    (object dtype); anything else becomes float.
    """
    arr = np.asarray(U)
    if arr.dtype == object:
        if not all(isinstance(v, (int, Fraction, np.integer)) for v in arr.ravel()):
            arr = arr.astype(float)
    else:
        arr = arr.astype(float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError("a utility matrix needs shape (decisions, classes)")
    if arr.dtype != object and not np.all(np.isfinite(arr)):
        raise ValueError("utility entries must be finite")
    return arr


def expected_utilities(U, p) -> np.ndarray:
    """Expected utility of every decision, ``U @ p``.

    ``p`` may be a single probability vector or a batch of shape (n, C);
    the result then has shape (n, decisions).
    """
    U = utility_matrix(U)
    p = np.asarray(p) if not isinstance(p, np.ndarray) else p
    if p.shape[-1] != U.shape[1]:
        raise DimensionError(
            f"utility matrix has {U.shape[1]} class columns, probabilities have {p.shape[-1]}"
        )
    if U.dtype == object or p.dtype == object:
        if p.ndim == 1:
            return np.array([sum(u * q for u, q in zip(row, p)) for row in U], dtype=object)
        return np.array([expected_utilities(U, row) for row in p])
    return p @ U.T


@dataclass(frozen=True)
class DecisionOutcome:
    chosen: int
    tie_set: tuple[int, ...]
    expected_utilities: tuple

    @property
    def is_tie(self) -> bool:
        return len(self.tie_set) > 1


def _tie_sets(eu: np.ndarray) -> list[tuple[int, ...]]:
    best = eu.max(axis=-1)
    hits = eu == best[..., None]
    return [tuple(np.flatnonzero(row).tolist()) for row in np.atleast_2d(hits)]


def choose(U, p, tie_rule=TieRule.REPORT, rng=None):
    """Decision(s) with the largest expected utility.

    Parameters
    ----------
    U : array_like (decisions, classes)
    p : array_like (classes,) or (n, classes)
    tie_rule : TieRule or str
        ``report-tie`` and ``split-half`` both choose the lowest index of
        the tie set and expose the whole set; ``split-half`` is meant for
        confusion accounting (see :func:`evaluate.accumulate_confusion`).
        ``seeded-uniform`` picks one tied decision with ``rng``.
    rng : numpy Generator or int seed, required for ``seeded-uniform``

    Returns
    -------
    DecisionOutcome, or a list of them for a batch of ``p``.
    """
    tie_rule = TieRule(tie_rule)
    if tie_rule is TieRule.SEEDED_UNIFORM:
        if rng is None:
            raise ValueError("seeded-uniform tie breaking needs an rng or seed")
        rng = np.random.default_rng(rng)
    eu = expected_utilities(U, p)
    single = eu.ndim == 1
    rows = np.atleast_2d(eu)
    outcomes = []
    for row, ties in zip(rows, _tie_sets(rows)):
        pick = ties[0]
        if tie_rule is TieRule.SEEDED_UNIFORM and len(ties) > 1:
            pick = ties[int(rng.integers(len(ties)))]
        outcomes.append(DecisionOutcome(pick, ties, tuple(row.tolist())))
    return outcomes[0] if single else outcomes


def choose_indices(U, p) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized argmax: (lowest maximizing decision, tie mask) per row."""
    eu = np.atleast_2d(expected_utilities(U, p))
    best = eu.max(axis=1, keepdims=True)
    hits = eu == best
    return hits.argmax(axis=1), hits.sum(axis=1) > 1


def decision_threshold(U):
    """Probability of class 1 above which decision 1 beats decision 0.

    For a 2x2 matrix with ``U00 > U10`` and ``U11 > U01`` this is
    ``(U00 - U10) / ((U00 - U10) + (U11 - U01))``; at exactly the
    threshold the two decisions tie. Returns a :class:`Threshold`
    sentinel when one row weakly dominates the other for every ``p``.
    Fraction inputs give a Fraction.
    """
    U = utility_matrix(U)
    if U.shape != (2, 2):
        raise DimensionError("thresholds are defined for 2x2 utility matrices")
    gain0 = U[0, 0] - U[1, 0]
    gain1 = U[1, 1] - U[0, 1]
    if gain0 == 0 and gain1 == 0:
        return Threshold.INDIFFERENT
    if gain0 >= 0 and gain1 <= 0:
        return Threshold.NEVER
    if gain0 <= 0 and gain1 >= 0:
        return Threshold.ALWAYS
    if gain0 < 0 and gain1 < 0:
        raise ValueError(
            "decision 1 wins below the cut, not above it; swap the rows to get a threshold"
        )
    return gain0 / (gain0 + gain1)


def canonical_form(U) -> np.ndarray:
    """Equivalent matrix with minimum entry 0 and maximum entry 1."""
    U = utility_matrix(U)
    lo, hi = U.min(), U.max()
    if hi == lo:
        raise NoScaleError("a constant utility matrix has no canonical scale")
    out = (U - lo) / (hi - lo)
    if out.dtype != object:
        # pin the extremes exactly; the affine map can be off by an ulp
        out[U == lo] = 0.0
        out[U == hi] = 1.0
    return out


# (row, col) of the entry fixed to 1, of the entry fixed to 0, then the two
# free entries (a, b); the last field says whether a > b is required.
_UTILITY_REGIONS = (
    ((0, 0), (1, 0), (1, 1), (0, 1), True),
    ((0, 0), (0, 1), (1, 1), (1, 0), False),
    ((1, 1), (0, 1), (0, 0), (1, 0), True),
    ((1, 1), (1, 0), (0, 0), (0, 1), False),
)
_REGION_AREAS = np.array([0.5, 1.0, 0.5, 1.0])


def sample_utility_space(n: int, seed) -> list[np.ndarray]:
    """Draw ``n`` canonical 2x2 utility matrices uniformly.

    Each matrix has entries in [0, 1] with minimum 0 and maximum 1 and
    favours the correct decision in both columns (``U00 > U10`` and
    ``U11 > U01``), so the maximum sits on the diagonal and the minimum
    off it. The two remaining entries are uniform over the region the
    constraints leave free; the four placements of the extremes are
    drawn in proportion to the area of their regions.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    regions = rng.choice(4, size=n, p=_REGION_AREAS / _REGION_AREAS.sum())
    out = []
    for r in regions:
        one, zero, free_a, free_b, ordered = _UTILITY_REGIONS[r]
        while True:
            a, b = rng.random(2)
            # open interval: a draw of exactly 0 would tie the column
            if a > 0 and b < 1 and (a > b or not ordered):
                break
        U = np.empty((2, 2))
        U[one], U[zero], U[free_a], U[free_b] = 1.0, 0.0, a, b
        out.append(U)
    return out


def check_columns(U, n_classes: int) -> np.ndarray:
    U = utility_matrix(U)
    if U.shape[1] != n_classes:
        raise DimensionError(f"utility matrix has {U.shape[1]} columns for {n_classes} classes")
    return U
