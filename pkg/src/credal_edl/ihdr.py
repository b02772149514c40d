"""Imprecise highest-density regions and the CDEC predict/abstain rule."""

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import PredictiveEnsemble
from .credal import (DUP_TOL, HULL_TOL, OPT_MAX_ITERS, OPT_TOL, CredalSet,
                     UncertaintyDecomposition, _label_array,
                     entropy_decomposition, reduce_to_extremes)
from .exceptions import TooManyClasses

EXACT_MAX_K = 20
# slack allowed when comparing a coverage against 1 - gamma
COVER_TOL = 1e-12
_CHUNK = 16384


class DecisionKind(str, enum.Enum):
    PREDICT = "predict"
    ABSTAIN_ALEATORIC = "abstain_aleatoric"
    ABSTAIN_EPISTEMIC = "abstain_epistemic"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Ihdr:
    """A label region whose lower probability is at least ``1 - gamma``."""

    labels: frozenset
    achieved_lower_prob: float
    gamma: float
    method: str = "greedy"

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(y) for y in self.labels))

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def sorted_labels(self):
        return sorted(self.labels)


@dataclass(frozen=True)
class Decision:
    """Outcome of the credal (CDEC) decision rule for one input."""

    kind: DecisionKind
    region: Optional[Ihdr]
    decomposition: UncertaintyDecomposition
    slack: float
    au_ratio: float
    credal_set: Optional[CredalSet] = field(default=None, compare=False, repr=False)

    @property
    def n_extremes(self):
        return None if self.credal_set is None else self.credal_set.n_extremes


def _threshold(gamma):
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return 1.0 - gamma


def greedy_order(cs):
    """Labels by decreasing singleton lower probability.

    Ties fall back to decreasing upper probability, then ascending index, so
    that labels no extreme point supports come last.
    """
    lo = cs.singleton_lower()
    hi = cs.singleton_upper()
    return np.lexsort((np.arange(cs.k), -hi, -lo))


def ihdr_greedy(cs, gamma):
    """Grow a region label by label until its lower probability reaches ``1 - gamma``.

    Always covers; not guaranteed to have minimum size (see :func:`ihdr_exact`).
    ``gamma = 1`` yields the single top label.
    """
    thr = _threshold(gamma)
    masses = np.zeros(cs.n_extremes)
    chosen = []
    achieved = 0.0
    for y in greedy_order(cs):
        chosen.append(int(y))
        masses += cs.extremes[:, y]
        achieved = 1.0 if len(chosen) == cs.k else float(masses.min())
        if achieved >= thr - COVER_TOL:
            break
    return Ihdr(frozenset(chosen), achieved, gamma, "greedy")


def _combinations(k, c):
    it = itertools.combinations(range(k), c)
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.int64)


def ihdr_exact(cs, gamma):
    """Minimum-cardinality region meeting the lower-probability threshold.

    Sizes are scanned upward.  A size ``c`` is skipped outright when even the
    ``c`` heaviest labels of some extreme point cannot reach ``1 - gamma``.
    Among minimum-size regions the one with the largest lower probability
    wins, then the lexicographically smallest.
    """
    k = cs.k
    if k > EXACT_MAX_K:
        raise TooManyClasses(f"exact IHDR search is limited to k <= {EXACT_MAX_K}, got {k}")
    thr = _threshold(gamma)
    P = cs.extremes
    top = np.cumsum(-np.sort(-P, axis=1), axis=1)
    for c in range(1, k + 1):
        if c == k:
            return Ihdr(frozenset(range(k)), 1.0, gamma, "exact")
        if top[:, c - 1].min() < thr - COVER_TOL:
            continue
        best, best_val = None, -math.inf
        for combos in _combinations(k, c):
            vals = P[:, combos].sum(axis=2).min(axis=0)
            ok = np.flatnonzero(vals >= thr - COVER_TOL)
            if ok.size == 0:
                continue
            i = ok[np.argmax(vals[ok])]
            if vals[i] > best_val + COVER_TOL:
                best, best_val = combos[i], float(vals[i])
        if best is not None:
            return Ihdr(frozenset(best.tolist()), best_val, gamma, "exact")
    raise AssertionError("unreachable: the full label set always covers")


def ihdr_lower_bound(cs, subset):
    """Sum of singleton lower probabilities; never exceeds the set's lower probability."""
    idx = _label_array(cs, subset)
    return float(cs.singleton_lower()[idx].sum())


def cdec_point_prediction(cs, tol=COVER_TOL):
    """Labels with the highest lower probability (all of them on ties)."""
    lo = cs.singleton_lower()
    return frozenset(np.flatnonzero(lo >= lo.max() - tol).tolist())


def cdec_decide(ensemble, gamma, epsilon, exact_ihdr=False, exact_tu=False,
                dup_tol=DUP_TOL, hull_tol=HULL_TOL, opt_tol=OPT_TOL,
                max_iters=OPT_MAX_ITERS):
    """Credal decision rule: predict an IHDR or abstain, tagging the cause.

    The slack ``log2(k) - tu_upper_loose`` is compared with ``epsilon``.
    On abstention the cause is aleatoric when ``au / tu_upper_loose >= 1/2``
    (a zero denominator counts as ratio 1), epistemic otherwise.

    Parameters
    ----------
    ensemble : PredictiveEnsemble or array-like of shape (S, k)
    gamma : float
        Miscoverage level in ``[0, 1]``.
    epsilon : float
        Required margin below the maximum entropy ``log2(k)``.
    exact_ihdr : bool
        Use :func:`ihdr_exact` (``k <= 20``) instead of the greedy region.
    exact_tu : bool
        Also compute the upper entropy numerically; reported only.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _threshold(gamma)
    if not isinstance(ensemble, PredictiveEnsemble):
        ensemble = PredictiveEnsemble.from_members(ensemble)
    cs = reduce_to_extremes(ensemble, dup_tol, hull_tol)
    dec = entropy_decomposition(cs, exact_tu, opt_tol, max_iters)
    slack = math.log2(cs.k) - dec.tu_upper_loose
    ratio = 1.0 if dec.tu_upper_loose <= 0.0 else dec.au / dec.tu_upper_loose
    if slack >= epsilon:
        region = ihdr_exact(cs, gamma) if exact_ihdr else ihdr_greedy(cs, gamma)
        kind = DecisionKind.PREDICT
    else:
        region = None
        kind = (DecisionKind.ABSTAIN_ALEATORIC if ratio >= 0.5
                else DecisionKind.ABSTAIN_EPISTEMIC)
    return Decision(kind, region, dec, slack, ratio, cs)


__all__ = [
    "DecisionKind", "Ihdr", "Decision", "ihdr_greedy", "ihdr_exact",
    "ihdr_lower_bound", "cdec_point_prediction", "cdec_decide", "greedy_order",
]
