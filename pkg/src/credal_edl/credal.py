"""Finitely generated credal sets built from predictive ensembles.

A credal set is stored through its extreme points only: lower and upper
probabilities, lower entropy and the entropy bounds are all attained there.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .core import PredictiveEnsemble, entropy
from .exceptions import (ConvergenceFailure, DimensionMismatch,
                         LabelOutOfRange, TooManyClasses)

DUP_TOL = 1e-9
HULL_TOL = 1e-8
OPT_TOL = 1e-6
OPT_MAX_ITERS = 10_000
HARTLEY_MAX_K = 12

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class HullCertificate:
    """Evidence produced while reducing an ensemble to its extreme points.

    Attributes
    ----------
    retained_residuals : dict
        Source index of each extreme -> certified lower bound on its max-abs
        distance to the hull of the other extremes (exceeds ``hull_tol``).
        Exact when a linear program was solved, a bounding-box gap otherwise.
    combinations : dict
        Source index of each discarded member -> ``(source_indices, weights,
        residual)``: convex weights over retained extremes reconstructing it.
    """

    retained_residuals: dict
    combinations: dict


@dataclass(frozen=True)
class CredalSet:
    """Extreme points of a finitely generated credal set.

    ``extremes`` is an ``(M, k)`` array.  Instances built directly are
    trusted as given; :func:`reduce_to_extremes` is the certified route.
    """

    extremes: np.ndarray
    source_indices: tuple = None
    certificate: Optional[HullCertificate] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        e = np.array(self.extremes, dtype=np.float64)
        if e.ndim == 1:
            e = e[None, :]
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 2:
            raise DimensionMismatch(f"extremes need shape (M >= 1, k >= 2), got {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "extremes", e)
        src = self.source_indices
        src = tuple(range(e.shape[0])) if src is None else tuple(int(i) for i in src)
        if len(src) != e.shape[0]:
            raise DimensionMismatch("one source index per extreme is required")
        object.__setattr__(self, "source_indices", src)

    @property
    def k(self):
        return self.extremes.shape[1]

    @property
    def n_extremes(self):
        return self.extremes.shape[0]

    def singleton_lower(self):
        """Lower probability of every singleton, ``min_s P_s(y)``."""
        return self.extremes.min(axis=0)

    def singleton_upper(self):
        return self.extremes.max(axis=0)


@dataclass(frozen=True)
class UncertaintyDecomposition:
    """Aleatoric / epistemic / total uncertainty of a credal set, in bits."""

    au: float
    tu_lower: float
    tu_upper_loose: float
    tu_upper_tight: float
    eu_lower: float
    eu_upper: float
    tu_exact: Optional[float] = None
    measure: str = "entropy"

    @property
    def tu(self):
        """Best available total-uncertainty value: exact if computed, else the loose bound."""
        return self.tu_upper_loose if self.tu_exact is None else self.tu_exact

    @property
    def eu(self):
        return self.eu_upper if self.tu_exact is None else max(self.tu_exact - self.au, 0.0)


def _hull_residual(vertices, x):
    """Smallest max-abs distance from ``x`` to ``conv(vertices)`` and its weights."""
    n = vertices.shape[0]
    if n == 1:
        return float(np.abs(vertices[0] - x).max()), np.ones(1)
    k = vertices.shape[1]
    vt = vertices.T
    # variables: n convex weights, then the residual bound t
    c = np.zeros(n + 1)
    c[-1] = 1.0
    a_ub = np.block([[vt, -np.ones((k, 1))], [-vt, -np.ones((k, 1))]])
    b_ub = np.concatenate([x, -x])
    a_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (n + 1), method="highs")
    if res.status != 0:
        # infeasibility is impossible; treat solver trouble as "not redundant"
        return math.inf, np.full(n, 1.0 / n)
    w = np.clip(res.x[:n], 0.0, None)
    w /= w.sum()
    return float(np.abs(w @ vertices - x).max()), w


def _box_gap(vertices, x):
    """Lower bound on the max-abs distance from ``x`` to ``conv(vertices)``."""
    above = x - vertices.max(axis=0)
    below = vertices.min(axis=0) - x
    return float(max(above.max(), below.max(), 0.0))


def _outside_distance(vertices, x, hull_tol):
    gap = _box_gap(vertices, x)
    if gap > hull_tol:
        return gap
    return _hull_residual(vertices, x)[0]


def reduce_to_extremes(ensemble, dup_tol=DUP_TOL, hull_tol=HULL_TOL):
    """Keep only the ensemble members that are vertices of its convex hull.

    Near-duplicates (max-abs difference ``<= dup_tol``) collapse onto the
    lowest index.  Every remaining member is tested for membership in the
    hull of the others by a small linear program minimising the max-abs
    reconstruction error; members within ``hull_tol`` are dropped.

    Parameters
    ----------
    ensemble : PredictiveEnsemble or array-like of shape (S, k)
    dup_tol, hull_tol : float

    Returns
    -------
    CredalSet
        With a :class:`HullCertificate` attached.
    """
    if not isinstance(ensemble, PredictiveEnsemble):
        ensemble = PredictiveEnsemble.from_members(ensemble)
    if dup_tol <= 0 or hull_tol <= 0:
        raise ValueError("tolerances must be positive")
    P = ensemble.members
    S = P.shape[0]

    unique = []
    duplicate_of = {}
    for i in range(S):
        for j in unique:
            if np.abs(P[i] - P[j]).max() <= dup_tol:
                duplicate_of[i] = j
                break
        else:
            unique.append(i)

    active = list(unique)
    for i in unique:
        # two points further apart than dup_tol are both vertices
        if len(active) <= 2:
            break
        others = [j for j in active if j != i]
        if _outside_distance(P[others], P[i], hull_tol) <= hull_tol:
            active.remove(i)

    # certify discarded points against the final vertex set; re-admit any
    # whose accumulated error exceeds the tolerance
    combinations = {}
    while True:
        readmit = None
        combinations.clear()
        for i in unique:
            if i in active:
                continue
            resid, w = _hull_residual(P[active], P[i])
            if resid > hull_tol:
                readmit = i
                break
            combinations[i] = (tuple(active), w, resid)
        if readmit is None:
            break
        active = sorted(active + [readmit])
    for i, j in duplicate_of.items():
        gap = float(np.abs(P[i] - P[j]).max())
        if j in combinations:
            idx, w, resid = combinations[j]
            combinations[i] = (idx, w, resid + gap)
        else:
            combinations[i] = ((j,), np.ones(1), gap)

    retained = {}
    for i in active:
        others = [j for j in active if j != i]
        retained[i] = _outside_distance(P[others], P[i], hull_tol) if others else math.inf

    cert = HullCertificate(retained, dict(sorted(combinations.items())))
    return CredalSet(P[active], tuple(active), cert)


def _label_array(cs, subset):
    idx = np.fromiter((int(y) for y in subset), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= cs.k):
        raise LabelOutOfRange(f"labels must lie in 0..{cs.k - 1}, got {sorted(set(idx.tolist()))}")
    return np.unique(idx)


def _subset_masses(cs, subset):
    idx = _label_array(cs, subset)
    if idx.size == 0:
        return np.zeros(cs.n_extremes)
    if idx.size == cs.k:
        return np.ones(cs.n_extremes)
    return cs.extremes[:, idx].sum(axis=1)


def lower_probability(cs, subset):
    """``min`` over extreme points of the probability of ``subset``.

    >>> cs = CredalSet([[0.6, 0.3, 0.1], [0.4, 0.4, 0.2]])
    >>> round(lower_probability(cs, {0, 1}), 12)
    0.8
    """
    return float(_subset_masses(cs, subset).min())


def upper_probability(cs, subset):
    """``max`` over extreme points of the probability of ``subset``.

    Computed through conjugacy, ``1 - lower(complement)``, so the identity
    holds bit-for-bit.
    """
    idx = _label_array(cs, subset)
    complement = np.setdiff1d(np.arange(cs.k), idx)
    return 1.0 - lower_probability(cs, complement)


def _log2_sum_exp2(h):
    m = np.max(h)
    return float(m + np.log2(np.sum(np.exp2(h - m))))


def _line_search(q, dq, tmax):
    """Maximise the concave map ``t -> H(q + t*dq)`` on ``[0, tmax]``."""

    def slope(t):
        r = np.maximum(q + t * dq, 1e-300)
        return -float(np.dot(dq, np.log2(r)))

    if slope(0.0) <= 0.0:
        return 0.0
    if slope(tmax) >= 0.0:
        return tmax
    lo, hi = 0.0, tmax
    t = 0.5 * tmax
    for _ in range(100):
        r = np.maximum(q + t * dq, 1e-300)
        g = -float(np.dot(dq, np.log2(r)))
        if g > 0:
            lo = t
        else:
            hi = t
        curv = -float(np.sum(dq * dq / r)) / _LN2
        t_new = t - g / curv if curv < 0 else 0.5 * (lo + hi)
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-15 * max(tmax, 1.0) or hi - lo <= 1e-15:
            return t_new
        t = t_new
    return t


def _newton_on_face(P, beta):
    """One Newton step for ``H(beta @ P)`` restricted to the support of ``beta``.

    Pairwise steps alone zigzag when extremes are nearly affinely dependent
    (a flat valley in weight space); the Newton direction follows the valley.
    """
    A = np.flatnonzero(beta > 0)
    if A.size < 2:
        return beta
    q = beta @ P
    cols = q > 0
    Pa, qc = P[A][:, cols], q[cols]
    grad = -(Pa @ np.log2(qc))
    hess = (Pa / qc) @ Pa.T / _LN2
    n = A.size
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = hess
    kkt[:n, n] = kkt[n, :n] = 1.0
    sol = np.linalg.lstsq(kkt, np.r_[grad, 0.0], rcond=None)[0]
    d = sol[:n]
    neg = d < 0
    if not np.any(neg):
        return beta
    tmax = min(1.0, float(np.min(-beta[A][neg] / d[neg])))
    t = _line_search(q, d @ P[A], tmax)
    if t <= 0.0:
        return beta
    new = beta.copy()
    new[A] += t * d
    new[A[neg & (new[A] <= 1e-15)]] = 0.0
    new = np.clip(new, 0.0, None)
    return new / new.sum()


_FLOORS = (1e-12, 1e-30, 1e-60, 1e-100, 1e-150, 1e-200, 1e-250)


def _floored_bound(P, q):
    """Smallest ``max_s CE(P_s, r)`` over ``r`` = ``q`` floored at a ladder of levels.

    Any distribution ``r`` upper-bounds the maximum entropy through
    ``max_s CE(P_s, r)``.  Using ``q`` itself blows up when a vertex puts
    mass on a label where ``q`` is zero even though the optimal weight on
    that vertex is astronomically small.  Returns the bound together with
    the per-vertex cross entropies at the floor that attains it.
    """
    best, best_cross = math.inf, None
    for eps in _FLOORS:
        r = np.maximum(q, eps)
        r /= r.sum()
        cross = -(P * np.log2(r)).sum(axis=1)
        if cross.max() < best:
            best, best_cross = float(cross.max()), cross
    return best, best_cross


def maximize_mixture_entropy(P, tol=OPT_TOL, max_iters=OPT_MAX_ITERS):
    """Maximise ``H(beta @ P)`` over the probability simplex of weights.

    Pairwise Frank-Wolfe with exact line search, each step followed by a
    Newton step on the current support.  The objective is concave,
    so the Frank-Wolfe gap ``max_s CE(P_s, q) - H(q)`` bounds the distance to
    the optimum and serves as the stopping certificate.  When that gap is
    large the same bound is retried with ``q`` floored away from zero.

    Returns
    -------
    value : float
        Entropy in bits at the final iterate.
    beta : ndarray
        Final mixture weights.
    gap : float
        Certified duality gap at the final iterate.
    """
    P = np.asarray(P, dtype=np.float64)
    M = P.shape[0]
    h = entropy(P)
    h = np.atleast_1d(h)
    beta = np.zeros(M)
    beta[int(np.argmax(h))] = 1.0
    if M == 1:
        return float(h[0]), beta, 0.0
    q = beta @ P
    gap = math.inf
    for _ in range(max_iters):
        logq = np.log2(np.maximum(q, 1e-300))
        cross = -(P * logq).sum(axis=1)
        value = float(-np.dot(q[q > 0], logq[q > 0]))
        s = int(np.argmax(cross))
        gap = float(cross[s] - value)
        if gap > tol:
            bound, fcross = _floored_bound(P, q)
            if bound - value < gap:
                # the clamped log overstates vertices that load labels q lacks;
                # steer by the tighter bound's cross entropies instead
                gap = bound - value
                s = int(np.argmax(fcross))
        if gap <= tol:
            return value, beta, max(gap, 0.0)
        support = np.flatnonzero(beta > 0)
        a = int(support[np.argmin(cross[support])])
        if a == s:
            # only possible when every supported vertex ties with s
            return value, beta, max(gap, 0.0)
        # pairwise step: shift weight from the worst supported vertex to the best one
        t = _line_search(q, P[s] - P[a], beta[a])
        if t >= beta[a]:
            beta[s] += beta[a]
            beta[a] = 0.0
        else:
            beta[s] += t
            beta[a] -= t
        beta = _newton_on_face(P, beta)
        q = beta @ P
    raise ConvergenceFailure(
        f"Frank-Wolfe gap {gap:.3g} above tolerance {tol:.3g} after {max_iters} iterations")


def exact_upper_entropy(cs, tol=OPT_TOL, max_iters=OPT_MAX_ITERS):
    """Upper entropy ``sup_{P in cs} H(P)`` in bits, to within ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return maximize_mixture_entropy(cs.extremes, tol, max_iters)[0]


def entropy_decomposition(cs, exact=False, tol=OPT_TOL, max_iters=OPT_MAX_ITERS):
    """Lower entropy plus closed-form bounds on upper entropy.

    With extreme-point entropies ``h_s`` and ``M`` extremes:

    * ``au = min h_s`` (the lower entropy is attained at a vertex),
    * ``tu_lower = max h_s``,
    * ``tu_upper_tight = log2(sum 2**h_s)``, i.e. ``sup_beta sum beta_s h_s +
      H(beta)`` with maximiser ``beta_s`` proportional to ``2**h_s``,
    * ``tu_upper_loose = max h_s + log2(M)``.

    ``exact=True`` also solves for the upper entropy itself.
    """
    h = np.atleast_1d(entropy(cs.extremes))
    M = h.size
    au = float(h.min())
    tu_lower = float(h.max())
    tight = _log2_sum_exp2(h)
    loose = tu_lower + math.log2(M)
    # guard the chain against last-bit rounding of the two closed forms
    tight = min(max(tight, tu_lower), loose)
    tu_exact = None
    if exact:
        tu_exact = exact_upper_entropy(cs, tol, max_iters)
        tu_exact = min(max(tu_exact, tu_lower), tight)
    return UncertaintyDecomposition(
        au=au,
        tu_lower=tu_lower,
        tu_upper_loose=loose,
        tu_upper_tight=tight,
        eu_lower=max(0.0, tu_lower - au),
        eu_upper=loose - au,
        tu_exact=tu_exact,
    )


def _subset_bits(k):
    masks = np.arange(1 << k, dtype=np.int64)
    return ((masks[:, None] >> np.arange(k)) & 1).astype(bool)


def lower_probability_table(cs):
    """Lower probability of every subset, indexed by bitmask (bit ``j`` = label ``j``)."""
    bits = _subset_bits(cs.k).astype(np.float64)
    return (bits @ cs.extremes.T).min(axis=1)


def mobius_transform(values, k):
    """Möbius inverse over the subset lattice of a set function given by bitmask."""
    m = np.array(values, dtype=np.float64)
    for i in range(k):
        view = m.reshape(-1, 2, 1 << i)
        view[:, 1, :] -= view[:, 0, :]
    return m


def generalized_hartley(cs):
    """Generalized Hartley nonspecificity ``sum_A log2|A| m(A)`` of a credal set.

    ``m`` is the Möbius inverse of the lower probability.  Enumerates the
    power set, so ``k`` is capped at 12.
    """
    k = cs.k
    if k > HARTLEY_MAX_K:
        raise TooManyClasses(f"generalized Hartley enumerates 2**k subsets; k={k} > {HARTLEY_MAX_K}")
    m = mobius_transform(lower_probability_table(cs), k)
    sizes = _subset_bits(k).sum(axis=1)
    logs = np.zeros(sizes.shape)
    logs[sizes > 0] = np.log2(sizes[sizes > 0])
    return float(np.dot(logs, m))


def hartley_decomposition(cs, tol=OPT_TOL, max_iters=OPT_MAX_ITERS):
    """Alternative split ``TU = upper entropy``, ``EU = GH``, ``AU = TU - GH``."""
    tu = exact_upper_entropy(cs, tol, max_iters)
    gh = max(generalized_hartley(cs), 0.0)
    return UncertaintyDecomposition(
        au=tu - gh, tu_lower=tu, tu_upper_loose=tu, tu_upper_tight=tu,
        eu_lower=gh, eu_upper=gh, tu_exact=tu, measure="hartley")


def nonredundant(points, tol=HULL_TOL):
    """True if no row of ``points`` lies in the hull of the others."""
    points = np.asarray(points, dtype=np.float64)
    for i in range(points.shape[0]):
        others = np.delete(points, i, axis=0)
        if others.size and _outside_distance(others, points[i], tol) <= tol:
            return False
    return True


__all__ = [
    "CredalSet", "HullCertificate", "UncertaintyDecomposition",
    "reduce_to_extremes", "lower_probability", "upper_probability",
    "entropy_decomposition", "exact_upper_entropy", "maximize_mixture_entropy",
    "generalized_hartley", "hartley_decomposition", "lower_probability_table",
    "mobius_transform", "nonredundant",
]

