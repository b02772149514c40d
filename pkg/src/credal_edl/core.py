"""Probability-vector primitives.

Categorical pmfs are plain 1-D ``float64`` numpy arrays; ensembles are 2-D
arrays with one member per row.  Entropies are in bits and follow the
``0 * log2(0) = 0`` convention.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DimensionError, DimensionMismatch, NonFinite, NotAPmf

PMF_TOL = 1e-9


@dataclass(frozen=True)
class LabelSet:
    """The label space ``{0, ..., k-1}`` with optional display names."""

    k: int
    names: Optional[tuple] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise DimensionError(f"need k >= 2 classes, got {self.k!r}")
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != self.k or len(set(names)) != self.k:
                raise DimensionError("names must hold exactly k distinct entries")
            object.__setattr__(self, "names", names)

    def index(self, name):
        if self.names is None:
            raise KeyError(name)
        return self.names.index(name)

    def name(self, index):
        return str(index) if self.names is None else self.names[index]


def _renormalize(p):
    # Repeat until the exactly-rounded sum is 1 so that a second call is a no-op.
    for _ in range(4):
        total = math.fsum(p)
        if total == 1.0:
            break
        p = p / total
        resid = 1.0 - math.fsum(p)
        if resid != 0.0:
            i = int(np.argmax(p))
            p[i] = max(p[i] + resid, 0.0)
    return p


def validate_pmf(raw, tolerance=PMF_TOL):
    """Check that ``raw`` is a probability vector and return a clean copy.

    Entries may undershoot zero or the total may miss one by at most
    ``tolerance``; such slack is clamped and renormalized away.

    Raises
    ------
    DimensionError
        If ``raw`` is not 1-D or has fewer than two entries.
    NonFinite
        If an entry is NaN or infinite.
    NotAPmf
        If an entry is below ``-tolerance`` or the sum is off by more than
        ``tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    p = np.array(raw, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise DimensionError(f"a pmf needs a 1-D vector of length >= 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NonFinite("pmf has non-finite entries")
    if p.min() < -tolerance:
        raise NotAPmf(f"negative entry {p.min():.3g}")
    total = math.fsum(p)
    if abs(total - 1.0) > tolerance:
        raise NotAPmf(f"entries sum to {total:.12g}, not 1")
    p = np.clip(p, 0.0, None)
    return _renormalize(p)


def check_ensemble_array(X, tolerance=PMF_TOL):
    """Validate a stack of pmfs along the last axis.

    Accepts any array of shape ``(..., k)`` and returns a renormalized
    ``float64`` copy.  Row-wise vectorised version of :func:`validate_pmf`.
    """
    X = np.array(X, dtype=np.float64)
    if X.ndim == 0 or X.shape[-1] < 2:
        raise DimensionError(f"last axis must hold k >= 2 probabilities, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("input has non-finite entries")
    if X.size and X.min() < -tolerance:
        raise NotAPmf(f"negative entry {X.min():.3g}")
    sums = X.sum(axis=-1)
    bad = np.abs(sums - 1.0) > tolerance
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NotAPmf(f"row {idx} sums to {sums[idx]:.12g}, not 1")
    X = np.clip(X, 0.0, None)
    return X / X.sum(axis=-1, keepdims=True)


def posterior_predictive(counts):
    """Predictive pmf ``(1 + n_j) / sum_l (1 + n_l)`` of a uniform Dirichlet prior.

    ``counts`` are the (possibly fractional) virtual observation counts.
    A 2-D input is treated as one count vector per row.
    """
    c = np.asarray(counts, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise NonFinite("virtual counts must be finite")
    if c.size and c.min() < 0:
        raise NotAPmf("virtual counts must be nonnegative")
    if c.ndim == 0 or c.shape[-1] < 2:
        raise DimensionError("need at least two classes of counts")
    alpha = 1.0 + c
    return alpha / alpha.sum(axis=-1, keepdims=True)


def _xlog2x(w):
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    pos = w > 0
    out[pos] = w[pos] * np.log2(w[pos])
    return out


def entropy(p):
    """Shannon entropy in bits along the last axis.

    >>> entropy([0.5, 0.25, 0.25])
    1.5
    """
    h = -_xlog2x(p).sum(axis=-1)
    # -0.0 for point masses
    h = h + 0.0
    return float(h) if np.ndim(h) == 0 else h


def measure_entropy(weights):
    """``-sum w log2 w`` for a nonnegative, not necessarily normalized, measure.

    Unlike :func:`entropy` the result can be negative once weights exceed one.
    """
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise NonFinite("weights must be finite")
    if w.size and w.min() < 0:
        raise ValueError("weights must be nonnegative")
    return entropy(w)


def categorical_variance(p):
    """Variance of a categorical variable taking the integer values ``1..k``."""
    p = np.asarray(p, dtype=np.float64)
    j = np.arange(1, p.shape[-1] + 1, dtype=np.float64)
    mean = (p * j).sum(axis=-1)
    var = (p * j * j).sum(axis=-1) - mean * mean
    var = np.maximum(var, 0.0)
    return float(var) if np.ndim(var) == 0 else var


def uniform_categorical_variance(k):
    """Variance of the discrete uniform on ``1..k``: ``(k**2 - 1) / 12``.

    This is the reference level of the interval decision rule.  It is not
    the largest attainable variance: splitting the mass between labels 1
    and ``k`` gives ``(k - 1)**2 / 4``.
    """
    return (k + 1) * (k - 1) / 12.0


@dataclass(frozen=True)
class PredictiveEnsemble:
    """``S`` categorical predictive pmfs over a common label set.

    ``members`` is an ``(S, k)`` array; build it with :meth:`from_members`
    or :meth:`from_counts` to get validation.
    """

    members: np.ndarray
    member_ids: Optional[tuple] = None
    labels: Optional[LabelSet] = field(default=None, compare=False)

    def __post_init__(self):
        m = np.asarray(self.members, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1:
            raise DimensionError(f"ensemble needs shape (S >= 1, k), got {m.shape}")
        if m.shape[1] < 2:
            raise DimensionError("ensemble members need k >= 2")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "members", m)
        if self.member_ids is not None:
            ids = tuple(self.member_ids)
            if len(ids) != m.shape[0]:
                raise DimensionMismatch("member_ids must have one entry per member")
            object.__setattr__(self, "member_ids", ids)
        if self.labels is not None and self.labels.k != m.shape[1]:
            raise DimensionMismatch("label set size disagrees with member dimension")

    @classmethod
    def from_members(cls, members: Sequence, member_ids=None, labels=None,
                     tolerance=PMF_TOL):
        rows = [np.asarray(r, dtype=np.float64) for r in members]
        if not rows:
            raise DimensionError("ensemble needs at least one member")
        k = rows[0].shape
        for r in rows[1:]:
            if r.shape != k:
                raise DimensionMismatch(f"members disagree on k: {k} vs {r.shape}")
        pmfs = [validate_pmf(r, tolerance) for r in rows]
        return cls(np.vstack(pmfs), member_ids, labels)

    @classmethod
    def from_counts(cls, counts, member_ids=None, labels=None):
        c = np.asarray(counts, dtype=np.float64)
        if c.ndim == 1:
            c = c[None, :]
        return cls(posterior_predictive(c), member_ids, labels)

    @property
    def n_members(self):
        return self.members.shape[0]

    @property
    def k(self):
        return self.members.shape[1]

    def head(self, s):
        """The first ``s`` members, as used by the nested-prefix ablation."""
        if not 1 <= s <= self.n_members:
            raise DimensionError(f"cannot take {s} of {self.n_members} members")
        ids = None if self.member_ids is None else self.member_ids[:s]
        return PredictiveEnsemble(self.members[:s], ids, self.labels)
