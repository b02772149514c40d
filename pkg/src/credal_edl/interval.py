"""Intervals of measures ``I(l, (1+d) l)`` and the IDEC decision rule.

The base pmf ``l`` comes from a single predictive distribution; ``d`` inflates
it into an upper measure.  Uncertainty is measured by the variance of the
label index (labels valued ``1..k``) rather than by entropy.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import categorical_variance, uniform_categorical_variance, validate_pmf
from .exceptions import DegenerateCoverage, LabelOutOfRange
from .ihdr import DecisionKind, Ihdr

# equality test against 1 - gamma when deciding whether to augment a region
EQ_TOL = 1e-12


def _inflation_scale(d):
    # (1 + d)**2, saturating to inf instead of raising OverflowError
    try:
        return (1.0 + d) ** 2
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class IntervalModel:
    base: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.d) and self.d >= 0):
            raise ValueError(f"inflation d must be finite and >= 0, got {self.d}")
        base = validate_pmf(self.base)
        base.setflags(write=False)
        object.__setattr__(self, "base", base)

    @property
    def k(self):
        return self.base.size

    @property
    def upper_measure(self):
        return (1.0 + self.d) * self.base


@dataclass(frozen=True)
class IntervalDecomposition:
    """Variance split ``tu = au + eu`` with ``tu = (1+d)**2 au``."""

    au: float
    eu: float
    tu: float
    d_used: float


@dataclass(frozen=True)
class IntervalDecision:
    kind: DecisionKind
    region: Optional[Ihdr]
    decomposition: IntervalDecomposition
    d_star: float
    xi: float
    slack: float
    infinite_inflation: bool = False

    @property
    def au_ratio(self):
        """Share of total variance that is aleatoric, ``(1 + d*)**-2``."""
        return 1.0 / _inflation_scale(self.d_star)


def interval_lower_upper(model, subset):
    """Lower and upper probability of ``subset`` under the interval model.

    ``lower = m_A / (m_A + (1+d) m_Ac)`` and
    ``upper = (1+d) m_A / ((1+d) m_A + m_Ac)`` where ``m`` is base mass.
    A subset with no base mass gets ``(0, 0)``, its limiting value.
    """
    idx = np.unique(np.fromiter((int(y) for y in subset), dtype=np.int64))
    if idx.size and (idx.min() < 0 or idx.max() >= model.k):
        raise LabelOutOfRange(f"labels must lie in 0..{model.k - 1}")
    inside = np.zeros(model.k, dtype=bool)
    inside[idx] = True
    m_a = float(model.base[inside].sum())
    m_c = float(model.base[~inside].sum())
    if m_a <= 0.0:
        return 0.0, 0.0
    if m_c <= 0.0:
        return 1.0, 1.0
    f = 1.0 + model.d
    return m_a / (m_a + f * m_c), f * m_a / (f * m_a + m_c)


def xi_of_d(gamma, d):
    """Miscoverage ``gamma / (1 + (1 - gamma) d)`` of the equivalent precise region."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if d < 0:
        raise ValueError("d must be >= 0")
    if math.isinf(d):
        return 0.0 if gamma < 1.0 else 1.0
    return gamma / (1.0 + (1.0 - gamma) * d)


def _hdr_order(p):
    return np.lexsort((np.arange(p.size), -p))


def precise_hdr(p, xi):
    """Smallest set of most probable labels with mass at least ``1 - xi``.

    ``xi = 1`` returns the single most probable label rather than the empty set.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    p = np.asarray(p, dtype=np.float64)
    order = _hdr_order(p)
    cum = np.cumsum(p[order])
    n = int(np.searchsorted(cum, 1.0 - xi - EQ_TOL, side="left")) + 1
    n = min(max(n, 1), p.size)
    return frozenset(order[:n].tolist())


def augmented_region(p, gamma):
    """HDR at level ``gamma``, plus the next most probable label when its mass ties ``1 - gamma``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    p = np.asarray(p, dtype=np.float64)
    region = precise_hdr(p, gamma)
    mass = float(p[sorted(region)].sum())
    if mass > 1.0 - gamma + EQ_TOL or len(region) == p.size:
        return region
    outside = np.array(sorted(set(range(p.size)) - region))
    nxt = int(outside[np.argmax(p[outside])])
    return region | {nxt}


def optimal_d(p, gamma):
    """Inflation ``d*`` matching the interval IHDR to the augmented region's coverage.

    Returns
    -------
    d_star, xi : float
        ``xi`` is the mass outside the augmented region and
        ``d_star = (gamma - xi) / (xi (1 - gamma))``.

    Raises
    ------
    DegenerateCoverage
        When the augmented region holds all the mass (``xi = 0``).

    Examples
    --------
    >>> d, xi = optimal_d([0.7, 0.2, 0.08, 0.02], 0.05)
    >>> round(xi, 12), round(d, 6)
    (0.02, 1.578947)
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    p = np.asarray(p, dtype=np.float64)
    region = augmented_region(p, gamma)
    outside = sorted(set(range(p.size)) - region)
    xi = float(p[outside].sum()) if outside else 0.0
    if xi <= 0.0:
        raise DegenerateCoverage(region=region)
    d_star = max((gamma - xi) / (xi * (1.0 - gamma)), 0.0)
    return d_star, xi


def variance_decomposition(p, d):
    """Split the inflated variance ``(1+d)**2 V`` into ``V`` and ``(d**2 + 2d) V``."""
    if d < 0:
        raise ValueError("d must be >= 0")
    au = categorical_variance(p)
    scale = _inflation_scale(d)
    if math.isinf(scale):
        tu = math.inf if au > 0 else 0.0
        return IntervalDecomposition(au, tu, tu, d)
    return IntervalDecomposition(au, d * (d + 2.0) * au, scale * au, d)


def conservativeness(gamma, d):
    """Excess upper coverage of the interval IHDR over ``1 - gamma``.

    Zero at ``d = 0``, nondecreasing in ``d`` and tending to ``gamma``.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if d < 0:
        raise ValueError("d must be >= 0")
    scale = _inflation_scale(d)
    if math.isinf(scale):
        return gamma
    num = gamma * (1.0 - gamma) * d * (2.0 + d)
    den = (1.0 - gamma) * scale + gamma
    return num / den


def idec_decide(p, gamma, epsilon):
    """Interval decision rule for one predictive pmf.

    The slack ``(1+d*)**2 (V_max - V)`` compares the inflated variance with
    that of the inflated uniform distribution.  Below ``epsilon`` the model
    abstains, aleatoric when ``(1+d*)**-2 >= 1/2``.

    A pmf whose augmented region carries all mass has ``d* = inf``; it is
    reported as an epistemic abstention with ``infinite_inflation`` set.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p = validate_pmf(p)
    k = p.size
    try:
        d_star, xi = optimal_d(p, gamma)
    except DegenerateCoverage:
        dec = variance_decomposition(p, math.inf)
        return IntervalDecision(DecisionKind.ABSTAIN_EPISTEMIC, None, dec,
                                math.inf, 0.0, -math.inf, infinite_inflation=True)
    dec = variance_decomposition(p, d_star)
    scale = _inflation_scale(d_star)
    # scale * (V_max - V) avoids inf - inf when the scale saturates
    gap = uniform_categorical_variance(k) - dec.au
    # negative for pmfs more spread out than the uniform; guard only inf * 0
    slack = scale * gap if gap != 0 else 0.0
    if slack >= epsilon:
        labels = precise_hdr(p, xi_of_d(gamma, d_star))
        lower = interval_lower_upper(IntervalModel(p, d_star), labels)[0]
        region = Ihdr(labels, lower, gamma, "interval")
        return IntervalDecision(DecisionKind.PREDICT, region, dec, d_star, xi, slack)
    kind = (DecisionKind.ABSTAIN_ALEATORIC if 1.0 / scale >= 0.5
            else DecisionKind.ABSTAIN_EPISTEMIC)
    return IntervalDecision(kind, None, dec, d_star, xi, slack)


__all__ = [
    "IntervalModel", "IntervalDecomposition", "IntervalDecision",
    "interval_lower_upper", "xi_of_d", "precise_hdr", "augmented_region",
    "optimal_d", "variance_decomposition", "conservativeness", "idec_decide",
]
