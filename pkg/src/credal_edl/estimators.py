"""scikit-learn style wrappers around the two decision rules.

Both estimators consume predictive distributions rather than raw features:
``X`` has shape ``(n, S, k)`` (``S`` ensemble members per sample) or
``(n, k)`` (one pmf per sample).  ``fit`` learns nothing beyond the label
count; it exists so the objects slot into sklearn pipelines and tooling.
"""

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import PMF_TOL, PredictiveEnsemble, check_ensemble_array
from .credal import DUP_TOL, HULL_TOL, OPT_TOL
from .exceptions import DimensionMismatch, ShapeError
from .ihdr import DecisionKind, cdec_decide
from .interval import idec_decide

ABSTAIN = -1


def check_ensembles(X, tolerance=PMF_TOL):
    """Validate ``X`` and return it as a ``(n, S, k)`` float array."""
    X = check_ensemble_array(X, tolerance)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ShapeError(f"expected (n, k) or (n, S, k), got shape {X.shape}")
    return X


class _DecisionEstimator(ClassifierMixin, TransformerMixin, BaseEstimator):

    def fit(self, X, y=None):
        X = self._check(X, reset=True)
        self.n_classes_ = X.shape[-1]
        self.classes_ = np.arange(self.n_classes_)
        return self

    def _check(self, X, reset=False):
        X = check_ensembles(X)
        if not reset:
            check_is_fitted(self, "n_classes_")
            if X.shape[-1] != self.n_classes_:
                raise DimensionMismatch(
                    f"X has {X.shape[-1]} classes, estimator was fit with {self.n_classes_}")
        return X

    def decide(self, X):
        """Per-sample decision objects, in input order."""
        X = self._check(X)
        n_jobs = getattr(self, "n_jobs", None)
        if n_jobs in (None, 1):
            return [self._decide_one(x) for x in X]
        return Parallel(n_jobs=n_jobs)(delayed(self._decide_one)(x) for x in X)

    def predict_region(self, X):
        """Boolean ``(n, k)`` mask of the predicted region; all-False rows abstain."""
        decisions = self.decide(X)
        mask = np.zeros((len(decisions), self.n_classes_), dtype=bool)
        for i, d in enumerate(decisions):
            if d.region is not None:
                mask[i, sorted(d.region.labels)] = True
        return mask

    def decision_kinds(self, X):
        return np.array([d.kind.value for d in self.decide(X)], dtype=object)

    def predict_proba(self, X):
        """Mean pmf over ensemble members."""
        return self._check(X).mean(axis=1)

    def predict(self, X):
        """Most probable label of the mean pmf, or ``-1`` where the rule abstains."""
        X = self._check(X)
        labels = X.mean(axis=1).argmax(axis=1)
        kinds = self.decision_kinds(X)
        return np.where(kinds == DecisionKind.PREDICT.value, labels, ABSTAIN)

    def transform(self, X):
        """``(n, 3)`` array of aleatoric, epistemic and total uncertainty."""
        return np.array([[d.decomposition.au, d.decomposition.eu, d.decomposition.tu]
                         for d in self.decide(X)], dtype=np.float64).reshape(-1, 3)

    def _more_tags(self):
        return {"requires_y": False}


class CredalEvidentialClassifier(_DecisionEstimator):
    """Predict an imprecise highest-density region or abstain.

    The ensemble members are reduced to the extreme points of their convex
    hull; uncertainty is measured by lower and upper Shannon entropy.

    Parameters
    ----------
    gamma : float, default=0.05
        Miscoverage level; regions have lower probability at least ``1 - gamma``.
    epsilon : float, default=0.1
        Predict only when ``log2(k)`` exceeds the upper entropy bound by this much.
    exact_ihdr : bool, default=False
        Minimum-cardinality region search instead of the greedy one.
    exact_tu : bool, default=True
        Report the numerically maximised upper entropy as TU (EU = TU - AU).
    n_jobs : int, optional
        joblib workers for per-sample decisions.

    Examples
    --------
    >>> import numpy as np
    >>> pad = [0.0] * 5
    >>> X = np.array([[[0.9, 0.05, 0.05] + pad, [0.85, 0.1, 0.05] + pad]])
    >>> est = CredalEvidentialClassifier(epsilon=0.5).fit(X)
    >>> est.predict(X)
    array([0])
    >>> np.flatnonzero(est.predict_region(X)[0])
    array([0, 1])
    """

    def __init__(self, gamma=0.05, epsilon=0.1, exact_ihdr=False, exact_tu=True,
                 dup_tol=DUP_TOL, hull_tol=HULL_TOL, opt_tol=OPT_TOL, n_jobs=None):
        self.gamma = gamma
        self.epsilon = epsilon
        self.exact_ihdr = exact_ihdr
        self.exact_tu = exact_tu
        self.dup_tol = dup_tol
        self.hull_tol = hull_tol
        self.opt_tol = opt_tol
        self.n_jobs = n_jobs

    def _decide_one(self, x):
        return cdec_decide(PredictiveEnsemble(x), self.gamma, self.epsilon,
                           exact_ihdr=self.exact_ihdr, exact_tu=self.exact_tu,
                           dup_tol=self.dup_tol, hull_tol=self.hull_tol,
                           opt_tol=self.opt_tol)


class IntervalEvidentialClassifier(_DecisionEstimator):
    """Interval-of-measures rule on a single predictive pmf per sample.

    Parameters
    ----------
    gamma : float, default=0.05
    epsilon : float, default=0.1
        Required margin of the inflated variance below that of the inflated
        uniform distribution.
    collapse_ensemble : bool, default=False
        Accept ``S > 1`` inputs by keeping only the first member.
    """

    def __init__(self, gamma=0.05, epsilon=0.1, collapse_ensemble=False, n_jobs=None):
        self.gamma = gamma
        self.epsilon = epsilon
        self.collapse_ensemble = collapse_ensemble
        self.n_jobs = n_jobs

    def _check(self, X, reset=False):
        X = super()._check(X, reset)
        if X.shape[1] > 1:
            if not self.collapse_ensemble:
                raise ShapeError(f"the interval rule takes one pmf per sample, got S={X.shape[1]}")
            X = X[:, :1, :]
        return X

    def _decide_one(self, x):
        return idec_decide(x[0], self.gamma, self.epsilon)

    def inflation(self, X):
        """Per-sample optimal inflation ``d*`` (``inf`` where coverage is degenerate)."""
        return np.array([d.d_star for d in self.decide(X)], dtype=np.float64)


__all__ = ["CredalEvidentialClassifier", "IntervalEvidentialClassifier",
           "check_ensembles", "ABSTAIN"]
