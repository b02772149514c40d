"""Credal and interval decision rules for evidential classifiers.

An ensemble of categorical predictive distributions is turned into a credal
set (the convex hull of the members) or, for a single distribution, an
interval of measures.  Both yield an aleatoric/epistemic uncertainty split
and a predict-a-region-or-abstain decision.
"""

from .core import (LabelSet, PredictiveEnsemble, categorical_variance, entropy,
                   uniform_categorical_variance, measure_entropy, posterior_predictive,
                   validate_pmf)
from .credal import (CredalSet, UncertaintyDecomposition, entropy_decomposition,
                     exact_upper_entropy, generalized_hartley, hartley_decomposition,
                     lower_probability, reduce_to_extremes, upper_probability)
from .estimators import CredalEvidentialClassifier, IntervalEvidentialClassifier
from .exceptions import CredalError, DataError, NumericalError
from .ihdr import (Decision, DecisionKind, Ihdr, cdec_decide, ihdr_exact,
                   ihdr_greedy)
from .interval import (IntervalModel, conservativeness, idec_decide,
                       interval_lower_upper, optimal_d, precise_hdr,
                       variance_decomposition, xi_of_d)
from .metrics import auroc_auprc, ece, region_stats

__version__ = "0.1.0"

__all__ = [
    "LabelSet", "PredictiveEnsemble", "categorical_variance", "entropy",
    "uniform_categorical_variance", "measure_entropy", "posterior_predictive", "validate_pmf",
    "CredalSet", "UncertaintyDecomposition", "entropy_decomposition",
    "exact_upper_entropy", "generalized_hartley", "hartley_decomposition",
    "lower_probability", "reduce_to_extremes", "upper_probability",
    "CredalEvidentialClassifier", "IntervalEvidentialClassifier",
    "CredalError", "DataError", "NumericalError",
    "Decision", "DecisionKind", "Ihdr", "cdec_decide", "ihdr_exact", "ihdr_greedy",
    "IntervalModel", "conservativeness", "idec_decide", "interval_lower_upper",
    "optimal_d", "precise_hdr", "variance_decomposition", "xi_of_d",
    "auroc_auprc", "ece", "region_stats",
]
