"""Calibration, OoD-separation and region metrics."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .exceptions import EmptyInput, MissingField, SingleClass

SCORE_KINDS = ("au", "eu", "tu", "conf")


@dataclass
class ScoredSample:
    id: str
    scores: dict = field(default_factory=dict)
    is_ood: bool = False
    true_label: Optional[int] = None
    predicted_label: Optional[int] = None
    region: Optional[frozenset] = None

    def __post_init__(self):
        conf = self.scores.get("conf")
        if conf is not None and not 0.0 <= conf <= 1.0:
            raise ValueError(f"conf score must lie in [0, 1], got {conf}")


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    bins: list
    n_bins: int


@dataclass(frozen=True)
class OodReport:
    scores: dict
    n_id: int
    n_ood: int


def calibration_bins(conf, correct, n_bins=15):
    """Equal-width confidence bins on ``[0, 1]``; the last bin is closed on the right.

    Returns ``(ece, bins)`` where each bin is ``(mean_conf, accuracy, weight)``
    and empty bins are omitted.
    """
    conf = np.asarray(conf, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    if conf.size == 0:
        raise EmptyInput("no samples to calibrate")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    which = np.clip(np.floor(conf * n_bins).astype(np.int64), 0, n_bins - 1)
    n = conf.size
    bins, ece = [], 0.0
    for b in range(n_bins):
        sel = which == b
        cnt = int(sel.sum())
        if cnt == 0:
            continue
        mc, acc, w = float(conf[sel].mean()), float(correct[sel].mean()), cnt / n
        bins.append((mc, acc, w))
        ece += w * abs(acc - mc)
    return ece, bins


def ece(samples, n_bins=15):
    """Expected calibration error of confidence against top-label correctness."""
    if not samples:
        raise EmptyInput("no samples to calibrate")
    conf, correct = [], []
    for s in samples:
        c = s.scores.get("conf")
        if c is None or s.predicted_label is None or s.true_label is None:
            missing = "conf" if c is None else (
                "predicted_label" if s.predicted_label is None else "true_label")
            raise MissingField(f"ece needs {missing!r} (sample {s.id!r})")
        conf.append(c)
        correct.append(s.predicted_label == s.true_label)
    value, bins = calibration_bins(conf, correct, n_bins)
    return CalibrationReport(value, bins, n_bins)


def auroc_score(scores, is_ood):
    """Probability that an OoD score exceeds an iD score, ties counting half."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_ood, dtype=bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both iD and OoD samples")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, is_ood):
    """Step-interpolated area under the precision-recall curve, OoD as positives."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_ood, dtype=bool)
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == pos.size:
        raise SingleClass("AUPRC needs both iD and OoD samples")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], pos[order]
    # thresholds at distinct scores only
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def auroc_auprc(samples, kind):
    """AUROC and AUPRC for one score kind; ``conf`` is negated before ranking."""
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}")
    scores, labels = [], []
    for s in samples:
        v = s.scores.get(kind)
        if v is None:
            raise MissingField(f"score {kind!r} missing on sample {s.id!r}")
        scores.append(-v if kind == "conf" else v)
        labels.append(bool(s.is_ood))
    return auroc_score(scores, labels), average_precision(scores, labels)


def ood_report(samples, kinds=SCORE_KINDS):
    n_ood = sum(bool(s.is_ood) for s in samples)
    n_id = len(samples) - n_ood
    if n_ood == 0 or n_id == 0:
        raise SingleClass(f"need both iD and OoD samples (n_id={n_id}, n_ood={n_ood})")
    return OodReport({k: auroc_auprc(samples, k) for k in kinds}, n_id, n_ood)


def region_stats(samples):
    """Mean region size and the share of regions containing the true label."""
    if not samples:
        raise EmptyInput("no regions to summarise")
    sizes, hits = [], []
    for s in samples:
        if s.region is None or s.true_label is None:
            raise MissingField(f"region_stats needs region and true_label (sample {s.id!r})")
        sizes.append(len(s.region))
        hits.append(s.true_label in s.region)
    return float(np.mean(sizes)), float(np.mean(hits))


def brier_score(probs, labels):
    """Mean squared distance between pmfs and one-hot labels."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), np.asarray(labels)] = 1.0
    return float(np.mean(np.sum((probs - onehot) ** 2, axis=1)))
