"""Batch drivers behind the command-line verbs.

Each driver reads a file, processes samples independently (optionally in a
joblib worker pool, output order preserved) and writes a report.  Per-sample
failures become error records unless ``strict`` is set.
"""

import logging
import math
import time

import numpy as np
from joblib import Parallel, delayed

from . import data_io
from .exceptions import (CredalError, MissingField, NumericalError,
                         ShapeError, SingleClass)
from .ihdr import DecisionKind, cdec_decide, ihdr_exact, ihdr_greedy
from .interval import (augmented_region, conservativeness, idec_decide,
                       interval_lower_upper, IntervalModel, precise_hdr, xi_of_d)
from .metrics import ScoredSample, ece, ood_report, region_stats

log = logging.getLogger(__name__)

DEFAULT_GRID = (1, 3, 5, 7, 10)
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _top(pmf):
    j = int(np.argmax(pmf))
    return j, float(pmf[j])


def cdec_record(rec, config, ensemble=None):
    """Run the credal rule on one sample and flatten the outcome to a dict.

    ``ihdr`` is computed for every sample so region statistics are available
    for abstentions too; ``region`` is only set on a prediction.  The point
    prediction and ``conf`` come from the ensemble mean.
    """
    ens = rec.to_ensemble() if ensemble is None else ensemble
    d = cdec_decide(ens, config.gamma, config.epsilon, exact_ihdr=config.exact_ihdr,
                    exact_tu=config.exact_tu, dup_tol=config.dup_tol,
                    hull_tol=config.hull_tol, opt_tol=config.opt_tol)
    if d.region is not None:
        ihdr = d.region
    elif config.exact_ihdr:
        ihdr = ihdr_exact(d.credal_set, config.gamma)
    else:
        ihdr = ihdr_greedy(d.credal_set, config.gamma)
    pred, conf = _top(ens.members.mean(axis=0))
    dec = d.decomposition
    return {
        "id": rec.id,
        "mode": "cdec",
        "decision": d.kind.value,
        "region": None if d.region is None else d.region.sorted_labels(),
        "achieved_lower_prob": None if d.region is None else d.region.achieved_lower_prob,
        "ihdr": ihdr.sorted_labels(),
        "ihdr_lower_prob": ihdr.achieved_lower_prob,
        "predicted_label": pred,
        "conf": conf,
        "au": dec.au,
        "eu": dec.eu,
        "tu": dec.tu,
        "tu_lower": dec.tu_lower,
        "tu_upper_tight": dec.tu_upper_tight,
        "tu_upper_loose": dec.tu_upper_loose,
        "eu_lower": dec.eu_lower,
        "eu_upper": dec.eu_upper,
        "slack": d.slack,
        "au_ratio": d.au_ratio,
        "n_members": ens.n_members,
        "n_extremes": d.n_extremes,
        "true_label": rec.true_label,
        "is_ood": rec.is_ood,
    }


def idec_record(rec, config):
    """Run the interval rule on the single posterior of one sample."""
    if rec.n_members > 1 and not config.collapse_ensemble:
        raise ShapeError(f"record {rec.id!r} has {rec.n_members} members; the interval "
                         "rule takes one (use --collapse-ensemble to keep the first)")
    p = rec.to_ensemble().members[0]
    d = idec_decide(p, config.gamma, config.epsilon)
    if d.region is not None:
        ihdr_labels, ihdr_lower = d.region.labels, d.region.achieved_lower_prob
    elif d.infinite_inflation:
        ihdr_labels, ihdr_lower = augmented_region(p, config.gamma), 1.0
    else:
        ihdr_labels = precise_hdr(p, xi_of_d(config.gamma, d.d_star))
        ihdr_lower = interval_lower_upper(IntervalModel(p, d.d_star), ihdr_labels)[0]
    pred, conf = _top(p)
    dec = d.decomposition
    return {
        "id": rec.id,
        "mode": "idec",
        "decision": d.kind.value,
        "region": None if d.region is None else d.region.sorted_labels(),
        "achieved_lower_prob": None if d.region is None else d.region.achieved_lower_prob,
        "ihdr": sorted(ihdr_labels),
        "ihdr_lower_prob": ihdr_lower,
        "predicted_label": pred,
        "conf": conf,
        "au": dec.au,
        "eu": dec.eu,
        "tu": dec.tu,
        "d_star": d.d_star,
        "xi": d.xi,
        "conservativeness": conservativeness(config.gamma, d.d_star),
        "infinite_inflation": d.infinite_inflation,
        "slack": d.slack,
        "au_ratio": d.au_ratio,
        "true_label": rec.true_label,
        "is_ood": rec.is_ood,
    }


def _error_record(rid, mode, exc):
    return {"id": rid, "mode": mode, "decision": "error", "error": str(exc),
            "error_type": type(exc).__name__}


def _safe(fn, rec, config, mode, strict):
    try:
        return fn(rec, config)
    except CredalError as exc:
        if strict:
            raise
        return _error_record(rec.id, mode, exc)


def _map(fn, records, config, mode, strict, jobs):
    if jobs is None or jobs == 1 or len(records) < 2:
        return [_safe(fn, r, config, mode, strict) for r in records]
    return Parallel(n_jobs=jobs)(
        delayed(_safe)(fn, r, config, mode, strict) for r in records)


def _mean(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(values)) if values else None


def scored_samples(records, region_field="region"):
    """Turn successful report records into :class:`ScoredSample` objects."""
    out = []
    for r in records:
        if "error" in r:
            continue
        region = r.get(region_field)
        out.append(ScoredSample(
            id=r["id"],
            scores={k: r[k] for k in ("au", "eu", "tu", "conf") if r.get(k) is not None},
            is_ood=bool(r.get("is_ood")),
            true_label=r.get("true_label"),
            predicted_label=r.get("predicted_label"),
            region=None if region is None else frozenset(region),
        ))
    return out


def _region_block(samples):
    labelled = [s for s in samples if s.region is not None and s.true_label is not None]
    if labelled:
        size, cov = region_stats(labelled)
    else:
        sizes = [len(s.region) for s in samples if s.region is not None]
        size, cov = (float(np.mean(sizes)) if sizes else None), None
    return {"n": len(samples), "mean_size": size, "coverage": cov}


def summarize(records, n_bins=15):
    """Batch summary: decision counts and rates, region statistics and metrics.

    Metrics that the batch cannot support (no labels, a single population)
    are left out rather than raising.
    """
    ok = [r for r in records if "error" not in r]
    failed = [r["id"] for r in records if "error" in r]
    counts = {k.value: 0 for k in DecisionKind}
    for r in ok:
        counts[r["decision"]] += 1
    n = len(ok)
    rate = (lambda c: c / n) if n else (lambda c: 0.0)
    predicted = [r for r in ok if r["decision"] == DecisionKind.PREDICT.value]
    covered = [r["true_label"] in r["region"] for r in predicted if r.get("true_label") is not None]
    summary = {
        "n_samples": len(records),
        "n_errors": len(failed),
        "failed_ids": failed,
        "counts": counts,
        "abstention_rate": {"aleatoric": rate(counts["abstain_aleatoric"]),
                            "epistemic": rate(counts["abstain_epistemic"])},
        "mean_region_size": _mean([len(r["region"]) for r in predicted]),
        "coverage": _mean([float(c) for c in covered]),
        "mean_au": _mean([r["au"] for r in ok]),
        "mean_eu": _mean([r["eu"] for r in ok]),
        "mean_tu": _mean([r["tu"] for r in ok]),
    }
    if ok and "infinite_inflation" in ok[0]:
        summary["n_infinite_inflation"] = sum(bool(r["infinite_inflation"]) for r in ok)
    summary["metrics"] = _soft_metrics(ok, n_bins)
    return summary


def _soft_metrics(ok, n_bins):
    out = {}
    samples = scored_samples(ok, "ihdr")
    if not samples:
        return out
    if all(s.true_label is not None for s in samples):
        out["ece"] = ece(samples, n_bins).ece
    try:
        rep = ood_report(samples)
    except SingleClass:
        pass
    else:
        out["ood"] = {k: {"auroc": a, "auprc": p} for k, (a, p) in rep.scores.items()}
    for name, group in (("id", [s for s in samples if not s.is_ood]),
                        ("ood", [s for s in samples if s.is_ood])):
        if group:
            out[f"ihdr_{name}"] = _region_block(group)
    return out


def exit_status(records):
    """0 when every sample succeeded, 4 if any numerical failure, else 3."""
    errors = [r for r in records if "error" in r]
    if not errors:
        return EXIT_OK
    numerical = {c.__name__ for c in _subclasses(NumericalError)}
    if any(r["error_type"] in numerical for r in errors):
        return EXIT_NUMERICAL
    return EXIT_DATA


def _subclasses(cls):
    out = {cls}
    for sub in cls.__subclasses__():
        out |= _subclasses(sub)
    return out


def _read(path, config, strict):
    """Good records plus ``(line_no, error)`` pairs; ``lines`` maps each good record to its line."""
    records, errors, lines = [], [], []
    for line_no, item in data_io.iter_samples(path, config.pmf_tol):
        if isinstance(item, Exception):
            if strict:
                raise item
            errors.append((line_no, item))
        else:
            records.append(item)
            lines.append(line_no)
    return records, errors, lines


def _process(path, fn, config, mode, strict, jobs):
    """Run ``fn`` over a sample file; error records keep their place in input order."""
    records, errors, lines = _read(path, config, strict)
    results = _map(fn, records, config, mode, strict, jobs)
    # keep the record id when the line got far enough to have one
    failed = [(n, _error_record(getattr(exc, "record", None) or f"line-{n}", mode, exc))
              for n, exc in errors]
    merged = sorted(list(zip(lines, results)) + failed, key=lambda pair: pair[0])
    return [r for _, r in merged]


def _finish(out, mode, started, n_bins, output):
    summary = summarize(out, n_bins)
    data_io.write_report(out, summary, output)
    for r in out:
        if "error" in r:
            log.error("%s: %s", r["id"], r["error"])
    log.info("%s: %d samples, %d errors, %.2fs", mode, len(out),
             summary["n_errors"], time.perf_counter() - started)
    return exit_status(out)


def run_cdec(input_path, config, output, jobs=1, strict=False):
    started = time.perf_counter()
    out = _process(input_path, cdec_record, config, "cdec", strict, jobs)
    return _finish(out, "cdec", started, config.n_bins, output)


def run_idec(input_path, config, output, jobs=1, strict=False):
    started = time.perf_counter()
    out = _process(input_path, idec_record, config, "idec", strict, jobs)
    return _finish(out, "idec", started, config.n_bins, output)


METRIC_GROUPS = ("ece", "ood", "regions")


def compute_metrics(records, n_bins=15, which=METRIC_GROUPS):
    """Strict metrics over a decision report; raises if a requested metric lacks data."""
    ok = [r for r in records if "error" not in r]
    samples = scored_samples(ok, "ihdr")
    out = {"n_samples": len(ok)}
    if "ece" in which:
        for s in samples:
            for field in ("conf", "predicted_label", "true_label"):
                value = s.scores.get(field) if field == "conf" else getattr(s, field)
                if value is None:
                    raise MissingField(f"metric 'ece' needs field {field!r} (sample {s.id!r})")
        rep = ece(samples, n_bins)
        out["ece"] = {"value": rep.ece, "n_bins": rep.n_bins,
                      "bins": [list(b) for b in rep.bins]}
    if "ood" in which:
        for s in samples:
            for kind in ("au", "eu", "tu", "conf"):
                if kind not in s.scores:
                    raise MissingField(f"metric 'ood' needs score {kind!r} (sample {s.id!r})")
        rep = ood_report(samples)
        out["ood"] = {"n_id": rep.n_id, "n_ood": rep.n_ood,
                      **{k: {"auroc": a, "auprc": p} for k, (a, p) in rep.scores.items()}}
    if "regions" in which:
        for s in samples:
            if s.region is None or s.true_label is None:
                field = "ihdr" if s.region is None else "true_label"
                raise MissingField(f"metric 'regions' needs field {field!r} (sample {s.id!r})")
        predicted = scored_samples([r for r in ok if r.get("region") is not None], "region")
        out["regions"] = {
            "ihdr_id": _region_block([s for s in samples if not s.is_ood]),
            "ihdr_ood": _region_block([s for s in samples if s.is_ood]),
            "predicted": _region_block(predicted),
        }
    return out


def run_metrics(input_path, config, output, which=METRIC_GROUPS):
    started = time.perf_counter()
    records, _ = data_io.load_report(input_path)
    result = compute_metrics(records, config.n_bins, which)
    data_io.write_report([], result, output)
    log.info("metrics: %d samples, %.2fs", result["n_samples"], time.perf_counter() - started)
    return EXIT_OK


class _PrefixCdec:
    """CDEC on the first ``s`` members; a class so worker processes can pickle it."""

    def __init__(self, s):
        self.s = s

    def __call__(self, rec, config):
        ens = rec.to_ensemble()
        if self.s > ens.n_members:
            raise ShapeError(f"S={self.s}: record {rec.id!r} has only "
                             f"{ens.n_members} members")
        return cdec_record(rec, config, ens.head(self.s))


def ablation_table(records, config, grid=None, jobs=1, strict=True):
    """CDEC over nested member prefixes ``members[:S]`` for each ``S`` in ``grid``.

    Without an explicit grid the default sizes are cut to the smallest
    ensemble in the batch.
    """
    if grid is None:
        smallest = min((r.n_members for r in records), default=1)
        grid = tuple(s for s in DEFAULT_GRID if s <= smallest) or (1,)
    rows = []
    for s in grid:
        started = time.perf_counter()
        out = _map(_PrefixCdec(s), records, config, "cdec", strict, jobs)
        ok = [r for r in out if "error" not in r]
        labelled = [r for r in ok if r.get("true_label") is not None]
        row = {
            "id": f"S={s}",
            "S": s,
            "n": len(ok),
            "n_errors": len(out) - len(ok),
            "mean_ihdr_size": _mean([len(r["ihdr"]) for r in ok]),
            "coverage": _mean([float(r["true_label"] in r["ihdr"]) for r in labelled]),
            "mean_au": _mean([r["au"] for r in ok]),
            "mean_eu": _mean([r["eu"] for r in ok]),
            "mean_tu": _mean([r["tu"] for r in ok]),
            "abstention_rate": (sum(r["decision"] != "predict" for r in ok) / len(ok)
                                if ok else 0.0),
        }
        metrics = _soft_metrics(ok, config.n_bins)
        if "ood" in metrics:
            row["eu_auroc"] = metrics["ood"]["eu"]["auroc"]
        rows.append(row)
        log.info("ablate S=%d: %d samples, %.2fs", s, len(out), time.perf_counter() - started)
    return rows


def run_ablate(input_path, config, output, grid=None, jobs=1, strict=False):
    records, errors, _ = _read(input_path, config, strict)
    rows = ablation_table(records, config, grid, jobs, strict)
    summary = {"grid": [r["S"] for r in rows], "n_samples": len(records),
               "n_load_errors": len(errors)}
    data_io.write_report(rows, summary, output)
    if errors or any(r["n_errors"] for r in rows):
        return EXIT_DATA
    return EXIT_OK


def run_synth(spec, output):
    records = data_io.generate_synthetic(spec)
    data_io.write_samples(records, output)
    log.info("synth: wrote %d samples (k=%d, S=%d)", len(records), spec.k, spec.s)
    return EXIT_OK


__all__ = [
    "cdec_record", "idec_record", "summarize", "compute_metrics", "ablation_table",
    "exit_status", "run_cdec", "run_idec", "run_metrics", "run_ablate", "run_synth",
    "scored_samples", "DEFAULT_GRID", "METRIC_GROUPS",
]
