"""Sample files, run configuration, reports and the synthetic ensemble generator.

Sample and report files are UTF-8 JSON lines, one object per line.  A
sample carries either ``ensemble`` (rows are pmfs) or ``counts`` (rows are
nonnegative virtual evidence counts), never both.  A flat vector is read as
a single-member ensemble.  Labels are 0-based indices.

Reports hold one record per sample followed by a record with
``id == "__summary__"``.  Non-finite floats are written as the strings
``"inf"``, ``"-inf"`` and ``"nan"`` to keep the files strict JSON.
"""

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .core import PMF_TOL, PredictiveEnsemble, posterior_predictive
from .credal import DUP_TOL, HULL_TOL, OPT_TOL
from .exceptions import (InconsistentDimensions, ParseError, SchemaError)

SUMMARY_ID = "__summary__"
_SAMPLE_FIELDS = ("id", "ensemble", "counts", "true_label", "is_ood")
# keeps Dirichlet parameters strictly positive when the base pmf has zeros
_ALPHA_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """One input: ``S`` predictive pmfs (or virtual counts) over ``k`` labels."""

    id: str
    ensemble: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None
    true_label: Optional[int] = None
    is_ood: Optional[bool] = None

    def __post_init__(self):
        if (self.ensemble is None) == (self.counts is None):
            raise SchemaError("exactly one of 'ensemble' and 'counts' is required",
                              "ensemble", self.id)
        # lists are accepted for convenience; a flat vector is one member
        field = "ensemble" if self.ensemble is not None else "counts"
        value = np.atleast_2d(np.asarray(getattr(self, field), dtype=np.float64))
        object.__setattr__(self, field, value)

    @property
    def counts_mode(self):
        return self.counts is not None

    @property
    def matrix(self):
        return self.counts if self.counts_mode else self.ensemble

    @property
    def n_members(self):
        return self.matrix.shape[0]

    @property
    def k(self):
        return self.matrix.shape[1]

    def to_ensemble(self):
        """The members as pmfs; counts go through the uniform-prior posterior predictive."""
        if self.counts_mode:
            return PredictiveEnsemble(posterior_predictive(self.counts))
        return PredictiveEnsemble(self.ensemble)

    def to_dict(self):
        out = {"id": self.id}
        if self.counts_mode:
            out["counts"] = self.counts.tolist()
        else:
            out["ensemble"] = self.ensemble.tolist()
        if self.true_label is not None:
            out["true_label"] = int(self.true_label)
        if self.is_ood is not None:
            out["is_ood"] = bool(self.is_ood)
        return out

    def __eq__(self, other):
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (self.id == other.id and self.true_label == other.true_label
                and self.is_ood == other.is_ood and self.counts_mode == other.counts_mode
                and np.array_equal(self.matrix, other.matrix))


@dataclass
class RunConfig:
    """Parameters shared by the CLI verbs.

    ``epsilon`` has no canonical value; 0.1 bits (or variance units for the
    interval rule) is a mild default.
    """

    gamma: float = 0.05
    epsilon: float = 0.1
    mode: str = "cdec"
    exact_ihdr: bool = False
    exact_tu: bool = True
    n_bins: int = 15
    dup_tol: float = DUP_TOL
    hull_tol: float = HULL_TOL
    opt_tol: float = OPT_TOL
    pmf_tol: float = PMF_TOL
    seed: int = 0
    collapse_ensemble: bool = False
    grid: tuple = (1, 3, 5, 7, 10)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 < self.gamma < 1.0:
            raise SchemaError(f"must lie in (0, 1), got {self.gamma}", "gamma")
        if not self.epsilon > 0:
            raise SchemaError(f"must be positive, got {self.epsilon}", "epsilon")
        if self.mode not in ("cdec", "idec"):
            raise SchemaError(f"must be 'cdec' or 'idec', got {self.mode!r}", "mode")
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise SchemaError(f"must be a positive integer, got {self.n_bins}", "n_bins")
        for name in ("dup_tol", "hull_tol", "opt_tol", "pmf_tol"):
            if not getattr(self, name) > 0:
                raise SchemaError("tolerances must be positive", name)
        if int(self.seed) != self.seed or self.seed < 0:
            raise SchemaError(f"must be a nonnegative integer, got {self.seed}", "seed")
        grid = tuple(int(s) for s in self.grid)
        if not grid or min(grid) < 1:
            raise SchemaError("ensemble sizes must be positive integers", "grid")
        self.grid = grid
        return self

    @classmethod
    def from_mapping(cls, mapping):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - names)
        if unknown:
            raise SchemaError(f"unknown config keys {unknown}", unknown[0])
        return cls(**dict(mapping))

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic corpus of in-distribution and shifted samples.

    Each sample draws a base pmf ``pi ~ Dir(concentration * 1)`` and then
    ``s`` members ``~ Dir(spread * k * pi)``.  Low ``spread`` means the
    members disagree; the defaults give sharp, consistent iD samples and
    flat, dispersed OoD samples.
    """

    k: int = 10
    s: int = 3
    n_id: int = 2000
    n_ood: int = 2000
    concentration_id: float = 0.1
    concentration_ood: float = 1.0
    spread_id: float = 200.0
    spread_ood: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("k", "s", "n_id", "n_ood"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise SchemaError(f"must be a positive integer, got {v}", name)
        if self.k < 2:
            raise SchemaError("need at least two classes", "k")
        for name in ("concentration_id", "concentration_ood", "spread_id", "spread_ood"):
            if not getattr(self, name) > 0:
                raise SchemaError("must be positive", name)
        if int(self.seed) != self.seed or self.seed < 0:
            raise SchemaError("must be a nonnegative integer", "seed")

    @classmethod
    def from_mapping(cls, mapping):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in mapping.items() if k in names})


def _matrix(value, field, rid):
    try:
        m = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError("must be a numeric vector or matrix", field, rid) from None
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 2:
        raise SchemaError(f"expected S x k with k >= 2, got shape {m.shape}", field, rid)
    if not np.all(np.isfinite(m)):
        raise SchemaError("non-finite entry", field, rid)
    return m


def parse_record(obj, tolerance=PMF_TOL):
    """Validate one decoded JSON object and build a :class:`SampleRecord`."""
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise SchemaError("missing or non-string id", "id", rid)
    has_e, has_c = "ensemble" in obj, "counts" in obj
    if has_e == has_c:
        raise SchemaError("exactly one of 'ensemble' and 'counts' is required",
                          "ensemble", rid)
    field = "ensemble" if has_e else "counts"
    m = _matrix(obj[field], field, rid)
    if m.min() < -tolerance:
        raise SchemaError(f"negative entry {m.min():.6g}", field, rid)
    if has_e:
        sums = m.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tolerance)
        if bad.size:
            raise SchemaError(f"row {int(bad[0])} sums to {sums[bad[0]]:.12g}", field, rid)
        m = np.clip(m, 0.0, None)
        m = m / m.sum(axis=1, keepdims=True)
    else:
        m = np.clip(m, 0.0, None)
    label = obj.get("true_label")
    if label is not None:
        if isinstance(label, bool) or not isinstance(label, int):
            raise SchemaError("must be an integer label index", "true_label", rid)
        if not 0 <= label < m.shape[1]:
            raise SchemaError(f"label {label} outside 0..{m.shape[1] - 1}", "true_label", rid)
    is_ood = obj.get("is_ood")
    if is_ood is not None and not isinstance(is_ood, bool):
        raise SchemaError("must be true or false", "is_ood", rid)
    m.setflags(write=False)
    return SampleRecord(rid, m if has_e else None, None if has_e else m, label, is_ood)


def iter_samples(path, tolerance=PMF_TOL):
    """Yield ``(line_no, record_or_error)`` for each nonblank line.

    Errors are yielded instead of raised so a batch can continue past bad
    records.  The class count of the first good record fixes ``k``.
    """
    k = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield line_no, ParseError(exc.msg, line_no)
                continue
            try:
                rec = parse_record(obj, tolerance)
            except SchemaError as exc:
                yield line_no, exc
                continue
            if k is None:
                k = rec.k
            elif rec.k != k:
                err = InconsistentDimensions(
                    f"line {line_no}: record {rec.id!r} has k={rec.k}, file started with k={k}")
                err.record = rec.id
                yield line_no, err
                continue
            yield line_no, rec


def load_samples(path, tolerance=PMF_TOL):
    """Read a sample file, raising on the first bad line."""
    out = []
    for _, item in iter_samples(path, tolerance):
        if isinstance(item, Exception):
            raise item
        out.append(item)
    return out


def _dump(obj):
    return json.dumps(obj, allow_nan=False, ensure_ascii=False)


def write_samples(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_dump(rec.to_dict()) + "\n")


def generate_synthetic(spec):
    """Draw a reproducible corpus of iD then OoD samples.

    Uses numpy's PCG64 generator seeded with ``spec.seed``; the draw order is
    base pmf, members, label for each sample in turn.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    records = []
    for ood, n, conc, spread in ((False, spec.n_id, spec.concentration_id, spec.spread_id),
                                 (True, spec.n_ood, spec.concentration_ood, spec.spread_ood)):
        prefix = "ood" if ood else "id"
        for i in range(n):
            pi = rng.dirichlet(np.full(spec.k, conc))
            alpha = np.maximum(spread * spec.k * pi, _ALPHA_FLOOR)
            members = rng.dirichlet(alpha, size=spec.s)
            members = members / members.sum(axis=1, keepdims=True)
            label = int(rng.choice(spec.k, p=pi / pi.sum()))
            members.setflags(write=False)
            records.append(SampleRecord(f"{prefix}-{i:05d}", members, None, label, ood))
    return records


def _encode(value):
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, (frozenset, set)):
        return sorted(int(v) for v in value)
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _decode(value):
    if isinstance(value, dict):
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    if isinstance(value, str) and value in _NONFINITE:
        return _NONFINITE[value]
    return value


def write_report(records, summary, path):
    """Write per-sample records (dicts) and the summary, in the given order.

    Key order inside each record is kept as supplied.
    """
    summary = {"id": SUMMARY_ID, **{k: v for k, v in summary.items() if k != "id"}}
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_dump(_encode(rec)) + "\n")
        fh.write(_dump(_encode(summary)) + "\n")


def load_report(path):
    """Return ``(records, summary)``; ``summary`` is ``None`` if the file has none."""
    records, summary = [], None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = _decode(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line_no) from None
            if not isinstance(obj, dict) or "id" not in obj:
                raise SchemaError(f"line {line_no}: report record without id", "id")
            if obj["id"] == SUMMARY_ID:
                summary = obj
            else:
                records.append(obj)
    return records, summary


def load_config(path):
    """Read a flat YAML or JSON mapping (JSON is a subset of YAML)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(exc).splitlines()[0], mark.line + 1 if mark else None) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise SchemaError("config must be a key-value mapping")
    for key, value in data.items():
        if isinstance(value, dict):
            raise SchemaError("config must be flat", key)
    return data


__all__ = [
    "SUMMARY_ID", "SampleRecord", "RunConfig", "SyntheticSpec", "parse_record",
    "iter_samples", "load_samples", "write_samples", "generate_synthetic",
    "write_report", "load_report", "load_config",
]
