"""File formats.

Dataset CSV
    UTF-8, LF line endings, header ``group,time,status``. ``status`` is 1 for
    an observed event and 0 for a right-censored record. Group labels are
    arbitrary strings, re-indexed densely in order of first appearance.

Truth sidecar CSV
    ``group,mixture,frailty``: generating mixture index and frailty per group.

Trace JSONL
    Line 1 is a header object (``format``, ``model``, ``config``,
    ``group_count``, ``labels``, ``base`` and, for ``gfm``, the fit). Every
    further line is one retained draw: an object mapping parameter names to
    (nested) lists of numbers. Floats are written with round-trip precision.

Curve CSV
    ``group,t,mean,lower,upper``: posterior mean and pointwise band per group.

Metrics CSV
    ``model,scenario,replicate,mean_lppd,mean_width,coverage``.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .data_model import DataError, Dataset, validate
from .frailty import GfmFit, GfmParams, GfmTrace
from .kernels import BaseMeasure
from .samplers import McmcConfig, PosteriorTrace

DATASET_HEADER = ("group", "time", "status")
CURVE_HEADER = ("group", "t", "mean", "lower", "upper")
METRICS_HEADER = ("model", "scenario", "replicate", "mean_lppd", "mean_width", "coverage")
TRUTH_HEADER = ("group", "mixture", "frailty")
TRACE_FORMAT = "bnpsurv-trace/1"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_text(header, rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _reader(text: str, required) -> tuple[csv.DictReader, list]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise DataError("missing header row")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    return reader, list(reader)


# ---------------------------------------------------------------------------
# datasets


def parse_dataset(text: str) -> Dataset:
    reader, rows = _reader(text, DATASET_HEADER)
    if not rows:
        raise DataError("empty dataset")
    index: dict[str, int] = {}
    times, events, groups = [], [], []
    for line, row in enumerate(rows, start=2):
        label = row["group"]
        if label is None or label == "":
            raise DataError(f"row {line}: missing group")
        try:
            t = float(row["time"])
        except (TypeError, ValueError):
            raise DataError(f"row {line}: non-numeric time {row['time']!r}") from None
        if not np.isfinite(t) or t <= 0:
            raise DataError(f"row {line}: nonpositive or nonfinite time {row['time']!r}")
        status = (row["status"] or "").strip()
        if status not in ("0", "1"):
            raise DataError(f"row {line}: status must be 0 or 1, got {row['status']!r}")
        times.append(t)
        events.append(status == "1")
        groups.append(index.setdefault(label, len(index)))
    return validate(Dataset(times, events, groups, labels=tuple(index)))


def serialize_dataset(data: Dataset) -> str:
    return _csv_text(DATASET_HEADER, (
        (data.labels[g], _fmt(t), int(e)) for t, e, g in zip(data.times, data.events, data.groups)
    ))


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


def write_dataset(path, data: Dataset) -> None:
    atomic_write(path, serialize_dataset(data))


def serialize_truth(labels, mixture, frailty) -> str:
    return _csv_text(TRUTH_HEADER, ((lab, int(m), _fmt(u)) for lab, m, u in zip(labels, mixture, frailty)))


def parse_truth(text: str) -> dict[str, tuple[int, float]]:
    _, rows = _reader(text, TRUTH_HEADER)
    try:
        return {r["group"]: (int(r["mixture"]), float(r["frailty"])) for r in rows}
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed truth file: {exc}") from None


# ---------------------------------------------------------------------------
# traces


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def serialize_trace(trace, labels=()) -> str:
    header = {
        "format": TRACE_FORMAT,
        "model": trace.model,
        "group_count": trace.group_count,
        "labels": list(labels) or [str(j) for j in range(trace.group_count)],
    }
    if isinstance(trace, GfmTrace):
        fit = trace.fit
        header["fit"] = {
            "params": [fit.params.shape, fit.params.scale, fit.params.frailty_var],
            "covariance": None if fit.covariance is None else fit.covariance.tolist(),
            "neg_loglik_at_mle": fit.neg_loglik_at_mle,
            "hessian_ok": fit.hessian_ok,
        }
    else:
        header["config"] = trace.config.to_dict()
        b = trace.base
        header["base"] = None if b is None else {"m0": b.m0, "kappa0": b.kappa0, "a0": b.a0, "b0": b.b0}
    lines = [json.dumps(header)]
    for d in trace.draws:
        lines.append(json.dumps({k: _jsonable(v) for k, v in d.items()}))
    return "\n".join(lines) + "\n"


def parse_trace(text: str):
    """Inverse of :func:`serialize_trace`; returns ``(trace, labels)``."""
    lines = text.splitlines()
    if not lines:
        raise DataError("empty trace file")
    try:
        header = json.loads(lines[0])
        draws = [{k: np.asarray(v) for k, v in json.loads(line).items()} for line in lines[1:] if line]
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed trace file: {exc}") from None
    if header.get("format") != TRACE_FORMAT:
        raise DataError("not a trace file")
    for d in draws:
        for key in ("zeta",):
            if key in d:
                d[key] = d[key].astype(np.int64)
    J = int(header["group_count"])
    if header["model"] == "gfm":
        f = header["fit"]
        cov = None if f["covariance"] is None else np.asarray(f["covariance"])
        fit = GfmFit(GfmParams(*f["params"]), cov, f["neg_loglik_at_mle"], f["hessian_ok"])
        return GfmTrace(fit, draws, J), header["labels"]
    base = header.get("base")
    trace = PosteriorTrace(header["model"], McmcConfig(**header["config"]), J, draws,
                           BaseMeasure(**base) if base else None)
    return trace, header["labels"]


# ---------------------------------------------------------------------------
# tables


def serialize_curves(rows) -> str:
    """``rows`` yields ``(label, grid, mean, lower, upper)`` per group."""
    out = []
    for label, grid, mean, lower, upper in rows:
        out.extend((label, _fmt(t), _fmt(m), _fmt(lo), _fmt(hi))
                   for t, m, lo, hi in zip(grid, mean, lower, upper))
    return _csv_text(CURVE_HEADER, out)


def parse_curves(text: str) -> dict[str, dict[str, np.ndarray]]:
    _, rows = _reader(text, CURVE_HEADER)
    out: dict[str, dict[str, list]] = {}
    for r in rows:
        d = out.setdefault(r["group"], {k: [] for k in CURVE_HEADER[1:]})
        for k in CURVE_HEADER[1:]:
            d[k].append(float(r[k]))
    return {g: {k: np.asarray(v) for k, v in d.items()} for g, d in out.items()}


def serialize_metrics(rows) -> str:
    return _csv_text(METRICS_HEADER, (
        (r["model"], r["scenario"], r["replicate"], _fmt(r["mean_lppd"]),
         _fmt(r["mean_width"]), _fmt(r["coverage"])) for r in rows
    ))


def parse_metrics(text: str) -> list[dict]:
    _, rows = _reader(text, METRICS_HEADER)
    for r in rows:
        for k in ("mean_lppd", "mean_width", "coverage"):
            r[k] = float(r[k])
    return rows


# ---------------------------------------------------------------------------
# configuration


def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    return cp


def serialize_config(section: str, values: dict) -> str:
    cp = configparser.ConfigParser()
    cp[section] = {k: "" if v is None else str(v) for k, v in sorted(values.items())}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
