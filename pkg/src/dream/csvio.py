"""CSV and manifest I/O.

Every CSV has a header row, ``\\n`` line endings and floats written with 17
significant digits so values survive a round trip exactly.
"""

import csv
from datetime import datetime, timezone
import json
import os
from pathlib import Path
import tempfile

import numpy as np

from . import __version__
from .estimators import Trace, ValueReport


class TraceFormatError(ValueError):
    """A trace CSV is missing columns or rows."""


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_rows(path_or_file, columns, rows):
    """Write dict rows under ``columns``; ``path_or_file`` may be an open text stream."""
    if hasattr(path_or_file, "write"):
        _write(path_or_file, columns, rows)
        return
    with Path(path_or_file).open("w", newline="", encoding="utf-8") as fh:
        _write(fh, columns, rows)


def _write(fh, columns, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])


def trace_columns(trace):
    p = trace.context.shape[1]
    d = trace.feature.shape[1]
    cols = ["t"] + [f"x{j + 1}" for j in range(p)] + [f"f{j + 1}" for j in range(d)]
    cols += ["action", "reward", "greedy", "kappa", "mu0", "mu1", "forced_clip", "burn_in"]
    if trace.propensity_ is not None:
        cols.append("propensity")
    return cols


def write_trace(trace, path):
    cols = trace_columns(trace)
    p = trace.context.shape[1]
    d = trace.feature.shape[1]

    def rows():
        for i in range(len(trace)):
            row = {"t": trace.t[i], "action": trace.action[i], "reward": trace.reward[i],
                   "greedy": trace.greedy[i], "kappa": trace.kappa[i], "mu0": trace.mu0[i],
                   "mu1": trace.mu1[i], "forced_clip": trace.forced_clip[i], "burn_in": trace.burn_in[i]}
            for j in range(p):
                row[f"x{j + 1}"] = trace.context[i, j]
            for j in range(d):
                row[f"f{j + 1}"] = trace.feature[i, j]
            if trace.propensity_ is not None:
                row["propensity"] = trace.propensity_[i]
            yield row

    write_rows(path, cols, rows())


def read_trace(path, require_propensity=False):
    """Inverse of :func:`write_trace`."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError(f"{path}: empty file")
        body = [row for row in reader if row]
    required = {"t", "action", "reward", "greedy", "kappa", "mu0", "mu1", "forced_clip", "burn_in"}
    missing = sorted(required - set(header))
    if missing:
        raise TraceFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    if require_propensity and "propensity" not in header:
        raise TraceFormatError(f"{path}: missing column propensity")
    if not body:
        raise TraceFormatError(f"{path}: trace has no rows")
    idx = {name: k for k, name in enumerate(header)}
    try:
        data = np.array(body, dtype=float)
    except ValueError:
        raise TraceFormatError(f"{path}: non-numeric entry") from None
    if data.shape[1] != len(header):
        raise TraceFormatError(f"{path}: ragged rows")
    xs = [idx[c] for c in header if c.startswith("x") and c[1:].isdigit()]
    fs = [idx[c] for c in header if c.startswith("f") and c[1:].isdigit()]
    if not xs or not fs:
        raise TraceFormatError(f"{path}: need x1.. context and f1.. feature columns")

    def col(name):
        return data[:, idx[name]]

    return Trace(
        t=col("t").astype(int), context=data[:, xs], feature=data[:, fs],
        action=col("action").astype(int), reward=col("reward"), greedy=col("greedy").astype(int),
        kappa=col("kappa"), mu0=col("mu0"), mu1=col("mu1"),
        forced_clip=col("forced_clip").astype(bool), burn_in=col("burn_in").astype(bool),
        propensity_=col("propensity") if "propensity" in idx else None,
    )


def write_value_reports(rows, path_or_file):
    """``rows`` holds ``(run_id, algorithm, ValueReport)`` triples."""
    write_rows(path_or_file, ValueReport.CSV_COLUMNS, (rep.csv_row(rid, algo) for rid, algo, rep in rows))


def read_rows(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def atomic_write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def now_iso():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, config, command, started, outputs, extra=None):
    """Run manifest: the config echo plus bookkeeping, written atomically."""
    doc = {
        "command": command,
        "version": __version__,
        "base_seed": config.base_seed,
        "config_hash": config.digest(),
        "config": config.to_flat(),
        "started": started,
        "finished": now_iso(),
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        doc.update(extra)
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    return doc


def read_config_source(path):
    """Flat ``key=value`` mapping from a config file or a previous run's manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        if "config" not in doc:
            raise ValueError(f"{path}: JSON file has no 'config' entry")
        return {k: str(v) for k, v in doc["config"].items()}
    from .config import parse_flat

    return parse_flat(text)
