"""Trace CSV files: fixed header, '.' decimals, '\\n' line endings."""
import math

from ..core import ConfigurationError
from ..solvers import TRACE_COLUMNS

HEADER = ",".join(TRACE_COLUMNS)
ERROR_ITER = "error"
_INT_COLS = TRACE_COLUMNS[1:5]


def _fmt_float(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    # shortest round-trip repr; never locale dependent
    return repr(v)


def format_row(rec):
    return ",".join((
        str(rec.iter), str(rec.samples_g), str(rec.samples_gp), str(rec.samples_fgrad), str(rec.prox_evals),
        _fmt_float(rec.grad_mapping_norm), _fmt_float(rec.objective), f"{rec.wall_ms:.3f}"))


def write_trace(path, records, error=None):
    """Write ``records``; with ``error`` set, append an ``error`` row carrying the
    last counters and NaN metrics."""
    lines = [HEADER]
    lines.extend(format_row(r) for r in records)
    if error is not None:
        last = records[-1] if records else None
        counts = [str(getattr(last, c)) if last else "0" for c in _INT_COLS]
        wall = f"{last.wall_ms:.3f}" if last else "0.000"
        lines.append(",".join([ERROR_ITER, *counts, "nan", "nan", wall]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace(path):
    """Rows as dicts; the ``error`` row (if any) is returned separately."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read trace {path}: {exc.strerror}") from None
    lines = text.split("\n")
    if not lines or lines[0] != HEADER:
        raise ConfigurationError(f"{path}: not a trace file (bad header)")
    rows, error = [], None
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(TRACE_COLUMNS):
            raise ConfigurationError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} cells")
        row = {}
        for name, cell in zip(TRACE_COLUMNS, cells):
            if name == "iter" and cell == ERROR_ITER:
                row[name] = ERROR_ITER
            elif name == "iter" or name in _INT_COLS:
                row[name] = int(cell)
            else:
                row[name] = float(cell)
        if row["iter"] == ERROR_ITER:
            error = row
        else:
            rows.append(row)
    return rows, error


def total_samples(row):
    return row["samples_g"] + row["samples_gp"] + row["samples_fgrad"]
