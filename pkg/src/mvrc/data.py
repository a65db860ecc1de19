"""Datasets, CSV loading, synthetic surrogates, and seeded RNG streams."""
from dataclasses import dataclass, field
import csv
import hashlib
import math
import os

import numpy as np

from .core import ConfigurationError


class DataLoadError(ValueError):
    """A dataset file could not be read or failed validation."""


# named streams so estimator draws, output-index draws and data synthesis never interleave
STREAMS = {"estimator": 1, "zeta": 2, "restart": 3, "data": 4, "surrogate": 5, "baseline": 6}


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or not 0 <= val < 2 ** 64:
                raise ConfigurationError(f"{name} must be an unsigned 64-bit integer, got {val!r}")

    def generator(self, *extra):
        return make_rng(self.seed, self.stream_id, *extra)


def make_rng(seed, stream, *extra):
    """Counter-based (Philox) generator for ``(seed, stream, *extra)``.

    ``stream`` may be a name from :data:`STREAMS` or an integer id.
    """
    sid = STREAMS[stream] if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence(int(seed), spawn_key=(sid, *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Dataset:
    matrix: np.ndarray
    targets: np.ndarray = None
    provenance: dict = field(default_factory=dict)
    checksum: str = ""

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def d(self):
        return self.matrix.shape[1]


def array_checksum(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        if a is None:
            continue
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return "sha256:" + h.hexdigest()


def _file_checksum(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def load_csv(path, target=None, columns=None, expected_rows=None):
    """Load a numeric CSV file with one header line.

    Parameters
    ----------
    path : str
    target : str, optional
        Header name of a column to split off as targets.
    columns : list of str, optional
        Feature columns to keep, in order; default all non-target columns.
    expected_rows : int, optional
        Declared row count; a mismatch is an error.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DataLoadError(f"{path}: file not found")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise DataLoadError(f"{path}: not valid UTF-8 ({exc})") from exc
    if not rows:
        raise DataLoadError(f"{path}: empty file (a header line is required)")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataLoadError(f"{path}: empty dataset (header only)")
    width = len(header)
    values = np.empty((len(body), width))
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != width:
            raise DataLoadError(f"{path}: row {line} has {len(row)} cells, header has {width}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataLoadError(f"{path}: row {line}, column {c + 1} ({header[c]!r}): non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataLoadError(f"{path}: row {line}, column {c + 1} ({header[c]!r}): non-finite cell {cell!r}")
            values[r, c] = v
    if expected_rows is not None and expected_rows != len(body):
        raise DataLoadError(f"{path}: declared {expected_rows} rows, found {len(body)}")

    def col(name):
        if name not in header:
            raise DataLoadError(f"{path}: no column named {name!r}")
        return header.index(name)

    y = None
    if target is not None:
        y = values[:, col(target)].copy()
    if columns is None:
        keep = [i for i, h in enumerate(header) if h != target]
    else:
        keep = [col(c) for c in columns]
    X = np.ascontiguousarray(values[:, keep])
    return Dataset(X, y, {"kind": "csv", "path": path, "columns": [header[i] for i in keep], "target": target},
                   _file_checksum(path))


def synth_portfolio(n, d, rng, mean=0.05, scale=1.0, factor_scale=0.0):
    """Gaussian daily returns, in percent.

    ``R_ij = mean + factor_scale * m_i + scale * e_ij`` with a shared market
    factor ``m_i`` and independent ``e_ij``, all standard normal.
    """
    if n < 1 or d < 1:
        raise ConfigurationError("synth_portfolio needs n, d >= 1")
    if scale < 0 or factor_scale < 0:
        raise ConfigurationError("scales must be >= 0")
    market = rng.standard_normal((n, 1))
    noise = rng.standard_normal((n, d))
    R = mean + factor_scale * market + scale * noise
    spec = {"kind": "synth_portfolio", "n": n, "d": d, "mean": mean, "scale": scale, "factor_scale": factor_scale}
    return Dataset(R, None, spec, array_checksum(R))


def synth_housing(n, d_signal, d_noise, rng, noise=1.0, coef=None, standardize=False):
    """Regression data: ``y = X_signal @ coef + noise * e``; noise features get zero weight.

    Features are standard normal.  The default signal coefficients are
    ``(1, -1, 0.5, 2, ...)`` cycled to ``d_signal``.
    """
    if n < 1 or d_signal < 0 or d_noise < 0 or d_signal + d_noise < 1:
        raise ConfigurationError("synth_housing needs n >= 1 and at least one feature")
    if coef is None:
        base = np.array([1.0, -1.0, 0.5, 2.0])
        coef = np.resize(base, d_signal)
    coef = np.asarray(coef, dtype=np.float64)
    if coef.shape != (d_signal,):
        raise ConfigurationError(f"coef must have length {d_signal}")
    Xs = rng.standard_normal((n, d_signal))
    Xn = rng.standard_normal((n, d_noise))
    e = rng.standard_normal(n)
    y = Xs @ coef + noise * e
    X = np.concatenate((Xs, Xn), axis=1)
    if standardize and n > 1:
        sd = y.std()
        if sd > 0:
            y = (y - y.mean()) / sd
    true_coef = np.concatenate((coef, np.zeros(d_noise)))
    spec = {"kind": "synth_housing", "n": n, "d_signal": d_signal, "d_noise": d_noise, "noise": noise,
            "coef": coef.tolist(), "standardize": standardize, "true_coef": true_coef.tolist()}
    return Dataset(X, y, spec, array_checksum(X, y))
