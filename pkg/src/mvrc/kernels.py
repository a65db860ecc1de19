"""Batch-mean oracle kernels for the data-backed problem families.

Every kernel takes an index batch ``idx`` (int64, repeats allowed) and returns
the batch *mean* of the per-component quantity.  Accumulation runs over
``idx`` in the given order and divides once at the end, so a full-batch call
with ``idx = arange(n)`` equals the index-ordered mean of single-component
calls bit for bit (within one backend).

Two implementations exist per kernel: explicit loops compiled with numba, and
a vectorised numpy version.  ``_accel.USE_NUMBA`` picks which one the public
names below point to; both are importable for testing and benchmarking.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# rows per temporary block in numpy paths that would otherwise allocate m*p*d
_CHUNK = 512


def _seq_sum(blocks, shape):
    """Index-ordered sum of stacked blocks, carrying the running total forward."""
    acc = np.zeros(shape)
    for block in blocks:
        acc = np.concatenate((acc[None], block), axis=0).sum(axis=0)
    return acc


def _chunks(idx):
    for start in range(0, idx.shape[0], _CHUNK):
        yield idx[start:start + _CHUNK]


# --------------------------------------------------------------------------
# risk-averse portfolio:  g_i(x) = (R_i.x, (R_i.x)^2)
# --------------------------------------------------------------------------

@njit
def _dot_row(M, i, x):
    s = 0.0
    for j in range(x.shape[0]):
        s += M[i, j] * x[j]
    return s


@njit
def portfolio_inner_nb(R, idx, x):
    out = np.zeros(2)
    for k in range(idx.shape[0]):
        u = _dot_row(R, idx[k], x)
        out[0] += u
        out[1] += u * u
    return out / idx.shape[0]


@njit
def portfolio_inner_diff_nb(R, idx, x, xp):
    out = np.zeros(2)
    for k in range(idx.shape[0]):
        u = _dot_row(R, idx[k], x)
        v = _dot_row(R, idx[k], xp)
        out[0] += u - v
        out[1] += u * u - v * v
    return out / idx.shape[0]


@njit
def portfolio_jac_nb(R, idx, x):
    d = R.shape[1]
    out = np.zeros((2, d))
    for k in range(idx.shape[0]):
        i = idx[k]
        c = 2.0 * _dot_row(R, i, x)
        for j in range(d):
            out[0, j] += R[i, j]
            out[1, j] += c * R[i, j]
    return out / idx.shape[0]


@njit
def portfolio_jac_diff_nb(R, idx, x, xp):
    d = R.shape[1]
    out = np.zeros((2, d))
    for k in range(idx.shape[0]):
        i = idx[k]
        c = 2.0 * _dot_row(R, i, x)
        cp = 2.0 * _dot_row(R, i, xp)
        for j in range(d):
            out[1, j] += c * R[i, j] - cp * R[i, j]
    return out / idx.shape[0]


def _portfolio_u(R, idx, x):
    return (R[idx] * x).sum(axis=1)


def portfolio_inner_np(R, idx, x):
    u = _portfolio_u(R, idx, x)
    return np.stack((u, u * u), axis=1).sum(axis=0) / idx.shape[0]


def portfolio_inner_diff_np(R, idx, x, xp):
    u = _portfolio_u(R, idx, x)
    v = _portfolio_u(R, idx, xp)
    return np.stack((u - v, u * u - v * v), axis=1).sum(axis=0) / idx.shape[0]


def portfolio_jac_np(R, idx, x):
    Ri = R[idx]
    c = 2.0 * (Ri * x).sum(axis=1)
    out = np.empty((2, R.shape[1]))
    out[0] = Ri.sum(axis=0)
    out[1] = (c[:, None] * Ri).sum(axis=0)
    return out / idx.shape[0]


def portfolio_jac_diff_np(R, idx, x, xp):
    Ri = R[idx]
    c = 2.0 * (Ri * x).sum(axis=1)
    cp = 2.0 * (Ri * xp).sum(axis=1)
    out = np.zeros((2, R.shape[1]))
    out[1] = (c[:, None] * Ri - cp[:, None] * Ri).sum(axis=0)
    return out / idx.shape[0]


# --------------------------------------------------------------------------
# linear maps:  g_i(x) = A_i x,  A has shape (n, p, d)
# --------------------------------------------------------------------------

@njit
def _matvec_into(A, i, x, out, sign):
    p, d = A.shape[1], A.shape[2]
    for r in range(p):
        s = 0.0
        for j in range(d):
            s += A[i, r, j] * x[j]
        out[r] += sign * s


@njit
def linear_inner_nb(A, idx, x):
    out = np.zeros(A.shape[1])
    for k in range(idx.shape[0]):
        _matvec_into(A, idx[k], x, out, 1.0)
    return out / idx.shape[0]


@njit
def linear_inner_diff_nb(A, idx, x, xp):
    p, d = A.shape[1], A.shape[2]
    out = np.zeros(p)
    for k in range(idx.shape[0]):
        i = idx[k]
        for r in range(p):
            s = 0.0
            sp = 0.0
            for j in range(d):
                s += A[i, r, j] * x[j]
                sp += A[i, r, j] * xp[j]
            out[r] += s - sp
    return out / idx.shape[0]


@njit
def linear_jac_nb(A, idx, x):
    p, d = A.shape[1], A.shape[2]
    out = np.zeros((p, d))
    for k in range(idx.shape[0]):
        i = idx[k]
        for r in range(p):
            for j in range(d):
                out[r, j] += A[i, r, j]
    return out / idx.shape[0]


def linear_inner_np(A, idx, x):
    return (A[idx] * x).sum(axis=2).sum(axis=0) / idx.shape[0]


def linear_inner_diff_np(A, idx, x, xp):
    Ai = A[idx]
    return ((Ai * x).sum(axis=2) - (Ai * xp).sum(axis=2)).sum(axis=0) / idx.shape[0]


def linear_jac_np(A, idx, x):
    return _seq_sum((A[c] for c in _chunks(idx)), A.shape[1:]) / idx.shape[0]


# --------------------------------------------------------------------------
# modified sparse additive model:
#   g_i(t) = ((y_i - |X_i.t|)^2, (t_1 X_i1)^2, ..., (t_d X_id)^2)
# --------------------------------------------------------------------------

@njit
def spam_inner_nb(X, y, idx, th):
    d = X.shape[1]
    out = np.zeros(d + 1)
    for k in range(idx.shape[0]):
        i = idx[k]
        r = y[i] - abs(_dot_row(X, i, th))
        out[0] += r * r
        for j in range(d):
            h = th[j] * X[i, j]
            out[j + 1] += h * h
    return out / idx.shape[0]


@njit
def spam_inner_diff_nb(X, y, idx, th, thp):
    d = X.shape[1]
    out = np.zeros(d + 1)
    for k in range(idx.shape[0]):
        i = idx[k]
        r = y[i] - abs(_dot_row(X, i, th))
        rp = y[i] - abs(_dot_row(X, i, thp))
        out[0] += r * r - rp * rp
        for j in range(d):
            h = th[j] * X[i, j]
            hp = thp[j] * X[i, j]
            out[j + 1] += h * h - hp * hp
    return out / idx.shape[0]


@njit
def _spam_jac_row_into(X, y, i, th, out, sign):
    d = X.shape[1]
    u = _dot_row(X, i, th)
    s = 0.0
    if u > 0.0:
        s = 1.0
    elif u < 0.0:
        s = -1.0
    c = -2.0 * (y[i] - abs(u)) * s
    for j in range(d):
        out[0, j] += sign * (c * X[i, j])
        out[j + 1, j] += sign * (2.0 * (th[j] * X[i, j]) * X[i, j])


@njit
def spam_jac_nb(X, y, idx, th):
    d = X.shape[1]
    out = np.zeros((d + 1, d))
    for k in range(idx.shape[0]):
        _spam_jac_row_into(X, y, idx[k], th, out, 1.0)
    return out / idx.shape[0]


@njit
def spam_jac_diff_nb(X, y, idx, th, thp):
    d = X.shape[1]
    out = np.zeros((d + 1, d))
    tmp = np.zeros((d + 1, d))
    for k in range(idx.shape[0]):
        i = idx[k]
        # per-sample difference first, then accumulate, matching the numpy path
        _spam_jac_row_into(X, y, i, th, tmp, 1.0)
        _spam_jac_row_into(X, y, i, thp, tmp, -1.0)
        for j in range(d):
            out[0, j] += tmp[0, j]
            out[j + 1, j] += tmp[j + 1, j]
            tmp[0, j] = 0.0
            tmp[j + 1, j] = 0.0
    return out / idx.shape[0]


def _spam_parts(X, y, idx, th):
    Xi = X[idx]
    u = (Xi * th).sum(axis=1)
    h = th * Xi
    c = -2.0 * (y[idx] - np.abs(u)) * np.sign(u)
    return Xi, u, h, c


def spam_inner_np(X, y, idx, th):
    Xi, u, h, _ = _spam_parts(X, y, idx, th)
    r = y[idx] - np.abs(u)
    vals = np.concatenate(((r * r)[:, None], h * h), axis=1)
    return vals.sum(axis=0) / idx.shape[0]


def spam_inner_diff_np(X, y, idx, th, thp):
    Xi, u, h, _ = _spam_parts(X, y, idx, th)
    _, up, hp, _ = _spam_parts(X, y, idx, thp)
    r = y[idx] - np.abs(u)
    rp = y[idx] - np.abs(up)
    vals = np.concatenate(((r * r - rp * rp)[:, None], h * h - hp * hp), axis=1)
    return vals.sum(axis=0) / idx.shape[0]


def _spam_jac_assemble(row0, diag):
    d = diag.shape[0]
    out = np.zeros((d + 1, d))
    out[0] = row0
    out[np.arange(1, d + 1), np.arange(d)] = diag
    return out


def spam_jac_np(X, y, idx, th):
    Xi, _, h, c = _spam_parts(X, y, idx, th)
    row0 = (c[:, None] * Xi).sum(axis=0)
    diag = (2.0 * h * Xi).sum(axis=0)
    return _spam_jac_assemble(row0, diag) / idx.shape[0]


def spam_jac_diff_np(X, y, idx, th, thp):
    Xi, _, h, c = _spam_parts(X, y, idx, th)
    _, _, hp, cp = _spam_parts(X, y, idx, thp)
    row0 = (c[:, None] * Xi - cp[:, None] * Xi).sum(axis=0)
    diag = (2.0 * h * Xi - 2.0 * hp * Xi).sum(axis=0)
    return _spam_jac_assemble(row0, diag) / idx.shape[0]


NUMBA_KERNELS = {
    "portfolio": (portfolio_inner_nb, portfolio_inner_diff_nb, portfolio_jac_nb, portfolio_jac_diff_nb),
    "linear": (linear_inner_nb, linear_inner_diff_nb, linear_jac_nb, None),
    "spam": (spam_inner_nb, spam_inner_diff_nb, spam_jac_nb, spam_jac_diff_nb),
}
NUMPY_KERNELS = {
    "portfolio": (portfolio_inner_np, portfolio_inner_diff_np, portfolio_jac_np, portfolio_jac_diff_np),
    "linear": (linear_inner_np, linear_inner_diff_np, linear_jac_np, None),
    "spam": (spam_inner_np, spam_inner_diff_np, spam_jac_np, spam_jac_diff_np),
}
KERNELS = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
