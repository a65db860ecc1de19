"""Concrete composition problems.

* :class:`PortfolioProblem` - mean-variance (risk-averse) portfolio selection.
* :class:`SpamProblem` - modified sparse additive model with a linear model per
  feature and a smoothed square-root group penalty; double finite sum.
* :class:`LinearCompositionProblem` - ``f(y) = 0.5 ||y - b||^2`` over an
  average of linear maps.  Closed-form optimum, gradient dominant.
* :class:`SmoothSyntheticProblem` - small smooth nonlinear finite sum with
  certified constants, used for variance checks.
* :class:`OnlineShiftProblem` - online inner map ``g_xi(x) = x + xi``.

Matrix norms in the Lipschitz profiles are Frobenius norms.
"""
import math

import numpy as np

from .core import ONLINE, ConfigurationError, CompositionProblem, KernelProblem, LipschitzProfile, objective
from .prox import L1, NoRegularizer, parse_regularizer


def _matrix(a, name, ndim=2):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ConfigurationError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ConfigurationError(f"{name} has no rows")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


class PortfolioProblem(KernelProblem):
    """Risk-averse portfolio: maximise mean return minus ``risk_weight`` times variance.

    Components ``g_i(x) = (R_i.x, (R_i.x)^2)`` and
    ``f(y1, y2) = -y1 - risk_weight * (y1^2 - y2)``, so ``f(g(x))`` is
    ``-mean + risk_weight * var`` of the portfolio return.

    Parameters
    ----------
    returns : (n, d) array
        Per-period returns, one row per sample.
    risk_weight : float
    regularizer : regularizer or spec string
    radius : float
        Lipschitz constants are computed over the ball ``||x|| <= radius``.
    """

    name = "portfolio"

    def __init__(self, returns, risk_weight=0.2, regularizer=None, radius=1.0):
        R = _matrix(returns, "returns")
        if not (math.isfinite(risk_weight) and risk_weight >= 0):
            raise ConfigurationError("risk_weight must be >= 0")
        super().__init__("portfolio", (R,))
        self.R = R
        self.n, self.d = R.shape
        self.p = 2
        self.N = 1
        self.risk_weight = float(risk_weight)
        self.regularizer = L1(0.01) if regularizer is None else parse_regularizer(regularizer)
        self.radius = float(radius)
        self.lipschitz = self._profile()

    def _profile(self):
        row = float(np.sqrt((self.R ** 2).sum(axis=1)).max())
        lam, rho = self.risk_weight, self.radius
        umax = row * rho
        l_g = row * math.sqrt(1.0 + 4.0 * umax ** 2)
        L_g = 2.0 * row ** 2
        l_f = math.hypot(1.0 + 2.0 * lam * umax, lam)
        # f is quadratic with Hessian diag(-2 lam, 0); floor keeps the profile valid at lam = 0
        L_f = max(2.0 * lam, 1e-12)
        return LipschitzProfile(l_f=l_f, L_f=L_f, l_g=max(l_g, 1e-12), L_g=L_g)

    def outer_value(self, w):
        return -w[0] - self.risk_weight * (w[0] ** 2 - w[1])

    def outer_grad(self, w):
        return np.array([-1.0 - 2.0 * self.risk_weight * w[0], self.risk_weight])

    def metadata(self):
        meta = super().metadata()
        meta.update(risk_weight=self.risk_weight, regularizer=self.regularizer.describe())
        return meta


def spam_penalty(w):
    """Smoothed square root: ``sqrt|w|`` for ``|w| >= 1``, else ``1.75 w^2 - 0.75 w^4``."""
    w = np.asarray(w, dtype=np.float64)
    a = np.abs(w)
    inner = 1.75 * w ** 2 - 0.75 * w ** 4
    return np.where(a >= 1.0, np.sqrt(a), inner)


def spam_penalty_grad(w):
    w = np.asarray(w, dtype=np.float64)
    a = np.abs(w)
    inner = 3.5 * w - 3.0 * w ** 3
    outer = np.sign(w) * 0.5 / np.sqrt(np.maximum(a, 1.0))
    return np.where(a >= 1.0, outer, inner)


# sup |s'| is attained inside at w^2 = 3.5 / 9; sup |s''| = 5.5 at |w| = 1 from the inside
_SPAM_DS_MAX = float(3.5 * math.sqrt(3.5 / 9.0) - 3.0 * (3.5 / 9.0) ** 1.5)
_SPAM_D2S_MAX = 5.5


class SpamProblem(KernelProblem):
    """Modified sparse additive model with per-feature linear models ``theta_j x_j``.

    Inner components (``p = d + 1``)::

        g_i(theta) = ((y_i - |X_i.theta|)^2, (theta_1 X_i1)^2, ..., (theta_d X_id)^2)

    Outer components ``f_1(w) = w_1`` and ``f_k(w) = group_weight * s(w_k)`` for
    ``k >= 2``; the outer function is their average over ``N = d + 1``.  The
    kink of ``|.|`` at zero uses ``sign(0) = 0``.
    """

    name = "spam"

    def __init__(self, X, y, group_weight=1.0, l1_weight=0.001, radius=1.0):
        X = _matrix(X, "X")
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise ConfigurationError(f"y must have length {X.shape[0]}, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ConfigurationError("y has non-finite entries")
        y.setflags(write=False)
        if not (math.isfinite(group_weight) and group_weight >= 0):
            raise ConfigurationError("group_weight must be >= 0")
        super().__init__("spam", (X, y))
        self.X, self.y = X, y
        self.n, self.d = X.shape
        self.p = self.d + 1
        self.N = self.d + 1
        self.group_weight = float(group_weight)
        self.regularizer = L1(l1_weight) if l1_weight > 0 else NoRegularizer()
        self.radius = float(radius)
        self.lipschitz = self._profile()

    def _profile(self):
        rows = np.sqrt((self.X ** 2).sum(axis=1))
        xmax = float(np.abs(self.X).max())
        rho = self.radius
        c = 2.0 * (np.abs(self.y) + rows * rho)
        l_g = float(np.sqrt((c * rows) ** 2 + (2.0 * rho * xmax ** 2) ** 2 * self.d).max())
        # the |.| kink makes row 0 only piecewise smooth; the bound ignores it
        L_g = float(2.0 * (rows ** 2).max() + 2.0 * xmax ** 2)
        lam, N = self.group_weight, self.N
        l_f = math.sqrt(1.0 + self.d * (lam * _SPAM_DS_MAX) ** 2) / N
        L_f = max(lam * _SPAM_D2S_MAX / N, 1e-12)
        return LipschitzProfile(l_f=l_f, L_f=L_f, l_g=max(l_g, 1e-12), L_g=L_g)

    def outer_components(self, w):
        """Values ``f_1(w), ..., f_N(w)``."""
        vals = np.empty(self.N)
        vals[0] = w[0]
        vals[1:] = self.group_weight * spam_penalty(w[1:])
        return vals

    def outer_value(self, w):
        return float(self.outer_components(w).sum() / self.N)

    def _component_grads(self, w):
        # component k has a single nonzero partial, at coordinate k
        gk = np.empty(self.N)
        gk[0] = 1.0
        gk[1:] = self.group_weight * spam_penalty_grad(w[1:])
        return gk

    def outer_grad(self, w):
        return self._component_grads(w) / self.N

    def outer_grad_mean(self, w, batch):
        if batch is None:
            return self.outer_grad(w)
        gk = self._component_grads(w)
        return np.bincount(batch, weights=gk[batch], minlength=self.N) / len(batch)

    def outer_grad_diff_mean(self, w, wp, batch):
        if batch is None:
            return self.outer_grad(w) - self.outer_grad(wp)
        diff = self._component_grads(w) - self._component_grads(wp)
        return np.bincount(batch, weights=diff[batch], minlength=self.N) / len(batch)

    def metadata(self):
        meta = super().metadata()
        meta.update(group_weight=self.group_weight, regularizer=self.regularizer.describe())
        return meta


class LinearCompositionProblem(KernelProblem):
    """``F(x) = 0.5 ||mean_i(A_i) x - b||^2`` written as ``f(g(x))`` with ``g_i = A_i x``.

    Gradient dominant with ``v = 1 / sigma_min(A_bar)^2`` (smallest positive
    singular value).  ``x_star`` and ``F_star`` are exact least-squares values.
    """

    name = "linear"

    def __init__(self, A, b, regularizer=None, radius=None):
        A = _matrix(A, "A", ndim=3)
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape != (A.shape[1],):
            raise ConfigurationError(f"b must have length {A.shape[1]}, got shape {b.shape}")
        super().__init__("linear", (A,))
        self.A, self.b = A, b
        self.n, self.p, self.d = A.shape
        self.N = 1
        self.regularizer = NoRegularizer() if regularizer is None else parse_regularizer(regularizer)
        Abar = A.mean(axis=0)
        self.A_bar = Abar
        self.x_star, *_ = np.linalg.lstsq(Abar, b, rcond=None)
        res = Abar @ self.x_star - b
        self.F_star = 0.5 * float(res @ res)
        sv = np.linalg.svd(Abar, compute_uv=False)
        pos = sv[sv > sv[0] * 1e-12] if sv[0] > 0 else sv[:0]
        if pos.size == 0:
            raise ConfigurationError("mean inner map is zero")
        self.v = 1.0 / float(pos[-1]) ** 2
        self.radius = float(radius) if radius is not None else 2.0 * (1.0 + float(np.linalg.norm(self.x_star)))
        l_g = float(np.sqrt((A ** 2).sum(axis=(1, 2))).max())
        l_f = l_g * self.radius + float(np.linalg.norm(b))
        self.lipschitz = LipschitzProfile(l_f=l_f, L_f=1.0, l_g=l_g, L_g=0.0, v_graddom=self.v)

    def outer_value(self, w):
        r = w - self.b
        return 0.5 * float(r @ r)

    def outer_grad(self, w):
        return w - self.b

    def metadata(self):
        meta = super().metadata()
        meta.update(F_star=self.F_star, v=self.v)
        return meta


def identity_quadratic(b, scale=1.0):
    """``F(x) = 0.5 ||scale * x - b||^2`` as a single-component linear composition."""
    b = np.asarray(b, dtype=np.float64)
    A = (scale * np.eye(b.shape[0]))[None]
    return LinearCompositionProblem(A, b)


def random_linear_problem(rng, n=64, d=10, p=None, spread=0.1, cond=3.0):
    """Well-conditioned ``A_i = A_bar + spread * E_i`` least-squares instance.

    ``A_bar`` has singular values spaced between 1 and ``cond``.
    """
    p = d if p is None else p
    U, _ = np.linalg.qr(rng.standard_normal((p, p)))
    V, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = np.linspace(cond, 1.0, min(p, d))
    Abar = U[:, :d] * s @ V.T if p >= d else (U * s) @ V[:p]
    E = rng.standard_normal((n, p, d)) / math.sqrt(p * d)
    E -= E.mean(axis=0)
    A = Abar + spread * E
    b = rng.standard_normal(p)
    return LinearCompositionProblem(A, b)


class SmoothSyntheticProblem(CompositionProblem):
    """``g_i(x) = A_i sin(x) + B_i x`` and ``f(y) = sum_k (sqrt(1 + y_k^2) - 1)``.

    Constants are certified: ``l_g = max_i ||A_i||_F + ||B_i||_F``,
    ``L_g = max_i`` largest column norm of ``A_i``, ``l_f = sqrt(p)``, ``L_f = 1``.
    """

    name = "smooth-synthetic"

    def __init__(self, A, B, regularizer=None):
        A = _matrix(A, "A", ndim=3)
        B = _matrix(B, "B", ndim=3)
        if A.shape != B.shape:
            raise ConfigurationError("A and B must have the same shape")
        self.A, self.B = A, B
        self.n, self.p, self.d = A.shape
        self.N = 1
        self.regularizer = NoRegularizer() if regularizer is None else parse_regularizer(regularizer)
        fro = lambda M: np.sqrt((M ** 2).sum(axis=(1, 2)))
        l_g = float((fro(A) + fro(B)).max())
        L_g = float(np.sqrt((A ** 2).sum(axis=1)).max())
        self.lipschitz = LipschitzProfile(l_f=math.sqrt(self.p), L_f=1.0, l_g=l_g, L_g=L_g)

    @classmethod
    def random(cls, rng, n=6, d=3, p=2, scale=1.0):
        A = scale * rng.standard_normal((n, p, d)) / math.sqrt(d)
        B = scale * rng.standard_normal((n, p, d)) / math.sqrt(d)
        return cls(A, B)

    def _values(self, x, batch):
        return np.einsum("kpd,d->kp", self.A[batch], np.sin(x)) + np.einsum("kpd,d->kp", self.B[batch], x)

    def _jacs(self, x, batch):
        return self.A[batch] * np.cos(x) + self.B[batch]

    def inner_mean(self, x, batch):
        return self._values(x, batch).sum(axis=0) / len(batch)

    def inner_diff_mean(self, x, xp, batch):
        return (self._values(x, batch) - self._values(xp, batch)).sum(axis=0) / len(batch)

    def jac_mean(self, x, batch):
        return self._jacs(x, batch).sum(axis=0) / len(batch)

    def jac_diff_mean(self, x, xp, batch):
        return (self._jacs(x, batch) - self._jacs(xp, batch)).sum(axis=0) / len(batch)

    def outer_value(self, w):
        return float((np.sqrt(1.0 + w ** 2) - 1.0).sum())

    def outer_grad(self, w):
        return w / np.sqrt(1.0 + w ** 2)


class OnlineShiftProblem(CompositionProblem):
    """Online inner map ``g_xi(x) = x + xi`` with ``xi ~ N(0, noise^2 I)``.

    ``f(y) = 0.5 ||y - b||^2``.  A batch is the drawn ``(m, d)`` noise array.
    Full oracles use a fixed-seed surrogate sample of ``surrogate_size`` draws.
    """

    name = "online-shift"
    n = ONLINE

    def __init__(self, b, noise=1.0, surrogate_size=10_000, surrogate_seed=0, radius=10.0):
        self.b = np.asarray(b, dtype=np.float64)
        self.d = self.p = self.b.shape[0]
        self.N = 1
        self.noise = float(noise)
        self.regularizer = NoRegularizer()
        self.surrogate_size = int(surrogate_size)
        self.surrogate_seed = int(surrogate_seed)
        self._surrogate = None
        sqd = math.sqrt(self.d)
        self.lipschitz = LipschitzProfile(
            l_f=radius + self.noise * sqd + float(np.linalg.norm(self.b)), L_f=1.0,
            l_g=sqd, L_g=0.0, sigma_g=self.noise * sqd, sigma_gp=0.0, sigma_fp=self.noise * sqd)

    def draw_inner(self, rng, m):
        return rng.normal(0.0, self.noise, size=(m, self.d))

    def full_inner_batch(self):
        if self._surrogate is None:
            rng = np.random.Generator(np.random.Philox(self.surrogate_seed))
            self._surrogate = rng.normal(0.0, self.noise, size=(self.surrogate_size, self.d))
        return self._surrogate

    def inner_mean(self, x, batch):
        return x + batch.sum(axis=0) / len(batch)

    def inner_diff_mean(self, x, xp, batch):
        return x - xp

    def jac_mean(self, x, batch):
        return np.eye(self.d)

    def jac_diff_mean(self, x, xp, batch):
        return np.zeros((self.d, self.d))

    def component(self, x, xi):
        return x + xi, np.eye(self.d)

    def outer_value(self, w):
        r = w - self.b
        return 0.5 * float(r @ r)

    def outer_grad(self, w):
        return w - self.b

    def metadata(self):
        meta = super().metadata()
        meta.update(surrogate_size=self.surrogate_size, surrogate_seed=self.surrogate_seed, noise=self.noise)
        return meta


def portfolio_objective(prob, x):
    """``f(g(x)) + r(x)`` for a portfolio problem."""
    return objective(prob, x)


def spam_objective(prob, theta):
    """Average of the outer components at the inner average, plus the L1 term."""
    return objective(prob, theta)


def synthetic_graddom_constant(prob):
    """Gradient-dominance constant ``v`` of a least-squares composition."""
    if not isinstance(prob, LinearCompositionProblem):
        raise ConfigurationError(f"gradient-dominance constant unsupported for {type(prob).__name__}")
    return prob.v
