"""Problem abstraction and exact full-batch oracles.

A composition problem is ``Phi(x) = f(g(x)) + r(x)`` where the inner map
``g: R^d -> R^p`` is an average (finite-sum) or expectation (online) of
components ``g_xi`` and the outer ``f`` is either a single smooth function or
an average of ``N`` components ``f_eta``.
"""
from dataclasses import dataclass
import math

import numpy as np


class ConfigurationError(ValueError):
    """Invalid problem, point, or solver configuration."""


class SequencingError(RuntimeError):
    """An estimator operation was called at the wrong iteration."""


ONLINE = "online"


def as_point(x, d, name="x"):
    """Return ``x`` as a fresh float64 vector of length ``d``, or raise."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 1 or arr.shape[0] != d:
        raise ConfigurationError(f"{name} must be a vector of length {d}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class LipschitzProfile:
    """Smoothness and variance constants of a composition problem.

    ``l_f``/``L_f`` bound ``|grad f|`` and the Lipschitz constant of ``grad f``;
    ``l_g``/``L_g`` do the same for every component ``g_xi`` and its Jacobian.
    ``L_g`` may be zero (affine inner maps).  The sigma fields bound the
    per-sample variances of ``g``, ``g'`` and ``grad f`` for online problems;
    matrix norms are Frobenius.
    """

    l_f: float
    L_f: float
    l_g: float
    L_g: float
    sigma_g: float = 0.0
    sigma_gp: float = 0.0
    sigma_fp: float = 0.0
    v_graddom: float = None

    def __post_init__(self):
        for name in ("l_f", "L_f", "l_g"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be finite and > 0, got {val}")
        for name in ("L_g", "sigma_g", "sigma_gp", "sigma_fp"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {val}")
        if self.v_graddom is not None and not self.v_graddom > 0:
            raise ConfigurationError("v_graddom must be > 0 when given")

    @property
    def L_F(self):
        """Lipschitz constant of grad F: l_g^2 L_f + l_f L_g."""
        return self.l_g ** 2 * self.L_f + self.l_f * self.L_g

    @property
    def G_0(self):
        return 2.0 * (self.l_g ** 4 * self.L_f ** 2 + self.l_f ** 2 * self.L_g ** 2)

    def sigma0_sq(self, online):
        """Checkpoint variance constant; zero for finite sums."""
        if not online:
            return 0.0
        return 2.0 * (self.l_g ** 2 * self.L_f ** 2 * self.sigma_g ** 2 + self.l_f ** 2 * self.sigma_gp ** 2)


class CompositionProblem:
    """Sampled access to ``g_xi``, ``g'_xi`` and ``grad f_eta``.

    Subclasses set ``d``, ``p``, ``n`` (int, or ``ONLINE``), ``N`` (int, or
    ``ONLINE``), ``regularizer`` and ``lipschitz``, and implement the batch-mean
    oracles.  A *batch* is whatever :meth:`draw_inner` returns: an index array
    for finite sums, drawn component parameters for online problems.
    """

    d: int
    p: int
    n = ONLINE
    N = 1
    lipschitz = None
    regularizer = None
    name = "problem"

    @property
    def finite_sum(self):
        return self.n != ONLINE

    @property
    def online(self):
        return self.n == ONLINE

    @property
    def single_outer(self):
        return self.N == 1

    # -- inner sampling ----------------------------------------------------
    def draw_inner(self, rng, m):
        """Draw ``m`` components uniformly with replacement.

        On a finite sum, asking for exactly ``n`` components enumerates
        ``0..n-1`` once instead (and consumes no randomness).
        """
        if m == self.n:
            return np.arange(self.n, dtype=np.int64)
        return rng.integers(0, self.n, size=m, dtype=np.int64)

    def full_inner_batch(self):
        return np.arange(self.n, dtype=np.int64)

    def inner_mean(self, x, batch):
        raise NotImplementedError

    def inner_diff_mean(self, x, xp, batch):
        raise NotImplementedError

    def jac_mean(self, x, batch):
        raise NotImplementedError

    def jac_diff_mean(self, x, xp, batch):
        raise NotImplementedError

    def batch_size(self, batch):
        return len(batch)

    def component(self, x, i):
        """Value and Jacobian of the single component ``g_i`` at ``x``."""
        batch = np.array([i], dtype=np.int64)
        return self.inner_mean(x, batch), self.jac_mean(x, batch)

    # -- outer ---------------------------------------------------------------
    def outer_value(self, w):
        raise NotImplementedError

    def outer_grad(self, w):
        """Exact gradient of the (averaged) outer function."""
        raise NotImplementedError

    def draw_outer(self, rng, m):
        if self.single_outer:
            return None
        if m == self.N:
            return np.arange(self.N, dtype=np.int64)
        return rng.integers(0, self.N, size=m, dtype=np.int64)

    def outer_grad_mean(self, w, batch):
        if batch is None:
            return self.outer_grad(w)
        raise NotImplementedError

    def outer_grad_diff_mean(self, w, wp, batch):
        if batch is None:
            return self.outer_grad(w) - self.outer_grad(wp)
        raise NotImplementedError

    def outer_batch_size(self, batch):
        return 1 if batch is None else len(batch)

    def metadata(self):
        return {"name": self.name, "d": self.d, "p": self.p, "n": self.n, "N": self.N}


class KernelProblem(CompositionProblem):
    """Finite-sum problem backed by one of the compiled kernel families."""

    def __init__(self, family, data):
        from .kernels import KERNELS
        self._data = data
        self._inner, self._inner_diff, self._jac, self._jac_diff = KERNELS[family]

    def inner_mean(self, x, batch):
        return self._inner(*self._data, batch, x)

    def inner_diff_mean(self, x, xp, batch):
        return self._inner_diff(*self._data, batch, x, xp)

    def jac_mean(self, x, batch):
        return self._jac(*self._data, batch, x)

    def jac_diff_mean(self, x, xp, batch):
        if self._jac_diff is None:
            # affine family: the Jacobian does not depend on x
            return np.zeros((self.p, self.d))
        return self._jac_diff(*self._data, batch, x, xp)


def full_inner(problem, x):
    """Exact ``(g(x), g'(x))``: the index-ordered mean over every component.

    Online problems use their fixed-seed surrogate sample instead.
    """
    x = as_point(x, problem.d)
    batch = problem.full_inner_batch()
    return problem.inner_mean(x, batch), problem.jac_mean(x, batch)


def full_gradient(problem, x):
    """``grad F(x) = g'(x)^T grad f(g(x))`` with exact inner and outer averages."""
    g, J = full_inner(problem, x)
    return J.T @ problem.outer_grad(g)


def smooth_objective(problem, x):
    """``F(x) = f(g(x))`` without the regularizer."""
    x = as_point(x, problem.d)
    return float(problem.outer_value(problem.inner_mean(x, problem.full_inner_batch())))


def objective(problem, x):
    """``Phi(x) = F(x) + r(x)``."""
    return smooth_objective(problem, x) + float(problem.regularizer.value(x))
