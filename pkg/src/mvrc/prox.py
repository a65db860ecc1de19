"""Convex regularizers, their proximal maps, and the gradient mapping."""
import math

import numpy as np

from .core import ConfigurationError, as_point, full_gradient


class NoRegularizer:
    """r(x) = 0."""

    mu = 0.0

    def value(self, x):
        return 0.0

    def prox(self, step, x):
        return np.array(x, dtype=np.float64, copy=True)

    def describe(self):
        return "none"

    def __eq__(self, other):
        return isinstance(other, NoRegularizer)

    def __hash__(self):
        return hash("none")

    def __repr__(self):
        return "NoRegularizer()"


class L1:
    """r(x) = mu * ||x||_1 with soft-thresholding prox.

    New convex regularizers only need ``value``, ``prox(step, x)`` and
    ``describe``.
    """

    def __init__(self, mu):
        mu = float(mu)
        if not (math.isfinite(mu) and mu >= 0):
            raise ConfigurationError(f"L1 weight must be finite and >= 0, got {mu}")
        self.mu = mu

    def value(self, x):
        return self.mu * float(np.abs(x).sum())

    def prox(self, step, x):
        thr = step * self.mu
        return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)

    def describe(self):
        return f"l1:{self.mu!r}"

    def __eq__(self, other):
        return isinstance(other, L1) and other.mu == self.mu

    def __hash__(self):
        return hash(("l1", self.mu))

    def __repr__(self):
        return f"L1(mu={self.mu!r})"


def parse_regularizer(spec):
    """``"none"`` or ``"l1:<mu>"`` (also accepts a bare float as an L1 weight)."""
    if isinstance(spec, (NoRegularizer, L1)):
        return spec
    if spec is None:
        return NoRegularizer()
    if isinstance(spec, (int, float)):
        return L1(spec) if spec > 0 else NoRegularizer()
    text = str(spec).strip().lower()
    if text in ("none", "0", ""):
        return NoRegularizer()
    if text.startswith("l1:"):
        try:
            return L1(float(text[3:]))
        except ValueError as exc:
            raise ConfigurationError(f"bad L1 weight in {spec!r}") from exc
    raise ConfigurationError(f"unknown regularizer {spec!r}")


def _check_step(step):
    if not (isinstance(step, (int, float, np.floating)) and math.isfinite(step) and step > 0):
        raise ConfigurationError(f"prox step must be finite and > 0, got {step!r}")


def prox(reg, step, x):
    """argmin_y r(y) + ||y - x||^2 / (2 step)."""
    _check_step(step)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("prox input has non-finite entries")
    return reg.prox(step, x)


def gradient_mapping(problem, step, x):
    """Return ``(G, ||G||)`` with ``G = (x - prox(x - step * grad F(x))) / step``."""
    _check_step(step)
    x = as_point(x, problem.d)
    grad = full_gradient(problem, x)
    if problem.regularizer.mu == 0:
        # prox is the identity, so G = grad F exactly; skip the round trip through x
        G = grad
    else:
        G = (x - prox(problem.regularizer, step, x - step * grad)) / step
    return G, float(np.linalg.norm(G))
