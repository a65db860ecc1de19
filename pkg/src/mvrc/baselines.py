"""Reference solvers: SCGD, ASC-PG and CIVR.

SCGD and ASC-PG follow their original publications (external reference):

SCGD (two-timescale stochastic compositional gradient)::

    y_{t+1} = (1 - b_t) y_t + b_t g_A(x_t)
    x_{t+1} = prox_{a_t r}(x_t - a_t g'_{A'}(x_t)^T grad f_B(y_{t+1}))

with ``a_t = a t^{-3/4}``, ``b_t = b t^{-1/2}``.

ASC-PG (accelerated stochastic compositional proximal gradient)::

    x_{t+1} = prox_{a_t r}(x_t - a_t g'_{A'}(x_t)^T grad f_B(y_t))
    z_{t+1} = (1 - 1/b_t) x_t + (1/b_t) x_{t+1}
    y_{t+1} = (1 - b_t) y_t + b_t g_A(z_{t+1})

with ``a_t = a t^{-5/9}``, ``b_t = b t^{-4/9}`` and ``y_0 = g_A(x_0)``.

In both, ``t`` starts at 1 and ``b_t`` is clipped to at most 1.  CIVR is
MVRC-1 with ``lambda_t = beta``, which makes the momentum sequences collapse
onto ``x``.
"""
from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigurationError, as_point
from .data import make_rng
from .solvers import SolverOutput, _Recorder, run_mvrc1
from ._accel import backend_name
from .prox import prox

SCGD = "scgd"
ASCPG = "ascpg"

_DEFAULTS = {
    SCGD: {"a": 1e-3, "b": 1.0, "a_exp": 0.75, "b_exp": 0.5},
    ASCPG: {"a": 1e-4, "b": 1.0, "a_exp": 5.0 / 9.0, "b_exp": 4.0 / 9.0},
}


@dataclass(frozen=True)
class BaselineConfig:
    """Schedules and batch sizes for SCGD / ASC-PG.

    ``None`` for ``a``, ``b`` or the exponents takes the algorithm's default.
    ``batch_gp=None`` reuses ``batch_g``; ``shared_A`` makes the Jacobian use the
    same draw as ``g``.
    """

    algorithm: str
    T: int
    a: float = None
    b: float = None
    a_exp: float = None
    b_exp: float = None
    batch_g: int = 1
    batch_gp: int = None
    batch_f: int = 1
    shared_A: bool = False
    seed: int = 0
    metric_every: int = None
    metric_step: float = None
    record_path: bool = False
    compute_metrics: bool = True

    def __post_init__(self):
        if self.algorithm not in _DEFAULTS:
            raise ConfigurationError(f"unknown baseline {self.algorithm!r}")
        for k, v in _DEFAULTS[self.algorithm].items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        if self.batch_gp is None:
            object.__setattr__(self, "batch_gp", self.batch_g)
        if isinstance(self.T, bool) or not isinstance(self.T, (int, np.integer)) or self.T < 1:
            raise ConfigurationError(f"T must be an integer >= 1, got {self.T!r}")
        for name in ("batch_g", "batch_gp", "batch_f"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {v!r}")
        if self.shared_A and self.batch_gp != self.batch_g:
            raise ConfigurationError("shared_A needs batch_gp == batch_g")
        if self.a < 0 or self.b < 0:
            raise ConfigurationError("step scales must be >= 0")
        if self.metric_step is not None and not self.metric_step > 0:
            raise ConfigurationError("metric_step must be > 0")

    def a_at(self, t):
        return self.a * t ** (-self.a_exp)

    def b_at(self, t):
        return min(1.0, self.b * t ** (-self.b_exp))

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class _Sampler:
    def __init__(self, problem, cfg, rng):
        self.p, self.cfg, self.rng = problem, cfg, rng
        self.counts = {"samples_g": 0, "samples_gp": 0, "samples_fgrad": 0, "prox_evals": 0}

    def inner(self, x):
        A = self.p.draw_inner(self.rng, self.cfg.batch_g)
        self.counts["samples_g"] += self.p.batch_size(A)
        return self.p.inner_mean(x, A), A

    def jac(self, x, A=None):
        if not self.cfg.shared_A or A is None:
            A = self.p.draw_inner(self.rng, self.cfg.batch_gp)
        self.counts["samples_gp"] += self.p.batch_size(A)
        return self.p.jac_mean(x, A)

    def outer_grad(self, w):
        B = self.p.draw_outer(self.rng, self.cfg.batch_f)
        self.counts["samples_fgrad"] += self.p.outer_batch_size(B)
        return self.p.outer_grad_mean(w, B)


def _finish(rec, x, x_prev, sampler, cfg, zeta, z_out):
    meta = {"algorithm": cfg.algorithm, "seed": cfg.seed, "T": cfg.T, "zeta": zeta, "config": cfg.as_dict(),
            "backend": backend_name(), "metric_every": rec.every}
    return SolverOutput(trace=rec.trace, final_point=x, sampled_output=z_out, counters=dict(sampler.counts),
                        penultimate_point=x_prev, meta=meta, path=rec.path)


def _setup(problem, x0, cfg, algorithm):
    if cfg.algorithm != algorithm:
        raise ConfigurationError(f"config is for {cfg.algorithm!r}, not {algorithm!r}")
    x = as_point(x0, problem.d, "x0")
    rng = make_rng(cfg.seed, "baseline")
    zeta = int(make_rng(cfg.seed, "zeta").integers(0, cfg.T))
    rec = _Recorder(problem, cfg.T, cfg.metric_every, cfg.metric_step, cfg.record_path, cfg.compute_metrics)
    return x, _Sampler(problem, cfg, rng), rec, zeta


def run_scgd(problem, x0, config):
    """Two-timescale SCGD with a proximal step (external reference)."""
    x, s, rec, zeta = _setup(problem, x0, config, SCGD)
    reg = problem.regularizer
    y = None
    x_prev, z_out = x.copy(), None
    rec.keep(xs=x)
    for k in range(config.T):
        t = k + 1
        a, b = config.a_at(t), config.b_at(t)
        gA, A = s.inner(x)
        y = gA if y is None else (1.0 - b) * y + b * gA
        J = s.jac(x, A)
        grad = J.T @ s.outer_grad(y)
        x_new = prox(reg, a, x - a * grad) if a > 0 else x.copy()
        s.counts["prox_evals"] += 1
        if k == zeta:
            z_out = x.copy()
        rec.record(k, x, a if a > 0 else 1.0, s.counts)
        rec.keep(xs=x_new)
        x_prev, x = x, x_new
    return _finish(rec, x, x_prev, s, config, zeta, z_out)


def run_ascpg(problem, x0, config):
    """ASC-PG with extrapolated inner tracking (external reference)."""
    x, s, rec, zeta = _setup(problem, x0, config, ASCPG)
    reg = problem.regularizer
    y, _ = s.inner(x)
    x_prev, z_out = x.copy(), None
    rec.keep(xs=x)
    for k in range(config.T):
        t = k + 1
        a, b = config.a_at(t), config.b_at(t)
        J = s.jac(x)
        grad = J.T @ s.outer_grad(y)
        x_new = prox(reg, a, x - a * grad) if a > 0 else x.copy()
        s.counts["prox_evals"] += 1
        if b > 0:
            z = (1.0 - 1.0 / b) * x + (1.0 / b) * x_new
            gz, _ = s.inner(z)
            y = (1.0 - b) * y + b * gz
        if k == zeta:
            z_out = x.copy()
        rec.record(k, x, a if a > 0 else 1.0, s.counts)
        rec.keep(xs=x_new)
        x_prev, x = x, x_new
    return _finish(rec, x, x_prev, s, config, zeta, z_out)


def run_civr(problem, x0, config):
    """CIVR: MVRC-1 with ``lambda_t = beta`` (no momentum), same estimator and seed."""
    config = replace(config, schedule=replace(config.schedule, lambda_scale=0.0))
    out = run_mvrc1(problem, x0, config)
    out.meta["algorithm"] = "civr"
    return out
