"""MVRC-1 / MVRC-2 iteration loops, schedules, step-size calculators and restarts.

Both methods keep three sequences: the prox iterate ``x``, the momentum
sequence ``y`` and the query point ``z`` blended from them.  Each iteration
performs exactly one proximal step.
"""
from dataclasses import dataclass, field, replace
import math
import time

import numpy as np

from . import estimators as est
from ._accel import backend_name
from .core import ConfigurationError, as_point, objective
from .data import make_rng
from .estimators import MVRC1, MVRC2, BatchPlan
from .prox import gradient_mapping, prox

DIMINISHING = "diminishing"
CONSTANT = "constant"


@dataclass(frozen=True)
class MomentumSchedule:
    """Momentum weights ``alpha_t`` and prox steps ``lambda_t``.

    Diminishing: ``alpha_t = 2 / (t + 1)`` (so ``alpha_1 = 1``).  Constant:
    ``alpha_t = alpha``.  The step is ``lambda_t = (1 + lambda_scale * alpha_t) beta``;
    ``lambda_scale = 1`` is the default rule and ``0`` gives ``lambda_t = beta``,
    which switches momentum off.
    """

    kind: str = DIMINISHING
    beta: float = 1e-3
    alpha: float = None
    lambda_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (DIMINISHING, CONSTANT):
            raise ConfigurationError(f"unknown momentum schedule {self.kind!r}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigurationError(f"beta must be > 0, got {self.beta}")
        if self.kind == CONSTANT:
            if self.alpha is None or not (0 < self.alpha <= 1):
                raise ConfigurationError(f"constant momentum needs alpha in (0, 1], got {self.alpha}")
        elif self.alpha is not None:
            raise ConfigurationError("alpha is only set for constant momentum")
        if not (0 <= self.lambda_scale <= 1):
            raise ConfigurationError(f"lambda_scale must lie in [0, 1], got {self.lambda_scale}")

    def alpha_at(self, t):
        if self.kind == CONSTANT:
            return self.alpha
        return 2.0 / (t + 1)

    def lam_at(self, t):
        return (1.0 + self.lambda_scale * self.alpha_at(t)) * self.beta

    def as_dict(self):
        return {"kind": self.kind, "beta": self.beta, "alpha": self.alpha, "lambda_scale": self.lambda_scale}


@dataclass(frozen=True)
class RestartPolicy:
    """``none``, ``chain`` (warm start from ``x_{T-1}``), ``epoch`` (continue from
    ``x_T`` with ``t`` and ``y`` reset), or ``graddom`` (warm start from a
    uniformly drawn ``z_t`` of the previous run)."""

    kind: str = "none"
    M: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "chain", "epoch", "graddom"):
            raise ConfigurationError(f"unknown restart policy {self.kind!r}")
        if isinstance(self.M, bool) or not isinstance(self.M, (int, np.integer)) or self.M < 1:
            raise ConfigurationError(f"restart count M must be an integer >= 1, got {self.M!r}")
        if self.kind == "none" and self.M != 1:
            raise ConfigurationError("restart kind 'none' requires M = 1")


@dataclass(frozen=True)
class SolverConfig:
    """Everything a run needs besides the problem and starting point.

    ``metric_every=None`` records every iteration up to ``T = 10^4`` and every
    ``ceil(T / 10^4)``-th beyond; the first and last iterations are always
    recorded.  ``metric_step=None`` evaluates the gradient mapping with the
    current ``lambda_t``.
    """

    algorithm: str
    schedule: MomentumSchedule
    T: int
    tau: int
    batch_plan: BatchPlan
    epsilon: float = None
    restart: RestartPolicy = field(default_factory=RestartPolicy)
    seed: int = 0
    metric_every: int = None
    metric_step: float = None
    record_path: bool = False
    compute_metrics: bool = True

    def __post_init__(self):
        if self.algorithm not in (MVRC1, MVRC2):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        for name in ("T", "tau"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {val!r}")
        if self.tau > self.T:
            raise ConfigurationError(f"tau ({self.tau}) must not exceed T ({self.T})")
        if self.algorithm == MVRC2 and not (self.epsilon is not None and self.epsilon > 0):
            raise ConfigurationError(f"MVRC-2 requires epsilon > 0, got {self.epsilon!r}")
        if self.metric_every is not None and self.metric_every < 1:
            raise ConfigurationError("metric_every must be >= 1")
        if self.metric_step is not None and not self.metric_step > 0:
            raise ConfigurationError("metric_step must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")


@dataclass
class IterationRecord:
    iter: int
    samples_g: int
    samples_gp: int
    samples_fgrad: int
    prox_evals: int
    grad_mapping_norm: float
    objective: float
    wall_ms: float

    @property
    def total_samples(self):
        return self.samples_g + self.samples_gp + self.samples_fgrad


TRACE_COLUMNS = ("iter", "samples_g", "samples_gp", "samples_fgrad", "prox_evals",
                 "grad_mapping_norm", "objective", "wall_ms")


@dataclass
class SolverOutput:
    trace: list
    final_point: np.ndarray
    sampled_output: np.ndarray
    counters: dict
    penultimate_point: np.ndarray = None
    meta: dict = field(default_factory=dict)
    path: dict = None


def metric_cadence(T, every=None):
    if every is None:
        every = 1 if T <= 10_000 else math.ceil(T / 10_000)
    return every


def _should_record(t, T, every):
    return t % every == 0 or t == T - 1


class _Recorder:
    """Collects trace rows and (optionally) the full iterate path."""

    def __init__(self, problem, T, every, metric_step, record_path, compute_metrics, iter_offset=0,
                 counter_offset=None, t0=None):
        self.problem = problem
        self.T = T
        self.every = metric_cadence(T, every)
        self.metric_step = metric_step
        self.compute_metrics = compute_metrics
        self.trace = []
        self.offset = iter_offset
        self.base = counter_offset or {"samples_g": 0, "samples_gp": 0, "samples_fgrad": 0, "prox_evals": 0}
        self.path = {"xs": [], "ys": [], "zs": [], "lams": [], "thetas": []} if record_path else None
        self.t0 = time.perf_counter() if t0 is None else t0

    def record(self, t, point, lam, counters):
        if not _should_record(t, self.T, self.every):
            return
        if self.compute_metrics:
            step = self.metric_step if self.metric_step is not None else lam
            _, gnorm = gradient_mapping(self.problem, step, point)
            obj = objective(self.problem, point)
        else:
            gnorm = obj = float("nan")
        b = self.base
        self.trace.append(IterationRecord(
            iter=self.offset + t,
            samples_g=b["samples_g"] + counters["samples_g"],
            samples_gp=b["samples_gp"] + counters["samples_gp"],
            samples_fgrad=b["samples_fgrad"] + counters["samples_fgrad"],
            prox_evals=b["prox_evals"] + counters["prox_evals"],
            grad_mapping_norm=gnorm, objective=obj,
            wall_ms=(time.perf_counter() - self.t0) * 1e3))

    def keep(self, **items):
        if self.path is not None:
            for k, v in items.items():
                self.path[k].append(np.array(v, copy=True) if isinstance(v, np.ndarray) else v)


def blend_weight(eps, lam, disp):
    """MVRC-2 step fraction ``min(eps * lam / disp, 1/2)``; ``1/2`` when ``disp == 0``."""
    if disp == 0.0:
        return 0.5
    return min(eps * lam / disp, 0.5)


def _check_problem(problem, config):
    if config.algorithm == MVRC1 and not problem.single_outer:
        raise ConfigurationError("MVRC-1 handles a single outer function only; use MVRC-2 for N > 1")
    if problem.finite_sum and problem.n < 1:
        raise ConfigurationError("problem has no inner components")


def _run(problem, x0, config, run_index=0, iter_offset=0, counter_offset=None, t0=None):
    _check_problem(problem, config)
    x = as_point(x0, problem.d, "x0")
    sched, T = config.schedule, config.T
    beta = sched.beta
    mode = config.algorithm
    if mode == MVRC2 and not config.batch_plan.independent_Ap:
        raise ConfigurationError("MVRC-2 needs a batch plan with independent A and A' draws")
    rng = make_rng(config.seed, "estimator", run_index)
    zeta = int(make_rng(config.seed, "zeta", run_index).integers(0, T))
    state = est.new_state(config.tau, config.batch_plan, mode)
    rec = _Recorder(problem, T, config.metric_every, config.metric_step, config.record_path,
                    config.compute_metrics, iter_offset, counter_offset, t0)
    reg = problem.regularizer
    eps = config.epsilon
    y = x.copy()
    prox_evals = 0
    z_out = None
    x_prev = x.copy()
    rec.keep(xs=x, ys=y)
    for t in range(T):
        a = sched.alpha_at(t + 1)
        lam = sched.lam_at(t)
        # same value as (1 - a) y + a x; this form returns x exactly when y == x
        z = y + a * (x - y)
        state = est.update(state, problem, z, rng)
        grad = est.approx_gradient(state, problem)
        x_tent = prox(reg, lam, x - lam * grad)
        prox_evals += 1
        theta = None
        if mode == MVRC2:
            theta = blend_weight(eps, lam, float(np.linalg.norm(x_tent - x)))
            x_new = x + theta * (x_tent - x)
        else:
            x_new = x_tent
        # z + (beta/lam)(x_new - x), arranged so that lam == beta and z == x give y == x_new bit for bit
        y = x_new + (beta / lam - 1.0) * (x_new - x) + (z - x)
        if t == zeta:
            z_out = z.copy()
        counters = state.counters()
        counters["prox_evals"] = prox_evals
        rec.record(t, z, lam, counters)
        rec.keep(xs=x_new, ys=y, zs=z, lams=lam, thetas=theta)
        x_prev, x = x, x_new
    counters = state.counters()
    counters["prox_evals"] = prox_evals
    meta = {"algorithm": mode, "zeta": zeta, "seed": config.seed, "run_index": run_index, "T": T,
            "tau": config.tau, "schedule": sched.as_dict(), "batch_plan": config.batch_plan.as_dict(),
            "epsilon": eps, "backend": backend_name(), "metric_every": rec.every, "metric_step": config.metric_step}
    return SolverOutput(trace=rec.trace, final_point=x, sampled_output=z_out, counters=counters,
                        penultimate_point=x_prev, meta=meta, path=rec.path)


def run_mvrc1(problem, x0, config):
    """Single MVRC-1 run (exact outer gradient, shared ``A`` for ``g`` and ``g'``)."""
    if config.algorithm != MVRC1:
        raise ConfigurationError("run_mvrc1 needs algorithm 'mvrc1'")
    return _run(problem, x0, config)


def run_mvrc2(problem, x0, config):
    """Single MVRC-2 run (tracked outer gradient, step length capped at ``epsilon * lambda_t``)."""
    if config.algorithm != MVRC2:
        raise ConfigurationError("run_mvrc2 needs algorithm 'mvrc2'")
    return _run(problem, x0, config)


def run(problem, x0, config):
    """Dispatch on ``config.restart``; a single run when there is no restart."""
    if config.restart.kind == "none":
        return _run(problem, x0, config)
    return run_with_restarts(problem, x0, config)


def run_with_restarts(problem, x0, config):
    """Chain ``M`` runs according to ``config.restart``.

    The trace is concatenated with global iteration numbers and cumulative
    counters.  For ``chain``/``epoch`` the output is ``z_{zeta, delta}`` with the run
    ``delta`` drawn uniformly; for ``graddom`` it is the last run's ``z_zeta``.
    """
    policy = config.restart
    M = policy.M
    # graddom warm starts need the previous run's output point, which the run already samples
    start = as_point(x0, problem.d, "x0")
    runs = []
    trace = []
    totals = {"samples_g": 0, "samples_gp": 0, "samples_fgrad": 0, "prox_evals": 0}
    starts = []
    t0 = time.perf_counter()  # wall_ms accumulates across runs
    for m in range(M):
        starts.append(start.copy())
        out = _run(problem, start, config, run_index=m, iter_offset=m * config.T, counter_offset=dict(totals),
                   t0=t0)
        runs.append(out)
        trace.extend(out.trace)
        for k in totals:
            totals[k] += out.counters[k]
        if policy.kind == "chain":
            start = out.penultimate_point
        elif policy.kind == "epoch":
            start = out.final_point
        else:
            start = out.sampled_output
    if policy.kind == "graddom":
        delta = M - 1
    else:
        delta = int(make_rng(config.seed, "restart").integers(0, M))
    last = runs[-1]
    meta = dict(last.meta)
    meta.update(restart=policy.kind, M=M, delta=delta, zetas=[r.meta["zeta"] for r in runs])
    path = None
    if config.record_path:
        path = {"runs": [r.path for r in runs], "starts": starts}
    return SolverOutput(trace=trace, final_point=last.final_point, sampled_output=runs[delta].sampled_output,
                        counters=totals, penultimate_point=last.penultimate_point, meta=meta, path=path)


# --------------------------------------------------------------------------
# step-size and batch-size calculators
# --------------------------------------------------------------------------

def theorem_beta(profile, schedule):
    """Largest admissible ``beta`` for MVRC-1 under the given momentum schedule."""
    LF, G0 = profile.L_F, profile.G_0
    if schedule.kind == DIMINISHING:
        return 1.0 / (2.0 * math.sqrt(16.0 * LF ** 2 + 6.0 * G0) + 8.0 * LF)
    k = 1.0 + 1.0 / schedule.alpha
    return 1.0 / (4.0 * math.sqrt(k ** 2 * LF ** 2 + 3.0 * G0) + 4.0 * k * LF)


def theorem_beta_mvrc2(profile, finite_sum=True, C1=1.0, C2=1.0):
    """``beta`` for MVRC-2; ``C1``, ``C2`` bound ``sqrt(N)/n`` and ``sqrt(n)/N``."""
    if not (C1 > 0 and C2 > 0):
        raise ConfigurationError("C1 and C2 must be > 0")
    LF = profile.L_F
    if finite_sum:
        return math.sqrt(3.0) / (2.0 * math.sqrt(26.0 * (5.0 * C1 + 4.0 * C2 + 1.0)) * LF)
    return 3.0 / (2.0 * math.sqrt(26.0) * LF)


def _snap(v):
    """Round values within float noise of an integer (``4 / 0.1**2`` is 399.99...)."""
    r = round(v)
    return float(r) if abs(v - r) <= 1e-9 * max(1.0, abs(v)) else v


def _floor_sqrt(v):
    v = _snap(v)
    if float(v).is_integer():
        return math.isqrt(int(v))
    return int(math.floor(math.sqrt(v)))


def _ceil(v):
    return max(1, int(math.ceil(_snap(v))))


def theorem_batch_plan(problem, algorithm=None, epsilon=None, inner_scale=1.0, online_scale=1.0):
    """Prescribed ``(tau, BatchPlan)`` for the problem's class.

    ``inner_scale`` multiplies ``tau`` to give MVRC-2's ordinary batch sizes and
    ``online_scale`` multiplies MVRC-2's online checkpoint sizes.
    """
    algorithm = algorithm or (MVRC1 if problem.single_outer else MVRC2)
    prof = problem.lipschitz
    if algorithm == MVRC1:
        if not problem.single_outer:
            raise ConfigurationError("MVRC-1 plans need a single outer function")
        if problem.finite_sum:
            tau = max(1, math.isqrt(problem.n))
            return tau, BatchPlan(problem.n, tau)
        s0 = prof.sigma0_sq(True)
        if s0 <= 0:
            raise ConfigurationError("online problem needs sigma_g / sigma_gp constants for a batch plan")
        if not (epsilon and epsilon > 0):
            raise ConfigurationError("online batch plan needs epsilon > 0")
        s = 2.0 * s0 / epsilon ** 2
        tau = max(1, _floor_sqrt(s))
        return tau, BatchPlan(_ceil(s), tau)
    if inner_scale <= 0 or online_scale <= 0:
        raise ConfigurationError("inner_scale and online_scale must be > 0")
    N = problem.N
    if problem.finite_sum and N != "online":
        tau = max(1, math.isqrt(max(N, problem.n)))
        inner = _ceil(inner_scale * tau)
        return tau, BatchPlan(problem.n, inner, problem.n, inner, N, 1 if N == 1 else inner, True)
    if not (epsilon and epsilon > 0):
        raise ConfigurationError("online batch plan needs epsilon > 0")
    if prof.sigma_g == 0 and prof.sigma_gp == 0 and prof.sigma_fp == 0:
        raise ConfigurationError("online problem needs sigma constants for a batch plan")
    e2 = epsilon ** -2
    tau = max(1, int(math.floor(_snap(prof.l_f * prof.l_g / epsilon))))
    inner = _ceil(inner_scale * tau)
    cA = _ceil(online_scale * prof.L_f ** 2 * prof.l_g ** 2 * prof.sigma_g ** 2 * e2)
    cAp = _ceil(online_scale * prof.l_f ** 2 * prof.sigma_gp ** 2 * e2)
    cB = 1 if problem.single_outer else _ceil(online_scale * prof.l_g ** 2 * prof.sigma_fp ** 2 * e2)
    return tau, BatchPlan(cA, inner, cAp, inner, cB, 1 if problem.single_outer else inner, True)


def graddom_restart_plan(profile, beta, tau, epsilon, C=1.0):
    """``(M, T)`` for restarts under gradient dominance: ``M = ceil(log2 eps^-2)``,
    ``T = max(ceil(C v / (2 beta)), tau)``."""
    if profile.v_graddom is None:
        raise ConfigurationError("profile has no gradient-dominance constant v")
    if not (0 < epsilon < 1):
        raise ConfigurationError("epsilon must lie in (0, 1)")
    if not C > 0:
        raise ConfigurationError("C must be > 0")
    M = max(1, int(math.ceil(_snap(math.log2(epsilon ** -2)))))
    T = max(int(math.ceil(_snap(C * profile.v_graddom / (2.0 * beta)))), int(tau))
    return M, T


# --------------------------------------------------------------------------
# momentum identities
# --------------------------------------------------------------------------

def momentum_gap_closed_form(xs, lams, schedule):
    """``y_t - x_t`` for every ``t`` from the displacement history alone.

    ``xs`` holds ``x_0..x_T`` and ``lams`` holds ``lambda_0..lambda_{T-1}``.
    Diminishing momentum uses ``Gamma_t = 2 / (t (t + 1))``::

        y_t - x_t = -Gamma_t sum_{s<=t} (lambda_{s-1} - beta) / (Gamma_s lambda_{s-1}) (x_s - x_{s-1})

    and constant momentum::

        y_t - x_t = sum_{s<=t} (1 - alpha)^(t-s) (beta - lambda_{s-1}) / lambda_{s-1} (x_s - x_{s-1})
    """
    xs = np.asarray(xs, dtype=np.float64)
    lams = np.asarray(lams, dtype=np.float64)
    beta = schedule.beta
    T = len(lams)
    out = np.zeros_like(xs)
    dx = xs[1:] - xs[:-1]
    if schedule.kind == DIMINISHING:
        gam = lambda t: 2.0 / (t * (t + 1.0))
        acc = np.zeros(xs.shape[1])
        for t in range(1, T + 1):
            acc = acc + (lams[t - 1] - beta) / (gam(t) * lams[t - 1]) * dx[t - 1]
            out[t] = -gam(t) * acc
    else:
        q = 1.0 - schedule.alpha
        acc = np.zeros(xs.shape[1])
        for t in range(1, T + 1):
            acc = q * acc + (beta - lams[t - 1]) / lams[t - 1] * dx[t - 1]
            out[t] = acc
    return out


def with_schedule(config, **changes):
    """Copy of ``config`` with fields of its momentum schedule replaced."""
    return replace(config, schedule=replace(config.schedule, **changes))
