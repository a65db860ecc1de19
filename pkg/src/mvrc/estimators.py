"""Recursive (SPIDER-type) estimators of g, g' and grad f with periodic checkpoints.

Every ``tau`` iterations the estimates are rebuilt from a large batch; in
between they are corrected by sampled differences evaluated at the current
and previous query points.  Samples are drawn uniformly with replacement,
except that a finite-sum batch of exactly ``n`` enumerates every component
once.

States are immutable; each operation returns a new one.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ConfigurationError, SequencingError

MVRC1 = "mvrc1"
MVRC2 = "mvrc2"


@dataclass(frozen=True)
class BatchPlan:
    """Batch sizes at checkpoint and ordinary iterations.

    ``A`` feeds the ``g`` estimate, ``Ap`` the Jacobian estimate and ``B`` the
    outer gradient estimate.  With ``independent_Ap=False`` the Jacobian reuses
    the ``A`` draw, so its sizes must equal those of ``A``.
    """

    checkpoint_A: int
    inner_A: int
    checkpoint_Ap: int = None
    inner_Ap: int = None
    checkpoint_B: int = 1
    inner_B: int = 1
    independent_Ap: bool = False

    def __post_init__(self):
        if self.checkpoint_Ap is None:
            object.__setattr__(self, "checkpoint_Ap", self.checkpoint_A)
        if self.inner_Ap is None:
            object.__setattr__(self, "inner_Ap", self.inner_A)
        for name in ("checkpoint_A", "inner_A", "checkpoint_Ap", "inner_Ap", "checkpoint_B", "inner_B"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigurationError(f"batch size {name} must be an integer >= 1, got {val!r}")
            object.__setattr__(self, name, int(val))
        if not self.independent_Ap and (self.checkpoint_Ap != self.checkpoint_A or self.inner_Ap != self.inner_A):
            raise ConfigurationError("a shared A/A' draw needs equal A and A' batch sizes")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class EstimatorState:
    """Running estimates plus bookkeeping.

    ``t`` counts completed updates, so the next update is iteration ``t`` and
    must be a checkpoint when ``t % tau == 0``.  ``prev_g_tilde`` keeps the
    previous inner estimate for the outer-gradient correction.
    """

    tau: int
    plan: BatchPlan
    mode: str = MVRC1
    t: int = 0
    g_tilde: np.ndarray = None
    gp_tilde: np.ndarray = None
    fp_tilde: np.ndarray = None
    prev_g_tilde: np.ndarray = None
    prev_z: np.ndarray = None
    samples_g: int = 0
    samples_gp: int = 0
    samples_fgrad: int = 0
    last_batch_A: int = field(default=0, compare=False)

    def __post_init__(self):
        if isinstance(self.tau, bool) or not isinstance(self.tau, (int, np.integer)) or self.tau < 1:
            raise ConfigurationError(f"tau must be an integer >= 1, got {self.tau!r}")
        if self.mode not in (MVRC1, MVRC2):
            raise ConfigurationError(f"unknown estimator mode {self.mode!r}")
        if self.mode == MVRC2 and not self.plan.independent_Ap:
            raise ConfigurationError("MVRC-2 estimators draw A and A' independently")

    @property
    def at_checkpoint(self):
        return self.t % self.tau == 0

    def counters(self):
        return {"samples_g": self.samples_g, "samples_gp": self.samples_gp, "samples_fgrad": self.samples_fgrad}


def new_state(tau, plan, mode=MVRC1):
    return EstimatorState(tau=int(tau), plan=plan, mode=mode)


def _draws(state, problem, rng, m_A, m_Ap, m_B):
    A = problem.draw_inner(rng, m_A)
    Ap = problem.draw_inner(rng, m_Ap) if state.plan.independent_Ap else A
    B = problem.draw_outer(rng, m_B) if state.mode == MVRC2 else None
    return A, Ap, B


def _fgrad_count(state, problem, B):
    # MVRC-1 evaluates the exact outer gradient once per iteration
    return problem.outer_batch_size(B) if state.mode == MVRC2 else 1


def refresh_checkpoint(state, problem, z, rng):
    """Rebuild every estimate at ``z`` from checkpoint-sized batches."""
    if not state.at_checkpoint:
        raise SequencingError(f"checkpoint refresh at t={state.t} with tau={state.tau}")
    plan = state.plan
    A, Ap, B = _draws(state, problem, rng, plan.checkpoint_A, plan.checkpoint_Ap, plan.checkpoint_B)
    g = problem.inner_mean(z, A)
    gp = problem.jac_mean(z, Ap)
    fp = problem.outer_grad_mean(g, B) if state.mode == MVRC2 else None
    return replace(
        state, t=state.t + 1, g_tilde=g, gp_tilde=gp, fp_tilde=fp, prev_g_tilde=state.g_tilde,
        prev_z=np.array(z, dtype=np.float64, copy=True),
        samples_g=state.samples_g + problem.batch_size(A),
        samples_gp=state.samples_gp + problem.batch_size(Ap),
        samples_fgrad=state.samples_fgrad + _fgrad_count(state, problem, B),
        last_batch_A=problem.batch_size(A))


def recursive_update(state, problem, z, rng):
    """Apply the sampled difference correction between ``prev_z`` and ``z``."""
    if state.at_checkpoint:
        raise SequencingError(f"recursive update at checkpoint iteration t={state.t}")
    if state.prev_z is None or state.g_tilde is None:
        raise SequencingError("recursive update before the first checkpoint")
    plan = state.plan
    A, Ap, B = _draws(state, problem, rng, plan.inner_A, plan.inner_Ap, plan.inner_B)
    zp = state.prev_z
    g = state.g_tilde + problem.inner_diff_mean(z, zp, A)
    gp = state.gp_tilde + problem.jac_diff_mean(z, zp, Ap)
    fp = None
    if state.mode == MVRC2:
        fp = state.fp_tilde + problem.outer_grad_diff_mean(g, state.g_tilde, B)
    return replace(
        state, t=state.t + 1, g_tilde=g, gp_tilde=gp, fp_tilde=fp, prev_g_tilde=state.g_tilde,
        prev_z=np.array(z, dtype=np.float64, copy=True),
        samples_g=state.samples_g + problem.batch_size(A),
        samples_gp=state.samples_gp + problem.batch_size(Ap),
        samples_fgrad=state.samples_fgrad + _fgrad_count(state, problem, B),
        last_batch_A=problem.batch_size(A))


def update(state, problem, z, rng):
    """Checkpoint refresh or recursive correction, whichever iteration ``t`` calls for."""
    if state.at_checkpoint:
        return refresh_checkpoint(state, problem, z, rng)
    return recursive_update(state, problem, z, rng)


def approx_gradient(state, problem=None):
    """Estimated ``grad F`` at the last query point.

    MVRC-1 mode uses the exact outer gradient at the inner estimate and so
    needs ``problem``; MVRC-2 mode uses the tracked outer estimate.
    """
    if state.g_tilde is None:
        raise SequencingError("estimator not initialised")
    if state.mode == MVRC2:
        if state.fp_tilde is None:
            raise ConfigurationError("MVRC-2 state has no outer gradient estimate")
        return state.gp_tilde.T @ state.fp_tilde
    if problem is None:
        raise ConfigurationError("MVRC-1 gradient needs the problem's outer gradient")
    return state.gp_tilde.T @ problem.outer_grad(state.g_tilde)


def variance_bound(profile, sq_steps, batch_sizes, checkpoint_size, online=False):
    """Upper bound on ``E||grad_est - grad F||^2`` within one checkpoint period.

    ``sq_steps[k]`` is ``||z_s - z_{s-1}||^2`` for the k-th iteration after the
    checkpoint and ``batch_sizes[k]`` the batch used there.  Empty sequences
    mean the query is at the checkpoint itself.
    """
    sq = np.asarray(sq_steps, dtype=np.float64).reshape(-1)
    sizes = np.asarray(batch_sizes, dtype=np.float64).reshape(-1)
    if sq.shape != sizes.shape:
        raise ConfigurationError("sq_steps and batch_sizes must have equal length")
    if np.any(sizes < 1) or checkpoint_size < 1:
        raise ConfigurationError("batch sizes must be >= 1")
    if np.any(sq < 0):
        raise ConfigurationError("squared steps must be >= 0")
    return profile.sigma0_sq(online) / checkpoint_size + profile.G_0 * float((sq / sizes).sum())
