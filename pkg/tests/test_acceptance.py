"""Acceptance criteria 1-9.

Each test measures its own wall time (after a shared JIT warm-up) and adds
one PASS/FAIL line to the terminal summary.  Tolerances and time limits are
asserted as stated; nothing is relaxed to make a criterion pass.
"""
import functools
import math
import time
import warnings
from dataclasses import astuple, replace
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, central_diff, rel_err
from mvrc.baselines import BaselineConfig, run_ascpg, run_civr
from mvrc.core import LipschitzProfile, full_gradient, full_inner, smooth_objective
from mvrc.data import make_rng, synth_housing, synth_portfolio
from mvrc.estimators import BatchPlan, approx_gradient, new_state, update, variance_bound
from mvrc.harness.config import parse_config_text
from mvrc.harness.experiment import config_from_metadata, run_experiment
from mvrc.problems import (PortfolioProblem, SmoothSyntheticProblem, SpamProblem, random_linear_problem)
from mvrc.prox import L1, NoRegularizer, gradient_mapping, prox
from mvrc.solvers import (CONSTANT, DIMINISHING, MomentumSchedule, RestartPolicy, SolverConfig,
                          graddom_restart_plan, momentum_gap_closed_form, run_mvrc1, run_mvrc2, run_with_restarts,
                          theorem_batch_plan, theorem_beta)


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    """Compile every numba kernel before any timed section."""
    r = np.random.default_rng(0)
    PortfolioProblem(r.standard_normal((8, 3)))
    for prob in (PortfolioProblem(r.standard_normal((8, 3))), SpamProblem(r.standard_normal((8, 3)), r.standard_normal(8)),
                 random_linear_problem(make_rng(0, "data"), n=8, d=3)):
        x, b = np.full(3, 0.1), np.arange(prob.n)
        prob.inner_mean(x, b), prob.jac_mean(x, b), prob.inner_diff_mean(x, 2 * x, b), prob.jac_diff_mean(x, 2 * x, b)


def criterion(number, title, limit):
    """Time the wrapped test, check the limit and log a summary line either way."""
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            detail, status = "", "FAIL"
            try:
                detail = fn(*args, **kwargs) or ""
                secs = time.perf_counter() - t0
                assert secs < limit, f"runtime {secs:.1f}s exceeds {limit}s"
                status = "PASS"
            except AssertionError as exc:
                detail = f"{detail} {str(exc).splitlines()[0]}".strip()
                raise
            finally:
                secs = time.perf_counter() - t0
                ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title} ({secs:.2f}s, limit {limit}s) {detail}")
        return wrapper
    return deco


# ---------------------------------------------------------------------------

@criterion(1, "prox exactness and non-expansiveness", 1.0)
def test_c1_prox():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        x = rng.standard_normal(5) * 10 ** rng.uniform(-3, 2)
        step, mu = 10 ** rng.uniform(-4, 1), 10 ** rng.uniform(-3, 1)
        got = prox(L1(mu), step, x)
        th = Fraction(step) * Fraction(mu)
        exact = [float(Fraction(v) - th if Fraction(v) > th else Fraction(v) + th if Fraction(v) < -th else 0)
                 for v in x]
        worst = max(worst, float(np.abs(got - exact).max()))
    assert worst <= 1e-12, f"max prox error {worst:.3g}"
    ratio = 0.0
    for _ in range(100):
        a, b = rng.standard_normal((2, 6)) * 3
        step, mu = 10 ** rng.uniform(-3, 1), rng.uniform(0, 2)
        for reg in (NoRegularizer(), L1(mu)):
            d = np.linalg.norm(prox(reg, step, a) - prox(reg, step, b))
            assert d <= np.linalg.norm(a - b) * (1 + 1e-15)
            ratio = max(ratio, d / np.linalg.norm(a - b))
    return f"max err {worst:.2g}, max contraction {ratio:.4f}"


@criterion(2, "gradient oracles vs central differences", 10.0)
def test_c2_gradients():
    r = make_rng(102, "data")
    port = PortfolioProblem(synth_portfolio(60, 6, r, factor_scale=0.5).matrix, 0.2, "l1:0.01")
    ds = synth_housing(40, 2, 3, r, noise=0.5)
    spam = SpamProblem(ds.matrix, ds.targets)
    synth = SmoothSyntheticProblem.random(r, n=8, d=4, p=3)
    rng = np.random.default_rng(102)
    boundary = 1.0 / np.sqrt(np.mean(ds.matrix ** 2, axis=0))
    worst = {}
    for name, prob in (("portfolio", port), ("spam", spam), ("synthetic", synth)):
        pts = [rng.standard_normal(prob.d) * 0.5 for _ in range(10)]
        if name == "spam":
            # every w_k sits on |w_k| = 1, or just either side of it
            pts[:3] = [boundary, boundary * (1 + 1e-4), boundary * (1 - 1e-4)]
        err = 0.0
        for x in pts:
            err = max(err, rel_err(full_gradient(prob, x), central_diff(lambda v: smooth_objective(prob, v), x)[0]))
            for i in range(prob.n):
                _, J = prob.component(x, i)
                err = max(err, rel_err(J, central_diff(lambda v: prob.component(v, i)[0], x)))
        worst[name] = err
    assert max(worst.values()) <= 1e-5, f"relative errors {worst}"
    return ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def _c3_problem(k):
    r = make_rng(300 + k, "data")
    if k % 3 == 0:
        return random_linear_problem(r, n=32, d=5)
    if k % 3 == 1:
        return PortfolioProblem(synth_portfolio(48, 5, r).matrix, 0.2, "l1:0.01")
    return SmoothSyntheticProblem.random(r, n=12, d=4, p=3)


def _rows(out):
    return np.array([astuple(replace(r, wall_ms=0.0)) for r in out.trace], dtype=float)


@criterion(3, "momentum identities, lambda = beta degeneracy, CIVR wrapper", 30.0)
def test_c3_identities():
    rng = np.random.default_rng(103)
    worst_rel, worst_flat = 0.0, 0.0
    for k in range(20):
        prob = _c3_problem(k)
        kind = DIMINISHING if k % 2 == 0 else CONSTANT
        alpha = None if kind == DIMINISHING else float(rng.uniform(0.1, 1.0))
        sched = MomentumSchedule(kind, float(rng.uniform(0.005, 0.05)), alpha, float(rng.uniform(0.2, 1.0)))
        tau = int(rng.integers(2, 12))
        plan = BatchPlan(prob.n, int(rng.integers(1, 6)))
        c = SolverConfig("mvrc1", sched, 200, tau, plan, seed=k, record_path=True, compute_metrics=False)
        x0 = rng.standard_normal(prob.d) * 0.5
        out = run_mvrc1(prob, x0, c)
        gap = np.asarray(out.path["ys"]) - np.asarray(out.path["xs"])
        cf = momentum_gap_closed_form(out.path["xs"], out.path["lams"], sched)
        rel = np.linalg.norm(cf - gap, axis=1).max() / np.linalg.norm(gap, axis=1).max()
        worst_rel = max(worst_rel, rel)
        flat = replace(c, schedule=replace(sched, lambda_scale=0.0))
        plain = run_mvrc1(prob, x0, flat)
        xs, ys = np.asarray(plain.path["xs"]), np.asarray(plain.path["ys"])
        worst_flat = max(worst_flat, float(np.abs(ys - xs).max()))
        civr = run_civr(prob, x0, c)
        assert np.array_equal(_rows(civr), _rows(plain), equal_nan=True)
        assert np.array_equal(civr.final_point, plain.final_point)
    assert worst_rel <= 1e-10, f"closed-form relative error {worst_rel:.3g}"
    assert worst_flat == 0.0, f"max ||y - x|| with lambda = beta is {worst_flat:.3g}"
    return f"closed-form rel err {worst_rel:.1e}, max ||y-x|| at lambda=beta {worst_flat}, CIVR bit-equal"


@criterion(4, "MVRC-2 step bound", 30.0)
def test_c4_step_bound():
    rng = np.random.default_rng(104)
    worst = -math.inf
    for k in range(10):
        r = make_rng(400 + k, "data")
        d = int(rng.integers(2, 6))
        prob = SpamProblem(r.standard_normal((40, d)), r.standard_normal(40), 1.0, 0.001)
        kind = CONSTANT if k % 2 else DIMINISHING
        sched = MomentumSchedule(kind, float(rng.uniform(0.01, 0.2)), 0.7 if kind == CONSTANT else None)
        eps = float(10 ** rng.uniform(-3, -0.5))
        plan = BatchPlan(40, 5, 40, 5, prob.N, 2, True)
        c = SolverConfig("mvrc2", sched, 500, 8, plan, epsilon=eps, seed=k, record_path=True, compute_metrics=False)
        out = run_mvrc2(prob, rng.standard_normal(d), c)
        xs, lams = np.asarray(out.path["xs"]), np.asarray(out.path["lams"])
        slack = np.linalg.norm(np.diff(xs, axis=0), axis=1) - eps * lams
        worst = max(worst, float(slack.max()))
    assert worst <= 1e-12, f"step exceeds eps*lambda by {worst:.3g}"
    return f"max(||x_t+1 - x_t|| - eps*lambda_t) = {worst:.2e}"


@criterion(5, "estimator exactness and Monte-Carlo variance bound", 120.0)
def test_c5_estimator():
    # exactness: full checkpoint batches and full inner batches along a random 50-step walk
    r = make_rng(105, "data")
    prob = SmoothSyntheticProblem.random(r, n=5, d=3, p=2)
    walk = np.cumsum(r.standard_normal((50, 3)) * 0.2, axis=0)
    st = new_state(7, BatchPlan(5, 5))
    erng = make_rng(105, "estimator")
    tele = 0.0
    for t, z in enumerate(walk):
        st = update(st, prob, z, erng)
        g, J = full_inner(prob, z)
        if t % 7 == 0:
            assert np.array_equal(st.g_tilde, g) and np.array_equal(st.gp_tilde, J)
        tele = max(tele, float(np.abs(st.g_tilde - g).max()), float(np.abs(st.gp_tilde - J).max()))
    assert tele <= 1e-13, f"telescoping error {tele:.3g}"

    # Monte-Carlo: 1000 estimator trajectories along a fixed query path per instance
    ratios = []
    for k in range(5):
        r = make_rng(500 + k, "data")
        prob = SmoothSyntheticProblem.random(r, n=8, d=3, p=2)
        tau, m = 6, 2
        path = np.cumsum(r.standard_normal((tau, 3)) * 0.3, axis=0)
        truth = [full_gradient(prob, z) for z in path]
        errs = np.zeros((1000, tau))
        erng = make_rng(500 + k, "estimator")
        for j in range(1000):
            st = new_state(tau, BatchPlan(prob.n, m))
            for t, z in enumerate(path):
                st = update(st, prob, z, erng)
                errs[j, t] = np.sum((approx_gradient(st, prob) - truth[t]) ** 2)
        sq = np.sum(np.diff(path, axis=0) ** 2, axis=1)
        for t in range(1, tau):
            bound = variance_bound(prob.lipschitz, sq[:t], [m] * t, prob.n)
            mean, se = errs[:, t].mean(), errs[:, t].std(ddof=1) / math.sqrt(1000)
            assert mean <= bound + 3 * se, f"instance {k}, t={t}: E err^2 {mean:.3g} > bound {bound:.3g} + 3 SE"
            ratios.append(mean / bound)
    return f"telescoping err {tele:.1e}; E err^2 / bound at most {max(ratios):.3f}"


@criterion(6, "theorem step-size calculator", 1.0)
def test_c6_theorem_beta():
    getcontext().prec = 50
    want = Decimal(1) / (2 * Decimal(88).sqrt() + 16)
    beta = theorem_beta(LipschitzProfile(1, 1, 1, 1), MomentumSchedule(DIMINISHING, 1.0))
    err = abs(Decimal(beta) - want)
    assert err <= Decimal("1e-12"), f"beta error {err}"
    rng = np.random.default_rng(106)
    for _ in range(1000):
        prof = LipschitzProfile(*(10 ** rng.uniform(-3, 3, 4)))
        b = theorem_beta(prof, MomentumSchedule(DIMINISHING, 1.0))
        assert prof.G_0 <= 1 / (24 * b * b) * (1 + 1e-12)
    G0 = LipschitzProfile(1, 1, 1, 1).G_0
    return f"beta = {beta:.12f} (|err| {float(err):.1e}); G_0 = {G0} <= 1/(24 beta^2) = {1 / (24 * beta ** 2):.3f}"


@criterion(7, "gradient-dominant restarts reach F - F* <= 1e-6", 60.0)
def test_c7_graddom():
    prob = random_linear_problem(make_rng(0, "data"), n=64, d=10)
    sched = MomentumSchedule(DIMINISHING, 1.0)
    sched = replace(sched, beta=theorem_beta(prob.lipschitz, sched))
    tau, plan = theorem_batch_plan(prob)
    # C = 4 makes each run contract the gap by at least one half
    M, T = graddom_restart_plan(prob.lipschitz, sched.beta, tau, 1e-3, C=4.0)
    c = SolverConfig("mvrc1", sched, T, tau, plan, restart=RestartPolicy("graddom", M), seed=0, metric_every=1)
    out = run_with_restarts(prob, np.zeros(prob.d), c)
    n_ck = (T - 1) // tau + 1
    predicted = M * (n_ck * (2 * plan.checkpoint_A + 1) + (T - n_ck) * (2 * plan.inner_A + 1))
    used = sum(out.counters[k] for k in ("samples_g", "samples_gp", "samples_fgrad"))
    first = next((r.total_samples for r in out.trace if r.objective - prob.F_star <= 1e-6), None)
    gap_out = smooth_objective(prob, out.sampled_output) - prob.F_star
    _, g0 = gradient_mapping(prob, sched.lam_at(0), np.zeros(prob.d))
    _, g_out = gradient_mapping(prob, sched.lam_at(0), out.sampled_output)
    assert used <= predicted + 50 * prob.n, f"used {used} samples, predicted {predicted}"
    assert first is not None and first <= predicted + 50 * prob.n, "threshold not reached within the budget"
    assert gap_out <= 1e-6, f"F - F* at output {gap_out:.3g}"
    assert g0 / max(g_out, 1e-300) >= 100, f"gradient mapping only dropped {g0 / g_out:.3g}x"
    return (f"M={M}, T={T}, tau={tau}; budget {predicted} samples, 1e-6 first reached at {first}; "
            f"F-F* at output {gap_out:.1e}; ||G|| drop {g0 / max(g_out, 1e-300):.1e}x")


@criterion(8, "portfolio surrogate: MVRC-constant vs CIVR and ASC-PG at equal budget", 300.0)
def test_c8_portfolio():
    eta, alpha, inner, tau, epochs = 1e-3, 0.8, 256, 8, 40
    T = tau * epochs
    finals = {"mvrc": [], "civr": [], "ascpg": []}
    for seed in range(5):
        ds = synth_portfolio(2048, 30, make_rng(seed, "data"), factor_scale=0.5)
        prob = PortfolioProblem(ds.matrix, 0.2, "l1:0.01")
        x0 = np.zeros(30)
        c = SolverConfig("mvrc1", MomentumSchedule(CONSTANT, eta, alpha), T, tau, BatchPlan(2048, inner),
                         seed=seed, metric_step=eta, compute_metrics=False)
        mv, cv = run_mvrc1(prob, x0, c), run_civr(prob, x0, c)
        budget = sum(mv.counters[k] for k in ("samples_g", "samples_gp", "samples_fgrad"))
        bc = BaselineConfig("ascpg", math.ceil((budget - inner) / (2 * inner + 1)), a=1e-4, b=1.0, batch_g=inner,
                            seed=seed, compute_metrics=False)
        asc = run_ascpg(prob, x0, bc)
        used = sum(asc.counters[k] for k in ("samples_g", "samples_gp", "samples_fgrad"))
        assert budget <= used < budget + 2 * inner + 1
        for name, out in (("mvrc", mv), ("civr", cv), ("ascpg", asc)):
            finals[name].append(gradient_mapping(prob, eta, out.final_point)[1])
    mean = {k: float(np.mean(v)) for k, v in finals.items()}
    r_civr, r_asc = mean["mvrc"] / mean["civr"], mean["mvrc"] / mean["ascpg"]
    detail = (f"mean final ||G||: MVRC {mean['mvrc']:.4f}, CIVR {mean['civr']:.4f}, ASC-PG {mean['ascpg']:.4f}; "
              f"ratios {r_civr:.3f} / {r_asc:.3f}")
    assert r_civr <= 1.2 and r_asc <= 1.2, f"hard failure: {detail}"
    if max(r_civr, r_asc) > 1.0:
        warnings.warn(f"criterion 8 soft failure (ratio in (1, 1.2]): {detail}")
        detail = "SOFT FAILURE, review: " + detail
    return detail


DETERMINISM_CFG = """
experiment.name = det
experiment.seed = 9
experiment.x0 = 0.2
problem.kind = portfolio
data.n = 256
data.d = 8
data.factor_scale = 0.5
metric.step = 0.001
solver.mv.algorithm = mvrc1
solver.mv.schedule = constant
solver.mv.alpha = 0.8
solver.mv.beta = 0.01
solver.mv.T = 64
solver.mv.tau = 8
solver.mv.inner = 16
solver.rs.algorithm = mvrc1
solver.rs.beta = 0.01
solver.rs.T = 16
solver.rs.tau = 4
solver.rs.inner = 16
solver.rs.restart = graddom
solver.rs.restart_M = 3
solver.cv.algorithm = civr
solver.cv.beta = 0.01
solver.cv.T = 64
solver.cv.tau = 8
solver.cv.inner = 16
solver.asc.algorithm = ascpg
solver.asc.batch_g = 16
solver.asc.budget = 5000
solver.sc.algorithm = scgd
solver.sc.a = 0.01
solver.sc.batch_g = 16
solver.sc.budget = 5000
"""

DETERMINISM_SPAM = """
experiment.seed = 4
experiment.x0 = 0.1
problem.kind = spam
data.n = 200
data.d_signal = 2
data.d_noise = 4
metric.step = 0.01
solver.m2.algorithm = mvrc2
solver.m2.schedule = constant
solver.m2.alpha = 0.8
solver.m2.beta = 0.01
solver.m2.epsilon = 0.05
solver.m2.T = 60
solver.m2.tau = 10
solver.m2.inner = 10
solver.m2.inner_f = 3
"""


def _csv_without_wall(path):
    with open(path, "rb") as fh:
        return [line.rsplit(b",", 1)[0] for line in fh.read().split(b"\n")]


@criterion(9, "determinism and provenance", 60.0)
def test_c9_determinism(tmp_path):
    checked = 0
    for label, text in (("portfolio", DETERMINISM_CFG), ("spam", DETERMINISM_SPAM)):
        flat = parse_config_text(text)
        dirs = [tmp_path / f"{label}_{i}" for i in range(3)]
        run_experiment(flat, str(dirs[0]))
        run_experiment(flat, str(dirs[1]))
        run_experiment(config_from_metadata(str(dirs[0])), str(dirs[2]))
        for f in sorted(p.name for p in dirs[0].iterdir() if p.name.endswith(".trace.csv")):
            ref = _csv_without_wall(dirs[0] / f)
            assert len(ref) > 2
            for other in dirs[1:]:
                assert _csv_without_wall(other / f) == ref, f"{other.name}/{f} differs"
            checked += 1
        assert (dirs[0] / "summary.csv").read_bytes() == (dirs[1] / "summary.csv").read_bytes()
    return f"{checked} trace files identical across reruns and metadata reconstructions"
