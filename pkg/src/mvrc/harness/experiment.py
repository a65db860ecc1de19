"""Experiment orchestration: build the problem, run every solver, write outputs.

Output directory layout::

    <name>.trace.csv    one per solver
    summary.csv         per-solver metrics at the largest common sample budget
    metadata.json       flat config, resolved settings, dataset checksums, run metadata
"""
from dataclasses import asdict, dataclass
import json
import math
import os
import platform
import traceback

import numpy as np

from .. import __version__
from .._accel import backend_name
from ..baselines import BaselineConfig, run_ascpg, run_civr, run_scgd
from ..core import ConfigurationError
from ..data import array_checksum, load_csv, make_rng, synth_housing, synth_portfolio
from ..estimators import MVRC2, BatchPlan
from ..problems import LinearCompositionProblem, PortfolioProblem, SpamProblem, random_linear_problem
from ..solvers import (CONSTANT, MomentumSchedule, RestartPolicy, SolverConfig, graddom_restart_plan, run,
                       theorem_batch_plan, theorem_beta, theorem_beta_mvrc2)
from . import config as cfgmod
from .trace import read_trace, total_samples, write_trace

TRACE_SUFFIX = ".trace.csv"
SUMMARY_COLUMNS = ("solver", "algorithm", "status", "budget", "iter", "total_samples", "grad_mapping_norm",
                   "objective", "gap", "best_grad_mapping_norm", "best_objective", "final_iter",
                   "final_total_samples", "final_grad_mapping_norm", "final_objective")


# ---------------------------------------------------------------------------
# function value gap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BestObserved:
    """Reference value = smallest objective seen across a set of traces."""

    traces: tuple = ()

    def value(self):
        vals = [r["objective"] if isinstance(r, dict) else r.objective for tr in self.traces for r in tr]
        vals = [v for v in vals if not math.isnan(v)]
        if not vals:
            raise ConfigurationError("no finite objective values to take the best of")
        return min(vals)


@dataclass(frozen=True)
class ReferenceRun:
    """Reference value = best objective of a stored high-accuracy trace file."""

    path: str

    def value(self):
        if not os.path.isfile(self.path):
            raise ConfigurationError(f"reference run {self.path} not found")
        rows, _ = read_trace(self.path)
        return BestObserved((rows,)).value()


@dataclass(frozen=True)
class ReferenceValue:
    """A known optimal value."""

    phi_star: float

    def value(self):
        return float(self.phi_star)


def function_value_gap(trace, reference):
    """``objective_t - Phi_ref`` for every row of ``trace``."""
    ref = reference.value()
    return [(r["objective"] if isinstance(r, dict) else r.objective) - ref for r in trace]


def best_so_far(values):
    out, cur = [], math.inf
    for v in values:
        if not math.isnan(v):
            cur = min(cur, v)
        out.append(cur)
    return out


# ---------------------------------------------------------------------------
# building problems and solvers
# ---------------------------------------------------------------------------

def build_problem(spec):
    """``(problem, dataset_info)`` from the structured config."""
    exp, prob, data = spec["experiment"], spec["problem"], spec["data"]
    seed = data["seed"] if data["seed"] is not None else exp["seed"]
    kind = prob["kind"]
    radius = {} if prob["radius"] is None else {"radius": prob["radius"]}
    info = {}
    if kind in ("portfolio", "spam"):
        if data["kind"] == "csv":
            if not data["path"]:
                raise ConfigurationError("data.path is required for csv data")
            target = data["target"] if kind == "spam" else None
            if kind == "spam" and not target:
                raise ConfigurationError("spam csv data needs data.target")
            ds = load_csv(data["path"], target=target, columns=data["columns"], expected_rows=data["rows"])
        elif data["kind"] == "synth":
            if data["n"] is None:
                raise ConfigurationError("data.n is required for synthetic data")
            rng = make_rng(seed, "data")
            if kind == "portfolio":
                if data["d"] is None:
                    raise ConfigurationError("data.d is required for synthetic portfolio data")
                ds = synth_portfolio(data["n"], data["d"], rng, data["mean"], data["scale"], data["factor_scale"])
            else:
                ds = synth_housing(data["n"], data["d_signal"], data["d_noise"], rng, data["noise"],
                                   standardize=data["standardize"])
        else:
            raise ConfigurationError(f"data.kind must be 'synth' or 'csv', got {data['kind']!r}")
        info = {"provenance": ds.provenance, "checksum": ds.checksum, "n": ds.n, "d": ds.d, "seed": seed}
        if kind == "portfolio":
            l1 = 0.01 if prob["l1"] is None else prob["l1"]
            problem = PortfolioProblem(ds.matrix, prob["risk_weight"], f"l1:{l1!r}" if l1 > 0 else "none", **radius)
        else:
            l1 = 0.001 if prob["l1"] is None else prob["l1"]
            problem = SpamProblem(ds.matrix, ds.targets, prob["group_weight"], l1, **radius)
    elif kind == "linear":
        if data["n"] is None or data["d"] is None:
            raise ConfigurationError("linear problems need data.n and data.d")
        problem = random_linear_problem(make_rng(seed, "data"), data["n"], data["d"], prob["p"], prob["spread"],
                                        prob["cond"])
        info = {"provenance": {"kind": "random_linear", "n": data["n"], "d": data["d"], "p": prob["p"],
                               "spread": prob["spread"], "cond": prob["cond"]},
                "checksum": _checksum_linear(problem), "seed": seed}
    else:
        raise ConfigurationError(f"unknown problem.kind {kind!r}")
    return problem, info


def _checksum_linear(problem):
    return array_checksum(problem.A, problem.b)


def build_x0(spec, problem):
    x0 = spec["experiment"]["x0"]
    if isinstance(x0, (int, float)) and not isinstance(x0, bool):
        return np.full(problem.d, float(x0))
    arr = np.asarray(x0, dtype=np.float64)
    if arr.shape != (problem.d,):
        raise ConfigurationError(f"experiment.x0 must be a scalar or a list of length {problem.d}")
    return arr


def _metric_step(spec):
    step = spec["metric"]["step"]
    if step == "lambda":
        return None
    if isinstance(step, bool) or not isinstance(step, (int, float)) or not step > 0:
        raise ConfigurationError(f"metric.step must be > 0 or 'lambda', got {step!r}")
    return float(step)


def _size(val, problem, what, default=None):
    if val is None:
        val = default
    if val == "n":
        if not problem.finite_sum:
            raise ConfigurationError(f"{what} = 'n' needs a finite-sum problem")
        return problem.n
    if val == "N":
        return 1 if problem.N == "online" else problem.N
    if isinstance(val, bool) or not isinstance(val, int) or val < 1:
        raise ConfigurationError(f"{what} must be an integer >= 1, 'n' or 'N', got {val!r}")
    return val


def _mvrc_plan(name, s, problem, algorithm):
    if s["tau"] == "theorem":
        return theorem_batch_plan(problem, algorithm, s["epsilon"], s["inner_scale"], s["online_scale"])
    tau = s["tau"]
    if isinstance(tau, bool) or not isinstance(tau, int) or tau < 1:
        raise ConfigurationError(f"solver {name}: tau must be an integer >= 1 or 'theorem'")
    ck = _size(s["checkpoint"], problem, f"solver {name} checkpoint")
    inner = _size(s["inner"], problem, f"solver {name} inner")
    if algorithm == MVRC2:
        ckp = _size(s["checkpoint_gp"], problem, f"solver {name} checkpoint_gp", ck)
        inp = _size(s["inner_gp"], problem, f"solver {name} inner_gp", inner)
        ckf = _size(s["checkpoint_f"], problem, f"solver {name} checkpoint_f", "N")
        inf = _size(s["inner_f"], problem, f"solver {name} inner_f", inner if problem.N != 1 else 1)
        return tau, BatchPlan(ck, inner, ckp, inp, ckf, inf, True)
    for k in ("checkpoint_gp", "inner_gp", "checkpoint_f", "inner_f"):
        if s[k] is not None:
            raise ConfigurationError(f"solver {name}: {k} applies to mvrc2 only (MVRC-1 shares A for g and g')")
    return tau, BatchPlan(ck, inner)


def _mvrc_samples(plan, tau, mode, T):
    per_ck = plan.checkpoint_A + plan.checkpoint_Ap + (plan.checkpoint_B if mode == MVRC2 else 1)
    per_in = plan.inner_A + plan.inner_Ap + (plan.inner_B if mode == MVRC2 else 1)
    n_ck = (T - 1) // tau + 1
    return n_ck * per_ck + (T - n_ck) * per_in


def _T_for_budget(budget, total_fn):
    lo, hi = 1, 1
    while total_fn(hi) < budget:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if total_fn(mid) >= budget:
            hi = mid
        else:
            lo = mid + 1
    return lo


def build_solver(name, s, problem, spec):
    """``(runner, config)`` for one solver block."""
    exp = spec["experiment"]
    seed = s["seed"] if s["seed"] is not None else exp["seed"]
    metric_step = _metric_step(spec)
    every = spec["metric"]["every"]
    alg = s["algorithm"]
    if alg in cfgmod.BASELINE_ALGS:
        kw = {k: s[k] for k in ("a", "b", "a_exp", "b_exp", "batch_g", "batch_gp", "batch_f", "shared_A")}
        T = s["T"]
        if T is None:
            probe = BaselineConfig(alg, T=1, **kw)
            per = probe.batch_g + probe.batch_gp + probe.batch_f
            init = probe.batch_g if alg == "ascpg" else 0
            T = max(1, math.ceil((s["budget"] - init) / per))
        cfg = BaselineConfig(alg, T=T, seed=seed, metric_every=every, metric_step=metric_step, **kw)
        return (run_scgd if alg == "scgd" else run_ascpg), cfg
    mode = MVRC2 if alg == MVRC2 else "mvrc1"
    kind = s["schedule"]
    if kind == CONSTANT and s["alpha"] is None:
        raise ConfigurationError(f"solver {name}: constant schedule needs alpha")
    sched_kw = {"kind": kind, "alpha": s["alpha"] if kind == CONSTANT else None,
                "lambda_scale": s["lambda_scale"]}
    beta = s["beta"]
    if beta == "theorem":
        if mode == MVRC2:
            beta = theorem_beta_mvrc2(problem.lipschitz, problem.finite_sum, s["C1"], s["C2"])
        else:
            beta = theorem_beta(problem.lipschitz, MomentumSchedule(beta=1.0, **sched_kw))
    if isinstance(beta, bool) or not isinstance(beta, (int, float)):
        raise ConfigurationError(f"solver {name}: beta must be a number or 'theorem'")
    schedule = MomentumSchedule(beta=float(beta), **sched_kw)
    tau, plan = _mvrc_plan(name, s, problem, mode)
    restart = RestartPolicy(s["restart"], s["restart_M"])
    T = s["T"]
    if T == "theorem":
        if s["restart"] != "graddom" or not s["epsilon"]:
            raise ConfigurationError(f"solver {name}: T = 'theorem' needs restart = graddom and epsilon")
        M, T = graddom_restart_plan(problem.lipschitz, schedule.beta, tau, s["epsilon"], s["restart_C"])
        restart = RestartPolicy("graddom", M)
    elif T is not None and (isinstance(T, bool) or not isinstance(T, int)):
        raise ConfigurationError(f"solver {name}: T must be an integer or 'theorem', got {T!r}")
    if T is None:
        T = _T_for_budget(math.ceil(s["budget"] / restart.M), lambda t: _mvrc_samples(plan, tau, mode, t))
        T = max(T, tau)
    cfg = SolverConfig(mode, schedule, T, tau, plan, s["epsilon"], restart, seed, every, metric_step)
    runner = run_civr if alg == "civr" else run
    return runner, cfg


def validate(flat):
    """Structure, build and cross-check everything without running; returns the pieces."""
    spec = cfgmod.structure(flat)
    problem, info = build_problem(spec)
    x0 = build_x0(spec, problem)
    solvers = {name: build_solver(name, s, problem, spec) for name, s in spec["solvers"].items()}
    ref = spec["metric"]["reference"]
    if ref not in ("best", "run", "known"):
        raise ConfigurationError("metric.reference must be 'best', 'run' or 'known'")
    if ref == "run":
        path = spec["metric"]["reference_path"]
        if not path or not os.path.isfile(path):
            raise ConfigurationError(f"metric.reference_path {path!r} not found")
    if ref == "known" and not isinstance(problem, LinearCompositionProblem):
        raise ConfigurationError("metric.reference = 'known' needs a linear problem")
    return spec, problem, info, x0, solvers


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _config_dict(cfg):
    return asdict(cfg)


def summarize_traces(traces, reference_value, algorithms=None):
    """Summary rows aligned at the largest sample budget every solver reached."""
    algorithms = algorithms or {}
    ok = {k: rows for k, rows in traces.items() if rows}
    budget = min(total_samples(rows[-1]) for rows in ok.values()) if ok else 0
    out = []
    for name in sorted(traces):
        rows = traces[name]
        base = {"solver": name, "algorithm": algorithms.get(name, ""), "budget": budget}
        if not rows:
            out.append({**base, "status": "error"})
            continue
        upto = [r for r in rows if total_samples(r) <= budget] or rows[:1]
        at, last = upto[-1], rows[-1]
        out.append({**base, "status": "ok", "iter": at["iter"], "total_samples": total_samples(at),
                    "grad_mapping_norm": at["grad_mapping_norm"], "objective": at["objective"],
                    "gap": at["objective"] - reference_value if reference_value is not None else math.nan,
                    "best_grad_mapping_norm": min(r["grad_mapping_norm"] for r in upto),
                    "best_objective": min(r["objective"] for r in upto),
                    "final_iter": last["iter"], "final_total_samples": total_samples(last),
                    "final_grad_mapping_norm": last["grad_mapping_norm"], "final_objective": last["objective"]})
    return out


def write_summary(path, rows):
    def cell(v):
        if isinstance(v, float):
            return "nan" if math.isnan(v) else repr(v)
        return "" if v is None else str(v)
    lines = [",".join(SUMMARY_COLUMNS)]
    lines += [",".join(cell(r.get(c)) for c in SUMMARY_COLUMNS) for r in rows]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _reference(spec, problem, traces):
    ref = spec["metric"]["reference"]
    if ref == "known":
        return ReferenceValue(problem.F_star)
    if ref == "run":
        return ReferenceRun(spec["metric"]["reference_path"])
    return BestObserved(tuple(rows for rows in traces.values() if rows))


def run_experiment(flat, output_dir=None):
    """Run every solver in the config; returns ``(summary_rows, failures)``."""
    spec, problem, info, x0, solvers = validate(flat)
    out_dir = output_dir or spec["experiment"]["output_dir"]
    if not out_dir:
        raise ConfigurationError("no output directory (experiment.output_dir or MVRC_OUTPUT_DIR)")
    os.makedirs(out_dir, exist_ok=True)
    traces, metas, failures = {}, {}, {}
    algs = {n: spec["solvers"][n]["algorithm"] for n in spec["solvers"]}
    for name, (runner, cfg) in solvers.items():
        path = os.path.join(out_dir, name + TRACE_SUFFIX)
        try:
            out = runner(problem, x0, cfg)
        except Exception as exc:  # one solver failing must not sink the experiment
            failures[name] = f"{type(exc).__name__}: {exc}"
            write_trace(path, [], error=failures[name])
            traces[name] = []
            metas[name] = {"algorithm": algs[name], "status": "error", "error": failures[name],
                           "traceback": traceback.format_exc(), "config": _config_dict(cfg)}
            continue
        write_trace(path, out.trace)
        traces[name] = [{"iter": r.iter, "samples_g": r.samples_g, "samples_gp": r.samples_gp,
                         "samples_fgrad": r.samples_fgrad, "prox_evals": r.prox_evals,
                         "grad_mapping_norm": r.grad_mapping_norm, "objective": r.objective} for r in out.trace]
        metas[name] = {"algorithm": algs[name], "status": "ok", "config": _config_dict(cfg), "run": out.meta,
                       "counters": out.counters, "sampled_output": out.sampled_output,
                       "final_point": out.final_point}
    try:
        ref_val = _reference(spec, problem, traces).value()
    except ConfigurationError:
        ref_val = None
    rows = summarize_traces(traces, ref_val, algs)
    write_summary(os.path.join(out_dir, "summary.csv"), rows)
    meta = {"package_version": __version__, "backend": backend_name(), "numpy": np.__version__,
            "python": platform.python_version(), "config": flat, "resolved": spec, "dataset": info,
            "problem": problem.metadata(), "lipschitz": _config_dict(problem.lipschitz), "x0": x0,
            "reference": {"mode": spec["metric"]["reference"], "value": ref_val}, "solvers": metas}
    with open(os.path.join(out_dir, "metadata.json"), "w", encoding="utf-8", newline="") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows, failures


def config_from_metadata(path):
    """The flat config stored in a run's ``metadata.json``."""
    if os.path.isdir(path):
        path = os.path.join(path, "metadata.json")
    try:
        with open(path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read metadata {path}: {exc}") from None
    return meta["config"]


def summarize_dir(path):
    """Recompute the summary of an output directory from its trace files."""
    if not os.path.isdir(path):
        raise ConfigurationError(f"{path} is not a directory")
    names = sorted(f[:-len(TRACE_SUFFIX)] for f in os.listdir(path) if f.endswith(TRACE_SUFFIX))
    if not names:
        raise ConfigurationError(f"no trace files in {path}")
    traces = {}
    for n in names:
        rows, _ = read_trace(os.path.join(path, n + TRACE_SUFFIX))
        traces[n] = rows
    algs, ref_val = {}, None
    meta_path = os.path.join(path, "metadata.json")
    if os.path.isfile(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        algs = {n: m.get("algorithm", "") for n, m in meta.get("solvers", {}).items()}
        ref_val = meta.get("reference", {}).get("value")
    if ref_val is None and any(traces.values()):
        ref_val = BestObserved(tuple(r for r in traces.values() if r)).value()
    return summarize_traces(traces, ref_val, algs)
