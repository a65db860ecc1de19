import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mvrc.core import ConfigurationError, objective
from mvrc.data import make_rng
from mvrc.harness import config as cfgmod
from mvrc.harness.cli import main
from mvrc.harness.experiment import (BestObserved, ReferenceRun, ReferenceValue, best_so_far, config_from_metadata,
                                     function_value_gap, run_experiment, summarize_dir, summarize_traces, validate)
from mvrc.harness.trace import HEADER, read_trace, write_trace
from mvrc.problems import random_linear_problem
from mvrc.solvers import IterationRecord

BASE = """
experiment.name = t
experiment.seed = 3
experiment.x0 = 0.5
problem.kind = portfolio
data.n = 64
data.d = 4
metric.step = 0.01
solver.mv.algorithm = mvrc1
solver.mv.schedule = constant
solver.mv.alpha = 0.8
solver.mv.beta = 0.01
solver.mv.T = 12
solver.mv.tau = 4
solver.mv.inner = 8
solver.sc.algorithm = scgd
solver.sc.a = 0.01
solver.sc.budget = 300
"""


def flat(text=BASE, **extra):
    f = cfgmod.parse_config_text(text)
    f.update(extra)
    return f


def strip_wall(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return [line.rsplit(",", 1)[0] for line in fh.read().split("\n")]


# ---- config grammar ------------------------------------------------------

def test_parse_values_and_comments():
    f = cfgmod.parse_config_text("# c\n\na.b = 3\na.c = 0.5\na.d = hello\na.e = [1, 2]\na.f = True\n")
    assert f == {"a.b": 3, "a.c": 0.5, "a.d": "hello", "a.e": [1, 2], "a.f": True}


@pytest.mark.parametrize("text,match", [("a.b = 1\na.b = 2\n", "duplicate"), ("nodot = 1\n", "bad key"),
                                        ("a.b\n", "expected"), ("a.b = \n", "empty")])
def test_parse_errors(text, match):
    with pytest.raises(ConfigurationError, match=match):
        cfgmod.parse_config_text(text)


def test_dump_round_trip():
    f = flat()
    assert cfgmod.parse_config_text(cfgmod.dump_config(f)) == f


@pytest.mark.parametrize("extra,match", [({"problem.colour": 1}, "unknown key"), ({"foo.bar": 1}, "unknown section"),
                                         ({"solver.mv.budget": 10}, "not both"), ({"solver.mv.speed": 1}, "unknown keys"),
                                         ({"solver.sc.algorithm": "adam"}, "must be one of"),
                                         ({"solver.mv.T": 2}, "tau"), ({"metric.step": -1.0}, "metric.step"),
                                         ({"data.kind": "parquet"}, "data.kind"),
                                         ({"solver.mv.T": "theorem"}, "graddom")])
def test_structure_errors(extra, match):
    with pytest.raises(ConfigurationError, match=match):
        validate(flat(**extra))


def test_problem_kind_required():
    f = flat()
    del f["problem.kind"]
    with pytest.raises(ConfigurationError, match="problem.kind"):
        validate(f)


def test_output_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("MVRC_OUTPUT_DIR", str(tmp_path / "env"))
    spec = cfgmod.structure(flat(**{"experiment.output_dir": "elsewhere"}))
    assert spec["experiment"]["output_dir"] == str(tmp_path / "env")


def test_budget_sets_iterations():
    _, _, _, _, solvers = validate(flat())
    _, sc = solvers["sc"]
    assert sc.T == 100  # 3 samples per scgd iteration


def test_theorem_restart_plan_in_config():
    text = ("problem.kind = linear\ndata.n = 16\ndata.d = 3\nsolver.m.algorithm = mvrc1\nsolver.m.beta = theorem\n"
            "solver.m.tau = theorem\nsolver.m.epsilon = 0.01\nsolver.m.restart = graddom\nsolver.m.restart_C = 4.0\n"
            "solver.m.T = theorem\n")
    _, problem, _, _, solvers = validate(cfgmod.parse_config_text(text))
    _, c = solvers["m"]
    assert c.restart.kind == "graddom" and c.restart.M == 14
    assert c.tau == 4 and c.batch_plan.checkpoint_A == 16
    assert c.T == max(int(np.ceil(4.0 * problem.v / (2 * c.schedule.beta))), 4)


# ---- traces --------------------------------------------------------------

def rec(i, g=1.0):
    return IterationRecord(i, 10 * i, 10 * i, i, i + 1, g, -0.25, 1.5)


def test_trace_round_trip(tmp_path):
    p = tmp_path / "a.trace.csv"
    write_trace(p, [rec(0, 0.1), rec(1, 1e-300)])
    raw = p.read_bytes()
    assert raw.startswith(HEADER.encode() + b"\n") and b"\r" not in raw
    assert HEADER == "iter,samples_g,samples_gp,samples_fgrad,prox_evals,grad_mapping_norm,objective,wall_ms"
    rows, err = read_trace(p)
    assert err is None and rows[1]["grad_mapping_norm"] == 1e-300 and rows[0]["samples_g"] == 0


def test_trace_error_row(tmp_path):
    p = tmp_path / "b.trace.csv"
    write_trace(p, [rec(0)], error="boom")
    rows, err = read_trace(p)
    assert len(rows) == 1 and err["iter"] == "error" and np.isnan(err["objective"])


def test_trace_bad_header(tmp_path):
    p = tmp_path / "c.trace.csv"
    p.write_text("a,b\n")
    with pytest.raises(ConfigurationError):
        read_trace(p)


# ---- references ----------------------------------------------------------

def test_best_observed_gap_zero_at_min():
    traces = ([rec(0, 1), rec(1, 1)], [rec(0, 1)])
    traces[0][1].objective = -3.0
    gaps = function_value_gap(traces[0], BestObserved(traces))
    assert gaps[1] == 0.0 and gaps[0] == pytest.approx(2.75)


def test_known_reference_gap():
    prob = random_linear_problem(make_rng(0, "data"), n=8, d=3, p=5)
    xs = np.random.default_rng(0).standard_normal((5, 3))
    rows = [{"objective": objective(prob, x)} for x in xs]
    gaps = function_value_gap(rows, ReferenceValue(prob.F_star))
    for x, g in zip(xs, gaps):
        r = prob.A_bar @ x - prob.b
        resid_star = prob.A_bar @ prob.x_star - prob.b
        assert g == pytest.approx(0.5 * r @ r - 0.5 * resid_star @ resid_star, abs=1e-10)


def test_reference_run_missing(tmp_path):
    with pytest.raises(ConfigurationError):
        ReferenceRun(str(tmp_path / "none.csv")).value()


def test_best_so_far_nonincreasing():
    vals = list(np.random.default_rng(1).standard_normal(50))
    env = best_so_far(vals)
    assert all(b <= a for a, b in zip(env, env[1:]))
    assert env[-1] == min(vals)


def test_summary_aligns_at_common_budget():
    a = [{"iter": i, "samples_g": 10 * i, "samples_gp": 0, "samples_fgrad": 0, "grad_mapping_norm": 1.0 / (i + 1),
          "objective": -i} for i in range(10)]
    b = [{"iter": i, "samples_g": 30 * i, "samples_gp": 0, "samples_fgrad": 0, "grad_mapping_norm": 1.0,
          "objective": 0.0} for i in range(3)]
    rows = {r["solver"]: r for r in summarize_traces({"a": a, "b": b}, -9.0)}
    assert rows["a"]["budget"] == 60 and rows["a"]["iter"] == 6 and rows["b"]["iter"] == 2
    assert rows["a"]["final_iter"] == 9


# ---- experiments ---------------------------------------------------------

def test_single_iteration_trace(tmp_path):
    f = flat(**{"solver.mv.T": 1, "solver.mv.tau": 1})
    del f["solver.sc.algorithm"], f["solver.sc.a"], f["solver.sc.budget"]
    run_experiment(f, str(tmp_path))
    lines = (tmp_path / "mv.trace.csv").read_text().split("\n")
    assert lines[0] == HEADER and len([ln for ln in lines[1:] if ln]) == 1


def test_shared_start_metrics(tmp_path):
    run_experiment(flat(), str(tmp_path))
    a, _ = read_trace(tmp_path / "mv.trace.csv")
    b, _ = read_trace(tmp_path / "sc.trace.csv")
    assert a[0]["iter"] == b[0]["iter"] == 0
    assert a[0]["grad_mapping_norm"] == b[0]["grad_mapping_norm"]
    assert a[0]["objective"] == b[0]["objective"]


def test_rerun_identical_and_metadata_reconstructs(tmp_path):
    run_experiment(flat(), str(tmp_path / "one"))
    run_experiment(flat(), str(tmp_path / "two"))
    again = config_from_metadata(str(tmp_path / "one"))
    run_experiment(again, str(tmp_path / "three"))
    for name in ("mv", "sc"):
        ref = strip_wall(tmp_path / "one" / f"{name}.trace.csv")
        assert strip_wall(tmp_path / "two" / f"{name}.trace.csv") == ref
        assert strip_wall(tmp_path / "three" / f"{name}.trace.csv") == ref
    assert (tmp_path / "one" / "summary.csv").read_bytes() == (tmp_path / "two" / "summary.csv").read_bytes()
    meta = json.loads((tmp_path / "one" / "metadata.json").read_text())
    assert meta["dataset"]["checksum"].startswith("sha256:")
    assert meta["solvers"]["mv"]["run"]["zeta"] >= 0


@pytest.mark.filterwarnings("ignore:overflow")
def test_failed_solver_gets_error_row(tmp_path):
    rows, failures = run_experiment(flat(**{"solver.mv.beta": 1e200}), str(tmp_path))
    assert "mv" in failures and "sc" not in failures
    _, err = read_trace(tmp_path / "mv.trace.csv")
    assert err is not None
    assert {r["solver"]: r["status"] for r in rows} == {"mv": "error", "sc": "ok"}


def test_summarize_dir(tmp_path):
    rows, _ = run_experiment(flat(), str(tmp_path))
    again = summarize_dir(str(tmp_path))
    assert [r["solver"] for r in again] == [r["solver"] for r in rows]
    assert again[0]["grad_mapping_norm"] == rows[0]["grad_mapping_norm"]


# ---- CLI -----------------------------------------------------------------

def cfg_file(tmp_path, text):
    p = tmp_path / "x.cfg"
    p.write_text(text, encoding="utf-8")
    return str(p)


@pytest.mark.filterwarnings("ignore:overflow")
def test_cli_exit_codes(tmp_path, capsys):
    good = cfg_file(tmp_path, BASE)
    assert main(["validate", good]) == 0
    assert main(["run", good, "-o", str(tmp_path / "out")]) == 0
    assert main(["summarize", str(tmp_path / "out")]) == 0
    assert main(["summarize", "--csv", str(tmp_path / "out")]) == 0
    assert capsys.readouterr().out.count("mvrc1") >= 2
    assert main(["validate", str(tmp_path / "missing.cfg")]) == 2
    assert main(["validate", cfg_file(tmp_path, BASE + "problem.kind2 = x\n")]) == 2
    assert main(["bogus"]) == 2
    bad = cfg_file(tmp_path, BASE.replace("solver.mv.beta = 0.01", "solver.mv.beta = 1e200"))
    assert main(["run", bad, "-o", str(tmp_path / "fail")]) == 3


def test_cli_bad_csv_path_is_config_error(tmp_path):
    text = BASE.replace("data.n = 64\ndata.d = 4\n", f"data.kind = csv\ndata.path = '{tmp_path}/none.csv'\n")
    assert main(["validate", cfg_file(tmp_path, text)]) == 2


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mvrc.harness.cli", "validate", cfg_file(tmp_path, BASE)],
                         capture_output=True, text=True, env=dict(os.environ))
    assert out.returncode == 0 and out.stdout.startswith("ok:")
