"""Experiment config files.

Grammar, one entry per line::

    # comment
    section.key = value
    solver.<name>.key = value

Keys are dotted identifiers; each may appear once.  Values are Python
literals (numbers, quoted strings, lists, True/False/None); anything that is
not a literal is read as a bare string, so ``problem.kind = portfolio`` works.
Inline comments are not supported.  Sections: ``experiment``, ``problem``,
``data``, ``metric`` and one ``solver.<name>`` block per solver.
"""
import ast
import os
import re

from ..core import ConfigurationError

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+$")

OUTPUT_ENV = "MVRC_OUTPUT_DIR"


def parse_value(text):
    text = text.strip()
    if text == "":
        raise ValueError("empty value")
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text, source="<config>"):
    """Flat ``{dotted.key: value}`` mapping from config text."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY.match(key):
            raise ConfigurationError(f"{source}:{lineno}: bad key {key!r} (need dotted identifiers)")
        if key in out:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = parse_value(value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: {exc} for {key!r}") from None
    return out


def read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, os.fspath(path))


def dump_config(flat):
    """Inverse of :func:`parse_config_text` (sorted keys, ``repr`` values)."""
    return "".join(f"{k} = {flat[k]!r}\n" for k in sorted(flat))


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

_ANY = object()

SECTIONS = {
    "experiment": {"name": (str, "experiment"), "seed": (int, 0), "output_dir": (str, None),
                   "x0": (_ANY, 0.0)},
    "problem": {"kind": (str, None), "risk_weight": (float, 0.2), "l1": (float, None),
                "group_weight": (float, 1.0), "radius": (float, None), "spread": (float, 0.1),
                "cond": (float, 3.0), "p": (int, None)},
    "data": {"kind": (str, "synth"), "path": (str, None), "target": (str, None), "columns": (list, None),
             "rows": (int, None), "n": (int, None), "d": (int, None), "seed": (int, None),
             "mean": (float, 0.05), "scale": (float, 1.0), "factor_scale": (float, 0.0),
             "d_signal": (int, 4), "d_noise": (int, 96), "noise": (float, 1.0), "standardize": (bool, True)},
    "metric": {"step": (_ANY, "lambda"), "every": (int, None), "reference": (str, "best"),
               "reference_path": (str, None)},
}

MVRC_KEYS = {
    "algorithm": (str, None), "schedule": (str, "diminishing"), "alpha": (float, None),
    "beta": (_ANY, None), "lambda_scale": (float, 1.0), "T": (_ANY, None), "budget": (int, None),
    "tau": (_ANY, None), "epsilon": (float, None), "restart": (str, "none"), "restart_M": (int, 1),
    "restart_C": (float, 1.0), "seed": (int, None), "checkpoint": (_ANY, "n"), "inner": (_ANY, None),
    "checkpoint_gp": (_ANY, None), "inner_gp": (int, None), "checkpoint_f": (_ANY, None),
    "inner_f": (int, None), "inner_scale": (float, 1.0), "online_scale": (float, 1.0),
    "C1": (float, 1.0), "C2": (float, 1.0),
}
BASELINE_KEYS = {
    "algorithm": (str, None), "a": (float, None), "b": (float, None), "a_exp": (float, None),
    "b_exp": (float, None), "T": (int, None), "budget": (int, None), "batch_g": (int, 1),
    "batch_gp": (int, None), "batch_f": (int, 1), "shared_A": (bool, False), "seed": (int, None),
}
MVRC_ALGS = ("mvrc1", "mvrc2", "civr")
BASELINE_ALGS = ("scgd", "ascpg")


def _coerce(key, typ, val):
    if typ is _ANY or val is None:
        return val
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    if typ is bool and not isinstance(val, bool):
        raise ConfigurationError(f"{key}: expected True/False, got {val!r}")
    if typ is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise ConfigurationError(f"{key}: expected an integer, got {val!r}")
    if typ is list and isinstance(val, tuple):
        return list(val)
    if not isinstance(val, typ):
        raise ConfigurationError(f"{key}: expected {typ.__name__}, got {val!r}")
    return val


def _fill(prefix, schema, flat):
    out = {}
    for k, (typ, default) in schema.items():
        full = f"{prefix}.{k}"
        out[k] = _coerce(full, typ, flat[full]) if full in flat else default
    return out


def structure(flat):
    """Check every key against the schema; return nested sections and solvers.

    Unknown keys and missing required keys raise :class:`ConfigurationError`.
    """
    solvers = {}
    for key in flat:
        head, _, rest = key.partition(".")
        if head == "solver":
            name, _, sub = rest.partition(".")
            if not sub or "." in sub:
                raise ConfigurationError(f"solver keys look like solver.<name>.<key>, got {key!r}")
            solvers.setdefault(name, set()).add(sub)
        elif head in SECTIONS:
            if rest not in SECTIONS[head]:
                raise ConfigurationError(f"unknown key {key!r}")
        else:
            raise ConfigurationError(f"unknown section in key {key!r}")
    out = {sec: _fill(sec, schema, flat) for sec, schema in SECTIONS.items()}
    if out["problem"]["kind"] is None:
        raise ConfigurationError("problem.kind is required")
    if not solvers:
        raise ConfigurationError("no solver.<name>.* entries")
    out["solvers"] = {}
    for name in sorted(solvers):
        alg = flat.get(f"solver.{name}.algorithm")
        if alg in MVRC_ALGS:
            schema = MVRC_KEYS
        elif alg in BASELINE_ALGS:
            schema = BASELINE_KEYS
        else:
            raise ConfigurationError(f"solver.{name}.algorithm must be one of {MVRC_ALGS + BASELINE_ALGS}, got {alg!r}")
        unknown = solvers[name] - set(schema)
        if unknown:
            raise ConfigurationError(f"unknown keys for solver {name!r} ({alg}): {sorted(unknown)}")
        spec = _fill(f"solver.{name}", schema, flat)
        if spec["T"] is None and spec["budget"] is None:
            raise ConfigurationError(f"solver {name!r} needs T or budget")
        if spec["T"] is not None and spec["budget"] is not None:
            raise ConfigurationError(f"solver {name!r}: give T or budget, not both")
        out["solvers"][name] = spec
    env_dir = os.environ.get(OUTPUT_ENV)
    if env_dir:
        out["experiment"]["output_dir"] = env_dir
    return out
