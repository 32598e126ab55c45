"""Config-driven runs, the verification suite and parameter sweeps.

Usage::

    bbgky run    --config cfg.json --out results/
    bbgky verify --config cfg.json
    bbgky sweep  --config cfg.json

Exit codes: 0 success, 2 config error, 3 check failure, 4 resource cap.
Every output file is written to a temporary name and renamed into place.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import math
import os
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .combinatorics import (ResourceCapError, cumulant_coefficient, enumerate_partitions,
                            partition_weight_sum)
from .dynamics import (CATALOG_NAMES, OBSERVABLE, STATE, JumpModel, KernelSet, catalog,
                       random_kernels, validate_kernels)
from .hierarchies import (annihilation_op, apply_lambda, apply_lambda_star, bbgky_evolve,
                          commutator, creation_op, cumulant, dual_bbgky_evolve,
                          exp_annihilation, exp_creation, generator_B, generator_Bstar,
                          observable_cluster)
from .meanfield import (DEFAULT_DRESSING, CorrelatedInitialState, adjudicate_dressing,
                        correlations_propagation_check, dual_vlasov_evolve, f1_series,
                        fit_loglog_slope, limit_expansion, one_body_limit_error,
                        scaled_expansion_error, state_vlasov_hierarchy_evolve, vlasov_solve)
from .state_space import (EntitySpace, SequenceVector, apply, c_gamma_norm, lift_operator, pair,
                          product_weights, symmetrize)

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_CAP = 0, 2, 3, 4
CONFIG_VERSION = 1
DEFAULT_CONFIG_ENV = "BBGKY_DEFAULT_CONFIG"
SCENARIOS = ("jump-evolve", "bbgky-evolve", "dual-bbgky-evolve", "meanfield-scan",
             "vlasov", "propagation-check")

_LIST = "list"
_OPT_LIST = "list|null"
_OPT_DICT = "dict|null"

# key -> (type tag or nested schema, default)
SCHEMA: dict = {
    "version": (int, CONFIG_VERSION),
    "scenario": (str, "vlasov"),
    "seed": (int, 0),
    "space": ({
        "M": (int, 1),
        "grid_size": (int, 2),
        "weights": (_OPT_LIST, None),
        "max_order": (int, 10),
    }, None),
    "kernels": ({
        "source": (str, "catalog"),
        "name": (str, "uniform-redistribution"),
        "rate1": (float, 1.0),
        "rate2": (float, 1.0),
        "width": (float, 0.5),
        "tables": (_OPT_DICT, None),
    }, None),
    "eps": (float, 0.1),
    "eps_list": (_LIST, [0.2, 0.1, 0.05, 0.025]),
    "truncation": ({
        "s_max": (int, 3),
        "N": (int, 4),
        "n_max": (int, 3),
        "propagation_N": (int, 9),
    }, None),
    "time": ({
        "t_end": (float, 0.5),
        "n_points": (int, 11),
    }, None),
    "initial": ({
        "correlation_amplitude": (float, 0.3),
    }, None),
    "quad_order": (int, 8),
    "tolerances": ({
        "rk4": (float, 1e-8),
        "duality": (float, 1e-9),
        "conjugation": (float, 1e-10),
        "kinetic": (float, 1e-6),
        "propagation": (float, 1e-6),
        "interaction_free": (float, 1e-9),
        "mass": (float, 1e-10),
        "slope": (float, 0.9),
        "rate_shrink": (float, 5.0),
    }, None),
    "sweep": ({
        "eps": (_LIST, []),
        "t": (_LIST, []),
        "truncation": (_LIST, []),
    }, None),
    "output": ({
        "dir": (str, "bbgky-out"),
    }, None),
}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` points at the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# configuration

def _check_value(path: str, tag, value):
    if tag is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tag is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tag is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tag == _LIST or (tag == _OPT_LIST and value is not None):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return copy.deepcopy(value)
    if tag == _OPT_DICT and value is not None:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {value!r}")
        return copy.deepcopy(value)
    return value


def _parse_section(raw: dict, schema: dict, prefix: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(prefix or "<root>", "expected an object")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}", "unknown key")
    out = {}
    for key, (tag, default) in schema.items():
        path = prefix + key
        if isinstance(tag, dict):
            out[key] = _parse_section(raw.get(key, {}), tag, path + ".")
        elif key in raw:
            out[key] = _check_value(path, tag, raw[key])
        else:
            out[key] = copy.deepcopy(default)
    return out


def parse_config(raw: dict) -> dict:
    """Validate a raw config mapping and fill defaults.

    Raises
    ------
    ConfigError
        With the dotted path of the first offending key.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected an object")
    if "version" not in raw:
        raise ConfigError("version", "missing required key")
    cfg = _parse_section(raw, SCHEMA, "")
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported version {cfg['version']}")
    if cfg["scenario"] not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {', '.join(SCENARIOS)}")
    k = cfg["kernels"]
    if k["source"] not in ("catalog", "random", "inline"):
        raise ConfigError("kernels.source", "must be catalog, random or inline")
    if k["source"] == "catalog" and k["name"] not in CATALOG_NAMES:
        raise ConfigError("kernels.name", f"must be one of {', '.join(CATALOG_NAMES)}")
    if k["source"] == "inline":
        tables = k["tables"] or {}
        missing = [t for t in ("a1", "A1", "a2", "A2") if t not in tables]
        if missing:
            raise ConfigError(f"kernels.tables.{missing[0]}", "missing table")
        extra = sorted(set(tables) - {"a1", "A1", "a2", "A2"})
        if extra:
            raise ConfigError(f"kernels.tables.{extra[0]}", "unknown key")
    for key in ("M", "grid_size", "max_order"):
        if cfg["space"][key] < 1:
            raise ConfigError(f"space.{key}", "must be positive")
    for key in ("s_max", "N", "n_max", "propagation_N"):
        if cfg["truncation"][key] < (0 if key == "n_max" else 1):
            raise ConfigError(f"truncation.{key}", "out of range")
    if cfg["time"]["n_points"] < 2:
        raise ConfigError("time.n_points", "need at least 2 points")
    if cfg["time"]["t_end"] < 0:
        raise ConfigError("time.t_end", "must be nonnegative")
    if cfg["eps"] < 0:
        raise ConfigError("eps", "must be nonnegative")
    for i, e in enumerate(cfg["eps_list"]):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or e <= 0:
            raise ConfigError(f"eps_list[{i}]", "must be a positive number")
    if cfg["quad_order"] < 2:
        raise ConfigError("quad_order", "must be at least 2")
    return cfg


def serialize_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2) + "\n"


def load_config(path: str | Path | None) -> dict:
    """Read and validate a JSON config; ``None`` loads the bundled default."""
    if path is None:
        path = os.environ.get(DEFAULT_CONFIG_ENV)
    try:
        if path is None:
            text = resources.files("bbgky").joinpath("data/default_config.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return parse_config(raw)


def _anchors() -> dict:
    return json.loads(resources.files("bbgky").joinpath("data/anchors.json").read_text())


# ---------------------------------------------------------------------------
# building blocks

def build_space(cfg: dict) -> EntitySpace:
    s = cfg["space"]
    return EntitySpace(s["M"], tuple(np.linspace(0.0, 1.0, s["grid_size"])),
                       weights=s["weights"], max_order=s["max_order"])


def build_kernels(cfg: dict, space: EntitySpace) -> KernelSet:
    k = cfg["kernels"]
    if k["source"] == "catalog":
        return catalog(k["name"], space, k["rate1"], k["rate2"], k["width"])
    if k["source"] == "random":
        rng = np.random.default_rng([cfg["seed"], 1])
        return random_kernels(space, rng, k["rate1"], k["rate2"])
    t = k["tables"]
    try:
        return KernelSet(t["a1"], t["A1"], t["a2"], t["A2"], name="inline")
    except ValueError as exc:
        raise ConfigError("kernels.tables", str(exc)) from exc


def time_grid(cfg: dict) -> np.ndarray:
    return np.linspace(0.0, cfg["time"]["t_end"], cfg["time"]["n_points"])


def _random_density(rng, K: int, space: EntitySpace) -> np.ndarray:
    f1 = rng.uniform(0.5, 1.5, K)
    return f1 / float(space.weights @ f1)


def _random_g2(rng, K: int, amplitude: float) -> np.ndarray:
    g = rng.uniform(-1.0, 1.0, (K, K))
    return 1.0 + amplitude * (g + g.T) / 2


def correlated_initial_state(cfg: dict, space: EntitySpace, order: int, rng
                             ) -> CorrelatedInitialState:
    f1 = _random_density(rng, space.K, space)
    g2 = _random_g2(rng, space.K, cfg["initial"]["correlation_amplitude"])
    return CorrelatedInitialState.from_pair_correlation(f1, g2, order, space)


def random_observables(rng, K: int, s_max: int) -> SequenceVector:
    comps = [np.asarray(rng.uniform(-1, 1))]
    comps += [symmetrize(rng.uniform(-1, 1, (K,) * s)) for s in range(1, s_max + 1)]
    return SequenceVector(comps, OBSERVABLE)


def random_states(rng, K: int, N: int) -> SequenceVector:
    comps = [np.asarray(1.0)] + [symmetrize(rng.uniform(0, 1, (K,) * s)) for s in range(1, N + 1)]
    return SequenceVector(comps, STATE)


class Checks:
    """Ordered collection of named pass/fail checks with anchors."""

    def __init__(self):
        self.items: list[dict] = []
        self._anchors = _anchors()

    def add(self, name: str, value: float, tolerance: float, passed: bool,
            comparison: str = "<=") -> None:
        self.items.append({
            "name": name,
            "anchor": self._anchors.get(name, ""),
            "value": float(value),
            "tolerance": float(tolerance),
            "comparison": comparison,
            "passed": bool(passed),
        })

    def upper(self, name: str, value: float, tolerance: float) -> None:
        self.add(name, value, tolerance, value <= tolerance, "<=")

    def lower(self, name: str, value: float, tolerance: float) -> None:
        self.add(name, value, tolerance, value >= tolerance, ">=")

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items)


# ---------------------------------------------------------------------------
# scenarios; each returns (header, rows, checks, summary, extra)

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _scenario_jump_evolve(cfg, space, model, rng):
    n, eps = cfg["truncation"]["N"], cfg["eps"]
    f1 = _random_density(rng, space.K, space)
    f0 = np.asarray(1.0)
    for _ in range(n):
        f0 = np.multiply.outer(f0, f1)
    rows, defects = [], []
    W = product_weights(space, n)
    for t in time_grid(cfg):
        ft = (model.semigroup(n, t, eps, STATE) @ f0.reshape(-1)).reshape(f0.shape)
        defects.append(abs(float(np.sum(W * ft)) - 1.0))
        rows += [(t, i, v) for i, v in enumerate(ft.reshape(-1))]
    checks = Checks()
    checks.upper("mass-conservation", max(defects), cfg["tolerances"]["mass"])
    return ("t", "flat_index", "value"), rows, checks, {"mass_defect": max(defects)}, {}


def _scenario_bbgky(cfg, space, model, rng, dual: bool):
    N, eps = cfg["truncation"]["N"], cfg["eps"]
    s_max = cfg["truncation"]["s_max"]
    init = correlated_initial_state(cfg, space, N, rng)
    f = init.assemble(N)
    # observables above s_max are zero but must be carried up to N
    b = random_observables(rng, space.K, N)
    for s in range(s_max + 1, N + 1):
        b.components[s] = np.zeros_like(b.components[s])
    rows, dual_res, bound_ratio, mass = [], [], [], []
    for t in time_grid(cfg):
        Ub = dual_bbgky_evolve(b, t, model, eps)
        Uf = bbgky_evolve(f, t, model, eps)
        lhs, rhs = pair(Ub, f, space), pair(b, Uf, space)
        dual_res.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        mass.append(abs(float(space.weights @ Uf[1]) - float(space.weights @ f[1])))
        gamma = b.norm_param
        bound = math.e ** 2 / (1 - gamma * math.e) * c_gamma_norm(b)
        bound_ratio.append(c_gamma_norm(Ub) / bound)
        seq = Ub if dual else Uf
        for s in range(1, seq.s_max + 1):
            rows += [(t, s, i, v) for i, v in enumerate(np.asarray(seq[s]).reshape(-1))]
    tol = cfg["tolerances"]
    checks = Checks()
    checks.upper("duality", max(dual_res), tol["duality"])
    if dual:
        checks.upper("dual-group-bound", max(bound_ratio), 1.0)
    else:
        checks.upper("mass-conservation", max(mass), tol["mass"])
    summary = {"duality_residual": max(dual_res), "bound_ratio": max(bound_ratio),
               "mass_defect": max(mass)}
    return ("t", "order", "flat_index", "value"), rows, checks, summary, {}


def _scenario_meanfield_scan(cfg, space, model, rng):
    s_max = min(cfg["truncation"]["s_max"], 3)
    t = cfg["time"]["t_end"]
    b = random_observables(rng, space.K, s_max)
    limit = limit_expansion(b, t, model, cfg["quad_order"])
    rows = []
    for eps in cfg["eps_list"]:
        e = scaled_expansion_error(b, t, eps, s_max, model, limit=limit)
        k = one_body_limit_error(b[s_max], t, eps, model)
        rows.append((eps, e, k))
    checks = Checks()
    summary = {}
    if len(rows) >= 2:
        eps_v = [r[0] for r in rows]
        slope = fit_loglog_slope(eps_v, [r[1] for r in rows])
        slope_k = fit_loglog_slope(eps_v, [r[2] for r in rows])
        checks.lower("scaled-expansion-slope", slope, cfg["tolerances"]["slope"])
        checks.lower("one-body-limit-slope", slope_k, cfg["tolerances"]["slope"])
        summary = {"slope": slope, "one_body_slope": slope_k}
    summary.update({"scaled_error": rows[-1][1], "one_body_error": rows[-1][2]})
    return ("eps", "scaled_error", "one_body_error"), rows, checks, summary, {}


def _scenario_vlasov(cfg, space, model, rng):
    tr, tol = cfg["truncation"], cfg["tolerances"]
    n_max = tr["n_max"]
    init = correlated_initial_state(cfg, space, n_max + 1, rng)
    grid = time_grid(cfg)
    sol = vlasov_solve(init, grid, model, DEFAULT_DRESSING, tol["rk4"])
    rows = [(t, i, v) for t, f in zip(grid, sol.values) for i, v in enumerate(f)]
    series, _, tail = f1_series(init, grid[-1], model, n_max, cfg["quad_order"])
    hier = state_vlasov_hierarchy_evolve(init.assemble(n_max + 1), grid[-1], model, tol["rk4"])
    checks = Checks()
    checks.upper("kinetic-mass", sol.info["max_mass_defect"], tol["mass"])
    checks.upper("series-vs-hierarchy", float(np.max(np.abs(series - hier[1]))), tol["kinetic"])
    checks.upper("kinetic-vs-series", float(np.max(np.abs(sol.values[-1] - series))),
                 tol["kinetic"])
    summary = {"f1_final_sup": float(np.max(np.abs(sol.values[-1]))), "series_tail": tail,
               "kinetic_vs_series": checks.items[-1]["value"]}
    return ("t", "flat_index", "f1"), rows, checks, summary, {"substeps": sol.substeps}


def _scenario_propagation(cfg, space, model, rng):
    tr, tol = cfg["truncation"], cfg["tolerances"]
    t = cfg["time"]["t_end"]
    N = tr["N"]
    init = correlated_initial_state(cfg, space, N, rng)
    chaos = CorrelatedInitialState.chaotic(init.f1, tr["propagation_N"], space)
    b1 = rng.uniform(-1, 1, space.K)
    b2 = rng.uniform(-1, 1, (space.K,) * 2)
    b2 = (b2 + b2.T) / 2
    r1 = correlations_propagation_check(1, b1, init, t, model, order=cfg["quad_order"])
    r2 = correlations_propagation_check(2, b2, chaos, t, model, order=cfg["quad_order"])
    adj = adjudicate_dressing(init, t, model, b2)
    rows = [(1, *r1), (2, *r2)]
    checks = Checks()
    checks.upper("propagation-k1", r1[2], tol["propagation"])
    checks.upper("propagation-k2-chaotic", r2[2], tol["propagation"])
    checks.upper("dressing-adjudication", adj["residuals"][adj["adjudicated"]],
                 tol["interaction_free"])
    summary = {"k1_residual": r1[2], "k2_residual": r2[2]}
    extra = {"adjudication": adj}
    return ("k", "lhs", "rhs", "residual"), rows, checks, summary, extra


def _run_named(cfg, space, model, rng):
    name = cfg["scenario"]
    if name == "jump-evolve":
        return _scenario_jump_evolve(cfg, space, model, rng)
    if name in ("bbgky-evolve", "dual-bbgky-evolve"):
        return _scenario_bbgky(cfg, space, model, rng, dual=name == "dual-bbgky-evolve")
    if name == "meanfield-scan":
        return _scenario_meanfield_scan(cfg, space, model, rng)
    if name == "vlasov":
        return _scenario_vlasov(cfg, space, model, rng)
    return _scenario_propagation(cfg, space, model, rng)


# ---------------------------------------------------------------------------
# outputs

def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def make_report(cfg: dict, checks: Checks, wall: float, **extra) -> dict:
    report = {
        "library_version": __version__,
        "config_version": cfg["version"],
        "scenario": cfg["scenario"],
        "seed": cfg["seed"],
        "kernels_id": cfg["kernels"]["name"] if cfg["kernels"]["source"] == "catalog"
        else cfg["kernels"]["source"],
        "eps": cfg["eps"],
        "dressing": DEFAULT_DRESSING,
        "passed": checks.passed,
        "checks": checks.items,
        "wall_clock_s": wall,
        "config": cfg,
    }
    report.update(extra)
    return _jsonable(report)


def _prepare(cfg: dict):
    space = build_space(cfg)
    kernels = build_kernels(cfg, space)
    return space, kernels


def run_scenario(cfg: dict, out_dir: str | Path | None = None) -> tuple[dict, Path]:
    """Run ``cfg['scenario']`` and write ``<scenario>.csv`` plus ``<scenario>.json``."""
    out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    t0 = time.perf_counter()
    space, kernels = _prepare(cfg)
    model = JumpModel(space, kernels)
    rng = np.random.default_rng([cfg["seed"], 0])
    header, rows, checks, summary, extra = _run_named(cfg, space, model, rng)
    name = cfg["scenario"]
    atomic_write(out / f"{name}.csv", csv_text(header, rows))
    report = make_report(cfg, checks, time.perf_counter() - t0, summary=summary, **extra)
    atomic_write(out / f"{name}.json", json.dumps(report, indent=2) + "\n")
    return report, out / f"{name}.csv"


def scenario_summary(cfg: dict) -> dict:
    space, kernels = _prepare(cfg)
    model = JumpModel(space, kernels)
    rng = np.random.default_rng([cfg["seed"], 0])
    return _run_named(cfg, space, model, rng)[3]


# ---------------------------------------------------------------------------
# verification suite

def _rate_residuals(model, b3, t, eps):
    """Residuals of the small-time expansions of cumulants of order 1, 2 and 3, 4."""
    s = b3.ndim
    A1 = cumulant(t, observable_cluster(s), model, eps)
    r1 = np.max(np.abs((A1 @ b3 - b3) / t - np.reshape(model.generator(s, eps) @ b3.reshape(-1),
                                                        b3.shape)))
    j = s - 1
    const = b3.mean(axis=j, keepdims=True) * np.ones_like(b3)
    A2 = cumulant(t, observable_cluster(s, (j,)), model, eps)
    target = sum(eps * apply(lift_operator(model.L2, [i, j], s, model.K), const)
                 for i in range(s) if i != j)
    r2 = np.max(np.abs(A2 @ const / t - target))
    higher = []
    for n in (2, 3):
        if n < s:
            A = cumulant(t, observable_cluster(s, tuple(range(s - n, s))), model, eps)
            higher.append(np.max(np.abs(A @ b3)) / t)
    return r1, r2, higher


def verify_suite(cfg: dict) -> tuple[int, dict]:
    """Run the property suite on the configured space; exit code 0 iff all checks pass."""
    t0 = time.perf_counter()
    tol = cfg["tolerances"]
    checks = Checks()
    space, kernels = _prepare(cfg)
    diag = validate_kernels(kernels, space)
    checks.upper("kernel-normalization", max(diag.defect_A1, diag.defect_A2), diag.tol)
    if not diag.passed:
        report = make_report(cfg, checks, time.perf_counter() - t0,
                             kernel_diagnostics=diag.as_dict())
        return EXIT_CHECK, report
    model = JumpModel(space, kernels)
    rng = np.random.default_rng([cfg["seed"], 2])
    K = space.K
    eps = cfg["eps"] if cfg["eps"] > 0 else 1.0

    worst = 0.0
    for n in range(1, 5):
        total = sum(cumulant_coefficient(len(p)) for p in enumerate_partitions(n))
        worst = max(worst, abs(total - (1 if n == 1 else 0)))
    checks.upper("cumulant-coefficients", worst, 0.0)
    ratio = max(partition_weight_sum(n + 1) / (math.factorial(n) * math.e ** (n + 2))
                for n in range(8))
    checks.upper("partition-weight-bound", ratio, 1.0)

    # duality and group bound
    N = min(cfg["truncation"]["N"], 3)
    b, f = random_observables(rng, K, N), random_states(rng, K, N)
    res, bound = 0.0, 0.0
    for t in (0.1, 0.5, 1.0):
        Ub, Uf = dual_bbgky_evolve(b, t, model, eps), bbgky_evolve(f, t, model, eps)
        lhs, rhs = pair(Ub, f, space), pair(b, Uf, space)
        res = max(res, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        g = b.norm_param
        bound = max(bound, c_gamma_norm(Ub) / (math.e ** 2 / (1 - g * math.e) * c_gamma_norm(b)))
    checks.upper("duality", res, tol["duality"])
    checks.upper("dual-group-bound", bound, 1.0)

    # cumulant norm bound
    s = min(4, space.max_order)
    worst = 0.0
    for n in range(0, s):
        op = cumulant(1.0, observable_cluster(s, tuple(range(s - n, s))), model, eps).matrix
        worst = max(worst, np.max(np.sum(np.abs(op), axis=1))
                    / (math.factorial(n) * math.e ** (n + 2)))
    checks.upper("cumulant-norm-bound", worst, 1.0)

    # rates
    b3 = rng.uniform(-1, 1, (K,) * min(4, space.max_order))
    c1 = _rate_residuals(model, b3, 1e-2, eps)
    c2 = _rate_residuals(model, b3, 1e-3, eps)
    checks.lower("cumulant-rate-order1", c1[0] / c2[0], tol["rate_shrink"])
    checks.lower("cumulant-rate-order2", c1[1] / c2[1], tol["rate_shrink"])
    checks.lower("cumulant-rate-higher", min(a / c for a, c in zip(c1[2], c2[2])),
                 tol["rate_shrink"])

    # conjugations
    B_conj = exp_creation(apply_lambda(exp_creation(b, 1.0), model, eps), -1.0)
    checks.upper("conjugation-B", (generator_B(b, model, eps) - B_conj).max_abs(),
                 tol["conjugation"])
    Bs_conj = exp_annihilation(apply_lambda_star(exp_annihilation(f, space, -1.0), model, eps),
                               space, 1.0)
    checks.upper("conjugation-Bstar", (generator_Bstar(f, model, eps) - Bs_conj).max_abs(),
                 tol["conjugation"])
    lam = lambda x: apply_lambda(x, model, eps)
    lam_s = lambda x: apply_lambda_star(x, model, eps)
    ann = lambda x: annihilation_op(x, space)
    checks.upper("double-commutator-observable",
                 commutator(commutator(lam, creation_op), creation_op)(b).max_abs(),
                 tol["conjugation"])
    checks.upper("double-commutator-state",
                 commutator(ann, commutator(ann, lam_s))(f).max_abs(), tol["conjugation"])

    # mean field and kinetic checks
    t_check = min(cfg["time"]["t_end"], 1.0)
    bl = random_observables(rng, K, min(cfg["truncation"]["s_max"], 3))
    lim = limit_expansion(bl, t_check, model, cfg["quad_order"])
    dv = dual_vlasov_evolve(bl, t_check, model, tol["rk4"])
    checks.upper("dual-vlasov-vs-limit", (dv - lim).max_abs(), 1e-7)
    eps_list = cfg["eps_list"]
    sm = bl.s_max
    errs = [scaled_expansion_error(bl, t_check, e, sm, model, limit=lim) for e in eps_list]
    kato = [one_body_limit_error(bl[sm], t_check, e, model) for e in eps_list]
    checks.lower("scaled-expansion-slope", fit_loglog_slope(eps_list, errs), tol["slope"])
    checks.lower("one-body-limit-slope", fit_loglog_slope(eps_list, kato), tol["slope"])

    # kinetic consistency on the configured scenario
    n_max = min(cfg["truncation"]["n_max"], 3)
    init = correlated_initial_state(cfg, space, n_max + 1, rng)
    series, _, _ = f1_series(init, t_check, model, n_max, cfg["quad_order"])
    hier = state_vlasov_hierarchy_evolve(init.assemble(n_max + 1), t_check, model, tol["rk4"])
    sol = vlasov_solve(init, [0.0, t_check], model, DEFAULT_DRESSING, tol["rk4"])
    checks.upper("series-vs-hierarchy", float(np.max(np.abs(series - hier[1]))), tol["kinetic"])
    checks.upper("kinetic-vs-series", float(np.max(np.abs(sol.values[-1] - series))),
                 tol["kinetic"])
    checks.upper("kinetic-mass", sol.info["max_mass_defect"], tol["mass"])
    hmass = abs(float(space.weights @ hier[1]) - float(space.weights @ init.f1))
    checks.upper("mass-conservation", hmass, tol["mass"])

    # propagation of correlations
    r1 = correlations_propagation_check(1, rng.uniform(-1, 1, K), init, t_check, model,
                                        order=cfg["quad_order"])
    checks.upper("propagation-k1", r1[2], tol["propagation"])
    b2 = rng.uniform(-1, 1, (K, K))
    # chaotic data at a deeper truncation, where the hierarchy closes on f1
    Np = cfg["truncation"]["propagation_N"]
    chaos = CorrelatedInitialState.chaotic(init.f1, Np, space)
    kin = vlasov_solve(chaos, [0.0, t_check], model, DEFAULT_DRESSING, tol["rk4"]).values[-1]
    deep = state_vlasov_hierarchy_evolve(chaos.assemble(Np), t_check, model, tol["rk4"])[1]
    checks.upper("kinetic-vs-hierarchy-chaotic", float(np.max(np.abs(kin - deep))),
                 tol["kinetic"])
    r2 = correlations_propagation_check(2, (b2 + b2.T) / 2, chaos, t_check, model,
                                        order=cfg["quad_order"], f1_t=deep)
    checks.upper("propagation-k2-chaotic", r2[2], tol["propagation"])
    adj = adjudicate_dressing(init, t_check, model, (b2 + b2.T) / 2)
    checks.upper("dressing-adjudication", adj["residuals"][adj["adjudicated"]],
                 tol["interaction_free"])

    report = make_report(cfg, checks, time.perf_counter() - t0, adjudication=adj,
                         kernel_diagnostics=diag.as_dict())
    return (EXIT_OK if checks.passed else EXIT_CHECK), report


# ---------------------------------------------------------------------------
# sweeps

def sweep_grid(cfg: dict) -> list[tuple[float, float, int]]:
    sw = cfg["sweep"]
    eps = sorted(float(e) for e in sw["eps"]) or [cfg["eps"]]
    ts = sorted(float(t) for t in sw["t"]) or [cfg["time"]["t_end"]]
    trunc = sorted(int(n) for n in sw["truncation"]) or [cfg["truncation"]["N"]]
    return list(itertools.product(eps, ts, trunc))


def _point_config(cfg: dict, eps: float, t: float, n: int) -> dict:
    c = copy.deepcopy(cfg)
    c["eps"] = eps
    c["time"]["t_end"] = t
    c["truncation"]["N"] = n
    c["truncation"]["n_max"] = min(c["truncation"]["n_max"], n - 1)
    if c["scenario"] == "meanfield-scan":
        c["eps_list"] = [eps]
    return c


def sweep(cfg: dict, out_dir: str | Path | None = None) -> tuple[list[str], list[list], Path]:
    """One row of scalar summaries per grid point, in lexicographic grid order."""
    grid = sweep_grid(cfg)
    rows = []
    keys: list[str] = []
    for eps, t, n in grid:
        summary = scenario_summary(_point_config(cfg, eps, t, n))
        keys = keys or sorted(summary)
        rows.append([eps, t, n] + [summary[k] for k in keys])
    header = ["eps", "t", "truncation"] + keys
    if cfg["scenario"] == "meanfield-scan":
        header.append("eps_slope")
        col = header.index("scaled_error")
        for t, n in sorted({(r[1], r[2]) for r in rows}):
            group = [r for r in rows if (r[1], r[2]) == (t, n)]
            slope = (fit_loglog_slope([r[0] for r in group], [r[col] for r in group])
                     if len(group) >= 2 else float("nan"))
            for r in group:
                r.append(slope)
    out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    path = out / f"sweep-{cfg['scenario']}.csv"
    atomic_write(path, csv_text(header, rows))
    return header, rows, path


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bbgky", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the configured scenario"),
                        ("verify", "run the property suite"),
                        ("sweep", "run the scenario over the sweep grid")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config (default: bundled)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="master seed (overrides seed)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker limit for numerical libraries")
        if name == "run":
            sp.add_argument("--scenario", choices=SCENARIOS, help="override the scenario")
    return p


def _limit_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(max(1, n)))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if getattr(args, "scenario", None):
            cfg["scenario"] = args.scenario
        if args.out:
            cfg["output"]["dir"] = args.out
        out = cfg["output"]["dir"]
        if args.command == "run":
            report, path = run_scenario(cfg, out)
            print(f"wrote {path}")
            code = EXIT_OK if report["passed"] else EXIT_CHECK
        elif args.command == "verify":
            code, report = verify_suite(cfg)
            atomic_write(Path(out) / "verify.json", json.dumps(report, indent=2) + "\n")
            for c in report["checks"]:
                flag = "PASS" if c["passed"] else "FAIL"
                print(f"{flag}  {c['name']:<30} {c['value']:.3e} {c['comparison']} "
                      f"{c['tolerance']:.1e}  [{c['anchor']}]")
        else:
            _, rows, path = sweep(cfg, out)
            print(f"wrote {len(rows)} rows to {path}")
            code = EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    return code


if __name__ == "__main__":
    sys.exit(main())
