"""Config-driven experiment harness.

Config files hold one ``key = value`` assignment per line. Keys may be dotted
(``problem.a``), values are Python literals or bare words, lists go in
brackets and ``#`` starts a comment. A list on a sweepable key expands into
a grid; an empty list means "use the default". Example::

    problem = quadratic
    problem.a = 0.9
    solver = double
    estimator = [none, heavy_ball]
    sigma = [0.5, 1.0, 2.0]
    gamma = [0.03, 0.1, 0.3]
    seeds = 20
"""

from __future__ import annotations

import ast
import csv
import io
import itertools
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import momentum as mom
from .core import InvalidConfig, NumericFailure, as_vec
from .metrics import COLUMNS, DivergedError, RunResult
from .plotting import line_chart_svg
from .problems import DcProblem, make_problem, make_prop1_counterexample, \
    make_prop2_counterexample
from .solver_double import SQRT8, DoubleLoopConfig, auto_double_params, draw_x0, run_double_loop
from .solver_single import SingleLoopConfig, auto_single_params, run_single_loop, \
    run_smag_quadratic

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentOutcome",
    "FloorCheck",
    "LowerBoundReport",
    "PointSpec",
    "expand",
    "load_config",
    "parse_config",
    "plot_csv",
    "run_config",
    "run_experiment",
    "thread_cap",
    "verify_lower_bounds",
    "verify_lower_bounds_config",
]

CSV_HEADER = ("run_id", "seed", "t") + COLUMNS
SWEEP_KEYS = ("sigma", "estimator", "gamma", "eta0", "eta1", "alpha")
COUNTEREXAMPLES = ("prop1", "prop2")
MIN_LB_SEEDS = 500


class ConfigError(InvalidConfig):
    """Invalid config, located at ``source:line``."""

    def __init__(self, message: str, source: str = "<config>", line: int = 0):
        self.source, self.line, self.reason = source, line, message
        super().__init__(f"{source}:{line}: {message}")


# ---------------------------------------------------------------- parsing

_BARE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-/]*$")


def _split_items(body: str) -> list[str]:
    items, depth, cur, quote = [], 0, [], None
    for ch in body:
        if quote:
            cur.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            cur.append(ch)
        elif ch == "," and depth == 0:
            items.append("".join(cur))
            cur = []
        else:
            depth += ch in "([{"
            depth -= ch in ")]}"
            cur.append(ch)
    items.append("".join(cur))
    return items


def _scalar(text: str):
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if not _BARE.match(text):
            raise ValueError(f"cannot parse value {text!r}") from None
        return text
    if isinstance(value, (list, tuple, dict, set)):
        raise ValueError("nested lists are not supported")
    return value


def _value(text: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ValueError("unterminated list")
        body = text[1:-1].strip()
        return [] if not body else [_scalar(item) for item in _split_items(body)]
    return _scalar(text)


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            quote = None if ch == quote else quote
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


# key -> (kind, default, sweepable)
_SCHEMA: dict[str, tuple[str, Any, bool]] = {
    "name": ("str", "experiment", False),
    "problem": (("quadratic", "l1_quadratic", "prop1", "prop2"), "quadratic", False),
    "problem.L": ("pos", 1.0, False),
    "problem.a": ("nonneg", 0.9, False),
    "problem.lam": ("nonneg", 0.1, False),
    "problem.sigma_g": ("nonneg", 0.0, False),
    "solver": (("double", "single", "smag_quadratic"), "double", False),
    "estimator": (("none", "heavy_ball", "mvr"), "none", True),
    "sigma": ("nonneg", 1.0, True),
    "gamma": ("pos|auto", "auto", True),
    "eta0": ("pos|auto", "auto", True),
    "eta1": ("pos|auto", "auto", True),
    "alpha": ("unit|auto", "auto", True),
    "inner.mode": (("exact", "sgd"), "exact", False),
    "inner.K": ("posint", 100, False),
    "single.tracking": (("sgd", "exact"), "sgd", False),
    "momentum.const": ("pos", SQRT8, False),
    "T": ("posint", 200, False),
    "d": ("posint", 10, False),
    "seeds": ("seeds", 20, False),
    "seed": ("nonnegint", 0, False),
    "x0": ("x0", "gaussian", False),
    "output": ("str", "out", False),
    "plot.column": (COLUMNS, "gap", False),
    "lb.threshold": ("nonneg", 0.9, False),
}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check(key: str, kind, v):
    """Return the normalised scalar or raise ValueError."""
    if isinstance(kind, tuple):
        if v not in kind:
            raise ValueError(f"{key} must be one of {', '.join(kind)}, got {v!r}")
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise ValueError(f"{key} must be a string")
        return v
    if kind.endswith("|auto") and v == "auto":
        return v
    base = kind.split("|")[0]
    if base in ("posint", "nonnegint"):
        if not isinstance(v, int) or isinstance(v, bool) or v < (1 if base == "posint" else 0):
            raise ValueError(f"{key} must be a {'positive' if base == 'posint' else 'nonnegative'} integer, got {v!r}")
        return v
    if not _is_num(v):
        raise ValueError(f"{key} must be a finite number{' or auto' if kind.endswith('|auto') else ''}, got {v!r}")
    v = float(v)
    if base == "pos" and v <= 0:
        raise ValueError(f"{key} must be positive, got {v}")
    if base == "nonneg" and v < 0:
        raise ValueError(f"{key} must be nonnegative, got {v}")
    if base == "unit" and not 0 < v <= 1:
        raise ValueError(f"{key} must lie in (0, 1], got {v}")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings. Sweepable keys hold tuples; ``lines`` maps keys to source lines."""

    values: dict
    lines: dict
    source: str = "<config>"

    def __getitem__(self, key: str):
        return self.values[key]

    def line(self, key: str) -> int:
        return self.lines.get(key, 0)

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, self.source, self.line(key))

    def with_values(self, **overrides) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in overrides.items():
            k = k.replace("__", ".")
            if k not in _SCHEMA:
                raise KeyError(k)
            vals[k] = tuple(v) if _SCHEMA[k][2] and isinstance(v, (list, tuple)) else (
                (v,) if _SCHEMA[k][2] else v)
        return replace(self, values=vals)

    @property
    def seed_list(self) -> list[int]:
        s = self.values["seeds"]
        return list(s) if isinstance(s, tuple) else list(range(self.values["seed"], self.values["seed"] + s))


def parse_config(text: str, source: str = "<config>", purpose: str = "run") -> ExperimentConfig:
    """Parse and validate; ``purpose="lb"`` skips the solver-specific combination checks."""
    raw: dict[str, tuple[Any, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", source, lineno)
        key, _, rhs = body.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r}", source, lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {raw[key][1]})", source, lineno)
        try:
            raw[key] = (_value(rhs), lineno)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", source, lineno) from None

    values, lines = {}, {}
    for key, (kind, default, sweepable) in _SCHEMA.items():
        if key not in raw:
            values[key] = (default,) if sweepable else default
            continue
        v, lineno = raw[key]
        lines[key] = lineno
        try:
            if key == "seeds":
                values[key] = _check_seeds(v)
            elif key == "x0":
                values[key] = _check_x0(v)
            elif isinstance(v, list):
                if not sweepable:
                    raise ValueError(f"{key} does not accept a list")
                items = tuple(_check(key, kind, item) for item in v) or (default,)
                if len(set(items)) != len(items):
                    raise ValueError(f"{key} list has repeated entries")
                values[key] = items
            else:
                v = _check(key, kind, v)
                values[key] = (v,) if sweepable else v
        except ValueError as exc:
            raise ConfigError(str(exc), source, lineno) from None
    cfg = ExperimentConfig(values=values, lines=lines, source=source)
    if purpose == "run":
        _check_combinations(cfg)
    return cfg


def _check_seeds(v):
    if isinstance(v, list):
        if not v or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in v):
            raise ValueError("seeds list must hold nonnegative integers")
        if len(set(v)) != len(v):
            raise ValueError("seeds list has repeated entries")
        return tuple(v)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ValueError(f"seeds must be a positive count or a list, got {v!r}")
    return v


def _check_x0(v):
    if v == "gaussian":
        return v
    if isinstance(v, list):
        if not v or not all(_is_num(c) for c in v):
            raise ValueError("x0 list must hold finite numbers")
        return tuple(float(c) for c in v)
    if _is_num(v):
        return float(v)
    raise ValueError(f"x0 must be gaussian, a number or a list, got {v!r}")


def _check_combinations(cfg: ExperimentConfig) -> None:
    solver, lines = cfg["solver"], cfg.lines
    if solver == "double" and "eta1" in lines:
        raise cfg.error("eta1", "eta1 is not used by the double loop")
    if solver != "double" and ("inner.mode" in lines or "inner.K" in lines):
        key = "inner.mode" if "inner.mode" in lines else "inner.K"
        raise cfg.error(key, f"{key} only applies to the double loop")
    if solver != "single" and "single.tracking" in lines:
        raise cfg.error("single.tracking", "single.tracking only applies to the single loop")
    if solver in ("single", "smag_quadratic") and "auto" in cfg["gamma"]:
        raise cfg.error("gamma", f"the {solver} solver needs an explicit gamma")
    if solver == "smag_quadratic":
        if cfg["problem"] not in ("quadratic", "prop2"):
            raise cfg.error("problem", "smag_quadratic runs on quadratic problems only")
        if set(cfg["estimator"]) != {"none"}:
            raise cfg.error("estimator", "smag_quadratic has no momentum estimator")
    if cfg["problem"] in COUNTEREXAMPLES and "problem.a" in lines:
        raise cfg.error("problem.a", "counterexample curvature is derived from the step sizes")
    if cfg["problem"] != "l1_quadratic" and "problem.lam" in lines:
        raise cfg.error("problem.lam", "problem.lam only applies to l1_quadratic")
    x0 = cfg["x0"]
    if isinstance(x0, tuple) and len(x0) != cfg["d"]:
        raise cfg.error("x0", f"x0 has {len(x0)} entries, expected d={cfg['d']}")


def load_config(path, purpose: str = "run") -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path), 0) from None
    return parse_config(text, str(path), purpose)


# ---------------------------------------------------------------- expansion

@dataclass(frozen=True)
class PointSpec:
    """One fully concrete grid point; ``solver_cfg`` is missing only the seed."""

    index: int
    label: str
    solver: str
    problem: DcProblem
    solver_cfg: Any
    seeds: tuple
    x0: Any
    counterexample: bool
    group: tuple
    variant: str
    params: dict = field(default_factory=dict)


def _x0_for(problem: DcProblem, x0_spec, seed: int) -> np.ndarray:
    if x0_spec == "gaussian":
        return draw_x0(problem, seed)
    if isinstance(x0_spec, tuple):
        return as_vec(x0_spec).copy()
    return np.full(problem.d, float(x0_spec))


def _phi0(problem: DcProblem, cfg: ExperimentConfig, gamma: float | None, key: str) -> float:
    xs = np.stack([_x0_for(problem, cfg["x0"], s) for s in cfg.seed_list])
    if gamma is None:
        if problem.f_star is None:
            raise cfg.error(key, "auto step sizes need a problem with known minimum value")
        vals = problem.f_value(xs) - problem.f_star
    else:
        fs = problem.f_gamma_star(gamma)
        if fs is None:
            raise cfg.error(key, "auto step sizes need a bounded smoothed objective")
        vals = problem.f_gamma(xs, gamma) - fs
    return max(float(np.mean(vals)), 1e-12)


def _momentum_alpha(kind: mom.Estimator, L_h: float, step: float, const: float) -> float:
    if kind is mom.Estimator.PLAIN:
        return 1.0
    raw = (8 * L_h * step) ** 2 if kind is mom.Estimator.MVR else const * L_h * step
    return min(max(raw, 1e-300), 1.0)


def _build_problem(cfg: ExperimentConfig, sigma: float, gamma, eta0, eta1) -> DcProblem:
    name, L, d = cfg["problem"], cfg["problem.L"], cfg["d"]
    try:
        if name == "prop1":
            return make_prop1_counterexample(L, [gamma], sigma, d)
        if name == "prop2":
            return make_prop2_counterexample(L, [gamma], [eta0], [eta1], sigma, d)
        return make_problem(name, L=L, a=cfg["problem.a"], sigma=sigma, d=d,
                            sigma_g=cfg["problem.sigma_g"], lam=cfg["problem.lam"])
    except InvalidConfig as exc:
        raise cfg.error("problem", str(exc)) from None


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def expand(cfg: ExperimentConfig) -> list[PointSpec]:
    """Cartesian grid over the sweepable keys, with every ``auto`` resolved."""
    points: list[PointSpec] = []
    solver, T, const = cfg["solver"], cfg["T"], cfg["momentum.const"]
    seeds = tuple(cfg.seed_list)
    seen = set()
    for sigma, est, gamma, eta0, eta1, alpha in itertools.product(*(cfg[k] for k in SWEEP_KEYS)):
        kind = mom.Estimator.parse(est)
        if kind is mom.Estimator.PLAIN:
            alpha = "auto"  # plain estimator ignores the weight
        key = (sigma, est, gamma, eta0, eta1, alpha)
        if key in seen:
            continue
        seen.add(key)

        if solver == "double":
            if cfg["problem"] in COUNTEREXAMPLES and gamma == "auto":
                raise cfg.error("gamma", "counterexample problems need an explicit gamma")
            problem = _build_problem(cfg, sigma, gamma, eta0, gamma)
            if gamma == "auto":
                phi0 = _phi0(problem, cfg, None, "gamma")
                try:
                    g, a_auto = auto_double_params(problem, kind, T, phi0, const)
                except InvalidConfig as exc:
                    raise cfg.error("gamma", str(exc)) from None
            else:
                g, a_auto = gamma, None
            e0 = g if eta0 == "auto" else eta0
            if alpha == "auto":
                a = a_auto if (a_auto is not None and eta0 == "auto") else \
                    _momentum_alpha(kind, problem.L_h, e0, const)
            else:
                a = alpha
            if kind is mom.Estimator.PLAIN:
                a = 1.0
            try:
                scfg = DoubleLoopConfig(gamma=g, T=T, eta0=e0, alpha=a, estimator=kind.value,
                                        inner_mode=cfg["inner.mode"], inner_K=cfg["inner.K"])
            except InvalidConfig as exc:
                raise cfg.error("eta0" if "eta0" in cfg.lines else "gamma", str(exc)) from None
            params = {"gamma": g, "eta0": e0, "eta1": None, "alpha": a}
        elif solver == "single":
            problem = _build_problem(cfg, sigma, gamma, eta0 if eta0 != "auto" else gamma,
                                     eta1 if eta1 != "auto" else gamma)
            if eta0 == "auto":
                phi0 = _phi0(problem, cfg, gamma, "eta0")
                e0, e1_auto, a_auto = auto_single_params(problem, kind, T, phi0, gamma, const)
            else:
                e0, e1_auto, a_auto = eta0, 4 * eta0, _momentum_alpha(kind, problem.L_h, eta0, const)
            e1 = e1_auto if eta1 == "auto" else eta1
            a = a_auto if alpha == "auto" else alpha
            if kind is mom.Estimator.PLAIN:
                a = 1.0
            try:
                scfg = SingleLoopConfig(gamma=gamma, eta0=e0, eta1=e1, T=T, alpha=a,
                                        estimator=kind.value,
                                        prox_tracking=cfg["single.tracking"])
            except InvalidConfig as exc:
                raise cfg.error("eta0", str(exc)) from None
            params = {"gamma": gamma, "eta0": e0, "eta1": e1, "alpha": a}
        else:
            e0 = gamma if eta0 == "auto" else eta0
            e1 = gamma if eta1 == "auto" else eta1
            problem = _build_problem(cfg, sigma, gamma, e0, e1)
            scfg = {"L": problem.L_g, "a": problem.L_h, "gamma": gamma, "eta0": e0, "eta1": e1,
                    "sigma": sigma, "T": T, "d": cfg["d"]}
            params = {"gamma": gamma, "eta0": e0, "eta1": e1, "alpha": None}

        label = ";".join(
            [f"solver={solver}", f"estimator={kind.value}", f"sigma={_fmt(sigma)}"]
            + [f"{k}={_fmt(v)}" for k, v in params.items() if v is not None])
        points.append(PointSpec(
            index=len(points), label=label, solver=solver, problem=problem, solver_cfg=scfg,
            seeds=seeds, x0=cfg["x0"], counterexample=cfg["problem"] in COUNTEREXAMPLES,
            group=(("sigma", sigma),), variant=kind.value,
            params={"problem": cfg["problem"], "estimator": kind.value, "sigma": sigma,
                    "L": problem.L_g, "a": problem.L_h, **params, "T": T, "d": cfg["d"]}))
    return points


# ---------------------------------------------------------------- running

@dataclass
class PointResult:
    index: int
    csv_text: str
    finals: dict            # column -> list of per-seed last-row values (None if absent)
    curve_t: np.ndarray
    curve_mean: np.ndarray | None
    n_diverged: int
    failures: list          # (seed, message)


def _run_one(point: PointSpec, seed: int) -> RunResult:
    x0 = _x0_for(point.problem, point.x0, seed)
    if point.solver == "double":
        return run_double_loop(point.problem, replace(point.solver_cfg, seed=seed), x0=x0)
    if point.solver == "single":
        return run_single_loop(point.problem, replace(point.solver_cfg, seed=seed), x0=x0)
    p = point.solver_cfg
    return run_smag_quadratic(p["L"], p["a"], p["gamma"], p["eta0"], p["eta1"], p["sigma"],
                              p["T"], seed=seed, d=p["d"], x0=x0)


def _run_point(args) -> PointResult:
    point, column = args
    buf = io.StringIO()
    label_buf = io.StringIO()
    csv.writer(label_buf, lineterminator="").writerow([point.label])
    label = label_buf.getvalue()
    finals = {c: [] for c in COLUMNS}
    curves, failures, n_div = [], [], 0
    for seed in point.seeds:
        prefix = f"{label},{seed},"
        try:
            res = _run_one(point, seed)
        except DivergedError as exc:
            res, n_div = exc.result, n_div + 1
            failures.append((seed, str(exc)))
        except NumericFailure as exc:
            n_div += 1
            failures.append((seed, str(exc)))
            for c in COLUMNS:
                finals[c].append(math.nan)
            continue
        tr = res.trace
        cols = [tr.column(c) for c in COLUMNS]
        n = len(tr)
        text_cols = [[prefix + str(t) for t in tr.t.tolist()]]
        text_cols += [[""] * n if col is None else [repr(v) for v in col.tolist()] for col in cols]
        buf.write("".join(",".join(row) + "\n" for row in zip(*text_cols)))
        for c, col in zip(COLUMNS, cols):
            finals[c].append(None if col is None else
                             (float(col[-1]) if len(col) and not res.diverged else math.nan))
        curves.append(tr.column(column))
    t, mean = np.arange(0), None
    if curves and all(c is not None for c in curves):
        n_t = min(len(c) for c in curves)
        with np.errstate(over="ignore", invalid="ignore"):
            mean = np.mean(np.stack([c[:n_t] for c in curves]), axis=0)
        t = np.arange(n_t)
    return PointResult(point.index, buf.getvalue(), finals, t, mean, n_div, failures)


def thread_cap() -> int:
    """Worker count from ``DCM_THREADS`` (default: CPU count)."""
    raw = os.environ.get("DCM_THREADS", "").strip()
    if not raw:
        return max(os.cpu_count() or 1, 1)
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"DCM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InvalidConfig(f"DCM_THREADS must be a positive integer, got {raw!r}")
    return n


def _execute(points: list[PointSpec], column: str, threads: int) -> list[PointResult]:
    jobs = [(p, column) for p in points]
    if threads <= 1 or len(points) <= 1:
        return [_run_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(points))) as pool:
        return list(pool.map(_run_point, jobs, chunksize=1))


@dataclass
class ExperimentOutcome:
    points: list
    results: list
    summary: list           # dict rows, as written to summary.csv
    output_dir: Path
    csv_paths: list
    svg_paths: list
    exit_code: int

    def best(self, group_value, variant: str) -> dict | None:
        rows = [r for r in self.summary if r["variant"] == variant and r["group"] == group_value
                and r["best"]]
        return rows[0] if rows else None


SUMMARY_FIELDS = ("point", "file", "run_id", "solver", "problem", "estimator", "sigma", "L", "a",
                  "gamma", "eta0", "eta1", "alpha", "T", "d", "n_seeds", "n_diverged",
                  "final_mean", "final_stderr", "final_gap_mean", "final_moreau_grad_sq_mean",
                  "best")


def _mean_se(vals) -> tuple[float | None, float | None]:
    if not vals or any(v is None for v in vals):
        return None, None
    arr = np.asarray(vals, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        return math.nan, math.nan
    se = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), se


def run_config(cfg: ExperimentConfig, output_dir=None, threads: int | None = None,
               plots: bool = True) -> ExperimentOutcome:
    """Expand, run and write every artifact for an already-parsed config."""
    points = expand(cfg)
    column = cfg["plot.column"]
    threads = thread_cap() if threads is None else threads
    results = _execute(points, column, threads)

    out = Path(cfg["output"] if output_dir is None else output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    csv_paths, summary = [], []
    for p, r in zip(points, results):
        path = out / "runs" / f"point{p.index:04d}.csv"
        path.write_text(",".join(CSV_HEADER) + "\n" + r.csv_text)
        csv_paths.append(path)
        fm, fse = _mean_se(r.finals[column])
        summary.append({
            "point": p.index, "file": f"runs/{path.name}", "run_id": p.label,
            "solver": p.solver, "problem": p.params["problem"], "estimator": p.variant,
            "sigma": p.params["sigma"], "L": p.params["L"], "a": p.params["a"],
            "gamma": p.params["gamma"], "eta0": p.params["eta0"], "eta1": p.params["eta1"],
            "alpha": p.params["alpha"], "T": p.params["T"], "d": p.params["d"],
            "n_seeds": len(p.seeds), "n_diverged": r.n_diverged,
            "final_mean": fm, "final_stderr": fse,
            "final_gap_mean": _mean_se(r.finals["gap"])[0],
            "final_moreau_grad_sq_mean": _mean_se(r.finals["moreau_grad_sq"])[0],
            "best": False, "variant": p.variant, "group": p.group,
        })

    by_group: dict = {}
    for row, p in zip(summary, points):
        by_group.setdefault(p.group, {}).setdefault(p.variant, []).append(row)
    for variants in by_group.values():
        for rows in variants.values():
            ok = [r for r in rows if r["final_mean"] is not None and math.isfinite(r["final_mean"])]
            if ok:
                min(ok, key=lambda r: (r["final_mean"], r["point"]))["best"] = True

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for row in summary:
        writer.writerow([_summary_cell(row[k]) for k in SUMMARY_FIELDS])
    (out / "summary.csv").write_text(buf.getvalue())

    svg_paths = []
    if plots:
        for group, variants in by_group.items():
            curves = {}
            for variant, rows in variants.items():
                best = next((r for r in rows if r["best"]), None)
                if best is None:
                    continue
                res = results[best["point"]]
                if res.curve_mean is not None:
                    curves[f"{variant} ({_short(points[best['point']].params)})"] = (
                        res.curve_t, res.curve_mean)
            tag = "_".join(f"{k}_{_fmt(v)}" for k, v in group)
            path = out / f"{column}_{tag}.svg"
            title = ", ".join(f"{k} = {_fmt(v)}" for k, v in group)
            line_chart_svg(curves, path, title=title, ylabel=f"mean {column}")
            svg_paths.append(path)

    failed = any(r.n_diverged for r, p in zip(results, points) if not p.counterexample)
    return ExperimentOutcome(points, results, summary, out, csv_paths, svg_paths,
                             3 if failed else 0)


def _summary_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _short(params: dict) -> str:
    keys = ("gamma", "eta0", "eta1", "alpha")
    return ", ".join(f"{k}={params[k]:.3g}" for k in keys if params.get(k) is not None)


def run_experiment(cfg_path, output_dir=None, threads: int | None = None) -> int:
    """Run a config file end to end and return the process exit code.

    Invalid configs raise :class:`ConfigError` (exit 2 at the CLI). A
    non-finite iterate in a run that is not a counterexample gives 3.
    """
    cfg = load_config(cfg_path)
    return run_config(cfg, output_dir=output_dir, threads=threads).exit_code


# ---------------------------------------------------------------- lower bounds

@dataclass(frozen=True)
class FloorCheck:
    name: str
    algorithm: str
    a: float
    sigma: float
    min_mean: float
    argmin_k: int
    threshold: float
    n_seeds: int
    n_diverged: int
    degenerate: bool

    @property
    def passed(self) -> bool:
        return self.min_mean >= self.threshold

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = " (sigma = 0: degenerate, floor is trivially 0)" if self.degenerate else ""
        return (f"{self.name}: {verdict}  {self.algorithm}, a={self.a:g}, sigma={self.sigma:g}, "
                f"{self.n_seeds} seeds, min_k mean |grad f|^2 = {self.min_mean:.6g} at k={self.argmin_k}"
                f" (threshold {self.threshold:.6g}, diverged {self.n_diverged}){extra}")


@dataclass(frozen=True)
class LowerBoundReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks] + [f"overall: {'PASS' if self.passed else 'FAIL'}"]


def _scalar_key(cfg: ExperimentConfig, key: str):
    v = cfg[key]
    if isinstance(v, tuple):
        if len(v) != 1:
            raise cfg.error(key, f"{key} must be a single value for lower-bound checks")
        v = v[0]
    return v


def _floor(name, algo, a, sigma, runs, frac, n_seeds) -> FloorCheck:
    n_div = sum(r.diverged for r in runs)
    n_k = min(len(r.grad_f_sq) for r in runs) - 1
    if n_k < 1:
        min_mean, k = math.nan, 0
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            mean = np.mean(np.stack([r.grad_f_sq[1:n_k + 1] for r in runs]), axis=0)
        k = int(np.nanargmin(mean)) + 1
        min_mean = float(mean[k - 1])
    return FloorCheck(name, algo, a, sigma, min_mean, k, frac * sigma**2, n_seeds, n_div,
                      sigma == 0)


def _collect(fn, seeds):
    runs = []
    for s in seeds:
        try:
            runs.append(fn(s))
        except DivergedError as exc:
            runs.append(exc.result)
    return runs


def verify_lower_bounds_config(cfg: ExperimentConfig) -> LowerBoundReport:
    """Monte-Carlo floors of both counterexamples at the config's step sizes.

    With ``estimator = none`` the momentum-free double loop and the
    both-parts-smoothed recursion are run. Any other estimator swaps in the
    momentum versions of the double and single loops on the same instances.
    """
    seeds = cfg.seed_list
    if len(seeds) < MIN_LB_SEEDS:
        raise cfg.error("seeds", f"lower-bound checks need at least {MIN_LB_SEEDS} seeds, got {len(seeds)}")
    L, T, d, const = cfg["problem.L"], cfg["T"], cfg["d"], cfg["momentum.const"]
    sigma = _scalar_key(cfg, "sigma")
    gamma = _scalar_key(cfg, "gamma")
    if gamma == "auto":
        raise cfg.error("gamma", "lower-bound checks need an explicit gamma")
    eta0 = _scalar_key(cfg, "eta0")
    eta1 = _scalar_key(cfg, "eta1")
    eta0 = gamma if eta0 == "auto" else eta0
    eta1 = gamma if eta1 == "auto" else eta1
    kind = mom.Estimator.parse(_scalar_key(cfg, "estimator"))
    alpha = _scalar_key(cfg, "alpha")
    frac = cfg["lb.threshold"]
    x0_spec = cfg["x0"]

    p1 = make_prop1_counterexample(L, [gamma], sigma, d)
    a1 = _momentum_alpha(kind, p1.L_h, gamma, const) if alpha == "auto" else alpha
    dcfg = DoubleLoopConfig(gamma=gamma, T=T, alpha=1.0 if kind is mom.Estimator.PLAIN else a1,
                            estimator=kind.value)
    runs1 = _collect(lambda s: run_double_loop(p1, replace(dcfg, seed=s),
                                               x0=_x0_for(p1, x0_spec, s)), seeds)
    algo1 = "double loop" + ("" if kind is mom.Estimator.PLAIN else f" + {kind.value} (alpha={a1:g})")
    c1 = _floor("prop1 floor", algo1, p1.L_h, sigma, runs1, frac, len(seeds))

    p2 = make_prop2_counterexample(L, [gamma], [eta0], [eta1], sigma, d)
    if kind is mom.Estimator.PLAIN:
        runs2 = _collect(lambda s: run_smag_quadratic(L, p2.L_h, gamma, eta0, eta1, sigma, T,
                                                      seed=s, d=d, x0=_x0_for(p2, x0_spec, s)),
                         seeds)
        algo2 = "both-smoothed recursion"
    else:
        a2 = _momentum_alpha(kind, p2.L_h, eta0, const) if alpha == "auto" else alpha
        scfg = SingleLoopConfig(gamma=gamma, eta0=eta0, eta1=eta1, T=T, alpha=a2,
                                estimator=kind.value)
        runs2 = _collect(lambda s: run_single_loop(p2, replace(scfg, seed=s),
                                                   x0=_x0_for(p2, x0_spec, s)), seeds)
        algo2 = f"single loop + {kind.value} (alpha={a2:g})"
    c2 = _floor("prop2 floor", algo2, p2.L_h, sigma, runs2, frac, len(seeds))
    return LowerBoundReport((c1, c2))


def verify_lower_bounds(cfg_path) -> LowerBoundReport:
    return verify_lower_bounds_config(load_config(cfg_path, purpose="lb"))


# ---------------------------------------------------------------- plot

def plot_csv(csv_paths, svg_path, column: str = "gap") -> int:
    """Mean of ``column`` over seeds vs ``t``, one line per ``run_id``; returns the line count."""
    if column not in COLUMNS:
        raise InvalidConfig(f"unknown column {column!r}")
    if isinstance(csv_paths, (str, Path)):
        csv_paths = [csv_paths]
    sums: dict[str, dict[int, list]] = {}
    for path in csv_paths:
        try:
            fh = open(path, newline="")
        except OSError as exc:
            raise InvalidConfig(f"{path}: cannot read: {exc.strerror}") from None
        with fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != CSV_HEADER:
                raise InvalidConfig(f"{path}:1: not a trace CSV (header mismatch)")
            idx = CSV_HEADER.index(column)
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(CSV_HEADER):
                    raise InvalidConfig(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
                if row[idx] == "":
                    continue
                try:
                    t, v = int(row[2]), float(row[idx])
                except ValueError:
                    raise InvalidConfig(f"{path}:{lineno}: malformed number") from None
                sums.setdefault(row[0], {}).setdefault(t, []).append(v)
    curves = {}
    for run_id, by_t in sums.items():
        ts = sorted(by_t)
        curves[run_id] = (np.array(ts), np.array([np.mean(by_t[t]) for t in ts]))
    line_chart_svg(curves, svg_path, ylabel=f"mean {column}")
    return len(curves)
