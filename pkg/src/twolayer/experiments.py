"""Experiment configs, orchestration and CSV output for the command-line tool.

Configs are TOML files.  A minimal one::

    command = "solve"

    [model]
    c_Y = 0.5          # premium rate (surplus drifts down at c_Y between jumps)
    sigma = 0.2        # diffusion coefficient
    kappa = 2.0        # jump arrival rate (per unit time)
    omega = 2.0        # exponential jumps of rate omega, or give alpha and T

    [problem]
    q = 0.05
    delta = 1.0
    beta_A = 1.0
    beta_S = 0.5
    rho_bar = 0.0      # or rho_tilde (terminal payoff in currency units)

See README.md for the remaining tables.
"""
from __future__ import annotations

import csv
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import InvalidConfig, InvalidPhaseType, NotApplicable, TwoLayerError
from .levy_model import PhaseType, build_model
from .mc_oracle import SimConfig, simulate_path_trace, simulate_value, write_trace_csv
from .optimizer import Case, a_of_b, solve, verify_smooth_fit
from .scale_kit import inverse_monotone, verify_laplace
from .valuation import (
    Problem,
    Strategy,
    gamma_big,
    gamma_small,
    generator_residual,
    value,
    value_derivative,
    value_refract_only,
    value_singular_only,
)

COMMANDS = ("solve", "value", "simulate", "sweep", "converge", "check")
SWEEP_PARAMETERS = ("rho_bar", "beta", "delta", "omega_volatility")
CONVERGE_KINDS = ("beta_to_one", "beta_to_zero", "delta")


@dataclass(frozen=True)
class ExperimentConfig:
    c_Y: float
    sigma: float
    kappa: float
    alpha: tuple
    T: tuple
    q: float
    delta: float
    beta_A: float = 1.0
    beta_S: float = 0.5
    rho_tilde: float = 0.0
    rho_bar: float | None = None  # when set, takes precedence over rho_tilde
    command: str | None = None
    x_max: float = 10.0
    x_points: int = 201
    strategy: tuple | None = None
    n_paths: int = 100_000
    dt: float = 0.01
    horizon: float | None = None
    seed: int = 0
    workers: int = 1
    x0: tuple = (1.0,)
    trace: bool = False
    sweep_parameter: str | None = None
    sweep_grid: tuple = ()
    sweep_x: tuple = (0.0, 1.0, 2.0, 5.0, 10.0)
    converge_kind: str | None = None
    converge_grid: tuple = ()
    check_mc_paths: int = 0
    check_a: tuple = ()
    check_b: tuple = ()
    check_x: tuple = ()
    out_dir: str = "out"
    precision: int = 12
    source: str = field(default="<memory>", compare=False)

    @property
    def omega(self) -> float | None:
        return -self.T[0][0] if len(self.alpha) == 1 else None

    @property
    def resolved_rho_tilde(self) -> float:
        if self.rho_bar is not None:
            return self.beta_A * self.rho_bar * self.delta / self.q
        return self.rho_tilde

    def model(self):
        return build_model(self.c_Y, self.sigma, self.kappa, PhaseType(np.array(self.alpha), np.array(self.T)),
                           self.delta)

    def problem(self) -> Problem:
        return Problem(self.model(), self.q, self.beta_A, self.beta_S, self.resolved_rho_tilde)

    def x_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.x_points)

    def sim_config(self) -> SimConfig:
        return SimConfig(self.n_paths, self.horizon, self.dt, self.seed, self.workers)

    def with_parameter(self, name: str, val: float) -> "ExperimentConfig":
        if name == "rho_bar":
            return replace(self, rho_bar=val)
        if name == "beta":
            return replace(self, beta_S=val * self.beta_A)
        if name == "delta":
            return replace(self, delta=val)
        if name == "omega_volatility":
            if self.omega is None:
                raise InvalidConfig("omega_volatility sweeps need exponential jumps (model.omega)")
            ratio = self.kappa / self.omega
            return replace(self, kappa=ratio * val, T=((-val,),))
        raise InvalidConfig(f"unknown sweep parameter {name!r}")


# -- parsing -------------------------------------------------------------------


def _line_of(text: str, table: str | None, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == table and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


class _Reader:
    def __init__(self, text: str, source: str, data: dict):
        self.text, self.source, self.data = text, source, data

    def fail(self, table, key, msg):
        line = _line_of(self.text, table, key) if key else None
        where = f"{self.source}:{line}" if line else self.source
        name = f"{table}.{key}" if table and key else (key or table)
        raise InvalidConfig(f"{where}: field '{name}': {msg}")

    def table(self, name, required=False):
        t = self.data.get(name)
        if t is None:
            if required:
                raise InvalidConfig(f"{self.source}: missing table [{name}]")
            return {}
        if not isinstance(t, dict):
            self.fail(None, name, "expected a table")
        return t

    def number(self, table, key, default=None, positive=False, nonneg=False):
        t = self.data.get(table, {}) if table else self.data
        if key not in t:
            if default is None:
                self.fail(table, key, "required")
            return default
        v = t[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(table, key, f"expected a finite number, got {v!r}")
        if positive and not v > 0:
            self.fail(table, key, f"must be positive, got {v}")
        if nonneg and v < 0:
            self.fail(table, key, f"must be nonnegative, got {v}")
        return float(v)

    def integer(self, table, key, default, minimum=0):
        t = self.data.get(table, {})
        v = t.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            self.fail(table, key, f"expected an integer >= {minimum}, got {v!r}")
        return v

    def numbers(self, table, key, default=(), sorted_=False, nonempty=False):
        t = self.data.get(table, {})
        v = t.get(key, list(default))
        if not isinstance(v, list) or not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in v):
            self.fail(table, key, "expected a list of numbers")
        if nonempty and not v:
            self.fail(table, key, "must be nonempty")
        if sorted_ and any(x >= y for x, y in zip(v, v[1:])):
            self.fail(table, key, "must be strictly increasing")
        return tuple(float(e) for e in v)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"{source}: {exc}") from exc
    r = _Reader(text, source, data)
    command = data.get("command")
    if command is not None and command not in COMMANDS:
        r.fail(None, "command", f"must be one of {', '.join(COMMANDS)}")

    r.table("model", required=True)
    c_Y = r.number("model", "c_Y")
    sigma = r.number("model", "sigma", 0.0, nonneg=True)
    kappa = r.number("model", "kappa", positive=True)
    model_t = data["model"]
    if "omega" in model_t and ("alpha" in model_t or "T" in model_t):
        r.fail("model", "omega", "give either omega or (alpha, T), not both")
    if "omega" in model_t:
        omega = r.number("model", "omega", positive=True)
        alpha, T = (1.0,), ((-omega,),)
    else:
        alpha = r.numbers("model", "alpha", nonempty=True)
        raw = model_t.get("T")
        if not isinstance(raw, list) or not raw or not all(isinstance(row, list) for row in raw):
            r.fail("model", "T", "expected a matrix (list of rows)")
        if any(len(row) != len(raw) for row in raw):
            r.fail("model", "T", f"matrix must be square; row lengths {[len(row) for row in raw]}")
        if len(raw) != len(alpha):
            r.fail("model", "T", f"size {len(raw)} does not match alpha length {len(alpha)}")
        try:
            T = tuple(tuple(float(e) for e in row) for row in raw)
        except (TypeError, ValueError):
            r.fail("model", "T", "entries must be numbers")
        try:
            PhaseType(np.array(alpha), np.array(T))
        except InvalidPhaseType as exc:
            r.fail("model", "T", str(exc))

    r.table("problem", required=True)
    q = r.number("problem", "q", positive=True)
    delta = r.number("problem", "delta", positive=True)
    beta_A = r.number("problem", "beta_A", 1.0, positive=True)
    beta_S = r.number("problem", "beta_S", 0.5, positive=True)
    if not beta_S < beta_A:
        r.fail("problem", "beta_S", f"need beta_A > beta_S > 0, got beta_A={beta_A}, beta_S={beta_S}")
    prob_t = data["problem"]
    if "rho_bar" in prob_t and "rho_tilde" in prob_t:
        r.fail("problem", "rho_bar", "give either rho_bar or rho_tilde, not both")
    rho_bar = r.number("problem", "rho_bar") if "rho_bar" in prob_t else None
    rho_tilde = r.number("problem", "rho_tilde", 0.0)

    r.table("grid")
    x_max = r.number("grid", "x_max", 10.0, positive=True)
    x_points = r.integer("grid", "points", 201, minimum=2)

    strat = r.table("strategy")
    strategy = None
    if strat:
        a, b = r.number("strategy", "a", nonneg=True), r.number("strategy", "b", nonneg=True)
        if not ((a < b) or (a == 0 and b == 0)):
            r.fail("strategy", "b", f"need 0 <= a < b or a = b = 0, got a={a}, b={b}")
        strategy = (a, b)

    r.table("simulate")
    sim = dict(
        n_paths=r.integer("simulate", "n_paths", 100_000, minimum=1),
        dt=r.number("simulate", "dt", 0.01, positive=True),
        horizon=r.number("simulate", "horizon", positive=True) if "horizon" in data.get("simulate", {}) else None,
        seed=r.integer("simulate", "seed", 0),
        workers=r.integer("simulate", "workers", 1, minimum=1),
        x0=r.numbers("simulate", "x0", (1.0,), nonempty=True),
        trace=bool(data.get("simulate", {}).get("trace", False)),
    )
    if any(x < 0 for x in sim["x0"]):
        r.fail("simulate", "x0", "initial surplus must be nonnegative")

    sweep_t = r.table("sweep")
    sweep_parameter = None
    sweep_grid: tuple = ()
    if sweep_t:
        sweep_parameter = sweep_t.get("parameter")
        if sweep_parameter not in SWEEP_PARAMETERS:
            r.fail("sweep", "parameter", f"must be one of {', '.join(SWEEP_PARAMETERS)}")
        sweep_grid = r.numbers("sweep", "grid", sorted_=True, nonempty=True)
        if sweep_parameter == "omega_volatility" and len(alpha) != 1:
            r.fail("sweep", "parameter", "omega_volatility needs exponential jumps (model.omega)")
    sweep_x = r.numbers("sweep", "x", (0.0, 1.0, 2.0, 5.0, 10.0), nonempty=True)

    conv_t = r.table("converge")
    converge_kind = None
    converge_grid: tuple = ()
    if conv_t:
        converge_kind = conv_t.get("kind")
        if converge_kind not in CONVERGE_KINDS:
            r.fail("converge", "kind", f"must be one of {', '.join(CONVERGE_KINDS)}")
        converge_grid = r.numbers("converge", "grid", nonempty=True)

    r.table("check")
    check = dict(
        check_mc_paths=r.integer("check", "mc_paths", 0),
        check_a=r.numbers("check", "a", ()),
        check_b=r.numbers("check", "b", ()),
        check_x=r.numbers("check", "x", ()),
    )

    r.table("output")
    out_dir = data.get("output", {}).get("directory", "out")
    precision = r.integer("output", "precision", 12, minimum=1)

    return ExperimentConfig(
        c_Y=c_Y, sigma=sigma, kappa=kappa, alpha=tuple(alpha), T=T, q=q, delta=delta, beta_A=beta_A,
        beta_S=beta_S, rho_tilde=rho_tilde, rho_bar=rho_bar, command=command, x_max=x_max, x_points=x_points,
        strategy=strategy, sweep_parameter=sweep_parameter, sweep_grid=sweep_grid, sweep_x=sweep_x,
        converge_kind=converge_kind, converge_grid=converge_grid, out_dir=str(out_dir), precision=precision,
        source=source, **sim, **check,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


# -- output helpers ------------------------------------------------------------


def fmt(v, precision: int = 12) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "nan"
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.{precision}g}"


def write_csv(path: Path, header, rows, precision: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v, precision) for v in row])


def write_blocks(path: Path, columns, blocks, precision: int) -> None:
    """gnuplot data file: one block per curve, separated by two blank lines (``index`` addressable)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for i, (label, rows) in enumerate(blocks):
            if i:
                fh.write("\n\n")
            fh.write(f"# {label}\n")
            for row in rows:
                fh.write(" ".join(fmt(v, precision) for v in row) + "\n")


def _echo(out, line=""):
    print(line, file=out or sys.stdout)


# -- solve / value ---------------------------------------------------------------


SOLVE_COLUMNS = ("case", "a_star", "b_star", "b0", "abs_Gamma", "abs_gamma", "dv_a_minus_1", "dv_b_minus_beta",
                 "dv_gap_a", "dv_gap_b")


def run_solve(cfg: ExperimentConfig, out=None) -> int:
    problem = cfg.problem()
    sol = solve(problem)
    fit = verify_smooth_fit(problem, sol)
    p = cfg.precision
    _echo(out, f"case     {sol.case.value}")
    _echo(out, f"a*       {fmt(sol.a_star, p)}")
    _echo(out, f"b*       {fmt(sol.b_star, p)}")
    _echo(out, f"b0       {fmt(sol.b0, p)}")
    for k, v in fit.items():
        _echo(out, f"{k:<16} {fmt(v, p)}")
    out_dir = Path(cfg.out_dir)
    write_csv(out_dir / "solve_summary.csv", SOLVE_COLUMNS,
              [[sol.case.value, sol.a_star, sol.b_star, sol.b0] + [fit.get(k, math.nan) for k in SOLVE_COLUMNS[4:]]],
              p)
    xs = cfg.x_grid()
    vs = value(problem, sol.strategy, xs)
    write_csv(out_dir / "solve_value.csv", ("x", "v"), zip(xs, vs), p)
    _echo(out)
    _echo(out, "x                v(x)")
    for x, v in list(zip(xs, vs))[:: max(1, len(xs) // 10)]:
        _echo(out, f"{fmt(x, 6):<16} {fmt(v, p)}")
    if sol.case is not Case.LIQUIDATE:
        _write_figure1_curves(cfg, problem, sol, out_dir)
    return 0


def _write_figure1_curves(cfg, problem, sol, out_dir: Path) -> None:
    # a -> Gamma(a, b) and a -> gamma(a, b) for b = b* - 2, ..., b* + 2, plus suboptimal value curves
    G_blocks, g_blocks = [], []
    for db in (-2, -1, 0, 1, 2):
        b = sol.b_star + db
        if b <= 0:
            continue
        a_vals = np.linspace(0.0, b, 101)[:-1]
        G_blocks.append((f"b={b:.6g} a(b)={a_of_b(problem, b):.6g}",
                         [(a, gamma_big(problem, a, b)) for a in a_vals]))
        g_blocks.append((f"b={b:.6g}", [(a, gamma_small(problem, a, b)) for a in a_vals]))
    write_blocks(out_dir / "Gamma_curves.dat", ("a", "Gamma"), G_blocks, cfg.precision)
    write_blocks(out_dir / "gamma_curves.dat", ("a", "gamma"), g_blocks, cfg.precision)
    xs = cfg.x_grid()
    blocks = [(f"a={sol.a_star:.6g} b={sol.b_star:.6g} (optimal)", zip(xs, value(problem, sol.strategy, xs)))]
    for s in perturbed_strategies(sol):
        blocks.append((f"a={s.a:.6g} b={s.b:.6g}", zip(xs, value(problem, s, xs))))
    write_blocks(out_dir / "value_curves.dat", ("x", "v"), blocks, cfg.precision)


def perturbed_strategies(sol) -> list[Strategy]:
    """The +-1 perturbations of (a*, b*) used to display dominance; invalid pairs are dropped."""
    a, b = sol.a_star, sol.b_star
    cand = [(a - 1, b - 1), (a - 1, b + 1), (a + 1, b - 1), (a + 1, b + 1)] if a > 0 else [(a + 1, b - 1), (a + 1, b + 1)]
    return [Strategy(x, y) for x, y in cand if 0 <= x < y]


def _strategy(cfg: ExperimentConfig, problem: Problem) -> Strategy:
    return Strategy(*cfg.strategy) if cfg.strategy else solve(problem).strategy


def run_value(cfg: ExperimentConfig, out=None) -> int:
    problem = cfg.problem()
    s = _strategy(cfg, problem)
    xs = cfg.x_grid()
    vs = value(problem, s, xs)
    write_csv(Path(cfg.out_dir) / "value.csv", ("x", "v"), zip(xs, vs), cfg.precision)
    _echo(out, f"strategy a={fmt(s.a, cfg.precision)} b={fmt(s.b, cfg.precision)}; "
               f"{len(xs)} points written to {Path(cfg.out_dir) / 'value.csv'}")
    return 0


# -- simulate --------------------------------------------------------------------

SIMULATE_COLUMNS = ("x0", "a", "b", "analytic", "mc_mean", "mc_stderr", "z_score", "ruin_fraction", "n_paths", "seed")


def run_simulate(cfg: ExperimentConfig, out=None) -> int:
    problem = cfg.problem()
    s = _strategy(cfg, problem)
    rows = []
    for x0 in cfg.x0:
        est = simulate_value(problem, s, x0, cfg.sim_config())
        exact = value(problem, s, x0)
        rows.append([x0, s.a, s.b, exact, est.mean, est.stderr, _z(est.mean, exact, est.stderr),
                     est.ruin_fraction, est.n_paths, est.seed])
        _echo(out, f"x0={fmt(x0, 6)}  analytic={fmt(exact, 8)}  mc={fmt(est.mean, 8)} +- {fmt(est.stderr, 3)}")
    write_csv(Path(cfg.out_dir) / "simulate.csv", SIMULATE_COLUMNS, rows, cfg.precision)
    if cfg.trace:
        events = simulate_path_trace(problem, s, cfg.x0[0], cfg.seed, replace(cfg.sim_config(), n_paths=1))
        write_trace_csv(events, Path(cfg.out_dir) / "trace.csv", cfg.precision)
    return 0


def _z(mean, exact, stderr):
    diff = mean - exact
    if stderr > 0:
        return diff / stderr
    return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(exact)) else math.copysign(math.inf, diff)


# -- sweep -----------------------------------------------------------------------


def surplus_variance(cfg: ExperimentConfig) -> float:
    """Per-unit-time variance of the uncontrolled surplus: sigma^2 + kappa E[Z^2]."""
    alpha, T = np.array(cfg.alpha), np.array(cfg.T)
    Tinv = np.linalg.inv(T)
    second_moment = 2.0 * float(alpha @ Tinv @ Tinv @ np.ones(alpha.size))
    return cfg.sigma**2 + cfg.kappa * second_moment


def sweep_columns(cfg: ExperimentConfig) -> tuple:
    return (("parameter", "value", "variance", "case", "a_star", "b_star", "gap")
            + tuple(f"v(x={fmt(x, 6)})" for x in cfg.sweep_x)
            + ("abs_Gamma", "abs_gamma", "dv_a_minus_1", "dv_b_minus_beta", "error"))


def _sweep_row(args):
    cfg, val = args
    n_x = len(cfg.sweep_x)
    try:
        c = cfg.with_parameter(cfg.sweep_parameter, val)
        problem = c.problem()
        sol = solve(problem)
        fit = verify_smooth_fit(problem, sol)
        vs = list(value(problem, sol.strategy, np.array(cfg.sweep_x)))
        curve = list(zip(cfg.x_grid(), value(problem, sol.strategy, cfg.x_grid())))
        row = ([cfg.sweep_parameter, val, surplus_variance(c), sol.case.value, sol.a_star, sol.b_star,
                sol.b_star - sol.a_star] + vs
               + [fit.get(k, math.nan) for k in ("abs_Gamma", "abs_gamma", "dv_a_minus_1", "dv_b_minus_beta")] + [""])
        return row, curve
    except TwoLayerError as exc:
        row = [cfg.sweep_parameter, val, math.nan, "", math.nan, math.nan, math.nan] + [math.nan] * n_x
        return row + [math.nan] * 4 + [f"{type(exc).__name__}: {exc}"], []


def _map_ordered(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def sweep_rows(cfg: ExperimentConfig):
    if not cfg.sweep_parameter:
        raise InvalidConfig(f"{cfg.source}: the sweep command needs a [sweep] table")
    return _map_ordered(_sweep_row, [(cfg, v) for v in cfg.sweep_grid], cfg.workers)


def run_sweep(cfg: ExperimentConfig, out=None) -> int:
    results = sweep_rows(cfg)
    out_dir = Path(cfg.out_dir)
    write_csv(out_dir / "sweep.csv", sweep_columns(cfg), [r for r, _ in results], cfg.precision)
    write_blocks(out_dir / "sweep_curves.dat", ("x", "v"),
                 [(f"{cfg.sweep_parameter}={fmt(v, 6)}", curve) for v, (_, curve) in zip(cfg.sweep_grid, results)],
                 cfg.precision)
    for row, _ in results:
        msg = row[-1] or f"{row[3]:<12} a*={fmt(row[4], 8)}  b*={fmt(row[5], 8)}"
        _echo(out, f"{cfg.sweep_parameter}={fmt(row[1], 6):<8} {msg}")
    return 0 if any(not r[-1] for r, _ in results) else 3


# -- converge --------------------------------------------------------------------

CONVERGE_COLUMNS = ("kind", "value", "case", "a_star", "b_star", "gap", "benchmark_level", "level_diff",
                    "max_abs_v_diff", "rel_v_diff", "b_limit", "b_limit_diff", "error")


def _converge_row(args):
    cfg, kind, val = args
    xs = cfg.x_grid()
    nan = math.nan
    try:
        c = cfg.with_parameter("delta" if kind == "delta" else "beta", val)
        problem = c.problem()
        sol = solve(problem)
        v = value(problem, sol.strategy, xs)
        b_limit = b_limit_diff = rel = nan
        if kind == "beta_to_one":
            level, vb = value_singular_only(problem, xs)
            level_diff = abs(sol.b_star - level)
        else:
            level, vb = value_refract_only(problem, xs)
            level_diff = abs(sol.a_star - level)
            if kind == "delta":
                rel = float(np.max(np.abs(v - vb))) / float(value_refract_only(problem, level)[1])
            elif math.isclose(problem.rho_bar, 1.0) and problem.scales.dpsi_X0 < 0:
                S = problem.scales
                b_limit = inverse_monotone(S.Zbar_X, -S.dpsi_X0 / problem.q)
                b_limit_diff = abs(sol.b_star - b_limit)
        return [kind, val, sol.case.value, sol.a_star, sol.b_star, sol.b_star - sol.a_star, level, level_diff,
                float(np.max(np.abs(v - vb))), rel, b_limit, b_limit_diff, ""]
    except (TwoLayerError, NotApplicable) as exc:
        return [kind, val, ""] + [nan] * 9 + [f"{type(exc).__name__}: {exc}"]


def converge_rows(cfg: ExperimentConfig):
    if not cfg.converge_kind:
        raise InvalidConfig(f"{cfg.source}: the converge command needs a [converge] table")
    return _map_ordered(_converge_row, [(cfg, cfg.converge_kind, v) for v in cfg.converge_grid], cfg.workers)


def run_converge(cfg: ExperimentConfig, out=None) -> int:
    rows = converge_rows(cfg)
    write_csv(Path(cfg.out_dir) / "converge.csv", CONVERGE_COLUMNS, rows, cfg.precision)
    for r in rows:
        if r[-1]:
            _echo(out, f"{r[0]} {fmt(r[1], 6)}: {r[-1]}")
        else:
            _echo(out, f"{r[0]} {fmt(r[1], 6):<8} {r[2]:<12} a*={fmt(r[3], 8)} b*={fmt(r[4], 8)} "
                       f"level_diff={fmt(r[7], 4)} max|v-bench|={fmt(r[8], 4)}")
    return 0 if any(not r[-1] for r in rows) else 3


# -- check -----------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


def laplace_checks(problem: Problem) -> list[CheckResult]:
    out = []
    for which, roots in (("Y", problem.scales.roots_Y), ("X", problem.scales.roots_X)):
        thetas = roots.positive_root + np.array([0.1, 0.5, 1.0, 2.0, 5.0])
        worst = max(verify_laplace(problem.scales, which, th) for th in thetas)
        out.append(CheckResult(f"laplace_{which}", worst, 1e-8, worst < 1e-8))
    return out


def smooth_fit_checks(problem: Problem, sol) -> list[CheckResult]:
    fit = verify_smooth_fit(problem, sol)
    tol = {"abs_Gamma": 1e-8, "abs_gamma": 1e-8, "dv_a_minus_1": 1e-5, "dv_b_minus_beta": 1e-5}
    return [CheckResult(f"smooth_fit_{k}", abs(fit[k]), t, abs(fit[k]) < t) for k, t in tol.items() if k in fit]


def shape_checks(problem: Problem, sol, x_max: float, n: int = 500) -> list[CheckResult]:
    xs = np.linspace(0.0, x_max, n)
    v = value(problem, sol.strategy, xs)
    d2 = float(np.max(v[2:] - 2 * v[1:-1] + v[:-2]))
    a = sol.a_star
    slopes = np.array([value_derivative(problem, sol.strategy, x) for x in xs[1:]])
    above = xs[1:] >= a
    band = max(float(np.max(np.maximum(problem.beta - slopes[above], slopes[above] - 1.0), initial=0.0)),
               float(np.max(1.0 - slopes[~above], initial=0.0)))
    return [CheckResult("concavity_max_second_difference", d2, 1e-7, d2 <= 1e-7),
            CheckResult("slope_band_violation", band, 1e-9, band <= 1e-9)]


def dominance_checks(problem: Problem, sol, x_max: float, n: int = 200) -> list[CheckResult]:
    xs = np.linspace(0.0, x_max, n)
    best = value(problem, sol.strategy, xs)
    out = []
    for s in perturbed_strategies(sol):
        gap = float(np.max(value(problem, s, xs) - best))
        out.append(CheckResult(f"dominance_a={s.a:.4g}_b={s.b:.4g}", gap, 1e-9, gap <= 1e-9))
    return out


def generator_checks(problem: Problem, sol, n: int = 50) -> list[CheckResult]:
    if problem.model.jumps.m != 1 or sol.case is Case.LIQUIDATE:
        return []
    a, b = sol.a_star, sol.b_star
    out = []
    if a > 0:
        xs = np.linspace(0, a, n + 2)[1:-1]
        r = max(abs(generator_residual(problem, sol.strategy, x, "Y")) for x in xs)
        out.append(CheckResult("generator_below_a", r, 1e-6, r < 1e-6))
    xs = np.linspace(a, b, n + 2)[1:-1]
    r = max(abs(generator_residual(problem, sol.strategy, x, "X")) for x in xs)
    out.append(CheckResult("generator_between_a_b", r, 1e-6, r < 1e-6))
    return out


def mc_cells(problem: Problem, a_vals, b_vals, x_vals, sim: SimConfig):
    """(a, b, x0, analytic, estimate, z) for each cell of the grid with a < b.

    Cell ``i`` uses seed ``sim.seed + i`` so that the cells are independent tests.
    """
    cells = []
    for a in a_vals:
        for b in b_vals:
            if not a < b:
                continue
            s = Strategy(a, b)
            for x0 in x_vals:
                est = simulate_value(problem, s, x0, replace(sim, seed=sim.seed + len(cells)))
                exact = value(problem, s, x0)
                cells.append((a, b, x0, exact, est, _z(est.mean, exact, est.stderr)))
    return cells


def mc_checks(cfg: ExperimentConfig, problem: Problem, out) -> list[CheckResult]:
    if cfg.check_mc_paths <= 0:
        return []
    sim = replace(cfg.sim_config(), n_paths=cfg.check_mc_paths)
    cells = mc_cells(problem, cfg.check_a or (0.5, 1.0, 1.5), cfg.check_b or (2.0, 3.0, 4.0),
                     cfg.check_x or (0.5, 2.0, 5.0), sim)
    for a, b, x0, exact, est, z in cells:
        _echo(out, f"  mc a={fmt(a, 4)} b={fmt(b, 4)} x0={fmt(x0, 4)}: analytic={fmt(exact, 8)} "
                   f"mc={fmt(est.mean, 8)} z={fmt(z, 3)}")
    inside = sum(abs(c[5]) < 3 for c in cells)
    need = math.ceil(len(cells) * 25 / 27)
    return [CheckResult("mc_cells_within_3_stderr", inside, need, inside >= need, f"{inside}/{len(cells)}")]


def run_check(cfg: ExperimentConfig, out=None) -> int:
    problem = cfg.problem()
    sol = solve(problem)
    results = laplace_checks(problem)
    if sol.case is not Case.LIQUIDATE:
        x_max = max(cfg.x_max, sol.b_star + 2.0)
        results += smooth_fit_checks(problem, sol)
        results += shape_checks(problem, sol, x_max)
        results += dominance_checks(problem, sol, x_max)
        results += generator_checks(problem, sol)
    results += mc_checks(cfg, problem, out)
    rows = [[r.name, r.value, r.tolerance, "pass" if r.passed else "FAIL", r.detail] for r in results]
    write_csv(Path(cfg.out_dir) / "check.csv", ("check", "value", "tolerance", "status", "detail"), rows,
              cfg.precision)
    _echo(out, f"case {sol.case.value}: a*={fmt(sol.a_star, 8)} b*={fmt(sol.b_star, 8)}")
    width = max(len(r.name) for r in results)
    for r in results:
        _echo(out, f"{'pass' if r.passed else 'FAIL'}  {r.name:<{width}}  {fmt(r.value, 4):>12}  (tol {fmt(r.tolerance, 3)})")
    failed = sum(not r.passed for r in results)
    _echo(out, f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


RUNNERS = {"solve": run_solve, "value": run_value, "simulate": run_simulate, "sweep": run_sweep,
           "converge": run_converge, "check": run_check}
