"""Monte Carlo estimator of v_{a,b}(x), independent of the scale-function formulas.

The controlled surplus is simulated pathwise: no payment below ``a``, payment at
rate ``delta`` above ``a``, any excess over ``b`` paid at once, and the path
stops at ruin (first time the surplus is strictly negative).

Without diffusion the simulation is exact and event driven: the surplus moves
on straight lines between jumps, so crossing times of ``a`` and ``0`` and the
discounted refraction dividends are closed form.  With diffusion an
Euler-Maruyama grid is used, with the jump times themselves kept exact.

Paths are processed in fixed-size blocks, block ``k`` drawing from
``SeedSequence(seed, spawn_key=(k,))``, so the estimate does not depend on how
blocks are spread over workers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, NegativeStart
from .valuation import Problem, Strategy

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    horizon: float | None = None  # None: smallest T with exp(-q T) < 1e-4
    dt: float = 0.01
    seed: int = 0
    workers: int = 1

    def resolved_horizon(self, q: float) -> float:
        return self.horizon if self.horizon is not None else math.log(1e4) / q


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    ruin_fraction: float
    seed: int


def truncation_bound(problem: Problem, horizon: float) -> float:
    """Upper bound on the discounted value left beyond the horizon."""
    mu_Y = max(-problem.scales.dpsi_Y0, 0.0)
    q = problem.q
    return math.exp(-q * horizon) * (problem.delta / q + problem.beta * mu_Y / q + abs(problem.rho))


@dataclass(frozen=True)
class _Params:
    c_Y: float
    c_X: float
    sigma: float
    kappa: float
    alpha: np.ndarray
    T: np.ndarray
    delta: float
    q: float
    beta: float
    rho: float
    a: float
    b: float
    horizon: float
    dt: float

    @classmethod
    def from_problem(cls, problem: Problem, strategy: Strategy, config: SimConfig) -> "_Params":
        m = problem.model
        return cls(m.c_Y, m.c_X, m.sigma, m.kappa, np.asarray(m.jumps.alpha), np.asarray(m.jumps.T),
                   m.delta, problem.q, problem.beta, problem.rho, strategy.a, strategy.b,
                   config.resolved_horizon(problem.q), config.dt)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _exp_draw(rng, size, rate):
    return -np.log1p(-rng.random(size)) / rate


def sample_phase_type(rng: np.random.Generator, alpha: np.ndarray, T: np.ndarray, n: int) -> np.ndarray:
    """Absorption times of the Markov chain with initial law ``alpha`` and sub-generator ``T``."""
    m = alpha.size
    if m == 1:
        return _exp_draw(rng, n, -T[0, 0])
    rates = -np.diag(T)
    exit_vec = -T.sum(axis=1)
    jump_probs = np.where(np.eye(m, dtype=bool), 0.0, T) / rates[:, None]
    # columns: phases 0..m-1, then absorption
    cum = np.cumsum(np.hstack([jump_probs, (exit_vec / rates)[:, None]]), axis=1)
    cum[:, -1] = 1.0
    state = np.minimum(np.searchsorted(np.cumsum(alpha), rng.random(n), side="right"), m - 1)
    total = np.zeros(n)
    active = np.arange(n)
    while active.size:
        s = state[active]
        total[active] += _exp_draw(rng, active.size, rates[s])
        u = rng.random(active.size)
        nxt = (u[:, None] >= cum[s]).sum(axis=1)
        state[active] = np.minimum(nxt, m)
        active = active[nxt < m]
    return total


def _disc(q, t1, t2):
    # int_{t1}^{t2} e^{-q s} ds
    return (np.exp(-q * t1) - np.exp(-q * t2)) / q


def _simulate_block_exact(p: _Params, x0: float, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    U = np.full(n, float(x0))
    t = np.zeros(n)
    cum_A = np.zeros(n)
    cum_S = np.zeros(n)
    terminal = np.zeros(n)
    ruined = np.zeros(n, dtype=bool)
    over = U > p.b
    cum_S[over] += U[over] - p.b
    U[over] = p.b
    alive = np.arange(n)
    while alive.size:
        tau = _exp_draw(rng, alive.size, p.kappa)
        u, t0 = U[alive], t[alive]
        t_end = np.minimum(t0 + tau, p.horizon)
        span = t_end - t0
        # refraction segment above a, ending at a or at t_end
        above = u > p.a
        to_a = (u - p.a) / p.c_X
        reached = above & (to_a <= span)
        t1 = np.where(above, np.where(reached, t0 + to_a, t_end), t0)
        cum_A[alive] += np.where(above, p.delta * _disc(p.q, t0, t1), 0.0)
        u = np.where(reached, p.a, np.where(above, u - p.c_X * span, u))
        # remaining time drifts at -c_Y (below a, or after reaching a)
        rest = t_end - t1
        hits_zero = u - p.c_Y * rest < 0
        t_ruin = t1 + u / p.c_Y
        u = np.where(hits_zero, 0.0, u - p.c_Y * rest)
        dead = hits_zero
        idx_dead = alive[dead]
        ruined[idx_dead] = True
        t[idx_dead] = t_ruin[dead]
        terminal[idx_dead] = p.rho * np.exp(-p.q * t_ruin[dead])
        done = dead | (t0 + tau >= p.horizon)
        survivors = alive[~done]
        if survivors.size:
            t_jump = (t0 + tau)[~done]
            z = sample_phase_type(rng, p.alpha, p.T, survivors.size)
            un = u[~done] + z
            excess = np.maximum(un - p.b, 0.0)
            cum_S[survivors] += excess * np.exp(-p.q * t_jump)
            U[survivors] = np.where(excess > 0, p.b, un)
            t[survivors] = t_jump
        alive = survivors
    return cum_A + p.beta * cum_S + terminal, ruined


def _simulate_block_euler(p: _Params, x0: float, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    U = np.full(n, float(x0))
    cum_A = np.zeros(n)
    cum_S = np.zeros(n)
    terminal = np.zeros(n)
    ruined = np.zeros(n, dtype=bool)
    over = U > p.b
    cum_S[over] += U[over] - p.b
    U[over] = p.b
    # with diffusion, a start at zero is ruined at once
    if x0 == 0:
        terminal[:] = p.rho
        ruined[:] = True
        return cum_A + p.beta * cum_S + terminal, ruined
    next_jump = _exp_draw(rng, n, p.kappa)
    alive = np.arange(n)
    n_steps = int(math.ceil(p.horizon / p.dt))
    sq = p.sigma * math.sqrt(p.dt)
    for k in range(n_steps):
        if not alive.size:
            break
        t0 = k * p.dt
        t1 = min(t0 + p.dt, p.horizon)
        h = t1 - t0
        u = U[alive]
        above = u > p.a  # drift chosen from the left limit at the threshold
        cum_A[alive] += np.where(above, p.delta * _disc(p.q, t0, t1), 0.0)
        u = u - np.where(above, p.c_X, p.c_Y) * h + sq * math.sqrt(h / p.dt) * rng.standard_normal(alive.size)
        # superpose the jumps falling in (t0, t1]
        nj = next_jump[alive]
        pending = np.flatnonzero(nj <= t1)
        while pending.size:
            u[pending] += sample_phase_type(rng, p.alpha, p.T, pending.size)
            nj[pending] += _exp_draw(rng, pending.size, p.kappa)
            pending = pending[nj[pending] <= t1]
        next_jump[alive] = nj
        dead = u < 0
        idx_dead = alive[dead]
        ruined[idx_dead] = True
        terminal[idx_dead] = p.rho * np.exp(-p.q * np.array([t1]))[0]
        excess = np.maximum(u - p.b, 0.0)
        cum_S[alive] += excess * math.exp(-p.q * t1)
        U[alive] = np.where(excess > 0, p.b, u)
        alive = alive[~dead]
    return cum_A + p.beta * cum_S + terminal, ruined


def _run_block(args):
    p, x0, n, seed, block = args
    rng = block_rng(seed, block)
    if p.sigma > 0:
        return _simulate_block_euler(p, x0, n, rng)
    return _simulate_block_exact(p, x0, n, rng)


def simulate_payoffs(problem: Problem, strategy: Strategy, x0: float, config: SimConfig):
    """Per-path discounted payoffs (in path-index order) and ruin flags."""
    if x0 < 0:
        raise NegativeStart("initial surplus must be nonnegative")
    if config.n_paths <= 0:
        raise InvalidConfig("n_paths must be positive")
    if problem.model.sigma > 0 and not config.dt > 0:
        raise InvalidConfig("dt must be positive when sigma > 0")
    p = _Params.from_problem(problem, strategy, config)
    sizes = [min(BLOCK_SIZE, config.n_paths - k) for k in range(0, config.n_paths, BLOCK_SIZE)]
    jobs = [(p, float(x0), n, config.seed, k) for k, n in enumerate(sizes)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    payoffs = np.concatenate([r[0] for r in results])
    ruined = np.concatenate([r[1] for r in results])
    return payoffs, ruined


def simulate_value(problem: Problem, strategy: Strategy, x0: float, config: SimConfig = SimConfig()) -> McEstimate:
    payoffs, ruined = simulate_payoffs(problem, strategy, x0, config)
    n = payoffs.size
    stderr = float(payoffs.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return McEstimate(float(payoffs.mean()), stderr, n, float(ruined.mean()), config.seed)


# -- single-path trace --------------------------------------------------------


@dataclass(frozen=True)
class Event:
    time: float
    event_type: str  # initial_lump | cross_a | jump | reflection | ruin | horizon
    amount: float
    surplus_after: float
    discounted_cum_A: float
    discounted_cum_S: float


TRACE_COLUMNS = ("time", "event_type", "amount", "surplus_after", "discounted_cum_A", "discounted_cum_S")


def simulate_path_trace(problem: Problem, strategy: Strategy, x0: float, seed: int,
                        config: SimConfig | None = None) -> list[Event]:
    """Chronological events of path 0 of ``simulate_value(..., SimConfig(n_paths=1, seed=seed))``.

    Written as a scalar loop, separately from the vectorized block simulator;
    the two draw random numbers in the same order.
    """
    if x0 < 0:
        raise NegativeStart("initial surplus must be nonnegative")
    config = config or SimConfig(n_paths=1, seed=seed)
    p = _Params.from_problem(problem, strategy, config)
    rng = block_rng(seed, 0)
    if p.sigma > 0:
        return _trace_euler(p, x0, rng)
    return _trace_exact(p, x0, rng)


def _trace_exact(p: _Params, x0: float, rng) -> list[Event]:
    events: list[Event] = []
    U, t, A, S = float(x0), 0.0, 0.0, 0.0
    if U > p.b:
        S += U - p.b
        events.append(Event(0.0, "initial_lump", U - p.b, p.b, A, S))
        U = p.b
    while True:
        tau = float(_exp_draw(rng, 1, p.kappa)[0])
        t_end = min(t + tau, p.horizon)
        if U > p.a:
            t_a = t + (U - p.a) / p.c_X
            if (U - p.a) / p.c_X <= t_end - t:
                A += float(p.delta * _disc(p.q, np.array([t]), np.array([t_a]))[0])
                U = p.a
                t = t_a
                events.append(Event(t, "cross_a", 0.0, U, A, S))
            else:
                A += float(p.delta * _disc(p.q, np.array([t]), np.array([t_end]))[0])
                U -= p.c_X * (t_end - t)
                t = t_end
        if t < t_end:
            if U - p.c_Y * (t_end - t) < 0:
                events.append(Event(t + U / p.c_Y, "ruin", p.rho, 0.0, A, S))
                return events
            U -= p.c_Y * (t_end - t)
            t = t_end
        if t >= p.horizon:
            events.append(Event(p.horizon, "horizon", 0.0, U, A, S))
            return events
        z = float(sample_phase_type(rng, p.alpha, p.T, 1)[0])
        U += z
        events.append(Event(t, "jump", z, U, A, S))
        if U > p.b:
            S += (U - p.b) * float(np.exp(-p.q * np.array([t]))[0])
            events.append(Event(t, "reflection", U - p.b, p.b, A, S))
            U = p.b


def _trace_euler(p: _Params, x0: float, rng) -> list[Event]:
    events: list[Event] = []
    U, A, S = float(x0), 0.0, 0.0
    if U > p.b:
        S += U - p.b
        events.append(Event(0.0, "initial_lump", U - p.b, p.b, A, S))
        U = p.b
    if x0 == 0:
        events.append(Event(0.0, "ruin", p.rho, 0.0, A, S))
        return events
    next_jump = float(_exp_draw(rng, 1, p.kappa)[0])
    n_steps = int(math.ceil(p.horizon / p.dt))
    sq = p.sigma * math.sqrt(p.dt)
    for k in range(n_steps):
        t0 = k * p.dt
        t1 = min(t0 + p.dt, p.horizon)
        h = t1 - t0
        above = U > p.a
        if above:
            A += float(p.delta * _disc(p.q, np.array([t0]), np.array([t1]))[0])
        U = U - (p.c_X if above else p.c_Y) * h + sq * math.sqrt(h / p.dt) * float(rng.standard_normal(1)[0])
        while next_jump <= t1:
            z = float(sample_phase_type(rng, p.alpha, p.T, 1)[0])
            U += z
            events.append(Event(next_jump, "jump", z, U, A, S))
            next_jump += float(_exp_draw(rng, 1, p.kappa)[0])
        if U < 0:
            events.append(Event(t1, "ruin", p.rho, U, A, S))
            return events
        if U > p.b:
            S += (U - p.b) * math.exp(-p.q * t1)
            events.append(Event(t1, "reflection", U - p.b, p.b, A, S))
            U = p.b
    events.append(Event(p.horizon, "horizon", 0.0, U, A, S))
    return events


def trace_payoff(events: list[Event], problem: Problem) -> float:
    """Discounted payoff of a traced path: dividends plus the terminal payoff at ruin."""
    last = events[-1]
    terminal = (float(problem.rho * np.exp(-problem.q * np.array([last.time]))[0])
                if last.event_type == "ruin" else 0.0)
    return last.discounted_cum_A + problem.beta * last.discounted_cum_S + terminal


def write_trace_csv(events: list[Event], path, precision: int = 12) -> None:
    fmt = f"{{:.{precision}g}}"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for e in events:
            w.writerow([fmt.format(e.time), e.event_type, fmt.format(e.amount), fmt.format(e.surplus_after),
                        fmt.format(e.discounted_cum_A), fmt.format(e.discounted_cum_S)])
