import csv
import math

import numpy as np
import pytest

from twolayer import SimConfig, Strategy, simulate_path_trace, simulate_value, value
from twolayer.errors import NegativeStart
from twolayer.mc_oracle import (
    TRACE_COLUMNS,
    block_rng,
    sample_phase_type,
    simulate_payoffs,
    trace_payoff,
    truncation_bound,
    write_trace_csv,
)

from conftest import WEIBULL_ALPHA, WEIBULL_T, exp_problem, weibull_problem


def test_phase_type_sampler_moments():
    z = sample_phase_type(block_rng(3, 0), WEIBULL_ALPHA, WEIBULL_T, 200_000)
    Tinv = np.linalg.inv(WEIBULL_T)
    mean = WEIBULL_ALPHA @ -Tinv @ np.ones(6)
    second = 2 * WEIBULL_ALPHA @ Tinv @ Tinv @ np.ones(6)
    assert z.mean() == pytest.approx(mean, abs=4 * z.std() / math.sqrt(z.size))
    assert (z**2).mean() == pytest.approx(second, rel=0.01)


def test_zero_start_is_immediate_ruin(expo_rho1):
    est = simulate_value(expo_rho1, Strategy(1.0, 3.0), 0.0, SimConfig(n_paths=1000, seed=1))
    assert est.mean == pytest.approx(1.0) and est.ruin_fraction == 1.0


def test_liquidation_strategy(expo_rho1):
    est = simulate_value(expo_rho1, Strategy(0.0, 0.0), 2.5, SimConfig(n_paths=1000, seed=1))
    assert est.mean == pytest.approx(0.6 * 2.5 + 1.0)


def test_negative_start(expo):
    with pytest.raises(NegativeStart):
        simulate_value(expo, Strategy(1, 2), -1.0, SimConfig(n_paths=10))


def test_agrees_with_closed_form(expo_rho1):
    s = Strategy(1.0, 3.0)
    est = simulate_value(expo_rho1, s, 2.0, SimConfig(n_paths=100_000, seed=20240601))
    assert abs(est.mean - value(expo_rho1, s, 2.0)) < 3 * est.stderr
    assert est.stderr == pytest.approx(np.std(simulate_payoffs(expo_rho1, s, 2.0, SimConfig(100_000, seed=20240601))[0],
                                              ddof=1) / math.sqrt(100_000))


def test_horizon_truncation_is_negligible(expo_rho1):
    cfg = SimConfig()
    assert truncation_bound(expo_rho1, cfg.resolved_horizon(expo_rho1.q)) < 1e-3


def test_reproducible_and_worker_independent(expo_rho1):
    s = Strategy(0.5, 2.0)
    one = simulate_payoffs(expo_rho1, s, 1.0, SimConfig(n_paths=20_000, seed=9, workers=1))[0]
    two = simulate_payoffs(expo_rho1, s, 1.0, SimConfig(n_paths=20_000, seed=9, workers=2))[0]
    assert np.array_equal(one, two)
    other = simulate_payoffs(expo_rho1, s, 1.0, SimConfig(n_paths=20_000, seed=10))[0]
    assert not np.array_equal(one, other)


@pytest.mark.parametrize("problem,dt", [(exp_problem(rho=1.0), 0.01), (exp_problem(rho=0.5, sigma=0.3), 0.01),
                                        (weibull_problem(), 0.02)])
def test_trace_matches_vectorized_path(problem, dt):
    s = Strategy(1.0, 3.0)
    for seed in range(6):
        cfg = SimConfig(n_paths=1, seed=seed, dt=dt, horizon=30.0)
        events = simulate_path_trace(problem, s, 2.0, seed, cfg)
        assert trace_payoff(events, problem) == simulate_payoffs(problem, s, 2.0, cfg)[0][0]
        times = [e.time for e in events]
        assert times == sorted(times)
        # jumps may overshoot b; the reflection event that follows brings the surplus back
        assert all(e.surplus_after <= s.b + 1e-12 for e in events if e.event_type not in ("jump", "ruin"))


def test_trace_csv(tmp_path, expo_rho1):
    events = simulate_path_trace(expo_rho1, Strategy(1.0, 3.0), 4.0, 3)
    assert events[0].event_type == "initial_lump" and events[0].amount == pytest.approx(1.0)
    path = tmp_path / "trace.csv"
    write_trace_csv(events, path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == TRACE_COLUMNS and len(rows) == len(events) + 1


@pytest.mark.slow
def test_stderr_scales_as_inverse_root_n(expo_rho1):
    s = Strategy(1.0, 3.0)
    small = simulate_value(expo_rho1, s, 2.0, SimConfig(n_paths=10_000, seed=1))
    large = simulate_value(expo_rho1, s, 2.0, SimConfig(n_paths=1_000_000, seed=2))
    assert small.stderr / large.stderr == pytest.approx(10.0, rel=0.2)


@pytest.mark.slow
def test_euler_step_consistency():
    p = weibull_problem()
    s = Strategy(1.75, 5.7)
    coarse = simulate_value(p, s, 3.0, SimConfig(n_paths=3000, dt=0.02, horizon=40.0, seed=1))
    fine = simulate_value(p, s, 3.0, SimConfig(n_paths=3000, dt=0.01, horizon=40.0, seed=2))
    assert abs(coarse.mean - fine.mean) < 3 * math.hypot(coarse.stderr, fine.stderr)
