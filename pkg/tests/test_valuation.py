import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twolayer import InjectionProblem, Problem, Strategy, capital_injection_value, value
from twolayer.errors import InvalidProblem, NegativeStart, NotApplicable
from twolayer.valuation import (
    gamma_big,
    gamma_refract,
    gamma_singular,
    gamma_small,
    generator_residual,
    original_value,
    value_derivative,
    value_formula,
    value_refract_only,
    value_singular_only,
)

from conftest import exp_model, exp_problem, weibull_model, weibull_problem


class TestProblem:
    def test_beta_order(self):
        with pytest.raises(InvalidProblem):
            Problem(exp_model(), 0.2, 0.5, 0.6, 0.0)
        with pytest.raises(InvalidProblem):
            Problem(exp_model(), 0.0, 1.0, 0.6, 0.0)

    def test_normalization(self):
        p = Problem(exp_model(), 0.2, 2.0, 1.2, 3.0)
        assert p.beta == pytest.approx(0.6) and p.rho == pytest.approx(1.5)
        assert original_value(p, Strategy(1, 2), 1.5) == pytest.approx(2.0 * value(p, Strategy(1, 2), 1.5))

    def test_strategy_guard(self):
        with pytest.raises(ValueError):
            Strategy(2.0, 2.0)
        with pytest.raises(ValueError):
            Strategy(3.0, 1.0)


@pytest.mark.parametrize("strategy", [Strategy(1.0, 3.0), Strategy(0.0, 2.0), Strategy(1.5, 1.6)])
@pytest.mark.parametrize("rho", [0.0, 1.0, -2.0])
def test_two_evaluation_paths_agree(strategy, rho):
    p = exp_problem(rho=rho)
    for x in (0.0, 0.3, 1.2, 2.5, 4.0):
        assert value(p, strategy, x) == pytest.approx(value_formula(p, strategy, x), rel=1e-11, abs=1e-11)


def test_two_evaluation_paths_agree_weibull(appendix):
    s = Strategy(1.3, 4.0)
    xs = [0.0, 0.5, 1.3, 2.0, 4.0, 6.0]
    assert np.allclose(value(appendix, s, np.array(xs)), [value_formula(appendix, s, x) for x in xs], rtol=1e-11)


def test_boundary_value_is_terminal_payoff():
    for rho in (0.0, 1.0, -2.0):
        p = exp_problem(rho=rho)
        for s in (Strategy(1.0, 3.0), Strategy(0.0, 2.0)):
            assert value(p, s, 0.0) == pytest.approx(rho, abs=1e-12)


def test_liquidation_and_overshoot(expo_rho1):
    p = expo_rho1
    assert value(p, Strategy(0.0, 0.0), 2.0) == pytest.approx(0.6 * 2.0 + 1.0)
    s = Strategy(1.0, 3.0)
    assert value(p, s, 5.0) - value(p, s, 3.0) == pytest.approx(0.6 * 2.0, rel=1e-13)


def test_negative_start(expo):
    with pytest.raises(NegativeStart):
        value_derivative(expo, Strategy(1, 2), -0.1)


def test_continuity_at_levels(appendix):
    s = Strategy(1.3, 4.0)
    for lvl in (s.a, s.b):
        assert value(appendix, s, lvl - 1e-10) == pytest.approx(value(appendix, s, lvl + 1e-10), abs=1e-8)


def test_derivative_matches_differences(appendix):
    s = Strategy(1.3, 4.0)
    h = 1e-6
    for x in (0.7, 2.0, 3.5):
        fd = (value(appendix, s, x + h) - value(appendix, s, x - h)) / (2 * h)
        assert value_derivative(appendix, s, x) == pytest.approx(fd, rel=1e-6)
        fd2 = (value(appendix, s, x + 1e-4) - 2 * value(appendix, s, x) + value(appendix, s, x - 1e-4)) / 1e-8
        assert value_derivative(appendix, s, x, order=2) == pytest.approx(fd2, rel=1e-3, abs=1e-6)


def test_gamma_links(appendix):
    # d Gamma / d a = delta q beta W_Y(a) gamma(a, b)
    a, b, h = 1.0, 4.0, 1e-6
    dG = (gamma_big(appendix, a + h, b) - gamma_big(appendix, a - h, b)) / (2 * h)
    S = appendix.scales
    assert dG == pytest.approx(appendix.delta * appendix.q * appendix.beta * S.W_Y(a) * gamma_small(appendix, a, b),
                               rel=1e-6)


@pytest.mark.parametrize("strategy", [Strategy(1.0, 3.0), Strategy(0.0, 2.0), Strategy(0.5, 0.8)])
def test_generator_identity(strategy):
    p = exp_problem(rho=1.0)
    if strategy.a > 0:
        for x in np.linspace(0.05, strategy.a - 0.05, 5):
            assert abs(generator_residual(p, strategy, x, "Y")) < 1e-10
    for x in np.linspace(strategy.a + 0.05, strategy.b - 0.05, 5):
        assert abs(generator_residual(p, strategy, x, "X")) < 1e-10


def test_generator_identity_with_diffusion():
    p = exp_problem(rho=0.5, sigma=0.4)
    s = Strategy(1.0, 2.5)
    for x in (0.4, 1.5, 2.2):
        assert abs(generator_residual(p, s, x, "X" if x > s.a else "Y")) < 1e-9


def test_generator_needs_exponential(appendix):
    with pytest.raises(NotApplicable):
        generator_residual(appendix, Strategy(1, 2), 1.5, "X")


class TestBenchmarks:
    def test_singular_only_is_limit_of_thin_layer(self):
        p = Problem.normalized(weibull_model(), 0.05, 1 - 1e-9, 0.0)
        b_S, _ = value_singular_only(p, 0.0)
        assert gamma_singular(p, b_S) == pytest.approx(0.0, abs=1e-10)
        xs = np.array([0.5, 2.0, 6.0])
        _, vS = value_singular_only(p, xs)
        thin = value(p, Strategy(b_S - 1e-7, b_S), xs)
        assert np.allclose(thin, vS, atol=1e-5)

    def test_singular_only_smooth_fit(self, appendix):
        b_S, _ = value_singular_only(appendix, 0.0)
        _, (lo, hi) = value_singular_only(appendix, np.array([b_S - 1e-6, b_S + 1e-6]))
        assert (hi - lo) / 2e-6 == pytest.approx(1.0, abs=1e-5)

    def test_refraction_only_is_limit_of_high_barrier(self, appendix):
        a_A, _ = value_refract_only(appendix, 0.0)
        assert gamma_refract(appendix, a_A) == pytest.approx(0.0, abs=1e-9)
        xs = np.array([0.0, 1.0, 3.0])
        _, vA = value_refract_only(appendix, xs)
        gaps = [np.max(np.abs(value(appendix, Strategy(a_A, b), xs) - vA)) for b in (20.0, 30.0, 40.0)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.05

    def test_refraction_only_at_zero_threshold(self):
        # Gamma_A(0) = delta - q / Phi vanishes exactly for these parameters
        p = exp_problem()
        a_A, _ = value_refract_only(p, 1.0)
        assert a_A == 0.0

    def test_requires_positive_drift(self):
        p = Problem.normalized(exp_model(c_Y=3.0), 0.2, 0.6, 0.0)
        with pytest.raises(NotApplicable):
            value_singular_only(p, 1.0)
        with pytest.raises(NotApplicable):
            value_refract_only(p, 1.0)


class TestCapitalInjection:
    def test_round_trip(self):
        hat = InjectionProblem(exp_model(c_Y=1.5), 0.2, 1.0, 0.6, -0.3)
        back = InjectionProblem.from_transformed(hat.transformed())
        assert back.model_hat.c_Y == pytest.approx(1.5) and back.rho_hat == pytest.approx(-0.3)

    def test_liquidation_value(self):
        hat = InjectionProblem(exp_model(c_Y=1.5), 0.2, 1.0, 0.6, -0.3)
        x = 2.0
        assert capital_injection_value(hat, x, Strategy(0, 0)) == pytest.approx(0.6 * x - 0.3)

    def test_optimal_beats_liquidation(self):
        hat = InjectionProblem(exp_model(c_Y=1.5), 0.2, 1.0, 0.6, -0.3)
        xs = np.linspace(0, 4, 9)
        assert np.all(capital_injection_value(hat, xs) >= 0.6 * xs - 0.3 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.0, 3.0), gap=st.floats(0.05, 3.0), x=st.floats(0.0, 8.0), rho=st.floats(-3.0, 3.0))
def test_value_bounds(a, gap, x, rho):
    # the payoff is at least the terminal payoff lower bound min(rho, 0) and at most x + delta/q + E-dividends cap
    p = exp_problem(rho=rho)
    s = Strategy(a, a + gap)
    v = value(p, s, x)
    assert v >= min(rho, 0.0) - 1e-9
    assert v == pytest.approx(value_formula(p, s, x), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("a,b", [(6.0, 7.0), (8.0, 16.0)])
def test_large_lower_layer_is_well_conditioned(appendix, a, b):
    # e^{phi a} reaches 1e11 here; the value near zero must still start at rho and rise smoothly
    s = Strategy(a, b)
    xs = np.array([0.0, 1e-6, 1e-4, 1e-2, 0.1])
    v = value(appendix, s, xs)
    assert v[0] == pytest.approx(appendix.rho, abs=1e-12)
    assert np.all(np.diff(v) > 0)
    slope = value_derivative(appendix, s, 0.0)
    assert v[1] == pytest.approx(slope * 1e-6, rel=1e-3)
