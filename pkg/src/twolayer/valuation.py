"""Expected present value of dividends under a two-layer (a, b) strategy.

Values are in normalized units (divided by ``beta_A``) unless a function says
otherwise.  ``x`` is the initial surplus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidProblem, NegativeStart, NotApplicable, SubordinatorPath
from .expsum import EXPONENT_COLLISION_TOL, BelowZero, ExpSum
from .levy_model import LevyModel, build_model
from .scale_kit import (
    ScaleSet,
    build_scales,
    inverse_monotone,
    r_derivative,
    r_expsum,
    r_fn,
    rt_derivative,
    rt_expsum,
    rt_fn,
)

Side = Literal["left", "right"]


@dataclass(frozen=True)
class Problem:
    model: LevyModel
    q: float
    beta_A: float
    beta_S: float
    rho_tilde: float
    scales: ScaleSet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.q > 0:
            raise InvalidProblem(f"discount rate q must be positive, got {self.q}")
        if not (self.beta_A > self.beta_S > 0):
            raise InvalidProblem(f"need beta_A > beta_S > 0, got beta_A={self.beta_A}, beta_S={self.beta_S}")
        object.__setattr__(self, "scales", build_scales(self.model, self.q))

    @classmethod
    def normalized(cls, model: LevyModel, q: float, beta: float, rho: float) -> "Problem":
        """Problem with ``beta_A = 1`` so that ``beta_S = beta`` and ``rho_tilde = rho``."""
        if not 0 < beta < 1:
            raise InvalidProblem(f"beta must lie in (0, 1), got {beta}")
        return cls(model, q, 1.0, beta, rho)

    @property
    def beta(self) -> float:
        return self.beta_S / self.beta_A

    @property
    def rho(self) -> float:
        return self.rho_tilde / self.beta_A

    @property
    def delta(self) -> float:
        return self.model.delta

    @property
    def rho_bar(self) -> float:
        return self.q * self.rho / self.delta

    def with_rho(self, rho: float) -> "Problem":
        return replace(self, rho_tilde=rho * self.beta_A)


@dataclass(frozen=True)
class Strategy:
    a: float
    b: float

    def __post_init__(self):
        if not ((0 <= self.a < self.b) or (self.a == 0 and self.b == 0)):
            raise ValueError(f"need 0 <= a < b or a = b = 0, got a={self.a}, b={self.b}")

    @property
    def liquidation(self) -> bool:
        return self.b == 0


def gamma_small(problem: Problem, a: float, b: float) -> float:
    """``1/beta - Z_X(b - a)``; its sign decides whether Gamma(., b) is falling at a."""
    return 1.0 / problem.beta - problem.scales.Z_X(b - a)


def gamma_big(problem: Problem, a: float, b: float) -> float:
    S = problem.scales
    q = problem.q
    return problem.delta * S.Z_Y(a) - q * problem.rho - q * problem.beta * rt_fn(S, b - a, b)


def value_pieces(problem: Problem, strategy: Strategy) -> list[tuple[float, float, ExpSum]]:
    """Piecewise exponential-sum form of ``x -> v_{a,b}(x)`` on ``[lo, hi)`` intervals."""
    a, b = strategy.a, strategy.b
    beta, q, delta = problem.beta, problem.q, problem.delta
    if strategy.liquidation:
        return [(0.0, np.inf, ExpSum.from_terms([], [], constant=problem.rho, linear=beta))]
    S = problem.scales
    c = b - a
    K = gamma_big(problem, a, b) / (q * r_fn(S, c, b))
    pieces = []
    if a > 0:
        lower = (
            r_expsum(S, c).reflect(b).scale(-K)
            .add(S.Z_Y.reflect(a).scale(delta / q))
            .add(rt_expsum(S, c).reflect(b).scale(-beta))
        )
        pieces.append((0.0, a, _pin_at_zero(lower, S.roots_Y.positive_root, a, problem.rho)))
    middle = (
        S.Z_X.reflect(b).scale(-K)
        .add(S.R.reflect(b).scale(-beta))
        .plus_constant(delta / q)
    )
    pieces.append((a, b, middle))
    v_b = -K + delta / q - beta * S.dpsi_X0 / q
    pieces.append((b, np.inf, ExpSum.from_terms([], [], constant=v_b - beta * b, linear=beta)))
    return pieces


def _pin_at_zero(lower: ExpSum, phi: float, a: float, rho: float) -> ExpSum:
    """Refit the ``e^{phi (a - x)}`` coefficient of the lower piece from ``v(0) = rho``.

    That coefficient is a difference of O(1) numbers whose true size is about
    ``e^{-phi a}``, so summing it directly leaves an error of order
    ``eps e^{phi a}`` near zero. The surplus drifts below zero at once from
    ``x = 0``, hence ``v(0) = rho`` exactly; every other term is well conditioned.
    """
    hit = (np.abs(lower.expo + phi) <= 1e-12 * phi) & (lower.power == 0) & (lower.origin == a)
    if not hit.any():
        return lower
    keep = ~hit
    rest = ExpSum(lower.coef[keep], lower.expo[keep], lower.power[keep], lower.origin[keep], lower.below_zero)
    c = (rho - rest.formula(0.0)) * math.exp(-phi * a)
    return ExpSum(np.append(rest.coef, c), np.append(rest.expo, -phi), np.append(rest.power, 0),
                  np.append(rest.origin, a), lower.below_zero)


def _eval_pieces(pieces, x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for lo, hi, f in pieces:
        mask = (x >= lo) & (x < hi)
        if np.any(mask):
            out[mask] = f.formula(x[mask])
    return out if out.ndim else float(out)


def value(problem: Problem, strategy: Strategy, x):
    """``v_{a,b}(x)`` in normalized units; ``x`` may be an array."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise NegativeStart("initial surplus must be nonnegative")
    return _eval_pieces(value_pieces(problem, strategy), xa)


def value_formula(problem: Problem, strategy: Strategy, x: float) -> float:
    """Pointwise evaluation straight from the r / r~ representation (no piecewise algebra)."""
    if x < 0:
        raise NegativeStart("initial surplus must be nonnegative")
    a, b = strategy.a, strategy.b
    if strategy.liquidation:
        return problem.beta * x + problem.rho
    S, q, beta, delta = problem.scales, problem.q, problem.beta, problem.delta
    if x > b:
        return beta * (x - b) + value_formula(problem, strategy, b)
    c = b - a
    G = gamma_big(problem, a, b)
    return (-(G / q) * r_fn(S, c, b - x) / r_fn(S, c, b)
            + (delta / q) * S.Z_Y(a - x) - beta * rt_fn(S, c, b - x))


def original_value(problem: Problem, strategy: Strategy, x):
    """Value in the original (un-normalized) currency units: ``beta_A * v``."""
    return problem.beta_A * value(problem, strategy, x)


def value_derivative(problem: Problem, strategy: Strategy, x: float, side: Side = "right", order: int = 1) -> float:
    """First (or second) derivative of ``v_{a,b}`` at ``x``; ``side`` selects the one-sided value at a or b."""
    if x < 0:
        raise NegativeStart("initial surplus must be nonnegative")
    a, b = strategy.a, strategy.b
    beta, q, delta = problem.beta, problem.q, problem.delta
    if strategy.liquidation:
        return beta if order == 1 else 0.0
    if x > b or (x == b and side == "right"):
        return beta if order == 1 else 0.0
    S = problem.scales
    c = b - a
    G = gamma_big(problem, a, b)
    z = b - x
    # moving x to the left is moving z to the right
    z_side = "right" if side == "left" else "left"
    below_a = x < a or (x == a and side == "left")
    sign = (-1) ** order
    r_term = sign * r_derivative(S, c, z, order, z_side)
    rt_term = sign * rt_derivative(S, c, z, order, z_side)
    WY = S.W_Y if order == 1 else S.W_Y.derivative()
    # d^n/dx^n Z_Y(a - x) = (-1)^n q W_Y^{(n-1)}(a - x) on x < a, zero above a
    zy_term = sign * q * WY.formula(a - x) if below_a else 0.0
    return -(G / q) * r_term / r_fn(S, c, b) + (delta / q) * zy_term - beta * rt_term


# -- generator identities (exponential jumps) -----------------------------


def _integral_against_exp(pieces, x: float, omega: float) -> float:
    """``int_x^inf v(y) omega exp(-omega (y - x)) dy`` term by term in closed form."""
    total = 0.0
    for lo, hi, f in pieces:
        L, H = max(lo, x), hi
        if H <= L:
            continue
        for c, lam, p, o in zip(f.coef, f.expo, f.power, f.origin):
            mu = lam - omega

            def prim(y):
                if np.isinf(y):
                    return 0.0
                u = y - o
                scale = np.exp(lam * u - omega * (y - x))
                if abs(mu) < EXPONENT_COLLISION_TOL:
                    return u ** (p + 1) / (p + 1) * np.exp(omega * (x - o))
                if p == 0:
                    return scale / mu
                return scale * (u / mu - 1.0 / mu**2)

            total += (c * (prim(H) - prim(L))).real
    return omega * total


def generator_residual(problem: Problem, strategy: Strategy, x: float, which: str) -> float:
    """``(L_Y - q) v(x)`` (which='Y') or ``(L_X - q) v(x) + delta`` (which='X').

    Only exponential jump laws are supported; the jump integral is exact.
    """
    model = problem.model
    if model.jumps.m != 1:
        raise NotApplicable("generator identity is implemented for exponential jumps only")
    omega = -float(model.jumps.T[0, 0])
    pieces = value_pieces(problem, strategy)
    v = _eval_pieces(pieces, x)
    d1 = value_derivative(problem, strategy, x)
    d2 = value_derivative(problem, strategy, x, order=2) if model.sigma > 0 else 0.0
    jump = _integral_against_exp(pieces, x, omega)
    drift = model.c_Y if which == "Y" else model.c_X
    res = -drift * d1 + 0.5 * model.sigma**2 * d2 + model.kappa * (jump - v) - problem.q * v
    return res + (problem.delta if which == "X" else 0.0)


# -- benchmarks -------------------------------------------------------------


def value_singular_only(problem: Problem, x):
    """Optimal barrier ``b_S`` and value when only lump-sum dividends are allowed."""
    S, q = problem.scales, problem.q
    if S.dpsi_Y0 >= 0:
        raise NotApplicable("singular-only benchmark needs psi_Y'(0+) < 0")
    b_S = inverse_monotone(S.Zbar_Y, -S.dpsi_Y0 / q)
    v = -S.Zbar_Y(b_S - np.asarray(x, dtype=float)) - S.dpsi_Y0 / q
    return b_S, v


def gamma_singular(problem: Problem, b: float) -> float:
    S = problem.scales
    return S.Zbar_Y(b) + S.dpsi_Y0 / problem.q


def _refraction_integral(problem: Problem) -> ExpSum:
    # y -> int_0^y W_Y(u) exp(-Phi u) du
    S = problem.scales
    return S.W_Y.times_exp(-S.roots_X.positive_root).antiderivative()


def gamma_refract(problem: Problem, a: float) -> float:
    S, q, delta = problem.scales, problem.q, problem.delta
    Phi = S.roots_X.positive_root
    I = _refraction_integral(problem)
    return delta * S.Z_Y(a) - (q / Phi) * np.exp(Phi * a) * (1.0 + delta * Phi * I(a))


def refraction_level(problem: Problem) -> float:
    if problem.scales.dpsi_Y0 >= 0:
        raise NotApplicable("refraction-only benchmark needs psi_Y'(0+) < 0")
    f = lambda a: gamma_refract(problem, a)
    if f(0.0) <= 0:
        return 0.0
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise NotApplicable("refraction level not bracketed below 1e6")
    return float(brentq(f, 0.0, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500))


def value_refract_only(problem: Problem, x):
    """Optimal threshold ``a_A`` and value when only rate-capped dividends are allowed."""
    a_A = refraction_level(problem)
    S, q, delta = problem.scales, problem.q, problem.delta
    Phi = S.roots_X.positive_root
    I = _refraction_integral(problem)
    u = a_A - np.asarray(x, dtype=float)
    e = np.exp(Phi * u)
    v = -e * delta * I(u) + (delta / q) * S.Z_Y(u) - e / Phi
    return a_A, v


# -- capital-injection reformulation -----------------------------------------


@dataclass(frozen=True)
class InjectionProblem:
    """Barrier dividends with rate-capped capital injections on a surplus ``Y_hat``."""

    model_hat: LevyModel
    q: float
    beta_A: float
    beta_S: float
    rho_hat: float

    def transformed(self) -> Problem:
        m = self.model_hat
        c_Y = m.c_Y - m.delta  # Y = Y_hat + delta t, drift is -c_Y
        try:
            model = build_model(c_Y, m.sigma, m.kappa, m.jumps, m.delta)
        except SubordinatorPath as exc:
            raise SubordinatorPath(f"transformed drift c_Y = {c_Y} needs c_hat_Y > delta when sigma = 0") from exc
        rho_tilde = self.rho_hat + self.beta_A * m.delta / self.q
        return Problem(model, self.q, self.beta_A, self.beta_S, rho_tilde)

    @classmethod
    def from_transformed(cls, problem: Problem) -> "InjectionProblem":
        m = problem.model
        model_hat = build_model(m.c_Y + m.delta, m.sigma, m.kappa, m.jumps, m.delta)
        rho_hat = problem.rho_tilde - problem.beta_A * m.delta / problem.q
        return cls(model_hat, problem.q, problem.beta_A, problem.beta_S, rho_hat)


def capital_injection_value(problem_hat: InjectionProblem, x, strategy: Strategy | None = None):
    """Value (original units) of the injection problem; optimal strategy unless one is given."""
    problem = problem_hat.transformed()
    if strategy is None:
        from .optimizer import solve

        strategy = solve(problem).strategy
    shift = problem_hat.beta_A * problem.delta / problem.q
    return problem.beta_A * value(problem, strategy, x) - shift
