"""Optimal layer levels (a*, b*) by the nested monotone search."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import BracketFailure
from .scale_kit import ScaleSet, inverse_monotone
from .valuation import Problem, Strategy, gamma_big, gamma_small, value, value_derivative

B_TOL = 1e-9
MAX_ITER = 200


class Case(enum.Enum):
    LIQUIDATE = "Liquidate"
    REFRACT_ONLY = "RefractOnly"
    TWO_LAYER = "TwoLayer"


@dataclass(frozen=True)
class Solution:
    problem: Problem = field(repr=False)
    case: Case
    a_star: float
    b_star: float
    b0: float | None
    residuals: dict

    @property
    def strategy(self) -> Strategy:
        return Strategy(self.a_star, self.b_star)

    def value_at(self, x):
        return value(self.problem, self.strategy, x)


@lru_cache(maxsize=1024)
def _z_inverse(scales: ScaleSet, target: float) -> float:
    return inverse_monotone(scales.Z_X, target)


def z_inverse_of_inv_beta(problem: Problem) -> float:
    """The gap ``b - a`` at which ``gamma(a, b)`` vanishes."""
    return _z_inverse(problem.scales, 1.0 / problem.beta)


def a_of_b(problem: Problem, b: float) -> float:
    """Minimizer of ``a -> Gamma(a, b)`` on ``[0, b]``."""
    return max(0.0, b - z_inverse_of_inv_beta(problem))


def gamma_lower(problem: Problem, b: float) -> float:
    return gamma_big(problem, a_of_b(problem, b), b)


def gamma_at_zero(problem: Problem) -> float:
    return problem.delta - problem.q * problem.rho - problem.beta * problem.scales.dpsi_X0


def b_zero(problem: Problem) -> float:
    """Root of ``Gamma(0, b) = 0``; defined when ``Gamma(0, 0) > 0``."""
    S, q = problem.scales, problem.q
    target = (problem.delta - q * problem.rho) / (q * problem.beta) - S.dpsi_X0 / q
    return inverse_monotone(S.Zbar_X, target)


def solve(problem: Problem) -> Solution:
    if gamma_at_zero(problem) <= 0:
        return Solution(problem, Case.LIQUIDATE, 0.0, 0.0, None, {})
    b0 = b_zero(problem)
    z_inv = z_inverse_of_inv_beta(problem)
    lo = min(b0, z_inv)
    if b0 <= z_inv:
        b_star = b0
    else:
        g_lo, g_hi = gamma_lower(problem, lo), gamma_lower(problem, b0)
        scale = problem.delta + abs(problem.q * problem.rho) + 1.0
        if g_lo < -1e-12 * scale or g_hi > 1e-12 * scale:
            raise BracketFailure(f"Gamma_lower has no sign change on [{lo}, {b0}]: {g_lo}, {g_hi}")
        if g_hi >= 0:
            b_star = b0
        elif g_lo <= 0:
            b_star = lo
        else:
            b_star = brentq(lambda b: gamma_lower(problem, b), lo, b0,
                            xtol=B_TOL * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    a_star = a_of_b(problem, b_star)
    # the a* = 0, gamma(0, b*) = 0 tie is classified as refraction-only
    case = Case.TWO_LAYER if a_star > 0 else Case.REFRACT_ONLY
    sol = Solution(problem, case, a_star, float(b_star), b0, {})
    return Solution(problem, case, a_star, float(b_star), b0, _residuals(sol))


def _residuals(sol: Solution) -> dict:
    p, a, b = sol.problem, sol.a_star, sol.b_star
    s = sol.strategy
    out = {
        "Gamma": gamma_big(p, a, b),
        "gamma": gamma_small(p, a, b),
        "dv_a_minus_1": value_derivative(p, s, a, side="right") - 1.0 if a > 0 else math.nan,
        "dv_b_minus_beta": value_derivative(p, s, b, side="left") - p.beta,
    }
    return out


def verify_smooth_fit(problem: Problem, solution: Solution) -> dict:
    """Residuals of the free-boundary conditions and one-sided derivative gaps at a* and b*."""
    if solution.case is Case.LIQUIDATE:
        return {}
    a, b = solution.a_star, solution.b_star
    s = solution.strategy
    report = {"abs_Gamma": abs(gamma_big(problem, a, b))}
    if a > 0:
        report["abs_gamma"] = abs(gamma_small(problem, a, b))
        report["dv_gap_a"] = (value_derivative(problem, s, a, side="left")
                              - value_derivative(problem, s, a, side="right"))
        report["dv_a_minus_1"] = value_derivative(problem, s, a, side="left") - 1.0
    report["dv_gap_b"] = (value_derivative(problem, s, b, side="left")
                          - value_derivative(problem, s, b, side="right"))
    report["dv_b_minus_beta"] = value_derivative(problem, s, b, side="left") - problem.beta
    if not problem.model.bounded_variation:
        if a > 0:
            report["d2v_gap_a"] = (value_derivative(problem, s, a, side="left", order=2)
                                   - value_derivative(problem, s, a, side="right", order=2))
        report["d2v_gap_b"] = (value_derivative(problem, s, b, side="left", order=2)
                               - value_derivative(problem, s, b, side="right", order=2))
    return report
