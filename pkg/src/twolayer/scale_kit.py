"""Scale functions of -Y and -X and the functions derived from them.

Naming: a ``_Y`` suffix refers to the uncontrolled surplus Y (blackboard
symbols in the usual notation), an ``_X`` suffix to the refracted X = Y - delta t.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import OutOfRange
from .expsum import BelowZero, ExpSum, convolve
from .levy_model import LevyModel, RootSet, negative_roots, psi, psi_derivative

Side = Literal["left", "right"]


@dataclass(frozen=True)
class ScaleSet:
    q: float
    model: LevyModel
    roots_Y: RootSet
    roots_X: RootSet
    W_Y: ExpSum
    W_X: ExpSum
    Wbar_Y: ExpSum
    Wbar_X: ExpSum
    Z_Y: ExpSum
    Z_X: ExpSum
    Zbar_Y: ExpSum
    Zbar_X: ExpSum
    R: ExpSum
    dpsi_X0: float
    dpsi_Y0: float

    @property
    def boundary_values(self) -> dict:
        return {
            "W_Y(0)": self.W_Y(0.0),
            "W_X(0)": self.W_X(0.0),
            "W_Y'(0+)": self.W_Y.derivative()(0.0),
            "W_X'(0+)": self.W_X.derivative()(0.0),
        }

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


def scale_function(roots: RootSet) -> ExpSum:
    """``W(x) = exp(Phi x)/psi'(Phi) - sum_i C_i exp(root_i x)`` for x >= 0, zero below."""
    coef = np.concatenate([[roots.lead_coefficient], -roots.residues])
    expo = np.concatenate([[roots.positive_root], roots.negative_roots])
    return ExpSum.build(coef, expo, below_zero=BelowZero.ZERO)


def build_scales(model: LevyModel, q: float) -> ScaleSet:
    roots_Y = negative_roots(model, "Y", q)
    roots_X = negative_roots(model, "X", q)
    W_Y = scale_function(roots_Y)
    W_X = scale_function(roots_X)
    Wbar_Y = W_Y.antiderivative()
    Wbar_X = W_X.antiderivative()
    Z_Y = Wbar_Y.scale(q).plus_constant(1.0).with_rule(BelowZero.ONE)
    Z_X = Wbar_X.scale(q).plus_constant(1.0).with_rule(BelowZero.ONE)
    Zbar_Y = Z_Y.antiderivative()
    Zbar_X = Z_X.antiderivative()
    dpsi_X0 = float(psi_derivative(model, "X", 0.0))
    dpsi_Y0 = float(psi_derivative(model, "Y", 0.0))
    R = Zbar_X.plus_constant(dpsi_X0 / q)
    return ScaleSet(q, model, roots_Y, roots_X, W_Y, W_X, Wbar_Y, Wbar_X, Z_Y, Z_X,
                    Zbar_Y, Zbar_X, R, dpsi_X0, dpsi_Y0)


def R_eval(scales: ScaleSet, z):
    """R(z) = Zbar_X(z) + psi_X'(0+)/q, with Zbar_X(z) = z below zero."""
    return scales.Zbar_X(z) + scales.dpsi_X0 / scales.q


# -- convolution functions r_c and r~_c ------------------------------------
#
# r_c(z)  = Z_X(z) + q delta int_c^z W_Y(z - y) W_X(y) dy
# r~_c(z) = R(z)   +   delta int_c^z W_Y(z - y) Z_X(y) dy
#
# W_Y(z - y) vanishes for y > z, so the integral is zero unless c < z.  For
# c >= 0 the effective range is [c, z] and the integral is an ExpSum in z.


@lru_cache(maxsize=256)
def _conv_pieces(scales: ScaleSet, c: float):
    conv_W = convolve(scales.W_Y, scales.W_X, c)
    conv_Z = convolve(scales.W_Y, scales.Z_X.with_rule(BelowZero.ZERO), c)
    return conv_W, conv_Z


def r_expsum(scales: ScaleSet, c: float) -> ExpSum:
    """``r_c`` as an exponential sum, valid on ``z >= c`` for ``c >= 0``."""
    conv_W, _ = _conv_pieces(scales, float(c))
    return scales.Z_X.with_rule(BelowZero.ZERO).add(conv_W.scale(scales.q * scales.model.delta))


def rt_expsum(scales: ScaleSet, c: float) -> ExpSum:
    """``r~_c`` as an exponential sum, valid on ``z >= c`` for ``c >= 0``."""
    _, conv_Z = _conv_pieces(scales, float(c))
    return scales.R.with_rule(BelowZero.ZERO).add(conv_Z.scale(scales.model.delta))


def _negative_c_tail(scales: ScaleSet, c: float, z: float, kind: str) -> float:
    # contribution of y in [c, min(z, 0)] where the inner function takes its below-zero value
    hi = min(z, 0.0)
    if c >= hi:
        return 0.0
    if kind == "W":
        return 0.0  # W_X vanishes below zero
    # Z_X = 1 below zero: int_c^hi W_Y(z - y) dy = Wbar_Y(z - c) - Wbar_Y(z - hi)
    return scales.Wbar_Y(z - c) - scales.Wbar_Y(z - hi)


def _r_generic(scales: ScaleSet, c: float, z: float, kind: str) -> float:
    base = scales.Z_X(z) if kind == "W" else R_eval(scales, z)
    mult = scales.q * scales.model.delta if kind == "W" else scales.model.delta
    if z <= c:
        return float(base)
    c0 = max(c, 0.0)
    total = 0.0
    if z > c0:
        conv_W, conv_Z = _conv_pieces(scales, c0)
        total += (conv_W if kind == "W" else conv_Z).formula(z)
    if c < 0:
        total += _negative_c_tail(scales, c, z, kind)
    return float(base + mult * total)


def r_fn(scales: ScaleSet, c: float, z: float) -> float:
    return _r_generic(scales, float(c), float(z), "W")


def rt_fn(scales: ScaleSet, c: float, z: float) -> float:
    return _r_generic(scales, float(c), float(z), "Z")


def r_derivative(scales: ScaleSet, c: float, z: float, order: int = 1, side: Side = "right") -> float:
    """d^order/dz^order of ``r_c(z)`` for ``c >= 0``; ``side`` picks the one-sided value at ``z = c``."""
    return _r_deriv(scales, c, z, order, side, "W")


def rt_derivative(scales: ScaleSet, c: float, z: float, order: int = 1, side: Side = "right") -> float:
    return _r_deriv(scales, c, z, order, side, "Z")


def _nth(f: ExpSum, n: int) -> ExpSum:
    for _ in range(n):
        f = f.derivative()
    return f


def _r_deriv(scales, c, z, order, side, kind):
    if c < 0:
        raise ValueError("derivatives are provided for c >= 0")
    inside = z > c or (z == c and side == "right")
    if z < 0 or (z == 0 and side == "left"):
        # below zero r_c = Z_X = 1 and r~_c = R = z + const
        return 1.0 if (kind == "Z" and order == 1) else 0.0
    if inside:
        f = r_expsum(scales, c) if kind == "W" else rt_expsum(scales, c)
    else:
        f = scales.Z_X if kind == "W" else scales.R
    return float(_nth(f.with_rule(BelowZero.ZERO), order).formula(z))


def inverse_monotone(f: ExpSum, y: float) -> float:
    """Unique ``x >= 0`` with ``f(x) = y`` for strictly increasing ``f`` (Z or Zbar)."""
    f0 = f(0.0)
    if y < f0:
        raise OutOfRange(f"target {y} is below f(0) = {f0}")
    if y == f0:
        return 0.0
    hi = 1.0
    while f(hi) < y:
        hi *= 2.0
        if hi > 1e6:
            raise OutOfRange(f"target {y} not reached below 1e6")
    return float(brentq(lambda x: f(x) - y, 0.0, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500))


def verify_laplace(scales: ScaleSet, which: str, theta: float) -> float:
    """|int_0^inf e^{-theta x} W(x) dx - 1/(psi(theta) - q)|, integral taken termwise."""
    roots = scales.roots_Y if which == "Y" else scales.roots_X
    if theta <= roots.positive_root:
        raise OutOfRange(f"theta = {theta} must exceed the positive root {roots.positive_root}")
    W = scales.W_Y if which == "Y" else scales.W_X
    return abs(W.laplace(theta) - 1.0 / (psi(scales.model, which, theta) - scales.q))
