"""Exponential-polynomial sums with a rule for negative arguments.

A term is ``c (x - o)^p exp(lambda (x - o))``.  Keeping a per-term origin ``o``
lets convolutions and reflections carry terms like ``exp(-76 (z - c))`` without
ever forming ``exp(76 c)`` on its own, which would overflow for moderate ``c``.
Scale functions of phase-type jump-diffusions, their integrals and their
convolutions all stay inside this family.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

EXPONENT_COLLISION_TOL = 1e-9


class BelowZero(enum.Enum):
    ZERO = "zero"
    ONE = "one"
    IDENTITY = "identity"


_DERIVATIVE_RULE = {BelowZero.ZERO: BelowZero.ZERO, BelowZero.ONE: BelowZero.ZERO,
                    BelowZero.IDENTITY: BelowZero.ONE}
_ANTIDERIVATIVE_RULE = {BelowZero.ZERO: BelowZero.ZERO, BelowZero.ONE: BelowZero.IDENTITY}


def _arr(values, dtype):
    return np.asarray(values, dtype=dtype).reshape(-1)


@dataclass(frozen=True)
class ExpSum:
    coef: np.ndarray
    expo: np.ndarray
    power: np.ndarray
    origin: np.ndarray
    below_zero: BelowZero = BelowZero.ZERO

    @classmethod
    def build(cls, coef, expo, power=None, origin=None, below_zero=BelowZero.ZERO):
        coef = _arr(coef, complex)
        expo = _arr(expo, complex)
        power = np.zeros(coef.size, dtype=int) if power is None else _arr(power, int)
        origin = np.zeros(coef.size) if origin is None else _arr(origin, float)
        return cls(coef, expo, power, origin, below_zero)

    @classmethod
    def from_terms(cls, coef, expo, constant=0.0, linear=0.0, below_zero=BelowZero.ZERO):
        coef = list(_arr(coef, complex))
        expo = list(_arr(expo, complex))
        power = [0] * len(coef)
        if constant:
            coef.append(constant); expo.append(0); power.append(0)
        if linear:
            coef.append(linear); expo.append(0); power.append(1)
        return cls.build(coef, expo, power, None, below_zero)

    @property
    def constant(self) -> float:
        mask = (self.expo == 0) & (self.power == 0)
        return float(self.coef[mask].sum().real)

    @property
    def linear(self) -> float:
        mask = (self.expo == 0) & (self.power == 1)
        return float(self.coef[mask].sum().real)

    def __len__(self):
        return self.coef.size

    # -- evaluation -------------------------------------------------------

    def complex_formula(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        if self.coef.size == 0:
            return np.zeros(x.shape, dtype=complex)
        u = flat[:, None] - self.origin[None, :]
        E = u * self.expo[None, :]
        # factor out the largest growth so the partial sums cannot overflow early
        shift = np.max(E.real, axis=1, keepdims=True)
        total = (self.coef[None, :] * u ** self.power[None, :] * np.exp(E - shift)).sum(axis=1)
        return (total * np.exp(shift[:, 0])).reshape(x.shape)

    def formula(self, x):
        """The analytic expression at any real ``x`` (the below-zero rule is ignored)."""
        out = self.complex_formula(x).real
        return out if out.ndim else float(out)

    def imag_ratio(self, x) -> float:
        """``|Im| / |Re|`` of the raw complex sum; conjugate-closure diagnostic."""
        total = complex(self.complex_formula(float(x)))
        return abs(total.imag) / (abs(total.real) + 1e-300)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        val = np.asarray(self.formula(np.maximum(x, 0.0)), dtype=float)
        neg = x < 0
        if np.any(neg):
            if self.below_zero is BelowZero.ZERO:
                fill = np.zeros_like(x)
            elif self.below_zero is BelowZero.ONE:
                fill = np.ones_like(x)
            else:
                fill = x
            val = np.where(neg, fill, val)
        return val if x.ndim else float(val)

    # -- calculus ---------------------------------------------------------

    def derivative(self) -> "ExpSum":
        coef, expo, power, origin = [], [], [], []
        for c, lam, p, o in zip(self.coef, self.expo, self.power, self.origin):
            if lam != 0:
                coef.append(c * lam); expo.append(lam); power.append(p); origin.append(o)
            if p > 0:
                coef.append(c * p); expo.append(lam); power.append(p - 1); origin.append(o)
        return ExpSum.build(coef, expo, power, origin, _DERIVATIVE_RULE[self.below_zero]).simplify()

    def antiderivative(self) -> "ExpSum":
        """``x -> int_0^x f(y) dy``; the below-zero rule follows by integrating the rule."""
        if self.below_zero not in _ANTIDERIVATIVE_RULE:
            raise NotImplementedError("antiderivative of an identity-below-zero function")
        coef, expo, power, origin = [], [], [], []
        const = 0j
        for c, lam, p, o in zip(self.coef, self.expo, self.power, self.origin):
            if abs(lam) < EXPONENT_COLLISION_TOL:
                coef.append(c / (p + 1)); expo.append(0); power.append(p + 1); origin.append(o)
                const -= c * (-o) ** (p + 1) / (p + 1)
                continue
            # H(u) = sum_k (-1)^(p-k) p!/k! u^k e^{lam u} / lam^(p-k+1) is an antiderivative of u^p e^{lam u}
            for k in range(p + 1):
                coef.append(c * (-1) ** (p - k) * factorial(p) / factorial(k) / lam ** (p - k + 1))
                expo.append(lam); power.append(k); origin.append(o)
                const -= (c * (-1) ** (p - k) * factorial(p) / factorial(k) / lam ** (p - k + 1)
                          * (-o) ** k * np.exp(-lam * o))
        coef.append(const); expo.append(0); power.append(0); origin.append(0.0)
        return ExpSum.build(coef, expo, power, origin, _ANTIDERIVATIVE_RULE[self.below_zero]).simplify()

    def laplace(self, theta: float) -> float:
        """``int_0^inf exp(-theta x) f(x) dx``; requires theta right of every exponent."""
        if np.any(self.origin != 0):
            raise ValueError("Laplace transform needs origin-zero terms")
        if np.any(self.expo.real >= theta):
            raise ValueError("Laplace transform diverges at theta")
        fact = np.array([factorial(int(p)) for p in self.power], dtype=float)
        return float((self.coef * fact / (theta - self.expo) ** (self.power + 1)).sum().real)

    # -- algebra ----------------------------------------------------------

    def scale(self, k) -> "ExpSum":
        return ExpSum(self.coef * k, self.expo, self.power, self.origin, self.below_zero)

    def with_rule(self, below_zero: BelowZero) -> "ExpSum":
        return ExpSum(self.coef, self.expo, self.power, self.origin, below_zero)

    def add(self, other: "ExpSum", below_zero: BelowZero | None = None) -> "ExpSum":
        return ExpSum(
            np.concatenate([self.coef, other.coef]),
            np.concatenate([self.expo, other.expo]),
            np.concatenate([self.power, other.power]),
            np.concatenate([self.origin, other.origin]),
            below_zero or self.below_zero,
        ).simplify()

    def plus_constant(self, c0: float) -> "ExpSum":
        return self.add(ExpSum.build([c0], [0]))

    def times_exp(self, mu) -> "ExpSum":
        """``x -> exp(mu x) f(x)``."""
        return ExpSum(self.coef * np.exp(mu * self.origin), self.expo + mu, self.power,
                      self.origin, self.below_zero)

    def reflect(self, s: float) -> "ExpSum":
        """Formula of ``x -> f(s - x)``; use through :meth:`formula`."""
        # (s - x - o)^p e^{lam (s - x - o)} = (-1)^p u^p e^{-lam u} with u = x - (s - o)
        return ExpSum(self.coef * (-1.0) ** self.power, -self.expo, self.power,
                      s - self.origin, self.below_zero).simplify()

    def simplify(self) -> "ExpSum":
        """Re-anchor exponent-zero terms at origin 0 and merge them by power."""
        zero = np.abs(self.expo) == 0
        if not zero.any():
            return self
        keep = ~zero
        coef, expo, power, origin = (list(self.coef[keep]), list(self.expo[keep]),
                                     list(self.power[keep]), list(self.origin[keep]))
        merged: dict[int, complex] = {}
        for c, p, o in zip(self.coef[zero], self.power[zero], self.origin[zero]):
            for k in range(p + 1):
                merged[k] = merged.get(k, 0j) + c * comb(int(p), k) * (-o) ** (p - k)
        for k, c in sorted(merged.items()):
            coef.append(c); expo.append(0); power.append(k); origin.append(0.0)
        return ExpSum.build(coef, expo, power, origin, self.below_zero)


def convolve(f: ExpSum, g: ExpSum, c: float) -> ExpSum:
    """``z -> int_c^z f(z - y) g(y) dy`` for ``z >= c >= 0``.

    Both inputs must be pure exponentials anchored at 0.  Coinciding exponents
    give ``(z - c) exp(lambda (z - c))`` terms.
    """
    for h in (f, g):
        if np.any(h.power) or np.any(h.origin):
            raise ValueError("convolve expects power-zero, origin-zero terms")
    coef, expo, power, origin = [], [], [], []
    for fi, lam in zip(f.coef, f.expo):
        for gj, mu in zip(g.coef, g.expo):
            A = fi * gj
            d = mu - lam
            if abs(d) > EXPONENT_COLLISION_TOL:
                # A/d [e^{mu z} - e^{mu c} e^{lam (z - c)}]
                coef += [A / d, -A * np.exp(mu * c) / d]
                expo += [mu, lam]
                power += [0, 0]
                origin += [0.0, c]
            else:
                lam_mid = 0.5 * (lam + mu)
                coef.append(A * np.exp(lam_mid * c)); expo.append(lam_mid); power.append(1); origin.append(c)
    return ExpSum.build(coef, expo, power, origin, BelowZero.ZERO).simplify()
