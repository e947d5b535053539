"""Spectrally positive jump-diffusion surplus with phase-type jumps.

The uncontrolled surplus is ``Y_t = -c_Y t + sigma B_t + sum of jumps`` and the
refracted process is ``X_t = Y_t - delta t``.  Both Laplace exponents are
rational functions of the argument, so the equations ``psi(s) = q`` can be
cleared to polynomials and solved exactly via companion-matrix eigenvalues.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import (
    InvalidPhaseType,
    InvalidProblem,
    NoBracket,
    NonDistinctRoots,
    PoleAtTheta,
    SubordinatorPath,
    WrongRootCount,
)

Which = Literal["Y", "X"]

ROOT_DISTINCT_TOL = 1e-6
POLE_TOL = 1e-9


@dataclass(frozen=True)
class PhaseType:
    """Phase-type law ``(alpha, T)``: absorption time of a finite Markov chain."""

    alpha: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).ravel()
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        m = alpha.size
        if T.shape != (m, m):
            raise InvalidPhaseType(f"T must be {m}x{m} to match alpha, got {T.shape}")
        if not np.all(np.isfinite(alpha)) or not np.all(np.isfinite(T)):
            raise InvalidPhaseType("alpha and T must be finite")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise InvalidPhaseType(f"alpha must be a probability vector (sum={alpha.sum()!r})")
        diag = np.diag(T)
        if np.any(diag >= 0):
            raise InvalidPhaseType("T must have a strictly negative diagonal")
        off = T - np.diag(diag)
        if np.any(off < 0):
            raise InvalidPhaseType("T must have nonnegative off-diagonal entries")
        exit_vec = -T.sum(axis=1)
        if np.any(exit_vec < -1e-12):
            raise InvalidPhaseType("rows of T must have nonpositive sums")
        try:
            mean = float(alpha @ np.linalg.solve(-T, np.ones(m)))
        except np.linalg.LinAlgError as exc:
            raise InvalidPhaseType("T is singular (no absorption)") from exc
        if not np.isfinite(mean) or mean <= 0:
            raise InvalidPhaseType(f"mean jump size must be finite and positive, got {mean}")
        alpha.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "T", T)

    @classmethod
    def exponential(cls, rate: float) -> "PhaseType":
        return cls(np.array([1.0]), np.array([[-float(rate)]]))

    @property
    def m(self) -> int:
        return self.alpha.size

    @property
    def exit_vector(self) -> np.ndarray:
        return -self.T.sum(axis=1)

    @property
    def mean(self) -> float:
        return float(self.alpha @ np.linalg.solve(-self.T, np.ones(self.m)))

    def laplace(self, s):
        """``alpha (sI - T)^{-1} t``, i.e. E[exp(-s Z)] for ``Re s`` right of the poles."""
        return _resolvent(self, s, 0)


@dataclass(frozen=True)
class LevyModel:
    c_Y: float
    sigma: float
    kappa: float
    jumps: PhaseType
    delta: float
    mean_jump: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean_jump", self.jumps.mean)

    @property
    def c_X(self) -> float:
        return self.c_Y + self.delta

    @property
    def bounded_variation(self) -> bool:
        return self.sigma == 0.0

    def drift(self, which: Which) -> float:
        return self.c_Y if which == "Y" else self.c_X


def build_model(c_Y, sigma, kappa, phase_type, delta) -> LevyModel:
    if not isinstance(phase_type, PhaseType):
        alpha, T = phase_type
        phase_type = PhaseType(alpha, T)
    if not delta > 0:
        raise InvalidProblem(f"delta must be positive, got {delta}")
    if not sigma >= 0:
        raise InvalidProblem(f"sigma must be nonnegative, got {sigma}")
    if not kappa > 0:
        raise InvalidProblem(f"kappa must be positive, got {kappa}")
    if sigma == 0 and c_Y <= 0:
        raise SubordinatorPath(f"c_Y = {c_Y} with sigma = 0 gives monotone paths")
    return LevyModel(float(c_Y), float(sigma), float(kappa), phase_type, float(delta))


def _resolvent(jumps: PhaseType, s, order: int):
    # order-th derivative of alpha (sI - T)^{-1} t, up to the sign/factorial bookkeeping below
    m = jumps.m
    A = s * np.eye(m, dtype=complex if np.iscomplexobj(s) else float) - jumps.T
    right = np.linalg.solve(A, jumps.exit_vector)
    if order == 0:
        return jumps.alpha @ right
    left = np.linalg.solve(A.T, jumps.alpha)
    if order == 1:
        return -(left @ right)
    return 2.0 * (left @ np.linalg.solve(A, right))


def _check_pole(model: LevyModel, theta):
    if np.iscomplexobj(theta):
        return
    eig = np.linalg.eigvals(model.jumps.T)
    if np.min(np.abs(eig - theta)) < POLE_TOL:
        raise PoleAtTheta(f"theta = {theta} is an eigenvalue of T")


def psi(model: LevyModel, which: Which, theta):
    """Laplace exponent of Y (``which='Y'``) or X (``which='X'``); accepts complex input."""
    _check_pole(model, theta)
    c = model.drift(which)
    return c * theta + 0.5 * model.sigma**2 * theta**2 + model.kappa * (_resolvent(model.jumps, theta, 0) - 1.0)


def psi_derivative(model: LevyModel, which: Which, theta, order: int = 1):
    """Exact first (or second) derivative of ``psi``; ``theta = 0`` gives the value at 0+."""
    _check_pole(model, theta)
    if order == 1:
        return model.drift(which) + model.sigma**2 * theta + model.kappa * _resolvent(model.jumps, theta, 1)
    if order == 2:
        return model.sigma**2 + model.kappa * _resolvent(model.jumps, theta, 2)
    raise ValueError("order must be 1 or 2")


def positive_root(model: LevyModel, which: Which, q: float) -> float:
    """The unique root of ``psi(theta) = q`` on ``(0, inf)``."""
    if not q > 0:
        raise ValueError("q must be positive")
    f = lambda th: psi(model, which, th) - q
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 1e6:
            raise NoBracket(f"no sign change of psi_{which} - q below 1e6")
    root = brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    # one Newton step restores the last bits lost to brentq's stopping rule
    d = psi_derivative(model, which, root)
    if d > 0:
        root -= f(root) / d
    return float(root)


@dataclass(frozen=True)
class RootSet:
    q: float
    which: str
    positive_root: float
    negative_roots: np.ndarray
    residues: np.ndarray
    lead_coefficient: float


def faddeev_leverrier(A: np.ndarray):
    """Characteristic polynomial and adjugate-polynomial matrices of ``A``.

    Returns ``(c, M)`` with ``det(sI - A) = sum_k c[k] s^k`` and
    ``adj(sI - A) = sum_{k=1}^{m} M[k-1] s^(m-k)``.
    """
    m = A.shape[0]
    c = np.zeros(m + 1)
    c[m] = 1.0
    M = []
    Mk = np.zeros_like(A, dtype=float)
    I = np.eye(m)
    for k in range(1, m + 1):
        Mk = A @ Mk + c[m - k + 1] * I
        M.append(Mk)
        c[m - k] = -np.trace(A @ Mk) / k
    return c, M


def cleared_polynomial(model: LevyModel, which: Which, q: float) -> np.ndarray:
    """Coefficients (highest degree first) of ``(psi(s) - q) det(sI - T)``."""
    jumps = model.jumps
    m = jumps.m
    c, M = faddeev_leverrier(jumps.T)
    char = c[::-1]  # highest first
    numer = np.array([jumps.alpha @ Mk @ jumps.exit_vector for Mk in M])  # degree m-1, highest first
    quad = np.array([0.5 * model.sigma**2, model.drift(which), -(model.kappa + q)])
    poly = np.convolve(quad, char)
    poly[-numer.size:] += model.kappa * numer
    if model.sigma == 0:
        poly = poly[1:]  # leading s^(m+2) coefficient is exactly zero
    assert poly.size - 1 == (m + 2 if model.sigma > 0 else m + 1)
    return poly


def _polish(model, which, q, s, steps=2):
    for _ in range(steps):
        d = psi_derivative(model, which, s)
        s = s - (psi(model, which, s) - q) / d
    return s


def negative_roots(model: LevyModel, which: Which, q: float) -> RootSet:
    """All roots of ``psi(s) = q`` with negative real part, plus residues ``-1/psi'(root)``."""
    if not q > 0:
        raise ValueError("q must be positive")
    poly = cleared_polynomial(model, which, q)
    raw = np.roots(poly)
    polished = np.array([_polish(model, which, q, complex(r)) for r in raw])

    diffs = np.abs(polished[:, None] - polished[None, :])
    np.fill_diagonal(diffs, np.inf)
    if diffs.min() < ROOT_DISTINCT_TOL:
        raise NonDistinctRoots(
            f"roots of psi_{which}(s) = {q} are not distinct (min gap {diffs.min():.3g}); perturb q"
        )

    neg = polished[polished.real < 0]
    real_mask = np.abs(neg.imag) <= 1e-10 * np.maximum(np.abs(neg), 1.0)
    real_roots = neg[real_mask].real.astype(complex)
    upper = neg[~real_mask & (neg.imag > 0)]
    roots = np.concatenate([np.sort_complex(real_roots), upper, upper.conj()])

    expected = model.jumps.m + (1 if model.sigma > 0 else 0)
    if roots.size != expected:
        raise WrongRootCount(f"expected {expected} negative roots of psi_{which} = q, found {roots.size}")

    residues = np.array([-1.0 / psi_derivative(model, which, r) for r in roots])
    n_up = upper.size
    if n_up:
        residues[-n_up:] = residues[-2 * n_up:-n_up].conj()
    pos = positive_root(model, which, q)
    return RootSet(
        q=q,
        which=which,
        positive_root=pos,
        negative_roots=roots,
        residues=residues,
        lead_coefficient=1.0 / psi_derivative(model, which, pos),
    )
