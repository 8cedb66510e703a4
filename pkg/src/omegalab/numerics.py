"""Grids, dense solves, Newton continuation and asymptotic tail fits."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ContinuationError, FitError, SingularSystemError

log = logging.getLogger(__name__)

TRAPEZOID = "trapezoid"
GAUSS = "gauss-legendre-composite"


@dataclass(frozen=True)
class LogGrid:
    """Nodes ``theta_j = log S_j`` with weights for ``int f(S) dS/S``."""

    theta: np.ndarray
    weights: np.ndarray
    Theta: float
    rule: str = TRAPEZOID

    @property
    def N(self) -> int:
        return self.theta.size

    @property
    def S(self) -> np.ndarray:
        return np.exp(self.theta)

    @property
    def h(self) -> float:
        return float(self.theta[1] - self.theta[0])

    def integrate(self, values, axis=-1):
        return np.tensordot(values, self.weights, axes=([axis], [0]))

    def refined(self, k: int = 1) -> "LogGrid":
        return make_log_grid(self.Theta, self.N * 2**k, self.rule)

    def to_json(self):
        return {"Theta": self.Theta, "N": self.N, "rule": self.rule}

    @classmethod
    def from_json(cls, d):
        return make_log_grid(d["Theta"], d["N"], d.get("rule", TRAPEZOID))


def make_log_grid(Theta: float, N: int, rule: str = TRAPEZOID, order: int = 8) -> LogGrid:
    """Quadrature on ``theta in [-Theta, Theta]`` for ``int_0^inf f(S) dS/S``."""
    if Theta <= 0 or N < 16:
        raise ValueError("need Theta > 0 and N >= 16")
    if rule == TRAPEZOID:
        # nodes at cell midpoints: symmetric, no node at theta = 0 boundary effects
        h = 2.0 * Theta / N
        theta = -Theta + (np.arange(N) + 0.5) * h
        w = np.full(N, h)
    elif rule == GAUSS:
        if N % order:
            raise ValueError(f"N must be a multiple of the panel order {order}")
        x, wx = np.polynomial.legendre.leggauss(order)
        panels = N // order
        edges = np.linspace(-Theta, Theta, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        theta = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        w = (half[:, None] * wx[None, :]).ravel()
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return LogGrid(theta=theta, weights=w, Theta=float(Theta), rule=rule)


@dataclass
class SolveResult:
    x: np.ndarray
    condition: float


def dense_solve(A, B, cond_limit: float = 1e13) -> SolveResult:
    """LU solve of ``A X = B`` with a LAPACK 1-norm condition estimate."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    anorm = np.linalg.norm(A, 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)  # the condition estimate below decides
            lu, piv = sla.lu_factor(A, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:  # pragma: no cover - non-finite input
        raise SingularSystemError(str(exc)) from exc
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularSystemError(f"matrix singular to working precision (cond ~ {cond:.3g})", condition=cond)
    return SolveResult(sla.lu_solve((lu, piv), B), float(cond))


class DenseLU:
    """LU factorisation kept for repeated solves, with the same condition guard."""

    def __init__(self, A, cond_limit: float = 1e13):
        A = np.asarray(A, dtype=complex)
        anorm = np.linalg.norm(A, 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self._lu = sla.lu_factor(A)
        gecon = sla.get_lapack_funcs("gecon", (self._lu[0],))
        rcond, _ = gecon(self._lu[0], anorm, norm="1")
        self.condition = np.inf if rcond == 0 else float(1.0 / rcond)
        if not np.isfinite(self.condition) or self.condition > cond_limit:
            raise SingularSystemError(f"matrix singular to working precision (cond ~ {self.condition:.3g})",
                                      condition=self.condition)

    def solve(self, B):
        return sla.lu_solve(self._lu, np.asarray(B, dtype=complex))


def edge_integral(values, weights, axis=-1):
    """Midpoint-rule sum plus geometric end corrections.

    The missing nodes beyond each end are filled in with ``f_N rho**k``,
    ``rho`` being the ratio of the last two values.  Summing that continuation
    node by node (rather than integrating it) keeps the full-line midpoint
    rule spectrally accurate for integrands decaying like ``exp(-lambda |theta|)``.
    """
    f = np.moveaxis(np.asarray(values, dtype=complex), axis, -1)
    w = np.asarray(weights, dtype=float)
    total = f @ w
    for end, prev in ((-1, -2), (0, 1)):
        fe, fp = f[..., end], f[..., prev]
        h = float(w[end])
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(np.abs(fp) > 0, fe / fp, 0.0)
            ok = np.abs(rho) < 0.999
            tail = np.where(ok, fe * h * rho / (1.0 - np.where(ok, rho, 0.0)), 0.0)
        total = total + tail
    return total


def newton_continuation(
    F: Callable,
    J: Callable,
    x0,
    path: Sequence[float],
    tol: float = 1e-12,
    max_iter: int = 30,
    max_halvings: int = 20,
    cond_limit: float = 1e12,
):
    """Track a root of ``F(x, t) = 0`` along ``path`` (monotone parameter values).

    Each step applies Newton's method starting from the previous solution;
    on failure the step is halved.  The final point is polished until
    ``||F|| < tol``.
    """
    x = np.array(x0, dtype=complex)
    path = list(path)
    t = path[0]

    def newton(x, t):
        for _ in range(max_iter):
            f = F(x, t)
            if not np.all(np.isfinite(f)):
                return None
            if np.linalg.norm(f) < tol:
                return x
            try:
                dx = dense_solve(J(x, t), f, cond_limit=cond_limit).x
            except SingularSystemError:
                return None
            x = x - dx
        return x if np.linalg.norm(F(x, t)) < tol else None

    for t_target in path[1:]:
        dt = t_target - t
        step = dt
        halvings = 0
        while abs(t_target - t) > 1e-15:
            t_new = t + step if abs(step) < abs(t_target - t) else t_target
            x_new = newton(x.copy(), t_new)
            if x_new is None:
                halvings += 1
                step *= 0.5
                if halvings > max_halvings:
                    raise ContinuationError(f"continuation failed near t={t_new}", last_parameter=t)
                continue
            x, t = x_new, t_new
            if halvings:
                step *= 2.0
                halvings = max(0, halvings - 1)
    if np.linalg.norm(F(x, t)) >= tol:
        raise ContinuationError("final residual above tolerance", last_parameter=t)
    return x


@dataclass(frozen=True)
class TailFit:
    """Fit ``f(Z)/prefactor(Z) ~ sum_j c_j Z^(-/+ (2j-1))``."""

    coefficients: np.ndarray
    direction: int
    residual: float
    powers: np.ndarray

    @property
    def leading(self) -> complex:
        return complex(self.coefficients[0])


def tail_fit(
    Z,
    f,
    direction: int = +1,
    J: int = 3,
    prefactor: Optional[Callable] = None,
    odd_only: bool = True,
    tol: Optional[float] = 1e-6,
) -> TailFit:
    """Least-squares fit of the standard asymptotic series.

    ``direction=+1`` means ``log Z -> +inf`` (powers ``Z^-1, Z^-3, ...``);
    ``direction=-1`` means ``log Z -> -inf`` (powers ``Z, Z^3, ...``).
    With ``odd_only=False`` every integer power ``1..J`` in the decaying
    direction is fitted, which is how parity violations are detected.
    """
    if J > 4 and odd_only:
        raise ValueError("J <= 4 for standard-asymptotic fits")
    Z = np.asarray(Z, dtype=complex)
    f = np.asarray(f, dtype=complex)
    if prefactor is not None:
        f = f / prefactor(Z)
    powers = np.arange(1, 2 * J, 2) if odd_only else np.arange(1, J + 1)
    sgn = -1 if direction > 0 else 1
    A = Z[:, None] ** (sgn * powers[None, :])
    scale = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, f, rcond=None)
    coef = coef / scale
    resid = np.linalg.norm(A @ coef - f) / max(np.linalg.norm(f), 1e-300)
    if tol is not None and resid > tol:
        raise FitError(f"tail fit residual {resid:.3g} exceeds {tol:.3g}")
    return TailFit(coefficients=coef, direction=direction, residual=float(resid), powers=powers)


def richardson_limit(values, ratios: float = 2.0, order: int = 1):
    """Richardson extrapolation of a sequence with error ~ r^(-order k)."""
    v = np.asarray(values, dtype=complex)
    fac = ratios**order
    while v.size > 1:
        v = (fac * v[1:] - v[:-1]) / (fac - 1.0)
    return complex(v[0])
