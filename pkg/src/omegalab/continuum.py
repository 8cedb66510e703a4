"""Continuum F_alpha, resolvents, Omega and the alpha-shift residual suite.

Functions of ``S`` live on two node sets sharing the real parts of one
uniform grid: the positive axis (``theta_j`` real, carrying the measure
``dS/(S R)`` of the bare resolvent) and the two lines ``theta_j +- i gamma``
that carry the ``*`` measure ``dm``.  Values on the lines come from the
integral equations themselves, so no interpolation is ever needed and
every kernel matrix is Toeplitz in the real part.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional, Sequence

import numpy as np

from . import kernels as kn
from . import nlie
from .errors import DomainError, SingularityError, StripViolationError
from .numerics import DenseLU, LogGrid, edge_integral

log = logging.getLogger(__name__)

TWO_PI_I = 2j * math.pi


def inv_sinh(x):
    return 1.0 / np.sinh(x)


def _leading_power(fam: kn.FourierFamily, upper: bool) -> complex:
    """Coefficient of ``Z^-1`` (upper) or ``Z`` (lower) in the tail of a Fourier family."""
    x0, c = fam.leading(upper)
    if abs(x0 - (1j if upper else -1j)) > 1e-9:
        raise DomainError(f"{fam.name}: leading tail exponent {x0} is not +-i for these parameters")
    return complex(c)


# ---------------------------------------------------------------------------
# state shared by all alpha


class ContinuumData:
    """DDV pair, ``R`` and the two quadratures."""

    def __init__(self, p: float, MR: float, kappa: float, kappa_prime: float, grid: Optional[LogGrid] = None,
                 gamma: float = 0.12, cache_dir=None):
        self.p = float(p)
        self.MR = float(MR)
        self.grid = grid or nlie.default_grid()
        self.sol = nlie.cached_solve_ddv(p, MR, kappa, self.grid, gamma, cache_dir=cache_dir)
        if kappa_prime == kappa:
            self.sol_prime = self.sol
        else:
            self.sol_prime = nlie.cached_solve_ddv(p, MR, kappa_prime, self.grid, gamma, cache_dir=cache_dir)
        self.R = nlie.RFunction(self.sol, self.sol_prime)
        self.measure = nlie.continuum_measure(self.sol, self.R)

    @property
    def free(self) -> bool:
        return self.R.free

    @property
    def theta(self) -> np.ndarray:
        return self.grid.theta

    @property
    def w(self) -> np.ndarray:
        return self.grid.weights

    @cached_property
    def logR_real(self) -> np.ndarray:
        return self.R.log_r_line(0.0)

    @cached_property
    def R_real(self) -> np.ndarray:
        return np.exp(self.logR_real)

    @cached_property
    def D(self) -> np.ndarray:
        """Nystrom weights of ``(1/R - 1) dS/S`` on the axis."""
        return self.w * np.expm1(-self.logR_real)

    @cached_property
    def logR_line(self) -> np.ndarray:
        m = self.measure
        up = self.R.log_r_line(m.gamma)[m.grid_index[: m.n_up]]
        dn = self.R.log_r_line(-m.gamma)[m.grid_index[m.n_up:]]
        return np.concatenate([up, dn])

    def log_r(self, theta):
        return self.R.log_r(theta)

    @property
    def deltaI1(self) -> complex:
        return self.R.deltaI1

    @property
    def deltaIbar1(self) -> complex:
        return self.R.deltaIbar1


# ---------------------------------------------------------------------------
# F tables


@dataclass
class FAlphaTable:
    """``F_alpha(., X)`` on the axis and on the measure lines, with its split."""

    alpha: float
    theta_X: complex
    RX: complex
    F_real: np.ndarray
    Fcorr_real: np.ndarray
    F_line: np.ndarray
    Fcorr_line: np.ndarray

    @property
    def X(self) -> complex:
        return complex(np.exp(self.theta_X))


class AlphaPipeline:
    """Everything that depends on one value of ``alpha``."""

    def __init__(self, data: ContinuumData, alpha: float):
        if not 0 < alpha < 2:
            raise DomainError("continuum pipelines need 0 < alpha < 2")
        self.data = data
        self.alpha = float(alpha)
        p = data.p
        self.V = kn.v_family(alpha, p)
        self.Psi = kn.psi_plus_family(alpha, p)
        self._V = nlie.KernelCache(self.V, data.grid)
        self.v_up = _leading_power(self.V, True)
        self.v_dn = _leading_power(self.V, False)
        self.c_up = _leading_power(self.Psi, True)
        self.c_dn = _leading_power(self.Psi, False)
        self._tables: Dict[complex, FAlphaTable] = {}

    # -- kernel blocks ----------------------------------------------------
    @cached_property
    def V_rr(self) -> np.ndarray:
        return self._V(0.0)

    @cached_property
    def V_lr(self) -> np.ndarray:
        """``V(U_k / S_j)`` for line nodes ``U_k`` against axis nodes ``S_j``."""
        m = self.data.measure
        up = self._V(1j * m.gamma)[m.grid_index[: m.n_up]]
        dn = self._V(-1j * m.gamma)[m.grid_index[m.n_up:]]
        return np.vstack([up, dn])

    @cached_property
    def V_rl(self) -> np.ndarray:
        m = self.data.measure
        up = self._V(-1j * m.gamma)[:, m.grid_index[: m.n_up]]
        dn = self._V(1j * m.gamma)[:, m.grid_index[m.n_up:]]
        return np.hstack([up, dn])

    @cached_property
    def V_ll(self) -> np.ndarray:
        m = self.data.measure
        iu = m.grid_index[: m.n_up]
        idn = m.grid_index[m.n_up:]
        same = self._V(0.0)
        top = np.hstack([same[np.ix_(iu, iu)], self._V(2j * m.gamma)[np.ix_(iu, idn)]])
        bot = np.hstack([self._V(-2j * m.gamma)[np.ix_(idn, iu)], same[np.ix_(idn, idn)]])
        return np.vstack([top, bot])

    @cached_property
    def lu(self) -> DenseLU:
        """Factorised ``I - V (1/R - 1)`` on the axis."""
        A = np.eye(self.data.grid.N) - self.V_rr * self.data.D[None, :]
        return DenseLU(A)

    def _extend(self, rhs_line, f_real):
        """Continue a solution of ``f - V D f = rhs`` to the measure lines."""
        return rhs_line + self.V_lr @ (self.data.D * f_real)

    # -- F_alpha(S, X) ----------------------------------------------------
    def _psi_pm(self, theta):
        if np.any(theta.imag <= 0) or np.any(theta.imag >= math.pi * (self.data.p + 1)):
            raise StripViolationError("Psi^+ needs 0 < arg(S/X) < pi (p+1); probe too close to the axis")
        plus = self.Psi(theta)
        return plus - inv_sinh(theta), plus

    def table(self, theta_X: complex) -> FAlphaTable:
        """Solve the compact-kernel equation for ``F^corr`` at one probe ``X = exp(theta_X)``."""
        theta_X = complex(theta_X)
        key = complex(round(theta_X.real, 13), round(theta_X.imag, 13))
        if key in self._tables:
            return self._tables[key]
        if not -math.pi < theta_X.imag < 0:
            raise StripViolationError("probes need -pi < arg X < 0")
        d = self.data
        logRX = complex(d.log_r(np.array([theta_X]))[0])
        RX = np.exp(logRX)
        sqRX = np.exp(0.5 * logRX)

        def pieces(theta_S, logR_S):
            minus, plus = self._psi_pm(theta_S - theta_X)
            F0 = -np.exp(0.5 * logR_S) * sqRX * inv_sinh(theta_S - theta_X)
            return minus - plus * RX - F0, F0

        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported just below
            base_r, F0_r = pieces(d.theta.astype(complex), d.logR_real)
            base_l, F0_l = pieces(d.measure.theta, d.logR_line)
        if not (np.all(np.isfinite(base_r)) and np.all(np.isfinite(base_l))):
            raise StripViolationError(f"Psi^+ diverges for X = exp({theta_X}): the probe ray is too close "
                                      "to the axis or the measure lines")
        rhs_r = base_r + self.V_rr @ (d.D * F0_r)
        corr_r = self.lu.solve(rhs_r)
        rhs_l = base_l + self.V_lr @ (d.D * F0_r)
        corr_l = self._extend(rhs_l, corr_r)
        tab = FAlphaTable(self.alpha, theta_X, RX, F0_r + corr_r, corr_r, F0_l + corr_l, corr_l)
        self._tables[key] = tab
        return tab

    def eq_right_residual(self, tab: FAlphaTable) -> float:
        """Residual of the uncorrected equation ``F - V (1/R-1) F = Psi^- - Psi^+ R(X)`` on the axis."""
        d = self.data
        minus, plus = self._psi_pm(d.theta - tab.theta_X)
        res = tab.F_real - self.V_rr @ (d.D * tab.F_real) - (minus - plus * tab.RX)
        return float(np.max(np.abs(res)) / np.max(np.abs(tab.F_real)))

    # -- asymptotic coefficient functions -------------------------------
    @cached_property
    def F_minus1(self):
        """``F_{alpha,-1}``: coefficient of ``X`` as ``X -> 0`` (axis, lines)."""
        d = self.data
        S = np.exp(d.theta)
        f = self.lu.solve(-2.0 / S)
        return f, self._extend(-2.0 / d.measure.U, f)

    @cached_property
    def F_plus1(self):
        """``F_{alpha,1}``: coefficient of ``X^-1`` as ``X -> inf``."""
        d = self.data
        S = np.exp(d.theta)
        f = self.lu.solve(2.0 * S)
        return f, self._extend(2.0 * d.measure.U, f)

    def large_s_coefficient(self, F_real, X, RX):
        """``lim_{S->inf} S F(S, X)`` from the equation (exact, no fitting)."""
        d = self.data
        S = np.exp(d.theta)
        integral = edge_integral(d.D / d.w * S * F_real, d.w)
        return X * (self.c_up * (1.0 - RX) - 2.0) + self.v_up * integral

    def small_s_coefficient(self, F_real, X, RX):
        """``lim_{S->0} F(S, X)/S`` from the equation."""
        d = self.data
        S = np.exp(d.theta)
        integral = edge_integral(d.D / d.w / S * F_real, d.w)
        return (2.0 + self.c_dn * (1.0 - RX)) / X + self.v_dn * integral

    # -- resolvents -------------------------------------------------------
    @cached_property
    def bare_real(self) -> np.ndarray:
        """Bare resolvent on the axis nodes, ``R_bare(S_i, S_j)``."""
        return self.lu.solve(self.V_rr)

    @cached_property
    def bare_line(self) -> np.ndarray:
        """Bare resolvent between measure-line nodes."""
        Rrl = self.lu.solve(self.V_rl)
        return self.V_ll + self.V_lr @ (self.data.D[:, None] * Rrl)

    @cached_property
    def dressed(self) -> np.ndarray:
        """``R^dress`` from ``R^dress + R^dress * R = R`` on the line nodes."""
        Rb = self.bare_line
        W = self.data.measure.weights
        M = np.eye(W.size) + W[:, None] * Rb
        # R^d (I + W R) = R  <=>  (I + W R)^T R^d^T = R^T
        lu = DenseLU(M.T)
        self.dressed_condition = lu.condition
        return lu.solve(Rb.T).T

    def dress(self, f_line):
        """``F^dress = F - R^dress * F``."""
        W = self.data.measure.weights
        return f_line - self.dressed @ (W * f_line)

    def dress_by_solve(self, f_line):
        """``F^dress`` from ``(I + R * ) F^dress = F`` (independent of the dressed resolvent)."""
        W = self.data.measure.weights
        A = np.eye(W.size) + self.bare_line * W[None, :]
        return DenseLU(A).solve(f_line)

    def dress_left(self, g_line):
        """Left dressing ``G - G * R^dress``."""
        W = self.data.measure.weights
        return g_line - (g_line * W) @ self.dressed


# ---------------------------------------------------------------------------
# the family of pipelines at alpha, alpha+2p, 2-alpha, 2-alpha-2p


def _u_kernel(Z, X, RZ, RX):
    """``U(Z, X)`` of the second part of Omega."""
    d = Z * Z - X * X
    return 0.25 * ((1 - RZ) * (1 + RX) * (Z * Z + X * X) / d - (1 + RZ) * (1 - RX) * 2 * Z * X / d)


def _rel(*terms):
    terms = [complex(t) for t in terms]
    scale = max(abs(t) for t in terms)
    return abs(sum(terms)) / scale if scale > 0 else 0.0


class ShiftSystem:
    """Identity suite of the continuum alpha-shift relation at one grid level."""

    def __init__(self, data: ContinuumData, alpha: float, include_omega0: bool = False, u_scale: float = 1.0):
        p = data.p
        if alpha + 2 * p >= 2:
            raise DomainError("alpha + 2p must stay below 2")
        self.data = data
        self.alpha = float(alpha)
        self.include_omega0 = include_omega0
        self.u_scale = float(u_scale)
        self._pipes: Dict[float, AlphaPipeline] = {}
        self.t0 = kn.t_a(0, alpha, p)
        self.t1 = kn.t_a(1, alpha, p)
        self.t2 = kn.t_a(2, alpha, p)

    def pipe(self, a: float) -> AlphaPipeline:
        key = round(float(a), 12)
        if key not in self._pipes:
            self._pipes[key] = AlphaPipeline(self.data, key)
        return self._pipes[key]

    @property
    def a(self):
        return self.pipe(self.alpha)

    @property
    def a2p(self):
        return self.pipe(self.alpha + 2 * self.data.p)

    @property
    def b(self):
        return self.pipe(2 - self.alpha)

    @property
    def b2p(self):
        return self.pipe(2 - self.alpha - 2 * self.data.p)

    def R_at(self, theta) -> complex:
        return complex(np.exp(self.data.log_r(np.array([complex(theta)]))[0]))

    # -- H family -------------------------------------------------------
    def H(self, tX) -> complex:
        tab = self.a.table(tX)
        return 2 * self.t1 * self.a.large_s_coefficient(tab.F_real, tab.X, tab.RX)

    def H_dagger(self, tZ) -> complex:
        tab = self.b.table(tZ)
        return 2 * self.t1 * self.b.small_s_coefficient(tab.F_real, tab.X, tab.RX)

    @cached_property
    def H_alpha(self) -> complex:
        d = self.data
        S = np.exp(d.theta)
        f = self.a.F_minus1[0]
        return 2 * self.t1 * (-2.0 + self.a.v_up * edge_integral(d.D / d.w * S * f, d.w))

    # -- Omega^(1) --------------------------------------------------------
    def _star(self, g_line, f_line):
        return np.sum(g_line * self.data.measure.weights * f_line)

    def omega1(self, tZ, tX, shifted=False):
        """``Omega^(1)(Z, X | alpha)`` (``alpha + 2p`` when ``shifted``); two forms."""
        A, B = (self.a2p, self.b2p) if shifted else (self.a, self.b)
        FZ = B.table(tZ).F_line
        FX = A.table(tX).F_line
        W = self.data.measure.weights
        form1 = -(self._star(FZ, FX) - np.sum((FZ * W) @ A.dressed * (W * FX))) / TWO_PI_I
        form2 = -self._star(FZ, A.dress_by_solve(FX)) / TWO_PI_I
        return complex(form1), complex(form2)

    def omega1_right(self, tX) -> complex:
        """``Omega^(1)_1(X | alpha)``."""
        return complex(-self._star(self.b.F_plus1[1], self.a.dress(self.a.table(tX).F_line)) / TWO_PI_I)

    def omega1_left(self, tZ) -> complex:
        """``Omega^(1)_{-1}(Z | 2 - alpha)``."""
        return complex(-self._star(self.a.F_minus1[1], self.b.dress(self.b.table(tZ).F_line)) / TWO_PI_I)

    @cached_property
    def omega1_double(self) -> complex:
        """``Omega^(1)_{1,-1}(alpha)``."""
        return complex(-self._star(self.b.F_plus1[1], self.a.dress(self.a.F_minus1[1])) / TWO_PI_I)

    # -- Omega^(2) --------------------------------------------------------
    def omega0(self, tZ, tX, alpha) -> complex:
        p = self.data.p
        r = 1.0 / (p + 1.0)
        w0 = kn.omega0_l(r * (complex(tZ) - complex(tX)), alpha, p, self.R_at(tZ), self.R_at(tX))
        return complex(w0) / (2.0 * (p + 1.0))

    def omega2(self, tZ, tX, shifted=False) -> complex:
        A = self.a2p if shifted else self.a
        d = self.data
        tab = A.table(tX)
        Z, X = np.exp(complex(tZ)), tab.X
        RZ = self.R_at(tZ)
        S = np.exp(d.theta)
        integrand = _u_kernel(Z, S, RZ, d.R_real) * tab.F_real / d.R_real
        val = self.u_scale * _u_kernel(Z, X, RZ, tab.RX) - edge_integral(integrand, d.w) / (1j * math.pi)
        if self.include_omega0:
            val += self.omega0(tZ, tX, A.alpha)
        return complex(val)

    def _int_plus(self, F_real):
        d = self.data
        return edge_integral((1 + 1 / d.R_real) * F_real, d.w)

    def two_int(self, tX):
        """Both sides of the closed-form integral of ``(1 + 1/R) F``."""
        tab = self.a.table(tX)
        lhs = self._int_plus(tab.F_real) / (4j * math.pi)
        rhs = 0.25 * ((1 + tab.RX) + 2j * self.t0 * (1 - tab.RX))
        return complex(lhs), complex(rhs)

    def omega2_right(self, tX) -> complex:
        """``Omega^(2)_1(X | alpha)`` from the large-Z expansion of the integrand."""
        d = self.data
        tab = self.a.table(tX)
        S = np.exp(d.theta)
        X, RX, dI = tab.X, tab.RX, d.deltaI1
        first = -edge_integral(S * (1 - 1 / d.R_real) * tab.F_real, d.w) / (1j * math.pi)
        second = dI * self._int_plus(tab.F_real) / (4j * math.pi)
        return complex(first + second - 0.25 * (4 * X * (1 - RX) + dI * (1 + RX)))

    def omega2_left(self, tZ) -> complex:
        """``Omega^(2)_{-1}(Z | 2 - alpha)`` from the small-W expansion."""
        d = self.data
        tab = self.b.table(tZ)
        S = np.exp(d.theta)
        Z, RZ, dIb = tab.X, tab.RX, d.deltaIbar1
        integrand = (dIb * (1 + 1 / d.R_real) + 4 * (1 / d.R_real - 1) / S) * tab.F_real
        return complex(0.25 * (dIb * (1 + RZ) + 4 * (1 - RZ) / Z) - edge_integral(integrand, d.w) / (4j * math.pi))

    @cached_property
    def omega2_double(self) -> complex:
        """``Omega^(2)_{1,-1}(alpha)``; the singular ``X -> 0`` pieces are combined through the (1+1/R) integral."""
        d = self.data
        S = np.exp(d.theta)
        f = self.a.F_minus1[0]
        first = -edge_integral(S * (1 - 1 / d.R_real) * f, d.w) / (1j * math.pi)
        return complex(first - 0.5j * self.t0 * d.deltaI1 * d.deltaIbar1)

    # -- Xi family --------------------------------------------------------
    def xi(self, tX) -> complex:
        X, RX = np.exp(complex(tX)), self.R_at(tX)
        return complex((4 * self.t1 * X * (1 + RX) + self.t0 * self.data.deltaI1 * (1 - RX)) / 2j)

    def xi_dagger(self, tZ) -> complex:
        Z, RZ = np.exp(complex(tZ)), self.R_at(tZ)
        return complex((4 * self.t1 / Z * (1 + RZ) + self.t0 * self.data.deltaIbar1 * (1 - RZ)) / 2j)

    def xi_two(self, tZ, tX) -> complex:
        Z, X = np.exp(complex(tZ)), np.exp(complex(tX))
        RZ, RX = self.R_at(tZ), self.R_at(tX)
        val = 2 * self.t1 * (X / Z) * (1 + RZ) * (1 + RX) - ((X / Z) ** 2 * self.t2 + self.t0) * (1 - RZ) * (1 - RX)
        return complex(val / 2j)

    @cached_property
    def xi_const(self) -> complex:
        d = self.data
        return complex((8 * self.t1 - d.deltaIbar1 * d.deltaI1 * self.t0) / 2j)

    # -- full Omega ---------------------------------------------------------
    def omega(self, tZ, tX, shifted=False) -> complex:
        return self.omega1(tZ, tX, shifted)[0] + self.omega2(tZ, tX, shifted)

    def omega_right(self, tX) -> complex:
        return self.omega1_right(tX) + self.omega2_right(tX)

    def omega_left(self, tZ) -> complex:
        return self.omega1_left(tZ) + self.omega2_left(tZ)

    @property
    def omega_double(self) -> complex:
        return self.omega1_double + self.omega2_double

    # -- residuals ------------------------------------------------------------
    def residuals(self, tZ, tX) -> Dict[str, float]:
        """Relative residuals of every identity at one probe pair."""
        Z, X = np.exp(complex(tZ)), np.exp(complex(tX))
        H, Hd, Ha = self.H(tX), self.H_dagger(tZ), self.H_alpha
        out = {}
        l2, r2 = self.two_int(tX)
        out["2int"] = abs(l2 - r2) / max(abs(l2), abs(r2))
        out["tau"] = _rel(self.omega2_right(tX), self.xi(tX), -1j * H)
        out["sigma"] = _rel(self.omega2_left(tZ), self.xi_dagger(tZ), 1j * Hd)
        o1s, o1s_b = self.omega1(tZ, tX, shifted=True)
        o1, o1_b = self.omega1(tZ, tX)
        out["omega1_forms"] = max(abs(o1 - o1_b) / abs(o1), abs(o1s - o1s_b) / abs(o1s))
        ratio = (X / Z) ** 2
        den1 = self.omega1_double + 1j * Ha
        rank1 = (self.omega1_left(tZ) - 1j * Hd) * (self.omega1_right(tX) + 1j * H) / den1
        out["final1"] = _rel(ratio * o1s, -o1, 1j * Hd * H / Ha, rank1)
        o2s, o2 = self.omega2(tZ, tX, shifted=True), self.omega2(tZ, tX)
        out["zeroT"] = _rel(ratio * o2s, -o2, -1j * Hd * H / Ha, -self.xi_two(tZ, tX))
        den = self.omega_double + self.xi_const
        if abs(den) < 1e-8:
            raise SingularityError("alpha-shift denominator Omega_{1,-1} + Xi(alpha) degenerates")
        rank = (self.omega_left(tZ) + self.xi_dagger(tZ)) * (self.omega_right(tX) + self.xi(tX)) / den
        out["alphashift"] = _rel(ratio * (o1s + o2s), -(o1 + o2), rank, -self.xi_two(tZ, tX))
        return out

    # -- bare/dressed resolvent relations ----------------------------------
    def fff_residual(self, tX, window: float = 5.0) -> float:
        d = self.data
        S = np.exp(d.theta)
        X = np.exp(complex(tX))
        Fs = self.a2p.table(tX).F_real
        F = self.a.table(tX).F_real
        term = self.H(tX) * self.a.F_minus1[0] / self.H_alpha
        res = (X / S) ** 2 * Fs - F + term
        m = np.abs(d.theta) <= window
        return float(np.max(np.abs(res[m])) / np.max(np.abs(F[m])))

    def corr_residual(self, tX) -> float:
        tab = self.a2p.table(tX)
        X = tab.X
        lim = X * X * self.a2p.small_s_coefficient(tab.F_real, X, tab.RX)
        target = 2 * self.H(tX) / self.H_alpha
        return abs(lim - target) / abs(target)

    def main_r_residual(self, window: float = 4.0) -> float:
        d = self.data
        S = np.exp(d.theta)
        m = np.abs(d.theta) <= window
        lhs = (S[:, None] ** -2) * self.a2p.bare_real * (S[None, :] ** 2)
        rhs = self.a.bare_real + np.outer(self.a.F_minus1[0], self.b.F_plus1[0]) / (2 * math.pi * self.H_alpha)
        diff = (lhs - rhs)[np.ix_(m, m)]
        return float(np.max(np.abs(diff)) / np.max(np.abs(rhs[np.ix_(m, m)])))

    def main_residual(self, window: float = 4.0) -> float:
        m = self.data.measure
        U = m.U
        sel = np.abs(m.theta.real) <= window
        lhs = (U[:, None] ** -2) * self.a2p.dressed * (U[None, :] ** 2)
        den = TWO_PI_I * (self.omega1_double + 1j * self.H_alpha)
        right = self.a.dress_left(self.b.F_plus1[1])
        rhs = self.a.dressed - np.outer(self.a.dress(self.a.F_minus1[1]), right) / den
        diff = (lhs - rhs)[np.ix_(sel, sel)]
        return float(np.max(np.abs(diff)) / np.max(np.abs(rhs[np.ix_(sel, sel)])))

    def u_prime_residual(self, tZ) -> float:
        """``(1/pi) int U'(Z,S) F_{alpha,-1}(S) dS/(S R) = H^dag(Z) - 2 t1 (1 + R(Z)) / Z``.

        Both sides vanish identically when ``R = 1``; the residual is then
        reported against the scale of ``H^dag``'s largest term.
        """
        d = self.data
        S = np.exp(d.theta)
        Z = np.exp(complex(tZ))
        RZ = self.R_at(tZ)
        den = S * S - Z * Z
        Up = 0.5 * (1 - RZ) * (1 + d.R_real) * S * S / den - 0.5 * (1 + RZ) * (1 - d.R_real) * Z * S / den
        lhs = edge_integral(Up * self.a.F_minus1[0] / d.R_real, d.w) / math.pi
        drive = 2 * self.t1 * (1 + RZ) / Z
        rhs = self.H_dagger(tZ) - drive
        scale = max(abs(lhs), abs(rhs), 1e-300)
        if scale < 1e-12 * abs(drive):
            scale = abs(drive)
        return float(abs(lhs - rhs) / scale)


# ---------------------------------------------------------------------------
# probes and refinement studies


DEFAULT_RAYS = (-0.35, -0.7)
DEFAULT_PAIRS = ((-0.6, 0.4), (0.3, -0.9), (1.0, 0.2), (-1.2, -0.3), (0.5, 1.3))


def probe_pairs(ray: float, pairs: Sequence = DEFAULT_PAIRS):
    return [(complex(a, ray), complex(b, ray)) for a, b in pairs]


@dataclass
class SuiteResult:
    level: int
    ray: float
    residuals: Dict[str, float]
    per_pair: list = field(default_factory=list)


def run_suite(system: ShiftSystem, ray: float, pairs: Sequence = DEFAULT_PAIRS, level: int = 0) -> SuiteResult:
    worst: Dict[str, float] = {}
    rows = []
    for tZ, tX in probe_pairs(ray, pairs):
        res = system.residuals(tZ, tX)
        res["FFF"] = system.fff_residual(tX)
        res["corr"] = system.corr_residual(tX)
        res["Uprime"] = system.u_prime_residual(tZ)
        rows.append((tZ, tX, res))
        for k, v in res.items():
            worst[k] = max(worst.get(k, 0.0), float(v))
    worst["mainR"] = system.main_r_residual()
    worst["main"] = system.main_residual()
    return SuiteResult(level, ray, worst, rows)


CONVERGENT_IDENTITIES = ("2int", "tau", "sigma", "final1", "zeroT", "alphashift", "FFF", "corr", "mainR", "main")


@dataclass
class RefinementStudy:
    """Suites on successive grid levels for every ray.

    ``suites[level][ray]`` holds a :class:`SuiteResult`; ``factor`` compares a
    level with the next finer one, pair by pair.
    """

    levels: Sequence[int]
    rays: Sequence[float]
    suites: Dict[int, Dict[float, SuiteResult]]
    systems: Dict[int, ShiftSystem]

    def finest(self, ray: float) -> SuiteResult:
        return self.suites[self.levels[-1]][ray]

    def factors(self, ray: float, key: str):
        """``r_k / r_{k+1}`` per probe pair between the last two levels (``nan`` with one level)."""
        if len(self.levels) < 2:
            return [math.nan] * len(self.finest(ray).per_pair)
        coarse = self.suites[self.levels[-2]][ray]
        fine = self.suites[self.levels[-1]][ray]
        if key in ("mainR", "main"):
            r0, r1 = coarse.residuals[key], fine.residuals[key]
            return [r0 / r1 if r1 > 0 else math.inf]
        out = []
        for (_, _, a), (_, _, b) in zip(coarse.per_pair, fine.per_pair):
            out.append(a[key] / b[key] if b[key] > 0 else math.inf)
        return out


def refinement_study(p, MR, kappa, kappa_prime, alpha, levels=(0, 1), rays=DEFAULT_RAYS, pairs=DEFAULT_PAIRS,
                     Theta=12.0, N0=512, gamma=0.12, cache_dir=None, **system_kw) -> RefinementStudy:
    suites: Dict[int, Dict[float, SuiteResult]] = {}
    systems: Dict[int, ShiftSystem] = {}
    for level in levels:
        data = ContinuumData(p, MR, kappa, kappa_prime, nlie.default_grid(level, Theta, N0), gamma, cache_dir)
        system = ShiftSystem(data, alpha, **system_kw)
        systems[level] = system
        suites[level] = {ray: run_suite(system, ray, pairs, level) for ray in rays}
    return RefinementStudy(list(levels), list(rays), suites, systems)


def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


def _omega0_or_none(system, tZ, tX):
    # (Z/X)**(2/(p+1)) is real positive for probes on a common ray, where the
    # Mellin-Barnes form of Omega_0 has no continuation
    try:
        return _cplx(system.omega0(tZ, tX, system.alpha))
    except StripViolationError:
        return None


def omega_report(system: ShiftSystem, probes) -> dict:
    """JSON-ready samples of ``Omega`` with its parts, coefficients and the Xi family."""
    d = system.data
    samples = []
    for tZ, tX in probes:
        o1, _ = system.omega1(tZ, tX)
        o2 = system.omega2(tZ, tX)
        entry = {
            "Z": _cplx(np.exp(tZ)),
            "X": _cplx(np.exp(tX)),
            "Omega": _cplx(o1 + o2),
            "Omega1": _cplx(o1),
            "Omega2": _cplx(o2),
            "Omega0": _omega0_or_none(system, tZ, tX),
            "Omega_1(X)": _cplx(system.omega_right(tX)),
            "Omega_-1(Z)": _cplx(system.omega_left(tZ)),
            "H(X)": _cplx(system.H(tX)),
            "Hdag(Z)": _cplx(system.H_dagger(tZ)),
            "Xi(X)": _cplx(system.xi(tX)),
            "Xidag(Z)": _cplx(system.xi_dagger(tZ)),
            "Xi(Z,X)": _cplx(system.xi_two(tZ, tX)),
            "residuals": system.residuals(tZ, tX),
        }
        samples.append(entry)
    return {
        "p": d.p,
        "MR": d.MR,
        "alpha": system.alpha,
        "free": d.free,
        "grid": d.grid.to_json(),
        "include_omega0": system.include_omega0,
        "deltaI1": _cplx(d.deltaI1),
        "deltaIbar1": _cplx(d.deltaIbar1),
        "H(alpha)": _cplx(system.H_alpha),
        "Omega1_{1,-1}": _cplx(system.omega1_double),
        "Omega2_{1,-1}": _cplx(system.omega2_double),
        "Omega_{1,-1}": _cplx(system.omega_double),
        "Xi(alpha)": _cplx(system.xi_const),
        "samples": samples,
    }
