"""Finite-n six-vertex engine: Bethe states, residue measures and omega.

Points are carried by their logarithm ``L = log zeta`` so that every power
``zeta**x`` is analytic along the way; polynomial data (a, d, Q) are
functions of ``u = zeta**2`` only.  Bethe roots are stored as ``y_j =
lambda_j**2``; the branch chosen for ``lambda_j`` is immaterial because
every convolution pairs ``(zeta/eta)**alpha`` with ``(eta/xi)**alpha``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import kernels as kn
from .errors import (
    ContinuationError,
    DomainError,
    ParameterError,
    PoleProximityError,
)
from .kernels import PSI_PLUS, ModelParams
from .numerics import dense_solve, newton_continuation

log = logging.getLogger(__name__)

TWO_PI_I = 2j * math.pi


# ---------------------------------------------------------------------------
# sectors and a/d data


@dataclass(frozen=True)
class TwistSector:
    kappa: float
    s: int = 0

    def validate(self, n: int):
        if int(self.s) != self.s or self.s < 0 or self.s > n // 2:
            raise ParameterError(f"spin s={self.s} needs 0 <= s <= n/2 = {n // 2}")


@dataclass(frozen=True)
class ADSpec:
    """Inhomogeneities ``tau_j**2``; ``a(u) = prod(1 - q u/tau^2)``, ``d(u) = prod(1 - u/(q tau^2))``."""

    tau2: tuple

    @classmethod
    def staggered(cls, n: int, zeta0: float) -> "ADSpec":
        return cls(tuple(zeta0**2 if j % 2 == 0 else zeta0**-2 for j in range(n)))

    @property
    def n(self) -> int:
        return len(self.tau2)

    @cached_property
    def _t(self):
        return np.asarray(self.tau2, dtype=complex)

    def a(self, u, q):
        u = np.asarray(u, dtype=complex)
        return np.prod(1 - q * u[..., None] / self._t, axis=-1)

    def d(self, u, q):
        u = np.asarray(u, dtype=complex)
        return np.prod(1 - u[..., None] / (q * self._t), axis=-1)

    def dlog_a(self, u, q):
        u = np.asarray(u, dtype=complex)
        return np.sum(1.0 / (u[..., None] - self._t / q), axis=-1)

    def dlog_d(self, u, q):
        u = np.asarray(u, dtype=complex)
        return np.sum(1.0 / (u[..., None] - self._t * q), axis=-1)

    def poly_a(self, q):
        return np.poly(self._t / q) * np.prod(-q / self._t)

    def poly_d(self, q):
        return np.poly(self._t * q) * np.prod(-1.0 / (q * self._t))

    def to_json(self):
        return {"tau2": [[complex(t).real, complex(t).imag] for t in self.tau2]}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(complex(re, im) for re, im in d["tau2"]))


# ---------------------------------------------------------------------------
# Bethe states


@dataclass(frozen=True, eq=False)
class BetheState:
    """A twist sector with its Bethe roots ``y_j = lambda_j**2``."""

    p: float
    sector: TwistSector
    ad: ADSpec
    y: np.ndarray

    @property
    def kappa(self):
        return self.sector.kappa

    @property
    def s(self):
        return self.sector.s

    @property
    def n(self):
        return self.ad.n

    @property
    def M(self):
        return self.y.size

    @property
    def r(self):
        return 1.0 / (self.p + 1.0)

    @property
    def q(self):
        return complex(kn.qpow(1.0, self.p))

    @property
    def c(self):
        """Exponent of the power prefactor of Q."""
        return -self.kappa + self.s

    @cached_property
    def L_roots(self):
        # y on the negative axis: drop a roundoff imaginary part so the branch of lambda is reproducible
        y = self.y.astype(complex)
        on_cut = (y.real < 0) & (np.abs(y.imag) <= 1e-13 * np.abs(y))
        y = np.where(on_cut, y.real + 0j, y)
        return 0.5 * np.log(y)

    @property
    def roots(self):
        return np.exp(self.L_roots)

    # polynomial pieces -------------------------------------------------
    def P(self, u):
        u = np.asarray(u, dtype=complex)
        if self.M == 0:
            return np.ones(u.shape, dtype=complex)
        return np.prod(1 - u[..., None] / self.y, axis=-1)

    def dlog_P(self, u):
        u = np.asarray(u, dtype=complex)
        if self.M == 0:
            return np.zeros(u.shape, dtype=complex)
        return np.sum(1.0 / (u[..., None] - self.y), axis=-1)

    def Q(self, L):
        L = np.asarray(L, dtype=complex)
        return np.exp(self.c * L) * self.P(np.exp(2 * L))

    def T(self, L):
        """Transfer-matrix eigenvalue, a function of ``u = zeta**2`` only."""
        L = np.asarray(L, dtype=complex)
        u = np.exp(2 * L)
        q = self.q
        qc = np.exp(1j * math.pi * self.r * self.c)
        num = self.ad.a(u, q) * qc * self.P(q**2 * u) + self.ad.d(u, q) / qc * self.P(u / q**2)
        return num / self.P(u)

    def T_at_roots(self):
        """Limit of T at its own roots (numerator and Q vanish together)."""
        if self.M == 0:
            return np.zeros(0, dtype=complex)
        y, q = self.y, self.q
        qc = np.exp(1j * math.pi * self.r * self.c)
        A, D = self.ad.a(y, q), self.ad.d(y, q)
        Pp, Pm = self.P(q**2 * y), self.P(y / q**2)
        dnum = (
            A * qc * Pp * (self.ad.dlog_a(y, q) + q**2 * self.dlog_P(q**2 * y))
            + D / qc * Pm * (self.ad.dlog_d(y, q) + self.dlog_P(y / q**2) / q**2)
        )
        dP = np.array([-1.0 / y[j] * np.prod(np.delete(1 - y[j] / y, j)) for j in range(self.M)])
        return dnum / dP

    def afrak(self, L):
        L = np.asarray(L, dtype=complex)
        u = np.exp(2 * L)
        q = self.q
        q2c = np.exp(2j * math.pi * self.r * self.c)
        return self.ad.a(u, q) / self.ad.d(u, q) * q2c * self.P(q**2 * u) / self.P(u / q**2)

    def dafrak_du_at_roots(self):
        y, q = self.y, self.q
        dl = self.ad.dlog_a(y, q) - self.ad.dlog_d(y, q) + q**2 * self.dlog_P(q**2 * y) - self.dlog_P(y / q**2) / q**2
        return self.afrak(self.L_roots) * dl

    def bethe_residual(self) -> float:
        if self.M == 0:
            return 0.0
        return float(np.max(np.abs(1 + self.afrak(self.L_roots))))

    def T_poly(self):
        """T(u) as polynomial coefficients (highest degree first)."""
        q = self.q
        qc = np.exp(1j * math.pi * self.r * self.c)
        pP = np.poly(self.y) * np.prod(-1.0 / self.y) if self.M else np.array([1.0 + 0j])
        scale_p = q ** (2 * np.arange(self.M, -1, -1))
        num = np.polyadd(np.polymul(self.ad.poly_a(q) * qc, pP * scale_p), np.polymul(self.ad.poly_d(q) / qc, pP / scale_p))
        quo, rem = np.polydiv(num, pP)
        return quo

    # serialisation -------------------------------------------------------
    def to_json(self):
        return {
            "p": self.p,
            "sector": {"kappa": self.kappa, "s": self.s},
            "adSpec": self.ad.to_json(),
            "roots": [[complex(v).real, complex(v).imag] for v in self.roots],
            "bethe_residual": self.bethe_residual(),
        }

    @classmethod
    def from_json(cls, d):
        lam = np.array([complex(re, im) for re, im in d["roots"]], dtype=complex)
        return cls(d["p"], TwistSector(d["sector"]["kappa"], d["sector"]["s"]), ADSpec.from_json(d["adSpec"]), lam**2)


def _sort_roots(y):
    lam = np.sqrt(y.astype(complex))
    idx = np.lexsort((np.angle(lam), np.abs(lam)))
    return y[idx]


def solve_bethe(params: ModelParams, sector: TwistSector, ad: Optional[ADSpec] = None, steps: Sequence[int] = (21, 81)) -> BetheState:
    """Bethe roots by continuation from the decoupled system.

    The interaction products ``prod_k (y_k - q^{+-2} y_j)`` are deformed to
    ``q^{+-2t}``; at ``t = 0`` the equations decouple into the degree-n
    polynomial ``-q^{2c+2} a(y) + d(y) = 0``.  Its roots, ordered by
    ``|arg y|`` then ``|log|y||``, seed ``C(n, M)`` candidate paths, tried in
    lexicographic order.  The first one that reaches ``t = 1`` with distinct,
    finite roots is returned.
    """
    if params.n is None:
        raise ParameterError("lattice length n is required")
    n = params.n
    if n > 12:
        raise ParameterError("desk-scale solver supports n <= 12")
    sector.validate(n)
    if ad is None:
        if params.zeta0 is None:
            raise ParameterError("zeta0 (or an explicit ADSpec) is required")
        ad = ADSpec.staggered(n, params.zeta0)
    p = params.p
    q = complex(kn.qpow(1.0, p))
    M = n // 2 - sector.s
    c = -sector.kappa + sector.s
    logB = 1j * math.pi + 2j * math.pi * (c + 1) / (p + 1)
    if M == 0:
        return BetheState(p, sector, ad, np.zeros(0, dtype=complex))

    seeds = np.roots(np.exp(logB) * ad.poly_a(q) + ad.poly_d(q))
    seeds = seeds[np.lexsort((np.abs(np.log(np.abs(seeds))), np.abs(np.angle(seeds))))]

    def pieces(x, t):
        y = np.exp(x)
        qp, qm = q ** (2 * t), q ** (-2 * t)
        dp = y[None, :] - qp * y[:, None]
        dm = y[None, :] - qm * y[:, None]
        np.fill_diagonal(dp, 1.0)
        np.fill_diagonal(dm, 1.0)
        la = np.log(ad.a(y, q)) - np.log(ad.d(y, q)) + logB + np.sum(np.log(dp) - np.log(dm), axis=1)
        return y, dp, dm, np.exp(la), qp, qm

    def F(x, t):
        return 1.0 + pieces(x, t)[3]

    def J(x, t):
        y, dp, dm, a, qp, qm = pieces(x, t)
        off = 1.0 / dp - 1.0 / dm
        np.fill_diagonal(off, 0.0)
        g = -qp / dp + qm / dm
        np.fill_diagonal(g, 0.0)
        np.fill_diagonal(off, ad.dlog_a(y, q) - ad.dlog_d(y, q) + g.sum(axis=1))
        return a[:, None] * off * y[None, :]

    with np.errstate(all="ignore"):
        return _track_subsets(F, J, seeds, M, steps, p, sector, ad)


# Real seeds collide on the real axis and leave it as complex pairs; the
# Jacobian is singular at the collision.  The homotopy is analytic in t, so a
# complex detour t(s) = s + i c sin(pi s) passes around such branch points.
DETOURS = (0.0, 0.15, -0.15)


def _path(nsteps, detour):
    s = np.linspace(0.0, 1.0, nsteps)
    t = s + 1j * detour * np.sin(np.pi * s)
    t[-1] = 1.0
    return t


def _track_subsets(F, J, seeds, M, steps, p, sector, ad):
    for detour, nsteps in itertools.product(DETOURS, steps):
        for sub in itertools.combinations(range(seeds.size), M):
            x0 = np.log(seeds[list(sub)].astype(complex))
            try:
                x = newton_continuation(F, J, x0, _path(nsteps, detour), max_halvings=6, max_iter=12)
            except (ContinuationError, FloatingPointError):
                continue
            if np.abs(x.real).max() > 18:
                continue
            y = np.exp(x)
            if M > 1:
                gap = (np.abs(y[:, None] - y[None, :]) + np.eye(M) * 1e300).min()
                if gap < 1e-8 * np.abs(y).max():
                    continue
            state = BetheState(p, sector, ad, _sort_roots(y))
            if state.bethe_residual() < 1e-12:
                return state
            # polish with plain Newton at t = 1
            try:
                x = newton_continuation(F, J, np.log(state.y), [1.0, 1.0], tol=1e-13)
                state = BetheState(p, sector, ad, _sort_roots(np.exp(x)))
            except ContinuationError:
                continue
            if state.bethe_residual() < 1e-12:
                return state
    raise ContinuationError("no continuation path reached the target Bethe system")


def generic_probes(rng, count: int, spread: float = 0.4, min_gap: float = 0.3):
    """Random probe pairs ``(log zeta, log xi)`` inside the omega0 domain.

    The difference ``2 (log zeta - log xi)`` is kept at angular distance
    at least ``min_gap`` from the positive real axis, and neither point
    sits on the real line.
    """
    out = []
    while len(out) < count:
        Lz = complex(rng.normal(0, spread), rng.uniform(-0.6, 0.6))
        Lx = complex(rng.normal(0, spread), rng.uniform(-0.6, 0.6))
        ang = math.remainder(2 * (Lz - Lx).imag, 2 * math.pi)
        if abs(ang) < min_gap or min(abs(Lz.imag), abs(Lx.imag)) < 0.05:
            continue
        out.append((Lz, Lx))
    return out


# ---------------------------------------------------------------------------
# pair of states: measure, kernels, omega


@dataclass(frozen=True)
class DiscreteMeasure:
    nodes: np.ndarray  # log lambda_j
    weights: np.ndarray

    def integrate(self, values):
        return np.asarray(values) @ self.weights


class LatticePair:
    """Objects built from two Bethe states ``kappa`` (unprimed) and ``kappa'``.

    ``rho = T(kappa')/T(kappa)``, ``h = Q(kappa')/Q(kappa)`` and the measure
    ``dm = d eta^2/eta^2 / (rho (1 + afrak))`` restricted to the roots of the
    unprimed state.
    """

    def __init__(self, state: BetheState, state_prime: BetheState, alpha: float, variant: str = PSI_PLUS, floor: float = kn.DEFAULT_POLE_FLOOR):
        if state.ad is not state_prime.ad and state.ad.tau2 != state_prime.ad.tau2:
            raise ParameterError("both states must share the a/d data")
        if state.p != state_prime.p:
            raise ParameterError("both states must share p")
        kn._check_variant(variant)
        self.st = state
        self.stp = state_prime
        self.alpha = float(alpha)
        self.variant = variant
        self.p = state.p
        self.r = 1.0 / (self.p + 1.0)
        self.shift = 1j * math.pi * self.r  # log q
        self.floor = floor

    def swapped(self) -> "LatticePair":
        return LatticePair(self.stp, self.st, self.alpha, self.variant, self.floor)

    def with_variant(self, variant) -> "LatticePair":
        return LatticePair(self.st, self.stp, self.alpha, variant, self.floor)

    # scalar functions -----------------------------------------------------
    def psi(self, L):
        return kn.psi_l(L, self.alpha, self.variant)

    def K(self, L):
        return kn.k_alpha_l(L, self.alpha, self.p, self.variant)

    def rho(self, L):
        return self.stp.T(L) / self.st.T(L)

    def h(self, L):
        return self.stp.Q(L) / self.st.Q(L)

    def afrak(self, L):
        return self.st.afrak(L)

    @cached_property
    def rho_roots(self):
        st, sp = self.st, self.stp
        with np.errstate(divide="ignore", invalid="ignore"):
            num = sp.T(st.L_roots)
        if sp.M:
            # a root shared by both states makes sp.T a 0/0 there; use its limit instead
            gap = np.abs(st.y[:, None] - sp.y[None, :])
            j, k = np.nonzero(gap <= 1e-10 * np.abs(st.y)[:, None])
            if j.size:
                num = np.array(num, copy=True)
                num[j] = sp.T_at_roots()[k]
        return num / st.T_at_roots()

    @cached_property
    def measure(self) -> DiscreteMeasure:
        st = self.st
        if st.M == 0:
            return DiscreteMeasure(np.zeros(0, complex), np.zeros(0, complex))
        da = st.dafrak_du_at_roots()
        if np.any(np.abs(da * st.y) < 1e-300):
            raise PoleProximityError("derivative of afrak underflows at a Bethe root")
        w = TWO_PI_I / (st.y * self.rho_roots * da)
        return DiscreteMeasure(st.L_roots, w)

    @cached_property
    def K_roots(self):
        L = self.measure.nodes
        return self.K(L[:, None] - L[None, :])

    @cached_property
    def R_dress(self):
        """Dressed resolvent on root space: ``R + K W R = K``."""
        Kmat = self.K_roots
        if Kmat.size == 0:
            return Kmat
        W = self.measure.weights
        A = np.eye(Kmat.shape[0]) + Kmat * W[None, :]
        sol = dense_solve(A, Kmat)
        self.R_dress_condition = sol.condition
        return sol.x

    def dress_residuals(self):
        R, Kmat, W = self.R_dress, self.K_roots, self.measure.weights
        if R.size == 0:
            return 0.0, 0.0
        left = R + (Kmat * W) @ R - Kmat
        right = R + (R * W) @ Kmat - Kmat
        sc = np.abs(Kmat).max()
        return float(np.abs(left).max() / sc), float(np.abs(right).max() / sc)

    # two-point ingredients ----------------------------------------------
    def f_left(self, Lz, Le):
        d = Lz - Le
        return (self.psi(d + self.shift) - self.rho(Lz) * self.psi(d)) / TWO_PI_I

    def f_right(self, Le, Lx):
        d = Le - Lx
        return self.psi(d - self.shift) - self.rho(Lx) * self.psi(d)

    def V_right(self, Le, Lx):
        d = Le - Lx
        ax = self.afrak(Lx)
        return self.psi(d + self.shift) / (1 + ax) + self.psi(d - self.shift) / (1 + 1 / ax) - self.rho(Lx) * self.psi(d)

    def V_left(self, Lz, Le):
        d = Lz - Le
        az = self.afrak(Lz)
        return (self.psi(d + self.shift) / (1 + 1 / az) + self.psi(d - self.shift) / (1 + az) - self.rho(Lz) * self.psi(d)) / TWO_PI_I

    def W(self, Lz, Lx):
        az, ax = self.afrak(Lz), self.afrak(Lx)
        d = Lz - Lx
        return (
            self.psi(d - self.shift) / ((1 + az) * (1 + 1 / ax))
            - self.psi(d + self.shift) / ((1 + 1 / az) * (1 + ax))
            + (self.rho(Lz) / (1 + ax) - self.rho(Lx) / (1 + az)) * self.psi(d)
        )

    def omega0(self, Lz, Lx):
        return kn.omega0_l(Lz - Lx, self.alpha, self.p, complex(self.rho(Lz)), complex(self.rho(Lx)), self.variant)

    def _check_outside(self, L):
        u = np.exp(2 * complex(L))
        for st in (self.st, self.stp):
            if st.M and np.min(np.abs(u - st.y)) < self.floor * max(1.0, abs(u)):
                raise PoleProximityError("probe coincides with a Bethe root")

    def omega(self, Lz, Lx) -> complex:
        """omega(zeta, xi) from the residue (gamma_B) form."""
        Lz, Lx = complex(Lz), complex(Lx)
        self._check_outside(Lz)
        self._check_outside(Lx)
        nodes, w = self.measure.nodes, self.measure.weights
        conv = 0.0
        if nodes.size:
            vl = self.V_left(Lz, nodes)
            vr = self.V_right(nodes, Lx)
            conv = np.sum(vl * w * vr) - (vl * w) @ self.R_dress @ (w * vr)
        quarter = -conv + self.omega0(Lz, Lx) - self.W(Lz, Lx)
        return complex(4 * quarter)

    # inside-contour oracle ------------------------------------------------
    def _singular_u(self, centers):
        uc = np.exp(2 * np.asarray(centers, dtype=complex))
        q2 = np.exp(2 * self.shift)
        sing = [uc, uc * q2, uc / q2]
        if self.stp.M:
            sing.append(np.roots(self.stp.T_poly()))  # poles of 1/rho
        return np.concatenate(sing)

    def circle_nodes(self, centers, M_nodes: int = 64, rel_radius: float = 0.3, extra_centers=()):
        """Trapezoid nodes/weights of ``dm`` on small circles in the ``u = eta**2`` plane.

        Each circle has radius ``rel_radius`` times the distance from its
        centre to the nearest other singularity of the measure or of the
        kernels evaluated between circles.
        """
        centers = np.asarray(centers, dtype=complex)
        sing = self._singular_u(np.concatenate([centers, np.asarray(extra_centers, dtype=complex)]))
        phi = 2 * math.pi * (np.arange(M_nodes) + 0.5) / M_nodes
        nodes, wts = [], []
        for Lc in centers:
            u0 = np.exp(2 * Lc)
            dist = np.abs(sing - u0)
            dist = dist[dist > 1e-12 * abs(u0)]
            z = rel_radius * dist.min() / abs(u0) * np.exp(1j * phi)
            Le = Lc + 0.5 * np.log1p(z)
            du_over_u = 1j * z / (1 + z) * (2 * math.pi / M_nodes)
            nodes.append(Le)
            wts.append(du_over_u / (self.rho(Le) * (1 + self.afrak(Le))))
        return np.concatenate(nodes), np.concatenate(wts)

    def residue_vs_contour(self, f, M_nodes: int = 64, rel_radius: float = 0.3, singular=()):
        """Compare ``sum_j w_j f(lambda_j)`` with the circle quadrature of ``f dm``.

        ``singular`` lists log-points where ``f`` itself is singular (with
        their ``q^{+-2}`` images); the circles stay clear of them.
        """
        nodes, w = self.measure.nodes, self.measure.weights
        cn, cw = self.circle_nodes(nodes, M_nodes, rel_radius, extra_centers=singular)
        res = np.sum(w * f(nodes))
        quad = np.sum(cw * f(cn))
        return abs(res - quad) / max(abs(res), 1e-300), complex(res), complex(quad)

    def omega_inside(self, Lz, Lx, M_nodes: int = 64, rel_radius: float = 0.3) -> complex:
        """omega(zeta, xi) from the contour enclosing roots, zeta and xi.

        The contour is a union of small circles around every Bethe root and
        around ``zeta``, ``xi``; integrals and the dressed-resolvent equation
        are discretised by the periodic trapezoid rule.
        """
        Lz, Lx = complex(Lz), complex(Lx)
        centers = np.concatenate([self.st.L_roots, [Lz, Lx]])
        Le, w = self.circle_nodes(centers, M_nodes, rel_radius)
        Kmat = self.K(Le[:, None] - Le[None, :])
        R = dense_solve(np.eye(Le.size) + Kmat * w[None, :], Kmat).x
        fl = self.f_left(Lz, Le)
        fr = self.f_right(Le, Lx)
        conv = np.sum(fl * w * fr) - (fl * w) @ R @ (w * fr)
        return complex(4 * (-conv + self.omega0(Lz, Lx)))

    # section-3 objects -----------------------------------------------------
    def domain_check(self):
        st, sp = self.st, self.stp
        target = sp.kappa - st.kappa - sp.s + st.s
        if sp.s < st.s or abs(self.alpha - target) > 1e-12:
            raise DomainError("requires alpha = kappa' - kappa - s' + s with s' >= s")
        if abs(np.sin(2 * math.pi * self.r * self.alpha)) < 1e-12:
            raise DomainError("q^alpha - q^-alpha vanishes")

    def g_constant(self):
        st, sp, a = self.st, self.stp, self.alpha
        qp = lambda x: complex(kn.qpow(x, self.p))
        k, kp, s, sp_ = st.kappa, sp.kappa, st.s, sp.s
        return qp(-a) * (qp(a) - qp(k + kp - s - sp_)) * (qp(a) - qp(k - kp - s + sp_)) / (4j * math.pi * (1 + qp(2 * (k - s))))

    def g_left_closed(self, Lx):
        """Closed-form solution of the g_left equation on its domain (psi0 kernel)."""
        self.domain_check()
        st, sp = self.st, self.stp
        delta = 0.0
        if st.s == sp.s:
            delta = complex(np.prod(st.y / sp.y))
        # residue of h psi0 d(eta^2)/eta^2 at eta^2 = infinity enters with a minus sign
        C = 0.5 * (complex(kn.qpow(self.alpha, self.p)) - complex(kn.qpow(-self.alpha, self.p))) * (-1 - delta)
        if abs(C) < 1e-14:
            raise DomainError("degenerate constant C (kappa' = kappa limit)")
        Lx = np.asarray(Lx, dtype=complex)
        return self.g_constant() / C * (self.h(Lx - self.shift) - self.h(Lx + self.shift))

    def g_left_solve(self, Lx):
        """g_left from the linear system on root space, extended to ``xi``.

        The kernel follows the pair's variant; the closed form corresponds to psi0.
        """
        g0 = self.g_constant()
        nodes, w = self.measure.nodes, self.measure.weights
        Lx = np.asarray(Lx, dtype=complex)
        if nodes.size == 0:
            return -np.exp(-self.alpha * Lx) * g0
        Kt = self.K(nodes[None, :] - nodes[:, None])  # K(lambda_k/lambda_i)
        rhs = -np.exp(-self.alpha * nodes) * g0
        g = dense_solve(np.eye(nodes.size) + Kt * w[None, :], rhs).x
        ext = self.K(nodes[None, :] - Lx[..., None])
        return -np.exp(-self.alpha * Lx) * g0 - ext @ (w * g)

    def G_right(self, Le, Lx):
        """G_right(eta, xi) from the gamma_B equation, at arbitrary eta."""
        nodes, w = self.measure.nodes, self.measure.weights
        Le = np.asarray(Le, dtype=complex)
        Lx = complex(Lx)
        if nodes.size == 0:
            return self.V_right(Le, Lx)
        Gn = dense_solve(np.eye(nodes.size) + self.K_roots * w[None, :], self.V_right(nodes, Lx)).x
        return self.V_right(Le, Lx) - self.K(Le[..., None] - nodes[None, :]) @ (w * Gn)

    def moment_residual(self, Lx):
        """Residual of the eta^-alpha moment identity for G_right (contour around roots and xi)."""
        self.domain_check()
        Lx = complex(Lx)
        nodes, w = self.measure.nodes, self.measure.weights
        a, p = self.alpha, self.p
        lhs = -np.exp(-a * Lx) / (1 + self.afrak(Lx))
        if nodes.size:
            lhs += np.sum(w * np.exp(-a * nodes) * self.G_right(nodes, Lx)) / TWO_PI_I
        qa, qm = complex(kn.qpow(a, p)), complex(kn.qpow(-a, p))
        rhs = np.exp(-a * Lx) * (qm - self.rho(Lx)) / (qa - qm)
        return abs(lhs - rhs) / abs(rhs), complex(lhs), complex(rhs)

    # X diagnostics -----------------------------------------------------------
    def U_left(self, Lz, Le):
        st, sp = self.st, self.stp
        s = self.shift
        return (st.Q(Lz - s) * sp.Q(Lz) * self.psi(Lz - Le - s) - st.Q(Lz) * sp.Q(Lz - s) * self.psi(Lz - Le)) / TWO_PI_I

    def U_right(self, Le, Lx):
        st, sp = self.st, self.stp
        s = self.shift
        return st.Q(Lx - s) * sp.Q(Lx) * self.psi(Le - Lx + s) - st.Q(Lx) * sp.Q(Lx - s) * self.psi(Le - Lx)

    def I_term(self, Lz, Lx):
        nodes, w = self.measure.nodes, self.measure.weights
        if nodes.size == 0:
            return 0.0
        ul = self.U_left(Lz, nodes)
        ur = self.U_right(nodes, Lx)
        Hr = ur - self.R_dress @ (w * ur)
        return -np.sum(ul * w * Hr)

    def Z_term(self, Lz, Lx):
        st, sp = self.st, self.stp
        s = self.shift
        # sign fixed by the factorisation of omega0 - W - rho rho (omega0' - W')
        return (
            st.Q(Lx) * sp.Q(Lx - s) * sp.Q(Lz) * st.Q(Lz - s) - sp.Q(Lx) * st.Q(Lx - s) * st.Q(Lz) * sp.Q(Lz - s)
        ) * self.psi(Lz - Lx)

    def X(self, Lz, Lx):
        return self.I_term(Lz, Lx) - self.swapped().I_term(Lz, Lx) + self.Z_term(Lz, Lx)

    def X_prefactor(self, Lz, Lx):
        st, sp = self.st, self.stp
        e = st.s + sp.s - st.kappa - sp.kappa
        return np.exp(self.alpha * (Lz - Lx) + e * (Lz + Lx))

    def diff(self, Lz, Lx):
        """``(omega - rho rho omega_swapped)/4`` evaluated directly."""
        return 0.25 * (self.omega(Lz, Lx) - self.rho(Lz) * self.rho(Lx) * self.swapped().omega(Lz, Lx))


# ---------------------------------------------------------------------------
# diagnostics drivers


@dataclass
class XDiagnostics:
    """Interpolated ``Pol(u, xi^2)`` with ``X = prefactor * Pol``.

    ``coefficients[k]`` multiplies ``(u/radius)**k``; ``scale`` is the size
    of the individual terms entering X on the sampling circle, the natural
    yardstick for cancellations.
    """

    coefficients: np.ndarray
    radius: float
    scale: float
    root_values: np.ndarray
    root_values_prime: np.ndarray
    degree_bound: int
    _y: np.ndarray = field(default=None, repr=False)
    _yp: np.ndarray = field(default=None, repr=False)

    @property
    def beyond_bound(self):
        return self.coefficients[self.degree_bound + 1:]

    def pol(self, u):
        """Pol truncated to its degree bound (the excess is reported by ``beyond_bound``)."""
        c = self.coefficients[: self.degree_bound + 1]
        return np.polyval(c[::-1], np.asarray(u) / self.radius)

    def pol_scale(self, u):
        """Size of the individual terms of Pol at ``u`` (floor: the sampling scale)."""
        t = np.abs(np.asarray(u)[..., None] / self.radius) ** np.arange(self.degree_bound + 1)
        return self.scale * t.sum(axis=-1)

    def relative_root_values(self):
        vals = [np.abs(self.root_values) / self.pol_scale(self._y), np.abs(self.root_values_prime) / self.pol_scale(self._yp)]
        return np.concatenate(vals)


def x_diagnostics(pair: LatticePair, Lx, radius: Optional[float] = None, K: Optional[int] = None) -> XDiagnostics:
    """Reconstruct ``Pol(u, xi^2)`` by a DFT on the circle ``|u| = radius``."""
    st, sp = pair.st, pair.stp
    n = st.n
    if K is None:
        K = 2 * (n + 2)
    if radius is None:
        allr = np.concatenate([st.y, sp.y]) if (st.M + sp.M) else np.array([1.0])
        radius = float(np.exp(np.mean(np.log(np.abs(allr)))))
    Lx = complex(Lx)
    phi = 2 * math.pi * (np.arange(K) + 0.37) / K  # offset keeps samples off the real axis
    Lz = 0.5 * (math.log(radius) + 1j * phi)
    vals = np.empty(K, dtype=complex)
    scale = 0.0
    for j, l in enumerate(Lz):
        pre = pair.X_prefactor(l, Lx)
        parts = (pair.I_term(l, Lx), pair.swapped().I_term(l, Lx), pair.Z_term(l, Lx))
        vals[j] = (parts[0] - parts[1] + parts[2]) / pre
        scale = max(scale, max(abs(v / pre) for v in parts))
    k = np.arange(K)
    coeffs = np.exp(-1j * np.outer(k, phi)) @ vals / K
    bound = n - st.s - sp.s - (1 if pair.variant == PSI_PLUS else 0)
    d = XDiagnostics(coeffs, radius, scale, np.zeros(st.M, complex), np.zeros(sp.M, complex), bound, st.y, sp.y)
    d.root_values = d.pol(st.y) if st.M else d.root_values
    d.root_values_prime = d.pol(sp.y) if sp.M else d.root_values_prime
    return d
