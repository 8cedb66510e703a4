"""Continuum Matsubara data from the DDV nonlinear integral equation.

Everything lives on a uniform midpoint grid ``theta_j`` in ``theta = log Z``.
The unknown is ``log A`` on the horizontal line ``theta + i*gamma`` just
above the axis that carries the Bethe roots.  Because ``log A`` is
anti-real (``A(conj theta) = 1/conj A(theta)`` for real twist), the lower
boundary values follow by conjugation, and the equation itself continues
``log A`` to any point of the strip ``|Im theta -/+ gamma| < pi p``.

The transfer eigenvalue is represented by a kernel ``1/sinh`` acting on
the same boundary data on two lines ``+-gamma_T``:

    log T(theta) = sum_lines (+-1/(2 pi i)) int L(x) / sinh(theta - x -+ i gamma_T) dx
                   + [log(1 + A(theta))     if Im theta > gamma_T]
                   + [log(1 + 1/A(theta))   if Im theta < -gamma_T]

up to a twist-independent normalisation.  Only differences are exposed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels as kn
from .errors import AxisZeroError, ConvergenceError, ParameterError, StripViolationError
from .numerics import TRAPEZOID, LogGrid, make_log_grid, tail_fit

log = logging.getLogger(__name__)

# spacing rules for the auxiliary lines; see ``RFunction.t_line``
LINE_GAP = 0.25
KERNEL_GAP = 0.12


def toeplitz(values_of, grid: LogGrid, shift: complex = 0.0) -> np.ndarray:
    """Matrix ``M[i, j] = f(theta_i - theta_j + shift)`` on a uniform grid."""
    if grid.rule != TRAPEZOID:
        raise ValueError("Toeplitz assembly needs the uniform trapezoid grid")
    N = grid.N
    vals = np.asarray(values_of(np.arange(-(N - 1), N) * grid.h + shift), dtype=complex)
    idx = np.arange(N)[:, None] - np.arange(N)[None, :] + (N - 1)
    return vals[idx]


def default_grid(level: int = 0, Theta: float = 12.0, N0: int = 512) -> LogGrid:
    """Grid of refinement ``level``.

    Each level doubles the node count and stretches the cutoff by ``sqrt 2``,
    so the step shrinks by ``sqrt 2`` as well.  On these problems the end
    truncation (``~ exp(-Theta)``) dominates long before the step matters,
    and a doubling that kept ``Theta`` fixed would show no convergence.
    The base step ``h = 3/64`` is what the moments of ``log R`` need: their
    error is spectral in ``h`` with a rate set by the line offset ``gamma``.
    """
    stretch = 2.0 ** (0.5 * level)
    return make_log_grid(Theta * stretch, N0 * 2**level)


class KernelCache:
    """Toeplitz matrices of a Fourier family, keyed by the complex shift."""

    def __init__(self, family: kn.FourierFamily, grid: LogGrid):
        self.family = family
        self.grid = grid
        self._mats = {}

    def __call__(self, shift: complex = 0.0) -> np.ndarray:
        key = complex(round(complex(shift).real, 12), round(complex(shift).imag, 12))
        if key not in self._mats:
            self._mats[key] = toeplitz(self.family, self.grid, key)
        return self._mats[key]

    def cross(self, theta_eval) -> np.ndarray:
        """``f(theta_eval[i] - theta_j)`` for scattered evaluation points."""
        te = np.atleast_1d(np.asarray(theta_eval, dtype=complex))
        return self.family(te[:, None] - self.grid.theta[None, :])


# ---------------------------------------------------------------------------
# the DDV solution


@dataclass(frozen=True, eq=False)
class NlieSolution:
    grid: LogGrid
    logA_j: np.ndarray  # log A(theta_j + i gamma)
    kappa: float
    MR: float
    p: float
    gamma: float
    winding: int = 0
    residual: float = float("nan")
    iterations: int = 0
    _kernels: dict = field(default_factory=dict, repr=False, compare=False)

    # -- kernels --------------------------------------------------------
    @property
    def G(self) -> KernelCache:
        if "G" not in self._kernels:
            self._kernels["G"] = KernelCache(kn.ddv_family(self.p), self.grid)
        return self._kernels["G"]

    def driving(self, theta):
        theta = np.asarray(theta, dtype=complex)
        return 2j * math.pi * self.MR * np.sinh(theta) - 4j * math.pi * self.kappa / self.p

    @property
    def L_plus(self) -> np.ndarray:
        """``log(1 + A)`` on the upper line; its conjugate is ``log(1 + 1/A)`` on the lower one."""
        return np.log1p(np.exp(self.logA_j))

    def _check_strip(self, y):
        lim = math.pi * self.p
        if abs(y - self.gamma) >= lim or abs(y + self.gamma) >= lim:
            raise StripViolationError(f"log A cannot be continued to Im theta = {y:.3f} (|y +- gamma| < pi p)")

    # -- continuation ---------------------------------------------------
    def log_a_line(self, y: float) -> np.ndarray:
        """``log A(theta_j + i y)`` from the equation itself."""
        if abs(y - self.gamma) < 1e-14:
            return self.logA_j
        self._check_strip(y)
        Lp = self.L_plus * self.grid.weights
        th = self.grid.theta + 1j * y
        return self.driving(th) - self.G(1j * (y - self.gamma)) @ Lp + self.G(1j * (y + self.gamma)) @ np.conj(Lp)

    def log_a(self, theta) -> np.ndarray:
        """``log A`` at scattered points of the strip."""
        theta = np.atleast_1d(np.asarray(theta, dtype=complex))
        for y in np.unique(np.round(theta.imag, 12)):
            self._check_strip(float(y))
        Lp = self.L_plus * self.grid.weights
        up = self.G.cross(theta - 1j * self.gamma) @ Lp
        dn = self.G.cross(theta + 1j * self.gamma) @ np.conj(Lp)
        return self.driving(theta) - up + dn

    def rhs(self, u) -> np.ndarray:
        Lp = np.log1p(np.exp(u)) * self.grid.weights
        th = self.grid.theta + 1j * self.gamma
        return self.driving(th) - self.G(0.0) @ Lp + self.G(2j * self.gamma) @ np.conj(Lp)

    def equation_residual(self) -> float:
        """Sup-norm residual of the convolution part (the driving term cancels exactly)."""
        drive = self.driving(self.grid.theta + 1j * self.gamma)
        v = self.logA_j - drive
        return float(np.max(np.abs((self.rhs(self.logA_j) - drive) - v)))

    # -- serialisation --------------------------------------------------
    def to_json(self):
        return {
            "grid": self.grid.to_json(),
            "logA": [[float(z.real), float(z.imag)] for z in self.logA_j],
            "kappa": self.kappa,
            "MR": self.MR,
            "p": self.p,
            "gamma": self.gamma,
            "winding": self.winding,
            "residual": self.residual,
            "iterations": self.iterations,
        }

    @classmethod
    def from_json(cls, d):
        arr = np.array(d["logA"], dtype=float)
        return cls(
            grid=LogGrid.from_json(d["grid"]),
            logA_j=arr[:, 0] + 1j * arr[:, 1],
            kappa=float(d["kappa"]),
            MR=float(d["MR"]),
            p=float(d["p"]),
            gamma=float(d["gamma"]),
            winding=int(d.get("winding", 0)),
            residual=float(d.get("residual", "nan")),
            iterations=int(d.get("iterations", 0)),
        )


def _winding(L):
    """Number of branch jumps of the principal ``log(1 + A)`` along the line."""
    jumps = np.diff(L.imag)
    return int(np.sum(np.abs(jumps) > math.pi))


def solve_ddv(
    p: float,
    MR: float,
    kappa: float,
    grid: Optional[LogGrid] = None,
    gamma: float = 0.12,
    damping: float = 0.5,
    max_iter: int = 2000,
    tol: float = 1e-12,
) -> NlieSolution:
    """Damped fixed-point iteration for ``log A`` on the line ``theta + i gamma``."""
    if not MR > 0:
        raise ParameterError("MR must be positive")
    if not 0 < gamma < 0.5 * math.pi * p:
        raise ParameterError("need 0 < gamma < pi p / 2 so that G(theta + 2 i gamma) stays analytic")
    grid = grid or default_grid()
    sol = NlieSolution(grid, np.zeros(grid.N, complex), float(kappa), float(MR), float(p), float(gamma))
    # iterate on the convolution part only: the driving term reaches ~1e6 at the grid ends
    drive = sol.driving(grid.theta + 1j * gamma)
    v = np.zeros(grid.N, complex)
    diff = np.inf
    for it in range(1, max_iter + 1):
        new = sol.rhs(drive + v) - drive
        if not np.all(np.isfinite(new)):
            raise ConvergenceError("DDV iteration produced non-finite values")
        diff = float(np.max(np.abs(new - v)))
        v = v + damping * (new - v)
        if diff < tol:
            break
    else:
        raise ConvergenceError(f"DDV iteration did not converge in {max_iter} steps (last change {diff:.3g})")
    u = drive + v
    gap = np.min(np.abs(1.0 + np.exp(u)))
    if gap < 1e-6:
        raise AxisZeroError(f"|1 + A| = {gap:.2g} on the integration line; twist outside the ground-state window")
    out = NlieSolution(grid, u, float(kappa), float(MR), float(p), float(gamma), _winding(np.log1p(np.exp(u))), 0.0, it)
    object.__setattr__(out, "residual", out.equation_residual())
    log.info("DDV kappa=%g MR=%g: %d iterations, residual %.2e", kappa, MR, it, out.residual)
    return out


def _cache_key(p, MR, kappa, grid, gamma):
    blob = json.dumps([p, MR, kappa, grid.Theta, grid.N, grid.rule, gamma], sort_keys=True)
    return hashlib.sha1(blob.encode()).hexdigest()[:16]


def cached_solve_ddv(p, MR, kappa, grid=None, gamma=0.12, cache_dir=None, **kw) -> NlieSolution:
    """:func:`solve_ddv` with an on-disk JSON cache validated by the stored residual."""
    grid = grid or default_grid()
    cache_dir = os.environ.get("OMEGALAB_CACHE", cache_dir)
    if cache_dir is None:
        return solve_ddv(p, MR, kappa, grid, gamma, **kw)
    path = Path(cache_dir) / f"ddv_{_cache_key(p, MR, kappa, grid, gamma)}.json"
    if path.exists():
        try:
            sol = NlieSolution.from_json(json.loads(path.read_text()))
            if sol.equation_residual() < 1e-10:
                return sol
            log.warning("cached DDV solution %s fails its residual; re-solving", path)
        except (ValueError, KeyError) as exc:
            log.warning("unreadable cache entry %s (%s)", path, exc)
    sol = solve_ddv(p, MR, kappa, grid, gamma, **kw)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sol.to_json()))
    return sol


# ---------------------------------------------------------------------------
# transfer eigenvalue and R


def _inv_sinh(x):
    return 1.0 / np.sinh(x)


def log_t(sol: NlieSolution, theta, gamma_T: Optional[float] = None) -> np.ndarray:
    """``log T`` at scattered points up to a twist-independent constant."""
    theta = np.atleast_1d(np.asarray(theta, dtype=complex))
    ys = np.unique(np.round(theta.imag, 12))
    out = np.empty(theta.shape, dtype=complex)
    for y in ys:
        mask = np.abs(theta.imag - y) < 1e-12
        g = gamma_T if gamma_T is not None else t_line(sol, float(y))
        out[mask] = _log_t_fixed(sol, theta[mask], g)
    return out


def t_line(sol: NlieSolution, y: float) -> float:
    """Height of the auxiliary lines used to evaluate ``log T`` at ``Im theta = y``.

    Prefer lines above ``|y|`` (no extra term); fall back to lines below it.
    Both keep ``LINE_GAP`` from the evaluation point and ``KERNEL_GAP`` from
    the edge of the ``G`` strip used to continue ``log A``.
    """
    lim = math.pi * sol.p - KERNEL_GAP - sol.gamma
    a = abs(y)
    if a + LINE_GAP <= lim:
        return a + LINE_GAP
    if a - LINE_GAP >= sol.gamma and abs(y) + sol.gamma <= math.pi * sol.p - KERNEL_GAP:
        return a - LINE_GAP
    raise StripViolationError(f"no admissible line for log T at Im theta = {y:.3f}")


def _log_t_fixed(sol, theta, g):
    h = sol.grid.weights
    x = sol.grid.theta
    LT = np.log1p(np.exp(sol.log_a_line(g))) * h
    up = _inv_sinh(theta[:, None] - x[None, :] - 1j * g) @ LT
    dn = _inv_sinh(theta[:, None] - x[None, :] + 1j * g) @ np.conj(LT)
    val = (up - dn) / (2j * math.pi)
    y = theta.imag
    hi = y > g
    lo = y < -g
    if np.any(hi | lo):
        la = sol.log_a(theta[hi | lo])
        extra = np.where(y[hi | lo] > g, np.log1p(np.exp(la)), np.log1p(np.exp(-la)))
        val[hi | lo] += extra
    if np.any(np.abs(np.abs(y) - g) < 1e-3):
        raise StripViolationError("log T evaluated on its auxiliary line")
    return val


def _line_moments(sol: NlieSolution, g: float, j: int):
    """Coefficients of ``exp(-+(2j-1) theta)`` in ``log T`` at ``Re theta -> +-inf``."""
    h = sol.grid.weights
    x = sol.grid.theta
    LT = np.log1p(np.exp(sol.log_a_line(g))) * h
    k = 2 * j - 1
    plus = (np.sum(LT * np.exp(k * (x + 1j * g))) - np.sum(np.conj(LT) * np.exp(k * (x - 1j * g)))) / (1j * math.pi)
    minus = -(np.sum(LT * np.exp(-k * (x + 1j * g))) - np.sum(np.conj(LT) * np.exp(-k * (x - 1j * g)))) / (1j * math.pi)
    return complex(plus), complex(minus)


class RFunction:
    """``R = T(kappa') / T(kappa)`` with its asymptotic coefficients."""

    def __init__(self, sol: NlieSolution, sol_prime: NlieSolution, free: bool = False):
        if sol.grid.N != sol_prime.grid.N or sol.gamma != sol_prime.gamma or sol.p != sol_prime.p:
            raise ParameterError("the two DDV solutions must share grid, line and p")
        self.sol = sol
        self.sol_prime = sol_prime
        self.free = free or sol_prime.kappa == sol.kappa
        self._line_cache = {}
        if self.free:
            self.deltaI = [0j, 0j]
            self.deltaIbar = [0j, 0j]
        else:
            g = t_line(sol, 0.0)
            self.deltaI, self.deltaIbar = [], []
            for j in (1, 2):
                a, b = _line_moments(sol_prime, g, j)
                c, d = _line_moments(sol, g, j)
                self.deltaI.append(a - c)
                self.deltaIbar.append(b - d)

    @property
    def deltaI1(self) -> complex:
        return self.deltaI[0]

    @property
    def deltaIbar1(self) -> complex:
        return self.deltaIbar[0]

    @property
    def grid(self) -> LogGrid:
        return self.sol.grid

    def log_r(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=complex))
        if self.free:
            return np.zeros(theta.shape, complex)
        return log_t(self.sol_prime, theta) - log_t(self.sol, theta)

    def log_r_line(self, y: float = 0.0) -> np.ndarray:
        key = round(float(y), 12)
        if key not in self._line_cache:
            self._line_cache[key] = self.log_r(self.grid.theta + 1j * y)
        return self._line_cache[key]

    def __call__(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        th = np.log(Z)
        if np.any(th.imag > 1e-12) or np.any(th.imag <= -0.5 * math.pi):
            raise StripViolationError("R is evaluated on rays with -pi/2 < arg Z <= 0")
        return np.exp(self.log_r(th)).reshape(Z.shape)

    def tail_check(self, y: float = -0.35, window=(8.0, 14.0), J: int = 3):
        """Tail fits of ``log R`` on a ray: exponent, odd/even split and coefficient."""
        t = np.linspace(window[0], window[1], 24)
        out = {}
        for direction in (+1, -1):
            th = direction * t + 1j * y
            lr = self.log_r(th)
            Z = np.exp(th)
            slope = np.polyfit(t, np.log(np.abs(lr)), 1)[0]
            odd = tail_fit(Z, lr, direction, J=2, tol=None)
            full = tail_fit(Z, lr, direction, J=4, odd_only=False, tol=None)
            out[direction] = {
                "exponent": float(-slope),
                "leading": odd.leading,
                "even_over_odd": float(abs(full.coefficients[1]) / max(abs(full.coefficients[0]), 1e-300)),
            }
        return out


def build_r(sol: NlieSolution, sol_prime: NlieSolution) -> RFunction:
    return RFunction(sol, sol_prime)


# ---------------------------------------------------------------------------
# the * measure


@dataclass(frozen=True)
class LineMeasure:
    """Nodes and weights of ``int f dm`` on the two lines ``theta +- i gamma``."""

    theta: np.ndarray  # complex nodes, upper line first
    weights: np.ndarray
    n_up: int
    gamma: float
    grid_index: np.ndarray  # index into the parent grid for each node

    @property
    def U(self) -> np.ndarray:
        return np.exp(self.theta)

    def integrate(self, values) -> complex:
        return np.sum(np.asarray(values) * self.weights, axis=-1)


def continuum_measure(sol: NlieSolution, R: RFunction, prune: float = 1e-18) -> LineMeasure:
    y = sol.gamma
    la = sol.logA_j
    A = np.exp(la)
    if np.min(np.abs(1.0 + A)) < 1e-6:
        raise AxisZeroError("|1 + A| too small on the measure line")
    up_w = sol.grid.weights * (A / (1.0 + A)) / np.exp(R.log_r_line(y))
    dn_w = sol.grid.weights * np.conj(A / (1.0 + A)) / np.exp(R.log_r_line(-y))
    keep = np.nonzero((np.abs(up_w) > prune * np.abs(up_w).max()) | (np.abs(dn_w) > prune * np.abs(dn_w).max()))[0]
    th = sol.grid.theta[keep]
    return LineMeasure(
        theta=np.concatenate([th + 1j * y, th - 1j * y]),
        weights=np.concatenate([up_w[keep], dn_w[keep]]),
        n_up=keep.size,
        gamma=y,
        grid_index=np.concatenate([keep, keep]),
    )
