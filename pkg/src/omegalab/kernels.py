"""Closed-form special functions and kernel evaluators.

Conventions used throughout the package:

* The lattice spectral parameter is ``zeta``; the continuum variable is
  ``Z = zeta**(p+1)``, so that ``zeta = Z**(1/(p+1))`` and the lattice shift
  ``zeta -> q*zeta`` with ``q = exp(i*pi/(p+1))`` is the rotation
  ``Z -> Z*exp(i*pi)``.
* Powers are carried through logarithms.  Every ``*_l`` helper takes
  ``L = log(zeta)`` (any branch the caller chooses) so that identities such
  as ``(q*zeta)**alpha = q**alpha * zeta**alpha`` hold exactly.  The public
  wrappers take complex points and use the principal branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import (
    DomainError,
    ParameterError,
    PoleProximityError,
    ResonanceError,
    SingularityError,
    StripViolationError,
)

PSI0 = "psi0"
PSI_PLUS = "psiPlus"
VARIANTS = (PSI0, PSI_PLUS)

DEFAULT_POLE_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ModelParams:
    """Global model parameters.

    ``n``, ``zeta0`` belong to the lattice, ``MR`` to the continuum; both
    groups may be present at once.  Derived quantities are read-only
    properties.
    """

    p: float
    alpha: float
    kappa: float = 0.0
    kappa_prime: float = 0.0
    s: int = 0
    s_prime: int = 0
    n: Optional[int] = None
    zeta0: Optional[float] = None
    MR: Optional[float] = None
    strict_alpha: bool = field(default=True, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        p = self.p
        if not (0.0 < p < 0.5):
            raise ParameterError(f"p must satisfy 0 < p < 1/2, got {p}")
        if self.strict_alpha and not (0.0 <= self.alpha < 1.0):
            raise ParameterError(f"alpha must satisfy 0 <= alpha < 1, got {self.alpha}")
        if self.alpha + 2 * p >= 2:
            raise ParameterError("alpha + 2p must stay below 2")
        for name in ("s", "s_prime"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ParameterError(f"{name} must be a non-negative integer, got {v}")
        if self.n is not None:
            if int(self.n) != self.n or self.n <= 0 or self.n % 2:
                raise ParameterError(f"n must be an even positive integer, got {self.n}")
            for name in ("s", "s_prime"):
                if getattr(self, name) > self.n // 2:
                    raise ParameterError(f"{name} exceeds n/2")
        if self.zeta0 is not None and not self.zeta0 > 0:
            raise ParameterError("zeta0 must be positive")
        if self.MR is not None and not self.MR > 0:
            raise ParameterError("MR must be positive")

    @property
    def q(self) -> complex:
        return qpow(1.0, self.p)

    @property
    def beta2(self) -> float:
        return self.p / (1.0 + self.p)

    @property
    def P_blz(self) -> float:
        return -2.0 * self.kappa * (1.0 - self.beta2)

    def lattice_mr(self) -> Optional[float]:
        """MR implied by the lattice data, ``4 n zeta0**-(p+1) / (2 pi)``."""
        if self.n is None or self.zeta0 is None:
            return None
        return 4.0 * self.n * self.zeta0 ** (-(self.p + 1.0)) / (2.0 * math.pi)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def qpow(x, p):
    """Analytic power ``q**x = exp(i pi x / (p+1))``."""
    return np.exp(1j * np.pi * np.asarray(x) / (p + 1.0))


# ---------------------------------------------------------------------------
# psi and the lattice kernel


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"unknown psi variant {variant!r}; expected one of {VARIANTS}")


def psi_l(L, alpha, variant=PSI_PLUS, floor=None):
    """psi evaluated at ``zeta = exp(L)``; the branch of zeta**alpha follows L."""
    _check_variant(variant)
    L = np.asarray(L, dtype=complex)
    den = np.expm1(2 * L)
    if floor is not None and np.any(np.abs(den) < floor):
        raise PoleProximityError("psi evaluated within the pole floor of zeta**2 = 1")
    za = np.exp(alpha * L)
    out = za / den
    if variant == PSI0:
        out = out + 0.5 * za
    return out


def psi(zeta, alpha, variant=PSI_PLUS, floor=DEFAULT_POLE_FLOOR):
    """psi0 = z^a (z^2+1)/(2(z^2-1)) or psiPlus = z^a/(z^2-1), principal branch."""
    return psi_l(np.log(np.asarray(zeta, dtype=complex)), alpha, variant, floor)


def k_alpha_l(L, alpha, p, variant=PSI_PLUS, floor=None):
    """Lattice kernel ``(psi(q z) - psi(z/q)) / (2 pi i)`` in log form."""
    s = 1j * np.pi / (p + 1.0)
    return (psi_l(L + s, alpha, variant, floor) - psi_l(L - s, alpha, variant, floor)) / (2j * np.pi)


def k_alpha_lattice(zeta, alpha, p, variant=PSI_PLUS, floor=DEFAULT_POLE_FLOOR):
    return k_alpha_l(np.log(np.asarray(zeta, dtype=complex)), alpha, p, variant, floor)


# ---------------------------------------------------------------------------
# continuum kernel and closed-form constants


def t_a(a, alpha, p):
    """``t_a(alpha) = cot(pi/2 (alpha + a(p+1))) / 2``."""
    x = alpha + a * (p + 1.0)
    k = round(x / 2.0)
    if abs(x - 2 * k) < 1e-12:
        raise SingularityError(f"t_{a}({alpha}) sits on a cotangent pole")
    return 0.5 / math.tan(0.5 * math.pi * x)


def cal_k_l(theta, alpha, p):
    """Continuum kernel at ``Z = exp(theta)``."""
    r = 1.0 / (p + 1.0)
    return 2.0 * r * k_alpha_l(r * np.asarray(theta, dtype=complex), alpha, p)


def cal_k(Z, alpha, p, floor=DEFAULT_POLE_FLOOR):
    Z = np.asarray(Z, dtype=complex)
    theta = np.log(Z)
    r = 1.0 / (p + 1.0)
    den = np.expm1(2 * r * (theta + np.array([[1j * np.pi], [-1j * np.pi]])))
    if np.any(np.abs(den) < floor):
        raise PoleProximityError("continuum kernel evaluated near its pole at Z = -1")
    return cal_k_l(theta, alpha, p)


def kernel_eigenvalue(k, alpha, p):
    """Eigenvalue of ``I - K_alpha`` on the power ``S**k``."""
    k = complex(k)
    den = np.sin(0.5 * np.pi * (k * (p + 1.0) - alpha))
    if abs(den) < 1e-13:
        raise ResonanceError(f"eigenvalue denominator vanishes at k={k}")
    return 2.0 * np.sin(0.5 * np.pi * (p * k - alpha)) * np.cos(0.5 * np.pi * k) / den


def shift_amp(alpha, p):
    """Amplitude of the rank-one term generated by ``alpha -> alpha + 2p``."""
    return 2.0 / (math.pi * (p + 1.0)) * math.sin(math.pi * (2.0 - alpha) / (p + 1.0))


# ---------------------------------------------------------------------------
# meromorphic Fourier family


class FourierFamily:
    r"""Integrals ``\int e^{i x theta} N(x) / (sinh(pi/2 (p x + i beta)) cosh(pi x/2)) dx``.

    ``N`` is entire.  ``decay`` gives the exponential decay rates of the
    integrand at ``x -> -inf`` and ``x -> +inf`` for real ``theta``; the
    imaginary part of ``theta`` shifts them.  Two evaluators are provided:
    midpoint quadrature (any ``theta`` in the strip) and the residue series
    (``|Re theta|`` large, where quadrature would lose relative accuracy).
    """

    series_switch = 2.0

    def __init__(self, numerator: Callable, p: float, beta: float, decay, name="kernel"):
        self.N = numerator
        self.p = float(p)
        self.beta = float(beta)
        self.decay = tuple(float(d) for d in decay)
        self.name = name
        self._removable_zero = abs(beta) < 1e-15
        self._poles_cache = {}

    # -- pole bookkeeping -------------------------------------------------
    def poles(self, upper: bool, depth: float):
        """Poles with ``0 < |Im x| <= depth`` on the requested side, with residues."""
        key = (upper, round(depth, 6))
        if key in self._poles_cache:
            return self._poles_cache[key]
        p, b = self.p, self.beta
        out = []
        if upper:
            ns = range(1, int(math.ceil((depth * p + b) / 2)) + 2)
            ms = range(0, int(math.ceil((depth - 1) / 2)) + 2)
        else:
            hi = -1 if self._removable_zero else 0
            ns = range(hi, -int(math.ceil(depth * p / 2)) - 3, -1)
            ms = range(-1, -int(math.ceil((depth + 1) / 2)) - 3, -1)
        sinh_poles = [(1j * (2 * n - b) / p, n) for n in ns]
        cosh_poles = [(1j * (2 * m + 1), m) for m in ms]
        sinh_poles = [(x, n) for x, n in sinh_poles if (x.imag > 0) == upper and abs(x.imag) > 0]
        for xs, _ in sinh_poles:
            for xc, _ in cosh_poles:
                if abs(xs - xc) < 1e-7:
                    raise ResonanceError(f"{self.name}: double pole at {xs}; residue series unavailable")
        for x, n in sinh_poles:
            res = self.N(x) / ((0.5 * math.pi * p) * (-1) ** n * np.cosh(0.5 * math.pi * x))
            out.append((x, complex(res)))
        for x, m in cosh_poles:
            res = self.N(x) / (np.sinh(0.5 * math.pi * (p * x + 1j * b)) * (0.5 * math.pi) * 1j * (-1) ** m)
            out.append((x, complex(res)))
        out.sort(key=lambda t: abs(t[0].imag))
        self._poles_cache[key] = out
        return out

    def leading(self, upper: bool):
        """``(x0, c)`` with ``I(theta) ~ c exp(i x0 theta)`` as ``Re theta -> +inf`` (upper) or ``-inf``."""
        x0, res = self.poles(upper, 6.0)[0]
        sign = 2j * math.pi if upper else -2j * math.pi
        return x0, sign * res

    def pole_distance(self):
        p, b = self.p, self.beta
        cands = [1.0, (2 - b) / p]
        if not self._removable_zero:
            cands.append(b / p)
        else:
            cands.append(2 / p)
        return min(c for c in cands if c > 0)

    # -- evaluators -------------------------------------------------------
    def integrand(self, x):
        return self.N(x) / (np.sinh(0.5 * math.pi * (self.p * x + 1j * self.beta)) * np.cosh(0.5 * math.pi * x))

    def quad(self, theta, tol_exp=38.0, max_nodes=400000):
        theta = np.atleast_1d(np.asarray(theta, dtype=complex))
        im = theta.imag
        rate_minus = self.decay[0] - im.max()
        rate_plus = self.decay[1] + im.min()
        if rate_minus <= 1e-3 or rate_plus <= 1e-3:
            raise StripViolationError(f"{self.name}: Fourier integral diverges for Im theta in [{im.min()}, {im.max()}]")
        d = 0.9 * self.pole_distance()
        re_max = float(np.abs(theta.real).max())
        h = 2 * math.pi * d / (tol_exp + d * re_max + 2.0)
        lo = -(tol_exp + 2) / rate_minus
        hi = (tol_exp + 2) / rate_plus
        n = int(math.ceil((hi - lo) / h))
        if n > max_nodes:
            raise StripViolationError(f"{self.name}: quadrature needs {n} nodes; point too close to strip edge")
        x = lo + (np.arange(n) + 0.5) * h
        fx = self.integrand(x) * h
        out = np.empty(theta.shape, dtype=complex)
        chunk = max(1, int(2e7 // n))
        for i in range(0, theta.size, chunk):
            out[i:i + chunk] = np.exp(1j * np.outer(theta[i:i + chunk], x)) @ fx
        return out

    def series(self, theta, tol_exp=38.0):
        theta = np.atleast_1d(np.asarray(theta, dtype=complex))
        out = np.zeros(theta.shape, dtype=complex)
        for upper in (True, False):
            mask = theta.real > 0 if upper else theta.real <= 0
            if not mask.any():
                continue
            th = theta[mask]
            rmin = float(np.abs(th.real).min())
            if rmin <= 0:
                raise StripViolationError(f"{self.name}: residue series needs Re theta != 0")
            depth = (tol_exp + 2) / rmin
            sign = 2j * math.pi if upper else -2j * math.pi
            acc = np.zeros(th.shape, dtype=complex)
            for x0, res in self.poles(upper, depth):
                acc += res * np.exp(1j * x0 * th)
            out[mask] = sign * acc
        return out

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=complex)
        shape = theta.shape
        th = theta.ravel()
        out = np.empty(th.shape, dtype=complex)
        far = np.abs(th.real) >= self.series_switch
        if far.any():
            try:
                out[far] = self.series(th[far])
            except ResonanceError:
                out[far] = self.quad(th[far])
        if (~far).any():
            near = th[~far]
            uniq, inv = np.unique(np.round(near, 14), return_inverse=True)
            out[~far] = self.quad(uniq)[inv]
        return out.reshape(shape)


def ddv_family(p):
    num = lambda k: np.sinh(0.5 * np.pi * np.asarray(k) * (1.0 - p)) / (4 * np.pi)
    rate = 0.5 * np.pi * (p + 1.0) - 0.5 * np.pi * (1.0 - p)  # = pi p
    return FourierFamily(num, p, 0.0, (rate, rate), name="G")


def v_family(alpha, p):
    num = lambda x: np.sinh(0.5 * np.pi * ((1.0 - p) * np.asarray(x) - 1j * alpha)) / (4 * np.pi)
    return FourierFamily(num, p, alpha, (np.pi * p, np.pi * p), name="V")


def psi_plus_family(alpha, p):
    if alpha <= 0 or alpha >= 2:
        raise DomainError("Psi^+ needs 0 < alpha < 2 (pole on the integration line otherwise)")
    num = lambda x: np.exp(0.5 * np.pi * ((p + 1.0) * np.asarray(x) + 1j * alpha)) / 4j
    return FourierFamily(num, p, alpha, (np.pi * (p + 1.0), 0.0), name="Psi+")


def ddv_kernel_g(Z, p):
    """DDV kernel ``G(Z)``; real and even in ``log Z`` on the positive axis."""
    theta = np.log(np.asarray(Z, dtype=complex))
    return ddv_family(p)(theta)


def v_alpha(Z, alpha, p):
    """Free resolvent kernel ``V_alpha(Z)`` (the resolvent of K_alpha at R = 1)."""
    theta = np.log(np.asarray(Z, dtype=complex))
    return v_family(alpha, p)(theta)


def psi_cont_pm(S, alpha, p, sign=+1):
    """``Psi^+`` as a full-line Fourier integral and ``Psi^- = Psi^+ - 2S/(S^2-1)``.

    Converges for ``0 < arg S < pi (p+1)``.
    """
    S = np.asarray(S, dtype=complex)
    theta = np.log(S)
    return psi_cont_pm_l(theta, alpha, p, sign)


def psi_cont_pm_l(theta, alpha, p, sign=+1, family=None):
    theta = np.asarray(theta, dtype=complex)
    if np.any(theta.imag <= 0) or np.any(theta.imag >= np.pi * (p + 1)):
        raise StripViolationError("Psi^+ needs 0 < arg S < pi (p+1)")
    fam = family or psi_plus_family(alpha, p)
    val = fam(theta)
    if sign < 0:
        val = val - 1.0 / np.sinh(theta)
    return val


# ---------------------------------------------------------------------------
# delta^- delta^- Delta^{-1} psi_+ (Mellin--Barnes)


def _mb_numerator(a, p, rho_z, rho_x):
    return (qpow(a, p) - rho_z) * (qpow(-a, p) - rho_x)


def _mb_ratio(a, p, rho_z, rho_x):
    """``N(a)/(q**a - q**-a)`` without forming the large power."""
    a = np.asarray(a, dtype=complex)
    big = (-a.imag) >= 0  # |q**a| >= 1
    e = qpow(np.where(big, -a, a), p)  # the small one of q**(+-a)
    out_big = (1.0 - rho_z * e) * (e - rho_x) / (1.0 - e * e)
    out_small = (e - rho_z) * (1.0 - rho_x * e) / (e * e - 1.0)
    return np.where(big, out_big, out_small)


def _mb_log_w(Lx):
    Lw = 2 * Lx - 1j * np.pi
    k = np.round(Lw.imag / (2 * np.pi))
    return Lw - 2j * np.pi * k


def _resonance_points(alpha, p, kmax=60):
    return [(0.5 * (alpha - k * (p + 1.0)), k) for k in range(-kmax, kmax + 1)]


def _mb_contour(alpha, p):
    bad = [0.0, 1.0] + [s for s, k in _resonance_points(alpha, p) if 0 < s < 1]
    bad = sorted(set(round(b, 14) for b in bad))
    gaps = [(b - a, 0.5 * (a + b)) for a, b in zip(bad[:-1], bad[1:])]
    gap, c = max(gaps)
    if gap < 1e-6:
        raise ResonanceError("no resonance-free Mellin contour in (0, 1)")
    return c, 0.5 * gap


def omega0_l(Lx, alpha, p, rho_z=1.0, rho_x=1.0, variant=PSI_PLUS):
    r"""``\delta^-_\zeta \delta^-_\xi \Delta^{-1}_\zeta \psi(x)`` for ``x = zeta/xi = exp(Lx)``.

    ``Delta^{-1}`` acts diagonally on powers, ``x**a -> x**a/(q**a - q**-a)``,
    and ``delta^-`` multiplies a power by ``(q**a - rho)``.  The psiPlus
    seed is expanded by a Mellin--Barnes integral, which continues the
    power series beyond ``|x| < 1``.  Requires ``0 < Im(2 Lx) < 2 pi`` after
    reduction mod ``2 pi`` (i.e. ``x**2`` off the positive axis).
    """
    Lx = complex(Lx)
    Lw = _mb_log_w(Lx)
    margin = np.pi - abs(Lw.imag)
    if margin < 0.02:
        raise StripViolationError("Mellin-Barnes integral needs x**2 away from the positive real axis")
    c, d = _mb_contour(alpha, p)

    def integrand(t):
        s = c + 1j * t
        a = alpha - 2 * s
        # the factors below grow like exp(|t|) separately; combine them scaled
        sg = np.where(t >= 0, 1.0, -1.0)
        e = np.exp(sg * 1j * np.pi * s)  # |e| <= 1
        log_inv_sin = np.log(2j * sg * np.pi) + sg * 1j * np.pi * s - np.log(e * e - 1.0)
        num_over_den = _mb_ratio(a, p, rho_z, rho_x)
        return -np.exp(log_inv_sin + alpha * Lx - s * Lw) * num_over_den

    h = 2 * np.pi * 0.9 * d / (38.0 + 0.9 * d * abs(Lw.real) + 4.0)
    T = 40.0 / margin + abs(c * Lw.real) / margin
    n = int(math.ceil(T / h))
    t = (np.arange(-n, n + 1)) * h
    val = np.sum(integrand(t)) * h / (2 * np.pi)
    if variant == PSI0:
        a = alpha
        val += 0.5 * np.exp(alpha * Lx) * _mb_numerator(a, p, rho_z, rho_x) / (qpow(a, p) - qpow(-a, p))
    return complex(val)


def omega0_series_l(Lx, alpha, p, rho_z=1.0, rho_x=1.0, terms=200, variant=PSI_PLUS):
    """Residue-sum oracle for :func:`omega0_l` at ``|x| < 1``.

    Power-series terms plus the resonance residues at ``a = k(p+1)`` that
    lie to the left of the Mellin contour.
    """
    Lx = complex(Lx)
    if Lx.real >= 0:
        raise DomainError("series oracle converges only for |x| < 1")
    Lw = _mb_log_w(Lx)
    c, _ = _mb_contour(alpha, p)
    m = np.arange(terms)
    a = alpha + 2 * m
    den = qpow(a, p) - qpow(-a, p)
    if np.any(np.abs(den) < 1e-12):
        raise ResonanceError("series term hits a resonance")
    val = -np.sum(np.exp(a * Lx) * _mb_numerator(a, p, rho_z, rho_x) / den)
    for sk, k in _resonance_points(alpha, p, kmax=terms):
        if sk >= c:
            continue
        if abs(sk - round(sk)) < 1e-12:
            raise ResonanceError("resonance collides with a series pole")
        ak = k * (p + 1.0)
        nk = _mb_numerator(ak, p, rho_z, rho_x)
        val += (np.pi / np.sin(np.pi * sk)) * np.exp(alpha * Lx - sk * Lw) * nk * (p + 1.0) * (-1) ** k / (4j * np.pi)
    if variant == PSI0:
        val += 0.5 * np.exp(alpha * Lx) * _mb_numerator(alpha, p, rho_z, rho_x) / (qpow(alpha, p) - qpow(-alpha, p))
    return complex(val)


def delta_inv_psi(zeta, xi, alpha, p, rho_zeta=1.0, rho_xi=1.0, variant=PSI_PLUS):
    """Public wrapper of :func:`omega0_l` with principal logarithms.

    ``rho_zeta``/``rho_xi`` may be numbers or callables of the point.
    """
    rz = rho_zeta(zeta) if callable(rho_zeta) else rho_zeta
    rx = rho_xi(xi) if callable(rho_xi) else rho_xi
    Lx = np.log(complex(zeta)) - np.log(complex(xi))
    return omega0_l(Lx, alpha, p, rz, rx, variant)
