import math

import numpy as np
import pytest

from omegalab import numerics as nm
from omegalab.errors import ContinuationError, FitError, SingularSystemError


@pytest.mark.parametrize("rule", [nm.TRAPEZOID, nm.GAUSS])
def test_log_grid_closed_form(rule):
    # truncation alone costs 2 exp(-Theta), hence Theta = 26 for the bare rule
    g = nm.make_log_grid(26.0, 256, rule)
    S = g.S
    assert abs(g.integrate(1.0 / (S + 1.0 / S)) - math.pi / 2) < 1e-10
    assert g.integrate(np.zeros(g.N)) == 0.0
    assert np.all(np.diff(g.theta) > 0) and np.all(g.weights > 0)


def test_end_corrected_sum_at_theta_20():
    g = nm.make_log_grid(20.0, 256)
    f = 1.0 / (g.S + 1.0 / g.S)
    assert abs(g.integrate(f) - math.pi / 2) > 1e-9
    assert abs(nm.edge_integral(f, g.weights) - math.pi / 2) < 1e-10


def test_log_grid_validation_and_json():
    with pytest.raises(ValueError):
        nm.make_log_grid(1.0, 8)
    with pytest.raises(ValueError):
        nm.make_log_grid(-1.0, 64)
    with pytest.raises(ValueError):
        nm.make_log_grid(1.0, 68, nm.GAUSS)
    g = nm.make_log_grid(5.0, 64)
    back = nm.LogGrid.from_json(g.to_json())
    assert np.array_equal(back.theta, g.theta)
    assert g.refined(2).N == 256


def _gauss_error(rule, N, Theta=3.0):
    # support wider than the grid, so the error is set by the rule rather than by truncation
    g = nm.make_log_grid(Theta, N, rule)
    exact = math.sqrt(math.pi) * math.erf(Theta)
    return abs(g.integrate(np.exp(-(g.theta**2))) - exact)


def test_gauss_legendre_order():
    e1, e2 = _gauss_error(nm.GAUSS, 16), _gauss_error(nm.GAUSS, 32)
    # 8-point panels: asymptotic error ratio 2**16, not yet reached at 2 panels
    assert e1 / e2 > 2**13


def test_midpoint_order():
    e1, e2 = _gauss_error(nm.TRAPEZOID, 64), _gauss_error(nm.TRAPEZOID, 128)
    assert 3.5 < e1 / e2 < 4.5


def test_dense_solve():
    rng = np.random.default_rng(7)
    B = rng.normal(size=(50, 3)) + 1j * rng.normal(size=(50, 3))
    assert np.allclose(nm.dense_solve(np.eye(50), B).x, B, rtol=0, atol=0)
    A = np.eye(50) * 5 + rng.normal(size=(50, 50)) + 1j * rng.normal(size=(50, 50))
    res = nm.dense_solve(A, B)
    assert np.linalg.norm(A @ res.x - B) / np.linalg.norm(B) < 1e-12
    assert res.condition > 1
    lu = nm.DenseLU(A)
    assert np.allclose(lu.solve(B), res.x, rtol=1e-13)


def test_dense_solve_singular():
    A = np.ones((4, 4))
    with pytest.raises(SingularSystemError) as info:
        nm.dense_solve(A, np.ones(4))
    assert info.value.condition > 1e13
    with pytest.raises(ValueError):
        nm.dense_solve(np.ones((2, 3)), np.ones(2))


def test_newton_square_root():
    F = lambda x, t: x**2 - t
    J = lambda x, t: np.diag(2 * x)
    x = nm.newton_continuation(F, J, [1.0], np.linspace(1, 4, 5))
    assert abs(x[0] - 2) < 1e-12


def test_newton_tracks_polynomial_roots():
    # roots of (1-t) (x^3 - 1) + t (x^3 - 2x - 5) tracked elementwise
    c0, c1 = np.array([1, 0, 0, -1.0]), np.array([1, 0, -2.0, -5.0])
    F = lambda x, t: np.polyval((1 - t) * c0 + t * c1, x)
    J = lambda x, t: np.diag(np.polyval(np.polyder((1 - t) * c0 + t * c1), x))
    x0 = np.exp(2j * np.pi * np.arange(3) / 3)
    path = np.linspace(0, 1, 5)
    x = nm.newton_continuation(F, J, x0, path)
    exact = np.roots(c1)
    assert max(min(abs(r - e) for e in exact) for r in x) < 1e-10
    assert len({round(r.real, 6) + 1j * round(r.imag, 6) for r in x}) == 3


def test_newton_singular_path():
    F = lambda x, t: x**2 + t
    J = lambda x, t: np.diag(2 * x)
    with pytest.raises(ContinuationError) as info:
        nm.newton_continuation(F, J, [1j], [1.0, -1.0])
    assert info.value.last_parameter > -1.0


def test_tail_fit_exact_and_parity():
    Z = np.array([10.0, 20.0, 40.0, 80.0])
    fit = nm.tail_fit(Z, 3 / Z + 5 / Z**3, +1, J=2)
    assert np.allclose(fit.coefficients, [3, 5], atol=1e-8)
    assert fit.leading == pytest.approx(3)
    with pytest.raises(FitError):
        nm.tail_fit(Z, 1 / Z + Z**-2.0, +1, J=2)
    even = nm.tail_fit(Z, 1 / Z + Z**-2.0, +1, J=2, odd_only=False)
    assert np.allclose(even.coefficients, [1, 1], atol=1e-8)


def test_tail_fit_left_and_prefactor():
    Z = np.exp(np.linspace(-6, -3, 6) + 0.2j)
    f = np.sqrt(Z + 2) * (2 * Z - 7 * Z**3)
    fit = nm.tail_fit(Z, f, -1, J=2, prefactor=lambda z: np.sqrt(z + 2))
    assert np.allclose(fit.coefficients, [2, -7], atol=1e-8)


def test_edge_integral_removes_tail():
    h = 0.2
    theta = -5 + (np.arange(50) + 0.5) * h
    f = 1.0 / np.cosh(theta)
    plain = np.sum(f) * h
    corrected = nm.edge_integral(f, np.full(50, h))
    assert abs(corrected - math.pi) < 0.01 * abs(plain - math.pi)


def test_richardson():
    vals = [math.pi + 1 / n**2 for n in (4, 8, 16)]
    assert abs(nm.richardson_limit(vals, 2.0, 2) - math.pi) < 1e-3 * abs(vals[-1] - math.pi)
