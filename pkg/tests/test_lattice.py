import json

import numpy as np
import pytest

from omegalab import kernels as kn
from omegalab import lattice as lt
from omegalab.errors import DomainError, ParameterError, PoleProximityError


def _state(n, kappa, s=0, p=0.3, zeta0=1.6):
    params = kn.ModelParams(p=p, alpha=0.4, n=n, zeta0=zeta0)
    ad = lt.ADSpec.staggered(n, zeta0)
    return lt.solve_bethe(params, lt.TwistSector(kappa, s), ad)


@pytest.fixture(scope="module")
def pair4():
    return lt.LatticePair(_state(4, 0.1), _state(4, -0.15), 0.4)


def test_n2_closed_form():
    st = _state(2, 0.12)
    q = st.q
    q2c = np.exp(2j * np.pi * st.r * st.c)
    # one root: the P-ratio collapses to -q^2, leaving q^(2c+2) a(y) = d(y)
    quad = q2c * q**2 * st.ad.poly_a(q) - st.ad.poly_d(q)
    cands = np.roots(quad)
    assert st.M == 1
    assert np.min(np.abs(cands - st.y[0])) < 1e-12 * abs(st.y[0])


@pytest.mark.parametrize("n,s", [(2, 0), (4, 0), (4, 1), (6, 0), (6, 2)])
def test_root_count_and_residual(n, s):
    st = _state(n, 0.05, s)
    assert st.M == n // 2 - s
    assert st.bethe_residual() < 1e-12


def test_no_roots_sector():
    st = _state(4, 0.2, s=2)
    L = np.array([0.3 + 0.2j, -0.5j])
    assert st.M == 0
    assert np.allclose(st.Q(L), np.exp(st.c * L))


def test_q_vanishes_at_roots_and_t_regular():
    st = _state(4, 0.1)
    assert np.max(np.abs(st.Q(st.L_roots))) < 1e-12
    # T is a polynomial in zeta^2: its limit at the roots is the polynomial value there
    assert np.allclose(st.T_at_roots(), np.polyval(st.T_poly(), st.y), rtol=1e-10)
    L = np.array([0.2 + 0.3j, -0.4 + 0.1j])
    u = np.exp(2 * L)
    q = st.q
    qc = np.exp(1j * np.pi * st.r * st.c)
    lhs = st.T(L) * st.Q(L)
    rhs = st.ad.a(u, q) * st.Q(L + 1j * np.pi * st.r) + st.ad.d(u, q) * st.Q(L - 1j * np.pi * st.r)
    assert np.allclose(lhs, rhs, rtol=1e-12)
    assert np.allclose(qc * qc, np.exp(2j * np.pi * st.r * st.c))


def test_roots_continuous_in_kappa():
    base = _state(6, 0.1).y
    moves = [np.max(np.abs(_state(6, 0.1 + d).y - base)) for d in (1e-5, 2e-5)]
    assert 0 < moves[0] < 1e-3
    assert moves[1] / moves[0] == pytest.approx(2.0, rel=1e-3)


def test_same_state_ratios_trivial():
    st = _state(4, 0.1)
    pair = lt.LatticePair(st, st, 0.4)
    L = np.array([0.3 + 0.2j, -0.2 + 0.5j])
    assert np.allclose(pair.rho(L), 1.0) and np.allclose(pair.h(L), 1.0)


def test_afrak_minus_one_and_h_structure(pair4):
    st, sp = pair4.st, pair4.stp
    assert np.allclose(pair4.afrak(st.L_roots), -1.0, atol=1e-12)
    # h zeta^{-(c'-c)} is a rational function of zeta^2
    L = np.array([0.2 + 0.1j, -0.3 + 0.4j])
    stripped = pair4.h(L) * np.exp(-(sp.c - st.c) * L)
    assert np.allclose(stripped, pair4.h(L + 1j * np.pi) * np.exp(-(sp.c - st.c) * (L + 1j * np.pi)))


def test_measure_matches_contour(pair4):
    f = lambda L: np.exp(0.7 * L) / (2.0 + np.exp(2 * L))
    rel, res, quad = pair4.residue_vs_contour(f)
    assert rel < 1e-10
    assert pair4.measure.integrate(f(pair4.measure.nodes)) == pytest.approx(res)


def test_single_root_weight():
    st = _state(2, 0.1)
    pair = lt.LatticePair(st, _state(2, -0.1), 0.4)
    y = st.y[0]
    eps = 1e-6 * abs(y)
    # 1/(1 + afrak) has a simple pole at y: residue from a symmetric difference quotient
    afrak = lambda u: st.afrak(0.5 * np.log(u))
    da = (afrak(y + eps) - afrak(y - eps)) / (2 * eps)
    w = 2j * np.pi / (y * pair.rho_roots[0] * da)
    assert abs(pair.measure.weights[0] - w) / abs(w) < 1e-8


def test_dressed_resolvent_equations(pair4):
    left, right = pair4.dress_residuals()
    assert left < 1e-12 and right < 1e-12


def test_omega_dual_formulation():
    st = _state(4, 0.1)
    pair = lt.LatticePair(st, st, 0.4)
    for Lz, Lx in [(0.2 + 0.35j, -0.15 + 0.1j), (-0.3 + 0.5j, 0.25 - 0.2j)]:
        w = pair.omega(Lz, Lx)
        assert abs(w - pair.omega_inside(Lz, Lx)) / abs(w) < 1e-9


def test_omega_probe_on_root(pair4):
    with pytest.raises(PoleProximityError):
        pair4.omega(pair4.st.L_roots[0], 0.3 + 0.2j)


def test_domain_and_degenerate_constant():
    st = _state(4, 0.1)
    with pytest.raises(DomainError):
        lt.LatticePair(st, _state(4, 0.3), 0.4).domain_check()
    same = lt.LatticePair(st, st, 0.0, kn.PSI0)
    with pytest.raises(DomainError):
        same.moment_residual(0.2 + 0.3j)


def test_g_left_equation_solution():
    sp = _state(4, 0.45, s=0)
    st = _state(4, 0.1, s=0)
    pair = lt.LatticePair(st, sp, 0.35, kn.PSI0)
    Lx = 0.1 + 0.4j
    gc = pair.g_left_closed(Lx)
    assert abs(gc - pair.g_left_solve(Lx)) / abs(gc) < 1e-10
    assert pair.moment_residual(Lx)[0] < 1e-10


def test_x_vanishes_at_roots(pair4):
    diag = lt.x_diagnostics(pair4, 0.15 + 0.35j)
    assert np.max(diag.relative_root_values(), initial=0.0) < 1e-10
    assert np.max(np.abs(diag.coefficients)) / diag.scale < 1e-8


def test_solver_errors():
    with pytest.raises(ParameterError):
        lt.solve_bethe(kn.ModelParams(p=0.3, alpha=0.4), lt.TwistSector(0.0, 0))
    with pytest.raises(ParameterError):
        lt.solve_bethe(kn.ModelParams(p=0.3, alpha=0.4, n=14, zeta0=1.5), lt.TwistSector(0.0, 0))
    with pytest.raises(ParameterError):
        lt.LatticePair(_state(4, 0.1), _state(2, 0.1), 0.4)


def test_state_json_round_trip():
    st = _state(6, 0.07, s=1)
    back = lt.BetheState.from_json(json.loads(json.dumps(st.to_json())))
    assert np.allclose(back.roots, st.roots, rtol=1e-15)
    assert back.sector == st.sector
    assert back.bethe_residual() < 1e-12


def test_root_ordering_deterministic():
    lam = _state(6, 0.1).roots
    key = [(round(abs(v), 10), np.angle(v)) for v in lam]
    assert key == sorted(key)
