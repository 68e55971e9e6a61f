import numpy as np
import pytest

from cuspvol.cusp_model import CuspParams
from cuspvol.geometry import MetricPatch
from cuspvol.hamilton_jacobi import (
    BoundaryData, CharacteristicState, CuspHamiltonian, SingularEvaluation, a2_closed_form,
    cusp_compactified_patch, expansion_coeffs, hj_cusp_F, hj_cusp_solve, hj_generic,
    integrate_characteristics, random_compliant_data,
)

V_NODES = np.linspace(-0.6, 0.6, 9)
W_NODES = np.linspace(0, 0.5, 6, endpoint=False)


def test_dF_dpU_is_two_on_boundary():
    rng = np.random.default_rng(1)
    for ell in (0.0, 0.4):
        L = CuspParams(ell, rng.uniform(-2, 2), delta=0.9)
        v = rng.uniform(0.05, 1, 20)
        p = rng.normal(size=(3, 20))
        out = CuspHamiltonian(L).evaluate(np.zeros(20), v, *p)
        assert np.allclose(out[3], 2.0, atol=1e-14)
        # and F itself vanishes there whenever p_U = 0
        F = hj_cusp_F(L, CharacteristicState((0.0, v, 0.0), (0.0, p[1], p[2])))
        assert np.allclose(F, 0.0, atol=1e-14)


def test_zero_data_ell0_nu0():
    L = CuspParams(0.0, 0.0)
    f = hj_cusp_solve(L, BoundaryData.constant(0.0), V_NODES, W_NODES[:2])
    a0, a1, a2 = expansion_coeffs(f)
    assert np.abs(a0).max() < 1e-14
    assert np.abs(a1).max() < 1e-6
    assert np.allclose(a2, 0.25, atol=1e-8)


def test_a2_is_half_at_v0_for_positive_ell():
    L = CuspParams(0.2, 0.9, delta=0.5)
    f = hj_cusp_solve(L, BoundaryData.constant(0.0), np.array([0.0]), np.array([0.0, 0.2]))
    _, _, a2 = expansion_coeffs(f)
    assert np.allclose(a2, 0.5, atol=1e-8)
    assert a2_closed_form(L, BoundaryData.constant(0.0), 0.0, 0.0) == pytest.approx(0.5)


@pytest.mark.parametrize("ell,nu,seed", [(0.0, 1.1, 3), (0.0, -0.6, 4), (0.25, 0.8, 5), (0.7, -1.7, 6)])
def test_random_compliant_data(ell, nu, seed):
    L = CuspParams(ell, nu, delta=0.9)
    d = random_compliant_data(seed)
    f = hj_cusp_solve(L, d, V_NODES, W_NODES)
    assert f.valid.all()
    assert f.max_residual() < 1e-7
    a0, a1, a2 = expansion_coeffs(f)
    V, W = np.meshgrid(V_NODES, W_NODES, indexing="ij")
    assert np.abs(a0 - d(V, W)).max() < 1e-9
    assert np.abs(a1).max() < 1e-6
    assert np.abs(a2 - a2_closed_form(L, d, V, W)).max() < 1e-5
    C, K = f.meta["C"], f.meta["K"]
    assert np.isfinite(C) and K > 0


def test_U_is_twice_s_on_front_face():
    L = CuspParams(0.0, 1.4)
    U = np.linspace(0.005, 0.06, 12)
    o = integrate_characteristics(L, BoundaryData.constant(0.3), np.zeros(12), np.zeros(12), U)
    assert np.all(o["v"] == 0.0)
    dev = np.abs(U - 2 * o["s"]) / o["s"] ** 2
    assert dev.max() < 10


def test_lower_bound_along_characteristics():
    L = CuspParams(0.0, 0.8)
    d = random_compliant_data(11)
    v0 = np.array([0.02, 0.1, 0.3, -0.2])
    f = integrate_characteristics(L, d, v0, np.zeros(4), np.full(4, 0.06))
    assert np.all(np.sign(f["v"]) == np.sign(v0))
    assert np.all(f["U"] >= f["s"])


def test_pw_on_front_face_is_singular():
    H = CuspHamiltonian(CuspParams(0.0, 1.0))
    with pytest.raises(SingularEvaluation):
        H.evaluate(0.1, 0.0, 0.0, 0.0, 0.3)
    # fine when p_w = 0
    assert np.isfinite(H.evaluate(0.1, 0.0, 0.0, 0.0, 0.0)[0])


def _flat_boundary_patch(warp):
    """gbar = dx^2 + warp(x)^2 (dy1^2 + dy2^2)."""
    def metric(p):
        f = warp(p[..., 0]) ** 2
        g = np.zeros(p.shape + (3,))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = f
        g[..., 2, 2] = f
        return g
    return MetricPatch("test", 3, metric)


def test_generic_product_and_half_space():
    y = np.array([0.1, 0.4])
    prod = _flat_boundary_patch(lambda x: np.ones_like(x))
    f = hj_generic(prod, BoundaryData.constant(0.0), y, y, n_levels=3)
    assert np.abs(f.omega).max() < 1e-12
    f = hj_generic(prod, BoundaryData.constant(0.7), y, y, n_levels=3)
    assert np.abs(f.omega - 0.7).max() < 1e-12


def test_generic_funnel_second_order():
    funnel = _flat_boundary_patch(lambda x: 1 + x * x / 2)
    d = BoundaryData.from_expr("0.1*sin(2*pi*v) + 0.05*cos(2*pi*w)")
    y = np.array([0.1, 0.35])
    f = hj_generic(funnel, d, y, y, rho_max=0.05, n_levels=4)
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    pv, pw = d.dv_dw(Y1, Y2)
    _, a1, a2 = expansion_coeffs(f)
    assert np.abs(a1).max() < 1e-6
    assert np.abs(a2 + 0.25 * (pv ** 2 + pw ** 2)).max() < 1e-5
    # p_w is integrated here rather than frozen: it must keep its value at the seed
    _, pw_seed = d.dv_dw(f.seeds[..., 0], f.seeds[..., 1])
    assert np.abs(f.p[..., 2] - pw_seed).max() < 1e-9


def test_generic_matches_cusp_solver():
    L = CuspParams(0.3, 0.7, delta=0.5)
    d = BoundaryData.from_expr("0.05*exp(-4*v**2)*cos(4*pi*w)+0.1*v")
    v, w = np.array([-0.4, 0.5]), np.array([0.1])
    fg = hj_generic(cusp_compactified_patch(L), d, v, w, rho_max=0.05, n_levels=2)
    fc = hj_cusp_solve(L, d, v, w, U_max=0.05, n_levels=2)
    assert np.abs(fg.omega - fc.omega).max() < 1e-6
    assert np.abs(fg.p - fc.p).max() < 1e-6
