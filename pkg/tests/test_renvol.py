import numpy as np
import pytest
import sympy as sp

from cuspvol.cusp_model import CuspParams
from cuspvol.hamilton_jacobi import BoundaryData
from cuspvol.moebius import MoebiusMap
from cuspvol.renvol import (
    IllConditionedFit, RadialCutoff, boundary_expansion, conformal_variation, conformal_variation_direct,
    cusp_regularized_volume, epstein_expansion_check, finite_part_fit, first_variation, funnel_patch,
    fuchsian_normal_map, geometric_eps, hyperbolic_factor, hyperbolic_plane_metric,
    liouville_schwarzian_identity, normal_form_patch, pullback_liouville_field, random_compliant_psi,
    schwarzian, slab_finite_part, volR_derivative,
)


def _symbolic_fp(p):
    """Constant term of int_eps^1 x^-3 p(x) dx as eps -> 0 (p a polynomial)."""
    x, e = sp.symbols("x epsilon", positive=True)
    I = sp.expand(sp.integrate(p(x) / x ** 3, (x, e, 1)))
    return float(sum(t for t in I.as_ordered_terms() if not t.has(e)))


def test_fit_recovers_exact_expansions():
    eps = geometric_eps(0.1, 10, 0.6)
    r = finite_part_fit(np.stack([eps, (eps ** -2 - 1) / 2], -1))
    assert (r.a2, r.a1, r.a0) == pytest.approx((0.5, 0.0, -0.5), abs=1e-6)
    assert abs(r.a0 + 0.5) < max(r.uncertainty, 1e-6)
    r = finite_part_fit(np.stack([eps, -np.log(eps) + 7], -1))
    assert (r.a2, r.a1, r.a0) == pytest.approx((0.0, -1.0, 7.0), abs=1e-8)


def test_funnel_slab_against_symbolic_oracle():
    ref = _symbolic_fp(lambda x: 1 + x ** 2 + x ** 4 / 4)
    assert ref == pytest.approx(-3 / 8, abs=1e-14)
    r = slab_finite_part(lambda x: 1 + x * x + x ** 4 / 4)
    assert abs(r.a0 - ref) < 1e-6
    assert r.a2 == pytest.approx(0.5, abs=1e-6)
    assert r.a1 == pytest.approx(-1.0, abs=1e-6)


def test_product_slab_unit_warp():
    r = slab_finite_part(lambda x: 1.0 + 0 * x)
    assert r.a0 == pytest.approx(-0.5, abs=1e-6)


def test_ill_conditioned_fit_rejected():
    eps = 0.3 * (1 + 1e-9 * np.arange(8))
    with pytest.raises(IllConditionedFit) as e:
        finite_part_fit(np.stack([eps, eps ** -2], -1))
    assert e.value.cond > 1e12
    with pytest.raises(ValueError):
        finite_part_fit([(0.1, 1.0), (0.05, 2.0)])


def test_cusp_volume_independent_of_switch_level():
    # rho above the switch level is never consulted: moving it is an interior change of rho
    for ell in (0.0, 0.05):
        L = CuspParams(ell, 0.8, delta=0.9)
        d = BoundaryData.constant(hyperbolic_factor(L))
        a = cusp_regularized_volume(L, d, RadialCutoff(0.4), U_s=0.025)[0]
        b = cusp_regularized_volume(L, d, RadialCutoff(0.4), U_s=0.02)[0]
        assert abs(a.a0 - b.a0) < max(a.uncertainty, b.uncertainty)
        assert a.residual < 1e-8


def test_variation_trivial_cases():
    L = CuspParams(0.2, 0.6, delta=0.9)
    x, wt = np.polynomial.legendre.leggauss(20)
    v, wv = 0.5 * x + 0.5, 0.5 * wt           # [0, 1]
    assert conformal_variation(L, BoundaryData.constant(0.0), v, wv) == 0.0
    c = 0.3
    area = (1 + L.nu ** 2) * 1.0 * 0.5
    assert conformal_variation(L, BoundaryData.constant(c), v, wv) == pytest.approx(c * area / 2, rel=1e-13)


def test_noncompliant_psi_rejected():
    L = CuspParams(0.0, 0.5)
    bad = BoundaryData.from_expr("0.01*cos(4*pi*w)")
    with pytest.raises(ValueError):
        conformal_variation(L, bad, np.array([0.1]), np.array([1.0]))


@pytest.mark.parametrize("ell,nu,seed", [(0.0, 0.7, 1), (0.3, -1.2, 2)])
def test_variation_dual_path(ell, nu, seed):
    L = CuspParams(ell, nu, delta=0.9)
    r = conformal_variation_direct(L, random_compliant_psi(seed), (0.1, 0.5))
    assert r.rel_error < 1e-3
    # the per-column identity behind the formula, up to the a2 column-fit accuracy
    assert abs(r.column_identity - r.formula) < 1e-4 * max(abs(r.formula), 1e-3)


def test_criticality_at_hyperbolic_representative():
    L = CuspParams(0.1, 0.4, delta=0.9)
    f1 = sp.exp(-40 * (sp.Symbol("v") - 0.3) ** 2)
    f2 = sp.exp(-60 * (sp.Symbol("v") - 0.5) ** 2)
    v_ = sp.Symbol("v")
    k = float(sp.Integral(f1, (v_, 0, 1)).evalf(30) / sp.Integral(f2, (v_, 0, 1)).evalf(30))
    psi = BoundaryData.from_expr(f"exp(-40*(v-0.3)**2) - {k!r}*exp(-60*(v-0.5)**2)")
    x, wt = np.polynomial.legendre.leggauss(80)
    assert abs(first_variation(L, psi, 0.5 * x + 0.5, 0.5 * wt)) < 1e-12


def test_funnel_boundary_expansion():
    pts = np.array([[0.1, 1.0], [0.5, 2.0], [-0.3, 0.7]])
    be = boundary_expansion(funnel_patch(hyperbolic_plane_metric), pts)
    assert np.abs(be.h2 - 0.5 * be.h0).max() < 1e-10
    assert np.abs(be.h2_0).max() < 1e-10
    assert be.trace_residual < 1e-5 and be.div_residual < 1e-4 and be.h4_residual < 1e-6
    with pytest.raises(ValueError):
        boundary_expansion(funnel_patch(hyperbolic_plane_metric), pts, levels=[0.1, 0.2, 0.3])


def test_boundary_expansion_moebius_normal_form():
    M = MoebiusMap(1.2 + 0.3j, 0.5, 0.2 - 0.1j, 1.0)
    zp = M(np.array([0.3 + 1.0j, -0.4 + 0.8j, 0.5 + 0.6j]))
    pts = np.stack([zp.real, zp.imag], -1)
    be = boundary_expansion(normal_form_patch(fuchsian_normal_map(M)), pts)
    assert be.normal_form_error < 1e-9
    assert be.trace_residual < 1e-5 and be.div_residual < 1e-4 and be.h4_residual < 1e-6
    assert np.abs(be.h2_0).max() < 1e-4 * np.abs(be.h0).max()


def test_volR_derivative_trivial_families():
    pts = np.array([[0.1, 1.0], [0.5, 2.0]])
    wts = np.ones(2)
    h0 = lambda t, p: hyperbolic_plane_metric(p)
    r = volR_derivative(lambda t: 3.0, h0, lambda t, p: 0.5 * h0(t, p), 0.0, pts, wts)
    assert r["fd"] == 0 and r["pairing_half"] == 0 and r["trace_free"]
    # funnel family with a trace-free deformation: h2^0 = 0 so the pairing vanishes
    T = np.array([[1.0, 0.3], [0.3, -1.0]])
    h0t = lambda t, p: hyperbolic_plane_metric(p) * (1 + t * T)
    r = volR_derivative(lambda t: 3.0, h0t, lambda t, p: 0.5 * h0t(t, p), 0.0, pts, wts)
    assert abs(r["pairing_half"]) < 1e-14 and r["trace_free"]


# --- Schwarzian suite ---

def _random_moebius(rng):
    a, b, c, d = rng.normal(size=4) + 1j * rng.normal(size=4)
    return MoebiusMap(a, b, c, d)


def test_schwarzian_kernel_and_square():
    rng = np.random.default_rng(0)
    z = np.array([0.3 + 0.2j, -1.0 + 0.5j])
    for _ in range(5):
        M = _random_moebius(rng)
        assert np.abs(schwarzian(M, z)).max() == 0
        # the sampled route on the same map (poles kept away from the contour)
        if np.abs(M.c * z + M.d).min() > 0.5 * abs(M.c) + 0.1:
            assert np.abs(schwarzian(lambda s: M(s), z)).max() < 1e-8
    zs = sp.Symbol("z")
    assert complex(schwarzian(zs ** 2, 1.0)) == pytest.approx(-1.5, abs=1e-14)
    assert schwarzian(lambda s: s ** 2, 1.0) == pytest.approx(-1.5, abs=1e-10)
    with pytest.raises(ValueError):
        schwarzian(lambda s: s ** 2, 0.0)


def test_schwarzian_cocycle():
    rng = np.random.default_rng(3)
    z = 0.2 + 0.1j
    for _ in range(5):
        a, b = rng.uniform(0.1, 0.3, 2)
        g = lambda s, a=a: s + a * s * s
        f = lambda s, b=b: np.exp(s) + b * s ** 3
        gd = 1 + 2 * a * z
        lhs = schwarzian(lambda s: f(g(s)), z)
        rhs = schwarzian(f, g(z)) * gd ** 2 + schwarzian(g, z)
        assert abs(lhs - rhs) < 1e-10


def test_liouville_schwarzian_identity():
    pts = np.array([0.3 + 1.0j, -0.5 + 0.7j, 1.2 + 2.0j])
    phi = lambda z: -2 * np.log(np.imag(z))
    assert liouville_schwarzian_identity(phi, lambda z: z, pts) < 1e-6
    M = MoebiusMap(2.0, 1.0, 1.0, 1.0)       # real, det 1: preserves the upper half-plane
    assert liouville_schwarzian_identity(pullback_liouville_field(M), M, pts) < 1e-6
    # strip 0 < Im z < pi mapped by exp; phi from the closed-form pullback
    strip = np.array([0.1 + 1.0j, -0.4 + 2.0j, 0.5 + 1.5j])
    phi_exp = lambda z: 2 * np.real(z) - 2 * np.log(np.exp(np.real(z)) * np.sin(np.imag(z)))
    assert liouville_schwarzian_identity(phi_exp, np.exp, strip) < 1e-6
    assert abs(schwarzian(sp.exp(sp.Symbol("z")), 0.3) + 0.5) < 1e-14


def test_epstein_coefficient():
    rng = np.random.default_rng(7)
    Ms = [MoebiusMap(1, 0, 0, 1), MoebiusMap(1, -1j, 1, 1j), _random_moebius(rng)]
    for M in Ms:
        zp = M(np.array([0.2 + 1.0j, -0.3 + 0.6j]))
        pts = np.stack([zp.real, zp.imag], -1)
        res, coef, nf = epstein_expansion_check(M, pts)
        assert res < 1e-5
