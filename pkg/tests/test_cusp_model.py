import math

import numpy as np
import pytest

from cuspvol.cusp_model import (CuspParams, blowup_coords, blowup_inverse, boundary_metric_hL,
                                dual_metric_gL, e_rho_asymptotic, e_rho_exact, gamma_model,
                                geodesic_length_v0, metric_gL, phi_L, phi_theta,
                                standard_cusp_patch, straighten, tau_v_L, theta_L,
                                theta_L_inverse, unstraighten, upsilon_L, volume_density_gL,
                                xi_L, xi_L_inverse)
from cuspvol.geometry import (christoffel, fd_jacobian, gaussian_curvature_fd, metric_derivatives,
                              pullback, sectional_curvatures)
from cuspvol.moebius import hyperbolic_distance


def random_L(rng, ell_max=1.0, delta=2.0):
    return CuspParams(rng.uniform(0, ell_max), rng.uniform(-3, 3), rng.uniform(0.5, 2), delta=delta)


def test_params_validation():
    with pytest.raises(ValueError):
        CuspParams(0.5, 0.0, 1.0, delta=0.1)     # lam*ell >= delta
    with pytest.raises(ValueError):
        CuspParams(1.5, 0.0, 1.0, delta=5)
    with pytest.raises(ValueError):
        CuspParams(0.01, 20.0, 1.0)


def test_gL_examples():
    p = np.array([[0.4, 0.3, 0.1]])
    g = metric_gL(CuspParams(0.0)).g(p)[0]
    assert np.allclose(g, np.diag([1, 1, 0.25 ** 2]) / 0.16, rtol=1e-14)
    L = CuspParams(0.05, 0.0, 1.0)
    R2 = 0.16 + 0.09 + 0.0025
    assert np.allclose(metric_gL(L).g(p)[0], np.diag([1, 1, R2 ** 2]) / 0.16, rtol=1e-14)


def test_gL_dual_and_density():
    rng = np.random.default_rng(0)
    for _ in range(20):
        L = random_L(rng)
        p = np.column_stack([rng.uniform(0.01, 2, 5), rng.uniform(-2, 2, 5), rng.uniform(-.25, .25, 5)])
        g = metric_gL(L).g(p)
        gi = dual_metric_gL(L).g(p)
        assert np.abs(gi @ g - np.eye(3)).max() < 1e-12
        dens = np.sqrt(np.linalg.det(g))
        assert np.allclose(dens, volume_density_gL(L, p[:, 0], p[:, 1]), rtol=1e-10)
    gi = dual_metric_gL(CuspParams(0.0)).g(np.array([[0.5, 0.2, 0.0]]))[0]
    assert abs(gi[2, 2] - 0.25 / 0.29 ** 2) < 1e-14


def test_gL_out_of_domain():
    with pytest.raises(ValueError):
        metric_gL(CuspParams(0.1)).g(np.array([[0.0, 1.0, 0.0]]))


def test_gL_sectional_curvature():
    rng = np.random.default_rng(1)
    for _ in range(40):
        L = random_L(rng)
        p = np.column_stack([rng.uniform(0.1, 1, 5), rng.uniform(-1, 1, 5), rng.uniform(-.25, .25, 5)])
        K = sectional_curvatures(metric_gL(L), p)
        assert np.abs(K + 1).max() < 1e-6


def test_gL_continuity_in_ell():
    p = np.array([[0.3, -0.2, 0.1]])
    g0 = metric_gL(CuspParams(0.0, 1.5)).g(p)
    diffs = [np.abs(metric_gL(CuspParams(e, 1.5)).g(p) - g0).max() for e in [1e-2, 1e-3, 1e-4]]
    assert diffs[0] > diffs[1] > diffs[2] and diffs[2] < 1e-6


def test_hL_curvature_and_geodesic():
    rng = np.random.default_rng(2)
    for ell in [0.0, 1e-3, 0.2, 1.0]:
        for nu in [0.0, -1.3, 2.5]:
            L = CuspParams(ell, nu, 1.0, delta=2)
            pts = np.column_stack([rng.uniform(-2, 2, 10), rng.uniform(-.25, .25, 10)])
            K = gaussian_curvature_fd(boundary_metric_hL(L), pts)
            assert np.abs(K + 1).max() < 1e-6
    L = CuspParams(0.3, 0.7, 1.0, delta=2)
    h = boundary_metric_hL(L)
    # {v=0} is a geodesic: the v-component of the geodesic equation vanishes for w' = 1
    g, dg, _ = metric_derivatives(h, np.array([[0.0, 0.1]]))
    G = christoffel(g, dg)
    assert abs(G[0, 0, 1, 1]) < 1e-9
    length = 0.5 * math.sqrt(h.g(np.array([[0.0, 0.0]]))[0, 1, 1])
    assert abs(length - geodesic_length_v0(L)) < 1e-14
    assert abs(geodesic_length_v0(L) - 0.5 * 0.3 * 1.49) < 1e-14


def test_hL_nu0():
    L = CuspParams(0.2, 0.0, 1.0, delta=1)
    h = boundary_metric_hL(L).g(np.array([[0.5, 0.0]]))[0]
    assert np.allclose(h, np.diag([1 / 0.29, 0.29]), rtol=1e-14)


def sample_annulus(rng, L, n):
    r = np.exp(rng.uniform(-0.5, 0.5, n) * L.ell)
    th = rng.uniform(0.05, 1.45, n)
    ph = rng.uniform(0, 2 * np.pi, n)
    return r * np.cos(th), r * np.sin(th) * np.exp(1j * ph)


def test_theta_isometry_and_image():
    rng = np.random.default_rng(3)
    L = CuspParams(0.02, 0.5, 1.3, delta=0.1)
    x = rng.uniform(0.001, 0.05, 20)
    z = 0.05 * (rng.normal(size=20) + 1j * rng.normal(size=20))
    X, Z = theta_L(L, x, z)
    d0 = hyperbolic_distance(x[:10], z[:10], x[10:], z[10:])
    d1 = hyperbolic_distance(X[:10], Z[:10], X[10:], Z[10:])
    assert np.abs(d0 - d1).max() < 1e-10 * max(1, d0.max())
    e, rho = e_rho_exact(L)
    inside = np.sqrt(x ** 2 + np.abs(z) ** 2) < L.delta
    dist = np.sqrt(X ** 2 + np.abs(Z - e) ** 2)
    assert np.all(dist[inside] > rho)
    with pytest.raises(ValueError):
        theta_L(L, 0.0, 0.0)


def test_rho_leading_coefficient():
    ells = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    rhos = np.array([e_rho_exact(CuspParams(e, 0.3, 1.5, delta=0.1))[1] for e in ells])
    slope = np.polyfit(ells, rhos, 1)[0]
    assert abs(slope / (1.5 / 0.1) - 1) < 0.1
    e, _ = e_rho_exact(CuspParams(1e-3, 0.3, 1.5, delta=0.1))
    ea, _ = e_rho_asymptotic(CuspParams(1e-3, 0.3, 1.5, delta=0.1))
    assert abs(e - ea) < 1e-6


def test_upsilon_xi_properties():
    rng = np.random.default_rng(4)
    L = CuspParams(0.4, 0.0, 1.0, delta=1)
    w = rng.uniform(-.25, .25, 10)
    zp = rng.normal(size=10) + 1j * rng.uniform(0.1, 1, 10)
    assert np.allclose(xi_L(L, w, zp)[1], zp, atol=1e-15)
    L = CuspParams(0.4, 1.7, 1.0, delta=1)
    _, zt = xi_L(L, w, zp)
    assert np.allclose(xi_L_inverse(L, w, zt)[1], zp, atol=1e-13)
    lhs = (zp.imag ** 2 + zp.real ** 2 + L.ell ** 2) / zp.imag
    rhs = (zt.imag ** 2 + zt.real ** 2 + L.ell ** 2) / zt.imag
    assert np.allclose(lhs, rhs, rtol=1e-12)
    with pytest.raises(ValueError):
        upsilon_L(L, 2.0, 0.1)


def chain_error(L, x, z):
    def F(p):
        u, v, w = phi_theta(L, p[..., 0], p[..., 1] + 1j * p[..., 2])
        return np.stack([u, v, w], -1)

    P = np.stack([x, z.real, z.imag], -1)
    J = fd_jacobian(F, P, 1e-3 * P[:, :1] * np.ones(3))
    g = metric_gL(L).g(F(P))
    return np.abs(pullback(g, J) * (x ** 2)[:, None, None] - np.eye(3)).max()


def test_isometry_chain_random():
    rng = np.random.default_rng(5)
    for _ in range(5):
        L = CuspParams(rng.uniform(0.01, 1), rng.uniform(-3, 3), rng.uniform(0.5, 2), delta=2.5)
        xm, zm = sample_annulus(rng, L, 20)
        x, z = theta_L_inverse(L, xm, zm)
        assert chain_error(L, x, z) < 1e-7


def test_isometry_chain_parabolic_limit():
    # at ell = 0 the closed form still pulls g_0 back to the half-space metric
    rng = np.random.default_rng(6)
    L = CuspParams(0.0, 1.2, 1.3, delta=0.1)
    x = rng.uniform(0.005, 0.03, 20)
    z = 0.03 * (rng.normal(size=20) + 1j * rng.normal(size=20))
    assert chain_error(L, x, z) < 1e-7


def test_gamma_becomes_translation():
    rng = np.random.default_rng(7)
    L = CuspParams(0.3, -1.1, 0.8, delta=1)
    xm, zm = sample_annulus(rng, L, 10)
    r = np.sqrt(xm ** 2 + np.abs(zm) ** 2)
    xm, zm = xm * np.exp(-L.ell / 2) / r * 1.0001, zm * np.exp(-L.ell / 2) / r * 1.0001
    a = np.array(phi_L(L, xm, zm))
    b = np.array(phi_L(L, *gamma_model(L, xm, zm), check=False))
    assert np.abs(b[:2] - a[:2]).max() < 1e-12
    assert np.abs(b[2] - a[2] - 0.5).max() < 1e-12


def test_tau_limit():
    for nu in [0.0, 0.9]:
        lam, delta = 1.5, 0.1
        t0 = tau_v_L(CuspParams(0.0, nu, lam, delta), 0.0)[1]
        assert abs(t0 - 2 * delta / lam) < 1e-14
        t = [tau_v_L(CuspParams(e, nu, lam, delta), 0.0)[1] for e in [1e-2, 1e-3, 1e-4]]
        assert abs(t[-1] - t0) < 1e-3 * t0 and abs(t[-1] - t0) < abs(t[0] - t0)
        w = np.linspace(-0.25, 0.25, 11)
        v_, tau = tau_v_L(CuspParams(1e-4, nu, lam, delta), w)
        v0, tau0 = tau_v_L(CuspParams(0.0, nu, lam, delta), w)
        assert np.abs(tau - tau0).max() < 1e-3 and np.abs(v_ - v0).max() < 1e-3
        assert np.abs(v0).max() < 10 * delta ** 3 * (1 + nu)


def test_region_W_contains_image():
    # images of points of B(0, delta) near the cusp satisfy |zeta - v_L| < tau_L
    rng = np.random.default_rng(8)
    L = CuspParams(0.01, 0.6, 1.2, delta=0.1)
    xm, zm = sample_annulus(rng, L, 200)
    x, z = theta_L_inverse(L, xm, zm)
    keep = np.sqrt(x ** 2 + np.abs(z) ** 2) < 0.9 * L.delta
    u, v, w = phi_theta(L, x[keep], z[keep])
    vc, tau = tau_v_L(L, w)
    assert np.all(np.abs(v + 1j * u - vc) < tau)


def test_straighten():
    nu = 0.8
    u, v = 0.3, 0.5
    up, vp, wp = straighten(nu, u, v, 0.1)
    k = 1 + nu * nu
    fac = 1 - nu * nu * u * u / (u * u * k + v * v)
    assert abs(up - k ** 1.5 * u * fac) < 1e-14 and abs(vp - k * v * fac) < 1e-14
    assert abs(wp - (0.1 - nu / k * v / (v * v + u * u))) < 1e-15
    assert np.allclose(straighten(0.0, u, v, 0.1), (u, v, 0.1), atol=1e-15)
    back = unstraighten(nu, up, vp, wp)
    assert np.allclose(back, (u, v, 0.1), atol=1e-14)
    with pytest.raises(ValueError):
        straighten(nu, 0.0, 0.0, 0.0)
    # jump of w' across v = 0 at u = 0
    for vv in [0.1, 0.01]:
        jump = straighten(nu, 1e-12, vv, 0)[2] - straighten(nu, 1e-12, -vv, 0)[2]
        assert abs(jump + 2 * nu / (k * vv)) < 1e-9 / vv


def test_straighten_is_isometry():
    rng = np.random.default_rng(9)
    nu = -1.4
    P = np.column_stack([rng.uniform(0.05, 0.5, 10), rng.uniform(0.05, 0.5, 10), rng.uniform(-.2, .2, 10)])

    def F(p):
        return np.stack(straighten(nu, p[..., 0], p[..., 1], p[..., 2]), -1)

    J = fd_jacobian(F, P, 1e-3 * P[:, :1] * np.ones(3))
    pulled = pullback(standard_cusp_patch().g(F(P)), J)
    target = metric_gL(CuspParams(0.0, nu)).g(P)
    assert np.abs((pulled - target) / np.abs(target).max(axis=(1, 2))[:, None, None]).max() < 1e-8


def test_blowup():
    assert np.allclose(blowup_coords(1.0, 0.0, 0.0), (1, 0, 1))
    assert np.allclose(blowup_coords(3.0, 4.0, 0.0), (0.6, 0.8, 5))
    assert np.allclose(blowup_coords(0.0, 0.0, 1.0), (0, 0, 1))
    rng = np.random.default_rng(10)
    u, v, ell = rng.uniform(0, 2, 50), rng.normal(size=50), rng.uniform(0, 1, 50)
    U, V, R = blowup_coords(u, v, ell)
    assert np.abs(U ** 2 + V ** 2 + ell ** 2 / R ** 2 - 1).max() < 1e-14
    uu, vv = blowup_inverse(U, V, R)
    assert np.abs(uu - u).max() < 1e-12 and np.abs(vv - v).max() < 1e-12
    with pytest.raises(ValueError):
        blowup_coords(0.0, 0.0, 0.0)
