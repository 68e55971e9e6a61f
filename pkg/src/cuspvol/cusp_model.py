"""Model metrics and isometries near a pinching geodesic or rank-1 cusp.

Conventions
-----------
* 3D model chart: coordinates (u, v, w), with zeta = v + i u in the upper
  half-plane and w periodic of period 1/2.
* Half-space points are (x, z) with x > 0.
* L = (ell, nu, lam): the loxodromic gamma_L has multiplier exp(ell(1 + i nu))
  and fixed points 0 (repulsive) and lam*ell (attractive).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import MetricPatch
from .moebius import MoebiusMap


@dataclass(frozen=True)
class CuspParams:
    ell: float
    nu: float = 0.0
    lam: float = 1.0
    delta: float = 0.1
    N: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.ell <= 1.0:
            raise ValueError(f"ell must lie in [0, 1], got {self.ell}")
        if abs(self.nu) > self.N:
            raise ValueError(f"|nu| must be <= N={self.N}")
        if not 1.0 / self.N <= self.lam <= self.N:
            raise ValueError(f"lam must lie in [1/N, N], got {self.lam}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.lam * self.ell < self.delta:
            raise ValueError(f"need lam*ell < delta ({self.lam * self.ell:g} >= {self.delta:g})")

    @property
    def q(self) -> complex:
        return complex(np.exp(self.ell * (1 + 1j * self.nu)))

    def replace(self, **kw):
        d = dict(ell=self.ell, nu=self.nu, lam=self.lam, delta=self.delta, N=self.N)
        d.update(kw)
        return CuspParams(**d)


# --- metrics -----------------------------------------------------------------------

def _uvw(p):
    return p[..., 0], p[..., 1], p[..., 2]


def gL_components(ell, nu, u, v):
    """Entries (g_uu, g_vv, g_ww, g_uv, g_uw, g_vw) of the model metric."""
    R2 = u * u + v * v + ell * ell
    iu2 = 1.0 / (u * u)
    guu = iu2
    gvv = iu2
    gww = ((1 + nu * nu) * R2 * R2 - 4 * nu * nu * ell * ell * u * u) * iu2
    guv = np.zeros_like(u)
    guw = 2 * nu * u * v * iu2
    gvw = nu * (R2 - 2 * u * u) * iu2
    return guu, gvv, gww, guv, guw, gvw


def _assemble3(guu, gvv, gww, guv, guw, gvw):
    return np.stack([np.stack([guu, guv, guw], -1),
                     np.stack([guv, gvv, gvw], -1),
                     np.stack([guw, gvw, gww], -1)], -2)


def metric_gL(L: CuspParams) -> MetricPatch:
    """The model metric on (R/Z/2)_w x H^2_{v+iu}, chart order (u, v, w)."""
    ell, nu = L.ell, L.nu

    def metric(p):
        u, v, _ = _uvw(p)
        return _assemble3(*gL_components(ell, nu, u, v))

    return MetricPatch(f"g_L(ell={ell:g},nu={nu:g})", 3, metric, dual=_dual_eval(ell, nu),
                       domain=lambda p: p[..., 0] > 0,
                       scale=lambda p: np.repeat(p[..., :1], 3, axis=-1))


def _dual_eval(ell, nu):
    def dual(p):
        u, v, _ = _uvw(p)
        R2 = u * u + v * v + ell * ell
        S = R2 - 2 * u * u
        f = u * u / (R2 * R2)
        kuu = R2 * R2 + 4 * nu * nu * u * u * v * v
        kuv = 2 * nu * nu * u * v * S
        kuw = -2 * nu * u * v
        kvv = R2 * R2 + nu * nu * S * S
        kvw = -nu * S
        kww = np.ones_like(u)
        return f[..., None, None] * _assemble3(kuu, kvv, kww, kuv, kuw, kvw)
    return dual


def dual_metric_gL(L: CuspParams) -> MetricPatch:
    """Contravariant metric, returned as the `metric` of the patch."""
    d = _dual_eval(L.ell, L.nu)
    return MetricPatch(f"g_L^-1(ell={L.ell:g},nu={L.nu:g})", 3, d,
                       domain=lambda p: p[..., 0] > 0)


def volume_density_gL(L: CuspParams, u, v):
    """sqrt(det g_L) = R^2/u^3."""
    return (u * u + v * v + L.ell ** 2) / u ** 3


def _assemble2(a, b, c):
    return np.stack([np.stack([a, c], -1), np.stack([c, b], -1)], -2)


def boundary_metric_hL(L: CuspParams) -> MetricPatch:
    """Hyperbolic boundary metric (1+nu^2) h_ell in the chart (v, w)."""
    return _h_patch(L.ell, L.nu, 1 + L.nu ** 2, "h_L")


def boundary_metric_hell(L: CuspParams) -> MetricPatch:
    """U^2 g_L restricted to U = 0: dv^2/(v^2+l^2) + (1+nu^2)(v^2+l^2) dw^2 + 2 nu dv dw."""
    return _h_patch(L.ell, L.nu, 1.0, "h_ell")


def _h_patch(ell, nu, factor, name):
    def metric(p):
        v = p[..., 0]
        s = v * v + ell * ell
        return factor * _assemble2(1.0 / s, (1 + nu * nu) * s, nu * np.ones_like(v))

    def scale(p):
        s = np.sqrt(p[..., 0] ** 2 + ell ** 2)
        return np.stack([s, np.minimum(1.0, 1.0 / np.maximum(s, 1e-300))], -1)

    dom = (lambda p: np.ones(p.shape[:-1], bool)) if ell > 0 else (lambda p: p[..., 0] != 0)
    return MetricPatch(f"{name}(ell={ell:g},nu={nu:g})", 2, metric, domain=dom, scale=scale)


def geodesic_length_v0(L: CuspParams):
    """Length of the closed curve {v = 0} for h_L: (1+nu^2) ell / 2."""
    return 0.5 * L.ell * (1 + L.nu ** 2)


# --- the isometries ------------------------------------------------------------------

def theta_map(L: CuspParams) -> MoebiusMap:
    """theta(z) = z/(lam ell - z): sends 0 -> 0 and lam*ell -> infinity."""
    if L.ell == 0:
        raise ValueError("theta_L is singular at ell = 0; use phi_theta")
    return MoebiusMap(1, 0, -1, L.lam * L.ell)


def theta_L(L: CuspParams, x, z):
    """Poincare extension of theta; arrays of (x, z) in, (x, z) out."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=complex)
    if np.any((x == 0) & (z == 0)):
        raise ValueError("theta_L is not defined at the fixed point 0")
    a = L.lam * L.ell
    den = np.abs(z - a) ** 2 + x * x
    return x * a / den, (-x * x - np.abs(z) ** 2 + a * z) / den


def theta_L_inverse(L: CuspParams, x, z):
    return theta_map(L).inverse().extend(x, z)


def e_rho_exact(L: CuspParams):
    """Centre and radius of the half-ball whose complement is Theta_L(B(0, delta))."""
    d2, a2 = L.delta ** 2, (L.lam * L.ell) ** 2
    return -d2 / (d2 - a2), L.delta * L.lam * L.ell / (d2 - a2)


def e_rho_asymptotic(L: CuspParams):
    t = L.lam * L.ell / L.delta
    return -1 - t * t, t


def upsilon_L(L: CuspParams, x, z, check=True):
    """(w, v', u') for half-space points in the annulus exp(-ell/2) <= r <= exp(ell/2).

    With check=False the same formulas are applied outside the annulus.
    """
    if L.ell <= 0:
        raise ValueError("upsilon_L needs ell > 0")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=complex)
    r = np.sqrt(x * x + np.abs(z) ** 2)
    if check and np.any(np.abs(np.log(r)) > 0.5 * L.ell * (1 + 1e-12)):
        raise ValueError("point outside the fundamental annulus")
    return _upsilon_raw(L.ell, x, z)


def _upsilon_raw(ell, x, z):
    r = np.sqrt(x * x + np.abs(z) ** 2)
    ox, o1, o2 = x / r, z.real / r, z.imag / r
    # stereographic projection from (0, -1); (o1 + 1) computed stably
    den = 1.0 + o1
    small = den < 1e-8
    if np.any(small):
        alt = (ox * ox + o2 * o2) / (1.0 - o1)
        den = np.where(small, alt, den)
    uh, vh = ox / den, o2 / den
    return np.log(r) / (2 * ell), ell * vh, ell * uh


def _rot_coeffs(ell, nu, w):
    """cos(nu ell w), ell*sin(nu ell w), sin(nu ell w)/ell (smooth at ell = 0)."""
    t = nu * ell * w
    c = np.cos(t)
    s_over = nu * w * np.sinc(t / np.pi)
    return c, ell * np.sin(t), s_over


def xi_L(L: CuspParams, w, zeta_p):
    """(w, zeta') -> (w, zeta): hyperbolic rotation of angle -2 nu ell w about i ell."""
    w = np.asarray(w, dtype=float)
    c, ls, so = _rot_coeffs(L.ell, L.nu, w)
    zp = np.asarray(zeta_p, dtype=complex)
    return w, (c * zp - ls) / (so * zp + c)


def xi_L_inverse(L: CuspParams, w, zeta):
    w = np.asarray(w, dtype=float)
    c, ls, so = _rot_coeffs(L.ell, L.nu, w)
    zt = np.asarray(zeta, dtype=complex)
    return w, (c * zt + ls) / (-so * zt + c)


def phi_L(L: CuspParams, x, z, check=True):
    """Phi_L = Xi_L o Upsilon_L: half-space annulus -> (u, v, w)."""
    w, vp, up = upsilon_L(L, x, z, check)
    w, zeta = xi_L(L, w, vp + 1j * up)
    return zeta.imag, zeta.real, w


def phi_theta(L: CuspParams, x, z):
    """Phi_L o Theta_L in closed form, smooth down to ell = 0.

    Points are in the original half-space near the fixed point 0.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=complex)
    ell, lam = L.ell, L.lam
    a = lam * ell
    A = x * x + np.abs(z) ** 2
    rz, iz = z.real, z.imag
    D = A - 2 * rz * a + a * a
    # r^2 o Theta - 1 = ell * nf / D^2
    nf = 2 * A * rz * lam - lam * lam * ell * (A + 4 * rz * rz) + 4 * rz * lam ** 3 * ell ** 2 \
        - lam ** 4 * ell ** 3
    if ell > 0:
        w = np.log1p(ell * nf / D ** 2) / (4 * ell)
    else:
        w = nf / (4 * D ** 2)
    eta = np.sqrt((x * x + iz * iz) * a * a + (A - rz * a) ** 2)
    common = (eta + A - rz * a) / (lam * (x * x + iz * iz))
    up, vp = x * common, iz * common
    w, zeta = xi_L(L, w, vp + 1j * up)
    return zeta.imag, zeta.real, w


def gamma_model(L: CuspParams, x, z):
    """The dilation-rotation m(q): (x, z) -> (|q| x, q z)."""
    q = L.q
    return abs(q) * np.asarray(x), q * np.asarray(z)


def tau_v_L(L: CuspParams, w):
    """(v_L(w), tau_L(w)): the model-chart disk |zeta - v_L| < tau_L.

    Computed from the images of the two boundary points where the sphere
    |(x,z)| = exp(2 ell w) meets the removed half-ball B(e, rho).
    """
    w = np.asarray(w, dtype=float)
    if L.ell == 0:
        return _tau_v_limit(L, w)
    e, rho = e_rho_exact(L)
    s = np.exp(2 * L.ell * w)
    kappa = (e * e + s * s - rho * rho) / (2 * e)
    y = np.sqrt(np.maximum(s * s - kappa * kappa, 0.0))
    zeta_p = []
    for sign in (+1, -1):
        # boundary point (0, kappa + i sign y); u' = 0 on the boundary
        o1, o2 = kappa / s, sign * y / s
        den = 1.0 + o1
        den = np.where(den < 1e-8, (o2 * o2) / (1.0 - o1), den)
        zeta_p.append(L.ell * o2 / den + 0j)
    _, vp = xi_L(L, w, zeta_p[0])
    _, vm = xi_L(L, w, zeta_p[1])
    vp, vm = vp.real, vm.real
    return 0.5 * (vp + vm), 0.5 * (vp - vm)


def _tau_v_limit(L: CuspParams, w):
    # r_lambda(w) = (lam^2/(4 delta^2) - w^2)^(-1/2), rotated by the ell = 0 limit of Xi
    r = 1.0 / np.sqrt(L.lam ** 2 / (4 * L.delta ** 2) - w * w)
    vp = r / (1 + L.nu * w * r)
    vm = -r / (1 - L.nu * w * r)
    return 0.5 * (vp + vm), 0.5 * (vp - vm)


# --- the straightened cusp (ell = 0) -----------------------------------------------

def straighten(nu, u, v, w):
    """Isometry from the twisted ell = 0 model to (du'^2+dv'^2+(u'^2+v'^2)^2 dw'^2)/u'^2.

    Valid on one side of v = 0 at a time near u = 0 (w' jumps across it).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    r2 = u * u + v * v
    if np.any(r2 == 0):
        raise ValueError("straighten is undefined at the origin")
    k = 1 + nu * nu
    x, y = u / r2, -v / r2
    xp, yp = x / math.sqrt(k), y / k
    wp = w + nu * y / k
    d = xp * xp + yp * yp
    return xp / d, -yp / d, wp


def unstraighten(nu, up, vp, wp):
    up = np.asarray(up, dtype=float)
    vp = np.asarray(vp, dtype=float)
    r2 = up * up + vp * vp
    k = 1 + nu * nu
    xp, yp = up / r2, -vp / r2
    x, y = xp * math.sqrt(k), yp * k
    w = np.asarray(wp) - nu * y / k
    d = x * x + y * y
    return x / d, -y / d, w


def standard_cusp_patch() -> MetricPatch:
    """(du^2 + dv^2 + (u^2+v^2)^2 dw^2)/u^2 in (u, v, w)."""
    def metric(p):
        u, v, _ = _uvw(p)
        z = np.zeros_like(u)
        iu2 = 1.0 / (u * u)
        return _assemble3(iu2, iu2, (u * u + v * v) ** 2 * iu2, z, z, z)

    return MetricPatch("cusp", 3, metric, domain=lambda p: p[..., 0] > 0,
                       scale=lambda p: np.repeat(p[..., :1], 3, axis=-1))


# --- blow-up coordinates ------------------------------------------------------------

def blowup_coords(u, v, ell):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    R = np.sqrt(u * u + v * v + ell * ell)
    if np.any(R == 0):
        raise ValueError("R = 0 lies on the front face; blow-up coordinates undefined")
    return u / R, v / R, R


def blowup_inverse(U, V, R):
    return np.asarray(U) * R, np.asarray(V) * R


def UV_from_Uv(U, v, ell):
    """(V, R) from (U, v): R^2 = (v^2 + ell^2)/(1 - U^2)."""
    U = np.asarray(U, dtype=float)
    v = np.asarray(v, dtype=float)
    R = np.sqrt((v * v + ell * ell) / (1 - U * U))
    return v / R, R


def u_from_Uv(U, v, ell):
    _, R = UV_from_Uv(U, v, ell)
    return np.asarray(U) * R


# --- property checks ----------------------------------------------------------------

def sample_target_annulus(rng, L: CuspParams, n):
    """Half-space points in the annulus exp(-ell/2) < |(x, z)| < exp(ell/2), away from the axis."""
    r = np.exp(rng.uniform(-0.5, 0.5, n) * L.ell)
    th = rng.uniform(0.05, 1.45, n)
    ph = rng.uniform(0, 2 * np.pi, n)
    return r * np.cos(th), r * np.sin(th) * np.exp(1j * ph)


def isometry_chain_error(L: CuspParams, x, z):
    """sup |x^2 J^T g_L J - I| for the composite Phi_L o Theta_L at half-space points (x, z)."""
    from .geometry import fd_jacobian, pullback

    def F(p):
        u, v, w = phi_theta(L, p[..., 0], p[..., 1] + 1j * p[..., 2])
        return np.stack([u, v, w], -1)
    x = np.asarray(x, float)
    z = np.asarray(z, complex)
    P = np.stack([x, z.real, z.imag], -1)
    J = fd_jacobian(F, P, 1e-3 * P[:, :1] * np.ones(3))
    g = metric_gL(L).g(F(P))
    return float(np.abs(pullback(g, J) * (x ** 2)[:, None, None] - np.eye(3)).max())


def model_checks(seed=0, n_h=1000, n_g=200, n_L=10, n_iso=100):
    """Curvature of h_L and g_L and the isometry chain on random samples.

    Returns max |K + 1| for h_L (ell = 0 included), max |sec + 1| for g_L and
    the isometry-chain matrix error (n_iso points for each of n_L parameter sets).
    """
    from .geometry import gaussian_curvature_fd, sectional_curvatures
    rng = np.random.default_rng(seed)
    kh = 0.0
    for i in range(n_h // 10):
        ell = 0.0 if i % 4 == 0 else rng.uniform(0, 1)
        L = CuspParams(ell, rng.uniform(-3, 3), 1.0, delta=2)
        pts = np.column_stack([rng.uniform(-2, 2, 10), rng.uniform(-.25, .25, 10)])
        kh = max(kh, float(np.abs(gaussian_curvature_fd(boundary_metric_hL(L), pts) + 1).max()))
    kg = 0.0
    for i in range(n_g // 5):
        ell = 0.0 if i % 4 == 0 else rng.uniform(0, 1)
        L = CuspParams(ell, rng.uniform(-3, 3), rng.uniform(0.5, 2), delta=2)
        p = np.column_stack([rng.uniform(0.1, 1, 5), rng.uniform(-1, 1, 5), rng.uniform(-.25, .25, 5)])
        kg = max(kg, float(np.abs(sectional_curvatures(metric_gL(L), p) + 1).max()))
    iso = 0.0
    for _ in range(n_L):
        L = CuspParams(rng.uniform(0.01, 1), rng.uniform(-3, 3), rng.uniform(0.5, 2), delta=2.5)
        xm, zm = sample_target_annulus(rng, L, n_iso)
        x, z = theta_L_inverse(L, xm, zm)
        iso = max(iso, isometry_chain_error(L, x, z))
    return dict(hL_curvature=kh, gL_sectional=kg, isometry_chain=iso)
