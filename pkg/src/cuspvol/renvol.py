"""Finite-part volumes, the conformal variation formula, boundary expansions and
the Schwarzian identities.

Volumes near the cusp are computed per column of the (U, v, w) chart, where
dvol = dU dv dw / (U^3 (1 - U^2)) and {rho >= eps} = {U >= U_eps(v, w)} with
exp(omega(U)) U = eps on each column. Above a switch level U_s the region is
taken whole (rho > eps there for every eps on the grid) and the integral is done
in u, where the density is (u^2 + S)/u^3.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .cusp_model import CuspParams
from .geometry import MetricPatch, christoffel, fd_grad, fd_jacobian, gaussian_curvature_fd, \
    smooth_bump, smooth_step, smooth_step_d
from .hamilton_jacobi import BoundaryData, OmegaField, hj_cusp_solve
from .moebius import MoebiusMap

log = logging.getLogger(__name__)

W_PERIOD = 0.5


class IllConditionedFit(ValueError):
    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"finite-part fit is ill-conditioned (condition number {cond:.3e})")


class QuadratureError(RuntimeError):
    pass


# --- finite parts ---------------------------------------------------------------------

@dataclass
class FinitePartResult:
    a2: float
    a1: float
    a0: float
    residual: float
    eps: np.ndarray
    uncertainty: float
    cond: float
    extra: dict = field(default_factory=dict)
    samples: Optional[np.ndarray] = None

    def as_dict(self):
        return dict(a2=self.a2, a1=self.a1, a0=self.a0, residual=self.residual,
                    uncertainty=self.uncertainty, cond=self.cond, n=int(self.eps.size))


def _fp_design(eps, powers):
    cols = [eps ** -2.0, np.log(eps), np.ones_like(eps)] + [eps ** float(k) for k in powers]
    return np.stack(cols, -1)


def _fp_solve(eps, vals, powers):
    A = _fp_design(eps, powers)
    scale = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, vals, rcond=None)
    return coef / scale, np.linalg.cond(A / scale), A


def finite_part_fit(samples, powers=(1,), cond_max=1e12, min_samples=6, resid_tol=1e-8):
    """Least-squares fit of V(eps) = a2 eps^-2 + a1 log eps + a0 + sum_k c_k eps^k.

    `samples` is a sequence of (eps, V) pairs or a (n, 2) array. The
    uncertainty of a0 is twice the largest change under refits on thinned
    grids (every other sample when there are enough, otherwise dropping either
    end sample).
    """
    s = np.asarray(samples, float)
    eps, vals = s[:, 0], s[:, 1]
    if eps.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {eps.size}")
    if np.any(eps <= 0):
        raise ValueError("eps must be positive")
    order = np.argsort(eps)[::-1]
    eps, vals = eps[order], vals[order]
    powers = tuple(powers)
    coef, cond, A = _fp_solve(eps, vals, powers)
    if not np.isfinite(cond) or cond > cond_max:
        raise IllConditionedFit(cond)
    fit = A @ coef
    scale = np.abs(vals).max() or 1.0
    resid = float(np.sqrt(np.mean((fit - vals) ** 2)) / scale)
    nun = 3 + len(powers)
    refits = []
    for sel in (slice(0, None, 2), slice(1, None, 2), slice(1, None), slice(0, -1)):
        e2, v2 = eps[sel], vals[sel]
        if e2.size >= nun:
            c2, _, _ = _fp_solve(e2, v2, powers)
            refits.append(c2[2])
    unc = 2 * max((abs(r - coef[2]) for r in refits), default=np.inf)
    unc = max(unc, 1e-15 * scale * (eps.min() ** 2))
    if resid > resid_tol:
        log.warning("finite_part_fit: relative residual %.2e above %.1e", resid, resid_tol)
    return FinitePartResult(float(coef[0]), float(coef[1]), float(coef[2]), resid, eps, float(unc),
                            float(cond), {f"eps^{k}": float(c) for k, c in zip(powers, coef[3:])},
                            np.stack([eps, vals], -1))


def geometric_eps(eps0=0.016, n=8, ratio=0.5):
    return eps0 * ratio ** np.arange(n)


def slab_volume(warp, eps, top=1.0):
    """Per unit boundary area: integral of x^-3 warp(x) over [eps, top]."""
    out = []
    for e in np.atleast_1d(eps):
        val, err = integrate.quad(lambda x: warp(x) / x ** 3, e, top, epsabs=0, epsrel=1e-13, limit=200)
        out.append(val)
    return np.array(out)


def slab_finite_part(warp, eps=None, top=1.0, powers=(1, 2)):
    """FP of the product-form slab volume (dx^2 + warp(x) h0)/x^2 per unit area of h0."""
    eps = geometric_eps(0.1, 10, 0.6) if eps is None else np.asarray(eps, float)
    return finite_part_fit(np.stack([eps, slab_volume(warp, eps, top)], -1), powers)


# --- cusp-chart regularized volume ----------------------------------------------------

@dataclass(frozen=True)
class RadialCutoff:
    """chi = W(r), r = sqrt(u^2 + v^2): 1 for r <= delta, 0 for r >= 2 delta."""
    delta: float

    def __call__(self, r):
        return 1 - smooth_step(r, self.delta, 2 * self.delta)

    def d(self, r):
        return -smooth_step_d(r, self.delta, 2 * self.delta)

    @property
    def support(self):
        return 2 * self.delta


def G_vol(U):
    """Antiderivative of 1/(U^3 (1 - U^2))."""
    U = np.asarray(U, float)
    return -0.5 / U ** 2 + np.log(U) - 0.5 * np.log1p(-U * U)


def g_log(U):
    """Antiderivative of 1/(U (1 - U^2))."""
    U = np.asarray(U, float)
    return np.log(U) - 0.5 * np.log1p(-U * U)


def cusp_v_quadrature(L: CuspParams, vmax, n_gl=6, floor=1e-10, max_width=0.02):
    """Nodes and weights on (-vmax, vmax), geometric panels toward v = 0.

    At ell = 0 the column integrand has a log singularity at v = 0; the
    panels stop at `floor`, which costs O(floor |log floor|). Panels wider
    than `max_width` are split evenly (the cutoff transition lives there).
    """
    stop = max(floor, L.ell * 0.125) if L.ell > 0 else floor
    edges = [vmax]
    while edges[-1] > stop:
        edges.append(edges[-1] / 2)
    if L.ell > 0:
        edges.append(0.0)
    edges = edges[::-1]
    fine = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(np.ceil((b - a) / max_width)))
        fine.extend(a + (b - a) * np.arange(1, k + 1) / k)
    edges = np.array(fine)
    x, wt = np.polynomial.legendre.leggauss(n_gl)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * wt).ravel()
    return np.concatenate([-nodes[::-1], nodes]), np.concatenate([weights[::-1], weights])


def solve_U_eps(coeffs, eps, iters=40):
    """U with omega(U) + log U = log eps per column; coeffs (deg+1, ...) power series."""
    eps = np.asarray(eps, float).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    deg = coeffs.shape[0] - 1
    dco = coeffs[1:] * np.arange(1, deg + 1).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    U = eps * np.exp(-coeffs[0])
    for _ in range(iters):
        om = np.zeros(U.shape)
        dom = np.zeros(U.shape)
        for k in range(deg, -1, -1):
            om = om * U + coeffs[k]
        for k in range(deg - 1, -1, -1):
            dom = dom * U + dco[k]
        f = om + np.log(U) - np.log(eps)
        step = f / (dom + 1 / U)
        U = U - step
        if np.abs(step / U).max() < 1e-15:
            break
    return U


def _high_part(L, cutoff, v, u_lo, n_panels=40, n_gl=8):
    """Integral over u in [u_lo, u_top] of W(sqrt(u^2+v^2)) (u^2+S)/u^3, in s = log u."""
    S = v * v + L.ell ** 2
    if cutoff is None:
        return np.zeros_like(v)
    u_top = np.sqrt(np.maximum(cutoff.support ** 2 - v * v, 0.0))
    ok = u_top > u_lo
    s0 = np.log(u_lo)
    s1 = np.log(np.where(ok, u_top, u_lo * 2))
    x, wt = np.polynomial.legendre.leggauss(n_gl)
    t = (np.arange(n_panels)[:, None] + 0.5 * (x + 1)) / n_panels       # (P, n_gl) in [0, 1]
    wts = (0.5 * wt / n_panels)[None, :] * np.ones((n_panels, 1))
    s = s0[..., None, None] + (s1 - s0)[..., None, None] * t
    u = np.exp(s)
    f = cutoff(np.sqrt(u * u + v[..., None, None] ** 2)) * (u * u + S[..., None, None]) / u ** 2
    val = (f * wts).sum(axis=(-1, -2)) * (s1 - s0)
    return np.where(ok, val, 0.0)


@dataclass
class ColumnVolumes:
    eps: np.ndarray
    volumes: np.ndarray           # V(eps) per eps
    low: np.ndarray               # (neps, nv, nw) low parts
    high: np.ndarray              # (nv,)
    U_eps: np.ndarray
    field: OmegaField
    weights: np.ndarray           # (nv, nw)


def column_volumes(fld: OmegaField, v_weights, eps, cutoff: Optional[RadialCutoff] = None, U_s=0.025,
                   n_gl=24):
    """V(eps) = sum over columns of the chi-weighted volume of {rho >= eps}.

    Without a cutoff, chi = 1 on the given columns and the column is cut at
    U = U_s (the part above U_s does not depend on eps).
    """
    L = fld.L
    eps = np.asarray(eps, float)
    if U_s > fld.U_max:
        raise ValueError("U_s must lie inside the solved range")
    coeffs = fld.column_coeffs()
    v = fld.v
    nw = fld.w.size
    S = v * v + L.ell ** 2
    # rho > eps above U_s on every column
    om_s = np.zeros(coeffs.shape[1:])
    for k in range(coeffs.shape[0] - 1, -1, -1):
        om_s = om_s * U_s + coeffs[k]
    if np.any(np.exp(om_s) * U_s <= eps.max() * 1.05):
        raise QuadratureError("eps grid too coarse: {rho >= eps} does not contain U >= U_s")
    if cutoff is not None:
        U_top = np.sqrt(np.maximum(cutoff.support ** 2 - v * v, 0) / (cutoff.support ** 2 + L.ell ** 2))
        U_hi = np.minimum(U_s, U_top)
    else:
        U_hi = np.full(v.shape, U_s)
    Ue = solve_U_eps(coeffs, eps)                                  # (neps, nv, nw)
    if np.any(Ue >= U_hi[None, :, None]):
        raise QuadratureError("some columns have U_eps above the switch level; drop columns near the cutoff edge")
    Uh = U_hi[None, :, None]
    if cutoff is None:
        low = G_vol(Uh) - G_vol(Ue)
        high = np.zeros_like(v)
    else:
        av = np.abs(v)
        chi0 = cutoff(av)
        with np.errstate(invalid="ignore", divide="ignore"):
            chi2 = np.where(av > 0, S * cutoff.d(av) / (2 * np.where(av > 0, av, 1.0)), 0.0)
        low = chi0[None, :, None] * (G_vol(Uh) - G_vol(Ue)) + chi2[None, :, None] * (g_log(Uh) - g_log(Ue))
        # remainder chi - chi0 - chi2 U^2 = O(U^4) by Gauss-Legendre
        x, wt = np.polynomial.legendre.leggauss(n_gl)
        Uq = 0.5 * (Uh - Ue)[..., None] * x + 0.5 * (Uh + Ue)[..., None]
        r = np.sqrt(v[None, :, None, None] ** 2 + Uq ** 2 * S[None, :, None, None] / (1 - Uq ** 2))
        rem = (cutoff(r) - chi0[None, :, None, None] - chi2[None, :, None, None] * Uq ** 2) / (Uq ** 3 * (1 - Uq ** 2))
        low = low + (rem * wt).sum(-1) * 0.5 * (Uh - Ue)
        u_lo = U_hi * np.sqrt(S / (1 - U_hi ** 2))
        high = _high_part(L, cutoff, v, u_lo)
    wv = np.asarray(v_weights, float)
    W = wv[:, None] * np.full((1, nw), W_PERIOD / nw)
    vols = ((low + high[None, :, None]) * W[None]).sum(axis=(1, 2))
    return ColumnVolumes(eps, vols, low, high, Ue, fld, W)


def cusp_regularized_volume(L: CuspParams, data: BoundaryData, cutoff: Optional[RadialCutoff], eps=None,
                            v_nodes=None, v_weights=None, n_w=1, U_max=0.03, U_s=0.025, n_levels=8,
                            powers=(1, 2, 3)):
    """FP of the chi-weighted volume of {rho >= eps} in the cusp chart.

    rho comes from the Hamilton-Jacobi solve for `data`; chi is a radial cutoff
    (or None: chi = 1 on the given columns). Returns (FinitePartResult, ColumnVolumes).
    """
    eps = geometric_eps() if eps is None else np.asarray(eps, float)
    if v_nodes is None:
        if cutoff is None:
            raise ValueError("v nodes are required without a cutoff")
        v_nodes, v_weights = cusp_v_quadrature(L, cutoff.support * 0.99)
    w_nodes = np.arange(n_w) * (W_PERIOD / n_w)
    fld = hj_cusp_solve(L, data, v_nodes, w_nodes, U_max=U_max, n_levels=n_levels)
    if not fld.valid.all():
        raise QuadratureError(f"{(~fld.valid).sum()} HJ nodes flagged invalid")
    cv = column_volumes(fld, v_weights, eps, cutoff, U_s)
    return finite_part_fit(np.stack([eps, cv.volumes], -1), powers), cv


# --- the conformal variation formula ----------------------------------------------------

def hyperbolic_factor(L: CuspParams) -> float:
    """h_L = exp(2 c) h_ell with c = log(1 + nu^2)/2."""
    return 0.5 * np.log1p(L.nu ** 2)


def check_compliant(L: CuspParams, psi: BoundaryData, v_band=0.05, n=64):
    """At ell = 0, psi must not depend on w near v = 0."""
    if L.ell > 0:
        return True
    v = np.linspace(-v_band, v_band, n)
    w = np.linspace(0, W_PERIOD, 9)
    V, W = np.meshgrid(v, w, indexing="ij")
    _, pw = psi.dv_dw(V, W)
    if np.abs(pw).max() > 1e-12:
        raise ValueError("psi is not cusp-compliant: it depends on w near v = 0")
    return True


def random_compliant_psi(seed=0, band=(0.1, 0.2, 0.35, 0.5), amp=(0.1, 0.05, 0.05)) -> BoundaryData:
    """psi = bump(v) (c0 + g cos 4 pi w + k sin 4 pi w), compactly supported in v.

    The bump is 1 on [band[1], band[2]] and 0 outside (band[0], band[3]), so psi
    is compliant whenever band[0] > 0.
    """
    rng = np.random.default_rng(seed)
    c0, g, k = rng.uniform(-1, 1, 3) * np.asarray(amp, float)
    om = 4 * np.pi

    def f(v, w):
        b, _ = smooth_bump(v, *band)
        return b * (c0 + g * np.cos(om * w) + k * np.sin(om * w))

    def grad(v, w):
        v, w = np.broadcast_arrays(np.asarray(v, float), np.asarray(w, float))
        b, db = smooth_bump(v, *band)
        return (db * (c0 + g * np.cos(om * w) + k * np.sin(om * w)),
                b * om * (-g * np.sin(om * w) + k * np.cos(om * w)))
    return BoundaryData(f, grad, f"bump(seed={seed})")


def conformal_variation(L: CuspParams, psi: BoundaryData, v_nodes, v_weights, n_w=32):
    """-1/4 int (|d psi|^2 - 2 psi) dvol over the hyperbolic boundary metric h_L.

    In (v, w): |d psi|^2_{h_L} dvol_{h_L} = |d psi|^2_{h_ell} dv dw and
    dvol_{h_L} = (1 + nu^2) dv dw.
    """
    check_compliant(L, psi)
    w = np.arange(n_w) * (W_PERIOD / n_w)
    V, W = np.meshgrid(np.asarray(v_nodes, float), w, indexing="ij")
    pv, pw = psi.dv_dw(V, W)
    S = V * V + L.ell ** 2
    f = 1 + L.nu ** 2
    # inverse of h_ell = [[1/S, nu], [nu, S f]]
    grad2 = S * f * pv ** 2 - 2 * L.nu * pv * pw + pw ** 2 / S
    dens = grad2 - 2 * f * psi(V, W)
    return float(-0.25 * (dens.mean(axis=1) * W_PERIOD * np.asarray(v_weights)).sum())


def first_variation(L: CuspParams, psi: BoundaryData, v_nodes, v_weights, n_w=32):
    """d/dt at t = 0 of Vol_R(exp(2 t psi) h_L): (1/2) int psi dvol_{h_L}."""
    w = np.arange(n_w) * (W_PERIOD / n_w)
    V, W = np.meshgrid(np.asarray(v_nodes, float), w, indexing="ij")
    return float(0.5 * (1 + L.nu ** 2) * (psi(V, W).mean(axis=1) * W_PERIOD * np.asarray(v_weights)).sum())


@dataclass
class VariationCheck:
    direct: FinitePartResult
    formula: float
    column_identity: float
    rel_error: float


def conformal_variation_direct(L: CuspParams, psi: BoundaryData, v_support, n_gl=12, panel=0.05, n_w=16,
                               eps=None, margin=0.02, U_max=0.03, U_s=0.025):
    """Difference of the regularized volumes for exp(2 psi) h_L and h_L.

    Both runs use the same columns over the v-support of psi (plus a margin
    for the drift of characteristics), each with its own HJ solve; the
    difference of the column volumes is fitted. Also returns the formula value
    and the per-column identity int (Delta a2 + psi) dv dw. The v-rule is
    composite Gauss-Legendre (n_gl nodes on panels of width <= panel): the
    edges of a compactly supported psi are steep, and one global rule
    under-resolves |d psi|^2 there.
    """
    check_compliant(L, psi)
    eps = geometric_eps(0.016, 8) if eps is None else np.asarray(eps, float)
    a, b = v_support[0] - margin, v_support[1] + margin
    x, wt = np.polynomial.legendre.leggauss(n_gl)
    edges = np.linspace(a, b, int(np.ceil((b - a) / panel)) + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    v = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    wv = (0.5 * (hi - lo) * wt).ravel()
    c = hyperbolic_factor(L)
    base = BoundaryData.constant(c)
    w_nodes = np.arange(n_w) * (W_PERIOD / n_w)
    f0 = hj_cusp_solve(L, base, v, w_nodes[:1], U_max=U_max)
    f1 = hj_cusp_solve(L, base + psi, v, w_nodes, U_max=U_max)
    for f in (f0, f1):
        if not f.valid.all():
            raise QuadratureError("HJ nodes flagged invalid")
    cv0 = column_volumes(f0, wv, eps, None, U_s)
    cv1 = column_volumes(f1, wv, eps, None, U_s)
    dV = cv1.volumes - cv0.volumes
    fp = finite_part_fit(np.stack([eps, dV], -1), powers=(1, 2, 3))
    rhs = conformal_variation(L, psi, v, wv, n_w=max(n_w, 32))
    from .hamilton_jacobi import expansion_coeffs
    a2_0 = expansion_coeffs(f0)[2]
    a2_1 = expansion_coeffs(f1)[2]
    V, W = np.meshgrid(v, w_nodes, indexing="ij")
    col = ((a2_1 - a2_0 + psi(V, W)).mean(axis=1) * W_PERIOD * wv).sum()
    return VariationCheck(fp, rhs, float(col), abs(fp.a0 - rhs) / max(abs(rhs), 1e-300))


# --- boundary expansion --------------------------------------------------------------------

@dataclass
class BoundaryExpansion:
    pts: np.ndarray
    h0: np.ndarray
    h2: np.ndarray
    h4: np.ndarray
    trace_residual: float
    div_residual: float
    h4_residual: float
    normal_form_error: float

    @property
    def A(self):
        return np.linalg.solve(self.h0, self.h2)

    @property
    def h2_0(self):
        """h2 - h0/2."""
        return self.h2 - 0.5 * self.h0


def _fit_levels(patch: MetricPatch, pts, levels, order):
    """h_x = x^2 g_yy at the levels, fitted as a polynomial in x^2 per point."""
    pts = np.asarray(pts, float)
    X = np.concatenate([np.broadcast_to(x, pts.shape[:-1] + (1,)) for x in levels[:1]], -1)
    hs, nf = [], 0.0
    for x in levels:
        q = np.concatenate([np.full(pts.shape[:-1] + (1,), x), pts], -1)
        g = patch.metric(q) * x * x
        nf = max(nf, float(np.abs(g[..., 0, 0] - 1).max()), float(np.abs(g[..., 0, 1:]).max()))
        hs.append(g[..., 1:, 1:])
    H = np.stack(hs, 0)                                         # (nl, ..., 2, 2)
    Vm = np.vander(np.asarray(levels) ** 2, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(Vm, H.reshape(len(levels), -1), rcond=None)
    return coef.reshape((order + 1,) + H.shape[1:]), nf


def boundary_expansion(patch: MetricPatch, pts, levels=None, order=4, h=1e-3):
    """h0, h2, h4 of a metric in geodesic normal form g = (dx^2 + h_x)/x^2.

    `patch` is a 3D MetricPatch in coordinates (x, y1, y2). The constraint
    residuals use finite differences of the fitted h0 and h2 in y.
    """
    levels = np.cos(np.linspace(0, np.pi / 2, 9)[::-1][1:]) * 0.3 if levels is None else np.asarray(levels)
    levels = np.sort(np.asarray(levels, float))
    if levels.size < 5:
        raise ValueError("need at least 5 x-levels")
    pts = np.atleast_2d(np.asarray(pts, float))
    coef, nf = _fit_levels(patch, pts, levels, order)
    if not np.all(np.isfinite(coef)):
        raise ValueError("expansion fit is unstable")
    h0, h2, h4 = coef[0], coef[1], coef[2]

    def tensor(k):
        return lambda q: _fit_levels(patch, q, levels, order)[0][k]
    steps = np.full(pts.shape, h)
    dh0 = fd_grad(tensor(0), pts, steps)                        # (..., 2, 2, 2) last = derivative
    dh2 = fd_grad(tensor(1), pts, steps)
    h0patch = MetricPatch("h0", 2, tensor(0))
    # curvature needs two derivatives and dScal three: wider 4th-order steps keep roundoff down
    scal = 2 * gaussian_curvature_fd(h0patch, pts, rel=3 * h)
    dscal = fd_grad(lambda q: 2 * gaussian_curvature_fd(h0patch, q, rel=3 * h), pts,
                    np.full(pts.shape, 6 * h))
    h0i = np.linalg.inv(h0)
    tr = np.einsum("...ij,...ji->...", h0i, h2)
    Gam = christoffel(h0, dh0)                                 # Gamma^l_{ki}
    # (nabla_k h2)_{ij}
    nab = (np.moveaxis(dh2, -1, -3)
           - np.einsum("...lki,...lj->...kij", Gam, h2)
           - np.einsum("...lkj,...il->...kij", Gam, h2))
    div = -np.einsum("...ik,...kij->...j", h0i, nab)          # delta = -div
    A = np.linalg.solve(h0, h2)
    h4_pred = 0.25 * np.einsum("...ij,...jk,...kl->...il", h0, A, A)
    return BoundaryExpansion(
        pts, h0, h2, h4,
        float(np.abs(tr + 0.5 * scal).max()),
        float(np.abs(div - 0.5 * dscal).max()),
        float(np.abs(h4 - h4_pred).max()),
        nf,
    )


def funnel_patch(h0: Callable, warp=lambda x: (1 + x * x / 4) ** 2):
    """(dx^2 + warp(x) h0(y))/x^2 in (x, y1, y2)."""
    def metric(p):
        x = p[..., 0]
        g = np.zeros(p.shape[:-1] + (3, 3))
        g[..., 0, 0] = 1.0
        g[..., 1:, 1:] = warp(x)[..., None, None] * h0(p[..., 1:])
        return g / (x * x)[..., None, None]
    return MetricPatch("funnel", 3, metric)


def hyperbolic_plane_metric(q):
    y = q[..., 1]
    g = np.zeros(q.shape[:-1] + (2, 2))
    g[..., 0, 0] = g[..., 1, 1] = 1 / (y * y)
    return g


# --- variation of Vol_R along surrogate families ----------------------------------------------

def volR_derivative(volR: Callable, h0: Callable, h2: Callable, t0: float, pts, weights, dt=1e-4,
                    trace_tol=1e-8):
    """Finite-difference dVol_R/dt against -1/4 int <h0', h2 - c h0> dvol at t0.

    Returns a dict with the difference quotient and both pairings (c = 1/2,
    the trace-free normalisation, and c = 1). When h0' is not trace-free the
    two pairings differ and no agreement is claimed.
    """
    fd = (volR(t0 + dt) - volR(t0 - dt)) / (2 * dt)
    H0 = h0(t0, pts)
    Hd = (h0(t0 + dt, pts) - h0(t0 - dt, pts)) / (2 * dt)
    H2 = h2(t0, pts)
    inv = np.linalg.inv(H0)
    vol = np.sqrt(np.linalg.det(H0)) * np.asarray(weights)

    def pair(T):
        return float(-0.25 * (np.einsum("...ij,...jk,...kl,...li->...", inv, Hd, inv, T) * vol).sum())
    trace = np.einsum("...ij,...ji->...", inv, Hd)
    tf = bool(np.abs(trace).max() < trace_tol)
    return dict(fd=float(fd), pairing_half=pair(H2 - 0.5 * H0), pairing_one=pair(H2 - H0),
                trace_free=tf, max_trace=float(np.abs(trace).max()))


# --- Schwarzian and Liouville identities -------------------------------------------------------

def _cauchy_derivs(f, z, r=0.05, n=64):
    """f, f', f'', f''' at z by the trapezoid rule on |zeta - z| = r."""
    z = np.asarray(z, complex)
    th = 2 * np.pi * np.arange(n) / n
    e = np.exp(1j * th)
    vals = f(z[..., None] + r * e)
    out = []
    for k in range(4):
        out.append(math.factorial(k) * (vals * e ** (-k)).mean(-1) / r ** k)
    return out


def schwarzian(f, z, r=0.05, n=64, fprime_floor=1e-12):
    """S(f) = (f''/f')' - (1/2)(f''/f')^2 = f'''/f' - (3/2)(f''/f')^2.

    `f` may be a MoebiusMap (S = 0 exactly), a sympy expression in z, or a
    callable analytic on the disc |zeta - z| <= r (Cauchy integrals).
    """
    if isinstance(f, MoebiusMap):
        return np.zeros(np.shape(z), complex) if np.ndim(z) else 0j
    try:
        import sympy as sp
        if isinstance(f, sp.Expr):
            zs = sorted(f.free_symbols, key=str)
            if len(zs) != 1:
                raise ValueError("expression must depend on one symbol")
            s = zs[0]
            d1 = sp.diff(f, s)
            S = sp.simplify(sp.diff(f, s, 3) / d1 - sp.Rational(3, 2) * (sp.diff(f, s, 2) / d1) ** 2)
            d1v = complex(d1.subs(s, z)) if np.ndim(z) == 0 else None
            if d1v is not None and abs(d1v) < fprime_floor:
                raise ValueError("f' vanishes at z")
            fn = sp.lambdify(s, S, "numpy")
            return fn(np.asarray(z, complex))
    except ImportError:  # pragma: no cover
        pass
    _, d1, d2, d3 = _cauchy_derivs(f, z, r, n)
    if np.any(np.abs(d1) < fprime_floor):
        raise ValueError("f' vanishes near z")
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


def _complex_derivs_real(phi, z, h=1e-3):
    """d_z phi, d_z^2 phi, d_z d_zbar phi of a real function by 4th-order differences."""
    z = np.asarray(z, complex)
    p = np.stack([z.real, z.imag], -1)

    def f(q):
        return phi(q[..., 0] + 1j * q[..., 1])
    g = fd_grad(f, p, np.full(p.shape, h))
    H = fd_grad(lambda q: fd_grad(f, q, np.full(q.shape, h)), p, np.full(p.shape, h))
    fx, fy = g[..., 0], g[..., 1]
    fxx, fxy, fyy = H[..., 0, 0], 0.5 * (H[..., 0, 1] + H[..., 1, 0]), H[..., 1, 1]
    dz = 0.5 * (fx - 1j * fy)
    dzz = 0.25 * (fxx - 2j * fxy - fyy)
    dzzb = 0.25 * (fxx + fyy)
    return dz, dzz, dzzb


def pullback_liouville_field(J, r=0.05):
    """phi with exp(phi)|dz|^2 = J^*(|d zeta|^2 / (Im zeta)^2)."""
    def phi(z):
        z = np.asarray(z, complex)
        j, d1, _, _ = _cauchy_derivs(J, z, r)
        if np.any(j.imag <= 0):
            raise ValueError("J does not map into the upper half-plane")
        return np.log(np.abs(d1) ** 2 / j.imag ** 2)
    return phi


def liouville_schwarzian_identity(phi, J, pts, h=1e-3):
    """sup |d_z^2 phi - (1/2)(d_z phi)^2 - S(J)| over pts."""
    pts = np.asarray(pts, complex)
    if np.any(~np.isfinite(phi(pts))):
        raise ValueError("exp(phi) must be positive")
    dz, dzz, _ = _complex_derivs_real(phi, pts, h)
    lhs = dzz - 0.5 * dz ** 2
    rhs = schwarzian(J, pts)
    return float(np.abs(lhs - rhs).max())


def fuchsian_normal_map(M: MoebiusMap):
    """(rho, y1, y2) -> half-space (x, Re, Im) in geodesic normal coordinates over M(H^2).

    Over the upper half-plane the equidistant surfaces from the vertical
    plane over R are the cones Im = x sinh t, with foot point a + iX at height
    X; rho = 2 exp(-t). M acts through its Poincare extension.
    """
    Minv = M.inverse()

    def F(p):
        rho, zp = p[..., 0], p[..., 1] + 1j * p[..., 2]
        z = Minv(zp)
        a, X = z.real, z.imag
        t = np.log(2 / rho)
        x, zz = X / np.cosh(t), a + 1j * X * np.tanh(t)
        xo, zo = M.extend(x, zz)
        return np.stack([xo, zo.real, zo.imag], -1)
    return F


def normal_form_patch(F, h=2e-3):
    """Pullback of the half-space metric by F, with a 4th-order FD Jacobian (relative step h)."""
    def metric(p):
        q = F(p)
        J = fd_jacobian(F, p, np.full(p.shape, h) * np.maximum(np.abs(p), 1e-3))
        return np.einsum("...ai,...aj->...ij", J, J) / (q[..., 0] ** 2)[..., None, None]
    return MetricPatch("normal", 3, metric)


def epstein_tensor(phi, pts, h=1e-3):
    """Re((d^2 phi - (1/2)(d phi)^2) dz^2) + d dbar phi |dz|^2 as a 2x2 tensor in (y1, y2)."""
    z = pts[..., 0] + 1j * pts[..., 1]
    dz, dzz, dzzb = _complex_derivs_real(phi, z, h)
    Q = dzz - 0.5 * dz ** 2
    out = np.empty(z.shape + (2, 2))
    out[..., 0, 0] = Q.real + dzzb
    out[..., 1, 1] = -Q.real + dzzb
    out[..., 0, 1] = out[..., 1, 0] = -Q.imag
    return out


def epstein_expansion_check(M: MoebiusMap, pts, levels=None):
    """Compare the rho^2 coefficient of the exact half-space metric in normal
    coordinates over M(H^2) with the Epstein formula from phi.

    Returns (residual, BoundaryExpansion).
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    Minv = M.inverse()

    def phi(zp):
        z = Minv(zp)
        return -2 * np.log(z.imag) + np.log(np.abs(Minv.derivative(zp)) ** 2)
    levels = np.linspace(0.02, 0.12, 7) if levels is None else levels
    patch = normal_form_patch(fuchsian_normal_map(M))
    coef, nf = _fit_levels(patch, pts, np.asarray(levels), 3)
    h0 = coef[0]
    e0 = np.exp(phi(pts[..., 0] + 1j * pts[..., 1]))
    if np.abs(h0 - e0[..., None, None] * np.eye(2)).max() > 1e-6 * e0.max():
        raise ValueError("normal coordinates do not induce exp(phi)|dz|^2")
    res = float(np.abs(coef[1] - epstein_tensor(phi, pts)).max() / e0.max())
    return res, coef, nf
