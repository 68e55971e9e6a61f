"""Curvature -1 conformal factors on collar and cusp charts.

We solve  Delta h phi = -exp(2 phi) - K_h  (Delta = positive Laplacian,
Scal = 2K) so that exp(2 phi) h is hyperbolic. Charts are products
[v0, v1] x (R / (1/2) Z) with a graded node map v = m(xi); each v-end carries
either Dirichlet data or the cusp condition

    v phi_v + 1 - exp(phi) = 0,

which is exact when phi = -log(1 + a v) near the end (the conformal factor
between two hyperbolic cusp metrics on the same punctured disc).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .cusp_model import CuspParams
from .geometry import MetricPatch, gaussian_curvature_fd, smooth_step

log = logging.getLogger(__name__)

W_PERIOD = 0.5
STALL_TOL = 1e-8


class LiouvilleError(RuntimeError):
    pass


class NoHyperbolicRepresentative(LiouvilleError):
    pass


class NewtonDiverged(LiouvilleError):
    def __init__(self, history):
        self.history = list(history)
        super().__init__(f"Newton iteration did not converge; residual history {self.history}")


def cusp_test_factor(a=0.7, amp=0.01, cut=(0.1, 0.9), band=(0.15, 0.45, 0.55, 0.85)):
    """psi(v, w) equal to -log(1 + a|v|) near v = 0, cut off to 0 past |v| = cut[1],
    plus a w-dependent part supported in the band of |v|.

    exp(-2 psi) h_L then has exactly psi as its curvature -1 factor with cusp constant a.
    """
    def psi(v, w):
        av = np.abs(np.asarray(v, float))
        lo = smooth_step(av, band[0], band[1]) * (1 - smooth_step(av, band[2], band[3]))
        return (-np.log1p(a * av) * (1 - smooth_step(av, *cut))
                + amp * lo * np.cos(4 * np.pi * np.asarray(w, float)))
    return psi


# --- node maps ---------------------------------------------------------------------

@dataclass(frozen=True)
class NodeMap:
    """v = m(xi) on an interval of xi; m is monotone (decreasing for the v < 0 log map)."""
    kind: str
    xi0: float
    xi1: float
    scale: float = 1.0
    sign: float = 1.0

    def v(self, xi):
        xi = np.asarray(xi, float)
        if self.kind == "uniform":
            return xi
        if self.kind == "sinh":
            return self.scale * np.sinh(xi)
        if self.kind == "log":
            return self.sign * np.exp(xi)
        raise ValueError(self.kind)

    def dv(self, xi):
        xi = np.asarray(xi, float)
        if self.kind == "uniform":
            return np.ones_like(xi)
        if self.kind == "sinh":
            return self.scale * np.cosh(xi)
        if self.kind == "log":
            return self.sign * np.exp(xi)
        raise ValueError(self.kind)

    def xi(self, v):
        v = np.asarray(v, float)
        if self.kind == "uniform":
            return v
        if self.kind == "sinh":
            return np.arcsinh(v / self.scale)
        return np.log(self.sign * v)

    @classmethod
    def for_range(cls, v0, v1, kind="uniform", scale=1.0):
        if kind == "uniform":
            return cls("uniform", v0, v1)
        if kind == "sinh":
            return cls("sinh", float(np.arcsinh(v0 / scale)), float(np.arcsinh(v1 / scale)), scale)
        if kind == "log":
            if v0 * v1 <= 0:
                raise ValueError("log grading needs a range on one side of v = 0")
            s = 1.0 if v0 > 0 else -1.0
            a, b = sorted((np.log(abs(v0)), np.log(abs(v1))))
            return cls("log", a, b, 1.0, s)
        raise ValueError(f"unknown grading {kind!r}")


# --- surfaces ----------------------------------------------------------------------

@dataclass
class End:
    kind: str                               # "dirichlet" or "cusp"
    value: Optional[Callable] = None        # w -> phi for dirichlet

    @classmethod
    def dirichlet(cls, value=0.0):
        if callable(value):
            return cls("dirichlet", value)
        c = float(value)
        return cls("dirichlet", lambda w: np.full(np.shape(w), c))

    @classmethod
    def cusp(cls):
        return cls("cusp")


@dataclass
class CollarChart:
    """Metric h(v, w) (shape (..., 2, 2)) on [v0, v1] x R/(1/2)Z."""
    metric: Callable
    v_range: tuple
    ends: tuple                              # End at xi0 and at xi1 (in xi order)
    grading: str = "uniform"
    grading_scale: float = 1.0
    curvature: Optional[Callable] = None     # (v, w) -> K, optional override
    marker: Optional[tuple] = None           # (ell, nu) of the collar/cusp
    name: str = "collar"

    def node_map(self):
        v0, v1 = self.v_range
        return NodeMap.for_range(v0, v1, self.grading, self.grading_scale)

    def length_scale(self, v):
        ell = self.marker[0] if self.marker else 0.0
        return np.maximum(np.sqrt(np.asarray(v, float) ** 2 + ell ** 2), 1e-6)

    def patch(self):
        def metric(p):
            return self.metric(p[..., 0], p[..., 1])

        def scale(p):
            s = np.ones(p.shape)
            s[..., 0] = self.length_scale(p[..., 0])
            s[..., 1] = 0.05
            return s
        v0, v1 = sorted(self.v_range)
        return MetricPatch(self.name, 2, metric, domain=lambda p: (p[..., 0] >= v0) & (p[..., 0] <= v1),
                           scale=scale)

    def K(self, v, w):
        if self.curvature is not None:
            return self.curvature(v, w)
        pts = np.stack(np.broadcast_arrays(np.asarray(v, float), np.asarray(w, float)), -1)
        p = self.patch()
        h = p.steps(pts, 2e-3)
        lo, hi = sorted(self.v_range)
        # keep the stencil inside the chart near the ends
        h[..., 0] = np.minimum(h[..., 0], 0.24 * np.maximum(np.minimum(pts[..., 0] - lo, hi - pts[..., 0]), 1e-12))
        return _curv_with_steps(p, pts, h)


def _curv_with_steps(patch, pts, h):
    from .geometry import fd_grad, riemann_lower
    g = patch.metric(pts)
    dg = fd_grad(patch.metric, pts, h)
    ddg = fd_grad(lambda q: fd_grad(patch.metric, q, h), pts, h)
    ddg = 0.5 * (ddg + np.swapaxes(ddg, -1, -2))
    R = riemann_lower(g, dg, ddg)
    return R[..., 0, 1, 0, 1] / (g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)


@dataclass
class SurfaceMetric:
    """An atlas of collar/cusp charts. Each chart without transitions is solved on its own."""
    charts: list
    transitions: list = field(default_factory=list)   # (i, j, map (v,w)->(v,w)) pairs

    def check_transitions(self, n=50, tol=1e-10, seed=0):
        """Sup error of the isometry property of each transition on random points."""
        from .geometry import fd_jacobian, pullback
        rng = np.random.default_rng(seed)
        errs = []
        for i, j, f in self.transitions:
            ci, cj = self.charts[i], self.charts[j]
            lo, hi = sorted(ci.v_range)
            p = np.stack([rng.uniform(lo, hi, n), rng.uniform(0, W_PERIOD, n)], -1)
            q = f(p)
            J = fd_jacobian(f, p, np.full(p.shape, 1e-5))
            a = pullback(cj.metric(q[..., 0], q[..., 1]), J)
            b = ci.metric(p[..., 0], p[..., 1])
            errs.append(float(np.abs(a - b).max()))
        if errs and max(errs) > tol:
            raise ValueError(f"transition maps are not isometries (error {max(errs):.2e})")
        return errs


def hL_metric(L: CuspParams):
    """h_L = (1 + nu^2) h_ell as a (v, w) metric callable."""
    ell, nu = L.ell, L.nu

    def metric(v, w):
        v, w = np.broadcast_arrays(np.asarray(v, float), np.asarray(w, float))
        S = v * v + ell * ell
        f = 1 + nu * nu
        out = np.empty(v.shape + (2, 2))
        out[..., 0, 0] = f / S
        out[..., 0, 1] = out[..., 1, 0] = f * nu
        out[..., 1, 1] = f * f * S
        return out
    return metric


def conformal_metric(metric, sigma):
    """exp(2 sigma) metric."""
    def m(v, w):
        return np.exp(2 * sigma(v, w))[..., None, None] * metric(v, w)
    return m


def collar_surface(L: CuspParams, psi=None, A=1.0, ends=None, v_min=1e-3, name="collar",
                   grading="sinh"):
    """h = exp(-2 psi) h_L on a collar (ell > 0, one chart over [-A, A]) or on
    the two cusp halves (ell = 0, charts [-A, -v_min] and [v_min, A])."""
    base = hL_metric(L)
    metric = base if psi is None else conformal_metric(base, lambda v, w: -psi(v, w))
    d0, d1 = ends if ends is not None else (End.dirichlet(0.0), End.dirichlet(0.0))
    if L.ell > 0:
        ch = CollarChart(metric, (-A, A), (d0, d1), grading, L.ell, marker=(L.ell, L.nu), name=name)
        return SurfaceMetric([ch])
    left = CollarChart(metric, (-A, -v_min), (d0, End.cusp()), "log", marker=(0.0, L.nu),
                       name=name + "-")
    right = CollarChart(metric, (v_min, A), (End.cusp(), d1), "log", marker=(0.0, L.nu),
                        name=name + "+")
    # in xi order the left chart runs from v = -v_min (xi small) to v = -A
    left.ends = (End.cusp(), d0)
    return SurfaceMetric([left, right])


def gaussian_curvature(h, pt, chart=0):
    """Gaussian curvature of a SurfaceMetric chart (or a 2D MetricPatch) at pt = (v, w)."""
    pt = np.asarray(pt, float)
    if isinstance(h, MetricPatch):
        return gaussian_curvature_fd(h, pt)
    ch = h.charts[chart] if isinstance(h, SurfaceMetric) else h
    lo, hi = sorted(ch.v_range)
    step = 2 * 2e-3 * ch.length_scale(pt[..., 0])
    if np.any(pt[..., 0] - step < lo) or np.any(pt[..., 0] + step > hi):
        raise ValueError("finite-difference stencil crosses the chart boundary")
    return gaussian_curvature_fd(ch.patch(), pt)


# --- the discrete problem -------------------------------------------------------------

@dataclass
class ConformalFactor:
    chart: CollarChart
    xi: np.ndarray
    w: np.ndarray
    phi: np.ndarray             # (n_xi, n_w)
    K: np.ndarray
    residual: float
    history: list
    grid: tuple

    @property
    def v(self):
        return self.chart.node_map().v(self.xi)

    @classmethod
    def from_function(cls, chart, f, n_xi=257, n_w=32):
        """Sample a known factor f(v, w) on the solver grid (no solve)."""
        nm, xi, w = _grid(chart, n_xi, n_w)
        X, Wg = np.meshgrid(xi, w, indexing="ij")
        V = nm.v(X)
        return cls(chart, xi, w, f(V, Wg), np.full(V.shape, np.nan), 0.0, [], (n_xi, n_w))

    def cusp_remainder(self, end=0):
        """(v, r, v r_v, v^2 r_vv) with r = phi + log(1 + a|v|) at a cusp end, w-averaged."""
        a = self.cusp_constants()[end]
        if a is None:
            raise ValueError("not a cusp end")
        v = np.abs(self.v)
        r = self.phi.mean(axis=1) + np.log1p(a * v)
        t = np.log(v)                       # v d/dv = d/dt
        r1 = np.gradient(r, t)
        r2 = np.gradient(r1, t) - r1
        return v, r, r1, r2

    def cusp_constants(self):
        """a with phi ~ -log(1 + a v) at each cusp end (None for Dirichlet ends)."""
        out = []
        for k, e in zip((0, -1), self.chart.ends):
            if e.kind != "cusp":
                out.append(None)
                continue
            v = self.v[k]
            out.append(float(np.mean((np.exp(-self.phi[k]) - 1) / abs(v))))
        return out

    def __call__(self, v, w):
        """Spline in xi, trigonometric in w."""
        nm = self.chart.node_map()
        xi = nm.xi(np.asarray(v, float))
        cs = CubicSpline(self.xi, self.phi, axis=0)
        cols = cs(np.atleast_1d(xi).ravel())              # (n, n_w)
        coef = np.fft.rfft(cols, axis=1) / self.w.size
        k = np.arange(coef.shape[1])
        ww = np.atleast_1d(np.asarray(w, float)).ravel()
        ph = np.exp(2j * np.pi * np.outer(ww, k) / W_PERIOD)  # (m, nk)
        wts = np.where((k == 0) | ((self.w.size % 2 == 0) & (k == self.w.size // 2)), 1.0, 2.0)
        vals = np.real(np.einsum("nk,mk->nm", coef * wts, ph))
        if np.ndim(v) == 0 and np.ndim(w) == 0:
            return float(vals[0, 0])
        if np.shape(v) == np.shape(w):
            return np.diagonal(vals).reshape(np.shape(v))
        return vals

    def gradient(self):
        """(phi_v, phi_w) at the nodes: 4th-order differences in xi, spectral in w."""
        h = self.xi[1] - self.xi[0]
        f = self.phi
        d = np.empty_like(f)
        d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
        d[:2] = (-25 * f[0:2] + 48 * f[1:3] - 36 * f[2:4] + 16 * f[3:5] - 3 * f[4:6]) / (12 * h)
        d[-2:] = (25 * f[-2:] - 48 * f[-3:-1] + 36 * f[-4:-2] - 16 * f[-5:-3] + 3 * f[-6:-4]) / (12 * h)
        mp = self.chart.node_map().dv(self.xi)[:, None]
        k = np.fft.rfftfreq(self.w.size, d=W_PERIOD / self.w.size) * 2 * np.pi
        c = np.fft.rfft(f, axis=1)
        if self.w.size % 2 == 0:
            c[:, -1] = 0.0
        fw = np.fft.irfft(1j * k * c, n=self.w.size, axis=1)
        return d / mp, fw


def _grid(chart: CollarChart, n_xi, n_w):
    nm = chart.node_map()
    xi = np.linspace(nm.xi0, nm.xi1, n_xi)
    w = np.arange(n_w) * (W_PERIOD / n_w)
    return nm, xi, w


def fourier_diff(m, period):
    """Dense spectral differentiation matrix on m equispaced periodic nodes."""
    k = np.fft.rfftfreq(m, d=period / m) * 2 * np.pi
    mult = 1j * k
    if m % 2 == 0:
        mult[-1] = 0.0
    return np.fft.irfft(mult[:, None] * np.fft.rfft(np.eye(m), axis=0), n=m, axis=0)


def _operator(chart: CollarChart, nm, xi, w):
    """Sparse matrix of the positive Laplacian on the (xi, w) grid (all rows; ends overwritten)."""
    n, m = xi.size, w.size
    hx = xi[1] - xi[0]

    def coeffs(X, Wg):
        v = nm.v(X)
        mp = nm.dv(X)
        hv = chart.metric(v, Wg)
        # metric in (xi, w)
        g = hv.copy()
        g[..., 0, 0] *= mp * mp
        g[..., 0, 1] *= mp
        g[..., 1, 0] *= mp
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        sq = np.sqrt(det)
        return sq, sq * g[..., 1, 1] / det, -sq * g[..., 0, 1] / det, sq * g[..., 0, 0] / det

    X, Wg = np.meshgrid(xi, w, indexing="ij")
    sq, _, b, c = coeffs(X, Wg)
    Xh, Wh = np.meshgrid(0.5 * (xi[1:] + xi[:-1]), w, indexing="ij")
    _, a_half, _, _ = coeffs(Xh, Wh)                  # (n-1, m) at xi_{i+1/2}

    # xi: 2nd-order differences; w: Fourier differentiation (periodic)
    main = np.zeros((n, m))
    up = np.zeros((n, m))
    lo = np.zeros((n, m))
    up[1:-1] = a_half[1:] / hx ** 2
    lo[1:-1] = a_half[:-1] / hx ** 2
    main[1:-1] = -(a_half[1:] + a_half[:-1]) / hx ** 2
    Axx = sp.diags([main.ravel(), up.ravel()[:-m], lo.ravel()[m:]], [0, m, -m], format="csr")
    Dw = sp.kron(sp.identity(n), sp.csr_matrix(fourier_diff(m, W_PERIOD)), format="csr")
    dx = np.zeros(n)
    dx[1:-1] = 1.0
    Dx1 = sp.diags([dx[:-1] / (2 * hx), -dx[1:] / (2 * hx)], [1, -1])
    Dx = sp.kron(Dx1, sp.identity(m), format="csr")
    B = sp.diags(b.ravel())
    C = sp.diags(c.ravel())
    L = Axx + Dx @ B @ Dw + Dw @ B @ Dx + Dw @ C @ Dw
    A = sp.diags(-1.0 / sq.ravel()) @ L
    return A, sq


def _end_rows(chart, nm, xi, w, phi):
    """Residuals and Jacobian rows of the two end conditions."""
    n, m = xi.size, w.size
    h = xi[1] - xi[0]
    idx = np.arange(n * m).reshape(n, m)
    res = {}
    jac = []
    for k, end in zip((0, n - 1), chart.ends):
        if end.kind == "dirichlet":
            res[k] = phi[k] - end.value(w)
            jac.append((idx[k], idx[k], np.ones(m)))
        elif end.kind == "cusp":
            sgn = 1.0 if k == 0 else -1.0
            i1, i2 = (1, 2) if k == 0 else (n - 2, n - 3)
            dxi = sgn * (-3 * phi[k] + 4 * phi[i1] - phi[i2]) / (2 * h)
            vphi_v = nm.v(xi[k]) / nm.dv(xi[k]) * dxi
            res[k] = vphi_v + 1 - np.exp(phi[k])
            f = nm.v(xi[k]) / nm.dv(xi[k]) * sgn / (2 * h)
            jac.append((idx[k], idx[k], -3 * f - np.exp(phi[k])))
            jac.append((idx[k], idx[i1], np.full(m, 4 * f)))
            jac.append((idx[k], idx[i2], np.full(m, -f)))
        else:
            raise ValueError(f"unknown end condition {end.kind!r}")
    return res, jac


def solve_liouville(h, n_xi=257, n_w=32, tol=1e-9, max_iter=50, phi0=None, chart=None):
    """Damped Newton for Delta phi + exp(2 phi) + K = 0 on each chart of h.

    Returns a ConformalFactor, or a list of them when h has several charts.
    """
    if isinstance(h, SurfaceMetric):
        if h.transitions:
            raise NotImplementedError("glued multi-chart surfaces are not solved; pass charts separately")
        out = [solve_liouville(c, n_xi, n_w, tol, max_iter, phi0) for c in h.charts]
        return out[0] if len(out) == 1 else out
    ch: CollarChart = h
    nm, xi, w = _grid(ch, n_xi, n_w)
    X, Wg = np.meshgrid(xi, w, indexing="ij")
    V = nm.v(X)
    K = np.full(V.shape, np.nan)
    K[1:-1] = ch.K(V[1:-1], Wg[1:-1])      # end rows carry boundary conditions only
    A, sq = _operator(ch, nm, xi, w)
    if float((K * sq)[1:-1].sum()) >= 0:
        raise NoHyperbolicRepresentative("no hyperbolic representative: total curvature is non-negative")
    phi = np.zeros_like(V) if phi0 is None else np.array(phi0, float)
    n, m = xi.size, w.size
    interior = np.zeros((n, m), bool)
    interior[1:-1] = True
    hist = []

    def residual(p):
        r = (A @ p.ravel()).reshape(n, m) + np.exp(2 * p) + np.nan_to_num(K)
        ends, jac = _end_rows(ch, nm, xi, w, p)
        for k, val in ends.items():
            r[k] = val
        return r, jac

    r, jac = residual(phi)
    rn = float(np.abs(r).max())
    hist.append(rn)
    lam = 1.0
    for it in range(max_iter):
        if rn < tol:
            break
        d = 2 * np.exp(2 * phi) * interior
        mask = sp.diags(interior.ravel().astype(float))
        rr = np.concatenate([j[0] for j in jac])
        cc = np.concatenate([j[1] for j in jac])
        vv = np.concatenate([j[2] for j in jac])
        E = sp.csr_matrix((vv, (rr, cc)), shape=(n * m, n * m))
        J = (mask @ A + sp.diags(d.ravel()) + E).tocsc()
        step = spla.spsolve(J, -r.ravel()).reshape(n, m)
        lam = min(1.0, 2 * lam)
        while True:
            trial = phi + lam * step
            r2, jac2 = residual(trial)
            rn2 = float(np.abs(r2).max())
            if rn2 < rn or lam < 1e-6:
                break
            lam *= 0.5
        if rn2 >= rn and lam < 1e-6:
            if rn < STALL_TOL:          # roundoff floor of the discrete operator
                break
            raise NewtonDiverged(hist + [rn2])
        phi, r, jac, rn = trial, r2, jac2, rn2
        hist.append(rn)
    if rn >= STALL_TOL:
        raise NewtonDiverged(hist)
    return ConformalFactor(ch, xi, w, phi, K, rn, hist, (n_xi, n_w))


def max_principle_bounds(cf: ConformalFactor):
    """(lower, upper) bounds for phi from the maximum principle.

    An interior extremum p satisfies exp(2 phi(p)) = -K(p) - Delta phi(p) with
    Delta phi >= 0 at a minimum, so phi(p) >= (1/2) log(-K(p)) wherever K < 0;
    boundary values enter through the Dirichlet data.
    """
    K = cf.K[1:-1]
    lo = 0.5 * np.log(np.min(-K)) if np.all(K < 0) else -np.inf
    hi = 0.5 * np.log(np.max(-K)) if np.max(-K) > 0 else -np.inf
    ends = [cf.phi[0], cf.phi[-1]]
    return min(lo, *(e.min() for e in ends)), max(hi, *(e.max() for e in ends))


def collar_energy(cf: ConformalFactor, h=None, interval=None):
    """Integral of |d phi|^2_h dv dw over (R/(1/2)Z) x interval."""
    ch = cf.chart
    metric = ch.metric if h is None else h
    lo, hi = sorted(ch.v_range)
    a, b = interval if interval is not None else (lo, hi)
    if a < lo - 1e-12 or b > hi + 1e-12 or a >= b:
        raise ValueError(f"interval [{a}, {b}] is not inside the chart [{lo}, {hi}]")
    pv, pw = cf.gradient()
    X, Wg = np.meshgrid(cf.xi, cf.w, indexing="ij")
    V = ch.node_map().v(X)
    hv = metric(V, Wg)
    det = hv[..., 0, 0] * hv[..., 1, 1] - hv[..., 0, 1] ** 2
    dens = (hv[..., 1, 1] * pv ** 2 - 2 * hv[..., 0, 1] * pv * pw + hv[..., 0, 0] * pw ** 2) / det
    col = dens.mean(axis=1) * W_PERIOD                        # exact for trig. polynomials in w
    nm = ch.node_map()
    f = CubicSpline(cf.xi, col * np.abs(nm.dv(cf.xi)))
    xa, xb = sorted((float(nm.xi(a)), float(nm.xi(b))))
    return float(f.integrate(xa, xb))


def degeneration_convergence(solutions, limit, sample_v, sample_w=None):
    """sup |phi_eps - phi_0| on sample points, per entry of `solutions`.

    `solutions` are ConformalFactors on single collar charts; `limit` is the
    pair of cusp-half factors. On |v| below the cusp truncation the limit is
    continued by its cusp asymptotics -log(1 + a|v|) (0 at v = 0).
    """
    sample_v = np.asarray(sample_v, float)
    sample_w = np.arange(8) * W_PERIOD / 8 if sample_w is None else np.asarray(sample_w, float)
    ref = _limit_values(limit, sample_v, sample_w)
    out = []
    for cf in solutions:
        val = cf(sample_v, sample_w) if sample_v.ndim else cf(sample_v, sample_w)
        out.append(float(np.abs(np.asarray(val).reshape(ref.shape) - ref).max()))
    return out


def _limit_values(limit, v, w):
    res = np.empty((v.size, w.size))
    for i, vi in enumerate(v):
        cf = None
        for c in limit:
            lo, hi = sorted(c.chart.v_range)
            if lo <= vi <= hi:
                cf = c
        if cf is not None:
            res[i] = cf(np.array([vi]), w)[0]
            continue
        # inside the truncation: cusp asymptotics from the nearest chart
        side = [c for c in limit if np.sign(c.chart.v_range[0]) == np.sign(vi)] or list(limit)
        c = side[0]
        k = int(np.argmin(np.abs(c.v)))
        a = [x for x in c.cusp_constants() if x is not None]
        a = a[0] if a else 0.0
        res[i] = -np.log1p(a * abs(vi))
    return res
