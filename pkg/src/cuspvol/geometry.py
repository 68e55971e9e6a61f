"""Coordinate charts carrying a metric, and finite-difference Riemannian geometry.

All evaluators are vectorised: points have shape (..., dim) and metrics
(..., dim, dim). Derivatives use fourth-order central stencils; nested
stencils give mixed second derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFF = np.array([-2, -1, 0, 1, 2])


@dataclass(frozen=True)
class MetricPatch:
    chart: str
    dim: int
    metric: Callable
    dual: Optional[Callable] = None
    domain: Callable = lambda p: np.ones(np.shape(p)[:-1], dtype=bool)
    scale: Optional[Callable] = None     # typical length of each coordinate at a point

    def g(self, pts):
        pts = np.asarray(pts, dtype=float)
        self._check(pts)
        return self.metric(pts)

    def ginv(self, pts):
        pts = np.asarray(pts, dtype=float)
        self._check(pts)
        if self.dual is not None:
            return self.dual(pts)
        return np.linalg.inv(self.metric(pts))

    def density(self, pts):
        """sqrt(det g)."""
        return np.sqrt(np.linalg.det(self.g(pts)))

    def steps(self, pts, rel=2e-3):
        pts = np.asarray(pts, dtype=float)
        if self.scale is None:
            return np.full(pts.shape, rel)
        return rel * np.asarray(self.scale(pts), dtype=float) * np.ones(pts.shape)

    def _check(self, pts):
        ok = np.asarray(self.domain(pts))
        if not np.all(ok):
            raise ValueError(f"point outside the domain of chart {self.chart!r}")


def fd_grad(f, pts, h):
    """d f / d x_i, stacked on a new trailing axis of the output.

    f maps (..., dim) -> (..., *shape); h has the shape of pts.
    """
    pts = np.asarray(pts, dtype=float)
    dim = pts.shape[-1]
    out = []
    for i in range(dim):
        acc = 0.0
        for c, o in zip(_D1, _OFF):
            if c == 0.0:
                continue
            q = pts.copy()
            q[..., i] += o * h[..., i]
            acc = acc + c * f(q)
        hi = h[..., i].reshape(h.shape[:-1] + (1,) * (np.ndim(acc) - h.ndim + 1))
        out.append(acc / hi)
    return np.stack(out, axis=-1)


def fd_jacobian(F, pts, h):
    """J[..., a, i] = d F_a / d x_i for F: (..., n) -> (..., m)."""
    return fd_grad(F, pts, h)


def metric_derivatives(patch: MetricPatch, pts, rel=2e-3):
    """(g, dg, ddg) with dg[..., a, b, i] and ddg[..., a, b, i, j]."""
    pts = np.asarray(pts, dtype=float)
    h = patch.steps(pts, rel)
    g = patch.metric(pts)
    dg = fd_grad(patch.metric, pts, h)

    def dmetric(q):
        return fd_grad(patch.metric, q, h)

    ddg = fd_grad(dmetric, pts, h)
    ddg = 0.5 * (ddg + np.swapaxes(ddg, -1, -2))
    return g, dg, ddg


def christoffel(g, dg):
    """Gamma[..., k, i, j] = Gamma^k_ij from g and dg[..., a, b, i]."""
    ginv = np.linalg.inv(g)
    # Gamma_{l i j} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    low = 0.5 * (np.einsum("...lji->...lij", dg) + np.einsum("...lij->...lij", dg)
                 - np.einsum("...ijl->...lij", dg))
    return np.einsum("...kl,...lij->...kij", ginv, low)


def riemann_lower(g, dg, ddg):
    """R[..., a, b, c, d] with sectional curvature K(a,b) = R_abab / (g_aa g_bb - g_ab^2).

    Sign convention chosen so that the hyperbolic metric has K = -1.
    """
    G = christoffel(g, dg)
    Glow = np.einsum("...ke,...eij->...kij", g, G)
    # R_abcd = 1/2 (g_ad,bc + g_bc,ad - g_ac,bd - g_bd,ac) + g_ef (G^e_bc G^f_ad - G^e_bd G^f_ac)
    t1 = 0.5 * (np.einsum("...adbc->...abcd", ddg) + np.einsum("...bcad->...abcd", ddg)
                - np.einsum("...acbd->...abcd", ddg) - np.einsum("...bdac->...abcd", ddg))
    t2 = (np.einsum("...ebc,...ead->...abcd", G, Glow) - np.einsum("...ebd,...eac->...abcd", G, Glow))
    return t1 + t2


def sectional_curvatures(patch: MetricPatch, pts, rel=2e-3):
    """Curvatures of the coordinate planes (i<j), shape (..., npairs)."""
    g, dg, ddg = metric_derivatives(patch, pts, rel)
    R = riemann_lower(g, dg, ddg)
    n = patch.dim
    out = []
    for a in range(n):
        for b in range(a + 1, n):
            den = g[..., a, a] * g[..., b, b] - g[..., a, b] ** 2
            out.append(R[..., a, b, a, b] / den)
    return np.stack(out, axis=-1)


def gaussian_curvature_fd(patch: MetricPatch, pts, rel=2e-3):
    if patch.dim != 2:
        raise ValueError("Gaussian curvature needs a 2D chart")
    return sectional_curvatures(patch, pts, rel)[..., 0]


def pullback(metric_vals, J):
    """J^T g J with J[..., a, i] = d y_a / d x_i."""
    return np.einsum("...ai,...ab,...bj->...ij", J, metric_vals, J)


# --- a few standard charts -------------------------------------------------------

def half_space_patch():
    """Upper half-space in (x, Re z, Im z): (dx^2 + |dz|^2)/x^2."""
    def metric(p):
        x = p[..., 0]
        return np.eye(3) / (x ** 2)[..., None, None]

    return MetricPatch("half-space", 3, metric, domain=lambda p: p[..., 0] > 0,
                       scale=lambda p: np.repeat(p[..., :1], 3, axis=-1))


def conformal_patch(chart, dim, weight, domain=None, scale=None):
    """exp(2 weight(p)) times the Euclidean metric."""
    def metric(p):
        return np.exp(2 * weight(p))[..., None, None] * np.eye(dim)

    kw = {}
    if domain is not None:
        kw["domain"] = domain
    return MetricPatch(chart, dim, metric, scale=scale, **kw)


def sphere_patch():
    """Round unit sphere in stereographic coordinates."""
    return conformal_patch("sphere", 2, lambda p: np.log(2.0 / (1 + (p ** 2).sum(-1))))


def flat_patch(dim=2):
    return conformal_patch("flat", dim, lambda p: np.zeros(p.shape[:-1]))


def _flat_exp(s):
    return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)


def smooth_step(x, a, b):
    """C-infinity step: 0 for x <= a, 1 for x >= b."""
    t = (np.asarray(x, float) - a) / (b - a)
    return _flat_exp(t) / (_flat_exp(t) + _flat_exp(1 - t))


def smooth_step_d(x, a, b):
    """Derivative of smooth_step in x."""
    t = (np.asarray(x, float) - a) / (b - a)
    f0, f1 = _flat_exp(t), _flat_exp(1 - t)
    inside = (t > 0) & (t < 1)
    ts = np.where(inside, t, 0.5)
    d0 = f0 / ts ** 2
    d1 = f1 / (1 - ts) ** 2
    return np.where(inside, (d0 * f1 + f0 * d1) / (f0 + f1) ** 2, 0.0) / (b - a)


def smooth_bump(x, a, b, c, d):
    """1 on [b, c], 0 outside (a, d), smooth in between; returns (value, derivative)."""
    up, down = smooth_step(x, a, b), 1 - smooth_step(x, c, d)
    return up * down, smooth_step_d(x, a, b) * down - up * smooth_step_d(x, c, d)
