"""Geodesic boundary defining functions by the method of characteristics.

We look for rho = exp(omega) U with |d rho / rho|_g = 1 and omega = phi on
U = 0. In the cusp chart (U, v, w) the dual metric is g^{-1} = U^2 K with K
smooth away from R = 0, and the equation reads F(p, x) = 0 with

    F = (|p + dU/U|^2_g - 1)/U
      = U(-2 + U^2 + V^2 B) + 2 (K p)_U + U p.K.p,

p = (omega_U, omega_v, omega_w). F does not depend on w or on omega, so
p_w is conserved along characteristics. Characteristics are integrated
with U itself as the parameter (dU/ds = dF/dp_U = 2 at U = 0).
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp

from .cusp_model import CuspParams
from .geometry import MetricPatch, fd_grad

log = logging.getLogger(__name__)

HJ_RTOL = 1e-12
HJ_ATOL = 1e-13
FPU_FLOOR = 0.25     # below this the U-parametrisation is close to a caustic


class SingularEvaluation(ValueError):
    pass


# --- boundary data -----------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryData:
    """phi(v, w) with its gradient; w-period 1/2."""
    phi: Callable
    grad: Callable           # (v, w) -> (phi_v, phi_w)
    label: str = "phi"

    def __call__(self, v, w):
        return self.phi(np.asarray(v, float), np.asarray(w, float))

    def dv_dw(self, v, w):
        return self.grad(np.asarray(v, float), np.asarray(w, float))

    @classmethod
    def constant(cls, c=0.0):
        c = float(c)
        return cls(lambda v, w: np.full(np.broadcast(v, w).shape, c),
                   lambda v, w: (np.zeros(np.broadcast(v, w).shape),) * 2, f"const({c:g})")

    @classmethod
    def from_expr(cls, expr):
        """Sympy expression (or string) in the symbols v, w."""
        import sympy as sp
        v, w = sp.symbols("v w", real=True)
        e = sp.sympify(expr, locals={"v": v, "w": w}) if isinstance(expr, str) else expr
        f = sp.lambdify((v, w), e, "numpy")
        fv = sp.lambdify((v, w), sp.diff(e, v), "numpy")
        fw = sp.lambdify((v, w), sp.diff(e, w), "numpy")

        def bc(fn):
            return lambda a, b: np.broadcast_to(fn(a, b), np.broadcast(a, b).shape).astype(float)

        return cls(bc(f), lambda a, b: (bc(fv)(a, b), bc(fw)(a, b)), str(e))

    @classmethod
    def from_callable(cls, f, h=1e-3):
        """Gradient by 4th-order differences of a plain callable."""
        def grad(v, w):
            p = np.stack(np.broadcast_arrays(v, w), -1).astype(float)
            g = fd_grad(lambda q: f(q[..., 0], q[..., 1]), p, np.full(p.shape, h))
            return g[..., 0], g[..., 1]

        return cls(f, grad, getattr(f, "__name__", "phi"))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = BoundaryData.constant(other)

        def grad(v, w):
            a, b = self.grad(v, w)
            c, d = other.grad(v, w)
            return a + c, b + d

        return BoundaryData(lambda v, w: self.phi(v, w) + other.phi(v, w), grad,
                            f"({self.label})+({other.label})")

    __radd__ = __add__


# --- the cusp Hamiltonian ----------------------------------------------------------

@functools.lru_cache(maxsize=2)
def _hamiltonian_funcs(ell_zero: bool):
    """Lambdified pieces F = F0 + p_w F1 + p_w^2 F2 and their derivatives."""
    import sympy as sp
    U, v, ell, nu, pU, pv = sp.symbols("U v ell nu p_U p_v", real=True)
    T = 1 - U ** 2
    S = v ** 2 + (0 if ell_zero else ell ** 2)
    V2 = v ** 2 * T / S
    a = 1 - 2 * U ** 2
    B = 4 * nu ** 2 * T ** 2 - 4 * nu ** 2 * T * a + 1 + nu ** 2 * a ** 2
    KUU = T ** 2 + U ** 2 * V2 * B
    KUv = U * v * (2 * nu ** 2 * T * a - 1 - nu ** 2 * a ** 2)
    KUw = -nu * U * v * T / S
    Kvv = (S / T) * (1 + nu ** 2 * a ** 2)
    Kvw = -nu * a
    Kww = T / S
    F0 = U * (-2 + U ** 2 + V2 * B) + 2 * (KUU * pU + KUv * pv) \
        + U * (KUU * pU ** 2 + 2 * KUv * pU * pv + Kvv * pv ** 2)
    F1 = 2 * KUw + 2 * U * (KUw * pU + Kvw * pv)
    F2 = U * Kww
    args = (U, v, pU, pv, ell, nu)
    out = {}
    for name, expr in (("F0", F0), ("F1", F1), ("F2", F2)):
        expr = sp.simplify(expr) if ell_zero else expr
        exprs = [expr] + [sp.diff(expr, s) for s in (U, v, pU, pv)]
        out[name] = sp.lambdify(args, exprs, modules="numpy", cse=True)
    kparts = [KUU, KUv, KUw, Kvv, Kvw, Kww]
    out["K"] = sp.lambdify((U, v, ell, nu), kparts, modules="numpy", cse=True)
    return out


def _bc(vals, shape):
    return [np.broadcast_to(np.asarray(x, float), shape) for x in vals]


class CuspHamiltonian:
    def __init__(self, L: CuspParams):
        self.L = L
        self.ell, self.nu = float(L.ell), float(L.nu)
        self._f = _hamiltonian_funcs(L.ell == 0)

    def _pw_active(self, v, pw):
        """Points where the w-terms are evaluated: everywhere off R = 0.

        On R = 0 (ell = 0, v = 0) w is not a coordinate; there p_w must vanish,
        and the w-velocity is set to zero.
        """
        onR0 = (v == 0) if self.ell == 0 else np.zeros(v.shape, bool)
        if np.any(onR0 & (pw != 0)):
            raise SingularEvaluation("p_w != 0 on R = 0: the Hamiltonian is singular there")
        return ~onR0

    def evaluate(self, U, v, pU, pv, pw):
        """(F, F_U, F_v, F_pU, F_pv, F_pw) at arrays of equal shape."""
        U, v, pU, pv, pw = np.broadcast_arrays(*(np.asarray(a, float) for a in (U, v, pU, pv, pw)))
        shape = U.shape
        F, FU, Fv, FpU, Fpv = (np.array(a) for a in _bc(
            self._f["F0"](U, v, pU, pv, self.ell, self.nu), shape))
        Fpw = np.zeros(shape)
        act = self._pw_active(v, pw)
        if np.any(act):
            a = (U[act], v[act], pU[act], pv[act], self.ell, self.nu)
            q = pw[act]
            g1 = _bc(self._f["F1"](*a), q.shape)
            g2 = _bc(self._f["F2"](*a), q.shape)
            F[act] += q * g1[0] + q * q * g2[0]
            FU[act] += q * g1[1] + q * q * g2[1]
            Fv[act] += q * g1[2] + q * q * g2[2]
            FpU[act] += q * g1[3] + q * q * g2[3]
            Fpv[act] += q * g1[4] + q * q * g2[4]
            Fpw[act] = g1[0] + 2 * q * g2[0]
        return F, FU, Fv, FpU, Fpv, Fpw

    def K(self, U, v):
        """K = g^{-1}/U^2 entries (KUU, KUv, KUw, Kvv, Kvw, Kww)."""
        U, v = np.broadcast_arrays(np.asarray(U, float), np.asarray(v, float))
        with np.errstate(divide="ignore", invalid="ignore"):   # w-entries blow up on R = 0
            return _bc(self._f["K"](U, v, self.ell, self.nu), U.shape)


@dataclass
class CharacteristicState:
    x: tuple          # (U, v, w)
    p: tuple          # (p_U, p_v, p_w)
    z: float = 0.0
    s: float = 0.0


def hj_cusp_F(L: CuspParams, state: CharacteristicState):
    U, v, _ = state.x
    pU, pv, pw = state.p
    return CuspHamiltonian(L).evaluate(U, v, pU, pv, pw)[0]


def eikonal_residual(L: CuspParams, U, v, p):
    """|d rho/rho|^2_g - 1 assembled from the dual metric, with rho = exp(omega) U."""
    H = CuspHamiltonian(L)
    KUU, KUv, KUw, Kvv, Kvw, Kww = H.K(U, v)
    q = [p[0] + 1.0 / U, p[1], np.asarray(p[2], float)]
    with np.errstate(divide="ignore", invalid="ignore"):
        wpart = np.where(q[2] != 0, Kww * q[2] ** 2 + 2 * KUw * q[0] * q[2], 0.0)
    quad = (KUU * q[0] ** 2 + Kvv * q[1] ** 2 + wpart
            + 2 * (KUv * q[0] * q[1] + Kvw * q[1] * q[2]))
    return U * U * quad - 1.0


# --- characteristics ------------------------------------------------------------------

def _flow_rhs(H: CuspHamiltonian, Uend, pw):
    # last component integrates how far dU/ds dips below FPU_FLOOR; nonzero means flagged
    def rhs(tau, y):
        y = y.reshape(7, -1)
        v, _, pU, pv = y[:4]
        U = tau * Uend
        F, FU, Fv, FpU, Fpv, Fpw = H.evaluate(U, v, pU, pv, pw)
        dip = np.maximum(FPU_FLOOR - FpU, 0.0)
        inv = Uend / np.maximum(FpU, FPU_FLOOR)
        dz = pU * FpU + pv * Fpv + pw * Fpw
        return np.concatenate([Fpv * inv, Fpw * inv, -FU * inv, -Fv * inv, dz * inv,
                               inv, dip]).ravel()
    return rhs


def integrate_characteristics(L: CuspParams, data: BoundaryData, v0, w0, Uend,
                              rtol=HJ_RTOL, atol=HJ_ATOL, dense=False):
    """Integrate from (0, v0, w0) up to U = Uend (all arrays, one entry per curve).

    Returns dict with v, w, pU, pv, pw, z, s at the end points (and the
    solve_ivp solution when dense=True; its time variable is U/Uend).
    """
    H = CuspHamiltonian(L)
    v0, w0, Uend = np.broadcast_arrays(*(np.asarray(a, float).ravel() for a in (v0, w0, Uend)))
    z0 = data(v0, w0)
    pv0, pw0 = data.dv_dw(v0, w0)
    pv0, pw0 = np.asarray(pv0, float), np.asarray(pw0, float)
    y0 = np.concatenate([v0, w0, np.zeros_like(v0), pv0, z0, np.zeros_like(v0), np.zeros_like(v0)])
    Ue = np.where(Uend > 0, Uend, 0.0)
    # v-rows get an absolute tolerance scaled by |v0| (tiny-|v| curves keep relative accuracy)
    tol = np.full((7, v0.size), float(atol))
    tol[0] = atol * np.clip(np.abs(v0), 1e-200, 1.0)
    sol = solve_ivp(_flow_rhs(H, Ue, pw0), (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=tol.ravel(),
                    dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"characteristic integration failed: {sol.message}")
    y = sol.y[:, -1].reshape(7, -1)
    out = dict(v=y[0], w=y[1], pU=y[2], pv=y[3], pw=pw0, z=y[4], s=y[5], U=Ue, v0=v0, w0=w0,
               caustic=y[6] > 0)
    if dense:
        out["sol"] = sol
    return out


def _w_free(L, data, v_t):
    """Curves whose w-position cannot matter: ell = 0 and data flat in w around v_t.

    Near v = 0 on the ell = 0 chart w is not a coordinate and the w-drift grows
    like 1/|v|, so matching w there is both meaningless and ill-conditioned.
    """
    if L.ell > 0:
        return np.zeros(v_t.shape, bool)
    ws = np.linspace(0.0, 0.5, 16, endpoint=False)
    free = np.ones(v_t.shape, bool)
    for f in (0.5, 1.0, 2.0):
        V, W = np.meshgrid(f * v_t, ws, indexing="ij")
        _, pw = data.dv_dw(V, W)
        free &= np.all(np.broadcast_to(pw, V.shape) == 0, axis=1)
    return free


def _invert_flow(L, data, U, v_t, w_t, tol=1e-12, maxit=8, h=1e-6):
    """Seeds (v0, w0) whose characteristics reach (U, v_t, w_t). Newton with FD Jacobian.

    Where w is irrelevant (see _w_free) only the v-equation is solved.
    """
    n = v_t.size
    sv, sw = v_t.copy(), w_t.copy()
    free = _w_free(L, data, v_t)
    # step relative to |v| for small targets so that the stencil never crosses v = 0
    hv = h * np.where(np.abs(v_t) > 0, np.minimum(np.abs(v_t), 1e-2), 1e-2)

    def error(ev, ew):
        return np.maximum(np.abs(ev - v_t), np.where(free, 0.0, np.abs(ew - w_t)))
    for it in range(maxit):
        vv = np.concatenate([sv, sv + hv, sv])
        ww = np.concatenate([sw, sw, sw + h])
        out = integrate_characteristics(L, data, vv, ww, np.tile(U, 3))
        ev, ew = out["v"][:n], out["w"][:n]
        rv, rw = ev - v_t, ew - w_t
        err = error(ev, ew)
        if np.all(err < tol):
            return sv, sw, {k: (val[:n] if np.ndim(val) and np.size(val) == 3 * n else val)
                            for k, val in out.items()}, err, it
        J11 = (out["v"][n:2 * n] - ev) / hv
        J21 = (out["w"][n:2 * n] - ew) / hv
        J12 = (out["v"][2 * n:] - ev) / h
        J22 = (out["w"][2 * n:] - ew) / h
        det = J11 * J22 - J12 * J21
        dv = np.where(free, rv / J11, (J22 * rv - J12 * rw) / det)
        dw = np.where(free, 0.0, (-J21 * rv + J11 * rw) / det)
        sv, sw = sv - dv, sw - dw
    out = integrate_characteristics(L, data, sv, sw, U)
    return sv, sw, out, error(out["v"], out["w"]), maxit


# --- fields ---------------------------------------------------------------------------

def cheb_levels(U_max, m):
    """m+1 Chebyshev-Lobatto levels on [0, U_max], starting at 0."""
    k = np.arange(m + 1)
    return 0.5 * U_max * (1 - np.cos(np.pi * k / m))


@dataclass
class OmegaField:
    L: CuspParams
    U: np.ndarray             # (m+1,) levels, U[0] = 0
    v: np.ndarray             # (nv,)
    w: np.ndarray             # (nw,)
    omega: np.ndarray         # (m+1, nv, nw)
    p: np.ndarray             # (m+1, nv, nw, 3)
    residual: np.ndarray      # eikonal residual per node
    hamiltonian: np.ndarray   # F at the end of each characteristic
    valid: np.ndarray
    s: np.ndarray             # characteristic parameter at the node
    seeds: np.ndarray         # (m+1, nv, nw, 2)
    data: Optional[BoundaryData] = None
    meta: dict = field(default_factory=dict)

    @property
    def U_max(self):
        return float(self.U[-1])

    def column_coeffs(self, use_slopes=True):
        """Power-series coefficients c_k of omega(U) per (v, w) column, shape (deg+1, nv, nw).

        Values and U-slopes (p_U) at all levels are fitted jointly by least
        squares in a Chebyshev basis on [0, U_max].
        """
        m1 = self.U.size
        t = 2 * self.U / self.U_max - 1
        deg = 2 * m1 - 1 if use_slopes else m1 - 1
        deg = min(deg, 2 * m1 - 1)
        V = C.chebvander(t, deg)
        rows = [V]
        rhs = [self.omega.reshape(m1, -1)]
        if use_slopes:
            dV = np.stack([C.chebval(t, C.chebder(np.eye(deg + 1)[k])) for k in range(deg + 1)], -1)
            rows.append(dV * 2 / self.U_max)
            rhs.append(self.p[..., 0].reshape(m1, -1))
        A = np.vstack(rows)
        b = np.vstack(rhs)
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        # convert Chebyshev in t to a power series in U
        out = np.empty_like(coef)
        for j in range(coef.shape[1]):
            pw = C.cheb2poly(coef[:, j])
            # t = 2U/U_max - 1: compose
            out[:, j] = _compose_affine(pw, 2 / self.U_max, -1.0)
        return out.reshape((deg + 1,) + self.omega.shape[1:])

    def column_poly(self):
        """Callable omega(U) on columns, vectorised over the boundary grid."""
        c = self.column_coeffs()

        def f(U):
            U = np.asarray(U, float)
            acc = np.zeros(np.broadcast(U, c[0]).shape)
            for k in range(c.shape[0] - 1, -1, -1):
                acc = acc * U + c[k]
            return acc
        return f

    def max_residual(self):
        return float(np.nanmax(np.abs(np.where(self.valid, self.residual, 0.0))))

    def to_rows(self):
        """Rows (U, v, w, omega, p_U, p_v, p_w, residual) for CSV dumps."""
        m1, nv, nw = self.omega.shape
        Ug, vg, wg = np.meshgrid(self.U, self.v, self.w, indexing="ij")
        cols = [Ug, vg, wg, self.omega, self.p[..., 0], self.p[..., 1], self.p[..., 2], self.residual]
        return np.stack([c.ravel() for c in cols], -1)


def _compose_affine(pcoef, a, b):
    """Coefficients of P(a U + b) in powers of U."""
    from numpy.polynomial import polynomial as P
    res = np.zeros(len(pcoef))
    base = np.array([1.0])
    lin = np.array([b, a])
    for k, ck in enumerate(pcoef):
        if k:
            base = P.polymul(base, lin)
        res[:base.size] += ck * base
    return res


def hj_cusp_solve(L: CuspParams, data: BoundaryData, v_nodes, w_nodes, U_max=0.03, n_levels=8,
                  tol=1e-12, res_tol=1e-7) -> OmegaField:
    """omega on the grid levels x v_nodes x w_nodes by characteristics and flow inversion."""
    v_nodes = np.asarray(v_nodes, float)
    w_nodes = np.asarray(w_nodes, float)
    U = cheb_levels(U_max, n_levels)
    m1, nv, nw = U.size, v_nodes.size, w_nodes.size
    Vg, Wg = np.meshgrid(v_nodes, w_nodes, indexing="ij")
    omega = np.empty((m1, nv, nw))
    p = np.empty((m1, nv, nw, 3))
    res = np.zeros((m1, nv, nw))
    ham = np.zeros((m1, nv, nw))
    s = np.zeros((m1, nv, nw))
    seeds = np.empty((m1, nv, nw, 2))
    valid = np.ones((m1, nv, nw), bool)
    omega[0] = data(Vg, Wg)
    pv0, pw0 = data.dv_dw(Vg, Wg)
    p[0, ..., 0], p[0, ..., 1], p[0, ..., 2] = 0.0, pv0, pw0
    seeds[0, ..., 0], seeds[0, ..., 1] = Vg, Wg
    # all positive levels at once
    Ut = np.repeat(U[1:], nv * nw)
    vt = np.tile(Vg.ravel(), m1 - 1)
    wt = np.tile(Wg.ravel(), m1 - 1)
    sv, sw, out, err, iters = _invert_flow(L, data, Ut, vt, wt, tol=tol)
    sh = (m1 - 1, nv, nw)
    omega[1:] = out["z"].reshape(sh)
    p[1:, ..., 0] = out["pU"].reshape(sh)
    p[1:, ..., 1] = out["pv"].reshape(sh)
    p[1:, ..., 2] = np.broadcast_to(out["pw"], Ut.shape).reshape(sh)
    s[1:] = out["s"].reshape(sh)
    seeds[1:, ..., 0] = sv.reshape(sh)
    seeds[1:, ..., 1] = sw.reshape(sh)
    Ufull = np.broadcast_to(U[:, None, None], (m1, nv, nw))
    r = eikonal_residual(L, Ufull[1:], np.broadcast_to(Vg, sh), [p[1:, ..., k] for k in range(3)])
    res[1:] = r
    H = CuspHamiltonian(L)
    ham[1:] = H.evaluate(Ufull[1:], np.broadcast_to(Vg, sh), p[1:, ..., 0], p[1:, ..., 1],
                         p[1:, ..., 2])[0]
    valid[1:] = (err.reshape(sh) < 1e3 * tol) & (np.abs(r) < res_tol) & ~out["caustic"].reshape(sh)
    meta = dict(newton_iterations=iters, max_seed_error=float(err.max()))
    fld = OmegaField(L, U, v_nodes, w_nodes, omega, p, res, ham, valid, s, seeds, data, meta)
    fld.meta.update(zip(("C", "K"), bdf16_constants(fld)))
    if not valid.all():
        log.warning("hj_cusp_solve: %d of %d nodes flagged", (~valid).sum(), valid.size)
    return fld


def bdf16_constants(fld: OmegaField):
    """Fitted (C, K): |v(s)| >= |v0| exp(-C s), and U(s) >= s for s <= K."""
    v_end = np.broadcast_to(fld.v[None, :, None], fld.omega.shape)[1:]
    v0 = fld.seeds[1:, ..., 0]
    s = fld.s[1:]
    # only curves that stay on one side of v = 0 (always the case when ell = 0)
    ok = (v0 * v_end > 0) & (s > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = -np.log(np.abs(v_end[ok]) / np.abs(v0[ok])) / s[ok]
    Cfit = float(max(0.0, rates.max())) if rates.size else 0.0
    Ug = np.broadcast_to(fld.U[:, None, None], fld.omega.shape)[1:]
    good = Ug >= s
    K = float(s[good].max()) if np.all(good) else float(s[~good].min())
    return Cfit, K


def expansion_coeffs(fld: OmegaField, min_levels=4):
    """(a0, a1, a2) per boundary node from the fitted U-expansion of omega."""
    if fld.U.size < min_levels:
        raise ValueError(f"need at least {min_levels} U-levels, got {fld.U.size}")
    c = fld.column_coeffs()
    return c[0], c[1], c[2]


def a2_closed_form(L: CuspParams, data: BoundaryData, v, w):
    ell, nu = L.ell, L.nu
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    pv, pw = data.dv_dw(v, w)
    S = v * v + ell * ell
    with np.errstate(invalid="ignore", divide="ignore"):
        grad2 = S * (1 + nu * nu) * pv ** 2 + np.where(pw != 0, pw ** 2 / S, 0.0) - 2 * nu * pv * pw
        frac = np.where(S > 0, v * v / S, 1.0)
        cross = np.where(S > 0, v / S, 0.0) * pw
    return -0.25 * (grad2 + (1 + nu * nu) * frac - 2 + 2 * (nu * nu - 1) * v * pv - 2 * nu * cross)


# --- generic charts ---------------------------------------------------------------------

class GenericHamiltonian:
    """F = 2 <dw, d rho0>_gbar + rho0 |dw|^2_gbar - (1 - |d rho0|^2_gbar)/rho0 on a chart
    whose first coordinate is rho0; gbar = rho0^2 g given as a MetricPatch.

    gbar must be evaluable on a neighbourhood of rho0 = 0 (it is smooth up to the
    boundary). The quotient (1 - gbar^00)/rho0 loses digits as rho0 -> 0, so
    below rho0 = eta it is replaced by the chord through eta and 2 eta; the
    induced error is O(eta^2) in the Hamiltonian.
    """

    def __init__(self, gbar: MetricPatch, h=1e-4, eta=1e-3):
        self.gbar = gbar
        self.h = h
        self.eta = eta

    def ginv(self, x):
        return self.gbar.ginv(x)

    def _quot(self, x, x0):
        y = np.array(x, float)
        y[..., 0] = x0
        return (1.0 - self.ginv(y)[..., 0, 0]) / x0

    def c_term(self, x):
        x = np.asarray(x, float)
        x0 = x[..., 0]
        eta = self.eta
        far = self._quot(x, np.maximum(x0, eta))
        if np.all(x0 >= eta):
            return far
        c1 = self._quot(x, np.full(x0.shape, eta))
        c2 = self._quot(x, np.full(x0.shape, 2 * eta))
        near = c1 + (x0 - eta) * (c2 - c1) / eta
        return np.where(x0 >= eta, far, near)

    def F(self, x, p):
        G = self.ginv(x)
        Gp = np.einsum("...ij,...j->...i", G, p)
        return 2 * Gp[..., 0] + x[..., 0] * np.einsum("...i,...i->...", p, Gp) - self.c_term(x)

    def grads(self, x, p):
        G = self.ginv(x)
        Gp = np.einsum("...ij,...j->...i", G, p)
        Fp = 2 * G[..., 0, :] + 2 * x[..., :1] * Gp
        hh = np.full(x.shape, self.h)
        Fx = fd_grad(lambda y: self.F(y, p), x, hh)
        return Fx, Fp


def hj_generic(gbar: MetricPatch, data: BoundaryData, y1, y2, rho_max=0.06, n_levels=8,
               tol=1e-11, check_tol=1e-8) -> OmegaField:
    """Characteristics for omega with rho = exp(omega) rho0 on a generic chart.

    Boundary coordinates (y1, y2) are the 2nd and 3rd chart coordinates.
    Returns an OmegaField whose `L` slot is None.
    """
    H = GenericHamiltonian(gbar)
    Y1, Y2 = np.meshgrid(np.asarray(y1, float), np.asarray(y2, float), indexing="ij")
    x0 = np.stack([np.zeros_like(Y1), Y1, Y2], -1)
    G0 = H.ginv(x0)
    if np.abs(G0[..., 0, 0] - 1).max() > check_tol:
        raise ValueError("non-characteristic condition |d rho0|_gbar = 1 at rho0 = 0 violated")
    U = cheb_levels(rho_max, n_levels)
    m1, n1, n2 = U.size, Y1.shape[0], Y1.shape[1]

    def run(s1, s2, Uend):
        pv, pw = data.dv_dw(s1, s2)
        z0 = data(s1, s2)
        # p_0 from F = 0 at rho0 = 0: 2 (G p)_0 = c  ->  solve for p_0
        xs = np.stack([np.zeros_like(s1), s1, s2], -1)
        Gs = H.ginv(xs)
        c0 = H.c_term(xs)
        p0 = (0.5 * c0 - Gs[..., 0, 1] * pv - Gs[..., 0, 2] * pw) / Gs[..., 0, 0]
        y0 = np.concatenate([s1, s2, p0, pv, pw, z0])
        n = s1.size

        def rhs(tau, y):
            y = y.reshape(6, n)
            x = np.stack([tau * Uend, y[0], y[1]], -1)
            pp = np.stack([y[2], y[3], y[4]], -1)
            Fx, Fp = H.grads(x, pp)
            inv = Uend / Fp[..., 0]
            dz = np.einsum("...i,...i->...", pp, Fp)
            return np.concatenate([Fp[..., 1] * inv, Fp[..., 2] * inv, -Fx[..., 0] * inv,
                                   -Fx[..., 1] * inv, -Fx[..., 2] * inv, dz * inv])

        sol = solve_ivp(rhs, (0, 1), y0, method="DOP853", rtol=1e-11, atol=1e-12)
        y = sol.y[:, -1].reshape(6, n)
        return y

    Ut = np.repeat(U[1:], n1 * n2)
    t1 = np.tile(Y1.ravel(), m1 - 1)
    t2 = np.tile(Y2.ravel(), m1 - 1)
    s1, s2 = t1.copy(), t2.copy()
    h = 1e-6
    n = t1.size
    for _ in range(8):
        y = run(np.concatenate([s1, s1 + h, s1]), np.concatenate([s2, s2, s2 + h]), np.tile(Ut, 3))
        e1, e2 = y[0, :n], y[1, :n]
        r1, r2 = e1 - t1, e2 - t2
        if max(np.abs(r1).max(), np.abs(r2).max()) < tol:
            break
        J11 = (y[0, n:2 * n] - e1) / h
        J21 = (y[1, n:2 * n] - e2) / h
        J12 = (y[0, 2 * n:] - e1) / h
        J22 = (y[1, 2 * n:] - e2) / h
        det = J11 * J22 - J12 * J21
        s1 -= (J22 * r1 - J12 * r2) / det
        s2 -= (-J21 * r1 + J11 * r2) / det
    y = y[:, :n]
    sh = (m1 - 1, n1, n2)
    omega = np.empty((m1, n1, n2))
    p = np.empty((m1, n1, n2, 3))
    omega[0] = data(Y1, Y2)
    pv, pw = data.dv_dw(Y1, Y2)
    c0 = H.c_term(x0)
    p[0, ..., 0] = (0.5 * c0 - G0[..., 0, 1] * pv - G0[..., 0, 2] * pw) / G0[..., 0, 0]
    p[0, ..., 1], p[0, ..., 2] = pv, pw
    omega[1:] = y[5].reshape(sh)
    for k in range(3):
        p[1:, ..., k] = y[2 + k].reshape(sh)
    # eikonal residual |d log rho|^2_g - 1 with g = gbar/rho0^2
    xs = np.stack([Ut, t1, t2], -1)
    G = H.ginv(xs)
    q = np.stack([y[2] + 1.0 / Ut, y[3], y[4]], -1)
    res = np.zeros((m1, n1, n2))
    res[1:] = (Ut ** 2 * np.einsum("...i,...ij,...j->...", q, G, q) - 1).reshape(sh)
    seeds = np.empty((m1, n1, n2, 2))
    seeds[0, ..., 0], seeds[0, ..., 1] = Y1, Y2
    seeds[1:, ..., 0], seeds[1:, ..., 1] = s1.reshape(sh), s2.reshape(sh)
    err = np.maximum(np.abs(y[0] - t1), np.abs(y[1] - t2))
    valid = np.ones((m1, n1, n2), bool)
    valid[1:] = (err.reshape(sh) < 1e3 * tol) & (np.abs(res[1:]) < 1e-7)
    return OmegaField(None, U, np.asarray(y1, float), np.asarray(y2, float), omega, p, res,
                      np.zeros_like(res), valid, np.zeros_like(res), seeds, data,
                      dict(max_seed_error=float(err.max())))


def cusp_compactified_patch(L: CuspParams) -> MetricPatch:
    """gbar = U^2 g_L in (U, v, w), pulled back from u^2 g_L(u, v, w).

    Independent of the closed-form K above; used to cross-check the generic solver.
    Writing gbar = R^-2 J^T (u^2 g_L) J keeps it smooth through U = 0.
    """
    from .cusp_model import gL_components, _assemble3, UV_from_Uv
    ell, nu = L.ell, L.nu

    def to_uvw(p):
        _, R = UV_from_Uv(p[..., 0], p[..., 1], ell)
        return np.stack([p[..., 0] * R, p[..., 1], p[..., 2]], -1)

    def jac(p):
        U, v = p[..., 0], p[..., 1]
        T = 1 - U * U
        _, R = UV_from_Uv(U, v, ell)
        J = np.zeros(p.shape + (3,))
        J[..., 0, 0] = R / T
        J[..., 0, 1] = U * v / (R * T)
        J[..., 1, 1] = 1.0
        J[..., 2, 2] = 1.0
        return J

    def metric(p):
        p = np.asarray(p, float)
        J = jac(p)
        q = to_uvw(p)
        u, v = q[..., 0], q[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            comps = [c * u * u for c in gL_components(ell, nu, np.where(u == 0, 1.0, u), v)]
        # the u = 0 substitution above only touches the u-independent factor 1/u^2
        if np.any(u == 0):
            R2 = v * v + ell * ell
            z = np.zeros_like(u)
            comps0 = [np.ones_like(u), np.ones_like(u), (1 + nu * nu) * R2 * R2, z, z, nu * R2]
            comps = [np.where(u == 0, c0, c) for c0, c in zip(comps0, comps)]
        _, R = UV_from_Uv(p[..., 0], v, ell)
        gb = np.einsum("...ai,...ab,...bj->...ij", J, _assemble3(*comps), J)
        return gb / (R * R)[..., None, None]

    def domain(p):
        return (np.abs(p[..., 0]) < 0.9) & ((p[..., 1] != 0) | (ell > 0))

    return MetricPatch("cusp-compactified", 3, metric, domain=domain)


def _bump(v, a, c):
    """C-infinity bump supported on (a, c), with its derivative."""
    v = np.asarray(v, float)
    q = (v - a) * (c - v)
    inside = q > 0
    qs = np.where(inside, q, 1.0)
    b = np.where(inside, np.exp(-1.0 / qs) * np.exp(4.0 / (c - a) ** 2), 0.0)
    db = np.where(inside, b * (c + a - 2 * v) / qs ** 2, 0.0)
    return b, db


def random_compliant_data(seed=0, amp=0.05, support=(0.15, 0.45)) -> BoundaryData:
    """phi = c0 + alpha v + beta v^2 + bump(v) (gamma cos 4 pi w + kappa sin 4 pi w).

    The w-dependence is supported away from v = 0, so phi is compliant (all
    w-derivatives vanish to infinite order on v = 0). The bump is normalised
    to 1 at the middle of its support.
    """
    rng = np.random.default_rng(seed)
    c0, al, be, ga, ka = amp * rng.uniform(-1, 1, 5)
    a, c = support
    k = 4 * np.pi

    def phi(v, w):
        b, _ = _bump(v, a, c)
        return c0 + al * v + be * v * v + b * (ga * np.cos(k * w) + ka * np.sin(k * w))

    def grad(v, w):
        v, w = np.broadcast_arrays(np.asarray(v, float), np.asarray(w, float))
        b, db = _bump(v, a, c)
        pv = al + 2 * be * v + db * (ga * np.cos(k * w) + ka * np.sin(k * w))
        pw = b * k * (-ga * np.sin(k * w) + ka * np.cos(k * w))
        return pv, pw

    return BoundaryData(phi, grad, f"compliant(seed={seed})")
