"""Classical Schottky groups and admissible degenerating families.

A degenerating generator is described by its limiting parabolic point p, the
parabolic coefficient c (the limit is z -> p + (z-p)/(c(z-p)+1)) and the
paths ell(eps), nu(eps). Unless explicit fixed-point paths are given, the
fixed points are placed at p -/+ s/2 with s = ell (1 + i nu)/c, which is the
separation forced by the multiplier to first order.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .moebius import (Circle, MoebiusMap, canonical_circles, circles_from_data,
                      limiting_circles, maps_exterior_into)

DISJOINT_TOL = 1e-10
TANGENT_TOL = 1e-8
PAIRING_TOL = 1e-8


class SchottkyError(ValueError):
    pass


class NotAdapted(SchottkyError):
    def __init__(self, i, k, gap):
        self.pair, self.gap = (i, k), gap
        super().__init__(f"not adapted: disks {i} and {k} overlap (gap {gap:.3e})")


class PairingViolated(SchottkyError):
    def __init__(self, j, dev):
        self.index, self.deviation = j, dev
        super().__init__(f"pairing violated: generator {j}, max deviation {dev:.3e}")


class FamilyNotAdmissible(SchottkyError):
    def __init__(self, eps, detail=""):
        self.eps = eps
        super().__init__(f"family not admissible at eps={eps:g}" + (f": {detail}" if detail else ""))


class SpecError(ValueError):
    """Malformed group/family specification (line/column when known)."""


def circle_gap(c1: Circle, c2: Circle) -> float:
    return abs(c1.center - c2.center) - c1.radius - c2.radius


def pairwise_gaps(circles):
    out = {}
    for i in range(len(circles)):
        for k in range(i + 1, len(circles)):
            out[(i, k)] = circle_gap(circles[i], circles[k])
    return out


@dataclass(frozen=True)
class SchottkyGroup:
    generators: tuple
    circles: tuple          # (C_-1, C_+1, C_-2, C_+2, ...)
    min_gap: float
    max_pairing_dev: float

    @property
    def genus(self):
        return len(self.generators)

    def pair(self, j):
        return self.circles[2 * j], self.circles[2 * j + 1]

    def in_domain(self, z):
        """True where z lies in the common exterior of all disks."""
        z = np.asarray(z, dtype=complex)
        ok = np.ones(z.shape, dtype=bool)
        for c in self.circles:
            ok &= ~c.contains(z, strict=False)
        return ok


def validate_group(gens: Sequence[MoebiusMap], circles: Sequence[Circle], n_samples=64) -> SchottkyGroup:
    gens, circles = tuple(gens), tuple(circles)
    g = len(gens)
    if g < 1 or len(circles) != 2 * g:
        raise SchottkyError(f"need 2g circles for g generators, got g={g}, {len(circles)} circles")
    gaps = pairwise_gaps(circles)
    for (i, k), gap in gaps.items():
        if gap <= DISJOINT_TOL:
            raise NotAdapted(i, k, gap)
    worst = 0.0
    for j, M in enumerate(gens):
        dev, ok = maps_exterior_into(M, circles[2 * j], circles[2 * j + 1], n=max(n_samples, 16),
                                     tol=PAIRING_TOL)
        worst = max(worst, dev)
        if not ok:
            raise PairingViolated(j, dev)
    return SchottkyGroup(gens, circles, min(gaps.values()) if gaps else math.inf, worst)


# --- admissible families -------------------------------------------------------

def _as_path(spec) -> Callable[[float], float]:
    """Turn a number, expression string in `eps`, or table into a callable."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        v = float(spec)
        return lambda eps: v
    if isinstance(spec, str):
        import sympy as sp
        eps = sp.Symbol("eps")
        try:
            expr = sp.sympify(spec, locals={"eps": eps})
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise SpecError(f"cannot parse expression {spec!r}: {exc}") from None
        if expr.free_symbols - {eps}:
            raise SpecError(f"expression {spec!r} may only depend on eps")
        f = sp.lambdify(eps, expr, "math")
        return lambda e: float(f(e))
    if isinstance(spec, dict) and "eps" in spec and "values" in spec:
        from scipy.interpolate import CubicSpline
        x = np.asarray(spec["eps"], dtype=float)
        y = np.asarray(spec["values"], dtype=float)
        order = np.argsort(x)
        cs = CubicSpline(x[order], y[order])
        return lambda e: float(cs(e))
    raise SpecError(f"unsupported path specification: {spec!r}")


@dataclass(frozen=True)
class DegeneratingGenerator:
    p: complex
    c: complex
    ell: Callable[[float], float]
    nu: Callable[[float], float]
    p_minus: Callable[[float], complex] | None = None
    p_plus: Callable[[float], complex] | None = None

    def fixed_points(self, eps):
        if self.p_minus is not None:
            return complex(self.p_minus(eps)), complex(self.p_plus(eps))
        ell, nu = self.ell(eps), self.nu(eps)
        s = ell * (1 + 1j * nu) / self.c
        return self.p - s / 2, self.p + s / 2

    def q(self, eps):
        ell, nu = self.ell(eps), self.nu(eps)
        return cmath.exp(ell * (1 + 1j * nu))

    def at(self, eps) -> MoebiusMap:
        if eps == 0:
            return MoebiusMap.parabolic(self.p, self.c)
        pm, pp = self.fixed_points(eps)
        return MoebiusMap.from_fixed_points(pm, pp, self.q(eps))


@dataclass(frozen=True)
class FixedGenerator:
    M: MoebiusMap
    circles: tuple | None = None   # (C_-, C_+); canonical circles when None

    def pair(self):
        return self.circles if self.circles is not None else canonical_circles(self.M)


@dataclass(frozen=True)
class AdmissibleFamily:
    generators: tuple
    eps_grid: tuple = field(default=())

    @property
    def genus(self):
        return len(self.generators)

    def degenerating(self):
        return [j for j, gj in enumerate(self.generators) if isinstance(gj, DegeneratingGenerator)]

    def generator(self, j, eps) -> MoebiusMap:
        gj = self.generators[j]
        return gj.at(eps) if isinstance(gj, DegeneratingGenerator) else gj.M

    def check_multipliers(self, tol=1e-12):
        """|q(eps)| > 1 on the grid and q(0) = 1 for degenerating indices."""
        for j in self.degenerating():
            gj = self.generators[j]
            if abs(gj.q(0.0) - 1) > tol:
                raise FamilyNotAdmissible(0.0, f"q_{j}(0) != 1")
            for e in self.eps_grid:
                if not abs(gj.q(e)) > 1:
                    raise FamilyNotAdmissible(e, f"|q_{j}| <= 1")


def geometric_grid(eps0=0.1, n=8, ratio=0.5):
    return tuple(eps0 * ratio ** k for k in range(n))


def family_parameters(fam: AdmissibleFamily, j, eps):
    """(lambda_j, nu_j) at eps; eps = 0 gives the limit sqrt(1+nu^2)/|c|."""
    gj = fam.generators[j]
    if not isinstance(gj, DegeneratingGenerator):
        raise ValueError(f"generator {j} is not degenerating")
    nu = gj.nu(eps)
    if eps == 0:
        return math.sqrt(1 + nu * nu) / abs(gj.c), nu
    ell = gj.ell(eps)
    if not ell > 0:
        raise FamilyNotAdmissible(eps, "ell must be positive for eps > 0")
    pm, pp = gj.fixed_points(eps)
    return abs(pp - pm) / ell, nu


def good_domain_circles(fam: AdmissibleFamily, eps, check=True):
    """Canonical circles for degenerating generators, fixed circles otherwise."""
    circles = []
    for gj in fam.generators:
        if isinstance(gj, DegeneratingGenerator):
            if eps == 0:
                cm, cp = limiting_circles(gj.p, gj.c, gj.nu(0.0))
            else:
                pm, pp = gj.fixed_points(eps)
                cm, cp = circles_from_data(pm, pp, gj.ell(eps))
        else:
            cm, cp = gj.pair()
        circles += [cm, cp]
    if check:
        _check_circles(fam, eps, circles)
    return circles


def _check_circles(fam, eps, circles):
    deg = set(fam.degenerating())
    for (i, k), gap in pairwise_gaps(circles).items():
        tangent_pair = eps == 0 and i // 2 == k // 2 and i // 2 in deg
        if tangent_pair:
            if abs(gap) > TANGENT_TOL:
                raise FamilyNotAdmissible(eps, f"limiting circles {i},{k} not tangent (gap {gap:.2e})")
        elif gap <= DISJOINT_TOL:
            raise FamilyNotAdmissible(eps, f"disks {i},{k} overlap (gap {gap:.2e})")


def tangency_points(fam: AdmissibleFamily):
    """Contact point of each degenerating limiting pair, keyed by index."""
    out = {}
    circles = good_domain_circles(fam, 0.0, check=False)
    for j in fam.degenerating():
        cm, cp = circles[2 * j], circles[2 * j + 1]
        d = cp.center - cm.center
        out[j] = cm.center + cm.radius * d / abs(d)
    return out


def circle_path_lipschitz(fam: AdmissibleFamily, grid=None):
    """Max over consecutive grid points of Hausdorff(circle_k, circle_k+1)/|d eps|."""
    grid = sorted(set(fam.eps_grid if grid is None else grid) | {0.0})
    prev = None
    worst = 0.0
    for e in grid:
        cur = good_domain_circles(fam, e, check=False)
        if prev is not None:
            de = e - prev[0]
            h = max(abs(a.center - b.center) + abs(a.radius - b.radius) for a, b in zip(prev[1], cur))
            worst = max(worst, h / de)
        prev = (e, cur)
    return worst


def validate_family_at(fam: AdmissibleFamily, eps, n_samples=64) -> SchottkyGroup | None:
    """Full group validation at eps > 0; at eps = 0 only the circle checks apply."""
    circles = good_domain_circles(fam, eps)
    if eps == 0:
        return None
    gens = [fam.generator(j, eps) for j in range(fam.genus)]
    try:
        return validate_group(gens, circles, n_samples)
    except SchottkyError as exc:
        raise FamilyNotAdmissible(eps, str(exc)) from None


# --- specification files -------------------------------------------------------

def _cplx(x, where="value") -> complex:
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", "").replace("i", "j"))
        except ValueError:
            raise SpecError(f"bad complex number {x!r} in {where}") from None
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    raise SpecError(f"bad complex number {x!r} in {where}")


def _circle(obj, where):
    if isinstance(obj, dict):
        return Circle(_cplx(obj["center"], where), float(obj["radius"]))
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return Circle(_cplx(obj[0], where), float(obj[1]))
    raise SpecError(f"bad circle {obj!r} in {where}")


def _matrix(obj, where):
    try:
        if isinstance(obj, dict):
            vals = [obj[k] for k in "abcd"]
        else:
            vals = list(np.asarray(obj, dtype=object).ravel())
        a, b, c, d = (_cplx(v, where) for v in vals)
    except (KeyError, ValueError) as exc:
        raise SpecError(f"bad matrix in {where}: {exc}") from None
    return MoebiusMap(a, b, c, d)


def parse_spec(text: str):
    """Parse a JSON group or family specification.

    Returns ``("group", gens, circles)`` or ``("family", AdmissibleFamily)``.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or "generators" not in data:
        raise SpecError("top level must be an object with a 'generators' list")
    gens_in = data["generators"]
    kind = data.get("kind", "family" if any(
        isinstance(g, dict) and g.get("type") == "degenerating" for g in gens_in) else "group")
    try:
        if kind == "group":
            gens, circles = [], []
            for j, g in enumerate(gens_in):
                where = f"generator {j}"
                M = _matrix(g["matrix"] if isinstance(g, dict) else g, where)
                gens.append(M)
            if "circles" in data:
                circles = [_circle(c, "circles") for c in data["circles"]]
            else:
                for M in gens:
                    circles += list(canonical_circles(M))
            return "group", gens, circles
        gens = []
        for j, g in enumerate(gens_in):
            where = f"generator {j}"
            if g.get("type", "fixed") == "degenerating":
                pm = pp = None
                if "p_minus" in g:
                    pm_f, pp_f = g["p_minus"], g["p_plus"]
                    re_m, im_m = _as_path(pm_f[0]), _as_path(pm_f[1])
                    re_p, im_p = _as_path(pp_f[0]), _as_path(pp_f[1])
                    pm = lambda e, a=re_m, b=im_m: complex(a(e), b(e))
                    pp = lambda e, a=re_p, b=im_p: complex(a(e), b(e))
                gens.append(DegeneratingGenerator(_cplx(g["p"], where), _cplx(g["c"], where),
                                                  _as_path(g["ell"]), _as_path(g.get("nu", 0.0)), pm, pp))
            else:
                M = _matrix(g["matrix"], where)
                circ = tuple(_circle(c, where) for c in g["circles"]) if "circles" in g else None
                gens.append(FixedGenerator(M, circ))
        grid = data.get("eps_grid", {})
        if isinstance(grid, dict):
            grid = geometric_grid(float(grid.get("eps0", 0.1)), int(grid.get("n", 8)),
                                  float(grid.get("ratio", 0.5)))
        grid = tuple(float(e) for e in grid)
        if any(not e > 0 for e in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
            raise SpecError("eps_grid must be positive and strictly decreasing")
        return "family", AdmissibleFamily(tuple(gens), grid)
    except (KeyError, TypeError, AttributeError) as exc:
        raise SpecError(f"missing or malformed field: {exc}") from None


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())
