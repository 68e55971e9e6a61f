"""Moebius maps: PSL(2,C) acting on the Riemann sphere and on upper half-space.

Points of half-space are (x, z) with x > 0 the height and z the horizontal
complex coordinate. The point at infinity of the sphere is the sentinel
``INF``; everything else is an ordinary complex number.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

TOL_CLASSIFY = 1e-10
TOL_EQUAL = 1e-10


class _Infinity:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_inf(p) -> bool:
    return p is INF


@dataclass(frozen=True)
class HalfSpacePoint:
    x: float
    z: complex

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError(f"half-space point needs x > 0, got {self.x}")


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"circle radius must be positive, got {self.radius}")

    def points(self, n=64, phase=0.0):
        t = phase + 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * t)

    def contains(self, z, strict=True):
        d = np.abs(np.asarray(z) - self.center)
        return d < self.radius if strict else d <= self.radius


@dataclass(frozen=True)
class Multiplier:
    """q = exp(ell + i alpha) with ell > 0 and alpha in [0, 2 pi)."""
    ell: float
    alpha: float

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("multiplier must satisfy |q| > 1")

    @property
    def q(self) -> complex:
        return cmath.exp(complex(self.ell, self.alpha))

    @property
    def nu(self) -> float:
        return self.alpha / self.ell


class MoebiusMap:
    """Element of PSL(2,C), stored as a determinant-one matrix.

    M and -M compare equal.
    """
    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        a, b, c, d = complex(a), complex(b), complex(c), complex(d)
        det = a * d - b * c
        if abs(det) < 1e-300:
            raise ValueError("singular matrix")
        s = cmath.sqrt(det)
        object.__setattr__(self, "a", a / s)
        object.__setattr__(self, "b", b / s)
        object.__setattr__(self, "c", c / s)
        object.__setattr__(self, "d", d / s)

    def __setattr__(self, k, v):
        raise AttributeError("MoebiusMap is immutable")

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    @classmethod
    def dilation(cls, q):
        """z -> q z."""
        s = cmath.sqrt(q)
        return cls(s, 0, 0, 1 / s)

    @classmethod
    def translation(cls, c):
        return cls(1, c, 0, 1)

    @classmethod
    def from_fixed_points(cls, p_minus, p_plus, q):
        """Loxodromic with repulsive point p_minus, attractive p_plus, multiplier q (|q|>1)."""
        if abs(q) <= 1:
            raise ValueError("need |q| > 1")
        # theta: 0 -> p_minus, inf -> p_plus; conjugate of z -> q z
        theta = cls(p_plus, p_minus, 1, 1) if not (is_inf(p_plus) or is_inf(p_minus)) else None
        if theta is None:
            if is_inf(p_plus) and not is_inf(p_minus):
                theta = cls(1, p_minus, 0, 1)
            elif is_inf(p_minus) and not is_inf(p_plus):
                # 0 -> inf and inf -> p_plus
                theta = cls(p_plus, 1, 1, 0)
            else:
                raise ValueError("fixed points must be distinct")
        return theta @ cls.dilation(q) @ theta.inverse()

    @classmethod
    def parabolic(cls, p, c):
        """Parabolic fixing p; conjugate of z -> z/(c z + 1) by translation to p."""
        return cls.translation(p) @ cls(1, 0, c, 1) @ cls.translation(-p)

    # algebra
    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def trace(self) -> complex:
        return self.a + self.d

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        return MoebiusMap(self.a * other.a + self.b * other.c,
                          self.a * other.b + self.b * other.d,
                          self.c * other.a + self.d * other.c,
                          self.c * other.b + self.d * other.d)

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def distance(self, other: "MoebiusMap") -> float:
        m, n = self.matrix, other.matrix
        return float(min(np.abs(m - n).max(), np.abs(m + n).max()))

    def allclose(self, other, tol=TOL_EQUAL) -> bool:
        return self.distance(other) < tol

    def __eq__(self, other):
        if not isinstance(other, MoebiusMap):
            return NotImplemented
        return self.allclose(other)

    __hash__ = None

    def __repr__(self):
        return f"MoebiusMap({self.a:.6g}, {self.b:.6g}, {self.c:.6g}, {self.d:.6g})"

    # action on the sphere
    def __call__(self, z):
        if is_inf(z):
            return INF if self.c == 0 else self.a / self.c
        if np.ndim(z) == 0:
            den = self.c * z + self.d
            if den == 0:
                return INF
            return (self.a * z + self.b) / den
        z = np.asarray(z, dtype=complex)
        return (self.a * z + self.b) / (self.c * z + self.d)

    def derivative(self, z):
        return 1.0 / (self.c * np.asarray(z) + self.d) ** 2

    def image_circle(self, circ: Circle) -> Circle:
        """Image of a circle not passing through the pole of the map."""
        # three points determine the image circle
        pts = self(circ.points(3, phase=0.1))
        return circle_through(*pts)

    def extend(self, x, z):
        """Poincare extension acting on arrays of half-space coordinates."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=complex)
        a, b, c, d = self.a, self.b, self.c, self.d
        cz_d = c * z + d
        den = np.abs(cz_d) ** 2 + abs(c) ** 2 * x ** 2
        xn = x / den
        zn = ((a * z + b) * np.conj(cz_d) + a * np.conj(c) * x ** 2) / den
        return xn, zn


def circle_through(z1, z2, z3) -> Circle:
    """Circle through three boundary points (raises if collinear)."""
    w = (z3 - z1) / (z2 - z1)
    if abs(w.imag) < 1e-14 * max(1.0, abs(w)):
        raise ValueError("points are collinear")
    c = (z2 - z1) * (w - abs(w) ** 2) / (2j * w.imag) + z1
    return Circle(complex(c), float(abs(z1 - c)))


def hyperbolic_distance(x1, z1, x2, z2):
    """Distance in half-space; the asinh form keeps precision for close points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    num = np.abs(np.asarray(z1) - np.asarray(z2)) ** 2 + (x1 - x2) ** 2
    return 2.0 * np.arcsinh(np.sqrt(num / (4.0 * x1 * x2)))


def poincare_extension(M: MoebiusMap, pt: HalfSpacePoint) -> HalfSpacePoint:
    x, z = M.extend(pt.x, pt.z)
    return HalfSpacePoint(float(x), complex(z))


def classify(M: MoebiusMap) -> str:
    if M.allclose(MoebiusMap.identity(), 1e-12):
        return "identity"
    t2 = M.trace ** 2
    if abs(t2 - 4) < TOL_CLASSIFY:
        return "parabolic"
    if abs(t2.imag) < TOL_CLASSIFY and -TOL_CLASSIFY <= t2.real < 4:
        return "elliptic"
    return "loxodromic"


def _sqrt_branch(w: complex) -> complex:
    # principal branch off R_-, and +i sqrt|w| on R_-
    if w.imag == 0 and w.real < 0:
        return 1j * math.sqrt(-w.real)
    return cmath.sqrt(w)


def fixed_points(M: MoebiusMap):
    """(p_plus, p_minus): attractive then repulsive fixed point.

    For parabolic maps both entries are the single fixed point.
    """
    kind = classify(M)
    if kind in ("identity", "elliptic"):
        raise ValueError(f"fixed_points needs a loxodromic or parabolic map, got {kind}")
    a, b, c, d = M.a, M.b, M.c, M.d
    if abs(c) < 1e-14:
        if kind == "parabolic":
            return INF, INF
        p = b / (d - a)
        # z -> (a/d) z + b/d: the finite point attracts iff |a/d| < 1
        return (p, INF) if abs(a / d) < 1 else (INF, p)
    s = _sqrt_branch(M.trace ** 2 - 4)
    p1 = (a - d) / (2 * c) + s / (2 * c)
    p2 = (a - d) / (2 * c) - s / (2 * c)
    if kind == "parabolic":
        p = (a - d) / (2 * c)
        return p, p
    if abs(M.derivative(p1)) < abs(M.derivative(p2)):
        return p1, p2
    return p2, p1


def multiplier(M: MoebiusMap) -> Multiplier:
    if classify(M) != "loxodromic":
        raise ValueError("multiplier is defined for loxodromic maps only")
    t = M.trace
    s = cmath.sqrt(t * t - 4)
    lam = (t + s) / 2
    if abs(lam) < 1:
        lam = 1 / lam
    q = lam * lam
    return Multiplier(math.log(abs(q)), cmath.phase(q) % (2 * math.pi))


def fixed_point_distance(M: MoebiusMap) -> float:
    if abs(M.c) < 1e-14:
        return math.inf
    return math.sqrt(abs(M.trace ** 2 - 4)) / abs(M.c)


def canonical_circles(M: MoebiusMap):
    """(C_minus, C_plus): equal-radius circles around the repulsive/attractive points.

    M maps the exterior of C_minus onto the interior of C_plus.
    """
    if classify(M) != "loxodromic":
        raise ValueError("canonical circles need a loxodromic map")
    pp, pm = fixed_points(M)
    if is_inf(pp) or is_inf(pm):
        raise ValueError("canonical circles need finite fixed points")
    return circles_from_data(pm, pp, multiplier(M).ell)


def circles_from_data(pm, pp, ell):
    """Canonical circles from fixed points and log-modulus directly.

    Preferred for degenerating families: recovering p_plus - p_minus from the
    trace loses about half the digits when ell is small.
    """
    k = 1.0 / (-math.expm1(-ell))
    z_minus = pp + (pm - pp) * k
    z_plus = pm + (pp - pm) * k
    r = abs(pp - pm) / (2 * math.sinh(ell / 2))
    return Circle(z_minus, r), Circle(z_plus, r)


def limiting_circles(p, c, nu):
    """Tangent circle pair at a parabolic point p: centres p -/+ (1+i nu)/c."""
    w = (1 + 1j * nu) / c
    r = math.sqrt(1 + nu * nu) / abs(c)
    return Circle(p - w, r), Circle(p + w, r)


def maps_exterior_into(M: MoebiusMap, c_from: Circle, c_to: Circle, n=64, tol=1e-8):
    """Sample check that M(C_from) = C_to and the exterior of C_from lands inside C_to.

    Returns the max deviation of sampled boundary images from C_to and a flag.
    """
    pts = c_from.points(n, phase=0.3)
    img = M(pts)
    dev = float(np.max(np.abs(np.abs(img - c_to.center) - c_to.radius)))
    outside = c_from.center + 1.5 * c_from.radius * np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
    far = np.array([10.0, -10.0, 10j, -10j]) * (abs(c_from.center) + c_from.radius + 1)
    probe = M(np.concatenate([outside, far]))
    inside = bool(np.all(np.abs(probe - c_to.center) < c_to.radius + tol))
    return dev, inside and dev < tol
