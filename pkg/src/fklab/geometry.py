"""Directional norms and the convex bodies they induce.

The inverse correlation length is handled as a positively homogeneous
convex norm, either analytic (test norms) or tabulated over unit
directions with piecewise-linear-in-angle interpolation (estimated norms).
From a norm we build the equi-decay set (its unit ball), the Wulff shape
(the polar body), dual boundary vectors, the surcharge function and the
forward/backward cones it defines, plus boundary curvature estimates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull


class DegenerateNorm(Exception):
    """Norm evaluates to <= 0 somewhere on the unit sphere."""


class ZeroVector(Exception):
    """Operation undefined for the zero vector."""


class InsufficientResolution(Exception):
    """Boundary not locally resolved well enough for curvature."""


class NormConvexityWarning(UserWarning):
    """Tabulated norm data violates convexity beyond tolerance."""


def _unit(theta):
    return np.array([math.cos(theta), math.sin(theta)])


class DirectionalNorm:
    """Positively homogeneous even norm on R^d given by a unit-sphere profile.

    Subclasses implement ``profile(direction)`` for unit directions; the
    norm is then xi(v) = |v| * profile(v / |v|) with xi(0) = 0.
    """

    d = 2
    rel_tolerance = 1e-6

    def profile(self, u):
        raise NotImplementedError

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=float)
        r = float(np.sqrt((v * v).sum()))
        if r == 0.0:
            return 0.0
        return r * self.profile(v / r)

    def check_unit_positive(self, n_dirs: int = 256):
        for theta in np.linspace(0, 2 * math.pi, n_dirs, endpoint=False):
            if self(_unit(theta)) <= 0:
                raise DegenerateNorm(f"norm <= 0 at angle {theta:.4f}")


class EuclideanNorm(DirectionalNorm):
    def __init__(self, scale: float = 1.0, d: int = 2):
        if scale <= 0:
            raise DegenerateNorm("scale must be positive")
        self.scale = scale
        self.d = d

    def profile(self, u):
        return self.scale

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.scale * float(np.sqrt((v * v).sum()))


class ScaledL1Norm(DirectionalNorm):
    def __init__(self, scale: float = 1.0, d: int = 2):
        if scale <= 0:
            raise DegenerateNorm("scale must be positive")
        self.scale = scale
        self.d = d

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.scale * float(np.abs(v).sum())

    def profile(self, u):
        u = np.asarray(u, dtype=float)
        return self.scale * float(np.abs(u).sum())


class QuadraticNorm(DirectionalNorm):
    """xi(v) = sqrt(v^T A v) for symmetric positive definite A."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if not np.allclose(A, A.T):
            raise ValueError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise DegenerateNorm("A must be positive definite")
        self.A = A
        self.d = A.shape[0]

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ self.A @ v))

    def profile(self, u):
        return self(u)


class TabulatedNorm(DirectionalNorm):
    """Norm from sampled unit-direction values, linear in angle (d = 2).

    Values are symmetrized (xi(v) = xi(-v)); convexity of the induced unit
    ball is asserted, not enforced: violations beyond tolerance emit a
    :class:`NormConvexityWarning` and ``validate()`` raises.
    """

    def __init__(self, angles, values, rel_tolerance: float = 1e-6):
        angles = np.asarray(angles, dtype=float) % (2 * math.pi)
        values = np.asarray(values, dtype=float)
        if np.any(values <= 0):
            raise DegenerateNorm("tabulated values must be positive")
        both = np.concatenate([angles, (angles + math.pi) % (2 * math.pi)])
        vals = np.concatenate([values, values])
        order = np.argsort(both)
        both = both[order]
        vals = vals[order]
        # merge coincident knots (duplicates average; symmetrized data that
        # disagrees under v -> -v is reconciled rather than silently dropped)
        knots = []
        acc = [both[0], vals[0], 1]
        for a, v in zip(both[1:], vals[1:]):
            if a - acc[0] <= 1e-12:
                acc[1] += v
                acc[2] += 1
            else:
                knots.append((acc[0], acc[1] / acc[2]))
                acc = [a, v, 1]
        knots.append((acc[0], acc[1] / acc[2]))
        self.angles = np.array([k[0] for k in knots])
        self.values = np.array([k[1] for k in knots])
        self.d = 2
        self.rel_tolerance = rel_tolerance
        defect = self.convexity_defect()
        if defect > 10 * rel_tolerance:
            warnings.warn(
                f"tabulated norm violates convexity (defect {defect:.3g})",
                NormConvexityWarning)

    def profile(self, u):
        theta = math.atan2(u[1], u[0]) % (2 * math.pi)
        i = np.searchsorted(self.angles, theta, side="right") - 1
        a0 = self.angles[i]
        v0 = self.values[i]
        if i + 1 < len(self.angles):
            a1 = self.angles[i + 1]
            v1 = self.values[i + 1]
        else:
            a1 = self.angles[0] + 2 * math.pi
            v1 = self.values[0]
        if a1 == a0:
            return v0
        w = (theta - a0) / (a1 - a0)
        return (1 - w) * v0 + w * v1

    def convexity_defect(self) -> float:
        """Max relative violation of xi(a+b) <= xi(a) + xi(b) on knot pairs."""
        pts = np.array([_unit(t) / v for t, v in zip(self.angles, self.values)])
        worst = 0.0
        n = len(pts)
        for i in range(n):
            a = pts[i]
            b = pts[(i + 2) % n]
            mid = 0.5 * (a + b)
            # boundary points of U_xi; convexity means xi(mid) <= 1
            val = self(mid)
            worst = max(worst, val - 1.0)
        return worst

    def validate(self):
        defect = self.convexity_defect()
        if defect > 10 * self.rel_tolerance:
            raise DegenerateNorm(
                f"tabulated norm not convex (defect {defect:.3g})")


def norm_from_estimates(directions, estimates, rel_tolerance=None) -> TabulatedNorm:
    """Tabulated norm from per-direction decay-rate estimates.

    ``estimates`` are (value, lo, hi) triples per unit direction; the stored
    tolerance is the worst relative CI half-width unless overridden.
    """
    angles = [math.atan2(u[1], u[0]) for u in directions]
    values = [e[0] for e in estimates]
    if rel_tolerance is None:
        rel_tolerance = max((e[2] - e[1]) / (2 * e[0]) for e in estimates)
    return TabulatedNorm(angles, values, rel_tolerance=rel_tolerance)


# ---------------------------------------------------------------------------
# convex bodies
# ---------------------------------------------------------------------------


@dataclass
class ConvexBody:
    """Convex body with the origin interior; d=2 stores an ordered boundary.

    For d >= 3 only support-function samples are stored (no polytope
    algebra); ``vertices`` then holds the sample points h(n) * n placement
    is not implied.
    """

    d: int
    vertices: np.ndarray                      # (n, d), ccw ordered for d=2
    support_dirs: np.ndarray = field(default=None, repr=False)
    support_vals: np.ndarray = field(default=None, repr=False)

    def support(self, direction) -> float:
        direction = np.asarray(direction, dtype=float)
        return float(np.max(self.vertices @ direction))

    def contains(self, point, tol: float = 1e-9) -> bool:
        point = np.asarray(point, dtype=float)
        if self.d != 2:
            raise NotImplementedError("containment test is d=2 only")
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        cross = (nxt[:, 0] - v[:, 0]) * (point[1] - v[:, 1]) - \
                (nxt[:, 1] - v[:, 1]) * (point[0] - v[:, 0])
        return bool(np.all(cross >= -tol))

    def is_convex(self, tol: float = 1e-9) -> bool:
        if self.d != 2:
            raise NotImplementedError
        v = self.vertices
        a = np.roll(v, -1, axis=0) - v
        b = np.roll(a, -1, axis=0)
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        return bool(np.all(cross >= -tol * np.max(np.abs(cross))))

    def to_csv(self) -> str:
        """Boundary export, rows theta,x,y (d = 2)."""
        lines = ["theta,x,y"]
        for x, y in self.vertices:
            lines.append(f"{math.atan2(y, x):.17g},{x:.17g},{y:.17g}")
        return "\n".join(lines) + "\n"


def _ccw_order(points: np.ndarray) -> np.ndarray:
    ang = np.arctan2(points[:, 1], points[:, 0])
    return points[np.argsort(ang)]


def equi_decay_set(norm: DirectionalNorm, resolution: int = 256) -> ConvexBody:
    """Unit ball boundary {v : xi(v) = 1} sampled over a direction grid."""
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    pts = np.empty((resolution, 2))
    for i, theta in enumerate(np.linspace(0, 2 * math.pi, resolution,
                                          endpoint=False)):
        u = _unit(theta)
        val = norm(u)
        if val <= 0:
            raise DegenerateNorm(f"norm <= 0 at angle {theta:.4f}")
        pts[i] = u / val
    return ConvexBody(2, pts)


def wulff_shape(norm: DirectionalNorm, resolution: int = 256) -> ConvexBody:
    """Half-space intersection over the direction grid (polar body of U_xi).

    K = {t : (t, n) <= xi(n) for all sampled unit n}; computed through the
    polar convex hull so redundant constraints drop out.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    dirs = np.empty((resolution, 2))
    h = np.empty(resolution)
    for i, theta in enumerate(np.linspace(0, 2 * math.pi, resolution,
                                          endpoint=False)):
        u = _unit(theta)
        val = norm(u)
        if val <= 0:
            raise DegenerateNorm(f"norm <= 0 at angle {theta:.4f}")
        dirs[i] = u
        h[i] = val
    return _halfspace_intersection(dirs, h)


def _halfspace_intersection(dirs: np.ndarray, h: np.ndarray) -> ConvexBody:
    polar_pts = dirs / h[:, None]
    hull = ConvexHull(polar_pts)
    idx = hull.vertices  # ccw
    verts = []
    k = len(idx)
    for j in range(k):
        i0 = idx[j]
        i1 = idx[(j + 1) % k]
        n0, h0 = dirs[i0], h[i0]
        n1, h1 = dirs[i1], h[i1]
        det = n0[0] * n1[1] - n0[1] * n1[0]
        if abs(det) < 1e-14:
            continue
        x = (h0 * n1[1] - h1 * n0[1]) / det
        y = (n0[0] * h1 - n1[0] * h0) / det
        verts.append((x, y))
    return ConvexBody(2, _ccw_order(np.array(verts)))


def polar_body(body: ConvexBody) -> ConvexBody:
    """Polar of a d=2 body: {t : (t, v) <= 1 for all boundary points v}."""
    v = body.vertices
    h = np.sqrt((v * v).sum(axis=1))
    return _halfspace_intersection(v / h[:, None], 1.0 / h)


def dual_vector(x, norm: DirectionalNorm, body: ConvexBody = None,
                resolution: int = 4096) -> np.ndarray:
    """The maximizer t of (t, x) over the Wulff shape; (t, x) = xi(x).

    Ties over a face resolve to the face centroid.
    """
    x = np.asarray(x, dtype=float)
    if float((x * x).sum()) == 0.0:
        raise ZeroVector("dual vector of the zero vector")
    if body is None:
        body = wulff_shape(norm, resolution)
    vals = body.vertices @ x
    top = vals.max()
    tol = max(1e-12, 1e-9 * abs(top))
    sel = body.vertices[vals >= top - tol]
    return sel.mean(axis=0)


def surcharge(t, y, norm: DirectionalNorm) -> float:
    """s_t(y) = xi(y) - (t, y), clamped to >= 0."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    s = norm(y) - float(t @ y)
    return max(s, 0.0)


def in_forward_cone(y, t, delta: float, norm: DirectionalNorm) -> bool:
    """Strict membership s_t(y) < delta * xi(y); the origin is excluded."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    xi = norm(y)
    s = xi - float(t @ y)
    return s < delta * xi


def in_backward_cone(y, t, delta: float, norm: DirectionalNorm) -> bool:
    return in_forward_cone(-np.asarray(y, dtype=float), t, delta, norm)


def cone_sector(t, delta: float, norm: DirectionalNorm,
                n_grid: int = 4096):
    """Bounding rays (u_lo, u_hi) of the open forward cone (d = 2).

    The cone {y : s_t(y) < delta xi(y)} is an open convex angular sector;
    membership is cross(u_lo, y) > 0 and cross(u_hi, y) < 0 going
    counterclockwise from u_lo to u_hi.
    """
    t = np.asarray(t, dtype=float)

    def f(theta):
        u = _unit(theta)
        return (1.0 - delta) * norm(u) - float(t @ u)

    thetas = np.linspace(0, 2 * math.pi, n_grid, endpoint=False)
    vals = np.array([f(th) for th in thetas])
    inside = vals < 0
    if not inside.any():
        raise DegenerateNorm("empty cone; delta too small for this norm")
    if inside.all():
        raise DegenerateNorm("cone fills the plane; delta too large")
    # locate the single arc of negative values
    flips = np.where(inside != np.roll(inside, 1))[0]
    if len(flips) != 2:
        raise DegenerateNorm("cone is not a single angular sector")
    # entering index: inside[i] and not inside[i-1]
    if inside[flips[0]]:
        enter, leave = flips[0], flips[1]
    else:
        enter, leave = flips[1], flips[0]

    def bisect(lo, hi):
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    th_enter = thetas[enter]
    step = 2 * math.pi / n_grid
    lo_angle = bisect(th_enter - step, th_enter)
    th_leave = thetas[leave]

    def bisect_up(lo, hi):
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    hi_angle = bisect_up(th_leave - step, th_leave)
    return _unit(lo_angle), _unit(hi_angle)


def feasible_delta_range(t, norm: DirectionalNorm) -> tuple:
    """Admissible (delta_min, 1/3) for axis directions inside the 3delta cone.

    delta admits +-e_i strictly inside Y_{3 delta} iff
    3 delta > min_i min(s_t(e_i), s_t(-e_i)) / xi(e_i).
    """
    t = np.asarray(t, dtype=float)
    d = len(t)
    best = math.inf
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        for sgn in (1.0, -1.0):
            xi = norm(sgn * e)
            best = min(best, surcharge(t, sgn * e, norm) / xi)
    return best / 3.0, 1.0 / 3.0


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def _circle_curvature(pts: np.ndarray) -> float:
    """Least-squares (Kasa) circle through >= 3 points; returns 1 / radius."""
    x = pts[:, 0]
    y = pts[:, 1]
    A = np.column_stack([2 * x, 2 * y, np.ones(len(x))])
    b = x * x + y * y
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy, c = sol
    r2 = c + cx * cx + cy * cy
    if r2 <= 0:
        return math.inf
    return 1.0 / math.sqrt(r2)


def boundary_curvature(body: ConvexBody, t, window: int = 2):
    """Finite-difference curvature of the boundary at the point t.

    d=2: local circle fit through the 2*window+1 boundary vertices nearest
    t; returns (curvature, positive_verdict).  Requires the boundary to be
    resolved by at least five points near t.
    """
    t = np.asarray(t, dtype=float)
    if body.d == 2:
        v = body.vertices
        if len(v) < 5:
            raise InsufficientResolution("fewer than 5 boundary points")
        d2 = ((v - t) ** 2).sum(axis=1)
        i0 = int(np.argmin(d2))
        n = len(v)
        if math.sqrt(d2[i0]) > 0.25 * math.sqrt((t * t).sum()) + 1e-9:
            raise ValueError("t is not near the boundary")
        idx = [(i0 + k) % n for k in range(-window, window + 1)]
        pts = v[idx]
        if len(np.unique(pts, axis=0)) < 5:
            raise InsufficientResolution("boundary points not distinct")
        chi = _circle_curvature(pts)
        return chi, chi > 0
    return _support_curvatures(body, t)


def _support_curvatures(body: ConvexBody, t):
    """Principal curvatures from support samples (d >= 3).

    Fits h locally as a quadratic over tangent coordinates around the
    normal direction of t; curvatures are eigenvalues of (Hess + h I)^-1.
    """
    if body.support_dirs is None:
        raise InsufficientResolution("no support samples stored")
    t = np.asarray(t, dtype=float)
    n0 = t / np.linalg.norm(t)
    dirs = body.support_dirs
    vals = body.support_vals
    cosang = dirs @ n0
    sel = cosang > math.cos(0.5)
    if sel.sum() < (body.d * (body.d + 1)):
        raise InsufficientResolution("too few support samples near t")
    # tangent basis
    basis = []
    for i in range(body.d):
        e = np.zeros(body.d)
        e[i] = 1.0
        cand = e - (e @ n0) * n0
        if np.linalg.norm(cand) > 1e-8:
            basis.append(cand / np.linalg.norm(cand))
        if len(basis) == body.d - 1:
            break
    for i in range(1, len(basis)):
        for j in range(i):
            basis[i] -= (basis[i] @ basis[j]) * basis[j]
        basis[i] /= np.linalg.norm(basis[i])
    B = np.array(basis)
    tt = dirs[sel] @ B.T
    hh = vals[sel]
    k = body.d - 1
    cols = [np.ones(len(hh))]
    cols += [tt[:, i] for i in range(k)]
    for i in range(k):
        for j in range(i, k):
            cols.append(tt[:, i] * tt[:, j])
    A = np.column_stack(cols)
    sol, *_ = np.linalg.lstsq(A, hh, rcond=None)
    h0 = sol[0]
    H = np.zeros((k, k))
    pos = 1 + k
    for i in range(k):
        for j in range(i, k):
            c = sol[pos]
            pos += 1
            if i == j:
                H[i, i] = 2 * c
            else:
                H[i, j] = H[j, i] = c
    radii = np.linalg.eigvalsh(H + h0 * np.eye(k))
    curvs = [1.0 / r if r > 0 else math.inf for r in radii]
    return curvs, all(r > 0 for r in radii)


def support_body(dirs, vals, d: int) -> ConvexBody:
    """Body from support-function samples (d >= 3 representation)."""
    dirs = np.asarray(dirs, dtype=float)
    vals = np.asarray(vals, dtype=float)
    return ConvexBody(d, dirs * vals[:, None], support_dirs=dirs,
                      support_vals=vals)
