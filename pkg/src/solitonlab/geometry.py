"""Gauss maps, slope bounds, theta-graph checks and cylindrical charts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAxis, InvalidRadius, SectorTooWide
from .grid import EXCLUDED, INTERIOR, ScalarField, derivatives


def _interior_ok(u: ScalarField) -> np.ndarray:
    """Interior nodes whose 3x3 stencil avoids excluded nodes, shape (ny-2, nx-2)."""
    m = u.mask
    ok = m[1:-1, 1:-1] == INTERIOR
    for dj in (0, 1, 2):
        for di in (0, 1, 2):
            ok &= m[dj:dj + m.shape[0] - 2, di:di + m.shape[1] - 2] != EXCLUDED
    return ok


# ---------------------------------------------------------------------------
# Gauss map


@dataclass
class NormalField:
    nu: np.ndarray  # (ny-2, nx-2, 3)
    valid: np.ndarray
    e3_nodes: np.ndarray  # (k, 2) positions where Du vanishes to tolerance
    degenerate: bool  # every normal equals e3

    @property
    def upper_hemisphere(self) -> bool:
        return bool(np.all(self.nu[..., 2][self.valid] > 0))


def gauss_map(u: ScalarField, e3_tol: float = 1e-9) -> NormalField:
    """Unit normals ``(-u_x, -u_y, 1) / W`` on interior nodes."""
    g = u.grid
    ux, uy, *_ = derivatives(u.values, g)
    W = np.sqrt(1 + ux * ux + uy * uy)
    nu = np.stack([-ux / W, -uy / W, 1 / W], axis=-1)
    ok = _interior_ok(u)
    flat = (np.hypot(ux, uy) <= e3_tol) & ok
    X, Y = g.X[1:-1, 1:-1], g.Y[1:-1, 1:-1]
    pts = np.stack([X[flat], Y[flat]], axis=1)
    return NormalField(nu, ok, pts, bool(ok.any() and np.all(flat[ok])))


@dataclass
class InjectivityReport:
    pairs: int
    collisions: int
    examples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"pairs": self.pairs, "collisions": self.collisions,
                "examples": self.examples[:20]}


def gauss_injectivity_sample(u: ScalarField, sample_count: int = 100_000, seed: int = 0,
                             tol: float = 1e-6) -> InjectivityReport:
    """Sample node pairs and flag equal normals at points at least 4h apart."""
    nf = gauss_map(u)
    g = u.grid
    idx = np.flatnonzero(nf.valid.ravel())
    nu = nf.nu.reshape(-1, 3)[idx]
    X = g.X[1:-1, 1:-1].ravel()[idx]
    Y = g.Y[1:-1, 1:-1].ravel()[idx]
    rng = np.random.default_rng(seed)
    a = rng.integers(0, len(idx), sample_count)
    b = rng.integers(0, len(idx), sample_count)
    dn = np.linalg.norm(nu[a] - nu[b], axis=1)
    dp = np.hypot(X[a] - X[b], Y[a] - Y[b])
    hit = (dn <= tol) & (dp >= 4 * g.h)
    ex = [[float(X[i]), float(Y[i]), float(X[j]), float(Y[j])]
          for i, j in zip(a[hit][:20], b[hit][:20])]
    return InjectivityReport(int(sample_count), int(hit.sum()), ex)


# ---------------------------------------------------------------------------
# slope bounds and theta graphs


def delta_bound(p_a, R: float, w: float) -> float:
    """``(w + |y_a|) / sqrt(R^2 - (w + |y_a|)^2)``."""
    k = w + abs(p_a[1])
    if R <= k:
        raise InvalidRadius(f"R={R} must exceed w + |y_a| = {k}")
    return k / math.sqrt(R * R - k * k)


@dataclass
class SlopeBound:
    found: bool
    R0: float | None
    eps: float | None
    direction: int
    column_x: np.ndarray
    column_min: np.ndarray

    def to_dict(self) -> dict:
        return {"found": self.found, "R0": self.R0, "eps": self.eps,
                "direction": self.direction}


def slope_ratio(u: ScalarField) -> np.ndarray:
    """``|u_y / u_x|`` on interior nodes (``inf`` where ``u_x = 0``)."""
    ux, uy, *_ = derivatives(u.values, u.grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(uy) / np.abs(ux)
    return np.where(ux == 0, np.inf, r)


def slope_bound_scan(u: ScalarField, direction: int, eps: float | None = None,
                     R0: float | None = None) -> SlopeBound:
    """Slope bound ``|u_y/u_x| >= eps`` on ``{direction * x > R0}``.

    With ``eps`` given, columns are scanned from the far edge inward and the
    largest window on which the bound holds is returned.  Otherwise ``R0``
    (default: half the distance to the far edge) fixes the window and the
    reported ``eps`` is the minimum ratio over it.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    g = u.grid
    r = np.where(_interior_ok(u), slope_ratio(u), np.inf)
    cols = np.min(r, axis=0)
    xs = g.s[1:-1]
    order = np.argsort(-direction * xs)  # far edge first
    if eps is None:
        far = g.s[0] if direction < 0 else g.s[-1]
        R0 = abs(far) / 2 if R0 is None else R0
        sel = direction * xs > R0
        if not sel.any():
            return SlopeBound(False, R0, None, direction, xs, cols)
        return SlopeBound(True, float(R0), float(np.min(cols[sel])), direction, xs, cols)
    last = None
    for k in order:
        if cols[k] >= eps:
            last = k
        else:
            break
    if last is None:
        return SlopeBound(False, None, eps, direction, xs, cols)
    # window is {direction * x >= direction * xs[last]}
    return SlopeBound(True, float(direction * xs[last]), float(eps), direction, xs, cols)


def omega_region(u: ScalarField, p_a, R: float, sign: int) -> np.ndarray:
    """Mask of ``Omega^{sign}_{p_a}(R)``: beyond the circle of radius R, on the sign side."""
    g = u.grid
    X, Y = g.X[1:-1, 1:-1], g.Y[1:-1, 1:-1]
    side = sign * (X - p_a[0]) > 0
    return side & (np.hypot(X - p_a[0], Y - p_a[1]) > R) & _interior_ok(u)


@dataclass
class ThetaGraphReport:
    passed: bool
    nodes: int
    sign: int
    critical: np.ndarray  # (k, 2) points of the discrete zero set of s
    zero_gradient: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "nodes": self.nodes, "sign": self.sign,
                "critical_points": len(self.critical), "zero_gradient": self.zero_gradient}


def theta_graph_check(u: ScalarField, p_a, region: np.ndarray | None = None) -> ThetaGraphReport:
    """Non-collinearity of ``Du`` and ``p - p_a`` over ``region``.

    ``region`` is a mask on interior nodes (shape ``(ny-2, nx-2)``); default is
    every usable interior node.
    """
    g = u.grid
    xa, ya = float(p_a[0]), float(p_a[1])
    ok = _interior_ok(u)
    region = ok if region is None else (np.asarray(region, bool) & ok)
    X, Y = g.X[1:-1, 1:-1], g.Y[1:-1, 1:-1]
    if region.any():
        dmin = np.min(np.hypot(X[region] - xa, Y[region] - ya))
        if dmin < 0.5 * g.h:
            raise InvalidAxis(f"axis point {p_a} lies inside the region")
    ux, uy, *_ = derivatives(u.values, g)
    s = ux * (Y - ya) - uy * (X - xa)
    tol = 1e-8 * (1 + np.hypot(ux, uy)) * (1 + np.hypot(X - xa, Y - ya))
    zero = (np.abs(s) <= tol) & region
    grad0 = (np.hypot(ux, uy) == 0) & region
    pts = [np.stack([X[zero], Y[zero]], axis=1)]
    sg = np.sign(s)
    for axis in (0, 1):
        a = [slice(None), slice(None)]
        b = [slice(None), slice(None)]
        a[axis] = slice(None, -1)
        b[axis] = slice(1, None)
        a, b = tuple(a), tuple(b)
        flip = (sg[a] * sg[b] < 0) & region[a] & region[b]
        # linear interpolation of the crossing
        t = s[a][flip] / (s[a][flip] - s[b][flip])
        px = X[a][flip] + t * (X[b][flip] - X[a][flip])
        py = Y[a][flip] + t * (Y[b][flip] - Y[a][flip])
        pts.append(np.stack([px, py], axis=1))
    crit = np.concatenate(pts) if pts else np.zeros((0, 2))
    signs = np.unique(sg[region & ~zero])
    passed = bool(region.any() and len(crit) == 0 and not grad0.any())
    return ThetaGraphReport(passed, int(region.sum()),
                            int(signs[0]) if len(signs) == 1 else 0, crit, int(grad0.sum()))


@dataclass
class Certification:
    slope: SlopeBound
    p_a: tuple | None
    R: float | None
    delta: float | None
    check: ThetaGraphReport | None

    @property
    def passed(self) -> bool:
        return self.check is not None and self.check.passed

    def to_dict(self) -> dict:
        return {"slope": self.slope.to_dict(), "p_a": self.p_a, "R": self.R,
                "delta": self.delta, "check": self.check.to_dict() if self.check else None,
                "passed": self.passed}


def certify_theta_graph(u: ScalarField, direction: int, eps: float, y_a: float = 0.0,
                        safety: float = 1.05) -> Certification:
    """Slope bound, then a window ``Omega^{dir}_{p_a}(R)`` with ``delta < eps``, then the check.

    ``R`` is the smallest radius (times ``safety``) giving ``delta_bound < eps``;
    ``p_a`` sits on the line ``y = y_a`` so that the whole window lies beyond
    the slope-bound abscissa.
    """
    w = u.domain.w
    sb = slope_bound_scan(u, direction, eps=eps)
    if not sb.found:
        return Certification(sb, None, None, None, None)
    k = w + abs(y_a)
    R = safety * k * math.sqrt(1 + 1 / eps**2)
    # the circle about p_a leaves the strip at most this far from x_a
    far = max(abs(y_a), abs(w - y_a))
    reach = math.sqrt(R * R - far * far)
    x_a = direction * (sb.R0 - reach) - direction * 1e-9
    p_a = (x_a, y_a)
    region = omega_region(u, p_a, R, direction)
    return Certification(sb, p_a, R, delta_bound(p_a, R, w), theta_graph_check(u, p_a, region))


def write_points_csv(points: np.ndarray, path, header=("x", "y")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p in points:
            w.writerow([f"{v:.17g}" for v in p])


# ---------------------------------------------------------------------------
# rigid motions and cylindrical charts


def rotate_about(obj, p_a, theta: float):
    """Rotate points (``(..., 3)`` array) or a mesh about the vertical line at ``p_a``."""
    c, s = math.cos(theta), math.sin(theta)

    def rot(p):
        p = np.array(p, dtype=float)
        dx, dy = p[..., 0] - p_a[0], p[..., 1] - p_a[1]
        p[..., 0] = p_a[0] + c * dx - s * dy
        p[..., 1] = p_a[1] + s * dx + c * dy
        return p

    if hasattr(obj, "transformed"):
        return obj.transformed(rot)
    return rot(obj)


@dataclass
class CylChart:
    p_a: tuple
    rho: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    triangles: np.ndarray
    sector_angle: float
    theta_graphical: bool
    overlap_fraction: float

    def interpolator(self):
        """Linear interpolant ``(rho, z) -> theta`` over the image region W."""
        from scipy.interpolate import LinearNDInterpolator
        from scipy.spatial import Delaunay

        pts = np.stack([self.rho, self.z], axis=1)
        return LinearNDInterpolator(Delaunay(pts), self.theta)

    def contains(self, rho, z) -> np.ndarray:
        """Points of the (rho, z) plane covered by some projected triangle."""
        return _cover_count(self._tri_pts(), np.stack([rho, z], axis=-1)) > 0

    def _tri_pts(self):
        P = np.stack([self.rho, self.z], axis=1)
        return P[self.triangles]

    def write_csv(self, path) -> None:
        write_points_csv(np.stack([self.rho, self.theta, self.z], axis=1), path,
                         header=("rho", "theta", "z"))


def _cover_count(tri: np.ndarray, pts: np.ndarray, chunk: int = 256) -> np.ndarray:
    """How many triangles (``(T, 3, 2)``) contain each point (``(..., 2)``)."""
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1 = b - a, c - a
    den = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    good = np.abs(den) > 1e-300
    a, v0, v1, den = a[good], v0[good], v1[good], den[good]
    out = np.zeros(len(pts), dtype=np.int64)
    for k in range(0, len(pts), chunk):
        p = pts[k:k + chunk, None, :] - a[None]
        l1 = (p[..., 0] * v1[:, 1] - p[..., 1] * v1[:, 0]) / den
        l2 = (v0[:, 0] * p[..., 1] - v0[:, 1] * p[..., 0]) / den
        eps = 1e-12
        inside = (l1 > eps) & (l2 > eps) & (l1 + l2 < 1 - eps)
        out[k:k + chunk] = inside.sum(axis=1)
    return out.reshape(shape)


def cylindrical_chart(mesh, p_a, samples: int = 400, seed: int = 0) -> CylChart:
    """``(rho, theta, z)`` of every mesh vertex about the vertical axis at ``p_a``.

    The azimuth is measured from the ray ``p_a + t (1, 0)`` and made continuous
    across the sector by unwrapping about its circular mean.  The chart is
    theta-graphical when projected triangles keep one orientation and no
    sampled point of W is covered twice.
    """
    V = np.asarray(mesh.vertices, float)
    T = np.asarray(mesh.triangles)
    dx, dy = V[:, 0] - p_a[0], V[:, 1] - p_a[1]
    rho = np.hypot(dx, dy)
    if np.min(rho) <= 1e-12:
        raise InvalidAxis("axis passes through a mesh vertex")
    xy = V[:, :2][T]
    if len(T) and _cover_count(xy, np.array([[p_a[0], p_a[1]]], float))[0] > 0:
        raise InvalidAxis("axis pierces the mesh")
    ang = np.arctan2(dy, dx)
    mean = math.atan2(np.mean(np.sin(ang)), np.mean(np.cos(ang)))
    theta = mean + (ang - mean + math.pi) % (2 * math.pi) - math.pi
    sector = float(theta.max() - theta.min())
    if sector >= math.pi:
        raise SectorTooWide(f"mesh spans a sector of {sector:.4f} rad around the axis")
    P = np.stack([rho, V[:, 2]], axis=1)
    tri = P[T]
    area = ((tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
            - (tri[:, 1, 1] - tri[:, 0, 1]) * (tri[:, 2, 0] - tri[:, 0, 0]))
    nz = np.abs(area) > 1e-14 * max(1.0, float(np.max(np.abs(area), initial=0)))
    one_way = bool(np.all(area[nz] > 0) or np.all(area[nz] < 0))
    frac = 0.0
    if len(T):
        rng = np.random.default_rng(seed)
        pick = rng.integers(0, len(T), samples)
        bc = rng.dirichlet((1, 1, 1), samples)
        pts = np.einsum("kj,kjd->kd", bc, tri[pick])
        cnt = _cover_count(tri, pts)
        frac = float(np.mean(cnt > 1))
    return CylChart(tuple(p_a), rho, theta, V[:, 2], T, sector, one_way and frac == 0.0, frac)
