"""Discrete domains, scalar fields, boundary prescriptions and FD stencils.

All domains are handled as sheared rectangles in computational coordinates
``(s, t)``::

    x = s + c * (t - y_min),    y = t,    c = cot(alpha)

with ``c = 0`` for strips and half-strips.  Arrays are indexed ``[j, i]``
(row ``j`` is the ``t`` index, column ``i`` the ``s`` index) so that nodes are
enumerated row-major.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import GridTooCoarse, InvalidBoundary, InvalidDomain, NotInterior

INTERIOR = 0
BOUNDARY = 1
EXCLUDED = 2

PLUS_INF = math.inf
MINUS_INF = -math.inf

EDGES = ("bottom", "top", "left", "right")
SNAP_TOL = 0.005


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    w: float
    x_min: float
    x_max: float
    h: float
    alpha: float | None = None
    L: float | None = None
    y_min: float = 0.0

    def __post_init__(self):
        if self.kind not in ("strip", "half_strip", "parallelogram"):
            raise InvalidDomain(f"unknown domain kind {self.kind!r}")
        if not (self.w > 0 and self.h > 0):
            raise InvalidDomain("w and h must be positive")
        if self.kind == "parallelogram":
            if self.alpha is None or self.L is None:
                raise InvalidDomain("parallelogram needs alpha and L")
            if not (0 < self.alpha < math.pi) or self.L <= 0:
                raise InvalidDomain("need 0 < alpha < pi and L > 0")
            if not math.isclose(self.x_max - self.x_min, self.L, rel_tol=1e-12):
                raise InvalidDomain("parallelogram base must span x_max - x_min = L")
        if not self.x_min < self.x_max:
            raise InvalidDomain("x_min must be < x_max")

    @classmethod
    def parallelogram(cls, alpha, w, L, h, x_min=0.0):
        return cls("parallelogram", w, x_min, x_min + L, h, alpha=alpha, L=L)

    @property
    def shear(self) -> float:
        if self.kind != "parallelogram":
            return 0.0
        c = math.cos(self.alpha) / math.sin(self.alpha)
        return 0.0 if abs(c) < 1e-15 else c

    @property
    def y_max(self) -> float:
        return self.y_min + self.w

    def to_dict(self) -> dict:
        return {"kind": self.kind, "w": self.w, "x_min": self.x_min,
                "x_max": self.x_max, "alpha": self.alpha, "L": self.L,
                "h": self.h, "y_min": self.y_min}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DomainSpec":
        return cls(d["kind"], float(d["w"]), float(d["x_min"]), float(d["x_max"]),
                   float(d["h"]), alpha=d.get("alpha"), L=d.get("L"),
                   y_min=float(d.get("y_min", 0.0)))


@dataclass(frozen=True, eq=False)
class Grid:
    spec: DomainSpec
    nx: int
    ny: int
    hx: float
    hy: float
    s: np.ndarray
    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    mask: np.ndarray

    @property
    def shear(self) -> float:
        return self.spec.shear

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    def index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def node(self, k: int) -> tuple[int, int]:
        return k % self.nx, k // self.nx

    def coords(self, i: int, j: int) -> tuple[float, float]:
        return float(self.X[j, i]), float(self.Y[j, i])

    def is_interior(self, i: int, j: int) -> bool:
        return 0 < i < self.nx - 1 and 0 < j < self.ny - 1

    def to_physical(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return s + self.shear * (t - self.spec.y_min), t

    def to_computational(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x - self.shear * (y - self.spec.y_min), y

    def edge_nodes(self, edge: str) -> tuple[np.ndarray, np.ndarray]:
        """(j, i) index arrays of the nodes on one edge, corners included."""
        if edge == "bottom":
            return np.zeros(self.nx, int), np.arange(self.nx)
        if edge == "top":
            return np.full(self.nx, self.ny - 1), np.arange(self.nx)
        if edge == "left":
            return np.arange(self.ny), np.zeros(self.ny, int)
        if edge == "right":
            return np.arange(self.ny), np.full(self.ny, self.nx - 1)
        raise ValueError(edge)


def _snap(length: float, h: float, label: str) -> tuple[int, float]:
    ratio = length / h
    n = max(int(round(ratio)), 1)
    if abs(ratio - n) > SNAP_TOL * ratio:
        warnings.warn(f"{label}: length/h = {ratio:.4f} is not an integer; "
                      f"snapping spacing to {length / n:.6g}", stacklevel=3)
    return n, length / n


def build_grid(spec: DomainSpec) -> Grid:
    if spec.h > spec.w / 8 * (1 + 1e-12):
        raise GridTooCoarse(f"h={spec.h} exceeds w/8={spec.w / 8}")
    mx, hx = _snap(spec.x_max - spec.x_min, spec.h, "x")
    my, hy = _snap(spec.w, spec.h, "y")
    s = spec.x_min + hx * np.arange(mx + 1)
    t = spec.y_min + hy * np.arange(my + 1)
    S, T = np.meshgrid(s, t)
    X = S + spec.shear * (T - spec.y_min)
    mask = np.full(S.shape, BOUNDARY, dtype=np.int8)
    mask[1:-1, 1:-1] = INTERIOR
    for a in (s, t, X, T, mask):
        a.flags.writeable = False
    return Grid(spec, mx + 1, my + 1, hx, hy, s, t, X, T, mask)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid {self.grid.shape}")
        m = self.grid.mask if self.mask is None else np.asarray(self.mask, np.int8)
        if not np.all(np.isfinite(v[m != EXCLUDED])):
            raise ValueError("field values must be finite on interior/boundary nodes")
        v.flags.writeable = False
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @property
    def domain(self) -> DomainSpec:
        return self.grid.spec

    @classmethod
    def from_function(cls, grid: Grid, f: Callable) -> "ScalarField":
        return cls(grid, np.broadcast_to(f(grid.X, grid.Y), grid.shape))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    def __sub__(self, other):
        return combine(self, other, np.subtract)

    def __add__(self, other):
        return combine(self, other, np.add)


def _aligned(g1: Grid, g2: Grid) -> bool:
    if not (math.isclose(g1.hx, g2.hx, rel_tol=1e-9) and math.isclose(g1.hy, g2.hy, rel_tol=1e-9)):
        return False
    if g1.shear != g2.shear:
        return False
    ox = (g2.s[0] - g1.s[0]) / g1.hx
    oy = (g2.t[0] - g1.t[0]) / g1.hy
    return abs(ox - round(ox)) < 1e-6 and abs(oy - round(oy)) < 1e-6


def combine(a: ScalarField, b: ScalarField, op) -> ScalarField:
    """Apply ``op`` on the node-set intersection of two fields' grids."""
    if a.grid is b.grid:
        mask = np.maximum(a.mask, b.mask)
        return ScalarField(a.grid, np.where(mask == EXCLUDED, 0.0, op(a.values, b.values)), mask)
    if not _aligned(a.grid, b.grid):
        raise InvalidDomain("fields live on incommensurate grids")
    ga, gb = a.grid, b.grid
    s0, s1 = max(ga.s[0], gb.s[0]), min(ga.s[-1], gb.s[-1])
    t0, t1 = max(ga.t[0], gb.t[0]), min(ga.t[-1], gb.t[-1])
    if s1 - s0 < ga.hx * 2 or t1 - t0 < ga.hy * 2:
        raise InvalidDomain("fields do not overlap")
    spec = DomainSpec("strip" if ga.shear == 0 else "parallelogram", t1 - t0, s0, s1,
                      max(ga.hx, ga.hy), y_min=t0,
                      alpha=ga.spec.alpha if ga.shear else None,
                      L=(s1 - s0) if ga.shear else None)
    g = _subgrid(spec, ga.hx, ga.hy)
    sa = _window(ga, g)
    sb = _window(gb, g)
    mask = np.maximum(a.mask[sa], b.mask[sb])
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = np.maximum(mask[0, 0], BOUNDARY)
    mask = np.where((a.mask[sa] == EXCLUDED) | (b.mask[sb] == EXCLUDED), EXCLUDED, mask)
    vals = np.where(mask == EXCLUDED, 0.0, op(a.values[sa], b.values[sb]))
    return ScalarField(g, vals, mask)


def _subgrid(spec: DomainSpec, hx: float, hy: float) -> Grid:
    mx = int(round((spec.x_max - spec.x_min) / hx))
    my = int(round(spec.w / hy))
    s = spec.x_min + hx * np.arange(mx + 1)
    t = spec.y_min + hy * np.arange(my + 1)
    S, T = np.meshgrid(s, t)
    mask = np.full(S.shape, BOUNDARY, dtype=np.int8)
    mask[1:-1, 1:-1] = INTERIOR
    return Grid(spec, mx + 1, my + 1, hx, hy, s, t, S + spec.shear * (T - spec.y_min), T, mask)


def _window(parent: Grid, child: Grid):
    i0 = int(round((child.s[0] - parent.s[0]) / parent.hx))
    j0 = int(round((child.t[0] - parent.t[0]) / parent.hy))
    return (slice(j0, j0 + child.ny), slice(i0, i0 + child.nx))


def restrict(f: ScalarField, x_min, x_max, y_min=None, y_max=None) -> ScalarField:
    """Sub-field on the nodes of ``f`` lying inside the given box (sheared coords)."""
    g = f.grid
    y_min = g.t[0] if y_min is None else y_min
    y_max = g.t[-1] if y_max is None else y_max
    i = np.nonzero((g.s >= x_min - 1e-9) & (g.s <= x_max + 1e-9))[0]
    j = np.nonzero((g.t >= y_min - 1e-9) & (g.t <= y_max + 1e-9))[0]
    if len(i) < 3 or len(j) < 3:
        raise InvalidDomain("restriction window too small")
    spec = DomainSpec(g.spec.kind if g.shear == 0 else "parallelogram",
                      g.t[j[-1]] - g.t[j[0]], g.s[i[0]], g.s[i[-1]], max(g.hx, g.hy),
                      alpha=g.spec.alpha if g.shear else None,
                      L=(g.s[i[-1]] - g.s[i[0]]) if g.shear else None, y_min=g.t[j[0]])
    sub = _subgrid(spec, g.hx, g.hy)
    win = (slice(j[0], j[-1] + 1), slice(i[0], i[-1] + 1))
    mask = np.where(f.mask[win] == EXCLUDED, EXCLUDED, sub.mask)
    return ScalarField(sub, f.values[win], mask)


# ---------------------------------------------------------------------------
# finite differences


def derivatives(u: np.ndarray, grid: Grid):
    """Central differences at every interior node of a ``(ny, nx)`` array.

    Returns ``(u_x, u_y, u_xx, u_xy, u_yy)`` each of shape ``(ny-2, nx-2)``.
    """
    hx, hy, c = grid.hx, grid.hy, grid.shear
    C = u[1:-1, 1:-1]
    E, W_ = u[1:-1, 2:], u[1:-1, :-2]
    N, S = u[2:, 1:-1], u[:-2, 1:-1]
    us = (E - W_) / (2 * hx)
    ut = (N - S) / (2 * hy)
    uss = (E - 2 * C + W_) / hx**2
    utt = (N - 2 * C + S) / hy**2
    ust = (u[2:, 2:] - u[:-2, 2:] - u[2:, :-2] + u[:-2, :-2]) / (4 * hx * hy)
    if c == 0.0:
        return us, ut, uss, ust, utt
    return us, ut - c * us, uss, ust - c * uss, utt - 2 * c * ust + c * c * uss


def fd_derivatives(field: ScalarField, node) -> tuple[float, float, float, float, float]:
    """``(u_x, u_y, u_xx, u_xy, u_yy)`` at a single interior node ``(i, j)``."""
    i, j = node
    g = field.grid
    if not g.is_interior(i, j) or field.mask[j, i] == EXCLUDED:
        raise NotInterior(f"node {(i, j)} is not an interior node")
    block = field.values[j - 1:j + 2, i - 1:i + 2]
    return tuple(float(d[0, 0]) for d in derivatives(block, g))


# ---------------------------------------------------------------------------
# boundary prescriptions


@dataclass(frozen=True)
class Neumann:
    """Prescribed ``u_x`` on an x-edge (left/right)."""

    slope: float = 0.0


@dataclass(frozen=True)
class CapTrace:
    """Finite trace that depends on the cap: ``fn(x, y, B)``."""

    fn: Callable


class _Periodic:
    def __repr__(self):
        return "PERIODIC"


PERIODIC = _Periodic()


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    value: object  # +-inf, float, callable(x, y), Neumann, PERIODIC

    @property
    def infinite(self) -> bool:
        return isinstance(self.value, float) and math.isinf(self.value)

    @property
    def sign(self) -> int:
        return int(math.copysign(1, self.value)) if self.infinite else 0


@dataclass(frozen=True)
class BoundarySpec:
    """Per-edge segment lists.

    Bottom/top segments are parametrised by ``s`` (equal to ``x`` on strips),
    left/right segments by ``y``.
    """

    domain: DomainSpec
    bottom: tuple
    top: tuple
    left: tuple
    right: tuple
    sign_change_points: tuple = field(init=False)

    def __post_init__(self):
        for e in EDGES:
            object.__setattr__(self, e, tuple(getattr(self, e)))
        self._check_tiling()
        object.__setattr__(self, "sign_change_points", tuple(self._sign_changes()))

    @property
    def periodic(self) -> bool:
        return any(seg.value is PERIODIC for seg in self.left + self.right)

    def edge_range(self, edge: str) -> tuple[float, float]:
        d = self.domain
        if edge in ("bottom", "top"):
            return d.x_min, d.x_max
        return d.y_min, d.y_max

    def _check_tiling(self):
        for e in EDGES:
            segs = getattr(self, e)
            a, b = self.edge_range(e)
            if not segs:
                raise InvalidBoundary(f"edge {e} has no segments")
            tol = 1e-9 * max(1.0, abs(b - a))
            if abs(segs[0].start - a) > tol or abs(segs[-1].end - b) > tol:
                raise InvalidBoundary(f"segments do not cover edge {e}")
            for s0, s1 in zip(segs, segs[1:]):
                if abs(s0.end - s1.start) > tol:
                    raise InvalidBoundary(f"segments on edge {e} overlap or leave a gap")
            for s in segs:
                if s.end <= s.start:
                    raise InvalidBoundary(f"empty segment on edge {e}")
        if self.periodic and not all(seg.value is PERIODIC for seg in self.left + self.right):
            raise InvalidBoundary("periodic identification must cover both x-edges")

    def _to_xy(self, edge, p):
        d = self.domain
        c = d.shear
        if edge == "bottom":
            return (p, d.y_min)
        if edge == "top":
            return (p + c * d.w, d.y_max)
        x0 = d.x_min if edge == "left" else d.x_max
        return (x0 + c * (p - d.y_min), p)

    def edge_sign_changes(self, edge: str) -> list[tuple[float, int]]:
        """(parameter, sign on the far side) of every +INF/-INF switch on an edge."""
        segs = getattr(self, edge)
        out = [(s1.start, s1.sign) for s0, s1 in zip(segs, segs[1:])
               if s0.infinite and s1.infinite and s0.sign != s1.sign]
        if self.periodic and edge in ("bottom", "top"):
            first, last = segs[0], segs[-1]
            if first.infinite and last.infinite and first.sign != last.sign:
                out.append((first.start, first.sign))
                out.append((last.end, -last.sign))
        return out

    def _sign_changes(self):
        pts = []
        for e in EDGES:
            for p, _ in self.edge_sign_changes(e):
                xy = self._to_xy(e, p)
                if xy not in pts:
                    pts.append(xy)
        return pts

    def value_at(self, edge: str, p: float):
        for seg in getattr(self, edge):
            if seg.start - 1e-12 <= p <= seg.end + 1e-12:
                return seg.value
        raise InvalidBoundary(f"parameter {p} outside edge {edge}")

    def corner_sign_changes(self) -> list[tuple[float, float]]:
        """Corners where a y-edge infinity meets an x-edge infinity of opposite sign."""
        if self.periodic:
            return []
        d = self.domain
        out = []
        for ye, xe in (("bottom", "left"), ("bottom", "right"), ("top", "left"), ("top", "right")):
            p_y = d.x_min if xe == "left" else d.x_max
            p_x = d.y_min if ye == "bottom" else d.y_max
            a = self.value_at(ye, p_y)
            b = self.value_at(xe, p_x)
            if (isinstance(a, float) and isinstance(b, float) and math.isinf(a)
                    and math.isinf(b) and a != b):
                out.append(self._to_xy(ye, p_y))
        return out

    def check_corners(self, grid: Grid):
        """Refuse sign changes that sit within 4h of a corner without being on it."""
        for e in ("bottom", "top"):
            a, b = self.edge_range(e)
            for p, _ in self.edge_sign_changes(e):
                if self.periodic:
                    continue
                dist = min(abs(p - a), abs(p - b))
                if 1e-9 < dist < 4 * grid.hx:
                    raise InvalidBoundary(f"sign change at {p} lies within 4h of a corner")
        for e in ("left", "right"):
            a, b = self.edge_range(e)
            for p, _ in self.edge_sign_changes(e):
                dist = min(abs(p - a), abs(p - b))
                if 1e-9 < dist < 4 * grid.hy:
                    raise InvalidBoundary(f"sign change at {p} lies within 4h of a corner")


def segments(breaks: Sequence[float], values: Sequence) -> list[Segment]:
    """Build a tiling from breakpoints ``[a, p1, ..., b]`` and one value per piece."""
    if len(breaks) != len(values) + 1:
        raise ValueError("need len(breaks) == len(values) + 1")
    out = []
    for a, b, v in zip(breaks, breaks[1:], values):
        if b > a:
            out.append(Segment(float(a), float(b), float(v) if isinstance(v, (int, float)) else v))
    return out


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Finite Dirichlet values on boundary nodes plus x-edge closure data."""

    values: np.ndarray
    neumann: dict  # edge -> slope, for x-edges carrying Neumann data
    periodic: bool
    inf_sign: np.ndarray = None  # +-1 on fully capped infinite nodes, 0 elsewhere


def _eval(value, B, x, y):
    if isinstance(value, CapTrace):
        return np.broadcast_to(np.asarray(value.fn(x, y, B), dtype=float), np.shape(x)).copy()
    if isinstance(value, float) and math.isinf(value):
        return np.full(np.shape(x), math.copysign(B, value))
    if callable(value):
        return np.broadcast_to(np.asarray(value(x, y), dtype=float), np.shape(x)).copy()
    return np.full(np.shape(x), float(value))


def cap_boundary(spec: BoundarySpec, B: float, grid: Grid) -> BoundaryTrace:
    """Replace +-INF segments by +-B, ramping linearly across sign changes."""
    vals = np.zeros(grid.shape)
    sign = np.zeros(grid.shape, dtype=np.int8)
    neumann = {}
    d = spec.domain
    period = d.x_max - d.x_min
    for e in ("left", "right"):
        segs = getattr(spec, e)
        if segs[0].value is PERIODIC:
            continue
        if isinstance(segs[0].value, Neumann):
            if len(segs) != 1:
                raise InvalidBoundary("Neumann data must cover a whole x-edge")
            neumann[e] = segs[0].value.slope
            continue
        jj, ii = grid.edge_nodes(e)
        p = grid.t[jj]
        for seg in segs:
            sel = (p >= seg.start - 1e-12) & (p <= seg.end + 1e-12)
            vals[jj[sel], ii[sel]] = _eval(seg.value, B, grid.X[jj[sel], ii[sel]], grid.Y[jj[sel], ii[sel]])
            sign[jj[sel], ii[sel]] = seg.sign
        for pc, sgn in spec.edge_sign_changes(e):
            dist = p - pc
            near = np.abs(dist) <= 2 * grid.hy + 1e-12
            vals[jj[near], ii[near]] = sgn * B * dist[near] / (2 * grid.hy)
            sign[jj[near], ii[near]] = 0
    # y-edges last: they own the corners
    for e in ("bottom", "top"):
        jj, ii = grid.edge_nodes(e)
        p = grid.s[ii]
        for seg in getattr(spec, e):
            sel = (p >= seg.start - 1e-12) & (p <= seg.end + 1e-12)
            vals[jj[sel], ii[sel]] = _eval(seg.value, B, grid.X[jj[sel], ii[sel]], grid.Y[jj[sel], ii[sel]])
            sign[jj[sel], ii[sel]] = seg.sign
        for pc, sgn in spec.edge_sign_changes(e):
            dist = p - pc
            if spec.periodic:
                dist = (dist + period / 2) % period - period / 2
            near = np.abs(dist) <= 2 * grid.hx + 1e-12
            vals[jj[near], ii[near]] = sgn * B * dist[near] / (2 * grid.hx)
            sign[jj[near], ii[near]] = 0
    for cx, cy in spec.corner_sign_changes():
        _ramp_corner(vals, spec, grid, B, cx, cy)
        _ramp_corner(sign, spec, grid, 0.0, cx, cy)
    return BoundaryTrace(vals, neumann, spec.periodic, sign)


def _ramp_corner(vals, spec, grid, B, cx, cy):
    d = spec.domain
    i = 0 if math.isclose(cx - grid.shear * (cy - d.y_min), d.x_min, abs_tol=1e-9) else grid.nx - 1
    j = 0 if math.isclose(cy, d.y_min, abs_tol=1e-9) else grid.ny - 1
    ye = "bottom" if j == 0 else "top"
    xe = "left" if i == 0 else "right"
    sy = math.copysign(1, spec.value_at(ye, grid.s[i]))
    sx = math.copysign(1, spec.value_at(xe, grid.t[j]))
    for k in range(3):
        r = k / 2
        ii = i + k if i == 0 else i - k
        jj = j + k if j == 0 else j - k
        vals[j, ii] = sy * B * r
        vals[jj, i] = sx * B * r
    vals[j, i] = 0.0


# ---------------------------------------------------------------------------
# CSV / JSON io


def write_field_csv(field: ScalarField, path) -> None:
    g = field.grid
    vals = np.where(field.mask == EXCLUDED, np.nan, field.values)
    with open(path, "w") as fh:
        fh.write("x,y,u\n")
        for x, y, u in zip(g.X.ravel(), g.Y.ravel(), vals.ravel()):
            fh.write(f"{x:.17g},{y:.17g},{u:.17g}\n")
    with open(str(path) + ".json", "w") as fh:
        json.dump({**g.spec.to_dict(), "hx": g.hx, "hy": g.hy}, fh, indent=2, sort_keys=True)


def read_field_csv(path) -> ScalarField:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    spec = DomainSpec.from_dict(meta)
    # the snapped spacings are stored so no re-snapping happens on read
    grid = _subgrid(spec, meta["hx"], meta["hy"]) if "hx" in meta else build_grid(spec)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.size:
        raise ValueError(f"{path}: expected {grid.size} rows, got {data.shape[0]}")
    u = data[:, 2].reshape(grid.shape)
    mask = np.where(np.isnan(u), EXCLUDED, grid.mask).astype(np.int8)
    return ScalarField(grid, np.nan_to_num(u), mask)
