"""Difference fields, critical points, zero-set arcs and the tangency search.

The zero set of ``v = u1(p - xi) - u2(p)`` is extracted by marching squares
(saddle cells resolved by the cell-centre sample), cut open around critical
points and classified by where each arc ends.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline

from .errors import BoundaryContact, NoOverlap, NoRegion, NotThetaGraph
from .grid import BOUNDARY, EXCLUDED, INTERIOR, DomainSpec, ScalarField, _subgrid, combine

ARC_TYPES = ("type_i_plus_x", "type_ii_minus_x", "type_iii_through_xi",
             "type_iv_through_xhat", "closed_loop", "indeterminate")
ARC_END_TYPES = ARC_TYPES[:4]


# ---------------------------------------------------------------------------
# difference fields


@dataclass
class DifferenceSpec:
    """``v(p) = u1(p - xi) - u2(p)`` on the overlap of the two strips."""

    u1: ScalarField
    u2: ScalarField
    xi: tuple = (0.0, 0.0)
    x_hat: float | None = None

    def __post_init__(self):
        w = self.u2.domain.w
        if abs(self.xi[1]) >= w:
            raise NoOverlap(f"|xi_2| = {abs(self.xi[1])} must be < w = {w}")

    @property
    def candidates(self) -> dict:
        """Overlap boundary points where one of the graphs contains a vertical line."""
        x1, x2 = self.xi
        w = self.u2.domain.w
        out = {}
        if x2 >= 0:
            out["type_iii_through_xi"] = (x1, x2)
            if self.x_hat is not None:
                out["type_iv_through_xhat"] = (self.x_hat, w)
        else:
            out["type_iii_through_xi"] = (0.0, 0.0)
            if self.x_hat is not None:
                out["type_iv_through_xhat"] = (self.x_hat + x1, w + x2)
        return out


def _snap_shift(xi, hx, hy):
    out = []
    for v, h in zip(xi, (hx, hy)):
        k = round(v / h)
        if abs(k * h - v) > 1e-9:
            warnings.warn(f"shift {v} snapped to grid multiple {k * h}", stacklevel=3)
        out.append(k * h)
    return tuple(out)


def difference_field(spec: DifferenceSpec, band: float = 2.0) -> ScalarField:
    """``v`` on the overlap nodes; a band of ``band * h`` next to the y-edges is excluded."""
    u1, u2 = spec.u1, spec.u2
    g1 = u1.grid
    xi = _snap_shift(spec.xi, g1.hx, g1.hy)
    d = u1.domain
    moved = DomainSpec(d.kind, d.w, d.x_min + xi[0], d.x_max + xi[0], d.h, alpha=d.alpha,
                       L=d.L, y_min=d.y_min + xi[1])
    shifted = ScalarField(_subgrid(moved, g1.hx, g1.hy), u1.values, u1.mask)
    try:
        v = combine(shifted, u2, np.subtract)
    except Exception as exc:  # incommensurate or disjoint
        raise NoOverlap(str(exc)) from exc
    g = v.grid
    mask = v.mask.copy()
    near = (g.Y - g.t[0] < band * g.hy + 1e-12) | (g.t[-1] - g.Y < band * g.hy + 1e-12)
    mask[near] = EXCLUDED
    vals = np.where(mask == EXCLUDED, 0.0, v.values)
    return ScalarField(g, vals, mask)


def _active_box(v: ScalarField):
    """Row/column slices of the bounding box of non-excluded nodes."""
    ok = v.mask != EXCLUDED
    rows = np.nonzero(ok.any(axis=1))[0]
    cols = np.nonzero(ok.any(axis=0))[0]
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


# ---------------------------------------------------------------------------
# critical points


@dataclass
class CriticalPoint:
    location: tuple
    grad_norm_seed: float
    grad_norm: float
    value: float
    isolation: float = math.inf

    def to_dict(self) -> dict:
        return {"x": self.location[0], "y": self.location[1], "grad_norm": self.grad_norm,
                "value": self.value, "isolation": self.isolation}


def _spline(v: ScalarField):
    rs, cs = _active_box(v)
    g = v.grid
    if g.shear:
        raise NotImplementedError("critical points on sheared grids")
    return RectBivariateSpline(g.t[rs], g.s[cs], v.values[rs, cs], kx=3, ky=3, s=0), rs, cs


def find_critical_points(v: ScalarField, tol: float = 1e-8, max_iter: int = 30):
    """Seed where both partials change sign inside a cell, polish by Newton on Dv."""
    g = v.grid
    sp, rs, cs = _spline(v)
    t, s = g.t[rs], g.s[cs]
    V = v.values[rs, cs]
    ok = (v.mask[rs, cs] != EXCLUDED)
    vx = np.gradient(V, g.hx, axis=1)
    vy = np.gradient(V, g.hy, axis=0)
    # nodes whose 3x3 stencil is usable
    good = ok.copy()
    good[[0, -1], :] = False
    good[:, [0, -1]] = False

    def changes(a):
        c = np.stack([a[:-1, :-1], a[:-1, 1:], a[1:, :-1], a[1:, 1:]])
        return (c.max(axis=0) >= 0) & (c.min(axis=0) <= 0)

    cell_ok = good[:-1, :-1] & good[:-1, 1:] & good[1:, :-1] & good[1:, 1:]
    seeds = np.argwhere(changes(vx) & changes(vy) & cell_ok)
    found = []
    lo_x, hi_x, lo_y, hi_y = s[1], s[-2], t[1], t[-2]
    for j, i in seeds:
        x, y = s[i] + g.hx / 2, t[j] + g.hy / 2
        g0 = math.hypot(sp(y, x, dy=1)[0, 0], sp(y, x, dx=1)[0, 0])
        ok_pt = False
        for _ in range(max_iter):
            gx = sp(y, x, dy=1)[0, 0]
            gy = sp(y, x, dx=1)[0, 0]
            if math.hypot(gx, gy) <= tol:
                ok_pt = True
                break
            hxx = sp(y, x, dy=2)[0, 0]
            hyy = sp(y, x, dx=2)[0, 0]
            hxy = sp(y, x, dx=1, dy=1)[0, 0]
            det = hxx * hyy - hxy * hxy
            if det == 0:
                break
            dx = (hyy * gx - hxy * gy) / det
            dy = (hxx * gy - hxy * gx) / det
            x, y = x - dx, y - dy
            if math.hypot(x - s[i] - g.hx / 2, y - t[j] - g.hy / 2) > 2 * g.h:
                break
        if not ok_pt or not (lo_x <= x <= hi_x and lo_y <= y <= hi_y):
            continue
        gn = math.hypot(sp(y, x, dy=1)[0, 0], sp(y, x, dx=1)[0, 0])
        if any(math.hypot(x - c.location[0], y - c.location[1]) <= 2 * g.h for c in found):
            continue
        found.append(CriticalPoint((float(x), float(y)), float(g0), float(gn),
                                   float(sp(y, x)[0, 0])))
    for a in found:
        others = [math.dist(a.location, b.location) for b in found if b is not a]
        a.isolation = min(others) if others else math.inf
    return found


# ---------------------------------------------------------------------------
# marching squares


@dataclass
class Arc:
    points: np.ndarray
    closed: bool = False
    ends: list = field(default_factory=lambda: [None, None])  # critical point ids
    type: str = "indeterminate"
    exits: list = field(default_factory=lambda: [None, None])


@dataclass
class ArcSet:
    arcs: list
    critical_points: list
    domain_box: tuple  # (x0, x1, y0, y1) of the active rectangle
    h: float

    def incidence(self) -> dict:
        inc = {k: [] for k in range(len(self.critical_points))}
        for a_id, arc in enumerate(self.arcs):
            for e, cp in enumerate(arc.ends):
                if cp is not None:
                    inc[cp].append((a_id, e))
        return inc

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arc_id", "type", "x", "y"])
            for k, arc in enumerate(self.arcs):
                for p in arc.points:
                    w.writerow([k, arc.type, f"{p[0]:.17g}", f"{p[1]:.17g}"])


def _contour_segments(V, ok, s, t, level=0.0):
    """Marching-squares segments of ``{V = level}`` as pairs of edge keys."""
    F = V - level
    pos = F >= 0
    ny, nx = F.shape
    pts = {}

    def edge_point(key):
        if key in pts:
            return
        kind, j, i = key
        if kind == "h":  # between (j, i) and (j, i+1)
            a, b = F[j, i], F[j, i + 1]
            r = a / (a - b)
            pts[key] = (s[i] + r * (s[i + 1] - s[i]), t[j])
        else:  # between (j, i) and (j+1, i)
            a, b = F[j, i], F[j + 1, i]
            r = a / (a - b)
            pts[key] = (s[i], t[j] + r * (t[j + 1] - t[j]))

    segs = []
    cells = ok[:-1, :-1] & ok[:-1, 1:] & ok[1:, :-1] & ok[1:, 1:]
    code = (pos[:-1, :-1].astype(int) | (pos[:-1, 1:] << 1) | (pos[1:, 1:] << 2)
            | (pos[1:, :-1] << 3))
    for j, i in np.argwhere(cells & (code != 0) & (code != 15)):
        c = int(code[j, i])
        # edges: bottom, right, top, left
        e = {"b": ("h", j, i), "r": ("v", j, i + 1), "t": ("h", j + 1, i), "l": ("v", j, i)}
        cut = []
        for name, (p, q) in (("b", ((j, i), (j, i + 1))), ("r", ((j, i + 1), (j + 1, i + 1))),
                             ("t", ((j + 1, i), (j + 1, i + 1))), ("l", ((j, i), (j + 1, i)))):
            if pos[p] != pos[q]:
                cut.append(name)
        if len(cut) == 2:
            pairs = [tuple(cut)]
        else:  # saddle: four crossings
            centre = 0.25 * (F[j, i] + F[j, i + 1] + F[j + 1, i] + F[j + 1, i + 1]) >= 0
            # join the crossings around the corners whose sign differs from the centre
            if pos[j, i] == centre:
                pairs = [("b", "r"), ("t", "l")]
            else:
                pairs = [("b", "l"), ("r", "t")]
        for a, b in pairs:
            edge_point(e[a])
            edge_point(e[b])
            segs.append((e[a], e[b]))
    return segs, pts


def _chain(segs):
    """Link segments sharing edge keys into polylines of keys."""
    adj = {}
    for a, b in segs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = set()
    chains = []
    for start in [k for k, nb in adj.items() if len(nb) == 1] + list(adj):
        if start in seen:
            continue
        path = [start]
        seen.add(start)
        prev, cur = None, start
        closed = False
        while True:
            nxt = [n for n in adj[cur] if n != prev]
            if not nxt:
                break
            n = nxt[0]
            if n == start:
                closed = True
                break
            if n in seen:
                break
            path.append(n)
            seen.add(n)
            prev, cur = cur, n
        chains.append((path, closed))
    return chains


def _zero_polylines(v: ScalarField, level: float = 0.0):
    g = v.grid
    rs, cs = _active_box(v)
    V = v.values[rs, cs]
    ok = v.mask[rs, cs] != EXCLUDED
    s, t = g.s[cs], g.t[rs]
    segs, pts = _contour_segments(V, ok, s, t, level)
    lines = []
    for path, closed in _chain(segs):
        P = np.array([pts[k] for k in path])
        if g.shear:
            P[:, 0] = P[:, 0] + g.shear * (P[:, 1] - g.spec.y_min)
        lines.append((P, closed))
    return lines, (s[0], s[-1], t[0], t[-1])


def extract_zero_arcs(v: ScalarField, critical_points=(), attach: float = 2.0) -> ArcSet:
    """Zero-set arcs of ``v``, cut open within ``attach * h`` of critical points."""
    g = v.grid
    lines, box = _zero_polylines(v)
    cps = list(critical_points)
    r = attach * g.h
    arcs = []
    for P, closed in lines:
        near = np.zeros(len(P), dtype=int) - 1
        for k, cp in enumerate(cps):
            d = np.hypot(P[:, 0] - cp.location[0], P[:, 1] - cp.location[1])
            near[(d <= r) & (near < 0)] = k
        if np.all(near < 0):
            arcs.append(Arc(P, closed=closed))
            continue
        if closed:
            # rotate so the polyline starts inside a critical disk
            k0 = int(np.argmax(near >= 0))
            P = np.roll(P, -k0, axis=0)
            near = np.roll(near, -k0)
            P = np.vstack([P, P[:1]])
            near = np.append(near, near[0])
        pieces, cur, start_cp = [], [], None
        for p, k in zip(P, near):
            if k >= 0:
                if cur:
                    pieces.append((np.array(cur), start_cp, int(k)))
                    cur = []
                start_cp = int(k)
            else:
                cur.append(p)
        if cur:
            pieces.append((np.array(cur), start_cp, None))
        for Q, a, b in pieces:
            arcs.append(Arc(Q, closed=False, ends=[a, b]))
    return ArcSet(arcs, cps, box, g.h)


def classify_arcs(arcset: ArcSet, spec: DifferenceSpec | None = None,
                  candidates: dict | None = None) -> ArcSet:
    """Assign the types (i)-(iv) by where each free arc end sits."""
    x0, x1, y0, y1 = arcset.domain_box
    h = arcset.h
    cand = dict(candidates or {})
    if spec is not None:
        cand.update(spec.candidates)
    for arc in arcset.arcs:
        if arc.closed:
            arc.type = "closed_loop"
            continue
        labels = []
        for e, idx in ((0, 0), (1, -1)):
            if arc.ends[e] is not None:
                arc.exits[e] = "critical"
                continue
            x, y = arc.points[idx]
            lab = "indeterminate"
            for name, (cx, cy) in cand.items():
                if math.hypot(x - cx, y - cy) <= 3 * h:
                    lab = name
            if lab == "indeterminate":
                if abs(x - x1) <= 1.5 * h:
                    lab = "type_i_plus_x"
                elif abs(x - x0) <= 1.5 * h:
                    lab = "type_ii_minus_x"
            arc.exits[e] = lab
            labels.append(lab)
        labels = set(labels)
        arc.type = labels.pop() if len(labels) == 1 else "indeterminate"
    return arcset


@dataclass
class ArcCountReport:
    per_point: list
    closed_loops: int
    verdict: str

    def to_dict(self) -> dict:
        return {"per_point": self.per_point, "closed_loops": self.closed_loops,
                "verdict": self.verdict}


def arc_count_report(arcset: ArcSet, value_tol: float | None = None) -> ArcCountReport:
    """Per critical point: incident arc-ends, evenness and the per-type counts.

    Critical points off the zero set (``|v| > value_tol``) carry no arcs and
    are reported without a verdict.
    """
    inc = arcset.incidence()
    per, bad = [], False
    for k, cp in enumerate(arcset.critical_points):
        ends = inc[k]
        counts = {t: 0 for t in ARC_TYPES}
        for a_id, _ in ends:
            counts[arcset.arcs[a_id].type] += 1
        on_zero = len(ends) > 0 or (value_tol is not None and abs(cp.value) <= value_tol)
        even = len(ends) % 2 == 0
        many = any(counts[t] > 1 for t in ARC_END_TYPES)
        viol = on_zero and (not even or len(ends) < 4 or many)
        bad |= viol
        per.append({"point": cp.to_dict(), "ends": len(ends), "even": even,
                    "isolated": cp.isolation > 4 * arcset.h,
                    "counts": counts, "on_zero_set": on_zero, "violation": viol})
    loops = sum(a.closed for a in arcset.arcs)
    verdict = "VIOLATION" if bad or loops else "CONSISTENT_WITH_UNIQUENESS"
    return ArcCountReport(per, int(loops), verdict)


def analyse_difference(spec: DifferenceSpec) -> dict:
    """Difference field, critical points, classified arcs and the verdict."""
    v = difference_field(spec)
    cps = find_critical_points(v)
    arcs = classify_arcs(extract_zero_arcs(v, cps), spec)
    rep = arc_count_report(arcs)
    return {"field": v, "critical_points": cps, "arcs": arcs, "report": rep}


# ---------------------------------------------------------------------------
# level regions


@dataclass
class LevelTrace:
    lambdas: list
    areas: list
    nested: bool
    first_fit: float | None
    regions: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas, "areas": self.areas, "nested": self.nested,
                "first_fit": self.first_fit}


def _region_from_arcs(v: ScalarField, arcs):
    """Component of constant sign between two arcs exiting the same x-edge."""
    g = v.grid
    a, b = arcs
    ea = a.points[-1] if a.exits[-1] in ("type_i_plus_x", "type_ii_minus_x") else a.points[0]
    eb = b.points[-1] if b.exits[-1] in ("type_i_plus_x", "type_ii_minus_x") else b.points[0]
    x = 0.5 * (ea[0] + eb[0])
    y = 0.5 * (ea[1] + eb[1])
    i = int(np.argmin(np.abs(g.s - x)))
    j = int(np.argmin(np.abs(g.t - y)))
    i = min(max(i, 1), g.nx - 2)
    sign = 1.0 if v.values[j, i] >= 0 else -1.0
    ok = v.mask != EXCLUDED
    lab, _ = ndimage.label((sign * v.values > 0) & ok)
    if lab[j, i] == 0:
        raise NoRegion("arc pair does not bound a region of constant sign")
    return lab == lab[j, i], sign


def level_region_trace(v: ScalarField, bounding=None, window: np.ndarray | None = None,
                       count: int = 16, critical_values=()) -> LevelTrace:
    """Regions ``S_lambda = {sign * v > lambda}`` inside ``S_0`` for a lambda ladder.

    ``bounding`` is a pair of arcs or a boolean mask of ``S_0``.  The ladder has
    ``count`` geometrically spaced values in ``(0, sup_{S_0} |v|)``, each
    nudged off the sampled critical values.  ``window`` is a node mask; the
    first lambda whose region lies inside it is reported.
    """
    if bounding is None:
        raise NoRegion("no bounding arc pair or region supplied")
    if isinstance(bounding, np.ndarray):
        S0 = bounding.astype(bool)
        sign = 1.0 if np.sum(v.values[S0]) >= 0 else -1.0
    else:
        S0, sign = _region_from_arcs(v, bounding)
    vals = sign * v.values
    L2 = float(np.max(vals[S0])) if S0.any() else 0.0
    if L2 <= 0:
        raise NoRegion("region is empty")
    lams = np.geomspace(L2 * 1e-3, L2 * (1 - 1e-3), count)
    crit = np.asarray(list(critical_values), float)
    for k, lam in enumerate(lams):
        while crit.size and np.min(np.abs(crit - lam)) < 1e-6:
            lam *= 1 + 1e-5
        lams[k] = lam
    regions, areas = [S0], [int(S0.sum())]
    first = None
    if window is not None and np.all(window[S0]):
        first = 0.0
    for lam in lams:
        R = S0 & (vals > lam)
        regions.append(R)
        areas.append(int(R.sum()))
        if first is None and window is not None and R.any() and np.all(window[R]):
            first = float(lam)
    nested = all(np.all(b <= a) for a, b in zip(regions, regions[1:]))
    return LevelTrace([0.0] + [float(x) for x in lams], areas, bool(nested), first, regions)


# ---------------------------------------------------------------------------
# tangency search


@dataclass
class Tangency:
    theta0: float
    mode: str
    contacts: np.ndarray
    interior_contacts: int
    raster_cells: int
    decays: bool

    def to_dict(self) -> dict:
        return {"theta0": self.theta0, "mode": self.mode, "contacts": len(self.contacts),
                "interior_contacts": self.interior_contacts,
                "raster_cells": self.raster_cells, "decays": self.decays}


def tangency_search(mesh1, mesh2, p_a, raster: int = 64, mode: str = "sup",
                    contact_tol: float = 1e-6) -> Tangency:
    """Extremum of ``theta_2 - theta_1`` over the common chart image W."""
    from .geometry import cylindrical_chart

    c1 = cylindrical_chart(mesh1, p_a)
    c2 = cylindrical_chart(mesh2, p_a)
    if not (c1.theta_graphical and c2.theta_graphical):
        raise NotThetaGraph("both meshes must be theta-graphs about the axis")
    r0 = max(c1.rho.min(), c2.rho.min())
    r1 = min(c1.rho.max(), c2.rho.max())
    z0 = max(c1.z.min(), c2.z.min())
    z1 = min(c1.z.max(), c2.z.max())
    R, Z = np.meshgrid(np.linspace(r0, r1, raster), np.linspace(z0, z1, raster))
    inside = c1.contains(R, Z) & c2.contains(R, Z)
    if not inside.any():
        raise NotThetaGraph("chart images do not overlap")
    d = c2.interpolator()(R, Z) - c1.interpolator()(R, Z)
    inside &= np.isfinite(d)
    vals = d[inside]
    ext = float(vals.max() if mode == "sup" else vals.min())
    hit = inside & (np.abs(d - ext) <= contact_tol)
    # raster boundary of W: inside cells with an outside 4-neighbour
    pad = np.pad(inside, 1, constant_values=False)
    interior = inside & pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    n_int = int((hit & interior).sum())
    contacts = np.stack([R[hit], Z[hit]], axis=1)
    rim = inside & ~interior
    decays = bool(np.max(np.abs(d[rim])) <= 0.1 * max(abs(ext), 1e-300)) if rim.any() else False
    out = Tangency(ext, mode, contacts, n_int, int(inside.sum()), decays)
    if n_int == 0:
        raise BoundaryContact("extremum attained only on the boundary of W",
                              theta0=ext, contacts=contacts)
    return out


# ---------------------------------------------------------------------------
# analytic fixtures


def fixture(name: str, h: float = 0.02, half_width: float = 1.0) -> ScalarField:
    """Analytic test fields on a square ``[-half_width, half_width]^2`` (or a strip)."""
    if name == "half_strip":
        d = DomainSpec("half_strip", 2.0, 0.0, 6.0, h)
    else:
        a = half_width
        d = DomainSpec("strip", 2 * a, -a, a, h, y_min=-a)
    from .grid import build_grid

    g = build_grid(d)
    X, Y = g.X, g.Y
    f = {
        "saddle": lambda: X * X - Y * Y,
        "monkey": lambda: X**3 - 3 * X * Y * Y,
        "line": lambda: Y,
        "bowl": lambda: X * X + Y * Y - 1,
        "half_strip": lambda: Y * (2 - Y) * np.exp(-X),
    }
    if name not in f:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(f)}")
    return ScalarField(g, f[name]())


FIXTURES = ("saddle", "monkey", "line", "bowl", "half_strip")
