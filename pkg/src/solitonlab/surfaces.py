"""Named translators: boundary data, constructors, reflections and probes.

Fundamental pieces are graphs over strips (or parallelograms) with
infinite boundary data; they are solved with :func:`solitonlab.pde.solve_bvp`
and glued into complete surfaces by 180 degree rotations about vertical lines.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (CalibrationFailed, InvalidDomain, InvalidWidth, NonConvergence,
                     RefuseUnconverged, TruncationTooTight)
from .grid import (EXCLUDED, INTERIOR, MINUS_INF, PERIODIC, PLUS_INF, BoundarySpec,
                   CapTrace, DomainSpec, Neumann, ScalarField, Segment, build_grid,
                   derivatives)
from .pde import SolverConfig, SolveReport, core_mask, flux_residual_padded, solve_bvp, transfer

log = logging.getLogger(__name__)

KINDS = ("grim_reaper", "tilted_grim_reaper", "pitchfork", "helicoid", "scherk",
         "scherkenoid", "trident")


@dataclass(frozen=True)
class SurfaceKind:
    """One of the named surfaces together with its parameters."""

    name: str
    w: float | None = None
    x_hat: float | None = None
    alpha: float | None = None
    L: float | None = None
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        n = self.name.replace("-", "_")
        object.__setattr__(self, "name", n)
        if n not in KINDS:
            raise ValueError(f"unknown surface {self.name!r}")
        if n in ("grim_reaper", "tilted_grim_reaper", "pitchfork", "scherkenoid"):
            if self.w is None or self.w < math.pi * (1 - 1e-8):
                raise InvalidWidth(f"{n} needs w >= pi, got {self.w}")
        if n == "helicoid":
            if self.w is None or not 0 < self.w < math.pi:
                raise InvalidWidth(f"helicoid needs 0 < w < pi, got {self.w}")
            if self.x_hat is not None and self.x_hat <= 0:
                raise InvalidDomain("helicoid needs x_hat > 0")
        if n in ("scherk", "scherkenoid"):
            if self.alpha is None or not 0 < self.alpha < math.pi:
                raise InvalidDomain(f"{n} needs 0 < alpha < pi")
        if n == "scherk" and (self.w is None or self.L is None or self.w <= 0 or self.L <= 0):
            raise InvalidDomain("scherk needs w > 0 and L > 0")
        if n == "trident" and not (self.a and self.b and self.a > 0 and self.b > 0):
            raise InvalidDomain("trident needs a > 0 and b > 0")

    @property
    def height(self) -> float:
        return self.b if self.name == "trident" else self.w

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("name", "w", "x_hat", "alpha", "L", "a", "b")
                if getattr(self, k) is not None}


# ---------------------------------------------------------------------------
# grim reapers


def tilt(w: float) -> float:
    return math.sqrt(max((w / math.pi) ** 2 - 1.0, 0.0))


def grim_reaper(x, y, w: float):
    """Tilted grim reaper ``g_w``; for ``w = pi`` this is ``ln sin y``."""
    if w < math.pi * (1 - 1e-8):
        raise InvalidWidth(f"grim reaper needs w >= pi, got {w}")
    k = w / math.pi
    return np.asarray(x) * tilt(w) + k * k * np.log(np.sin(np.asarray(y) / k))


def grim_reaper_field(w: float, window: DomainSpec) -> ScalarField:
    """Exact ``g_w`` on the nodes of ``window`` (which must stay >= h off y = 0, w)."""
    if w < math.pi * (1 - 1e-8):
        raise InvalidWidth(f"grim reaper needs w >= pi, got {w}")
    if window.y_min < window.h * (1 - 1e-9) or window.y_max > w - window.h * (1 - 1e-9):
        raise InvalidDomain("window must avoid y = 0 and y = w by at least h")
    g = build_grid(window)
    return ScalarField(g, grim_reaper(g.X, g.Y, w))


def _clipped_reaper(w):
    def fn(x, y, B):
        yy = np.clip(y, 1e-300, w * (1 - 1e-16))
        return np.maximum(grim_reaper(x, yy, w), -B)
    return CapTrace(fn)


def _wall(height, sign):
    """Linear trace from +-B at the bottom to -+B at the top: a steep plane."""
    return CapTrace(lambda x, y, B: sign * B * (1 - 2 * y / height))


# ---------------------------------------------------------------------------
# boundary data


def default_window(kind: SurfaceKind, margin: float | None = None) -> tuple[float, float]:
    """A truncation window suited to ``kind`` (x_min, x_max)."""
    n = kind.name
    if n == "trident":
        return -kind.a, kind.a
    if n == "scherk":
        return 0.0, kind.L
    m = margin if margin is not None else max(12.0, 2 * kind.height)
    if n == "helicoid":
        return -m, (kind.x_hat or 0.0) + m
    if n == "scherkenoid":
        return 0.0, m
    if n in ("grim_reaper", "tilted_grim_reaper"):
        return -m / 2, m / 2
    return -m, m


def make_domain(kind: SurfaceKind, h: float, x_min=None, x_max=None) -> DomainSpec:
    if x_min is None or x_max is None:
        a, b = default_window(kind)
        x_min = a if x_min is None else x_min
        x_max = b if x_max is None else x_max
    if kind.name == "scherk":
        return DomainSpec.parallelogram(kind.alpha, kind.w, kind.L, h)
    if kind.name == "scherkenoid":
        return DomainSpec("parallelogram", kind.w, x_min, x_max, h, alpha=kind.alpha,
                          L=x_max - x_min)
    return DomainSpec("strip", kind.height, x_min, x_max, h)


def make_boundary_spec(kind: SurfaceKind, domain: DomainSpec) -> BoundarySpec:
    """Boundary prescription of ``kind`` on a truncated ``domain``."""
    n, d = kind.name, domain
    w = d.w
    x0, x1 = d.x_min, d.x_max
    full = (d.y_min, d.y_max)

    def need(points):
        for p in points:
            if p - x0 < w - 1e-12 or x1 - p < w - 1e-12:
                raise TruncationTooTight(
                    f"sign change at x={p} needs a margin of w={w:.4g} inside [{x0}, {x1}]")

    if n in ("grim_reaper", "tilted_grim_reaper"):
        gr = _clipped_reaper(kind.w)
        return BoundarySpec(d, [Segment(x0, x1, MINUS_INF)], [Segment(x0, x1, MINUS_INF)],
                            [Segment(*full, gr)], [Segment(*full, gr)])
    if n == "pitchfork":
        need([0.0])
        return BoundarySpec(
            d, [Segment(x0, 0.0, PLUS_INF), Segment(0.0, x1, MINUS_INF)],
            [Segment(x0, x1, MINUS_INF)],
            [Segment(*full, _wall(w, +1))], [Segment(*full, Neumann(tilt(kind.w)))])
    if n == "helicoid":
        xh = kind.x_hat
        if xh is None:
            raise InvalidDomain("helicoid boundary data needs x_hat")
        need([0.0, xh])
        return BoundarySpec(
            d, [Segment(x0, 0.0, PLUS_INF), Segment(0.0, x1, MINUS_INF)],
            [Segment(x0, xh, MINUS_INF), Segment(xh, x1, PLUS_INF)],
            [Segment(*full, _wall(w, +1))], [Segment(*full, _wall(w, -1))])
    if n == "trident":
        a = kind.a
        if not (math.isclose(x0, -a) and math.isclose(x1, a)):
            raise TruncationTooTight("trident window must be one period [-a, a]")
        return BoundarySpec(
            d, [Segment(-a, 0.0, MINUS_INF), Segment(0.0, a, PLUS_INF)],
            [Segment(-a, a, MINUS_INF)], [Segment(*full, PERIODIC)], [Segment(*full, PERIODIC)])
    if n == "scherk":
        return BoundarySpec(d, [Segment(x0, x1, MINUS_INF)], [Segment(x0, x1, MINUS_INF)],
                            [Segment(*full, PLUS_INF)], [Segment(*full, PLUS_INF)])
    if n == "scherkenoid":
        if x1 - x0 < 2 * w:
            raise TruncationTooTight("scherkenoid window shorter than 2w")
        return BoundarySpec(d, [Segment(x0, x1, MINUS_INF)], [Segment(x0, x1, MINUS_INF)],
                            [Segment(*full, PLUS_INF)], [Segment(*full, Neumann(tilt(kind.w)))])
    raise ValueError(n)


# ---------------------------------------------------------------------------
# construction


@dataclass
class Piece:
    """A solved fundamental piece."""

    kind: SurfaceKind
    field: ScalarField
    report: SolveReport
    calibration: "Calibration | None" = None


def construct_piece(kind: SurfaceKind, h: float, config: SolverConfig | None = None,
                    x_min=None, x_max=None, init: ScalarField | None = None,
                    strict: bool = False) -> Piece:
    """Boundary data plus solve.  A helicoid without ``x_hat`` is calibrated first.

    With ``strict=False`` a failed solve still yields a piece whose report
    says ``converged=False``.
    """
    config = config or SolverConfig()
    calib = None
    if kind.name == "helicoid" and kind.x_hat is None:
        calib = helicoid_axis_calibrate(kind.w, h=h, config=config)
        kind = SurfaceKind("helicoid", w=kind.w, x_hat=calib.x_hat)
    domain = make_domain(kind, h, x_min, x_max)
    bc = make_boundary_spec(kind, domain)
    if calib is not None and calib.field.domain == domain:
        return Piece(kind, calib.field, calib.report, calib)
    try:
        u, rep = solve_bvp(domain, bc, config, init, strict=strict)
    except NonConvergence:
        raise
    return Piece(kind, u, rep, calib)


# ---------------------------------------------------------------------------
# helicoid axis


def point_reflect(values: np.ndarray) -> np.ndarray:
    """``u o sigma`` on a window symmetric under ``(x, y) -> (x_hat - x, w - y)``."""
    return values[::-1, ::-1]


def symmetry_residual(u: ScalarField) -> float:
    core = core_mask(u.grid)
    return float(np.max(np.abs(u.values - point_reflect(u.values))[core]))


def area_weight(u: ScalarField) -> float:
    """``integral of 1/W`` over the interior nodes."""
    g = u.grid
    ux, uy, *_ = derivatives(u.values, g)
    ok = u.mask[1:-1, 1:-1] != EXCLUDED
    return float(np.sum((1 / np.sqrt(1 + ux * ux + uy * uy))[ok]) * g.hx * g.hy)


@dataclass
class Calibration:
    x_hat: float
    flux_defect: float
    symmetry_residual: float
    evaluations: list = field(default_factory=list)
    field: ScalarField | None = None
    report: SolveReport | None = None

    def to_dict(self) -> dict:
        return {"x_hat": self.x_hat, "flux_defect": self.flux_defect,
                "symmetry_residual": self.symmetry_residual,
                "evaluations": [list(e) for e in self.evaluations]}


def helicoid_axis_calibrate(w: float, h: float | None = None, config: SolverConfig | None = None,
                            margin: float | None = None, xtol: float = 1e-4) -> Calibration:
    """Find the axis offset ``x_hat`` of the helicoid of width ``w``.

    Integrating the divergence form over the strip, the boundary fluxes are
    +-1 on the infinite edges and vanish on the far ends, leaving
    ``x_hat = (1/2) * integral of dA / W``.  Brent's method finds the root of
    that flux defect on ``[w/4, 3 w]``; the point symmetry ``u o sigma = u``
    is checked on the result.
    """
    if not 0 < w < math.pi:
        raise InvalidWidth(f"helicoid needs 0 < w < pi, got {w}")
    h = h or w / 64
    config = config or SolverConfig()
    margin = margin if margin is not None else max(4.0, 2 * w)
    cache = {}

    def evaluate(xh):
        key = round(xh, 12)
        if key not in cache:
            kind = SurfaceKind("helicoid", w=w, x_hat=xh)
            d = make_domain(kind, h, -margin, xh + margin)
            u, rep = solve_bvp(d, make_boundary_spec(kind, d), config)
            cache[key] = (0.5 * area_weight(u) - xh, u, rep)
            log.info("x_hat=%.6f flux defect %.3e", xh, cache[key][0])
        return cache[key]

    lo, hi = 0.25 * w, 3 * w
    f_lo, f_hi = evaluate(lo)[0], evaluate(hi)[0]
    while f_lo < 0 and lo > 2 * h:
        # narrow helicoids put the axis close to x = 0
        hi, f_hi = lo, f_lo
        lo /= 2
        f_lo = evaluate(lo)[0]
    if f_lo * f_hi > 0:
        xh = lo if abs(f_lo) < abs(f_hi) else hi
    else:
        xh = float(brentq(lambda x: evaluate(x)[0], lo, hi, xtol=xtol))
    defect, u, rep = evaluate(xh)
    sym = symmetry_residual(u)
    evals = sorted((k, v[0]) for k, v in cache.items())
    out = Calibration(xh, defect, sym, evals, u, rep)
    if sym > 10 * h * h or abs(defect) > 10 * h * h:
        raise CalibrationFailed(f"calibration floor too high (symmetry {sym:.2e}, "
                                f"flux defect {defect:.2e})", best=out, residual=sym)
    return out


# ---------------------------------------------------------------------------
# meshes and reflection


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    crease_lines: list = field(default_factory=list)

    def transformed(self, fn) -> "SurfaceMesh":
        return SurfaceMesh(fn(self.vertices), self.triangles.copy(),
                           [fn(np.asarray(c)) for c in self.crease_lines])

    def to_obj(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# solitonlab mesh\n")
            for v in self.vertices:
                fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
            for t in self.triangles:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
            base = len(self.vertices)
            for line in self.crease_lines:
                for v in line:
                    fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
                idx = " ".join(str(base + k + 1) for k in range(len(line)))
                fh.write(f"l {idx}\n")
                base += len(line)


def merge_meshes(meshes) -> SurfaceMesh:
    verts, tris, lines, off = [], [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        lines.extend(m.crease_lines)
        off += len(m.vertices)
    return SurfaceMesh(np.concatenate(verts), np.concatenate(tris), lines)


def graph_mesh(u: ScalarField, z_clip: float | None = None) -> SurfaceMesh:
    """Triangulate the graph of ``u``, dropping nodes with ``|u| > z_clip``."""
    g = u.grid
    keep = u.mask != EXCLUDED
    if z_clip is not None:
        keep &= np.abs(u.values) <= z_clip
    idx = -np.ones(g.shape, dtype=np.int64)
    idx[keep] = np.arange(int(keep.sum()))
    verts = np.stack([g.X[keep], g.Y[keep], u.values[keep]], axis=1)
    a, b = idx[:-1, :-1], idx[:-1, 1:]
    c, d = idx[1:, :-1], idx[1:, 1:]
    t1 = np.stack([a, b, d], axis=-1).reshape(-1, 3)
    t2 = np.stack([a, d, c], axis=-1).reshape(-1, 3)
    tris = np.concatenate([t1, t2])
    tris = tris[np.all(tris >= 0, axis=1)]
    return SurfaceMesh(verts, tris)


def rotate_vertical(points, cx: float, cy: float) -> np.ndarray:
    """180 degree rotation about the vertical line through ``(cx, cy)``."""
    p = np.array(points, dtype=float)
    p[..., 0] = 2 * cx - p[..., 0]
    p[..., 1] = 2 * cy - p[..., 1]
    return p


def _crease(cx, cy, z_clip, n=33):
    z = np.linspace(-z_clip, z_clip, n)
    return np.stack([np.full(n, cx), np.full(n, cy), z], axis=1)


def schwarz_reflect(piece: Piece, copies: int = 1, z_clip: float | None = None) -> SurfaceMesh:
    """Assemble a complete surface from a fundamental piece by reflections."""
    if not piece.report.converged:
        raise RefuseUnconverged("refusing to reflect an unconverged piece")
    if copies < 1:
        raise ValueError("copies must be >= 1")
    kind = piece.kind
    B = piece.report.caps[-1] if piece.report.caps else 12.0
    z_clip = 0.75 * B if z_clip is None else z_clip
    base = graph_mesh(piece.field, z_clip)
    n = kind.name
    if n == "pitchfork":
        m = merge_meshes([base, base.transformed(lambda p: rotate_vertical(p, 0, 0))])
        m.crease_lines = [_crease(0, 0, z_clip)]
        return m
    if n == "helicoid":
        xh, w = kind.x_hat, kind.w
        shift = np.array([2 * xh, 2 * w, 0.0])
        odd = base.transformed(lambda p: rotate_vertical(p, xh, w))
        parts, lines = [], []
        for k in range(-copies, copies + 1):
            parts.append(base.transformed(lambda p, k=k: p + k * shift))
            parts.append(odd.transformed(lambda p, k=k: p + k * shift))
        for k in range(-2 * copies, 2 * copies + 2):
            lines.append(_crease(k * xh, k * w, z_clip))
        m = merge_meshes(parts)
        m.crease_lines = lines
        return m
    if n == "trident":
        a = kind.a
        period = np.array([2 * a, 0.0, 0.0])
        parts = []
        for k in range(copies):
            moved = base.transformed(lambda p, k=k: p + k * period)
            parts.append(moved)
            parts.append(moved.transformed(lambda p: rotate_vertical(p, k * 2 * a, 0)))
        m = merge_meshes(parts)
        m.crease_lines = [_crease(j * a, 0, z_clip) for j in range(-1, 2 * copies)]
        return m
    return base


# ---------------------------------------------------------------------------
# uniqueness probes


def quotient_distance(u1: np.ndarray, u2: np.ndarray, mask: np.ndarray | None = None):
    """``min_c sup |u1 - u2 - c|`` and the minimizing ``c``.

    The sup-norm minimiser is the midrange of the difference, so no search is
    needed.
    """
    d = np.asarray(u1, float) - np.asarray(u2, float)
    if mask is not None:
        d = d[mask]
    lo, hi = float(np.min(d)), float(np.max(d))
    return 0.5 * (hi - lo), 0.5 * (hi + lo)


def harmonic_lift(kind: SurfaceKind, h: float, B: float, x_min=None, x_max=None) -> ScalarField:
    """Solve Laplace's equation with the ``B``-capped data of ``kind``."""
    import scipy.sparse as sp
    from scipy.sparse.linalg import spsolve

    from .grid import cap_boundary

    d = make_domain(kind, h, x_min, x_max)
    g = build_grid(d)
    spec = make_boundary_spec(kind, d)
    trace = cap_boundary(spec, B, g)
    ny, nx = g.shape
    vals = trace.values.copy()
    # Neumann / periodic x-edges: treat as free and use a one-sided copy
    free = g.mask == INTERIOR
    if trace.neumann or trace.periodic:
        free[1:-1, 0] = free[1:-1, -1] = True
    ids = -np.ones(g.shape, dtype=np.int64)
    ids[free] = np.arange(int(free.sum()))
    rows, cols, data = [], [], []
    rhs = np.zeros(int(free.sum()))
    jj, ii = np.nonzero(free)
    for j, i, k in zip(jj, ii, ids[free]):
        rows.append(k); cols.append(k); data.append(-4.0)
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j2, i2 = j + dj, i + di
            if i2 < 0 or i2 >= nx:
                i2 = (i2 % (nx - 1)) if trace.periodic else i - di
            if free[j2, i2]:
                rows.append(k); cols.append(ids[j2, i2]); data.append(1.0)
            else:
                rhs[k] -= vals[j2, i2]
    A = sp.csr_matrix((data, (rows, cols)), shape=(len(rhs), len(rhs)))
    vals[free] = spsolve(A.tocsc(), rhs)
    return ScalarField(g, vals)


@dataclass
class ProbeReport:
    runs: list
    distances: list  # (run_a, run_b, d, c)
    failures: list

    def to_dict(self) -> dict:
        return {"runs": self.runs, "distances": [list(x) for x in self.distances],
                "failures": self.failures}


def uniqueness_probe(kind: SurfaceKind, seeds=("zero", "harmonic"), discretizations=None,
                     config: SolverConfig | None = None) -> ProbeReport:
    """Solve ``kind`` once per (seed, discretization) and compare modulo constants.

    ``discretizations`` is a list of ``(h, B_max)``; every pair of runs is
    compared on the core window of the finer grid.
    """
    config = config or SolverConfig()
    discretizations = list(discretizations or [(kind.height / 32, config.cap_schedule[-1])])
    plan = [(s, h, B) for h, B in discretizations for s in seeds]
    if len(plan) < 2:
        raise ValueError("a uniqueness probe needs at least two runs")
    fields, runs, failures = [], [], []
    for seed, h, B in plan:
        sched = tuple(b for b in config.cap_schedule if b < B) + (B,)
        cfg = SolverConfig(**{**config.to_dict(), "cap_schedule": sched})
        init = None
        if seed == "harmonic":
            init = harmonic_lift(kind, h, sched[0])
        elif isinstance(seed, ScalarField):
            init = seed
        label = {"seed": seed if isinstance(seed, str) else "custom", "h": h, "B": B}
        try:
            p = construct_piece(kind, h, cfg, init=init, strict=True)
            fields.append(p.field)
            label["converged"] = p.report.converged
            label["newton_iters"] = p.report.newton_iters
        except NonConvergence as exc:
            fields.append(None)
            failures.append({**label, "error": str(exc)})
        runs.append(label)
    dists = []
    for a in range(len(plan)):
        for b in range(a + 1, len(plan)):
            fa, fb = fields[a], fields[b]
            if fa is None or fb is None:
                continue
            fine, coarse = (fa, fb) if fa.grid.size >= fb.grid.size else (fb, fa)
            other = coarse if coarse.grid.shape == fine.grid.shape else transfer(coarse, fine.grid)
            d, c = quotient_distance(fine.values, other.values, core_mask(fine.grid))
            if fine is fb:
                c = -c
            dists.append((a, b, d, c))
    return ProbeReport(runs, dists, failures)


# ---------------------------------------------------------------------------
# rescaled helicoid limit


def discrete_mean_curvature(u: ScalarField) -> np.ndarray:
    """``div(Du/W)`` at interior nodes (the flux form without the source)."""
    g = u.grid
    U = np.zeros((g.ny, g.nx + 2))
    U[:, 1:-1] = u.values
    U[:, 0] = 2 * u.values[:, 0] - u.values[:, 1]
    U[:, -1] = 2 * u.values[:, -1] - u.values[:, -2]
    full = flux_residual_padded(U, g.hx, g.hy, g.shear)[:, 1:-1]
    ux, uy, *_ = derivatives(u.values, g)
    return full - 1 / np.sqrt(1 + ux * ux + uy * uy)


def rescale(u: ScalarField, factor: float) -> ScalarField:
    """Graph of ``u`` scaled by ``factor`` in all three directions."""
    d = u.domain
    spec = DomainSpec(d.kind, d.w * factor, d.x_min * factor, d.x_max * factor,
                      d.h * factor, alpha=d.alpha,
                      L=d.L * factor if d.L is not None else None, y_min=d.y_min * factor)
    from .grid import _subgrid

    g = _subgrid(spec, u.grid.hx * factor, u.grid.hy * factor)
    return ScalarField(g, u.values * factor, u.mask)


@dataclass
class LimitReport:
    widths: list
    x_hats: list
    sup_H: list
    decreasing: bool

    def to_dict(self) -> dict:
        return {"widths": self.widths, "x_hats": self.x_hats, "sup_H": self.sup_H,
                "decreasing": self.decreasing}


def rescaled_helicoid_limit_check(widths, n_per_width: int = 32,
                                  config: SolverConfig | None = None) -> LimitReport:
    """sup |H| of helicoids rescaled by ``1/w`` on their core windows.

    The rescaled surfaces have mean curvature ``-w / W``; the sequence of
    maxima should decrease toward the minimal-surface limit.  Caps are scaled
    with ``w`` so that every rescaled problem sees the same cap schedule.
    """
    widths = [float(w) for w in widths]
    if any(not 0 < w < math.pi for w in widths):
        raise InvalidWidth("all widths must lie in (0, pi)")
    config = config or SolverConfig()
    sups, xhs = [], []
    for w in widths:
        # equal caps after rescaling by 1/w
        cfg = SolverConfig(**{**config.to_dict(),
                              "cap_schedule": tuple(B * w for B in config.cap_schedule)})
        cal = helicoid_axis_calibrate(w, h=w / n_per_width, config=cfg, margin=4 * w)
        u = rescale(cal.field, 1 / w)
        H = discrete_mean_curvature(u)
        core = core_mask(u.grid)[1:-1, 1:-1]
        sups.append(float(np.max(np.abs(H[core]))))
        xhs.append(cal.x_hat)
    dec = all(b < a for a, b in zip(sups, sups[1:]))
    return LimitReport(widths, xhs, sups, dec)
