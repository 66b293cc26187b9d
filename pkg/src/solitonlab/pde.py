"""Graphical translator equation: residuals, Jacobians and the Newton solver.

Two discretisations of the same operator live here.

* ``translator_residual`` / ``translator_jacobian`` evaluate the
  non-divergence form

      F(u) = (1 + u_y^2) u_xx - 2 u_x u_y u_xy + (1 + u_x^2) u_yy + 1 + |Du|^2

  pointwise with central differences.  This is what verification uses.

* ``flux_residual`` / ``flux_jacobian`` evaluate the equivalent divergence
  form ``div(Du / W) + 1 / W`` (``W = sqrt(1 + |Du|^2)``, so ``F = W^3 G``)
  with face-centred fluxes.  Face fluxes are bounded by 1 in magnitude, which
  keeps the discrete problem well behaved next to capped +-B boundary data,
  where the pointwise form loses monotonicity.  ``solve_bvp`` runs Newton on
  this form.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolverFailure, NonConvergence
from .grid import (BOUNDARY, EXCLUDED, INTERIOR, BoundarySpec, DomainSpec, Grid,
                   ScalarField, build_grid, cap_boundary, derivatives)

log = logging.getLogger(__name__)

# 3x3 stencil offsets (di, dj), in the order used for assembly
_OFFSETS = [(di, dj) for dj in (-1, 0, 1) for di in (-1, 0, 1)]


def _stencil_weights(grid: Grid) -> dict[str, dict[tuple[int, int], float]]:
    hx, hy, c = grid.hx, grid.hy, grid.shear
    us = {(1, 0): 1 / (2 * hx), (-1, 0): -1 / (2 * hx)}
    ut = {(0, 1): 1 / (2 * hy), (0, -1): -1 / (2 * hy)}
    uss = {(1, 0): 1 / hx**2, (-1, 0): 1 / hx**2, (0, 0): -2 / hx**2}
    utt = {(0, 1): 1 / hy**2, (0, -1): 1 / hy**2, (0, 0): -2 / hy**2}
    k = 1 / (4 * hx * hy)
    ust = {(1, 1): k, (-1, -1): k, (1, -1): -k, (-1, 1): -k}

    def lin(*terms):
        out: dict = {}
        for coef, st in terms:
            for o, v in st.items():
                out[o] = out.get(o, 0.0) + coef * v
        return out

    return {
        "ux": us,
        "uy": lin((1, ut), (-c, us)),
        "uxx": uss,
        "uxy": lin((1, ust), (-c, uss)),
        "uyy": lin((1, utt), (-2 * c, ust), (c * c, uss)),
    }


# ---------------------------------------------------------------------------
# pointwise form


def pointwise_residual(u: np.ndarray, grid: Grid) -> np.ndarray:
    ux, uy, uxx, uxy, uyy = derivatives(u, grid)
    return ((1 + uy**2) * uxx - 2 * ux * uy * uxy + (1 + ux**2) * uyy
            + 1 + ux**2 + uy**2)


def translator_residual(field: ScalarField) -> ScalarField:
    """Residual of the translator equation at interior nodes (0 elsewhere)."""
    g = field.grid
    r = np.zeros(g.shape)
    r[1:-1, 1:-1] = pointwise_residual(field.values, g)
    mask = np.where(field.mask == EXCLUDED, EXCLUDED, g.mask)
    # interior nodes touching an excluded node are not meaningful
    bad = _touches_excluded(field.mask)
    mask = np.where(bad & (mask == INTERIOR), EXCLUDED, mask)
    return ScalarField(g, np.where(mask == INTERIOR, r, 0.0), mask)


def _touches_excluded(mask):
    ex = mask == EXCLUDED
    if not ex.any():
        return np.zeros_like(ex)
    out = ex.copy()
    out[1:, :] |= ex[:-1, :]
    out[:-1, :] |= ex[1:, :]
    out[:, 1:] |= ex[:, :-1]
    out[:, :-1] |= ex[:, 1:]
    out[1:, 1:] |= ex[:-1, :-1]
    out[:-1, :-1] |= ex[1:, 1:]
    out[1:, :-1] |= ex[:-1, 1:]
    out[:-1, 1:] |= ex[1:, :-1]
    return out


def translator_jacobian(field: ScalarField) -> sp.csr_matrix:
    """Derivative of ``translator_residual`` with respect to all node values.

    Shape ``(n_interior, grid.size)``; row ``k`` is the ``k``-th interior node
    in row-major order, columns are row-major grid nodes.
    """
    g = field.grid
    ux, uy, uxx, uxy, uyy = derivatives(field.values, g)
    dF = {
        "ux": 2 * ux * uyy - 2 * uy * uxy + 2 * ux,
        "uy": 2 * uy * uxx - 2 * ux * uxy + 2 * uy,
        "uxx": 1 + uy**2,
        "uxy": -2 * ux * uy,
        "uyy": 1 + ux**2,
    }
    weights = _stencil_weights(g)
    ny, nx = g.shape
    jj, ii = np.mgrid[1:ny - 1, 1:nx - 1]
    rows = np.arange((ny - 2) * (nx - 2))
    R, C, V = [], [], []
    for di, dj in _OFFSETS:
        coef = sum(dF[k] * weights[k].get((di, dj), 0.0) for k in dF)
        if np.isscalar(coef):
            continue
        R.append(rows)
        C.append(((jj + dj) * nx + (ii + di)).ravel())
        V.append(coef.ravel())
    return sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                         shape=(len(rows), g.size))


# ---------------------------------------------------------------------------
# flux form on a column-padded array
#
# The working array ``U`` has shape (ny, nx + 2): columns 1..nx hold the grid,
# columns 0 and nx + 1 are ghosts for Neumann / periodic x-edges.


# log-profile closure next to infinite edges
#
# Near an edge carrying +-oo data the solution behaves like a * ln(d) + b in
# the distance d to the edge.  Capping the edge at +-B and differencing across
# it is inconsistent there (the error does not vanish with h and depends on
# B).  Instead the edge node is replaced by a ghost value extrapolated from the
# next two nodes, the face next to the edge uses the log-profile slope, and the
# node-centred gradient uses a three-point formula that is exact for ln(d).

LOG_GHOST = 2 / math.log(2) - 1  # ghost = U1 - LOG_GHOST * (U2 - U1)
# First-face slope factor.  Ordinary faces over a ln(d) profile carry a flux
# error of nearly the same size at every distance; the first face is given the
# same error (rather than none) so that the errors cancel in the divergence.
_R1 = 1.5 * math.log(2)
_R0 = 1 / math.sqrt(1 + 9 * (1 / _R1**2 - 1))
LOG_FACE = _R0 * 2 / (2 - math.log(2))


def corrected_slope(gp, gm):
    """Centre slope from forward/backward differences, plus its two partials.

    Equals ``(gp + gm) / 2`` up to O(h^2) for smooth data and is O(h^2)
    accurate for ``ln(d)`` profiles, where the plain average is only O(h/d).
    """
    S = gp + gm
    D = gp - gm
    den = S * S + 4
    val = 0.5 * S - (2 / 3) * D * D * S / den
    d_S = 0.5 - (2 / 3) * D * D * (4 - S * S) / (den * den)
    d_D = -(4 / 3) * D * S / den
    return val, d_S + d_D, d_S - d_D


@dataclass(eq=False)
class Closure:
    """Edge treatment for the padded working array of one grid."""

    X: sp.csr_matrix  # padded -> padded, ghost extrapolation at infinite edge nodes
    face_s: np.ndarray  # (ny-2, nx+1) slope factor on s-faces
    face_t: np.ndarray  # (ny-1, nx) slope factor on t-faces
    plain_s: np.ndarray  # (ny-2, nx) True where the s-slope stays a plain average
    plain_t: np.ndarray  # (ny-2, nx)
    sign_s: np.ndarray  # (ny-2, nx+1) forced sign of the first-face flux, 0 = free
    sign_t: np.ndarray  # (ny-1, nx)


def log_closure(grid: Grid, inf_sign: np.ndarray) -> Closure | None:
    """Closure for the nodes flagged in ``inf_sign``; None if there are none."""
    ny, nx = grid.shape
    npc = nx + 2
    if inf_sign is None or not np.any(inf_sign):
        return None
    inf = inf_sign != 0
    n = ny * npc
    k = LOG_GHOST

    def extrap(targets):
        rows, cols, vals = [], [], []
        keep = np.ones(n, bool)
        for p, p1, p2 in targets:
            keep[p] = False
            rows += [p, p]
            cols += [p1, p2]
            vals += [1 + k, -k]
        idx = np.nonzero(keep)[0]
        rows += list(idx)
        cols += list(idx)
        vals += [1.0] * len(idx)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    # x-edges first, then y-edges (corners and ghost columns follow their row)
    tx = []
    for j in range(1, ny - 1):
        if inf[j, 0] and nx > 3:
            tx.append((j * npc + 1, j * npc + 2, j * npc + 3))
        if inf[j, nx - 1] and nx > 3:
            tx.append((j * npc + nx, j * npc + nx - 1, j * npc + nx - 2))
    ty = []
    for p in range(npc):
        i = min(max(p - 1, 0), nx - 1)
        if inf[0, i] and ny > 3:
            ty.append((p, npc + p, 2 * npc + p))
        if inf[ny - 1, i] and ny > 3:
            ty.append(((ny - 1) * npc + p, (ny - 2) * npc + p, (ny - 3) * npc + p))
    X = (extrap(ty) @ extrap(tx)).tocsr()

    face_s = np.ones((ny - 2, nx + 1))
    face_s[:, 1] = np.where(inf[1:-1, 0], LOG_FACE, 1.0)
    face_s[:, nx - 1] = np.where(inf[1:-1, nx - 1], LOG_FACE, 1.0)
    face_t = np.ones((ny - 1, nx))
    face_t[0] = np.where(inf[0], LOG_FACE, 1.0)
    face_t[-1] = np.where(inf[-1], LOG_FACE, 1.0)
    plain_s = np.zeros((ny - 2, nx), bool)
    plain_s[:, 1] |= inf[1:-1, 0]
    plain_s[:, nx - 2] |= inf[1:-1, nx - 1]
    plain_s[:, 0] = plain_s[:, nx - 1] = True
    plain_t = np.zeros((ny - 2, nx), bool)
    plain_t[0] |= inf[0]
    plain_t[-1] |= inf[-1]
    # u -> +oo at an edge means the flux points into it
    sign_s = np.zeros_like(face_s)
    sign_s[:, 1] = -inf_sign[1:-1, 0]
    sign_s[:, nx - 1] = inf_sign[1:-1, nx - 1]
    sign_t = np.zeros_like(face_t)
    sign_t[0] = -inf_sign[0]
    sign_t[-1] = inf_sign[-1]
    return Closure(X, face_s, face_t, plain_s, plain_t, sign_s, sign_t)


EDGE_FLUX_FLOOR = 0.9


def _edge_flux(V, dV_a, dV_b, sign):
    """Flux through an infinite edge: the edge's sign, magnitude at least the floor.

    At a solution the magnitude is ``1 - O(h^2)``, so the floor only acts on
    Newton iterates that have not yet formed the singular profile.
    """
    on = sign != 0
    mag = np.abs(V)
    k = np.where(on, sign * np.sign(V), 1.0)
    low = on & (mag < EDGE_FLUX_FLOOR)
    V = np.where(low, sign * EDGE_FLUX_FLOOR, k * V)
    return V, np.where(low, 0.0, k * dV_a), np.where(low, 0.0, k * dV_b)


def _face_terms(U, hx, hy, c, closure=None):
    """Face fluxes and their partial derivatives on the padded array."""
    # s-faces between padded columns f and f+1, rows 1..ny-2
    a = (U[1:-1, 1:] - U[1:-1, :-1]) / hx
    if closure is not None:
        a = a * closure.face_s
    b = (U[2:, :-1] + U[2:, 1:] - U[:-2, :-1] - U[:-2, 1:]) / (4 * hy)
    m = b - c * a
    W = np.sqrt(1 + a * a + m * m)
    N = (1 + c * c) * a - c * b
    Vs = N / W
    W3 = W**3
    dVs_a = (1 + c * c) / W - N * N / W3
    dVs_b = -c / W - N * m / W3
    # t-faces between rows j and j+1, padded columns 1..nx
    bt = (U[1:, 1:-1] - U[:-1, 1:-1]) / hy
    if closure is not None:
        bt = bt * closure.face_t
    at = (U[:-1, 2:] + U[1:, 2:] - U[:-1, :-2] - U[1:, :-2]) / (4 * hx)
    mt = bt - c * at
    Wt = np.sqrt(1 + at * at + mt * mt)
    Vt = mt / Wt
    Wt3 = Wt**3
    dVt_b = 1 / Wt - mt * mt / Wt3
    dVt_a = -c / Wt - mt * (at - c * mt) / Wt3
    if closure is not None:
        dVs_a = dVs_a * closure.face_s
        dVt_b = dVt_b * closure.face_t
        Vs, dVs_a, dVs_b = _edge_flux(Vs, dVs_a, dVs_b, closure.sign_s)
        Vt, dVt_a, dVt_b = _edge_flux(Vt, dVt_a, dVt_b, closure.sign_t)
    return (Vs, dVs_a, dVs_b), (Vt, dVt_a, dVt_b)


def _center_slopes(U, hx, hy, closure=None):
    """Node slopes ``(us, ut)`` and partials w.r.t. forward/backward differences."""
    gps = (U[1:-1, 2:] - U[1:-1, 1:-1]) / hx
    gms = (U[1:-1, 1:-1] - U[1:-1, :-2]) / hx
    gpt = (U[2:, 1:-1] - U[1:-1, 1:-1]) / hy
    gmt = (U[1:-1, 1:-1] - U[:-2, 1:-1]) / hy
    if closure is None:
        half = np.full(gps.shape, 0.5)
        return (0.5 * (gps + gms), half, half), (0.5 * (gpt + gmt), half, half)
    out = []
    for gp, gm, plain in ((gps, gms, closure.plain_s), (gpt, gmt, closure.plain_t)):
        v, dp, dm = corrected_slope(gp, gm)
        out.append((np.where(plain, 0.5 * (gp + gm), v),
                    np.where(plain, 0.5, dp), np.where(plain, 0.5, dm)))
    return out[0], out[1]


def _center_terms(U, hx, hy, c, closure=None):
    (us, dps, dms), (ut, dpt, dmt) = _center_slopes(U, hx, hy, closure)
    q = ut - c * us
    Wc = np.sqrt(1 + us * us + q * q)
    W3 = Wc**3
    d_us = -(us - c * q) / W3
    d_ut = -q / W3
    return 1 / Wc, (d_us * dps, d_us * dms), (d_ut * dpt, d_ut * dmt)


def flux_residual_padded(U, hx, hy, c, closure=None) -> np.ndarray:
    """``div(Du/W) + 1/W`` at rows 1..ny-2, columns 0..nx-1 of the grid."""
    (Vs, _, _), (Vt, _, _) = _face_terms(U, hx, hy, c, closure)
    inv, _, _ = _center_terms(U, hx, hy, c, closure)
    return (Vs[:, 1:] - Vs[:, :-1]) / hx + (Vt[1:, :] - Vt[:-1, :]) / hy + inv


def flux_jacobian_padded(U, hx, hy, c, closure=None) -> sp.csr_matrix:
    """Jacobian of ``flux_residual_padded`` w.r.t. the padded array entries."""
    ny, npc = U.shape
    nx = npc - 2
    (Vs, dVs_a, dVs_b), (Vt, dVt_a, dVt_b) = _face_terms(U, hx, hy, c, closure)
    _, (ds_p, ds_m), (dt_p, dt_m) = _center_terms(U, hx, hy, c, closure)
    jj, ii = np.mgrid[1:ny - 1, 0:nx]  # grid node (j, i); padded column i + 1
    row = ((jj - 1) * nx + ii).ravel()
    R, C, V = [], [], []

    def add(coef, dj, dpi):
        R.append(row)
        C.append(((jj + dj) * npc + (ii + 1 + dpi)).ravel())
        V.append(np.ravel(coef))

    # right face (padded columns p, p+1), sign +1/hx; left face (p-1, p), sign -1/hx
    for sgn, f_off, fsl in ((1.0, 0, slice(1, None)), (-1.0, -1, slice(None, -1))):
        da = sgn / hx * dVs_a[:, fsl]
        db = sgn / hx * dVs_b[:, fsl]
        # a = (U[j, f+1] - U[j, f]) / hx with face f = p + f_off
        add(da / hx, 0, f_off + 1)
        add(-da / hx, 0, f_off)
        k = db / (4 * hy)
        add(k, 1, f_off)
        add(k, 1, f_off + 1)
        add(-k, -1, f_off)
        add(-k, -1, f_off + 1)
    # upper face (rows j, j+1) sign +1/hy; lower face (j-1, j) sign -1/hy
    for sgn, r_off, rsl in ((1.0, 0, slice(1, None)), (-1.0, -1, slice(None, -1))):
        db = sgn / hy * dVt_b[rsl, :]
        da = sgn / hy * dVt_a[rsl, :]
        add(db / hy, r_off + 1, 0)
        add(-db / hy, r_off, 0)
        k = da / (4 * hx)
        add(k, r_off, 1)
        add(k, r_off + 1, 1)
        add(-k, r_off, -1)
        add(-k, r_off + 1, -1)
    add(ds_p / hx, 0, 1)
    add(-ds_m / hx, 0, -1)
    add((ds_m - ds_p) / hx, 0, 0)
    add(dt_p / hy, 1, 0)
    add(-dt_m / hy, -1, 0)
    add((dt_m - dt_p) / hy, 0, 0)
    return sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                         shape=((ny - 2) * nx, ny * npc))


def _center_W(U, hx, hy, c):
    us = (U[1:-1, 2:] - U[1:-1, :-2]) / (2 * hx)
    ut = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2 * hy)
    q = ut - c * us
    W = np.sqrt(1 + us * us + q * q)
    return W, (us - c * q) / W, q / W


def scaled_residual_padded(U, hx, hy, c, closure=None) -> np.ndarray:
    """``W * (div(Du/W) + 1/W)``, the flux form scaled by the node's W.

    The roots are those of the flux form; the scaling undoes the saturation
    of ``Du/W`` that otherwise makes Newton overshoot on steep data.
    """
    W, _, _ = _center_W(U, hx, hy, c)
    return W * flux_residual_padded(U, hx, hy, c, closure)


def scaled_jacobian_padded(U, hx, hy, c, closure=None) -> sp.csr_matrix:
    ny, npc = U.shape
    nx = npc - 2
    G = flux_residual_padded(U, hx, hy, c, closure)
    W, dW_s, dW_t = _center_W(U, hx, hy, c)
    jj, ii = np.mgrid[1:ny - 1, 0:nx]
    row = ((jj - 1) * nx + ii).ravel()
    R, C, V = [], [], []
    for coef, dj, dp in ((G * dW_s / (2 * hx), 0, 1), (-G * dW_s / (2 * hx), 0, -1),
                         (G * dW_t / (2 * hy), 1, 0), (-G * dW_t / (2 * hy), -1, 0)):
        R.append(row)
        C.append(((jj + dj) * npc + (ii + 1 + dp)).ravel())
        V.append(coef.ravel())
    extra = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                          shape=((ny - 2) * nx, ny * npc))
    return sp.diags(W.ravel()) @ flux_jacobian_padded(U, hx, hy, c, closure) + extra


# ---------------------------------------------------------------------------
# unknown layout


@dataclass(eq=False)
class Layout:
    """Affine map from the unknown vector to the padded working array."""

    grid: Grid
    unknown_nodes: np.ndarray  # grid flat indices, ordered x-major for small bandwidth
    P: sp.csr_matrix  # padded <- unknowns
    G: sp.csr_matrix  # padded <- full grid (ghost closure)
    ghost_const: np.ndarray  # padded-size constant from Neumann slopes
    row_select: sp.csr_matrix  # unknown rows <- residual rows

    @property
    def n(self) -> int:
        return len(self.unknown_nodes)


def make_layout(grid: Grid, neumann: dict, periodic: bool) -> Layout:
    ny, nx = grid.shape
    npc = nx + 2
    free = np.zeros(grid.shape, bool)
    free[1:-1, 1:-1] = True
    if periodic:
        free[1:-1, 0] = True
    for e in neumann:
        free[1:-1, 0 if e == "left" else nx - 1] = True
    jj, ii = np.nonzero(free)
    order = np.lexsort((jj, ii))
    jj, ii = jj[order], ii[order]
    nodes = jj * nx + ii
    col_of = -np.ones(grid.size, int)
    col_of[nodes] = np.arange(len(nodes))
    # full grid <- unknowns (periodic right column copies the left one)
    full_rows, full_cols = [nodes], [np.arange(len(nodes))]
    if periodic:
        r = np.arange(1, ny - 1)
        full_rows.append(r * nx + nx - 1)
        full_cols.append(col_of[r * nx])
    A = sp.csr_matrix((np.ones(sum(len(x) for x in full_rows)),
                       (np.concatenate(full_rows), np.concatenate(full_cols))),
                      shape=(grid.size, len(nodes)))
    # padded <- full grid
    gr, gc = [], []
    for j in range(ny):
        for i in range(nx):
            gr.append(j * npc + i + 1)
            gc.append(j * nx + i)
    ghost_const = np.zeros(ny * npc)
    gv = [1.0] * len(gr)
    for j in range(ny):
        if periodic:
            gr += [j * npc, j * npc + nx + 1]
            gc += [j * nx + nx - 2, j * nx + 1]
            gv += [1.0, 1.0]
            continue
        for e in ("left", "right"):
            if e not in neumann:
                continue
            if e == "left":
                gr.append(j * npc)
                gc.append(j * nx + 1)
                ghost_const[j * npc] = -2 * grid.hx * neumann[e]
            else:
                gr.append(j * npc + nx + 1)
                gc.append(j * nx + nx - 2)
                ghost_const[j * npc + nx + 1] = 2 * grid.hx * neumann[e]
            gv.append(1.0)
    Gm = sp.csr_matrix((gv, (gr, gc)), shape=(ny * npc, grid.size))
    P = (Gm @ A).tocsr()
    # residual rows are (j-1) * nx + i for j in 1..ny-2
    res_rows = (jj - 1) * nx + ii
    S = sp.csr_matrix((np.ones(len(nodes)), (np.arange(len(nodes)), res_rows)),
                      shape=(len(nodes), (ny - 2) * nx))
    return Layout(grid, nodes, P, Gm, ghost_const, S)


def _padded(layout: Layout, z: np.ndarray, full_const: np.ndarray) -> np.ndarray:
    g = layout.grid
    U = layout.P @ z + layout.G @ full_const + layout.ghost_const
    return U.reshape(g.ny, g.nx + 2)


def _full_from(layout: Layout, z, full_const) -> np.ndarray:
    U = _padded(layout, z, full_const)
    return U[:, 1:-1].copy()


# ---------------------------------------------------------------------------
# linear algebra


def solve_banded_sparse(J: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    J = J.tocoo()
    off = J.row - J.col
    lower = int(max(off.max(), 0))
    upper = int(max(-off.min(), 0))
    n = J.shape[0]
    ab = np.zeros((lower + upper + 1, n))
    np.add.at(ab, (upper + J.row - J.col, J.col), J.data)
    try:
        return scipy.linalg.solve_banded((lower, upper), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolverFailure(str(exc)) from exc


def solve_linear(J: sp.spmatrix, rhs: np.ndarray, method: str) -> np.ndarray:
    if method == "banded_direct":
        coo = J.tocoo()
        bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
        if bw * bw * J.shape[0] > 4e9:
            # wrap-around coupling (periodic) ruins the band; use sparse LU
            try:
                return spla.spsolve(J.tocsc(), rhs)
            except RuntimeError as exc:
                raise LinearSolverFailure(str(exc)) from exc
        x = solve_banded_sparse(J, rhs)
    elif method == "stabilized_iterative":
        Jc = J.tocsc()
        try:
            ilu = spla.spilu(Jc, drop_tol=1e-6, fill_factor=20)
        except RuntimeError as exc:
            raise LinearSolverFailure(str(exc)) from exc
        M = spla.LinearOperator(J.shape, ilu.solve)
        x, info = spla.bicgstab(Jc, rhs, M=M, rtol=1e-12, atol=0.0, maxiter=2000)
        if info != 0:
            raise LinearSolverFailure(f"bicgstab did not converge (info={info})")
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    if not np.all(np.isfinite(x)):
        raise LinearSolverFailure("linear solve produced non-finite values")
    return x


# ---------------------------------------------------------------------------
# solver


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton_iters: int = 60
    damping: float = 0.5
    min_step: float = 2.0**-15
    cap_schedule: Sequence[float] = (4.0, 6.0, 8.0, 10.0, 12.0)
    linear_solver: str = "banded_direct"
    continuation_in_x: Sequence[float] | None = None
    log_closure: bool = True

    def __post_init__(self):
        self.cap_schedule = tuple(float(b) for b in self.cap_schedule)
        if not self.cap_schedule:
            raise ValueError("cap_schedule must not be empty")
        if any(b1 <= b0 for b0, b1 in zip(self.cap_schedule, self.cap_schedule[1:])):
            raise ValueError("cap_schedule must be strictly increasing")
        if self.newton_tol <= 0 or self.min_step <= 0 or not 0 < self.damping < 1:
            raise ValueError("tolerances must be positive and 0 < damping < 1")
        if self.linear_solver not in ("banded_direct", "stabilized_iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if self.continuation_in_x is not None:
            self.continuation_in_x = tuple(float(x) for x in self.continuation_in_x)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    converged: bool
    final_residual: float
    newton_iters: list = field(default_factory=list)
    interior_drift: float = float("nan")
    caps: list = field(default_factory=list)
    stage_residuals: list = field(default_factory=list)
    stage_drifts: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    failed_stage: int | None = None
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def core_mask(grid: Grid) -> np.ndarray:
    """Interior nodes with ``|x - centre| <= (x_max - x_min) / 4``."""
    spec = grid.spec
    centre = 0.5 * (spec.x_min + spec.x_max)
    quarter = 0.25 * (spec.x_max - spec.x_min)
    return (np.abs(grid.X - centre) <= quarter + 1e-12) & (grid.mask == INTERIOR)


def newton(layout: Layout, z: np.ndarray, full_const: np.ndarray, config: SolverConfig,
           history: list | None = None, closure: Closure | None = None
           ) -> tuple[np.ndarray, int, float]:
    """Damped Newton on the W-scaled flux form; returns (z, iterations, residual)."""
    g = layout.grid
    P = layout.P if closure is None else (closure.X @ layout.P).tocsr()

    def resid(zz):
        U = _padded(layout, zz, full_const)
        if closure is not None:
            U = (closure.X @ U.ravel()).reshape(U.shape)
        r = scaled_residual_padded(U, g.hx, g.hy, g.shear, closure)
        return layout.row_select @ r.ravel(), U

    r, U = resid(z)
    rn = float(np.max(np.abs(r))) if r.size else 0.0
    merit = float(np.linalg.norm(r))
    if history is not None:
        history.append(rn)
    it = 0
    while rn > config.newton_tol:
        if it >= config.max_newton_iters:
            raise NonConvergence(f"Newton hit {config.max_newton_iters} iterations "
                                 f"with residual {rn:.3e}")
        J = layout.row_select @ scaled_jacobian_padded(U, g.hx, g.hy, g.shear, closure) @ P
        dz = solve_linear(J, -r, config.linear_solver)
        lam = 1.0
        while True:
            z_try = z + lam * dz
            r_try, U_try = resid(z_try)
            rn_try = float(np.max(np.abs(r_try)))
            m_try = float(np.linalg.norm(r_try))
            if np.isfinite(m_try) and m_try < merit:
                break
            lam *= config.damping
            if lam < config.min_step:
                raise NonConvergence(f"Newton stagnated at residual {rn:.3e}")
        z, r, U, rn, merit = z_try, r_try, U_try, rn_try, m_try
        it += 1
        if history is not None:
            history.append(rn)
    return z, it, rn


def _has_sign_changes(spec: BoundarySpec) -> bool:
    edges = ("bottom", "top", "left", "right")
    return bool(spec.corner_sign_changes()) or any(spec.edge_sign_changes(e) for e in edges)


def solve_bvp(domain: DomainSpec, bc: BoundarySpec | Callable[[DomainSpec], BoundarySpec],
              config: SolverConfig | None = None, init: ScalarField | None = None,
              strict: bool = True) -> tuple[ScalarField, SolveReport]:
    """Solve the translator Dirichlet problem with continuation in the cap B.

    ``bc`` may be a callable mapping a domain to its boundary prescription;
    that form is required when ``config.continuation_in_x`` is set.  With
    ``strict=False`` a failed stage returns the last good field and a report
    flagged ``converged=False`` instead of raising.
    """
    config = config or SolverConfig()
    report = SolveReport(converged=False, final_residual=float("nan"))
    if config.continuation_in_x:
        if not callable(bc):
            raise ValueError("continuation_in_x needs bc as a callable of the domain")
        for xm in config.continuation_in_x:
            if xm >= domain.x_max:
                break
            sub = DomainSpec(domain.kind, domain.w, domain.x_min, xm, domain.h,
                             alpha=domain.alpha,
                             L=(xm - domain.x_min) if domain.kind == "parallelogram" else None,
                             y_min=domain.y_min)
            stage_cfg = SolverConfig(**{**config.to_dict(), "continuation_in_x": None})
            init, _ = solve_bvp(sub, bc, stage_cfg, init)
    spec = bc(domain) if callable(bc) else bc
    grid = build_grid(domain)
    spec.check_corners(grid)
    trace0 = cap_boundary(spec, config.cap_schedule[0], grid)
    layout = make_layout(grid, trace0.neumann, trace0.periodic)
    # the closure needs infinite edges without sign changes; a +oo/-oo switch
    # keeps its capped ramp, and mixing the two treatments degrades both
    closure = None
    if config.log_closure and not _has_sign_changes(spec):
        closure = log_closure(grid, trace0.inf_sign)
    if init is not None:
        start = init.values if init.grid.shape == grid.shape else transfer(init, grid).values
    else:
        start = np.zeros(grid.shape)
    z = start.ravel()[layout.unknown_nodes].copy()
    core = core_mask(grid)
    if closure is not None and init is None:
        # the closed problem has no cap level to pull a flat start; warm up capped
        const = trace0.values.ravel().copy()
        const[layout.unknown_nodes] = 0.0
        try:
            z, _, _ = newton(layout, z, const, config, report.residual_history)
        except NonConvergence as exc:
            log.info("capped warm-up did not converge (%s); continuing", exc)
    prev_full = None
    full = None
    for stage, B in enumerate(config.cap_schedule):
        trace = cap_boundary(spec, B, grid)
        const = trace.values.ravel().copy()
        const[layout.unknown_nodes] = 0.0
        try:
            z, its, rn = newton(layout, z, const, config, report.residual_history, closure)
        except NonConvergence as exc:
            report.failed_stage = stage
            report.message = str(exc)
            log.warning("stage %d (B=%g) failed: %s", stage, B, exc)
            if strict:
                raise NonConvergence(str(exc), stage=stage, report=report) from exc
            if full is None:
                full = _full_from(layout, z, const)
            break
        full = _full_from(layout, z, const)
        report.caps.append(B)
        report.newton_iters.append(its)
        report.stage_residuals.append(rn)
        if prev_full is not None:
            report.stage_drifts.append(float(np.max(np.abs(full - prev_full)[core])))
        prev_full = full
        log.info("B=%g: %d Newton iterations, residual %.2e", B, its, rn)
    else:
        report.converged = report.stage_residuals[-1] <= config.newton_tol
    if report.stage_residuals:
        report.final_residual = report.stage_residuals[-1]
    if report.stage_drifts:
        report.interior_drift = report.stage_drifts[-1]
    return ScalarField(grid, full), report


def transfer(field: ScalarField, grid: Grid) -> ScalarField:
    """Bilinear interpolation of ``field`` onto ``grid`` (clamped outside)."""
    from scipy.interpolate import RegularGridInterpolator

    src = field.grid
    interp = RegularGridInterpolator((src.t, src.s), field.values, method="linear",
                                     bounds_error=False, fill_value=None)
    s, t = src.to_computational(grid.X, grid.Y)
    s = np.clip(s, src.s[0], src.s[-1])
    t = np.clip(t, src.t[0], src.t[-1])
    vals = interp(np.stack([t.ravel(), s.ravel()], axis=1)).reshape(grid.shape)
    return ScalarField(grid, vals)
