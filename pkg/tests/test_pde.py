import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab import pde
from solitonlab.errors import NonConvergence
from solitonlab.grid import (INTERIOR, MINUS_INF, BoundarySpec, CapTrace, DomainSpec, ScalarField,
                             Segment, build_grid, cap_boundary, derivatives)
from solitonlab.pde import (SolveReport, SolverConfig, core_mask, solve_bvp, translator_jacobian,
                            translator_residual)
from solitonlab.surfaces import grim_reaper


def interior(field):
    r = translator_residual(field)
    return r.values[r.mask == INTERIOR]


def test_residual_of_zero_is_one():
    g = build_grid(DomainSpec("strip", 1.0, 0, 2, 0.125))
    r = translator_residual(ScalarField(g, np.zeros(g.shape)))
    assert np.all(r.values[1:-1, 1:-1] == 1.0)
    assert np.all(r.values[0] == 0) and np.all(r.values[:, -1] == 0)


@pytest.mark.parametrize("w", [math.pi, math.sqrt(2) * math.pi])
def test_residual_of_grim_reapers_is_second_order(w):
    errs = []
    for n in (32, 64):
        g = build_grid(DomainSpec("strip", w / 2, -w, w, w / n, y_min=w / 4))
        errs.append(np.max(np.abs(interior(ScalarField.from_function(
            g, lambda x, y: grim_reaper(x, y, w))))))
    assert math.log2(errs[0] / errs[1]) >= 1.9


def test_jacobian_at_zero_is_laplacian():
    g = build_grid(DomainSpec("strip", 1.0, 0, 1, 0.125))
    J = translator_jacobian(ScalarField(g, np.zeros(g.shape))).toarray()
    v = np.random.default_rng(1).normal(size=g.shape)
    lap = ((v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / g.hx**2
           + (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / g.hy**2)
    assert np.allclose(J @ v.ravel(), lap.ravel())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([None, 0.7, 2.2]))
def test_jacobian_matches_finite_differences(seed, alpha):
    rng = np.random.default_rng(seed)
    spec = (DomainSpec("strip", 1.0, 0, 1.5, 0.125) if alpha is None
            else DomainSpec.parallelogram(alpha, 1.0, 1.5, 0.125))
    g = build_grid(spec)
    # smooth random field: a few random Fourier modes
    u = sum(rng.normal() * np.sin(k * g.X + rng.uniform(0, 6)) * np.cos(m * g.Y)
            for k, m in rng.integers(1, 4, size=(4, 2)))
    v = rng.normal(size=g.shape)
    J = translator_jacobian(ScalarField(g, u))
    eps = 1e-6
    fp = translator_residual(ScalarField(g, u + eps * v)).values[1:-1, 1:-1]
    fm = translator_residual(ScalarField(g, u - eps * v)).values[1:-1, 1:-1]
    fd = ((fp - fm) / (2 * eps)).ravel()
    Jv = J @ v.ravel()
    assert np.all(np.abs(fd - Jv) <= 1e-5 * (1 + np.abs(Jv)))


def test_jacobian_on_grim_reaper_is_one_dimensional_linearisation():
    g = build_grid(DomainSpec("strip", math.pi / 2, -1, 1, math.pi / 32, y_min=math.pi / 4))
    u = np.log(np.sin(g.Y))
    J = translator_jacobian(ScalarField(g, u))
    v = np.cos(g.X) * g.Y**2
    _, uy, *_ = derivatives(u, g)
    vx, vy, vxx, _, vyy = derivatives(v, g)
    # u_x = u_xx = u_xy = 0: the operator is (1+u_y^2) v_xx + v_yy + 2 u_y v_y
    expected = (1 + uy**2) * vxx + vyy + 2 * uy * vy
    assert np.allclose(J @ v.ravel(), expected.ravel(), rtol=1e-10, atol=1e-8)


@pytest.mark.parametrize("alpha", [None, 1.1])
@pytest.mark.parametrize("closed", [False, True])
def test_flux_jacobian_matches_finite_differences(alpha, closed):
    spec = (DomainSpec("strip", math.pi, -1, 1, math.pi / 8) if alpha is None
            else DomainSpec.parallelogram(alpha, 1.5, 2.0, 0.1875))
    g = build_grid(spec)
    ny, nx = g.shape
    sign = np.zeros(g.shape, int)
    sign[0], sign[-1, 2:], sign[1:-1, 0] = -1, 1, 1
    closure = pde.log_closure(g, sign) if closed else None
    U = np.random.default_rng(3).normal(size=(ny, nx + 2)) * 2
    args = (g.hx, g.hy, g.shear, closure)
    J = pde.scaled_jacobian_padded(U, *args).toarray()
    r0 = pde.scaled_residual_padded(U, *args).ravel()
    eps = 1e-7
    for k in range(0, U.size, 3):
        V = U.ravel().copy()
        V[k] += eps
        col = (pde.scaled_residual_padded(V.reshape(U.shape), *args).ravel() - r0) / eps
        assert np.allclose(col, J[:, k], rtol=1e-4, atol=1e-4 * np.abs(J).max())


def test_corrected_slope_is_exact_for_log_profiles():
    h = 0.01
    for k in (2, 3, 10):
        y = k * h
        gp = (math.log(y + h) - math.log(y)) / h
        gm = (math.log(y) - math.log(y - h)) / h
        val, *_ = pde.corrected_slope(gp, gm)
        plain = 0.5 * (gp + gm)
        assert abs(val - 1 / y) < 0.2 * abs(plain - 1 / y)
    # smooth data: the correction is a higher-order change
    val, *_ = pde.corrected_slope(np.array(1.0 + 0.01), np.array(1.0 - 0.01))
    assert val == pytest.approx(1.0, abs=1e-4)


def test_log_ghost_is_exact_for_logs():
    y1, y2 = 0.1, 0.2
    a, b = 1.7, -0.3
    u1, u2 = a * math.log(y1) + b, a * math.log(y2) + b
    ghost = u1 - pde.LOG_GHOST * (u2 - u1)
    # central difference at the first node reproduces the exact slope a / y1
    assert (u2 - ghost) / (2 * y1) == pytest.approx(a / y1)


# ---------------------------------------------------------------------------
# solver


def log_sin(y):
    with np.errstate(divide="ignore"):
        return np.log(np.sin(y))


def reaper_problem(n, x=8.0):
    d = DomainSpec("strip", math.pi, -x, x, math.pi / n)

    def trace(x, y, B):
        return np.maximum(np.log(np.maximum(np.sin(y), 1e-300)), -B)

    side = [Segment(0, math.pi, CapTrace(trace))]
    return d, BoundarySpec(d, [Segment(-x, x, MINUS_INF)], [Segment(-x, x, MINUS_INF)], side, side)


@pytest.mark.parametrize("n", [32, 64])
def test_capped_grim_reaper_recovery(n):
    d, bc = reaper_problem(n)
    u, rep = solve_bvp(d, bc)
    assert rep.converged and rep.final_residual <= 1e-10
    g = u.grid
    core = core_mask(g)
    err = np.max(np.abs(u.values - log_sin(g.Y))[core])
    B = rep.caps[-1]
    assert err <= 5 * d.h**2 + 2 * math.exp(-2 * B)
    assert max(rep.newton_iters) <= 12


def test_plain_capped_scheme_is_worse_near_infinite_edges():
    # the log closure is what makes the recovery above possible
    d, bc = reaper_problem(32)
    u, _ = solve_bvp(d, bc, SolverConfig(log_closure=False))
    g = u.grid
    err = np.max(np.abs(u.values - log_sin(g.Y))[core_mask(g)])
    assert err > 5 * d.h**2


def finite_reaper(w, n, x=4.0):
    d = DomainSpec("strip", 0.75 * w, -x, x, w / n, y_min=w / 8)

    def f(x, y):
        return grim_reaper(x, y, w)

    side = [Segment(d.y_min, d.y_max, f)]
    return d, BoundarySpec(d, [Segment(-x, x, f)], [Segment(-x, x, f)], side, side), f


def test_newton_tail_is_quadratic():
    d, bc, _ = finite_reaper(math.sqrt(2) * math.pi, 32)
    _, rep = solve_bvp(d, bc)
    r = rep.residual_history[:rep.newton_iters[0] + 1]
    pairs = [(a, b) for a, b in zip(r, r[1:]) if a < 1e-2 and b > 1e-13]
    assert pairs
    for a, b in pairs:
        assert b <= a**1.8


def test_two_initial_guesses_agree():
    w = math.sqrt(2) * math.pi
    d, bc, f = finite_reaper(w, 16)
    u0, _ = solve_bvp(d, bc)
    g = u0.grid
    seed = ScalarField(g, np.sin(g.X) * 3 + 5)
    u1, _ = solve_bvp(d, bc, init=seed)
    assert np.max(np.abs(u0.values - u1.values)) <= 1e-8


def test_iterative_solver_matches_direct():
    d, bc, _ = finite_reaper(math.sqrt(2) * math.pi, 16)
    u0, _ = solve_bvp(d, bc)
    u1, _ = solve_bvp(d, bc, SolverConfig(linear_solver="stabilized_iterative"))
    assert np.max(np.abs(u0.values - u1.values)) <= 1e-8


def test_nonconvergence_carries_stage():
    d, bc = reaper_problem(16)
    with pytest.raises(NonConvergence) as exc:
        solve_bvp(d, bc, SolverConfig(max_newton_iters=1, log_closure=False))
    assert exc.value.stage == 0
    assert exc.value.report.converged is False
    u, rep = solve_bvp(d, bc, SolverConfig(max_newton_iters=1, log_closure=False), strict=False)
    assert rep.failed_stage == 0 and not rep.converged


def test_continuation_in_x():
    w = math.sqrt(2) * math.pi
    d, _, f = finite_reaper(w, 16, x=6.0)

    def bc(dom):
        side = [Segment(dom.y_min, dom.y_max, f)]
        return BoundarySpec(dom, [Segment(dom.x_min, dom.x_max, f)],
                            [Segment(dom.x_min, dom.x_max, f)], side, side)

    u, rep = solve_bvp(d, bc, SolverConfig(continuation_in_x=(2.0, 4.0)))
    assert rep.converged
    g = u.grid
    assert np.max(np.abs(u.values - f(g.X, g.Y))[core_mask(g)]) <= 5 * d.h**2
    with pytest.raises(ValueError):
        solve_bvp(d, bc(d), SolverConfig(continuation_in_x=(2.0,)))


@pytest.mark.parametrize("kw", [dict(cap_schedule=(4, 4)), dict(cap_schedule=()),
                                dict(newton_tol=0), dict(damping=1.5),
                                dict(linear_solver="magic")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_report_json():
    rep = SolveReport(converged=True, final_residual=1e-12, newton_iters=[3, 1])
    d = json.loads(rep.to_json())
    assert d["converged"] is True and d["newton_iters"] == [3, 1]
    assert d["interior_drift"] is None


def test_closure_not_used_with_sign_changes():
    d = DomainSpec("strip", math.pi, -4, 4, math.pi / 8)
    bc = BoundarySpec(d, [Segment(-4, 0, math.inf), Segment(0, 4, MINUS_INF)],
                      [Segment(-4, 4, MINUS_INF)], [Segment(0, math.pi, 0.0)],
                      [Segment(0, math.pi, 0.0)])
    assert pde._has_sign_changes(bc)
    g = build_grid(d)
    assert cap_boundary(bc, 4, g).inf_sign[0, g.nx // 2] == 0
