import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab.errors import InvalidDomain, InvalidWidth, RefuseUnconverged, TruncationTooTight
from solitonlab.grid import DomainSpec, ScalarField, build_grid
from solitonlab.pde import SolveReport, SolverConfig, core_mask
from solitonlab.surfaces import (Piece, SurfaceKind, construct_piece, discrete_mean_curvature,
                                 graph_mesh, grim_reaper, grim_reaper_field, harmonic_lift,
                                 make_boundary_spec, make_domain, merge_meshes, point_reflect,
                                 quotient_distance, rescale, rotate_vertical, schwarz_reflect,
                                 symmetry_residual, tilt, uniqueness_probe)


@pytest.mark.parametrize("kw, exc", [
    (dict(name="pitchfork", w=3.0), InvalidWidth),
    (dict(name="grim_reaper"), InvalidWidth),
    (dict(name="helicoid", w=math.pi), InvalidWidth),
    (dict(name="helicoid", w=1.0, x_hat=-1.0), InvalidDomain),
    (dict(name="scherk", alpha=0.0, w=1.0, L=1.0), InvalidDomain),
    (dict(name="scherk", alpha=1.0, w=1.0), InvalidDomain),
    (dict(name="trident", a=1.0), InvalidDomain),
    (dict(name="catenoid"), ValueError),
])
def test_surface_kind_validation(kw, exc):
    with pytest.raises(exc):
        SurfaceKind(**kw)


def test_surface_kind_normalises_name():
    k = SurfaceKind("tilted-grim-reaper", w=4.0)
    assert k.name == "tilted_grim_reaper"
    assert k.to_dict() == {"name": "tilted_grim_reaper", "w": 4.0}
    assert SurfaceKind("trident", a=1.0, b=2.0).height == 2.0


def test_grim_reaper_profiles():
    y = np.linspace(0.1, 3.0, 7)
    assert np.allclose(grim_reaper(0.0, y, math.pi), np.log(np.sin(y)))
    assert tilt(math.pi) == 0 and tilt(math.sqrt(2) * math.pi) == pytest.approx(1.0)
    w = 2 * math.pi
    # translation in x adds tilt * dx
    assert grim_reaper(1.5, 2.0, w) - grim_reaper(0.0, 2.0, w) == pytest.approx(1.5 * tilt(w))
    with pytest.raises(InvalidWidth):
        grim_reaper(0, 1, 3.0)


def test_grim_reaper_field_window_checks():
    with pytest.raises(InvalidDomain):
        grim_reaper_field(math.pi, DomainSpec("strip", math.pi, -1, 1, math.pi / 16))
    u = grim_reaper_field(math.pi, DomainSpec("strip", math.pi / 2, -1, 1, math.pi / 16,
                                              y_min=math.pi / 4))
    assert np.all(np.isfinite(u.values))


def test_grim_reaper_mean_curvature_is_minus_inverse_w():
    w = math.sqrt(2) * math.pi
    u = grim_reaper_field(w, DomainSpec("strip", w / 2, -2, 2, w / 64, y_min=w / 4))
    H = discrete_mean_curvature(u)
    g = u.grid
    ux = tilt(w)
    uy = (w / math.pi) / np.tan(g.Y[1:-1, 1:-1] * math.pi / w)
    assert np.max(np.abs(H + 1 / np.sqrt(1 + ux**2 + uy**2))) < 1e-3


def test_rescale_scales_curvature():
    w = math.pi
    u = grim_reaper_field(w, DomainSpec("strip", w / 2, -2, 2, w / 64, y_min=w / 4))
    v = rescale(u, 0.5)
    assert v.grid.hx == pytest.approx(0.5 * u.grid.hx)
    assert np.allclose(discrete_mean_curvature(v), 2 * discrete_mean_curvature(u))


def test_truncation_checks():
    k = SurfaceKind("pitchfork", math.pi)
    with pytest.raises(TruncationTooTight):
        make_boundary_spec(k, make_domain(k, math.pi / 8, -2.0, 8.0))
    t = SurfaceKind("trident", a=2.0, b=1.0)
    with pytest.raises(TruncationTooTight):
        make_boundary_spec(t, DomainSpec("strip", 1.0, -3, 3, 0.125))
    s = SurfaceKind("scherkenoid", math.pi, alpha=1.0)
    with pytest.raises(TruncationTooTight):
        make_boundary_spec(s, make_domain(s, math.pi / 8, 0.0, 5.0))


def test_quotient_distance_ignores_constants():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 7))
    d, c = quotient_distance(a + 3.5, a)
    assert d == pytest.approx(0, abs=1e-14) and c == pytest.approx(3.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=20))
def test_quotient_distance_midrange_is_optimal(vals):
    d0 = np.array(vals)
    d, c = quotient_distance(d0, np.zeros_like(d0))
    assert np.max(np.abs(d0 - c)) == pytest.approx(d, abs=1e-12)
    for c2 in np.linspace(min(vals) - 1, max(vals) + 1, 41):
        assert np.max(np.abs(d0 - c2)) >= d - 1e-12


def test_point_reflection_symmetry():
    g = build_grid(DomainSpec("strip", 2.0, -3, 5, 0.25))
    # symmetric under (x, y) -> (2 - x, 2 - y)
    u = ScalarField(g, (g.X - 1) * (g.Y - 1) + np.cos(g.X - 1))
    assert symmetry_residual(u) < 1e-12
    assert np.array_equal(point_reflect(point_reflect(u.values)), u.values)
    v = u.with_values(u.values + g.X)
    assert symmetry_residual(v) > 0.1


def test_graph_mesh_and_reflection():
    g = build_grid(DomainSpec("strip", 1.0, -1, 1, 0.125))
    u = ScalarField(g, g.X * g.Y)
    m = graph_mesh(u)
    assert len(m.vertices) == g.size
    assert len(m.triangles) == 2 * (g.nx - 1) * (g.ny - 1)
    clipped = graph_mesh(u, z_clip=0.5)
    assert np.all(np.abs(clipped.vertices[:, 2]) <= 0.5)
    assert clipped.triangles.max() < len(clipped.vertices)
    p = np.random.default_rng(1).normal(size=(10, 3))
    assert np.allclose(rotate_vertical(rotate_vertical(p, 0.3, 1.2), 0.3, 1.2), p)
    merged = merge_meshes([m, m])
    assert len(merged.triangles) == 2 * len(m.triangles)
    assert merged.triangles.max() == 2 * len(m.vertices) - 1


def _fake_piece(kind, converged=True):
    d = make_domain(kind, kind.height / 8, -4, 4)
    g = build_grid(d)
    return Piece(kind, ScalarField(g, g.X), SolveReport(converged, 0.0, caps=[8.0]))


def test_schwarz_reflect(tmp_path):
    k = SurfaceKind("pitchfork", math.pi)
    with pytest.raises(RefuseUnconverged):
        schwarz_reflect(_fake_piece(k, converged=False))
    m = schwarz_reflect(_fake_piece(k))
    assert len(m.crease_lines) == 1
    # the rotated copy of (x, y, z) is (-x, -y, z)
    n = len(m.vertices) // 2
    assert np.allclose(m.vertices[n:, :2], -m.vertices[:n, :2])
    m.to_obj(tmp_path / "m.obj")
    text = (tmp_path / "m.obj").read_text()
    assert text.count("\nf ") == len(m.triangles) and "\nl " in text
    with pytest.raises(ValueError):
        schwarz_reflect(_fake_piece(k), copies=0)


def test_harmonic_lift_is_discrete_harmonic():
    k = SurfaceKind("grim_reaper", math.pi)
    u = harmonic_lift(k, math.pi / 8, 4.0, -4, 4)
    V = u.values
    lap = V[1:-1, 2:] + V[1:-1, :-2] + V[2:, 1:-1] + V[:-2, 1:-1] - 4 * V[1:-1, 1:-1]
    assert np.max(np.abs(lap)) < 1e-10
    assert V.min() >= -4 - 1e-12


def test_construct_grim_reaper_piece():
    k = SurfaceKind("grim_reaper", math.pi)
    p = construct_piece(k, math.pi / 16, x_min=-6, x_max=6)
    assert p.report.converged
    g = p.field.grid
    core = core_mask(g)
    with np.errstate(divide="ignore"):
        exact = np.log(np.sin(g.Y))
    assert np.max(np.abs(p.field.values - exact)[core]) < 5 * (math.pi / 16) ** 2


def test_uniqueness_probe_on_grim_reaper():
    k = SurfaceKind("grim_reaper", math.pi)
    cfg = SolverConfig(cap_schedule=(4.0, 8.0))
    rep = uniqueness_probe(k, discretizations=[(math.pi / 16, 8.0)], config=cfg)
    assert not rep.failures and len(rep.distances) == 1
    assert rep.distances[0][2] < 1e-8
    with pytest.raises(ValueError):
        uniqueness_probe(k, seeds=("zero",), config=cfg)
