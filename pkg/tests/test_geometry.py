import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab.errors import InvalidAxis, InvalidRadius, SectorTooWide
from solitonlab.geometry import (certify_theta_graph, cylindrical_chart, delta_bound,
                                 gauss_injectivity_sample, gauss_map, omega_region, rotate_about,
                                 slope_bound_scan, theta_graph_check, write_points_csv)
from solitonlab.grid import DomainSpec, ScalarField, build_grid
from solitonlab.surfaces import graph_mesh, merge_meshes


def field(fn, x0=-4.0, x1=4.0, w=1.0, h=1 / 32, y_min=0.0):
    g = build_grid(DomainSpec("strip", w, x0, x1, h, y_min=y_min))
    return ScalarField(g, fn(g.X, g.Y))


def test_gauss_map_of_plane():
    u = field(lambda x, y: 2 * x - y)
    nf = gauss_map(u)
    expected = np.array([-2.0, 1.0, 1.0]) / math.sqrt(6)
    assert np.allclose(nf.nu[nf.valid], expected)
    assert nf.upper_hemisphere and not nf.degenerate and len(nf.e3_nodes) == 0
    flat = gauss_map(field(lambda x, y: 0 * x))
    assert flat.degenerate


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_gauss_map_is_unit(a, b):
    nf = gauss_map(field(lambda x, y: a * x * x + b * np.sin(3 * y), h=1 / 8))
    assert np.allclose(np.linalg.norm(nf.nu, axis=-1), 1.0)
    assert nf.upper_hemisphere


def test_gauss_map_flags_flat_points():
    nf = gauss_map(field(lambda x, y: x * x + (y - 0.5) ** 2, x0=-1, x1=1, h=1 / 8))
    assert np.allclose(nf.e3_nodes, [[0.0, 0.5]])


def test_gauss_injectivity():
    convex = field(lambda x, y: x * x + y * y, h=1 / 16)
    assert gauss_injectivity_sample(convex, 20_000).collisions == 0
    plane = field(lambda x, y: x + y, h=1 / 16)
    rep = gauss_injectivity_sample(plane, 2000)
    assert rep.collisions > 1000 and len(rep.to_dict()["examples"]) == 20


def test_delta_bound():
    assert delta_bound((0, 1), 5.0, 2.0) == pytest.approx(3 / 4)
    with pytest.raises(InvalidRadius):
        delta_bound((0, -1), 3.0, 2.0)


def exp_field():
    # |u_y / u_x| = e^x / (1 + y e^x): increasing in x, smallest on the top interior row
    return field(lambda x, y: x + y * np.exp(x))


def exp_ratio(x, y=1 - 1 / 32):
    return math.exp(x) / (1 + y * math.exp(x))


def test_slope_bound_scan_with_eps():
    sb = slope_bound_scan(exp_field(), +1, eps=0.9)
    assert sb.found
    # first column at or beyond the exact threshold e^x = 0.9 / (1 - 0.9 y)
    x_star = math.log(0.9 / (1 - 0.9 * (1 - 1 / 32)))
    assert x_star <= sb.R0 < x_star + 1 / 32
    assert exp_ratio(sb.R0 - 1 / 32) < 0.9
    left = slope_bound_scan(exp_field(), -1, eps=0.9)
    assert not left.found
    with pytest.raises(ValueError):
        slope_bound_scan(exp_field(), 0)


def test_slope_bound_scan_with_window():
    sb = slope_bound_scan(exp_field(), +1, R0=3.0)
    assert sb.eps == pytest.approx(exp_ratio(3 + 1 / 32), rel=1e-3)
    default = slope_bound_scan(exp_field(), +1)
    assert default.R0 == pytest.approx(2.0)


def test_theta_graph_check():
    p_a = (0.0, -1.0)
    # u = x: the gradient (1, 0) never points along p - p_a when y > -1
    ok = theta_graph_check(field(lambda x, y: x), p_a)
    assert ok.passed and ok.sign == 1 and len(ok.critical) == 0
    # angular function about p_a: s = -1 everywhere
    ang = theta_graph_check(field(lambda x, y: np.arctan2(y + 1, x)), p_a)
    assert ang.passed and ang.sign == -1
    # radial function: Du is collinear with p - p_a everywhere
    rad = theta_graph_check(field(lambda x, y: x * x + (y + 1) ** 2), p_a)
    assert not rad.passed
    # a field whose gradient turns: the zero set of s is found
    turn = theta_graph_check(field(lambda x, y: x * y), p_a)
    assert not turn.passed and len(turn.critical) > 0
    with pytest.raises(InvalidAxis):
        theta_graph_check(field(lambda x, y: x), (0.0, 0.5))


def test_omega_region():
    u = field(lambda x, y: x)
    m = omega_region(u, (0.0, 0.0), 2.0, +1)
    X, Y = u.grid.X[1:-1, 1:-1], u.grid.Y[1:-1, 1:-1]
    assert np.all(X[m] > 0) and np.all(np.hypot(X[m], Y[m]) > 2.0)
    assert m.sum() > 0


def test_certify_theta_graph_window_geometry():
    u = field(lambda x, y: x + y * np.exp(x), x0=-20, x1=20)
    cert = certify_theta_graph(u, +1, eps=0.9)
    assert cert.delta < 0.9
    region = omega_region(u, cert.p_a, cert.R, +1)
    assert np.all(u.grid.X[1:-1, 1:-1][region] >= cert.slope.R0 - 1e-9)
    assert cert.to_dict()["passed"] == cert.passed
    none = certify_theta_graph(u, -1, eps=0.9)
    assert not none.passed and none.R is None


def test_write_points_csv(tmp_path):
    pts = np.array([[0.1, 1 / 3], [2.0, -1.0]])
    write_points_csv(pts, tmp_path / "p.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "x,y" and float(rows[1].split(",")[1]) == 1 / 3


def patch(x0, x1, y0, y1, fn=lambda x, y: y):
    g = build_grid(DomainSpec("strip", y1 - y0, x0, x1, (y1 - y0) / 8, y_min=y0))
    return graph_mesh(ScalarField(g, fn(g.X, g.Y)))


def test_rotate_about_preserves_axis_distance():
    m = patch(2, 3, -0.5, 0.5)
    r = rotate_about(m, (1.0, 0.5), 0.7)
    d0 = np.hypot(m.vertices[:, 0] - 1, m.vertices[:, 1] - 0.5)
    d1 = np.hypot(r.vertices[:, 0] - 1, r.vertices[:, 1] - 0.5)
    assert np.allclose(d0, d1) and np.allclose(r.vertices[:, 2], m.vertices[:, 2])
    back = rotate_about(r.vertices, (1.0, 0.5), -0.7)
    assert np.allclose(back, m.vertices)


def test_cylindrical_chart_of_theta_graph(tmp_path):
    m = patch(2, 3, -0.5, 0.5)
    chart = cylindrical_chart(m, (0.0, 0.0))
    assert chart.theta_graphical and chart.overlap_fraction == 0
    assert chart.sector_angle < math.pi / 2
    f = chart.interpolator()
    i = len(chart.rho) // 2
    assert f(chart.rho[i], chart.z[i]) == pytest.approx(chart.theta[i])
    assert chart.contains(np.array([2.5]), np.array([0.1]))[0]
    chart.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("rho,theta,z")


def test_cylindrical_chart_detects_double_cover():
    m = patch(2, 3, -0.5, 0.5)
    both = merge_meshes([m, rotate_about(m, (0.0, 0.0), 0.2)])
    chart = cylindrical_chart(both, (0.0, 0.0))
    assert not chart.theta_graphical and chart.overlap_fraction > 0


def test_cylindrical_chart_errors():
    with pytest.raises(InvalidAxis):
        cylindrical_chart(patch(2, 3, -0.5, 0.5), (2.51, 0.03))
    ring = merge_meshes([patch(-3, 3, 1, 2), patch(-3, 3, -2, -1)])
    with pytest.raises(SectorTooWide):
        cylindrical_chart(ring, (0.0, 0.0))
