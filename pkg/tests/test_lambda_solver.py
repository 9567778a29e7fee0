import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.spatial.distance import directed_hausdorff

from gaussiso.errors import (
    NoBracket,
    NoRootInBracket,
    SelfIntersection,
    StepLimitExceeded,
)
from gaussiso.geometry import Sphere, lambda_residual, make_surface, quadrature_grid
from gaussiso.lambda_solver import (
    TRAJECTORY_HEADER,
    FlowOptions,
    ShootState,
    assemble_curve,
    circle_radius,
    cylinder_scan,
    find_closed_curve,
    flow_state,
    format_trajectory,
    half_arc,
    mcf_minimize,
    perturbed_circle,
    project_volume,
    rk4_nodes,
    shoot_curve,
)
from gaussiso.measure import planar_region_volume, solve_constraint


@pytest.fixture(scope="module")
def search3():
    return find_closed_curve((-3.0, -0.1), 3, samples=2046)


def oval(c, count=256, ratio=1.8):
    th = 2 * np.pi * np.arange(count) / count

    def pts(a):
        return np.column_stack([a * np.cos(th), a / ratio * np.sin(th)])
    return pts(solve_constraint(lambda a: planar_region_volume(pts(a)), c))


def rotate(pts, angle):
    c, s = math.cos(angle), math.sin(angle)
    return pts @ np.array([[c, s], [-s, c]])


# ---------------------------------------------------------------- shooting

def test_unit_circle_closes():
    res = shoot_curve(0.0, (1.0, 0.0, 0.5 * math.pi), 2 * math.pi)
    assert res.closure_residual() < 1e-8
    assert_allclose(res.length, 2 * math.pi)
    assert_allclose(res.curvature(np.linspace(0, 6, 7)), 1.0, atol=1e-9)


@given(st.floats(0.3, 3.0))
def test_circle_of_matching_lambda_closes(r):
    lam = 1 / r - r
    res = shoot_curve(lam, (r, 0.0, 0.5 * math.pi), 2 * math.pi * r)
    assert res.closure_residual() < 1e-8 * max(1.0, r)
    assert_allclose(circle_radius(lam), r, rtol=1e-12)
    pts = res.sample(64)
    assert_allclose(np.linalg.norm(pts, axis=1), r, rtol=1e-9)


def test_generic_start_does_not_close():
    res = shoot_curve(-1.0, (1.0, 0.3, 1.0), 2 * math.pi)
    assert res.closure_residual() > 1e-2


def test_shoot_state_curvature():
    st_ = ShootState(0.0, 1.5, 0.0, 0.5 * math.pi)
    assert_allclose(st_.kappa(-0.2), 1.3)


def test_step_tolerance_guard():
    with pytest.raises(ValueError):
        shoot_curve(0.0, rtol=0.0)


def test_half_arc_of_circle_is_degenerate_or_quarter():
    lam = -1.0
    r0 = 1.3 * circle_radius(lam)
    res, phi = half_arc(lam, r0)
    assert res is None or 0 < phi < math.pi


def test_rk4_nodes_match_adaptive_solution():
    lam, start = -0.7, (2.0, 0.0, 0.5 * math.pi)
    nodes = rk4_nodes(lam, start, 3.0, 300)
    ref = shoot_curve(lam, start, 3.0, rtol=1e-13, atol=1e-13)
    s = np.linspace(0, 3.0, 301)
    assert_allclose(nodes[:, :2], ref.solution(s)[:2].T, atol=1e-9)


# ---------------------------------------------------------------- closed curves

def test_three_fold_curve(search3):
    best = search3.best
    assert best.lam < 0 and best.m == 3
    assert best.closure < 1e-8
    assert best.convex and best.min_curvature > 0
    s = make_surface(best.curve)
    assert lambda_residual(s, best.lam, quadrature_grid(s)).max < 1e-6
    assert all(r.lam < 0 for r in search3.roots)


def test_three_fold_symmetry(search3):
    pts = search3.best.points
    rot = rotate(pts, 2 * math.pi / 3)
    d = max(directed_hausdorff(rot, pts)[0], directed_hausdorff(pts, rot)[0])
    assert d < 1e-8


def test_odd_fold_curve_is_not_centrally_symmetric(search3):
    # 3-fold curves are not symmetric under x -> -x
    pts = search3.best.points
    d = directed_hausdorff(-pts, pts)[0]
    assert d > 1e-3


def test_assemble_reproduces_root(search3):
    best = search3.best
    again = assemble_curve(best.lam, best.points[0, 0], 3, samples=2046)
    assert_allclose(again.points, best.points, atol=1e-12)


def test_narrow_bracket_has_no_root():
    with pytest.raises(NoRootInBracket):
        find_closed_curve((-0.3, -0.1), 7, samples=1024, lam_steps=3, r_steps=6)


def test_closed_curve_preconditions():
    with pytest.raises(ValueError):
        find_closed_curve((-3.0, -0.1), 2)
    with pytest.raises(ValueError):
        find_closed_curve((-3.0, 0.5), 3)


# ---------------------------------------------------------------- cylinder scan

def test_scan_ranking():
    rows = cylinder_scan(2, 0.5)
    solid = [r for r in rows if not r.complement]
    assert [r.kind for r in solid] == ["sphere", "cylinder", "strip"]
    assert_allclose([r.perimeter for r in solid], [0.5783, 0.5887, 0.6356], atol=5e-4)
    assert rows[0].kind == "sphere" and not rows[0].complement


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_scan_rows_meet_volume(n):
    rows = cylinder_scan(n, 0.5, reports=False)
    assert len(rows) == 2 * (n + 1)
    for r in rows:
        assert abs(r.volume - 0.5) < 1e-12
        assert_allclose(r.lam, (1 if not r.complement else -1) * (r.k / r.radius - r.radius))
    assert all(a.perimeter <= b.perimeter for a, b in zip(rows, rows[1:]))


def test_scan_near_full_volume():
    rows = cylinder_scan(2, 0.999, reports=False)
    # the thin solid slab wins and its boundary weight vanishes with 1 - c
    assert rows[0].kind == "strip" and not rows[0].complement
    assert rows[0].perimeter < 0.01
    assert cylinder_scan(2, 0.99999, reports=False)[0].perimeter < rows[0].perimeter


def test_scan_guard():
    with pytest.raises(NoBracket):
        cylinder_scan(2, 1.0)


def test_scan_row_dict():
    row = cylinder_scan(1, 0.5)[0]
    d = row.as_dict()
    assert {"k", "complement", "r", "volume", "perimeter", "lambda", "report"} <= set(d)


# ---------------------------------------------------------------- flow

def test_flow_restores_circle():
    res = mcf_minimize(perturbed_circle(0.5, 512, 0.05, 4), 0.5)
    traj = np.array(res.trajectory)
    assert res.converged and res.state.defect < 1e-6
    assert np.all(np.diff(traj[:, 1]) <= 0)
    assert np.max(np.abs(traj[:, 2] - 0.5)) < 1e-8
    r = np.linalg.norm(res.state.points, axis=1)
    assert_allclose(r, solve_constraint(Sphere(1.0, 1), 0.5), rtol=1e-5)
    assert_allclose(res.state.lam_hat, 1 / r.mean() - r.mean(), atol=1e-5)


def test_flow_stationary_start():
    res = mcf_minimize(perturbed_circle(0.5, 256, 0.0), 0.5)
    assert res.converged and len(res.trajectory) == 1
    assert res.state.defect < 1e-9


def test_flow_oval_monotone_and_stationary():
    res = mcf_minimize(oval(0.5), 0.5)
    traj = np.array(res.trajectory)
    assert res.converged
    assert np.all(np.diff(traj[:, 1]) <= 0)
    s = make_surface(res.state.curve)
    stats = lambda_residual(s, res.state.lam_hat, quadrature_grid(s))
    # the stop rule is on the weighted L2 defect; the max norm is within a small factor
    assert stats.l2 < 1e-6 and stats.max < 1e-5


@settings(max_examples=8)
@given(st.floats(0.01, 0.08), st.sampled_from([2, 4, 6]), st.floats(0.3, 0.7))
def test_flow_invariants(amplitude, mode, c):
    res = mcf_minimize(perturbed_circle(c, 256, amplitude, mode), c)
    traj = np.array(res.trajectory)
    assert np.all(np.diff(traj[:, 1]) <= 0)
    assert np.max(np.abs(traj[:, 2] - c)) < 1e-8
    pts = res.state.points
    assert_allclose(pts[len(pts) // 2:], -pts[: len(pts) // 2], atol=1e-12)


def test_flow_preconditions():
    pts = perturbed_circle(0.5, 256)
    with pytest.raises(ValueError):
        mcf_minimize(pts[:-1], 0.5)
    with pytest.raises(ValueError):
        mcf_minimize(pts + [0.1, 0.0], 0.5)
    with pytest.raises(ValueError):
        mcf_minimize(pts, 0.8)
    th = 2 * np.pi * np.arange(256) / 256
    bow = np.column_stack([np.cos(th), np.sin(3 * th)]) * 1.3
    with pytest.raises(SelfIntersection):
        mcf_minimize(bow, 0.5)


def test_step_limit_returns_best_state():
    with pytest.raises(StepLimitExceeded) as info:
        mcf_minimize(oval(0.5), 0.5, FlowOptions(max_steps=3))
    assert info.value.state.iteration == 3
    assert len(info.value.trajectory) == 4


def test_volume_projection():
    pts = perturbed_circle(0.5, 256, 0.1, 4) * 1.05
    out = project_volume(pts, 0.5)
    assert abs(planar_region_volume(out) - 0.5) < 1e-13


def test_trajectory_format():
    st_ = flow_state(perturbed_circle(0.5, 128, 0.02))
    text = format_trajectory([st_.row()], ["c=0.5"])
    lines = text.splitlines()
    assert lines[0] == "# c=0.5" and lines[1] == TRAJECTORY_HEADER
    assert lines[2].startswith("0,")
