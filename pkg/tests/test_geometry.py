import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gaussiso.errors import (
    ChartOutOfRange,
    GridMismatch,
    NonMonotoneProfile,
    NonPositiveRadius,
    NotSymmetric,
    OpenCurve,
    ResolutionTooLow,
)
from gaussiso.geometry import (
    Cylinder,
    Ellipsoid,
    PlanarCurve,
    RevolutionProfile,
    Sphere,
    Strip,
    check_antisymmetric,
    circle,
    curvature_at,
    format_spec,
    lambda_residual,
    make_surface,
    parse_spec,
    quadrature_grid,
    read_curve_csv,
    rotation_generator,
    write_curve_csv,
)
from gaussiso.measure import round_perimeter


def implicit_mean_curvature(grad, x, h=1e-4):
    """div(grad F / |grad F|) by central differences: an independent curvature oracle."""
    d = x.size
    total = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        gp, gm = grad(x + e), grad(x - e)
        total += (gp[i] / np.linalg.norm(gp) - gm[i] / np.linalg.norm(gm)) / (2 * h)
    return total


def torus_profile(R=2.0, a=0.5, m=512):
    phi = 2 * np.pi * np.arange(m) / m
    return RevolutionProfile.periodic(np.column_stack([R + a * np.cos(phi), a * np.sin(phi)]), 2), phi


# ---------------------------------------------------------------- handles

def test_valid_and_degenerate_handles():
    assert make_surface(Sphere(1.0, 2)).kind == "sphere"
    with pytest.raises(NonPositiveRadius):
        make_surface(Sphere(0.0, 2))
    with pytest.raises(NonPositiveRadius):
        make_surface(Ellipsoid((1.0, -1.0)))
    with pytest.raises(OpenCurve):
        make_surface(PlanarCurve(np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1], [0.5, 0]])))


def test_self_crossing_profile_rejected():
    th = 2 * np.pi * np.arange(64) / 64
    eight = np.column_stack([2 + np.sin(th), np.sin(th) * np.cos(th)])
    with pytest.raises(NonMonotoneProfile):
        make_surface(RevolutionProfile.periodic(eight, 2))


def test_flagged_symmetric_curve_must_be_symmetric():
    th = 2 * np.pi * np.arange(32) / 32
    pts = np.column_stack([np.cos(th) + 0.1, np.sin(th)])
    with pytest.raises(NotSymmetric):
        make_surface(PlanarCurve.periodic(pts, symmetric=True))


def test_degenerate_cylinder_is_strip():
    cyl = quadrature_grid(Cylinder(1.0, 0, 1), 64)
    strip = quadrature_grid(Strip(1.0, 2), 64)
    assert_allclose(cyl.perimeter, strip.perimeter, rtol=1e-14)
    assert_allclose(cyl.perimeter, 2 * math.exp(-0.5) / math.sqrt(2 * math.pi), rtol=1e-12)


# ---------------------------------------------------------------- curvature

@pytest.mark.parametrize("r,n", [(0.7, 1), (1.0, 2), (2.5, 3)])
def test_sphere_curvature(r, n):
    u = np.zeros(n + 1)
    u[-1] = 1.0
    c = curvature_at(Sphere(r, n), u)
    assert_allclose([c.H, c.A_norm2, c.A_op2], [n / r, n / r ** 2, 1 / r ** 2], rtol=1e-14)
    assert_allclose(np.linalg.norm(c.normal), 1.0, atol=1e-12)


def test_strip_is_flat():
    c = curvature_at(Strip(0.8, 3), (np.array([1.0]), np.array([0.3, -1.0])))
    assert c.H == 0 and c.A_norm2 == 0


def test_cylinder_curvature_matches_implicit_oracle():
    r, k, n = 1.3, 2, 4
    u = np.array([0.6, 0.0, 0.8])
    y = np.array([0.2, -0.4])
    c = curvature_at(Cylinder(r, k, n), (u, y))
    assert_allclose([c.H, c.A_norm2], [k / r, k / r ** 2], rtol=1e-14)

    def grad(x):
        g = np.zeros_like(x)
        g[: k + 1] = x[: k + 1]
        return g
    assert_allclose(implicit_mean_curvature(grad, c.position), c.H, rtol=1e-6)


def test_ellipsoid_curvature_matches_implicit_oracle():
    axes = np.array([2.0, 1.0, 0.7])
    s = make_surface(Ellipsoid(tuple(axes)))
    for u in (np.array([1.0, 0, 0]), np.array([0.36, 0.48, 0.8]), np.array([0, 0.6, -0.8])):
        c = s.curvature_at(u)
        assert_allclose(implicit_mean_curvature(lambda x: x / axes ** 2, c.position), c.H, rtol=1e-6)


def test_torus_profile_curvature():
    prof, _ = torus_profile()
    g = quadrature_grid(prof)
    z = g.points[:, 2]
    ang = np.arctan2(z, np.hypot(g.points[:, 0], g.points[:, 1]) - 2.0)
    k1 = np.full(g.size, 2.0)
    k2 = np.cos(ang) / np.hypot(g.points[:, 0], g.points[:, 1])
    assert_allclose(np.sort(g.principal, axis=1), np.sort(np.column_stack([k1, k2]), axis=1), atol=1e-7)


def test_chart_out_of_range():
    with pytest.raises(ChartOutOfRange):
        curvature_at(Sphere(1.0, 2), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ChartOutOfRange):
        curvature_at(circle(1.0, 64), 100.0)


def test_full_cylinder_equals_sphere():
    a = quadrature_grid(Cylinder(1.4, 2, 2), 512)
    b = quadrature_grid(Sphere(1.4, 2), 512)
    for name in ("H", "A2", "A_op2", "support", "weights"):
        assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12)


def test_circle_curvature_second_order():
    errs = []
    for m in (64, 128, 256):
        g = quadrature_grid(circle(1.5, m, order=2))
        errs.append(np.max(np.abs(g.H - 1 / 1.5)))
    # node positions are exact, so the error is pure O(h^2) truncation
    assert_allclose(errs[0] / errs[1], 4.0, rtol=0.02)
    assert_allclose(errs[1] / errs[2], 4.0, rtol=0.02)


def test_exact_curvature_overrides_differences():
    pts = circle(1.2, 64).points[:-1]
    c = PlanarCurve.periodic(pts, curvature=np.full(64, 1 / 1.2))
    g = quadrature_grid(c)
    assert np.all(g.H == 1 / 1.2)
    # resampled grids fall back to differencing
    assert not np.all(quadrature_grid(c, 128).H == 1 / 1.2)


# ---------------------------------------------------------------- lambda residual

def test_lambda_residual_examples():
    for spec, lam in ((Sphere(math.sqrt(2), 2), 0.0), (Cylinder(1.3, 1, 3), 1 / 1.3 - 1.3)):
        s = make_surface(spec)
        assert lambda_residual(s, lam, quadrature_grid(s)).max < 1e-10
    e = make_surface(Ellipsoid((2.0, 1.0, 1.0)))
    g = quadrature_grid(e)
    for lam in (-1.0, 0.0, 0.5):
        assert lambda_residual(e, lam, g).max > 0.1


def test_grid_mismatch():
    g = quadrature_grid(Sphere(1.0, 2), 128)
    with pytest.raises(GridMismatch):
        lambda_residual(make_surface(Sphere(1.1, 2)), 0.0, g)
    # an equal spec built separately is accepted
    lambda_residual(make_surface(Sphere(1.0, 2)), 0.0, g)


# ---------------------------------------------------------------- quadrature

@pytest.mark.parametrize("spec", [Sphere(1.3, 1), Sphere(1.5, 2), Sphere(2.0, 3), Cylinder(1.1, 1, 2),
                                  Strip(0.6, 3), Sphere(1.2, 2, True)])
def test_quadrature_matches_closed_form(spec):
    s = make_surface(spec)
    assert_allclose(quadrature_grid(s, 2048).perimeter, round_perimeter(s.radius, s.k), rtol=1e-8)


def test_resolution_guard():
    with pytest.raises(ResolutionTooLow):
        quadrature_grid(Sphere(1.0, 2), 4)


@pytest.mark.parametrize("spec", [circle(1.0, 128), Sphere(1.2, 2), Cylinder(1.0, 1, 2),
                                  Ellipsoid((2.0, 1.0, 0.5))])
def test_grid_closed_under_antipode(spec):
    g = quadrature_grid(spec, 256)
    anti = g.antipode
    assert_allclose(g.points[anti], -g.points, atol=1e-12)
    assert_allclose(g.weights[anti], g.weights, rtol=1e-12)


def test_order_two_convergence_of_ellipse_perimeter():
    vals = [quadrature_grid(Ellipsoid((2.0, 1.0)), m).perimeter for m in (64, 128, 256, 4096)]
    e1, e2 = abs(vals[0] - vals[3]), abs(vals[1] - vals[3])
    assert e2 <= e1 / 4 or e2 < 1e-13


# ---------------------------------------------------------------- projector

@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.integers(0, 255))
def test_projector_properties(v, node):
    g = quadrature_grid(Ellipsoid((2.0, 1.0, 0.7)), 256)
    v = np.asarray(v)
    node %= g.size
    p = g.project(v)[node]
    nrm = g.normals[node]
    assert abs(p @ nrm) < 1e-12 * max(1.0, np.linalg.norm(v))
    p2 = p - (p @ nrm) * nrm
    assert_allclose(p2, p, atol=1e-12)
    assert_allclose(p @ p, v @ v - (nrm @ v) ** 2, atol=1e-10)


@given(st.floats(0.3, 4.0), st.integers(1, 4), st.integers(0, 4))
def test_operator_norm_bounds(r, n, k):
    k = min(k, n)
    c = curvature_at(Cylinder(r, k, n), (np.eye(k + 1)[0], np.zeros(n - k)))
    assert c.A_op2 <= c.A_norm2 + 1e-15 <= n * c.A_op2 + 2e-15


def test_convex_solid_sign_convention():
    g = quadrature_grid(Ellipsoid((2.0, 1.0, 0.7)), 512)
    assert np.all(g.H > 0)
    # A = -S is negative semidefinite on convex solids
    assert np.all(np.linalg.eigvalsh(-g.shape) <= 1e-12)


# ---------------------------------------------------------------- generators and text

def test_antisymmetric_generator():
    Q = rotation_generator(3, 0, 2)
    assert check_antisymmetric(Q, 3) is not None
    v = np.array([0.3, -1.0, 2.0])
    assert abs(v @ Q @ v) < 1e-15
    with pytest.raises(ValueError):
        check_antisymmetric(np.eye(3))


@pytest.mark.parametrize("text", ["sphere r=1.414 n=2", "cylinder r=1.0 k=1 n=2", "strip t=0.5 dim=3",
                                  "sphere r=2.0 n=3 complement=1"])
def test_spec_text_round_trip(text):
    spec = parse_spec(text)
    assert parse_spec(format_spec(spec)) == spec


def test_curve_csv_round_trip(tmp_path):
    c = circle(1.0, 16)
    path = tmp_path / "c.csv"
    write_curve_csv(path, c.points[:-1], ["made by test"])
    back = read_curve_csv(path)
    assert_allclose(back, c.points, atol=1e-14)
    spec = parse_spec(f"curve file={path} symmetric=1")
    assert spec.symmetric and make_surface(spec).samples.shape == (16, 2)
    buf = io.StringIO()
    write_curve_csv(buf, c.points)
    assert buf.getvalue().splitlines()[0] == "s,x,y"


def test_unknown_spec_kind():
    with pytest.raises(ValueError):
        parse_spec("torus r=1")
