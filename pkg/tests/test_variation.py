import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gaussiso.errors import (
    DegenerateTrial,
    MissingNormalDerivative,
    NotEigenfunction,
    NotLambdaSurface,
    NotMeanZero,
    NotSymmetric,
    SelfIntersection,
    UnsupportedSurface,
)
from gaussiso.geometry import (
    Cylinder,
    Ellipsoid,
    PlanarCurve,
    Sphere,
    Strip,
    circle,
    ellipse_curve,
    make_surface,
    polar_curve,
    quadrature_grid,
    rotation_generator,
)
from gaussiso.lambda_solver import find_closed_curve
from gaussiso.measure import round_perimeter, round_volume
from gaussiso.stability import apply_L, linear_field
from gaussiso.variation import (
    VariationInput,
    dilation_curvature,
    dilation_form,
    fd_variation_check,
    first_variation,
    flat_witness,
    lastthm_quantity,
    mean_curvature_witness,
    mean_inner_product,
    nodal_domains,
    pair_integrals,
    perturb_eigen,
    quadratic_form,
    random_bilinear,
    round_conditions,
    second_variation_perimeter,
    second_variation_volume,
    sphere_witness,
    theorem_report,
    top_eigenfunction,
    volume_preserving_extension,
)


@pytest.fixture(scope="module")
def gamma3():
    return find_closed_curve((-3.0, -0.1), 3, samples=2046).best


def angle(g):
    return np.arctan2(g.points[:, 1], g.points[:, 0])


def chi_pdf_second_derivative(r, k, h=1e-4):
    return (round_perimeter(r + h, k) - 2 * round_perimeter(r, k) + round_perimeter(r - h, k)) / h ** 2


# ---------------------------------------------------------------- first variation

def test_first_variation_examples():
    for n in (1, 2, 3):
        g = quadrature_grid(Sphere(math.sqrt(n), n))
        assert abs(first_variation(VariationInput(g, np.ones(g.size))).perimeter) < 1e-12
    r, k = 1.3, 1
    g = quadrature_grid(Cylinder(r, k, 3))
    fv = first_variation(VariationInput(g, np.ones(g.size)))
    assert_allclose(fv.perimeter, (k / r - r) * round_perimeter(r, k), rtol=1e-10)
    assert_allclose(fv.volume, round_perimeter(r, k), rtol=1e-10)
    g = quadrature_grid(Sphere(1.7, 2))
    fv = first_variation(VariationInput(g, np.zeros(g.size), h=1.0))
    assert_allclose(fv.perimeter, 0.5 * (1.7 ** 2 - 2) * round_perimeter(1.7, 2), rtol=1e-10)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_first_variation_linear(a, b, h1, h2):
    g = quadrature_grid(ellipse_curve(1.4, 0.9, 256))
    t = angle(g)
    f1, f2 = np.cos(2 * t), 1 + 0.5 * np.sin(t) ** 2
    one = first_variation(VariationInput(g, f1, h=h1))
    two = first_variation(VariationInput(g, f2, h=h2))
    both = first_variation(VariationInput(g, a * f1 + b * f2, h=a * h1 + b * h2))
    assert_allclose(both.perimeter, a * one.perimeter + b * two.perimeter, atol=1e-12)
    assert_allclose(both.volume, a * one.volume + b * two.volume, atol=1e-12)


# ---------------------------------------------------------------- second variation

def test_degree_two_harmonic_at_threshold():
    for n in (1, 2, 3):
        s = make_surface(Sphere(math.sqrt(n + 2), n))
        g = quadrature_grid(s)
        u = g.normals[:, 0]
        f = (n + 1) * u * u - 1
        val = second_variation_perimeter(VariationInput(g, f, volume_preserving_extension(f, s.lam)))
        assert abs(val) < 1e-9


def test_linear_field_on_shrinker():
    for n in (1, 2):
        g = quadrature_grid(Sphere(math.sqrt(n), n))
        f = linear_field(g, np.eye(n + 1)[0]).values
        val = second_variation_perimeter(VariationInput(g, f, np.zeros(g.size)))
        assert_allclose(val, -g.integrate(f * f), rtol=1e-9)
        assert abs(second_variation_volume(VariationInput(g, f, np.zeros(g.size)))) < 1e-14


def test_unit_circle_second_harmonic():
    g = quadrature_grid(Sphere(1.0, 1), 512)
    f = np.cos(2 * angle(g))
    val = second_variation_perimeter(VariationInput(g, f, np.zeros(g.size)))
    assert_allclose(val, 2 * g.integrate(f * f), rtol=1e-10)


def test_pure_dilation_volume():
    g = quadrature_grid(Ellipsoid((1.5, 1.0, 0.7)))
    h = 0.8
    xn = g.support
    expected = 0.5 * h * h * g.integrate(xn) - 0.25 * h * h * g.integrate(xn * (g.r2 - 3))
    val = second_variation_volume(VariationInput(g, np.zeros(g.size), h=h))
    assert_allclose(val, expected, rtol=1e-12)


def test_slab_volume_second_variation():
    t = 0.6
    g = quadrature_grid(Strip(t, 2))
    val = second_variation_volume(VariationInput(g, np.ones(g.size), np.zeros(g.size)))
    # the slab of half-width t+s has volume erf((t+s)/sqrt 2)
    fd = (round_volume(t + 1e-4, 0) - 2 * round_volume(t, 0) + round_volume(t - 1e-4, 0)) / 1e-8
    assert_allclose(val, -t * round_perimeter(t, 0), rtol=1e-10)
    assert_allclose(val, fd, rtol=1e-6)


@given(st.floats(0.1, 3.0))
def test_second_variation_quadratic(c):
    g = quadrature_grid(ellipse_curve(1.4, 0.9, 256))
    t = angle(g)
    f, dn = np.cos(2 * t) + 0.3, 0.2 * np.sin(t) ** 2
    base = VariationInput(g, f, dn)
    scaled = VariationInput(g, c * f, c * dn)
    assert_allclose(second_variation_perimeter(scaled), c * c * second_variation_perimeter(base), rtol=1e-10)
    assert_allclose(second_variation_volume(scaled), c * c * second_variation_volume(base), rtol=1e-10)


def test_missing_normal_derivative():
    g = quadrature_grid(Sphere(1.0, 2), 128)
    with pytest.raises(MissingNormalDerivative):
        second_variation_perimeter(VariationInput(g, np.ones(g.size)))
    assert second_variation_perimeter(VariationInput(g, np.zeros(g.size))) == 0.0


def test_input_validation():
    g = quadrature_grid(ellipse_curve(1.4, 0.9, 128))
    with pytest.raises(ValueError):
        VariationInput(g, np.ones(7))
    t = angle(g)
    with pytest.raises(NotSymmetric):
        VariationInput(g, np.cos(t), symmetric=True)
    VariationInput(g, np.cos(2 * t), symmetric=True)


# ---------------------------------------------------------------- finite differences

def test_fd_unit_circle():
    g = quadrature_grid(circle(1.0, 2048))
    rep = fd_variation_check(VariationInput(g, np.cos(2 * angle(g))), steps=(1e-3,))
    assert rep.rel_error < 1e-4
    assert set(rep.as_dict()) >= {"fd_perimeter", "formula_perimeter", "rel_error"}


@pytest.mark.parametrize("r,n,c", [(1.3, 2, 0.8), (2.0, 1, -0.5), (1.1, 3, 1.0)])
def test_fd_sphere_constant_speed(r, n, c):
    g = quadrature_grid(Sphere(r, n), 256)
    rep = fd_variation_check(VariationInput(g, np.full(g.size, c)))
    assert_allclose(rep.formula_perimeter, c * c * chi_pdf_second_derivative(r, n), rtol=1e-5)
    assert_allclose(rep.fd_perimeter[-1], rep.formula_perimeter, rtol=1e-5)


def test_fd_zero_speed():
    g = quadrature_grid(ellipse_curve(1.2, 0.7, 256))
    rep = fd_variation_check(VariationInput(g, np.zeros(g.size)))
    assert rep.formula_perimeter == 0 and rep.formula_volume == 0
    assert max(map(abs, rep.fd_perimeter)) < 1e-8


def test_fd_error_shrinks_with_step():
    g = quadrature_grid(ellipse_curve(1.5, 0.8, 2048))
    rep = fd_variation_check(VariationInput(g, 1 + 0.3 * g.points[:, 0] ** 2, h=0.6, h_prime=0.3))
    errs = [abs(v - rep.formula_perimeter) for v in rep.fd_perimeter]
    assert errs[2] < errs[0]
    assert abs(rep.fd_volume[-1] - rep.formula_volume) < 1e-5 * max(1, abs(rep.formula_volume))


def test_fd_guard():
    g = quadrature_grid(circle(1.0, 256))
    with pytest.raises(SelfIntersection):
        fd_variation_check(VariationInput(g, np.ones(g.size)), steps=(0.6,))


# ---------------------------------------------------------------- quadratic forms

@pytest.mark.parametrize("r,k,n", [(0.8, 1, 2), (1.2, 2, 3)])
def test_flat_witness_positive_on_thin_cylinder(r, k, n):
    w = flat_witness(quadrature_grid(Cylinder(r, k, n)))
    assert w.value > 0
    assert_allclose(w.value, w.closed_form, rtol=1e-8)


def test_sphere_witness_at_threshold():
    for n in (1, 2, 3):
        w = sphere_witness(quadrature_grid(Sphere(math.sqrt(n + 2), n)))
        assert abs(w.value) < 1e-9 and abs(w.closed_form) < 1e-12


def test_linear_field_is_not_admissible():
    g = quadrature_grid(Sphere(1.5, 2))
    f = linear_field(g, np.array([0.0, 0.6, 0.8])).values
    assert_allclose(quadratic_form(g, f), g.integrate(f * f), rtol=1e-9)
    with pytest.raises(NotSymmetric):
        quadratic_form(g, f, witness=True)
    with pytest.raises(NotMeanZero):
        quadratic_form(g, np.ones(g.size), witness=True)


def test_witness_excludes_possible_minimizer():
    for spec in (Cylinder(0.8, 1, 2), Sphere(1.2, 2), Cylinder(2.5, 1, 2), Sphere(3.0, 1)):
        s = make_surface(spec)
        rep = theorem_report(quadrature_grid(s), s.lam)
        if any(w.value > 1e-10 for w in rep.witnesses):
            assert "possible minimizer" not in rep.verdicts


def test_mean_curvature_witness_closed_form(gamma3):
    g = quadrature_grid(make_surface(gamma3.curve))
    hw = mean_curvature_witness(g, gamma3.lam)
    assert abs(g.integrate(g.H + hw.b)) < 1e-12
    assert_allclose(hw.value, hw.closed_form, rtol=1e-4)


# ---------------------------------------------------------------- eigenfunction perturbation

def test_perturb_constant_on_cylinder():
    r, k = 1.3, 1
    g = quadrature_grid(Cylinder(r, k, 2))
    rep = perturb_eigen(g, k / r - r, np.full(g.size, 0.7))
    assert_allclose(rep.delta, k / r ** 2 + 1, rtol=1e-10)
    assert abs(rep.defect) < 1e-12
    assert rep.verdict.startswith("no conclusion")


def test_perturb_top_eigenfunction_on_circle():
    s = make_surface(circle(1.0, 1024))
    g = quadrature_grid(s)
    delta, phi = top_eigenfunction(s, g)
    rep = perturb_eigen(g, 0.0, phi, delta=delta)
    assert abs(rep.defect) < 1e-4


def test_perturb_rejects_non_eigenfunctions():
    g = quadrature_grid(circle(1.0, 256))
    with pytest.raises(NotEigenfunction):
        perturb_eigen(g, 0.0, 2 + np.cos(2 * angle(g)))
    with pytest.raises(NotEigenfunction):
        perturb_eigen(g, 0.0, np.cos(angle(g)))


def test_perturb_verdict_for_negative_lambda():
    r, k = 0.8, 1
    g = quadrature_grid(Cylinder(r, k, 2))
    rep = perturb_eigen(g, -0.5, np.ones(g.size))
    assert "round cylinder" in rep.verdict


# ---------------------------------------------------------------- dilation

@pytest.mark.parametrize("spec", [Sphere(1.3, 2), Sphere(2.0, 1), Cylinder(1.2, 1, 3)])
def test_dilation_form_nulls_on_round_surfaces(spec):
    s = make_surface(spec)
    g = quadrature_grid(s)
    assert abs(dilation_form(g, s.lam, g.H - s.lam)) < 1e-10
    assert abs(dilation_curvature(g, s.lam)) < 1e-10


def test_dilation_form_needs_positive_speed():
    g = quadrature_grid(Sphere(1.0, 2))
    with pytest.raises(DegenerateTrial):
        dilation_form(g, 1.0, np.cos(3 * g.points[:, 2]) - 0.5)


def test_lastthm_examples():
    for spec in (Sphere(0.7, 1), Sphere(1.5, 2), Cylinder(1.2, 1, 3), Cylinder(2.0, 2, 4)):
        assert abs(lastthm_quantity(quadrature_grid(spec))) < 1e-10
        assert lastthm_quantity(surface=spec, closed_form=True) == 0.0
    assert abs(lastthm_quantity(quadrature_grid(Ellipsoid((2.0, 1.0, 1.0))))) > 1e-3
    with pytest.raises(UnsupportedSurface):
        lastthm_quantity(surface=Ellipsoid((2.0, 1.0, 1.0)), closed_form=True)


# ---------------------------------------------------------------- random directions

def test_mean_inner_product_examples():
    e = np.eye(3)
    est = mean_inner_product(e[0, :2], e[0, :2], 1, samples=10 ** 5, seed=3)
    assert est.expected == 0.5 and abs(est.z) <= 3
    est = mean_inner_product(e[0], e[1], 2, samples=10 ** 5, seed=3)
    assert est.expected == 0.0 and abs(est.z) <= 3
    est = mean_inner_product(e[0], e[0], 2, samples=10 ** 5, seed=3)
    assert_allclose(est.expected, 1 / 3) and abs(est.z) <= 3


def test_mean_inner_product_deterministic():
    a = np.array([0.6, 0.8, 0.0])
    one = mean_inner_product(a, a, 2, samples=20000, seed=9)
    two = mean_inner_product(a, a, 2, samples=20000, seed=9, chunk=1000)
    assert one.mean == pytest.approx(two.mean, rel=1e-12)
    with pytest.raises(ValueError):
        mean_inner_product(a, a, 1)


def test_bilinear_vanishes_at_threshold():
    for n in (1, 2):
        s = make_surface(Sphere(math.sqrt(n + 2), n))
        res = random_bilinear(quadrature_grid(s), s.lam, trials=200, seed=1)
        assert abs(res.analytic) < 1e-10
        assert np.max(np.abs(res.values)) < 1e-8


def test_orthogonal_pairs_have_zero_mean():
    g = quadrature_grid(Sphere(1.4, 2))
    res = random_bilinear(g, make_surface(Sphere(1.4, 2)).lam, trials=20, seed=2, orthogonal=True)
    for v, w in zip(res.vs, res.ws):
        assert abs(v @ w) < 1e-12
        assert abs(g.integrate((g.normals @ v) * (g.normals @ w))) < 1e-12


def test_boundary_sphere_bound_vanishes():
    s = make_surface(Sphere(2.0, 2))
    res = random_bilinear(quadrature_grid(s), s.lam, trials=50, seed=0)
    assert abs(res.bound) < 1e-12


def test_bilinear_values_match_operator():
    s = make_surface(Sphere(1.6, 2))
    g = quadrature_grid(s)
    res = random_bilinear(g, s.lam, trials=4, seed=4)
    p = g.perimeter
    for v, w, val in zip(res.vs, res.ws, res.values):
        phi = (g.normals @ v) * (g.normals @ w)
        phi = phi - g.integrate(phi) / p
        assert_allclose(val, 9 * g.integrate(phi * apply_L(g, phi)), rtol=1e-8, atol=1e-10)


def test_bilinear_requires_lambda_surface():
    g = quadrature_grid(Ellipsoid((2.0, 1.0, 1.0)))
    with pytest.raises(NotLambdaSurface):
        random_bilinear(g, 0.0, trials=10)


def test_pair_integrals_against_pieces():
    g = quadrature_grid(ellipse_curve(1.3, 0.8, 128))
    nn, _ = pair_integrals(g)
    w, N = g.weights, g.normals
    brute = sum(w[i] * w[j] * (N[i] @ N[j]) ** 2 for i in range(g.size) for j in range(g.size))
    assert_allclose(nn, brute, rtol=1e-12)


# ---------------------------------------------------------------- theorem report

def test_thin_cylinder_fires_first_condition():
    r, k = 0.8, 1
    s = make_surface(Cylinder(r, k, 2))
    rep = theorem_report(quadrature_grid(s), s.lam)
    assert_allclose(rep.I1, (k / r ** 2 - 1) * round_perimeter(r, k), rtol=1e-8)
    assert "convex and int(|A|^2-1)>0" in rep.fired


def test_wide_cylinder_fires_second_condition():
    r, k = 2.0, 1
    s = make_surface(Cylinder(r, k, 3))
    rep = theorem_report(quadrature_grid(s), s.lam)
    assert_allclose(rep.I2, (k / r ** 2 - 1 + 2 / r ** 2) * round_perimeter(r, k), rtol=1e-8)
    assert "int(|A|^2-1+2sup|A|_op^2)<0" in rep.fired


def test_shrinker_has_no_lambda_verdict():
    s = make_surface(Sphere(math.sqrt(2), 2))
    rep = theorem_report(quadrature_grid(s), 0.0)
    assert rep.mainthm2_factor == 0.0
    assert not any("-lambda" in f for f in rep.fired)


@given(st.floats(0.3, 3.5), st.integers(1, 3))
def test_report_matches_closed_forms(r, k):
    s = make_surface(Cylinder(r, k, 3))
    rep = theorem_report(quadrature_grid(s, 512), s.lam, witnesses=False)
    cf = round_conditions(s)
    p = cf["perimeter"]
    for key, val in (("I1", rep.I1), ("I2", rep.I2), ("I3", rep.I3), ("neg_lambda_xn", rep.mainthm2_factor),
                     ("cor9", rep.cor9)):
        scale = p ** 3 if key == "I3" else (p * p if key == "cor9" else p)
        assert abs(val - cf[key]) < 1e-8 * max(1.0, scale * (1 + k / r ** 2 + r * r)), key


def test_report_json_keys():
    s = make_surface(Sphere(1.2, 2))
    d = theorem_report(quadrature_grid(s), s.lam).as_dict()
    assert {"surface", "lambda", "I1", "I2", "I3", "I4", "huisken_defect", "verdicts"} <= set(d)


# ---------------------------------------------------------------- nodal domains

def test_nodal_examples():
    Q = rotation_generator(2)
    assert nodal_domains(quadrature_grid(ellipse_curve(2.0, 1.0, 1024)), Q).count == 4
    circ = nodal_domains(quadrature_grid(circle(1.3, 512)), Q)
    assert circ.count == 0 and circ.verdict == "no conclusion"
    wavy = nodal_domains(quadrature_grid(polar_curve(lambda t: 1 + 0.3 * np.cos(6 * t), 2048)), Q)
    assert wavy.count == 12 and wavy.verdict == "does not minimize"
    assert wavy.mean_defect < 1e-12


def test_nodal_on_ellipsoid_surface():
    rep = nodal_domains(quadrature_grid(Ellipsoid((2.0, 1.0, 1.0))), rotation_generator(3, 0, 1))
    assert rep.count == 4


def test_nodal_needs_symmetry():
    t = 2 * np.pi * np.arange(256) / 256
    pts = np.column_stack([np.cos(t) + 0.2 * np.cos(2 * t), np.sin(t)])
    g = quadrature_grid(PlanarCurve.periodic(pts))
    with pytest.raises(NotSymmetric):
        nodal_domains(g, rotation_generator(2))
