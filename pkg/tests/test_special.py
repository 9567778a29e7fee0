import math

import mpmath
import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gaussiso import special


def test_incomplete_gamma_against_mpmath():
    for a in (0.5, 1.0, 1.5, 2.0, 7.5, 50.0):
        for x in (1e-3, 0.3, 1.0, a, 3.0 * a + 2.0, 80.0):
            want = float(mpmath.gammainc(a, 0, x, regularized=True))
            assert_allclose(special.gammainc(a, x), want, rtol=1e-13, atol=1e-300)
            want_q = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
            assert_allclose(special.gammaincc(a, x), want_q, rtol=1e-12, atol=1e-300)


def test_erf_and_normal_cdf():
    xs = np.array([-6.0, -2.5, -0.3, 0.0, 0.4, 1.7, 5.0])
    assert_allclose(special.erf(xs), [float(mpmath.erf(x)) for x in xs], rtol=1e-14, atol=1e-16)
    assert_allclose(special.erfc(4.5), float(mpmath.erfc(4.5)), rtol=1e-13)
    assert_allclose(special.norm_cdf(1.0), float(mpmath.ncdf(1.0)), rtol=1e-14)


def test_normal_quantile_round_trip():
    # quartile of the standard normal, independently from mpmath
    q = float(mpmath.findroot(lambda t: mpmath.ncdf(t) - 0.75, 0.7))
    assert_allclose(special.norm_ppf(0.75), q, rtol=1e-13)
    assert_allclose(q, 0.6744897501960817, rtol=1e-15)


def test_chi_squared_median_three_dof():
    med = float(mpmath.findroot(lambda x: mpmath.gammainc(1.5, 0, x / 2, regularized=True) - 0.5, 2.4))
    assert_allclose(med, 2.365973884375, rtol=1e-10)
    assert_allclose(special.chi2_cdf(med, 3), 0.5, atol=1e-14)


def test_chi_density_is_sphere_area_times_weight():
    for dof, r in ((1, 0.7), (2, 1.2), (3, 1.5), (6, 2.5)):
        want = special.sphere_area(dof - 1) * r ** (dof - 1) * (2 * math.pi) ** (-dof / 2) * math.exp(-r * r / 2)
        assert_allclose(special.chi_pdf(r, dof), want, rtol=1e-14)


def test_sphere_areas():
    assert_allclose(special.sphere_area(0), 2.0)
    assert_allclose(special.sphere_area(1), 2 * math.pi)
    assert_allclose(special.sphere_area(2), 4 * math.pi)


@given(st.floats(0.05, 60.0), st.floats(0.0, 200.0))
def test_p_plus_q_is_one(a, x):
    assert_allclose(special.gammainc(a, x) + special.gammaincc(a, x), 1.0, atol=2e-14)


@given(st.floats(1e-6, 1 - 1e-6))
def test_quantile_inverts_cdf(p):
    assert_allclose(special.norm_cdf(special.norm_ppf(p)), p, rtol=1e-12, atol=1e-15)
