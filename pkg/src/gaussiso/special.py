"""Special functions for Gaussian measures.

The regularized incomplete gamma function is computed by its power series
below ``x = a + 1`` and by a Lentz continued fraction above, which keeps
both tails accurate to about 1e-15.  ``erf``, the normal CDF and the
chi-squared CDF are expressed through it.  Scalars go through the plain
Python path; arrays go through the vectorized kernels.
"""

import math

import numpy as np

from . import _kernels
from .roots import bracket_root

_EPS = 1e-16
_TINY = 1e-300
_MAXITER = 2000


def _gamma_series(a, x):
    # lower regularized P(a, x) by series; valid and fast for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAXITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # upper regularized Q(a, x) by modified Lentz; valid for x > a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_pq(a, x):
    """Return ``(P(a, x), Q(a, x))``, the regularized incomplete gammas."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_cf(a, x)
    return 1.0 - q, q


def gammainc(a, x):
    """Lower regularized incomplete gamma P(a, x); vectorized over ``x``."""
    if np.ndim(x) == 0:
        return gammainc_pq(float(a), float(x))[0]
    x = np.asarray(x, dtype=float)
    return _kernels.gammainc_p(float(a), x.ravel()).reshape(x.shape)


def gammaincc(a, x):
    """Upper regularized incomplete gamma Q(a, x)."""
    if np.ndim(x) == 0:
        return gammainc_pq(float(a), float(x))[1]
    x = np.asarray(x, dtype=float)
    return _kernels.gammainc_q(float(a), x.ravel()).reshape(x.shape)


def erf(x):
    """Error function via erf(x) = sign(x) P(1/2, x^2)."""
    if np.ndim(x) == 0:
        x = float(x)
        return math.copysign(gammainc_pq(0.5, x * x)[0], x)
    x = np.asarray(x, dtype=float)
    return np.sign(x) * gammainc(0.5, x * x)


def erfc(x):
    """Complementary error function, accurate in the upper tail."""
    if np.ndim(x) == 0:
        x = float(x)
        p, q = gammainc_pq(0.5, x * x)
        return q if x >= 0 else 1.0 + p
    x = np.asarray(x, dtype=float)
    q = gammaincc(0.5, x * x)
    return np.where(x >= 0, q, 2.0 - q)


def norm_cdf(x):
    """Standard normal CDF."""
    if np.ndim(x) == 0:
        return 0.5 * erfc(-float(x) / math.sqrt(2.0))
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def norm_ppf(p, tol=1e-15):
    """Standard normal quantile by bracketed root finding on ``norm_cdf``."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return bracket_root(lambda t: norm_cdf(t) - p, -40.0, 40.0, xtol=tol, ftol=0.0).root


def chi2_cdf(x, dof):
    """Chi-squared CDF with ``dof`` degrees of freedom."""
    return gammainc(0.5 * dof, 0.5 * np.maximum(x, 0.0) if np.ndim(x) else max(float(x), 0.0) * 0.5)


def chi2_sf(x, dof):
    return gammaincc(0.5 * dof, 0.5 * np.maximum(x, 0.0) if np.ndim(x) else max(float(x), 0.0) * 0.5)


def chi_pdf(r, dof):
    """Density of the chi distribution (norm of a standard Gaussian in R^dof)."""
    r = np.asarray(r, dtype=float)
    logc = (1.0 - 0.5 * dof) * math.log(2.0) - math.lgamma(0.5 * dof)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = (dof - 1) * np.log(r) if dof > 1 else 0.0
        out = np.exp(logc + power - 0.5 * r * r)
    out = np.where(r > 0, out, 0.0 if dof > 1 else math.exp(logc))
    return float(out) if out.ndim == 0 else out


def sphere_area(n):
    """Surface area of the unit sphere S^n in R^(n+1)."""
    return math.exp(math.log(2.0) + 0.5 * (n + 1) * math.log(math.pi) - math.lgamma(0.5 * (n + 1)))
