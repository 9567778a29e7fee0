"""Hot loops, each in a numba version and a pure-numpy version.

The public names at the bottom dispatch to one or the other according to
``_accel.USE_NUMBA``.  Both variants stay importable as ``<name>_nb`` and
``<name>_np`` for parity tests and the benchmark.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

_EPS = 1e-16
_TINY = 1e-300


# --------------------------------------------------------------------------
# incomplete gamma on arrays

def _p_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(2000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _q_cf(a, x):
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 2000):
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


def _p_scalar(a, x):
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _p_series(a, x)
    return 1.0 - _q_cf(a, x)


def _q_scalar(a, x):
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _p_series(a, x)
    return _q_cf(a, x)


_p_series_nb = njit(_p_series)
_q_cf_nb = njit(_q_cf)


@njit
def _p_scalar_jit(a, x):
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _p_series_nb(a, x)
    return 1.0 - _q_cf_nb(a, x)


@njit
def _q_scalar_jit(a, x):
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _p_series_nb(a, x)
    return _q_cf_nb(a, x)


@njit
def gammainc_p_nb(a, x):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = _p_scalar_jit(a, x[i])
    return out


@njit
def gammainc_q_nb(a, x):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = _q_scalar_jit(a, x[i])
    return out


def gammainc_p_np(a, x):
    return np.array([_p_scalar(a, float(v)) for v in x], dtype=float)


def gammainc_q_np(a, x):
    return np.array([_q_scalar(a, float(v)) for v in x], dtype=float)


# --------------------------------------------------------------------------
# zonal kernel sums  sum_l c_l P_l(t)  with P_l Chebyshev (alpha=0) or
# Gegenbauer C_l^alpha, evaluated elementwise on a matrix of cosines

@njit
def zonal_sum_nb(t, coeffs, alpha):
    m, k = t.shape
    out = np.zeros((m, k))
    nl = coeffs.size
    for i in range(m):
        for j in range(k):
            x = t[i, j]
            p0 = 1.0
            acc = coeffs[0] * p0
            if nl > 1:
                p1 = x if alpha == 0.0 else 2.0 * alpha * x
                acc += coeffs[1] * p1
                for ell in range(1, nl - 1):
                    if alpha == 0.0:
                        p2 = 2.0 * x * p1 - p0
                    else:
                        p2 = (2.0 * x * (ell + alpha) * p1 - (ell + 2.0 * alpha - 1.0) * p0) / (ell + 1.0)
                    acc += coeffs[ell + 1] * p2
                    p0 = p1
                    p1 = p2
            out[i, j] = acc
    return out


def zonal_sum_np(t, coeffs, alpha):
    p0 = np.ones_like(t)
    acc = coeffs[0] * p0
    if coeffs.size > 1:
        p1 = t.copy() if alpha == 0.0 else 2.0 * alpha * t
        acc = acc + coeffs[1] * p1
        for ell in range(1, coeffs.size - 1):
            if alpha == 0.0:
                p2 = 2.0 * t * p1 - p0
            else:
                p2 = (2.0 * t * (ell + alpha) * p1 - (ell + 2.0 * alpha - 1.0) * p0) / (ell + 1.0)
            acc = acc + coeffs[ell + 1] * p2
            p0, p1 = p1, p2
    return acc


# --------------------------------------------------------------------------
# cyclic tridiagonal solve (Thomas + Sherman-Morrison), several right sides
# row i:  lower[i] * u[i-1] + diag[i] * u[i] + upper[i] * u[i+1] = rhs[i]
# with indices taken mod n

def _thomas(lower, diag, upper, rhs):
    n = diag.size
    cp = np.empty(n)
    dp = np.empty_like(rhs)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    x = np.empty_like(rhs)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


_thomas_nb = njit(_thomas)


@njit
def cyclic_tridiag_solve_nb(lower, diag, upper, rhs):
    n = diag.size
    gamma = -diag[0]
    d = diag.copy()
    d[0] = diag[0] - gamma
    d[n - 1] = diag[n - 1] - upper[n - 1] * lower[0] / gamma
    x = _thomas_nb(lower, d, upper, rhs)
    u = np.zeros((n, 1))
    u[0, 0] = gamma
    u[n - 1, 0] = upper[n - 1]
    z = _thomas_nb(lower, d, upper, u)
    x[0] + lower[0] / gamma * x[n - 1]
    vz = z[0, 0] + lower[0] / gamma * z[n - 1, 0]
    out = np.empty_like(x)
    for k in range(rhs.shape[1]):
        fact = (x[0, k] + lower[0] / gamma * x[n - 1, k]) / (1.0 + vz)
        for i in range(n):
            out[i, k] = x[i, k] - fact * z[i, 0]
    return out


def cyclic_tridiag_solve_np(lower, diag, upper, rhs):
    from scipy.linalg import solve_banded
    n = diag.size
    gamma = -diag[0]
    d = diag.copy()
    d[0] = diag[0] - gamma
    d[n - 1] = diag[n - 1] - upper[n - 1] * lower[0] / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = d
    ab[2, :-1] = lower[1:]
    u = np.zeros(n)
    u[0] = gamma
    u[n - 1] = upper[n - 1]
    x = solve_banded((1, 1), ab, rhs)
    z = solve_banded((1, 1), ab, u)
    vz = z[0] + lower[0] / gamma * z[n - 1]
    fact = (x[0] + lower[0] / gamma * x[n - 1]) / (1.0 + vz)
    return x - np.outer(z, fact)


# --------------------------------------------------------------------------
# closed polyline self-intersection (non-adjacent edges only)

@njit
def polyline_self_intersects_nb(p):
    n = p.shape[0]
    for i in range(n):
        ax, ay = p[i, 0], p[i, 1]
        bx, by = p[(i + 1) % n, 0], p[(i + 1) % n, 1]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            cx, cy = p[j, 0], p[j, 1]
            dx, dy = p[(j + 1) % n, 0], p[(j + 1) % n, 1]
            d1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            d2 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
            d3 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
            d4 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
            if d1 * d2 < 0.0 and d3 * d4 < 0.0:
                return True
    return False


def polyline_self_intersects_np(p):
    n = p.shape[0]
    a = p
    b = np.roll(p, -1, axis=0)
    e = b - a
    for i in range(n):
        j = np.arange(i + 2, n)
        if i == 0:
            j = j[j != n - 1]
        if j.size == 0:
            continue
        c, d = a[j], b[j]
        d1 = e[i, 0] * (c[:, 1] - a[i, 1]) - e[i, 1] * (c[:, 0] - a[i, 0])
        d2 = e[i, 0] * (d[:, 1] - a[i, 1]) - e[i, 1] * (d[:, 0] - a[i, 0])
        f = d - c
        d3 = f[:, 0] * (a[i, 1] - c[:, 1]) - f[:, 1] * (a[i, 0] - c[:, 0])
        d4 = f[:, 0] * (b[i, 1] - c[:, 1]) - f[:, 1] * (b[i, 0] - c[:, 0])
        if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
            return True
    return False


# --------------------------------------------------------------------------
# connected components of same-sign nodes on a CSR graph

@njit
def sign_components_nb(values, band, indptr, indices):
    n = values.size
    labels = -np.ones(n, dtype=np.int64)
    sign = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if values[i] > band:
            sign[i] = 1
        elif values[i] < -band:
            sign[i] = -1
    stack = np.empty(n, dtype=np.int64)
    count = 0
    for s in range(n):
        if sign[s] == 0 or labels[s] >= 0:
            continue
        top = 0
        stack[0] = s
        labels[s] = count
        while top >= 0:
            i = stack[top]
            top -= 1
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if labels[j] < 0 and sign[j] == sign[i]:
                    labels[j] = count
                    top += 1
                    stack[top] = j
        count += 1
    return labels, count


def sign_components_np(values, band, indptr, indices):
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components
    n = values.size
    sign = np.where(values > band, 1, np.where(values < -band, -1, 0))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    keep = (sign[rows] != 0) & (sign[rows] == sign[indices])
    g = csr_matrix((np.ones(keep.sum()), (rows[keep], indices[keep])), shape=(n, n))
    _, lab = connected_components(g, directed=False)
    labels = -np.ones(n, dtype=np.int64)
    active = np.flatnonzero(sign != 0)
    # relabel in order of first appearance so both paths agree
    mapping = {}
    for i in active:
        mapping.setdefault(lab[i], len(mapping))
        labels[i] = mapping[lab[i]]
    return labels, len(mapping)


# --------------------------------------------------------------------------
# brute-force double integrals over pairs of nodes (oracle path)

@njit
def pair_integrals_nb(normals, weights, shape):
    m, d = normals.shape
    nn = 0.0
    sn = 0.0
    for x in range(m):
        for y in range(m):
            dot = 0.0
            for i in range(d):
                dot += normals[x, i] * normals[y, i]
            nn += weights[x] * weights[y] * dot * dot
            acc = 0.0
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s += shape[x, i, j] * normals[y, j]
                acc += s * s
            sn += weights[x] * weights[y] * acc
    return nn, sn


def pair_integrals_np(normals, weights, shape):
    g = normals @ normals.T
    nn = float(weights @ (g * g) @ weights)
    sn_rows = np.einsum("xij,yj->xyi", shape, normals)
    sn = float(np.einsum("x,y,xyi->", weights, weights, sn_rows ** 2))
    return nn, sn


# --------------------------------------------------------------------------
# per-trial quadratic form (n+1)^2 int (phi - m) L (phi - m) gamma with
# phi = <v,N><w,N>, using L<v,N> = <v,N> and the product rule

@njit
def bilinear_values_nb(vs, ws, normals, shape, a2, weights, n1):
    trials = vs.shape[0]
    m, d = normals.shape
    p = 0.0
    for x in range(m):
        p += weights[x]
    out = np.empty(trials)
    phi = np.empty(m)
    grad = np.empty(m)
    for t in range(trials):
        mean = 0.0
        for x in range(m):
            a = 0.0
            b = 0.0
            for i in range(d):
                a += vs[t, i] * normals[x, i]
                b += ws[t, i] * normals[x, i]
            phi[x] = a * b
            g = 0.0
            for i in range(d):
                sv = 0.0
                sw = 0.0
                for j in range(d):
                    sv += shape[x, i, j] * vs[t, j]
                    sw += shape[x, i, j] * ws[t, j]
                g += sv * sw
            grad[x] = g
            mean += weights[x] * phi[x]
        mean /= p
        total = 0.0
        for x in range(m):
            u = phi[x] - mean
            lu = phi[x] + 2.0 * grad[x] - a2[x] * (phi[x] + mean) - mean
            total += weights[x] * u * lu
        out[t] = n1 * n1 * total
    return out


def bilinear_values_np(vs, ws, normals, shape, a2, weights, n1):
    p = weights.sum()
    a = vs @ normals.T
    b = ws @ normals.T
    phi = a * b
    sv = np.einsum("xij,tj->txi", shape, vs)
    sw = np.einsum("xij,tj->txi", shape, ws)
    grad = np.einsum("txi,txi->tx", sv, sw)
    mean = (phi @ weights) / p
    u = phi - mean[:, None]
    lu = phi + 2.0 * grad - a2[None, :] * (phi + mean[:, None]) - mean[:, None]
    return n1 * n1 * ((u * lu) @ weights)


# --------------------------------------------------------------------------
# streaming sums for E<v,a><v,b> over random unit vectors

@njit
def product_moments_nb(samples, a, b):
    s1 = 0.0
    s2 = 0.0
    m, d = samples.shape
    for k in range(m):
        norm2 = 0.0
        pa = 0.0
        pb = 0.0
        for i in range(d):
            norm2 += samples[k, i] * samples[k, i]
            pa += samples[k, i] * a[i]
            pb += samples[k, i] * b[i]
        v = pa * pb / norm2
        s1 += v
        s2 += v * v
    return s1, s2


def product_moments_np(samples, a, b):
    norm2 = np.einsum("ki,ki->k", samples, samples)
    v = (samples @ a) * (samples @ b) / norm2
    return float(v.sum()), float(v @ v)


# --------------------------------------------------------------------------
# dispatch

_NAMES = (
    "gammainc_p", "gammainc_q", "zonal_sum", "cyclic_tridiag_solve",
    "polyline_self_intersects", "sign_components", "pair_integrals",
    "bilinear_values", "product_moments",
)


def variant(name, numba=USE_NUMBA):
    """Return the numba or numpy implementation of kernel ``name``."""
    return globals()[name + ("_nb" if numba else "_np")]


for _name in _NAMES:
    globals()[_name] = variant(_name)
del _name
