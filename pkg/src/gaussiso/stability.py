"""The operators calL = Delta - <x, grad> and L = calL + |A|^2 + 1.

Round surfaces use an exact spectral action, curves and profiles use
finite differences.  Spectra come from a weighted, symmetric assembly of
the quadratic form -int |grad f|^2 gamma so eigenvalues are always real.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .errors import (
    ConvergenceFailure,
    DegenerateTrial,
    NotLambdaSurface,
    UnsupportedSurface,
)
from .geometry import (
    CurveSurface,
    RevolutionSurface,
    RoundSurface,
    check_antisymmetric,
    circle,
    gaussian_weight,
    lambda_residual,
    make_surface,
    quadrature_grid,
)
from .special import sphere_area

LAMBDA_TOL = 1e-6


# --------------------------------------------------------------------------
# fields

@dataclass(frozen=True)
class FieldSamples:
    """Values of a scalar function at grid nodes, optionally with its
    tangential gradient (one ambient vector per node)."""
    values: np.ndarray
    grad: np.ndarray = None
    symmetric: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return self.values.size


def as_values(f):
    return f.values if isinstance(f, FieldSamples) else np.asarray(f, dtype=float)


def constant_field(grid, c=1.0):
    return FieldSamples(np.full(grid.size, float(c)), np.zeros_like(grid.points), True, "const")


def linear_field(grid, v):
    """<v, N>, with gradient S v (the shape operator applied to v)."""
    v = np.asarray(v, dtype=float)
    return FieldSamples(grid.normals @ v, grid.shape @ v, False, "<v,N>")


def coordinate_field(grid, v):
    """<v, x>, with gradient the tangential part of v."""
    v = np.asarray(v, dtype=float)
    return FieldSamples(grid.points @ v, grid.project(v), False, "<v,x>")


def rotation_field(grid, Q):
    """<Qx, N>, with gradient Pi(Q^T N) + S Q x."""
    Q = check_antisymmetric(Q, grid.ambient)
    qx = grid.points @ Q.T
    vals = np.einsum("ij,ij->i", qx, grid.normals)
    qtn = grid.normals @ Q
    tang = qtn - np.einsum("ij,ij->i", qtn, grid.normals)[:, None] * grid.normals
    grad = tang + np.einsum("mij,mj->mi", grid.shape, qx)
    return FieldSamples(vals, grad, True, "<Qx,N>")


def norm2_field(grid):
    """|x|^2, with gradient 2 Pi x."""
    x = grid.points
    tang = x - grid.support[:, None] * grid.normals
    return FieldSamples(grid.r2.copy(), 2.0 * tang, True, "|x|^2")


def bilinear_field(grid, v, w):
    """<v,N><w,N> with its exact gradient."""
    a, b = linear_field(grid, v), linear_field(grid, w)
    return FieldSamples(a.values * b.values, a.values[:, None] * b.grad + b.values[:, None] * a.grad,
                        True, "<v,N><w,N>")


def default_vector(dim, seed=0):
    """A fixed, generic unit vector."""
    v = np.cos(np.arange(1, dim + 1) * (1.3 + seed))
    return v / np.linalg.norm(v)


def default_generator(dim):
    """A fixed, generic antisymmetric matrix."""
    i, j = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    m = np.sin(i + 2 * j + 1.0)
    return m - m.T


# --------------------------------------------------------------------------
# operator application

def _operator(grid):
    if grid.operator is None:
        raise UnsupportedSurface(f"no discrete operator for {grid.surface.kind} of dimension {grid.n}")
    return grid.operator


def apply_calL(grid, f):
    """calL f = Delta f - <x, grad f>."""
    return _operator(grid).calL(as_values(f))


def apply_L(grid, f):
    """L f = Delta f - <x, grad f> + (|A|^2 + 1) f."""
    vals = as_values(f)
    return apply_calL(grid, vals) + (grid.A2 + 1.0) * vals


def grad_dot(grid, f, g):
    """Pointwise <grad f, grad g>.

    Uses supplied gradients when both fields carry them; otherwise finite
    differences on curves and the product rule for calL elsewhere.
    """
    if isinstance(f, FieldSamples) and isinstance(g, FieldSamples) and f.grad is not None and g.grad is not None:
        return np.einsum("ij,ij->i", f.grad, g.grad)
    op = _operator(grid)
    fv, gv = as_values(f), as_values(g)
    if hasattr(op, "ds"):
        return op.ds(fv) * op.ds(gv)
    return 0.5 * (op.calL(fv * gv) - fv * op.calL(gv) - gv * op.calL(fv))


# --------------------------------------------------------------------------
# spectra

@dataclass(frozen=True)
class SphereEigen:
    degree: int
    eigenvalue: float
    multiplicity: int


def harmonic_multiplicity(n, ell):
    """Dimension of degree-ell spherical harmonics on S^n."""
    if ell == 0:
        return 1
    return math.comb(ell + n, n) - math.comb(ell + n - 2, n) if ell >= 2 else n + 1


def sphere_spectrum(n, r, lmax):
    """Eigenvalues 1 + (n - l(l+n-1))/r^2 of L on rS^n with multiplicities."""
    if lmax < 0:
        raise ValueError("lmax must be >= 0")
    return [SphereEigen(l, 1.0 + (n - l * (l + n - 1)) / r ** 2, harmonic_multiplicity(n, l))
            for l in range(lmax + 1)]


@dataclass(frozen=True)
class ProductEigen:
    degree: int
    hermite_degree: int
    eigenvalue: float
    multiplicity: int


def cylinder_spectrum(k, n, r, lmax):
    """Eigenvalues 1 + (k - l(l+k-1))/r^2 - j of L on rS^k x R^(n-k), l + j <= lmax.

    The flat factor contributes the Ornstein-Uhlenbeck eigenvalues -j with
    multiplicity C(j+n-k-1, n-k-1); k = 0 is the strip, with S^0 carrying
    only the even (l=0) and odd (l=1) modes.
    """
    if lmax < 0:
        raise ValueError("lmax must be >= 0")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    flat = n - k
    out = []
    for l in range(min(lmax, 1) + 1 if k == 0 else lmax + 1):
        for j in range(lmax - l + 1 if flat else 1):
            mult = harmonic_multiplicity(k, l) * (math.comb(j + flat - 1, flat - 1) if flat else 1)
            out.append(ProductEigen(l, j, 1.0 + (k - l * (l + k - 1)) / r ** 2 - j, mult))
    out.sort(key=lambda e: (-e.eigenvalue, e.degree, e.hermite_degree))
    return out


@dataclass(frozen=True)
class FluxSystem:
    """Symmetric discretization on a closed 1-D node cycle.

    ``mass[j]`` is the weighted length around node j, ``conductance[j]`` the
    weight over length of edge (j, j+1), ``potential`` is |A|^2 + 1.
    """
    mass: np.ndarray
    conductance: np.ndarray
    potential: np.ndarray

    def calL(self, f):
        c = self.conductance
        flux = c * (np.roll(f, -1) - f)
        return (flux - np.roll(flux, 1)) / self.mass

    def matrix(self):
        m = self.mass.size
        c = self.conductance
        b = np.zeros((m, m))
        idx = np.arange(m)
        nxt = (idx + 1) % m
        b[idx, idx] -= c + np.roll(c, 1)
        b[idx, nxt] += c
        b[nxt, idx] += c
        b[idx, idx] += self.mass * self.potential
        return b


def flux_system(grid):
    """Weighted symmetric assembly for curves and (zonal) profiles."""
    surface = grid.surface
    if isinstance(surface, CurveSurface):
        pts = grid.points
        density = gaussian_weight
        potential = grid.A2 + 1.0
    elif isinstance(surface, RevolutionSurface):
        ma = grid.meta["angular_nodes"]
        pts = grid.points[::ma]
        pts = np.column_stack([np.linalg.norm(pts[:, :-1], axis=1), pts[:, -1]])
        n = surface.dim
        area = sphere_area(n - 1)

        def density(p):
            return area * p[:, 0] ** (n - 1) * (2.0 * math.pi) ** (-0.5 * (n + 1)) * np.exp(-0.5 * np.sum(p * p, axis=1))
        potential = grid.A2[::ma] + 1.0
    else:
        raise UnsupportedSurface("spectra are assembled for curves and revolution profiles only")
    nxt = np.roll(pts, -1, axis=0)
    length = np.linalg.norm(nxt - pts, axis=1)
    mid = 0.5 * (pts + nxt)
    cond = density(mid) / length
    mass = density(pts) * 0.5 * (length + np.roll(length, 1))
    return FluxSystem(mass, cond, potential)


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    resolution: int
    order: int = 2
    mass: np.ndarray = field(default=None, repr=False)

    def multiplicities(self, rtol=1e-8):
        """Group numerically equal eigenvalues: list of (value, count)."""
        out = []
        scale = max(1.0, float(np.max(np.abs(self.eigenvalues))))
        for v in self.eigenvalues:
            if out and abs(out[-1][0] - v) <= rtol * scale:
                out[-1] = (out[-1][0], out[-1][1] + 1)
            else:
                out.append((float(v), 1))
        return out


def _curve_for(surface, grid):
    surface = make_surface(surface)
    if isinstance(surface, RoundSurface) and surface.compact and surface.dim == 1:
        size = grid.size if grid is not None else 1024
        curve = make_surface(circle(surface.radius, size))
        return curve, curve.grid()
    if grid is None:
        grid = quadrature_grid(surface)
    return surface, grid


def profile_spectrum(surface, grid=None, count=8):
    """Top ``count`` eigenpairs of the discretized L, in descending order.

    Eigenfunctions are normalized to unit weighted L^2 norm, the top one
    is returned positive.
    """
    surface, grid = _curve_for(surface, grid)
    system = flux_system(grid)
    m = system.mass.size
    if count > m // 4:
        raise ValueError(f"count must be <= {m // 4} for {m} nodes")
    s = 1.0 / np.sqrt(system.mass)
    sym = system.matrix() * s[:, None] * s[None, :]
    try:
        vals, vecs = eigh(sym, subset_by_index=[m - count, m - 1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    funcs = (vecs[:, order] * s[:, None]).T
    for i in range(count):
        if funcs[i] @ system.mass < 0:
            funcs[i] = -funcs[i]
    return SpectrumResult(vals, funcs, m, 2, system.mass)


def rayleigh_quotient(grid, f, op=None):
    vals = as_values(f)
    den = grid.integrate(vals * vals)
    if not den > 1e-300:
        raise DegenerateTrial("trial function has zero weighted norm")
    lf = op(vals) if op is not None else apply_L(grid, vals)
    return grid.integrate(vals * lf) / den


@dataclass(frozen=True)
class DeltaEstimate:
    estimate: float
    best: str
    quotients: dict


def rayleigh_delta(surface, grid, trials=None, lam=None, include_spectrum=True):
    """Largest Rayleigh quotient int f Lf gamma / int f^2 gamma over trials.

    The default family is the constant, <v,N> for each coordinate v, and
    H - lambda when ``lam`` is given; curves and profiles add the top
    discrete eigenvalue.
    """
    surface = make_surface(surface)
    grid.check_surface(surface)
    family = {}
    if trials is None:
        family["const"] = constant_field(grid)
        for i in range(grid.ambient):
            e = np.zeros(grid.ambient)
            e[i] = 1.0
            family[f"<e{i},N>"] = linear_field(grid, e)
        if lam is not None:
            family["H-lambda"] = FieldSamples(grid.H - lam)
    else:
        for i, t in enumerate(trials):
            family[getattr(t, "name", "") or f"trial{i}"] = t
    if not family:
        raise DegenerateTrial("empty trial family")
    quotients = {}
    for name, f in family.items():
        vals = as_values(f)
        if grid.integrate(vals * vals) <= 1e-300:
            if trials is not None:
                raise DegenerateTrial(f"trial {name} has zero weighted norm")
            continue
        quotients[name] = rayleigh_quotient(grid, vals)
    if include_spectrum and isinstance(surface, (CurveSurface, RevolutionSurface)):
        quotients["top eigenvalue"] = float(profile_spectrum(surface, grid, 1).eigenvalues[0])
    best = max(quotients, key=quotients.get)
    return DeltaEstimate(quotients[best], best, quotients)


# --------------------------------------------------------------------------
# identities

IDENTITIES = ("LH", "LA", "LINEAR", "ROTATION", "PRODUCT", "SIMONS", "SOLITON_X2",
              "INT_X2", "INT_X4", "INT_VAR", "IBP", "ROT_MEAN")
NEEDS_LAMBDA = {"LH", "LA", "LINEAR", "ROTATION", "SIMONS", "SOLITON_X2", "INT_X2", "INT_X4", "INT_VAR"}


@dataclass(frozen=True)
class IdentityReport:
    identity: str
    max_residual: float
    l2_residual: float
    grid: int
    kind: str = "pointwise"

    def as_dict(self):
        return {"identity": self.identity, "max_residual": self.max_residual,
                "l2_residual": self.l2_residual, "grid": self.grid}


def _pointwise(name, grid, res):
    res = np.asarray(res, dtype=float)
    l2 = math.sqrt(grid.integrate(res * res) / grid.perimeter)
    return IdentityReport(name, float(np.max(np.abs(res))), l2, grid.size, "pointwise")


def _integral(name, grid, value):
    return IdentityReport(name, abs(float(value)), abs(float(value)), grid.size, "integral")


def require_lambda_surface(surface, lam, grid, tol=LAMBDA_TOL):
    stats = lambda_residual(surface, lam, grid)
    if stats.max > tol:
        raise NotLambdaSurface(f"H - <x,N> - lambda reaches {stats.max:.3g} > {tol:g}")
    return stats


def check_identity(surface, lam, identity, grid, v=None, w=None, Q=None):
    """Residual of one of the operator identities on ``grid``.

    Pointwise identities report max and weighted-L2 residuals; integral
    identities report the absolute scalar defect in both fields.
    """
    surface = make_surface(surface)
    grid.check_surface(surface)
    identity = identity.upper()
    if identity not in IDENTITIES:
        raise ValueError(f"unknown identity {identity!r}")
    if identity in NEEDS_LAMBDA:
        require_lambda_surface(surface, lam, grid)
    d, n = grid.ambient, grid.n
    v = default_vector(d) if v is None else np.asarray(v, dtype=float)
    w = default_vector(d, 1) if w is None else np.asarray(w, dtype=float)
    Q = default_generator(d) if Q is None else check_antisymmetric(Q, d)
    H, A2, x2, xn = grid.H, grid.A2, grid.r2, grid.support

    if identity == "LH":
        return _pointwise(identity, grid, apply_L(grid, H) - (2.0 * H + lam * A2))
    if identity == "LA":
        return _pointwise(identity, grid, _la_residual(grid, lam))
    if identity == "LINEAR":
        f = linear_field(grid, v)
        return _pointwise(identity, grid, apply_L(grid, f) - f.values)
    if identity == "ROTATION":
        return _pointwise(identity, grid, apply_L(grid, rotation_field(grid, Q)))
    if identity == "PRODUCT":
        f, g = linear_field(grid, v), coordinate_field(grid, w)
        fg = f.values * g.values
        rhs = (f.values * apply_L(grid, g) + g.values * apply_L(grid, f) + 2.0 * grad_dot(grid, f, g)
               - A2 * fg - fg)
        return _pointwise(identity, grid, apply_L(grid, fg) - rhs)
    if identity == "SIMONS":
        return _pointwise(identity, grid, _simons_residual(grid, lam))
    if identity == "SOLITON_X2":
        return _pointwise(identity, grid, 0.5 * apply_calL(grid, x2) - (n - x2 - lam * xn))
    if identity == "INT_X2":
        return _integral(identity, grid, grid.integrate(n - x2 - lam * H + lam * lam))
    if identity == "INT_X4":
        hl = H - lam
        return _integral(identity, grid, grid.integrate((n + 2) * x2 - x2 * x2 - lam * x2 * hl - 2.0 * hl * hl))
    if identity == "INT_VAR":
        hl = H - lam
        lhs = grid.integrate((x2 - n) ** 2)
        rhs = grid.integrate(2.0 * n + hl * (-2.0 * H + lam * (n - x2)))
        return _integral(identity, grid, lhs - rhs)
    if identity == "IBP":
        f, g = linear_field(grid, v), coordinate_field(grid, w)
        lhs = grid.integrate(f.values * apply_calL(grid, g))
        rhs = -grid.integrate(grad_dot(grid, f, g))
        return _integral(identity, grid, lhs - rhs)
    # ROT_MEAN
    return _integral(identity, grid, grid.integrate(rotation_field(grid, Q).values))


def _la_residual(grid, lam):
    surface = grid.surface
    if isinstance(surface, CurveSurface):
        kappa = grid.principal[:, 0]
        # A = -kappa: L(-kappa) = -2 kappa - lambda kappa^2
        return -apply_L(grid, kappa) - (-2.0 * kappa - lam * kappa ** 2)
    if isinstance(surface, RoundSurface):
        # A is constant in a parallel principal frame, so L acts entrywise
        a = -grid.principal
        return np.max(np.abs((grid.A2[:, None] + 1.0) * a - (2.0 * a - lam * a * a)), axis=1)
    raise UnsupportedSurface("LA is checked on curves and round surfaces")


def _simons_residual(grid, lam):
    surface = grid.surface
    if isinstance(surface, CurveSurface):
        kappa = grid.principal[:, 0]
        if np.min(kappa) * np.max(kappa) <= 0:
            raise UnsupportedSurface("SIMONS on curves needs curvature of one sign")
        norm = np.abs(kappa)
        # grad A and grad |A| agree for 1x1 A of constant sign
        return norm * apply_L(grid, norm) - (2.0 * grid.A2 - lam * grid.A3)
    if isinstance(surface, RoundSurface):
        norm = np.sqrt(grid.A2)
        # A is parallel: grad A = 0 and |A| is constant
        return norm * (grid.A2 + 1.0) * norm - (2.0 * grid.A2 - lam * grid.A3)
    raise UnsupportedSurface("SIMONS is checked on curves and round surfaces")
