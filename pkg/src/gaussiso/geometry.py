"""Candidate hypersurfaces, pointwise curvature and quadrature grids.

Conventions: the normal N points away from the enclosed solid (away from
the slab for strips), principal curvatures are positive on convex pieces,
the shape operator is S = dN restricted to the tangent space, the second
fundamental form is A = -S and H = tr S = -tr A.  All surface integrals use
the ambient Gaussian weight (2 pi)^(-(n+1)/2) exp(-|x|^2 / 2).
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.hermite_e import hermegauss
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from . import _kernels
from .errors import (
    AdjacencyUnavailable,
    ChartOutOfRange,
    GridMismatch,
    NonMonotoneProfile,
    NonPositiveRadius,
    NotSymmetric,
    OpenCurve,
    ResolutionTooLow,
    UnsupportedSurface,
)
from .special import sphere_area

MIN_RESOLUTION = 8
MAX_HERMITE = 16


def gaussian_weight(points):
    """Ambient Gaussian density at each row of ``points``."""
    d = points.shape[-1]
    return (2.0 * math.pi) ** (-0.5 * d) * np.exp(-0.5 * np.einsum("...i,...i->...", points, points))


# --------------------------------------------------------------------------
# surface specifications

@dataclass(frozen=True)
class Sphere:
    """Round sphere rS^n in R^(n+1)."""
    radius: float
    dim: int
    complement: bool = False


@dataclass(frozen=True)
class Cylinder:
    """Round cylinder rS^k x R^(n-k) in R^(n+1); k=0 gives two hyperplanes."""
    radius: float
    k: int
    dim: int
    complement: bool = False


@dataclass(frozen=True)
class Strip:
    """The hyperplanes {x_1 = +-t} in R^ambient_dim, bounding the slab |x_1| <= t."""
    half_width: float
    ambient_dim: int
    complement: bool = False


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid with semi-axes ``axes`` (one per ambient coordinate)."""
    axes: tuple


@dataclass(frozen=True, eq=False)
class PlanarCurve:
    """Closed curve in R^2 given by a polyline whose last point repeats the first.

    ``order`` selects the centered difference stencil (2, 4, 6 or 8) used for
    tangents and curvature.  ``curvature`` optionally supplies exact nodal
    curvature (one value per distinct node), used instead of differencing
    whenever the curve is evaluated at its own nodes.
    """
    points: np.ndarray
    symmetric: bool = False
    order: int = 4
    curvature: np.ndarray = None

    @classmethod
    def periodic(cls, samples, symmetric=False, order=4, curvature=None):
        """Build from periodic samples that do not repeat the first point."""
        samples = np.asarray(samples, dtype=float)
        return cls(np.vstack([samples, samples[:1]]), symmetric, order, curvature)


@dataclass(frozen=True, eq=False)
class RevolutionProfile:
    """Closed profile curve (rho, z), rho > 0, rotated about the z axis in R^(dim+1)."""
    points: np.ndarray
    dim: int
    order: int = 4

    @classmethod
    def periodic(cls, samples, dim, order=4):
        samples = np.asarray(samples, dtype=float)
        return cls(np.vstack([samples, samples[:1]]), dim, order)


@dataclass(frozen=True)
class CurvaturePoint:
    """Pointwise second-order geometry at one point of a hypersurface."""
    position: np.ndarray
    normal: np.ndarray
    principal: np.ndarray
    shape: np.ndarray

    @property
    def H(self):
        return float(np.sum(self.principal))

    @property
    def A_norm2(self):
        return float(np.sum(self.principal ** 2))

    @property
    def A_op2(self):
        return float(np.max(self.principal ** 2)) if self.principal.size else 0.0

    def project(self, v):
        """Tangential component of ``v``."""
        v = np.asarray(v, dtype=float)
        return v - np.dot(self.normal, v) * self.normal


# --------------------------------------------------------------------------
# sphere node sets

@dataclass(frozen=True)
class SphereNodes:
    """Product quadrature on the unit sphere S^n.

    ``points`` are unit vectors, ``weights`` integrate against surface
    measure, ``antipode[i]`` indexes the node -points[i].  For n = 2 the
    nodes are ``rings`` latitude rings of ``per_ring`` nodes each.
    """
    n: int
    q: int
    points: np.ndarray
    weights: np.ndarray
    antipode: np.ndarray
    lmax: int

    @property
    def size(self):
        return self.points.shape[0]


def sphere_nodes(n, q):
    """Nodes on S^n: 2 points for n=0, 2q equispaced angles for n=1, and
    Gauss-Jacobi latitudes times S^(n-1) nodes recursively for n >= 2.
    Polynomials of degree < 2q are integrated exactly."""
    if n == 0:
        pts = np.array([[1.0], [-1.0]])
        return SphereNodes(0, q, pts, np.ones(2), np.array([1, 0]), 0)
    if n == 1:
        m = 2 * q
        phi = 2.0 * math.pi * np.arange(m) / m
        pts = np.column_stack([np.cos(phi), np.sin(phi)])
        anti = (np.arange(m) + m // 2) % m
        return SphereNodes(1, q, pts, np.full(m, 2.0 * math.pi / m), anti, q - 1)
    base = sphere_nodes(n - 1, q)
    a = 0.5 * (n - 2)
    t, wt = roots_jacobi(q, a, a)
    s = np.sqrt(1.0 - t * t)
    pts = np.concatenate([np.column_stack([s[i] * base.points, np.full(base.size, t[i])]) for i in range(q)])
    w = np.concatenate([wt[i] * base.weights for i in range(q)])
    ring = np.repeat(np.arange(q), base.size)
    within = np.tile(np.arange(base.size), q)
    anti = (q - 1 - ring) * base.size + base.antipode[within]
    return SphereNodes(n, q, pts, w, anti, q - 1)


def _q_for(resolution, n):
    return max(2, round((resolution / 2.0) ** (1.0 / max(n, 1))))


# --------------------------------------------------------------------------
# graphs used for nodal-domain flood fill

def _cycle_graph(m):
    i = np.arange(m)
    rows = np.concatenate([i, i])
    cols = np.concatenate([(i + 1) % m, (i - 1) % m])
    return sp.csr_matrix((np.ones(2 * m), (rows, cols)), shape=(m, m))


def _path_graph(m):
    i = np.arange(m - 1)
    rows = np.concatenate([i, i + 1])
    cols = np.concatenate([i + 1, i])
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(m, m))


def _sphere_graph(nodes):
    if nodes.n == 0:
        return sp.csr_matrix((2, 2))
    if nodes.n == 1:
        return _cycle_graph(nodes.size)
    if nodes.n != 2:
        raise AdjacencyUnavailable("adjacency is only built for spheres of dimension <= 2")
    q, m = nodes.q, 2 * nodes.q
    # rings are linked to their latitude neighbours; the polar rings are
    # already connected around the pole by their own cycle, and linking
    # opposite nodes across the pole would jump over the pole's zero set
    g = sp.kron(_path_graph(q), sp.identity(m)) + sp.kron(sp.identity(q), _cycle_graph(m))
    return g.tocsr()


def _kron_sum(graphs):
    out = graphs[0]
    for g in graphs[1:]:
        out = sp.kron(out, sp.identity(g.shape[0])) + sp.kron(sp.identity(out.shape[0]), g)
    return out.tocsr()


# --------------------------------------------------------------------------
# quadrature grid

@dataclass(eq=False)
class QuadratureGrid:
    """Nodes of a surface with Gaussian-weighted measure and curvature data.

    ``weights`` satisfy sum(weights * f) ~ int_Sigma f gamma.  ``shape`` holds
    the ambient shape operator S at each node, so A = -S on the tangent space.
    """
    surface: "Surface"
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    principal: np.ndarray
    shape: np.ndarray
    antipode: np.ndarray = None
    operator: object = None
    graph: object = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def n(self):
        return self.surface.dim

    @property
    def ambient(self):
        return self.points.shape[1]

    @cached_property
    def H(self):
        return self.principal.sum(axis=1)

    @cached_property
    def A2(self):
        return np.sum(self.principal ** 2, axis=1)

    @cached_property
    def A_op2(self):
        return np.max(self.principal ** 2, axis=1)

    @cached_property
    def A3(self):
        """<A^2, A> = sum of cubes of the entries of A = -(sum of kappa_i^3)."""
        return -np.sum(self.principal ** 3, axis=1)

    @cached_property
    def support(self):
        """<x, N> at each node."""
        return np.einsum("ij,ij->i", self.points, self.normals)

    @cached_property
    def r2(self):
        return np.einsum("ij,ij->i", self.points, self.points)

    @property
    def perimeter(self):
        return float(self.weights.sum())

    def integrate(self, values):
        return float(self.weights @ np.asarray(values, dtype=float))

    def project(self, v):
        """Tangential component of the constant vector ``v`` at every node."""
        v = np.asarray(v, dtype=float)
        return v[None, :] - (self.normals @ v)[:, None] * self.normals

    def check_surface(self, surface):
        if surface is None or surface is self.surface:
            return
        if not _same_surface(surface, self.surface):
            raise GridMismatch("grid was built for a different surface")

    def adjacency(self):
        if self.graph is None:
            raise AdjacencyUnavailable(f"no node adjacency for {self.surface.kind}")
        g = self.graph.tocsr()
        return g.indptr.astype(np.int64), g.indices.astype(np.int64)


def _same_surface(a, b):
    sa = a.spec if isinstance(a, Surface) else a
    sb = b.spec if isinstance(b, Surface) else b
    if sa is sb:
        return True
    if type(sa) is not type(sb):
        return False
    if isinstance(sa, (PlanarCurve, RevolutionProfile)):
        same = np.array_equal(sa.points, sb.points) and sa.order == sb.order
        ka, kb = getattr(sa, "curvature", None), getattr(sb, "curvature", None)
        if (ka is None) != (kb is None) or (ka is not None and not np.array_equal(ka, kb)):
            return False
        return same and getattr(sa, "dim", None) == getattr(sb, "dim", None)
    return sa == sb


# --------------------------------------------------------------------------
# surfaces

class Surface:
    """Validated surface handle."""
    kind = "surface"
    dim = 0
    compact = True
    symmetric = False

    def __init__(self, spec):
        self.spec = spec

    def curvature_at(self, param):
        raise NotImplementedError

    def grid(self, resolution):
        raise NotImplementedError

    def describe(self):
        return format_spec(self.spec)

    def __repr__(self):
        return f"<{type(self).__name__} {self.describe()}>"


class RoundSurface(Surface):
    """rS^k x R^(n-k); covers spheres (k=n), cylinders and strips (k=0)."""

    def __init__(self, spec, radius, k, dim, complement):
        super().__init__(spec)
        if not radius > 0:
            raise NonPositiveRadius(f"radius must be positive, got {radius}")
        if not (0 <= k <= dim):
            raise ValueError(f"need 0 <= k <= n, got k={k}, n={dim}")
        self.radius = float(radius)
        self.k = int(k)
        self.dim = int(dim)
        self.complement = bool(complement)
        self.sign = -1.0 if complement else 1.0
        self.compact = self.k == self.dim
        self.symmetric = True
        self.kind = "sphere" if self.compact else ("strip" if self.k == 0 else "cylinder")

    # closed forms --------------------------------------------------------
    @property
    def principal_values(self):
        return self.sign * np.concatenate([np.full(self.k, 1.0 / self.radius), np.zeros(self.dim - self.k)])

    @property
    def lam(self):
        """The lambda for which this surface satisfies H = <x,N> + lambda."""
        return self.sign * (self.k / self.radius - self.radius)

    def closed_form_perimeter(self):
        r, k = self.radius, self.k
        return sphere_area(k) * r ** k * (2.0 * math.pi) ** (-0.5 * (k + 1)) * math.exp(-0.5 * r * r)

    # pointwise ------------------------------------------------------------
    def _split(self, param):
        k1 = self.k + 1
        if isinstance(param, tuple):
            u, y = param
        else:
            arr = np.asarray(param, dtype=float).ravel()
            u, y = arr[:k1], arr[k1:]
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float)) if self.dim > self.k else np.zeros(0)
        if u.size != k1 or y.size != self.dim - self.k:
            raise ChartOutOfRange(f"expected a unit vector in R^{k1} and a point of R^{self.dim - self.k}")
        if abs(np.linalg.norm(u) - 1.0) > 1e-9 or not np.all(np.isfinite(y)):
            raise ChartOutOfRange("sphere coordinate must be a unit vector")
        return u, y

    def curvature_at(self, param):
        u, y = self._split(param)
        d = self.dim + 1
        x = np.concatenate([self.radius * u, y])
        nrm = self.sign * np.concatenate([u, np.zeros(d - u.size)])
        s = np.zeros((d, d))
        k1 = self.k + 1
        s[:k1, :k1] = self.sign * (np.eye(k1) - np.outer(u, u)) / self.radius
        return CurvaturePoint(x, nrm, self.principal_values.copy(), s)

    def grid(self, resolution):
        if resolution < MIN_RESOLUTION:
            raise ResolutionTooLow(f"resolution {resolution} < {MIN_RESOLUTION}")
        n, k, r = self.dim, self.k, self.radius
        if n == 0:
            raise UnsupportedSurface("the point pair {-t, t} in R has closed forms only")
        q = _q_for(resolution, n)
        if k == n and n == 1:
            q = max(2, resolution // 2)
        sph = sphere_nodes(k, q)
        flat = n - k
        qh = min(max(q, 4), MAX_HERMITE)
        if k == 0:
            qh = min(max(round((resolution / 2.0) ** (1.0 / flat)), 4), MAX_HERMITE)
        yh, wh = hermegauss(qh) if flat else (np.zeros(0), np.zeros(0))
        # tensor grid: sphere index slowest, then each flat axis
        if flat:
            mesh = np.meshgrid(*([yh] * flat), indexing="ij")
            ys = np.column_stack([m.ravel() for m in mesh])
            wy = np.ones(ys.shape[0])
            wmesh = np.meshgrid(*([wh] * flat), indexing="ij")
            for wm in wmesh:
                wy = wy * wm.ravel()
        else:
            ys = np.zeros((1, 0))
            wy = np.ones(1)
        ms, my = sph.size, ys.shape[0]
        u = np.repeat(sph.points, my, axis=0)
        y = np.tile(ys, (ms, 1))
        pts = np.column_stack([r * u, y])
        d = n + 1
        nrm = self.sign * np.column_stack([u, np.zeros((u.shape[0], flat))])
        # Gaussian factor: exp(-|y|^2/2) is already inside the Hermite weights
        w = (2.0 * math.pi) ** (-0.5 * d) * math.exp(-0.5 * r * r) * r ** k * np.repeat(sph.weights, my) * np.tile(wy, ms)
        m = pts.shape[0]
        principal = np.tile(self.principal_values, (m, 1))
        shape = np.zeros((m, d, d))
        k1 = k + 1
        shape[:, :k1, :k1] = self.sign * (np.eye(k1)[None] - u[:, :, None] * u[:, None, :]) / r
        # antipode: (u, y) -> (-u, -y); Hermite nodes are symmetric
        if flat:
            idx = np.arange(my).reshape([qh] * flat)
            flip = idx[tuple(slice(None, None, -1) for _ in range(flat))].ravel()
        else:
            flip = np.zeros(1, dtype=int)
        anti = (sph.antipode[:, None] * my + flip[None, :]).ravel()
        op = ProductSpectralOperator(sph, r, yh, wh, flat)
        try:
            graphs = [_sphere_graph(sph)] + [_path_graph(qh)] * flat
            graph = _kron_sum(graphs)
        except AdjacencyUnavailable:
            graph = None
        return QuadratureGrid(self, pts, nrm, w, principal, shape, anti, op, graph,
                              meta={"q": q, "hermite": qh, "lmax": sph.lmax})


class EllipsoidSurface(Surface):
    kind = "ellipsoid"

    def __init__(self, spec):
        super().__init__(spec)
        axes = np.asarray(spec.axes, dtype=float)
        if axes.size < 2:
            raise ValueError("an ellipsoid needs at least two semi-axes")
        if np.any(axes <= 0):
            raise NonPositiveRadius("semi-axes must be positive")
        self.axes = axes
        self.dim = axes.size - 1
        self.symmetric = True

    def _geometry(self, u):
        """Positions, normals, principal curvatures and shape operators for
        unit vectors ``u`` (rows) under x = axes * u."""
        a = self.axes
        x = u * a
        g = x / a ** 2
        gn = np.linalg.norm(g, axis=1)
        nrm = g / gn[:, None]
        d = a.size
        proj = np.eye(d)[None] - nrm[:, :, None] * nrm[:, None, :]
        shape = proj @ np.diag(1.0 / a ** 2) @ proj / gn[:, None, None]
        vals, vecs = np.linalg.eigh(shape)
        # drop the eigenvalue whose eigenvector is the normal
        along = np.abs(np.einsum("mij,mi->mj", vecs, nrm))
        drop = np.argmax(along, axis=1)
        keep = np.ones_like(vals, dtype=bool)
        keep[np.arange(vals.shape[0]), drop] = False
        principal = vals[keep].reshape(vals.shape[0], d - 1)
        return x, nrm, principal, shape, gn

    def curvature_at(self, param):
        u = np.asarray(param, dtype=float).ravel()
        if u.size != self.axes.size or abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ChartOutOfRange("ellipsoid chart parameter must be a unit vector in R^(n+1)")
        x, nrm, principal, shape, _ = self._geometry(u[None, :])
        return CurvaturePoint(x[0], nrm[0], principal[0], shape[0])

    def grid(self, resolution):
        if resolution < MIN_RESOLUTION:
            raise ResolutionTooLow(f"resolution {resolution} < {MIN_RESOLUTION}")
        n = self.dim
        q = max(2, resolution // 2) if n == 1 else _q_for(resolution, n)
        sph = sphere_nodes(n, q)
        x, nrm, principal, shape, gn = self._geometry(sph.points)
        # area element of u -> axes * u: prod(axes) * |u / axes|
        jac = np.prod(self.axes) * gn
        w = sph.weights * jac * gaussian_weight(x)
        op = None
        if n == 1:
            a1, a2 = self.axes
            m = sph.size
            dphi = 2.0 * math.pi / m
            phi = 2.0 * math.pi * np.arange(m) / m
            speed = np.hypot(a1 * np.sin(phi), a2 * np.cos(phi))
            dspeed = (a1 * a1 - a2 * a2) * np.sin(phi) * np.cos(phi) / speed
            tangent = np.column_stack([-a1 * np.sin(phi), a2 * np.cos(phi)]) / speed[:, None]
            op = CurveOperator(x, speed * dphi, dspeed * dphi * dphi, tangent, order=4)
        try:
            graph = _sphere_graph(sph)
        except AdjacencyUnavailable:
            graph = None
        return QuadratureGrid(self, x, nrm, w, principal, shape, sph.antipode, op, graph, meta={"q": q})


# --------------------------------------------------------------------------
# periodic finite differences in the node index

# central stencil weights for offsets 1, 2, ... (antisymmetric first, symmetric second)
_D1 = {
    2: (1 / 2,),
    4: (2 / 3, -1 / 12),
    6: (3 / 4, -3 / 20, 1 / 60),
    8: (4 / 5, -1 / 5, 4 / 105, -1 / 280),
}
_D2 = {
    2: (-2.0, 1.0),
    4: (-5 / 2, 4 / 3, -1 / 12),
    6: (-49 / 18, 3 / 2, -3 / 20, 1 / 90),
    8: (-205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560),
}
ORDERS = tuple(_D1)


def periodic_d1(f, order):
    out = np.zeros_like(f, dtype=float)
    for j, c in enumerate(_D1[order], start=1):
        out += c * (np.roll(f, -j, axis=0) - np.roll(f, j, axis=0))
    return out


def periodic_d2(f, order):
    coef = _D2[order]
    out = coef[0] * np.asarray(f, dtype=float)
    for j, c in enumerate(coef[1:], start=1):
        out = out + c * (np.roll(f, -j, axis=0) + np.roll(f, j, axis=0))
    return out


@dataclass(frozen=True)
class CurveFrame:
    """Finite-difference geometry of a periodic planar polyline."""
    points: np.ndarray
    speed: np.ndarray      # |P'| per unit node index
    dspeed: np.ndarray     # d|P'|/du
    tangent: np.ndarray
    normal: np.ndarray     # right normal (exterior for counterclockwise curves)
    curvature: np.ndarray  # signed, positive on convex counterclockwise arcs


def curve_frame(points, order=4):
    d1 = periodic_d1(points, order)
    d2 = periodic_d2(points, order)
    speed = np.linalg.norm(d1, axis=1)
    tangent = d1 / speed[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    curvature = cross / speed ** 3
    dspeed = np.einsum("ij,ij->i", d1, d2) / speed
    return CurveFrame(points, speed, dspeed, tangent, normal, curvature)


def signed_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def resample_periodic(points, count, symmetric=False):
    """Resample a periodic polyline at ``count`` points equally spaced in
    arclength of its periodic cubic spline interpolant."""
    closed = np.vstack([points, points[:1]])
    chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(chord)])
    spline = CubicSpline(s, closed, bc_type="periodic")
    # refine arclength of the spline itself
    fine = np.linspace(0.0, s[-1], 16 * max(count, points.shape[0]) + 1)
    dp = spline(fine, 1)
    speed = np.linalg.norm(dp, axis=1)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(fine))])
    total = arc[-1]
    if symmetric:
        if count % 2:
            raise NotSymmetric("symmetric resampling needs an even node count")
        half = count // 2
        target = total * np.arange(half) / count
        first = spline(np.interp(target, arc, fine))
        return np.vstack([first, -first])
    target = total * np.arange(count) / count
    return spline(np.interp(target, arc, fine))


class CurveSurface(Surface):
    kind = "curve"
    dim = 1

    def __init__(self, spec):
        super().__init__(spec)
        pts = np.asarray(spec.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise ValueError("curve points must be an (N, 2) array with N >= 4")
        span = np.max(np.ptp(pts, axis=0))
        if np.linalg.norm(pts[-1] - pts[0]) > 1e-9 * max(span, 1.0):
            raise OpenCurve("first and last points of the polyline differ")
        pts = pts[:-1]
        kappa = None
        if getattr(spec, "curvature", None) is not None:
            kappa = np.asarray(spec.curvature, dtype=float)
            if kappa.shape != (pts.shape[0],):
                raise ValueError("curvature needs one value per distinct node")
        if signed_area(pts) < 0:
            pts = pts[::-1].copy()
            if kappa is not None:
                kappa = -kappa[::-1]
        self.exact_curvature = kappa
        if spec.order not in ORDERS:
            raise ValueError(f"difference order must be one of {ORDERS}")
        self.order = spec.order
        self.symmetric = bool(spec.symmetric)
        if self.symmetric:
            m = pts.shape[0]
            if m % 2 or np.max(np.abs(pts + np.roll(pts, m // 2, axis=0))) > 1e-8 * max(span, 1.0):
                raise NotSymmetric("curve flagged symmetric but node j + N/2 is not -node j")
        self.samples = pts

    @property
    def length(self):
        closed = np.vstack([self.samples, self.samples[:1]])
        return float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))

    def nodes(self, resolution=None):
        if resolution is None or resolution == self.samples.shape[0]:
            return self.samples
        return resample_periodic(self.samples, resolution, self.symmetric)

    def curvature_at(self, param):
        s = float(param)
        frame = curve_frame(self.samples, self.order)
        if self.exact_curvature is not None:
            frame = replace(frame, curvature=self.exact_curvature)
        arc = np.concatenate([[0.0], np.cumsum(frame.speed)])
        total = arc[-1]
        if not 0.0 <= s < total:
            raise ChartOutOfRange(f"arclength {s} outside [0, {total})")
        j = int(np.searchsorted(arc, s, side="right") - 1)
        t = (s - arc[j]) / frame.speed[j]
        j1 = (j + 1) % self.samples.shape[0]
        x = (1 - t) * frame.points[j] + t * frame.points[j1]
        nrm = (1 - t) * frame.normal[j] + t * frame.normal[j1]
        nrm /= np.linalg.norm(nrm)
        kappa = (1 - t) * frame.curvature[j] + t * frame.curvature[j1]
        tan = np.array([-nrm[1], nrm[0]])
        return CurvaturePoint(x, nrm, np.array([kappa]), kappa * np.outer(tan, tan))

    def grid(self, resolution=None):
        if resolution is not None and resolution < MIN_RESOLUTION:
            raise ResolutionTooLow(f"resolution {resolution} < {MIN_RESOLUTION}")
        pts = self.nodes(resolution)
        if pts.shape[0] < MIN_RESOLUTION:
            raise ResolutionTooLow("curve has fewer than 8 nodes")
        kappa = self.exact_curvature if pts is self.samples else None
        return curve_grid(self, pts, self.order, kappa)


def curve_grid(surface, pts, order, curvature=None):
    frame = curve_frame(pts, order)
    if curvature is not None:
        frame = replace(frame, curvature=np.asarray(curvature, dtype=float))
    m = pts.shape[0]
    w = frame.speed * gaussian_weight(pts)
    principal = frame.curvature[:, None]
    shape = frame.curvature[:, None, None] * frame.tangent[:, :, None] * frame.tangent[:, None, :]
    anti = (np.arange(m) + m // 2) % m if surface.symmetric else None
    op = CurveOperator(pts, frame.speed, frame.dspeed, frame.tangent, order)
    return QuadratureGrid(surface, pts, frame.normal, w, principal, shape, anti, op,
                          _cycle_graph(m), meta={"order": order})


class RevolutionSurface(Surface):
    kind = "revolution"
    angular_q = 8

    def __init__(self, spec):
        super().__init__(spec)
        pts = np.asarray(spec.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise ValueError("profile points must be an (N, 2) array with N >= 4")
        if spec.dim < 2:
            raise ValueError("a surface of revolution needs dimension >= 2")
        span = np.max(np.ptp(pts, axis=0))
        if np.linalg.norm(pts[-1] - pts[0]) > 1e-9 * max(span, 1.0):
            raise OpenCurve("profile is not closed")
        pts = pts[:-1]
        if np.any(pts[:, 0] <= 0):
            raise NonPositiveRadius("profile must stay at positive distance from the axis")
        if _kernels.polyline_self_intersects(np.ascontiguousarray(pts)):
            raise NonMonotoneProfile("profile curve intersects itself")
        if signed_area(pts) < 0:
            pts = pts[::-1].copy()
        self.samples = pts
        self.dim = int(spec.dim)
        self.order = spec.order

    def curvature_at(self, param):
        s, omega = param
        omega = np.asarray(omega, dtype=float).ravel()
        if omega.size != self.dim or abs(np.linalg.norm(omega) - 1.0) > 1e-9:
            raise ChartOutOfRange("angular coordinate must be a unit vector in R^n")
        prof = CurveSurface(PlanarCurve.periodic(self.samples, order=self.order)).curvature_at(s)
        rho, z = prof.position
        nr, nz = prof.normal
        k1 = prof.principal[0]
        k2 = nr / rho
        x = np.concatenate([rho * omega, [z]])
        nrm = np.concatenate([nr * omega, [nz]])
        tan = np.concatenate([-nz * omega, [nr]])
        d = self.dim + 1
        proj = np.zeros((d, d))
        proj[:-1, :-1] = np.eye(self.dim) - np.outer(omega, omega)
        shape = k1 * np.outer(tan, tan) + k2 * proj
        return CurvaturePoint(x, nrm, np.concatenate([[k1], np.full(self.dim - 1, k2)]), shape)

    def grid(self, resolution=None):
        if resolution is not None and resolution < MIN_RESOLUTION:
            raise ResolutionTooLow(f"resolution {resolution} < {MIN_RESOLUTION}")
        prof = self.samples if resolution is None else resample_periodic(self.samples, resolution)
        frame = curve_frame(prof, self.order)
        sph = sphere_nodes(self.dim - 1, self.angular_q)
        mp, ma = prof.shape[0], sph.size
        rho = np.repeat(prof[:, 0], ma)
        z = np.repeat(prof[:, 1], ma)
        om = np.tile(sph.points, (mp, 1))
        nr = np.repeat(frame.normal[:, 0], ma)
        nz = np.repeat(frame.normal[:, 1], ma)
        pts = np.column_stack([rho[:, None] * om, z])
        nrm = np.column_stack([nr[:, None] * om, nz])
        tan = np.column_stack([-nz[:, None] * om, nr])
        k1 = np.repeat(frame.curvature, ma)
        k2 = nr / rho
        d = self.dim + 1
        proj = np.zeros((pts.shape[0], d, d))
        proj[:, :-1, :-1] = np.eye(self.dim)[None] - om[:, :, None] * om[:, None, :]
        shape = k1[:, None, None] * tan[:, :, None] * tan[:, None, :] + k2[:, None, None] * proj
        principal = np.column_stack([k1] + [k2] * (self.dim - 1))
        w = np.repeat(frame.speed, ma) * rho ** (self.dim - 1) * np.tile(sph.weights, mp) * gaussian_weight(pts)
        op = RevolutionOperator(prof, frame, sph, self.dim, self.order)
        try:
            graph = _kron_sum([_cycle_graph(mp), _sphere_graph(sph)])
        except AdjacencyUnavailable:
            graph = None
        return QuadratureGrid(self, pts, nrm, w, principal, shape, None, op, graph,
                              meta={"profile_nodes": mp, "angular_nodes": ma, "order": self.order})


# --------------------------------------------------------------------------
# operators: Delta - <x, grad> on each grid family

def _sphere_zonal_coeffs(k, lmax, radius, eig):
    """Coefficients c_l so that sum_l eig(l) * (projection onto degree l)
    has kernel sum_l c_l P_l(<u,v>) with P_l Chebyshev (k=1) or Gegenbauer."""
    ell = np.arange(lmax + 1)
    vals = np.array([eig(l) for l in ell], dtype=float)
    if k == 1:
        norm = np.where(ell == 0, 1.0, 2.0) / (2.0 * math.pi)
        return vals * norm, 0.0
    alpha = 0.5 * (k - 1)
    norm = (2.0 * ell + k - 1) / (k - 1) / sphere_area(k)
    return vals * norm, alpha


class ProductSpectralOperator:
    """Exact action of Delta - <x, grad> on rS^k x R^(n-k) for band-limited data.

    The sphere factor uses zonal (Chebyshev/Gegenbauer) projections, the
    flat factors the Hermite expansion of the Ornstein-Uhlenbeck operator.
    """

    def __init__(self, sph, radius, yh, wh, flat):
        self.sph = sph
        self.radius = radius
        self.k = sph.n
        self.flat = flat
        self.yh = yh
        self.wh = wh

    @cached_property
    def sphere_matrix(self):
        k, r = self.k, self.radius
        if k == 0:
            return np.zeros((2, 2))
        coeffs, alpha = _sphere_zonal_coeffs(k, self.sph.lmax, r, lambda l: -l * (l + k - 1) / r ** 2)
        cos = np.clip(self.sph.points @ self.sph.points.T, -1.0, 1.0)
        kern = _kernels.zonal_sum(np.ascontiguousarray(cos), coeffs, alpha)
        mat = kern * self.sph.weights[None, :]
        # constants lie in the kernel; remove the rounding drift of the row sums
        mat[np.diag_indices_from(mat)] -= mat.sum(axis=1)
        return mat

    @cached_property
    def hermite_matrix(self):
        """Ornstein-Uhlenbeck matrix on the 1-D Hermite nodes."""
        y, w = self.yh, self.wh
        q = y.size
        h = np.zeros((q, q))
        h[0] = 1.0
        if q > 1:
            h[1] = y
        for j in range(1, q - 1):
            h[j + 1] = (y * h[j] - math.sqrt(j) * h[j - 1]) / math.sqrt(j + 1)
        eig = -np.arange(q, dtype=float)
        mat = (h.T * eig) @ (h * w[None, :]) / math.sqrt(2.0 * math.pi)
        mat[np.diag_indices_from(mat)] -= mat.sum(axis=1)
        return mat

    @cached_property
    def circle_multiplier(self):
        # equispaced circle nodes: the Laplacian is diagonal in Fourier space;
        # the Nyquist mode lies outside the band and is dropped
        m = self.sph.size
        l = np.fft.rfftfreq(m, 1.0 / m)
        mult = -(l / self.radius) ** 2
        if m % 2 == 0:
            mult[-1] = 0.0
        return mult

    def _sphere_part(self, g):
        if self.k == 1:
            spec = np.fft.rfft(g, axis=0)
            mult = self.circle_multiplier.reshape((-1,) + (1,) * (g.ndim - 1))
            return np.fft.irfft(spec * mult, n=g.shape[0], axis=0)
        return np.tensordot(self.sphere_matrix, g, axes=(1, 0))

    def calL(self, f):
        f = np.asarray(f, dtype=float)
        ms = self.sph.size
        qh = self.yh.size
        shape = (ms,) + (qh,) * self.flat
        g = f.reshape(shape)
        out = self._sphere_part(g)
        if self.flat:
            hm = self.hermite_matrix
            for ax in range(1, self.flat + 1):
                out = out + np.moveaxis(np.tensordot(hm, g, axes=(1, ax)), 0, ax)
        return out.reshape(f.shape)


class CurveOperator:
    """Finite-difference Delta - <x, grad> on a periodic planar curve."""

    def __init__(self, points, speed, dspeed, tangent, order):
        self.points = points
        self.speed = speed
        self.dspeed = dspeed
        self.tangent = tangent
        self.order = order
        self.xt = np.einsum("ij,ij->i", points, tangent)

    def ds(self, f):
        return periodic_d1(f, self.order) / self.speed

    def dss(self, f):
        d1 = periodic_d1(f, self.order)
        d2 = periodic_d2(f, self.order)
        return (d2 - (self.dspeed / self.speed) * d1) / self.speed ** 2

    def calL(self, f):
        f = np.asarray(f, dtype=float)
        return self.dss(f) - self.xt * self.ds(f)

    def gradient(self, f):
        return self.ds(f)[:, None] * self.tangent


class RevolutionOperator:
    """Delta - <x, grad> on a surface of revolution: finite differences
    along the profile, zonal spectral action on the S^(n-1) factor."""

    def __init__(self, prof, frame, sph, dim, order):
        self.prof = prof
        self.frame = frame
        self.sph = sph
        self.dim = dim
        self.order = order
        rho = prof[:, 0]
        self.rho = rho
        self.xt = np.einsum("ij,ij->i", prof, frame.tangent)
        self.drho = frame.tangent[:, 0]

    @cached_property
    def sphere_matrix(self):
        k = self.dim - 1
        coeffs, alpha = _sphere_zonal_coeffs(k, self.sph.lmax, 1.0, lambda l: -l * (l + k - 1))
        cos = np.clip(self.sph.points @ self.sph.points.T, -1.0, 1.0)
        return _kernels.zonal_sum(np.ascontiguousarray(cos), coeffs, alpha) * self.sph.weights[None, :]

    def calL(self, f):
        f = np.asarray(f, dtype=float)
        mp, ma = self.prof.shape[0], self.sph.size
        g = f.reshape(mp, ma)
        sp_ = self.frame.speed[:, None]
        d1 = periodic_d1(g, self.order)
        d2 = periodic_d2(g, self.order)
        fs = d1 / sp_
        fss = (d2 - (self.frame.dspeed[:, None] / sp_) * d1) / sp_ ** 2
        drift = (self.dim - 1) * self.drho / self.rho - self.xt
        out = fss + drift[:, None] * fs + (g @ self.sphere_matrix.T) / self.rho[:, None] ** 2
        return out.reshape(f.shape)


# --------------------------------------------------------------------------
# construction, parsing, residuals

def make_surface(spec):
    """Validate ``spec`` and return a surface handle."""
    if isinstance(spec, Surface):
        return spec
    if isinstance(spec, Sphere):
        return RoundSurface(spec, spec.radius, spec.dim, spec.dim, spec.complement)
    if isinstance(spec, Cylinder):
        return RoundSurface(spec, spec.radius, spec.k, spec.dim, spec.complement)
    if isinstance(spec, Strip):
        if spec.ambient_dim < 1:
            raise ValueError("strip needs ambient dimension >= 1")
        return RoundSurface(spec, spec.half_width, 0, spec.ambient_dim - 1, spec.complement)
    if isinstance(spec, Ellipsoid):
        return EllipsoidSurface(spec)
    if isinstance(spec, PlanarCurve):
        return CurveSurface(spec)
    if isinstance(spec, RevolutionProfile):
        return RevolutionSurface(spec)
    raise UnsupportedSurface(f"unknown surface spec {spec!r}")


def curvature_at(surface, param):
    return make_surface(surface).curvature_at(param)


def quadrature_grid(surface, resolution=None):
    """Quadrature grid with about ``resolution`` nodes (exact count for
    curves and circles; product grids round to the nearest tensor size)."""
    surface = make_surface(surface)
    if resolution is None:
        if isinstance(surface, (CurveSurface, RevolutionSurface)):
            return surface.grid(None)
        resolution = 2048
    return surface.grid(int(resolution))


@dataclass(frozen=True)
class ResidualStats:
    max: float
    mean: float
    l2: float

    def as_dict(self):
        return {"max": self.max, "mean": self.mean, "l2": self.l2}


def lambda_residual(surface, lam, grid):
    """Statistics of H - <x,N> - lambda over the grid nodes."""
    grid.check_surface(surface)
    res = grid.H - grid.support - lam
    p = grid.perimeter
    return ResidualStats(float(np.max(np.abs(res))), float(np.mean(np.abs(res))),
                         float(math.sqrt(grid.weights @ res ** 2 / p)))


def auto_lambda(grid):
    """Weighted mean of H - <x,N>."""
    return grid.integrate(grid.H - grid.support) / grid.perimeter


def check_antisymmetric(Q, dim=None):
    """Validate an antisymmetric generator and return it as an array."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("Q must be square")
    if dim is not None and Q.shape[0] != dim:
        raise ValueError(f"Q must be {dim}x{dim}")
    if np.max(np.abs(Q + Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise ValueError("Q must satisfy Q^T = -Q")
    return Q


def rotation_generator(dim, i=0, j=1):
    """Generator of rotations in the (x_i, x_j) plane."""
    Q = np.zeros((dim, dim))
    Q[i, j], Q[j, i] = 1.0, -1.0
    return Q


# --------------------------------------------------------------------------
# convenient curves

def circle(radius, count, order=4):
    phi = 2.0 * math.pi * np.arange(count) / count
    return PlanarCurve.periodic(radius * np.column_stack([np.cos(phi), np.sin(phi)]),
                                symmetric=count % 2 == 0, order=order)


def polar_curve(rfun, count, symmetric=True, order=4, oversample=8):
    """Curve r = rfun(theta), resampled to ``count`` nodes equally spaced in arclength."""
    m = oversample * count
    th = 2.0 * math.pi * np.arange(m) / m
    r = rfun(th)
    dense = np.column_stack([r * np.cos(th), r * np.sin(th)])
    pts = resample_periodic(dense, count, symmetric)
    return PlanarCurve.periodic(pts, symmetric=symmetric, order=order)


def ellipse_curve(a, b, count, order=4):
    return polar_curve(lambda th: a * b / np.sqrt((b * np.cos(th)) ** 2 + (a * np.sin(th)) ** 2),
                       count, True, order)


# --------------------------------------------------------------------------
# text format

def format_spec(spec):
    """One-line text form of a spec (curves refer to their point count)."""
    def num(v):
        return repr(float(v))
    if isinstance(spec, Sphere):
        out = f"sphere r={num(spec.radius)} n={spec.dim}"
    elif isinstance(spec, Cylinder):
        out = f"cylinder r={num(spec.radius)} k={spec.k} n={spec.dim}"
    elif isinstance(spec, Strip):
        out = f"strip t={num(spec.half_width)} dim={spec.ambient_dim}"
    elif isinstance(spec, Ellipsoid):
        return "ellipsoid axes=" + ",".join(num(a) for a in spec.axes)
    elif isinstance(spec, PlanarCurve):
        return f"curve points={spec.points.shape[0] - 1} symmetric={int(spec.symmetric)} order={spec.order}"
    elif isinstance(spec, RevolutionProfile):
        return f"revolution points={spec.points.shape[0] - 1} n={spec.dim} order={spec.order}"
    else:
        raise UnsupportedSurface(f"cannot format {spec!r}")
    if getattr(spec, "complement", False):
        out += " complement=1"
    return out


def parse_spec(text, base_dir=None):
    """Parse a line such as ``sphere r=1.414 n=2`` or ``curve file=g.csv``."""
    import os
    parts = text.split()
    if not parts:
        raise ValueError("empty surface spec")
    kind, kv = parts[0].lower(), {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ValueError(f"expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        kv[key.lower()] = val
    comp = kv.get("complement", "0") in ("1", "true", "yes")
    try:
        if kind == "sphere":
            return Sphere(float(kv["r"]), int(kv["n"]), comp)
        if kind == "cylinder":
            return Cylinder(float(kv["r"]), int(kv["k"]), int(kv["n"]), comp)
        if kind == "strip":
            return Strip(float(kv["t"]), int(kv.get("dim", 2)), comp)
        if kind == "ellipsoid":
            return Ellipsoid(tuple(float(a) for a in kv["axes"].split(",")))
        if kind in ("curve", "revolution"):
            path = kv["file"]
            if base_dir and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            pts = read_curve_csv(path)
            order = int(kv.get("order", 4))
            if kind == "curve":
                return PlanarCurve(pts, kv.get("symmetric", "0") in ("1", "true", "yes"), order)
            return RevolutionProfile(pts, int(kv["n"]), order)
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r} in surface spec {text!r}") from None
    raise ValueError(f"unknown surface kind {kind!r}")


def read_curve_csv(path):
    """Read ``s,x,y`` rows (header optional); returns the (x, y) columns."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                continue
            rows.append(vals[-2:])
    return np.asarray(rows, dtype=float)


def write_curve_csv(path_or_file, points, header_lines=()):
    """Write a closed curve as ``s,x,y`` rows, repeating the first point last."""
    pts = np.asarray(points, dtype=float)
    if np.linalg.norm(pts[-1] - pts[0]) > 0:
        pts = np.vstack([pts, pts[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    lines = [f"# {h}" for h in header_lines] + ["s,x,y"]
    lines += [f"{a:.15g},{b:.15g},{c:.15g}" for a, b, c in zip(s, pts[:, 0], pts[:, 1])]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)
