"""First and second variations of Gaussian volume and perimeter, with
optional dilations, and the functionals built on them.

All integrals use the ambient Gaussian weight stored in the quadrature
grid; the constant normalization does not affect any sign.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateTrial,
    MissingNormalDerivative,
    NotEigenfunction,
    NotMeanZero,
    NotSymmetric,
    SelfIntersection,
    UnsupportedSurface,
    ZeroDenominator,
)
from .geometry import (
    CurveSurface,
    EllipsoidSurface,
    RevolutionProfile,
    RevolutionSurface,
    RoundSurface,
    check_antisymmetric,
    curve_frame,
    format_spec,
    make_surface,
)
from .measure import planar_region_volume, round_perimeter, round_volume
from .stability import (
    apply_L,
    as_values,
    profile_spectrum,
    rayleigh_quotient,
    require_lambda_surface,
    rotation_field,
)

SIGN_TOL = 1e-12


# --------------------------------------------------------------------------
# inputs

@dataclass(frozen=True)
class VariationInput:
    """A normal variation x -> x + s f(x) N(x), optionally combined with a
    dilation t_s with t_0 = 1, t'_0 = h and t''_0 = h_prime."""
    grid: object
    f: np.ndarray
    grad_n: np.ndarray = None
    h: float = 0.0
    h_prime: float = 0.0
    symmetric: bool = False

    def __post_init__(self):
        f = as_values(self.f)
        if f.shape != (self.grid.size,):
            raise ValueError(f"f has {f.size} samples for a grid of {self.grid.size}")
        object.__setattr__(self, "f", f)
        if self.grad_n is not None:
            g = as_values(self.grad_n)
            if g.shape != f.shape:
                raise ValueError("normal derivative samples do not match the grid")
            object.__setattr__(self, "grad_n", g)
        if self.symmetric:
            _check_symmetric(self.grid, f)
            if self.grad_n is not None:
                _check_symmetric(self.grid, self.grad_n)

    @property
    def surface(self):
        return self.grid.surface


def volume_preserving_extension(f, lam):
    """Normal derivative -lambda f, the extension used for volume-preserving variations."""
    return -lam * as_values(f)


def _check_symmetric(grid, f, tol=1e-9):
    if grid.antipode is None:
        raise NotSymmetric("grid has no antipodal pairing")
    scale = max(1.0, float(np.max(np.abs(f))))
    if np.max(np.abs(f - f[grid.antipode])) > tol * scale:
        raise NotSymmetric("samples differ on antipodal nodes")


# --------------------------------------------------------------------------
# variation formulas

@dataclass(frozen=True)
class FirstVariation:
    volume: float
    perimeter: float


def first_variation(inp):
    """Derivatives at s=0 of Gaussian volume and of the dilated perimeter."""
    g = inp.grid
    f, h = inp.f, inp.h
    dv = g.integrate(f - 0.5 * h * g.support)
    dp = g.integrate(f * (g.H - g.support) + 0.5 * h * (g.r2 - g.n))
    return FirstVariation(dv, dp)


def _need_grad_n(inp):
    if inp.grad_n is None:
        if np.any(inp.f != 0.0):
            raise MissingNormalDerivative("second variations need the normal derivative of f")
        return np.zeros_like(inp.f)
    return inp.grad_n


def second_variation_perimeter(inp):
    """Second derivative at s=0 of the Gaussian perimeter of (Sigma_s) / sqrt(t_s)."""
    g = inp.grid
    f, h, hp = inp.f, inp.h, inp.h_prime
    dn = _need_grad_n(inp)
    xn, x2, n = g.support, g.r2, g.n
    d = g.H - xn
    lf = apply_L(g, f) if np.any(f != 0.0) else np.zeros_like(f)
    first = f * d + 0.5 * h * (x2 - n)
    integrand = (-f * lf + 2.0 * h * f * xn - h * h * (x2 - 0.5 * n) + first * first
                 + f * dn * d + 0.5 * hp * (x2 - n))
    return g.integrate(integrand)


def second_variation_volume(inp):
    """Second derivative at s=0 of the Gaussian volume of (Omega_s) / sqrt(t_s).

    The dilation acceleration enters as -(h'/2) int <x,N>, the derivative
    of the -(h/2) <x,N> term of the first variation.
    """
    g = inp.grid
    f, h, hp = inp.f, inp.h, inp.h_prime
    dn = _need_grad_n(inp)
    xn = g.support
    integrand = (f * (dn + f * (g.H - xn)) + 0.5 * (h * h - hp) * xn
                 + h * (f - 0.25 * h * xn) * (g.r2 - (g.n + 1)))
    return g.integrate(integrand)


# --------------------------------------------------------------------------
# finite-difference cross-check

@dataclass(frozen=True)
class FDReport:
    steps: tuple
    fd_perimeter: tuple
    fd_volume: tuple
    formula_perimeter: float
    formula_volume: float
    first_fd: tuple
    first_formula: FirstVariation

    @property
    def rel_error(self):
        """Relative error of the smallest-step perimeter difference."""
        return abs(self.fd_perimeter[-1] - self.formula_perimeter) / max(1e-300, abs(self.formula_perimeter))

    @property
    def abs_error(self):
        return abs(self.fd_perimeter[-1] - self.formula_perimeter)

    @property
    def volume_abs_error(self):
        return abs(self.fd_volume[-1] - self.formula_volume)

    def as_dict(self):
        return {"steps": list(self.steps), "fd_perimeter": list(self.fd_perimeter),
                "fd_volume": list(self.fd_volume), "formula_perimeter": self.formula_perimeter,
                "formula_volume": self.formula_volume, "rel_error": self.rel_error}


def _functionals(surface, grid, f, s, t):
    """Gaussian perimeter and volume of (Sigma + s f N) / sqrt(t)."""
    scale = 1.0 / math.sqrt(t)
    if isinstance(surface, RoundSurface):
        if np.ptp(f) > 1e-14 * max(1.0, np.max(np.abs(f))):
            raise UnsupportedSurface("displaced round surfaces are rebuilt for constant f only")
        r = (surface.radius + surface.sign * s * f[0]) * scale
        if r <= 0:
            raise SelfIntersection("displacement collapses the surface")
        return float(round_perimeter(r, surface.k)), float(round_volume(r, surface.k, surface.complement))
    if isinstance(surface, CurveSurface):
        pts = (grid.points + s * f[:, None] * grid.normals) * scale
        frame = curve_frame(pts, surface.order)
        per = float(frame.speed @ (np.exp(-0.5 * np.sum(pts * pts, axis=1)) / (2.0 * math.pi)))
        return per, planar_region_volume(pts, surface.order)
    if isinstance(surface, RevolutionSurface):
        ma = grid.meta["angular_nodes"]
        fz = f.reshape(-1, ma)
        if np.max(np.ptp(fz, axis=1)) > 1e-12 * max(1.0, np.max(np.abs(f))):
            raise UnsupportedSurface("revolution surfaces are displaced by zonal f only")
        prof = surface.samples if grid.meta["profile_nodes"] == surface.samples.shape[0] else None
        if prof is None:
            raise UnsupportedSurface("displace revolution surfaces on their native nodes")
        nrm = curve_frame(prof, surface.order).normal
        moved = (prof + s * fz[:, :1] * nrm) * scale
        moved_surface = make_surface(RevolutionProfile.periodic(moved, surface.dim, surface.order))
        return moved_surface.grid(None).perimeter, float("nan")
    raise UnsupportedSurface(f"cannot rebuild displaced {surface.kind}")


def fd_variation_check(inp, steps=(4e-3, 2e-3, 1e-3)):
    """Central differences of the rebuilt functionals against the formulas.

    The straight-line family x + s f N has vanishing normal acceleration,
    so the formulas are evaluated with zero normal derivative.
    """
    g = inp.grid
    surface = g.surface
    f, h, hp = inp.f, inp.h, inp.h_prime
    amax = float(np.max(np.sqrt(g.A_op2))) if g.size else 0.0
    fmax = float(np.max(np.abs(f))) if f.size else 0.0
    for s in steps:
        if s * amax * fmax >= 0.5:
            raise SelfIntersection(f"step {s} too large: s*|A|*|f| = {s * amax * fmax:.3g} >= 0.5")
    straight = VariationInput(g, f, np.zeros_like(f), h, hp)
    p0, v0 = _functionals(surface, g, f, 0.0, 1.0)
    fdp, fdv, first = [], [], []
    for s in steps:
        tp, tm = 1.0 + h * s + 0.5 * hp * s * s, 1.0 - h * s + 0.5 * hp * s * s
        pp, vp = _functionals(surface, g, f, s, tp)
        pm, vm = _functionals(surface, g, f, -s, tm)
        fdp.append((pp - 2.0 * p0 + pm) / (s * s))
        fdv.append((vp - 2.0 * v0 + vm) / (s * s))
        first.append(((vp - vm) / (2.0 * s), (pp - pm) / (2.0 * s)))
    return FDReport(tuple(steps), tuple(fdp), tuple(fdv), second_variation_perimeter(straight),
                    second_variation_volume(straight), tuple(first), first_variation(straight))


# --------------------------------------------------------------------------
# quadratic forms and witnesses

def quadratic_form(grid, f, witness=False, tol=1e-8):
    """int f Lf gamma.  In witness mode f must be mean zero and even."""
    vals = as_values(f)
    if witness:
        scale = grid.integrate(np.abs(vals))
        if abs(grid.integrate(vals)) > tol * max(scale, 1e-300):
            raise NotMeanZero(f"int f gamma = {grid.integrate(vals):.3g}")
        _check_symmetric(grid, vals)
    return grid.integrate(vals * apply_L(grid, vals))


@dataclass(frozen=True)
class Witness:
    name: str
    value: float
    closed_form: float = None

    def as_dict(self):
        return {"name": self.name, "value": self.value, "closed_form": self.closed_form}


def flat_witness(grid):
    """y^2 - 1 along the first flat direction of a cylinder or strip.

    Mean zero and even; on rS^k x R^(n-k) it gives (k/r^2 - 1) * 2p.
    """
    s = grid.surface
    if not isinstance(s, RoundSurface) or s.compact:
        raise UnsupportedSurface("the flat-direction witness needs a cylinder or strip")
    y = grid.points[:, s.k + 1]
    f = y * y - 1.0
    closed = (s.k / s.radius ** 2 - 1.0) * 2.0 * float(round_perimeter(s.radius, s.k))
    return Witness("y^2-1", quadratic_form(grid, f, witness=True), closed)


def sphere_witness(grid):
    """Degree-2 zonal harmonic on a round sphere; value (1 - (n+2)/r^2) int f^2."""
    s = grid.surface
    if not isinstance(s, RoundSurface) or not s.compact:
        raise UnsupportedSurface("the degree-2 witness needs a sphere")
    n, r = s.dim, s.radius
    u = grid.points[:, 0] / r
    f = (n + 1) * u * u - 1.0
    value = quadratic_form(grid, f, witness=True)
    return Witness("degree-2 harmonic", value, (1.0 - (n + 2) / r ** 2) * grid.integrate(f * f))


@dataclass(frozen=True)
class HWitness:
    b: float
    value: float
    closed_form: float


def mean_curvature_witness(grid, lam):
    """f = H + b with int f gamma = 0: operator value and its closed form."""
    p = grid.perimeter
    H = grid.H
    b = -grid.integrate(H) / p
    f = H + b
    value = grid.integrate(f * apply_L(grid, f))
    closed = grid.integrate(2.0 * f * f + (b + lam) ** 2 * grid.A2) + b * grid.integrate(grid.support)
    return HWitness(b, value, closed)


@dataclass(frozen=True)
class EigenPerturbation:
    value: float
    rhs: float
    defect: float
    delta: float
    residual: float
    verdict: str


def perturb_eigen(grid, lam, g, delta=None, tol=1e-3):
    """Evaluate int (1+g) L (1+g) gamma two ways for a positive eigenfunction g."""
    gv = as_values(g)
    if np.any(gv <= 0):
        raise NotEigenfunction("g must be positive")
    lg = apply_L(grid, gv)
    if delta is None:
        delta = rayleigh_quotient(grid, gv)
    norm = math.sqrt(grid.integrate(gv * gv))
    resid = math.sqrt(grid.integrate((lg - delta * gv) ** 2)) / norm
    if resid > tol:
        raise NotEigenfunction(f"|Lg - delta g| / |g| = {resid:.3g} > {tol:g}")
    one = 1.0 + gv
    value = grid.integrate(one * apply_L(grid, one))
    rhs = grid.integrate(delta * one * one + grid.A2 + (1.0 - delta))
    i1 = grid.integrate(grid.A2 - 1.0)
    if lam < 0 and i1 > SIGN_TOL * grid.perimeter:
        verdict = "negative lambda and int(|A|^2-1)>0: a minimizer must be a round cylinder"
    else:
        verdict = "no conclusion"
    return EigenPerturbation(value, rhs, value - rhs, float(delta), resid, verdict)


def top_eigenfunction(surface, grid):
    """Top discrete eigenpair, on the nodes of ``grid`` (curves and profiles)."""
    spec = profile_spectrum(surface, grid, 1)
    return spec.eigenvalues[0], spec.eigenfunctions[0]


# --------------------------------------------------------------------------
# dilation form and the companion inequality

def _xn_integral(grid):
    denom = grid.integrate(grid.support)
    if abs(denom) <= SIGN_TOL * grid.perimeter * max(1.0, float(np.max(np.abs(grid.support)))):
        raise ZeroDenominator("int <x,N> gamma vanishes")
    return denom


def dilation_form(grid, lam, f, require_positive=True):
    """Volume-preserving second variation with the dilation h chosen so that
    int f gamma = (h/2) int <x,N> gamma."""
    vals = as_values(f)
    if require_positive and np.any(vals <= 0):
        raise DegenerateTrial("the dilation form is defined for positive f")
    xn = grid.support
    h = 2.0 * grid.integrate(vals) / _xn_integral(grid)
    lf = apply_L(grid, vals)
    return grid.integrate(-vals * lf + 2.0 * h * vals * xn - 0.5 * h * h * xn * xn + 0.25 * lam * h * h * xn)


def dilation_curvature(grid, lam):
    """Second t-derivative of the dilation form at f = H - lambda + t."""
    base = grid.H - lam
    # the form is an exact quadratic in t
    vals = [dilation_form(grid, lam, base + t, require_positive=False) for t in (-1.0, 0.0, 1.0)]
    return vals[0] - 2.0 * vals[1] + vals[2]


def lastthm_quantity(grid=None, surface=None, closed_form=False):
    """int (-|A|^2 + H p / int<y,N>gamma) gamma."""
    if closed_form:
        s = make_surface(surface if surface is not None else grid.surface)
        if not isinstance(s, RoundSurface):
            raise UnsupportedSurface("closed form exists for round surfaces only")
        if s.k == 0 and s.radius == 0:
            raise ZeroDenominator("int <x,N> gamma vanishes")
        # |A|^2 = k/r^2 and H / <x,N> = k/r^2 cancel exactly
        return 0.0
    denom = _xn_integral(grid)
    return grid.integrate(-grid.A2 + grid.H * grid.perimeter / denom)


# --------------------------------------------------------------------------
# random directions

def _rng(seed):
    return np.random.default_rng(seed)


def random_unit_vectors(rng, count, dim):
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1)[:, None]


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    expected: float
    samples: int

    @property
    def z(self):
        return (self.mean - self.expected) / self.stderr if self.stderr > 0 else 0.0


def mean_inner_product(a, b, n, samples=10 ** 6, seed=0, chunk=1 << 16):
    """Monte Carlo estimate of E <v,a><v,b> for v uniform on the unit sphere of R^(n+1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != n + 1 or b.size != n + 1:
        raise ValueError("a and b must lie in R^(n+1)")
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = _rng(seed)
    s1 = s2 = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        x = rng.standard_normal((k, n + 1))
        t1, t2 = _kernels.product_moments(x, a, b)
        s1 += t1
        s2 += t2
        done += k
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return MCEstimate(mean, math.sqrt(var / samples), float(a @ b) / (n + 1), samples)


@dataclass(frozen=True)
class BilinearResult:
    values: np.ndarray
    vs: np.ndarray
    ws: np.ndarray
    mean: float
    stderr: float
    best: int
    analytic: float
    bound: float
    pieces: dict = field(default_factory=dict)

    @property
    def max(self):
        return float(self.values[self.best])


def bilinear_pieces(grid):
    """Ingredients of the expected bilinear form and its lower bound."""
    w = grid.weights
    N = grid.normals
    p = grid.perimeter
    M = (N * w[:, None]).T @ N
    nn = float(np.sum(M * M)) / (p * p)
    s2 = np.einsum("xij,xjk->xik", grid.shape, grid.shape)
    t3 = 2.0 / p * float(w @ np.einsum("xij,ji->x", s2, M))
    ia = grid.integrate(1.0 - grid.A2)
    proj = p - np.einsum("xi,ij,xj->x", N, M, N)
    analytic = ia * (1.0 - nn) - t3
    cross = float(w @ proj)
    raw = ia * cross - 2.0 * p * float(w @ (grid.A_op2 * proj))
    return {"p": p, "NN": nn, "T3": t3, "I_A": ia, "triple": raw, "analytic": analytic,
            "bound": raw / (p * p)}


def random_bilinear(grid, lam, trials=1000, seed=0, orthogonal=False, chunk=256):
    """Bilinear trial values (n+1)^2 int (phi-m) L (phi-m) gamma, phi = <v,N><w,N>."""
    require_lambda_surface(grid.surface, lam, grid)
    if trials < 2:
        raise ValueError("need at least two trials")
    d = grid.ambient
    rng = _rng(seed)
    vs = random_unit_vectors(rng, trials, d)
    ws = random_unit_vectors(rng, trials, d)
    if orthogonal:
        ws = ws - np.sum(ws * vs, axis=1)[:, None] * vs
        ws /= np.linalg.norm(ws, axis=1)[:, None]
    n1 = float(d)
    normals = np.ascontiguousarray(grid.normals)
    shape = np.ascontiguousarray(grid.shape)
    values = np.empty(trials)
    for lo in range(0, trials, chunk):
        hi = min(trials, lo + chunk)
        values[lo:hi] = _kernels.bilinear_values(np.ascontiguousarray(vs[lo:hi]), np.ascontiguousarray(ws[lo:hi]),
                                                 normals, shape, grid.A2, grid.weights, n1)
    pieces = bilinear_pieces(grid)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(trials))
    return BilinearResult(values, vs, ws, mean, stderr, int(np.argmax(values)),
                          pieces["analytic"], pieces["bound"], pieces)


def pair_integrals(grid):
    """Double sums of <N_y,N_z>^2 and |S_x N_y|^2 by brute force."""
    return _kernels.pair_integrals(np.ascontiguousarray(grid.normals), grid.weights,
                                   np.ascontiguousarray(grid.shape))


# --------------------------------------------------------------------------
# theorem conditions

@dataclass
class ConditionReport:
    surface: str
    lam: float
    I1: float
    I2: float
    I3: float
    I4: float
    mainthm2_factor: float
    cor9: float
    huisken_defect: float
    convex: bool
    round_cylinder: bool
    witnesses: list = field(default_factory=list)
    fired: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    closed_form: dict = None

    def as_dict(self):
        out = {"surface": self.surface, "lambda": self.lam, "I1": self.I1, "I2": self.I2,
               "I3": self.I3, "I4": self.I4, "neg_lambda_xn": self.mainthm2_factor,
               "cor9": self.cor9, "huisken_defect": self.huisken_defect, "convex": self.convex,
               "witnesses": [w.as_dict() for w in self.witnesses], "conditions": list(self.fired),
               "verdicts": list(self.verdicts)}
        if self.closed_form is not None:
            out["closed_form"] = dict(self.closed_form)
        return out


def round_conditions(surface):
    """Closed forms of the report integrals on rS^k x R^(n-k)."""
    s = make_surface(surface)
    if not isinstance(s, RoundSurface):
        raise UnsupportedSurface("closed forms exist for round surfaces only")
    r, k = s.radius, s.k
    p = float(round_perimeter(r, k))
    a2 = k / r ** 2
    op2 = 1.0 / r ** 2 if k >= 1 else 0.0
    i1 = (a2 - 1.0) * p
    i2 = (a2 - 1.0 + 2.0 * op2) * p
    i3 = (1.0 - a2 - 2.0 * op2) * p ** 3 * k / (k + 1)
    return {"I1": i1, "I2": i2, "I3": i3, "I4": 0.0, "neg_lambda_xn": (r * r - k) * p,
            "cor9": -k * p * p, "huisken_defect": 0.0, "perimeter": p}


def _convex(grid):
    s = grid.surface
    if isinstance(s, (RoundSurface, EllipsoidSurface)):
        return True
    k = grid.principal
    return bool(np.all(k >= -1e-12) or np.all(k <= 1e-12))


def _huisken_defect(grid):
    a = np.sqrt(grid.A2)
    live = a > 1e-12
    if not np.any(live):
        return 0.0 if np.max(np.abs(grid.H)) < 1e-12 else float("inf")
    ratio = grid.H[live] / a[live]
    return float(np.ptp(ratio) / max(1.0, np.max(np.abs(ratio))))


def _pos(x, scale):
    return x > SIGN_TOL * max(1.0, scale)


def _neg(x, scale):
    return x < -SIGN_TOL * max(1.0, scale)


def theorem_report(grid, lam, witnesses=True):
    """Theorem-condition integrals, fired conditions and verdicts."""
    surface = grid.surface
    require_lambda_surface(surface, lam, grid)
    p = grid.perimeter
    pieces = bilinear_pieces(grid)
    i1 = grid.integrate(grid.A2 - 1.0)
    i2 = i1 + 2.0 * p * float(np.max(grid.A_op2))
    i3 = pieces["triple"]
    try:
        i4 = lastthm_quantity(grid)
    except ZeroDenominator:
        i4 = float("nan")
    xn = grid.integrate(grid.support)
    factor = -lam * xn
    cor9 = -grid.integrate(grid.H) * xn
    rep = ConditionReport(format_spec(surface.spec), float(lam), i1, i2, i3, i4, factor, cor9,
                          _huisken_defect(grid), _convex(grid), isinstance(surface, RoundSurface))
    if isinstance(surface, RoundSurface):
        rep.closed_form = round_conditions(surface)
    _fill_verdicts(rep, grid, lam, witnesses)
    return rep


def _fill_verdicts(rep, grid, lam, witnesses):
    p = grid.perimeter
    scale = p
    fired = rep.fired
    if rep.convex and _pos(rep.I1, scale):
        fired.append("convex and int(|A|^2-1)>0")
    if _neg(rep.I2, scale):
        fired.append("int(|A|^2-1+2sup|A|_op^2)<0")
    if _pos(rep.I1, scale) and _pos(rep.mainthm2_factor, scale):
        fired.append("int(|A|^2-1)>0 and -lambda int<x,N> > 0")
    if _pos(rep.I3, scale ** 3):
        fired.append("triple integral > 0")
    if lam < 0 and _pos(rep.I1, scale):
        fired.append("lambda<0 and int(|A|^2-1)>0")
    constant_h = []
    if _pos(rep.cor9, scale * scale):
        constant_h.append("-int H int<x,N> > 0")
    if rep.convex and lam > SIGN_TOL:
        constant_h.append("convex with lambda>0: H/|A| constant")
    fired.extend(constant_h)

    if witnesses:
        rep.witnesses.extend(_witnesses(grid, lam))
    positive = [w for w in rep.witnesses if _pos(w.value, scale)]
    verdicts = rep.verdicts
    if positive:
        verdicts.append("not a minimizer: positive second variation on " + ", ".join(w.name for w in positive))
    if fired:
        if rep.round_cylinder:
            verdicts.append("round cylinder: consistent with every fired condition")
        else:
            verdicts.append("excluded: fired conditions force a round cylinder or constant H")
    if not positive and (rep.round_cylinder or not fired):
        verdicts.append("possible minimizer")
    if not fired and not positive:
        verdicts.append("no condition fires")


def _witnesses(grid, lam):
    s = grid.surface
    out = []
    if isinstance(s, RoundSurface):
        if s.compact and s.dim >= 1 and grid.operator is not None:
            if s.dim >= 2 or grid.size >= 8:
                out.append(sphere_witness(grid))
        elif not s.compact and grid.operator is not None:
            out.append(flat_witness(grid))
        return out
    if grid.operator is None:
        return out
    hw = mean_curvature_witness(grid, lam)
    if grid.integrate((grid.H + hw.b) ** 2) > 1e-12 * grid.perimeter:
        f = grid.H + hw.b
        sym = grid.antipode is not None and np.max(np.abs(f - f[grid.antipode])) < 1e-8 * max(1.0, np.max(np.abs(f)))
        if sym:
            out.append(Witness("H+b", hw.value, hw.closed_form))
    return out


# --------------------------------------------------------------------------
# nodal domains

@dataclass(frozen=True)
class NodalResult:
    count: int
    mean_defect: float
    labels: np.ndarray = field(repr=False, default=None)

    @property
    def verdict(self):
        return "does not minimize" if self.count > 4 else "no conclusion"


def nodal_domains(grid, Q, band=1e-9):
    """Connected components of {<Qx,N> != 0} on the grid graph."""
    s = grid.surface
    if not s.symmetric:
        raise NotSymmetric("nodal-domain analysis needs a symmetric surface")
    Q = check_antisymmetric(Q, grid.ambient)
    indptr, indices = grid.adjacency()
    f = rotation_field(grid, Q).values
    labels, count = _kernels.sign_components(np.ascontiguousarray(f), float(band), indptr, indices)
    return NodalResult(int(count), abs(grid.integrate(f)), labels)
