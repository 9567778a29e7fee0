"""Constructing lambda-curves and searching for minimizers.

Closed planar curves with H = <x,N> + lambda are found by shooting the
unit-speed curvature ODE from a vertex; round-cylinder candidates come
from closed forms; general symmetric curves are relaxed by a
volume-constrained Gaussian curve-shortening flow.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .errors import (
    ConvergenceFailure,
    NoBracket,
    NonConvexSolution,
    NoRootInBracket,
    SelfIntersection,
    StepLimitExceeded,
    StepUnderflow,
)
from .geometry import (
    Cylinder,
    PlanarCurve,
    Sphere,
    Strip,
    curve_frame,
    gaussian_weight,
    make_surface,
    quadrature_grid,
    resample_periodic,
)
from .measure import (
    planar_region_volume,
    round_perimeter,
    round_volume,
    solve_constraint,
)
from .roots import bracket_root

# --------------------------------------------------------------------------
# shooting


@dataclass(frozen=True)
class ShootState:
    s: float
    x: float
    y: float
    theta: float

    def kappa(self, lam):
        # right normal (sin t, -cos t) is exterior for counterclockwise curves
        return self.x * math.sin(self.theta) - self.y * math.cos(self.theta) + lam


def _rhs(s, u, lam):
    c, sn = math.cos(u[2]), math.sin(u[2])
    return [c, sn, u[0] * sn - u[1] * c + lam]


@dataclass(frozen=True)
class ShootResult:
    lam: float
    start: ShootState
    end: ShootState
    solution: object = field(repr=False)

    @property
    def length(self):
        return self.end.s - self.start.s

    def closure_residual(self, turns=1):
        """Gap in position plus gap in tangent angle after ``turns`` full turns."""
        gap = math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)
        return gap + abs(self.end.theta - self.start.theta - 2.0 * math.pi * turns)

    def sample(self, count, closed=True):
        """``count`` points equally spaced in arclength (the endpoint dropped when closed)."""
        stop = self.end.s if not closed else self.end.s - self.length / count
        s = np.linspace(self.start.s, stop, count)
        return self.solution(s)[:2].T

    def curvature(self, s):
        u = self.solution(np.atleast_1d(s))
        return u[0] * np.sin(u[2]) - u[1] * np.cos(u[2]) + self.lam


def shoot_curve(lam, start=(1.0, 0.0, 0.5 * math.pi), length=2.0 * math.pi, rtol=1e-12, atol=1e-12,
                events=None, method="RK45"):
    """Integrate x' = cos t, y' = sin t, t' = <(x,y),N> + lambda from ``start``."""
    if not (rtol > 0 and atol > 0):
        raise ValueError("step tolerances must be positive")
    x0, y0, t0 = (float(v) for v in start)
    sol = solve_ivp(_rhs, (0.0, float(length)), [x0, y0, t0], args=(float(lam),), method=method,
                    rtol=rtol, atol=atol, dense_output=True, events=events)
    if sol.status == -1:
        raise StepUnderflow(f"integration failed: {sol.message}")
    if sol.status == 1 and sol.t_events is not None:
        hit = [t for t in sol.t_events if len(t)]
        s_end = float(min(t[0] for t in hit))
    else:
        s_end = float(sol.t[-1])
    u = sol.sol(s_end)
    return ShootResult(float(lam), ShootState(0.0, x0, y0, t0), ShootState(s_end, *map(float, u)), sol.sol)


def circle_radius(lam):
    """Radius of the circle solving 1/r = r + lambda."""
    return 0.5 * (-lam + math.sqrt(lam * lam + 4.0))


def half_arc(lam, r0, rtol=1e-13, max_length=None):
    """Shoot from the vertex (r0, 0) to the next vertex (where <x,T> = 0).

    Returns the result and the polar angle reached, or None when no vertex
    is found before the length limit.
    """
    rc = circle_radius(lam)
    direction = -1.0 if r0 < rc else 1.0

    def vertex(s, u, lam):
        return u[0] * math.cos(u[2]) + u[1] * math.sin(u[2])
    vertex.terminal = True
    vertex.direction = direction

    def wrap(s, u, lam):
        return u[1]
    wrap.terminal = True
    wrap.direction = -1.0

    limit = max_length if max_length is not None else 8.0 * math.pi * max(r0, rc)
    try:
        res = shoot_curve(lam, (r0, 0.0, 0.5 * math.pi), limit, rtol=rtol, atol=rtol,
                          events=[vertex, wrap], method="DOP853")
    except StepUnderflow:
        return None, float("nan")
    if res.end.s >= limit or res.end.y <= 0.0:
        return None, float("nan")
    return res, math.atan2(res.end.y, res.end.x)


@dataclass(frozen=True)
class ClosedCurve:
    lam: float
    r0: float
    m: int
    length: float
    closure: float
    min_curvature: float
    points: np.ndarray = field(repr=False)
    kappa: np.ndarray = field(repr=False, default=None)
    arc: ShootResult = field(repr=False, default=None)

    def planar_curve(self, order=6, exact_curvature=True):
        """Polyline with curvature carried over from the ODE state."""
        sym = self.points.shape[0] % 2 == 0 and self.m % 2 == 0
        kappa = self.kappa if exact_curvature else None
        return PlanarCurve.periodic(self.points, symmetric=sym, order=order, curvature=kappa)

    @property
    def curve(self):
        return self.planar_curve()

    @property
    def convex(self):
        return self.min_curvature > 0


@dataclass(frozen=True)
class ClosedCurveSearch:
    roots: tuple
    rejected: tuple
    best: ClosedCurve


def _angle_residual(lam, r0, m):
    _, phi = half_arc(lam, r0)
    return phi - math.pi / m


def rk4_nodes(lam, start, length, count, substeps=8):
    """Fixed-step RK4 states (x, y, theta) at s = j * length / count, j = 0..count.

    Fixed steps land exactly on the nodes, so the integration error is a
    smooth function of arclength and survives finite differencing; the
    interpolant of an adaptive solver does not.
    """
    h = length / (count * substeps)
    u = np.array(start, dtype=float)
    out = np.empty((count + 1, 3))
    out[0] = u
    x, y, t = u
    for i in range(1, count + 1):
        for _ in range(substeps):
            k1x, k1y, k1t = math.cos(t), math.sin(t), x * math.sin(t) - y * math.cos(t) + lam
            xa, ya, ta = x + 0.5 * h * k1x, y + 0.5 * h * k1y, t + 0.5 * h * k1t
            k2x, k2y, k2t = math.cos(ta), math.sin(ta), xa * math.sin(ta) - ya * math.cos(ta) + lam
            xb, yb, tb = x + 0.5 * h * k2x, y + 0.5 * h * k2y, t + 0.5 * h * k2t
            k3x, k3y, k3t = math.cos(tb), math.sin(tb), xb * math.sin(tb) - yb * math.cos(tb) + lam
            xc, yc, tc = x + h * k3x, y + h * k3y, t + h * k3t
            k4x, k4y, k4t = math.cos(tc), math.sin(tc), xc * math.sin(tc) - yc * math.cos(tc) + lam
            x += h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0
            y += h * (k1y + 2 * k2y + 2 * k3y + k4y) / 6.0
            t += h * (k1t + 2 * k2t + 2 * k3t + k4t) / 6.0
        out[i] = x, y, t
    return out


def assemble_curve(lam, r0, m, samples=2048, substeps=8):
    """Integrate the full closed curve through 2m vertex-to-vertex arcs.

    When ``samples`` is a multiple of m, one fundamental segment is
    integrated and rotated, so the polyline is exactly m-fold symmetric.
    """
    arc, _ = half_arc(lam, r0)
    if arc is None:
        raise NoRootInBracket("no vertex reached")
    total = 2 * m * arc.length
    start = (r0, 0.0, 0.5 * math.pi)
    full = shoot_curve(lam, start, total, rtol=1e-13, atol=1e-13, method="DOP853")
    if samples % m == 0:
        seg = rk4_nodes(lam, start, total / m, samples // m, substeps)[:-1]
        parts = []
        for j in range(m):
            a = 2.0 * math.pi * j / m
            rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            parts.append(seg[:, :2] @ rot.T)
        points = np.vstack(parts)
        states = np.vstack([seg] * m)
    else:
        states = rk4_nodes(lam, start, total, samples, substeps)[:-1]
        points = states[:, :2].copy()
    # curvature from the ODE state is invariant under the rotation
    kappa = states[:, 0] * np.sin(states[:, 2]) - states[:, 1] * np.cos(states[:, 2]) + lam
    s = np.linspace(0.0, total, 4 * samples, endpoint=False)
    kmin = min(float(np.min(kappa)), float(np.min(full.curvature(s))))
    return ClosedCurve(lam, r0, m, total, full.closure_residual(1), kmin, points, kappa, full)


def find_closed_curve(bracket=(-3.0, -0.1), m=3, samples=2048, lam_steps=9, r_steps=16,
                      r_span=(1.02, 3.0)):
    """Closed m-fold symmetric lambda-curves with lambda in ``bracket``.

    For each lambda on a scan of the bracket, the outer vertex radius r0
    is found by root-finding the polar angle of the next vertex against
    pi/m, away from the circle solution.  Every root is assembled and
    checked for convexity; the first convex one is returned as ``best``.
    """
    if m < 3:
        raise ValueError("m must be at least 3")
    lo, hi = sorted(float(b) for b in bracket)
    if hi >= 0:
        raise ValueError("the lambda bracket must lie in lambda < 0")
    roots, rejected = [], []
    for lam in np.linspace(hi, lo, lam_steps):
        rc = circle_radius(lam)
        grid = rc * np.linspace(r_span[0], r_span[1], r_steps)
        vals = [_angle_residual(lam, r, m) for r in grid]
        for i in range(len(grid) - 1):
            a, b = vals[i], vals[i + 1]
            if not (np.isfinite(a) and np.isfinite(b)) or a * b > 0:
                continue
            try:
                root = bracket_root(lambda r, lam=lam: _angle_residual(lam, r, m), grid[i], grid[i + 1],
                                    xtol=1e-14 * rc).root
            except NoBracket:
                continue
            if not np.isfinite(_angle_residual(lam, root, m)):
                continue
            curve = assemble_curve(float(lam), root, m, samples)
            (roots if curve.convex else rejected).append(curve)
    if not roots:
        if rejected:
            raise NonConvexSolution(f"{len(rejected)} closed curves found, none convex")
        raise NoRootInBracket(f"no closed {m}-fold curve with lambda in [{lo}, {hi}]")
    return ClosedCurveSearch(tuple(roots), tuple(rejected), roots[0])


# --------------------------------------------------------------------------
# cylinder candidates

@dataclass(frozen=True)
class ScanRow:
    k: int
    complement: bool
    radius: float
    volume: float
    perimeter: float
    lam: float
    report: object = field(repr=False, default=None)
    kind: str = ""

    @property
    def label(self):
        base = "ball" if self.kind == "sphere" else self.kind
        return ("complement of " + base) if self.complement else base

    def as_dict(self):
        out = {"k": self.k, "complement": self.complement, "kind": self.kind, "r": self.radius,
               "volume": self.volume, "perimeter": self.perimeter, "lambda": self.lam}
        if self.report is not None:
            out["report"] = self.report.as_dict()
        return out


def cylinder_spec(k, n, r, complement=False):
    if k == n:
        return Sphere(r, n, complement)
    if k == 0:
        return Strip(r, n + 1, complement)
    return Cylinder(r, k, n, complement)


def cylinder_scan(n, c, reports=True, resolution=512):
    """Round-cylinder candidates rS^k x R^(n-k), both orientations, sorted by perimeter."""
    from .variation import theorem_report
    if not 0.0 < c < 1.0:
        raise NoBracket(f"target volume {c} outside (0, 1)")
    rows = []
    for k in range(n, -1, -1):
        for comp in (False, True):
            r = solve_constraint(cylinder_spec(k, n, 1.0, comp), c)
            spec = cylinder_spec(k, n, r, comp)
            s = make_surface(spec)
            rep = None
            if reports:
                grid = quadrature_grid(s, resolution)
                rep = theorem_report(grid, s.lam)
            rows.append(ScanRow(k, comp, r, float(round_volume(r, k, comp)), float(round_perimeter(r, k)),
                                s.lam, rep, s.kind))
    rows.sort(key=lambda row: row.perimeter)
    return rows


# --------------------------------------------------------------------------
# volume-constrained flow

@dataclass(frozen=True)
class FlowOptions:
    tol: float = 1e-6
    max_steps: int = 4000
    tau: float = 0.05
    tau_max: float = 0.5
    tau_min: float = 1e-10
    resample_every: int = 10
    spacing_ratio: float = 1.02
    order: int = 4


@dataclass(frozen=True)
class FlowState:
    points: np.ndarray = field(repr=False)
    volume: float
    perimeter: float
    lam_hat: float
    iteration: int
    defect: float
    tau: float = 0.05

    @property
    def curve(self):
        return PlanarCurve.periodic(self.points, symmetric=True)

    def row(self):
        return (self.iteration, self.perimeter, self.volume, self.lam_hat, self.defect)


@dataclass(frozen=True)
class FlowResult:
    state: FlowState
    trajectory: tuple
    converged: bool


TRAJECTORY_HEADER = "step,perimeter,volume,lambda_hat,defect"


def _symmetrize(p):
    m = p.shape[0]
    return 0.5 * (p - np.roll(p, m // 2, axis=0))


def _perimeter(p, order):
    frame = curve_frame(p, order)
    return float(frame.speed @ gaussian_weight(p))


def _stationarity(p, order):
    frame = curve_frame(p, order)
    w = frame.speed * gaussian_weight(p)
    g = frame.curvature - np.einsum("ij,ij->i", p, frame.normal)
    per = float(w.sum())
    lam = float(w @ g) / per
    defect = math.sqrt(float(w @ (g - lam) ** 2) / per)
    return frame, g, lam, defect, per


def project_volume(p, c, order=4, tol=1e-14):
    """Offset ``p`` along its normals by the scalar giving Gaussian volume ``c``."""
    nrm = curve_frame(p, order).normal

    def vol(d):
        return planar_region_volume(p + d * nrm, order) - c
    d = 0.0
    for _ in range(8):
        err = vol(d)
        if abs(err) < tol:
            return p + d * nrm
        q = p + d * nrm
        per = _perimeter(q, order)
        if per <= 0:
            break
        d -= err / per
    # fall back to a bracketed solve
    span = 0.1
    while vol(-span) * vol(span) > 0:
        span *= 2.0
        if span > 10.0:
            raise ConvergenceFailure("volume projection failed")
    d = bracket_root(vol, -span, span, xtol=1e-16).root
    return p + d * nrm


def flow_state(points, order=4, iteration=0, tau=0.05):
    _, _, lam, defect, per = _stationarity(points, order)
    return FlowState(points, planar_region_volume(points, order), per, lam, iteration, defect, tau)


def _preconditioned(p, field_, tau):
    """(I - tau d^2/ds^2)^{-1} applied to each column, second order on the polygon."""
    nxt = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    prv = np.roll(nxt, 1)
    avg = 0.5 * (nxt + prv)
    lower = -tau / (prv * avg)
    upper = -tau / (nxt * avg)
    diag = 1.0 - lower - upper
    # the cyclic solver takes the sub-diagonal entry of row i at index i
    return _kernels.cyclic_tridiag_solve(np.ascontiguousarray(lower), np.ascontiguousarray(diag),
                                         np.ascontiguousarray(upper), np.ascontiguousarray(field_))


def mcf_minimize(initial, c, options=None):
    """Relax a symmetric closed curve under the volume-constrained flow.

    The normal speed is -(H - <x,N> - lam_hat) with lam_hat the weighted
    mean, so the first variation of volume vanishes.  Steps that raise the
    perimeter are retried with half the step size.
    """
    opt = options or FlowOptions()
    pts = np.asarray(initial.points if isinstance(initial, FlowState) else initial, dtype=float)
    if isinstance(initial, PlanarCurve):
        surface = make_surface(initial)
        pts = surface.samples
    if pts.shape[0] % 2:
        raise ValueError("the flow needs an even node count")
    if np.max(np.abs(pts + np.roll(pts, pts.shape[0] // 2, axis=0))) > 1e-8 * max(1.0, np.max(np.abs(pts))):
        raise ValueError("initial curve must be symmetric under x -> -x (node j+N/2 = -node j)")
    if _kernels.polyline_self_intersects(np.ascontiguousarray(pts)):
        raise SelfIntersection("initial curve crosses itself")
    v0 = planar_region_volume(pts, opt.order)
    if abs(v0 - c) > 0.1 * c:
        raise ValueError(f"initial volume {v0:.6g} is not within 10% of {c}")
    pts = project_volume(pts, c, opt.order)
    state = flow_state(pts, opt.order, 0, opt.tau)
    trajectory = [state.row()]
    tau = opt.tau
    while state.defect >= opt.tol:
        if state.iteration >= opt.max_steps:
            raise StepLimitExceeded(f"no convergence in {opt.max_steps} steps (defect {state.defect:.3g})",
                                    state=state, trajectory=tuple(trajectory))
        frame, g, lam, _, _ = _stationarity(state.points, opt.order)
        speed = -(g - lam)
        move = _preconditioned(state.points, speed[:, None] * frame.normal, tau)
        accepted = None
        while tau >= opt.tau_min:
            trial = _symmetrize(state.points + tau * move)
            if _kernels.polyline_self_intersects(np.ascontiguousarray(trial)):
                tau *= 0.5
                continue
            trial = project_volume(trial, c, opt.order)
            new = flow_state(trial, opt.order, state.iteration + 1, tau)
            if new.perimeter <= state.perimeter:
                accepted = new
                break
            tau *= 0.5
        if accepted is None:
            if state.defect < 10 * opt.tol:
                break
            raise StepUnderflow(f"step size fell below {opt.tau_min:g} at defect {state.defect:.3g}")
        if opt.resample_every and accepted.iteration % opt.resample_every == 0:
            accepted = _maybe_resample(accepted, c, opt)
        state = accepted
        trajectory.append(state.row())
        tau = min(opt.tau_max, 1.5 * tau)
    return FlowResult(state, tuple(trajectory), state.defect < opt.tol)


def _maybe_resample(state, c, opt):
    seg = np.linalg.norm(np.roll(state.points, -1, axis=0) - state.points, axis=1)
    if seg.max() <= opt.spacing_ratio * seg.min():
        return state
    pts = resample_periodic(state.points, state.points.shape[0], symmetric=True)
    pts = project_volume(pts, c, opt.order)
    new = flow_state(pts, opt.order, state.iteration, state.tau)
    return new if new.perimeter <= state.perimeter else state


def perturbed_circle(c, count=512, amplitude=0.05, mode=4):
    """Volume-c circle with radius modulated by amplitude * cos(mode * theta)."""
    r = solve_constraint(Sphere(1.0, 1), c)
    th = 2.0 * math.pi * np.arange(count) / count
    rad = r * (1.0 + amplitude * np.cos(mode * th))
    return np.column_stack([rad * np.cos(th), rad * np.sin(th)])


def format_trajectory(rows, header_lines=()):
    lines = [f"# {h}" for h in header_lines] + [TRAJECTORY_HEADER]
    lines += [f"{int(a)},{b:.15g},{c:.15g},{d:.15g},{e:.6e}" for a, b, c, d, e in rows]
    return "\n".join(lines) + "\n"
