"""Gaussian volumes and Gaussian surface areas.

Closed forms cover balls, solid cylinders and slabs; planar regions use a
Green's-theorem quadrature of the Gaussian density; anything else falls
back to summing a quadrature grid.
"""

import math
from dataclasses import dataclass

from . import special
from .errors import NoBracket, UnboundedRegionWithoutClosedForm
from .geometry import (
    CurveSurface,
    Cylinder,
    QuadratureGrid,
    RoundSurface,
    Sphere,
    Strip,
    curve_frame,
    make_surface,
    quadrature_grid,
)
from .roots import bracket_root

LIMIT_AREA = 1.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class MeasureResult:
    value: float
    method: str
    error: float = 0.0


# --------------------------------------------------------------------------
# closed forms

def round_volume(radius, k, complement=False):
    """Gaussian volume of the solid cylinder {|x_1..x_(k+1)| <= r} (any ambient dimension)."""
    v = special.chi2_cdf(radius * radius, k + 1)
    if complement:
        return special.chi2_sf(radius * radius, k + 1)
    return v


def round_perimeter(radius, k):
    """Gaussian area of rS^k x R^(n-k); independent of n."""
    return special.chi_pdf(radius, k + 1)


def planar_region_volume(points, order=4):
    """Gaussian measure of the region enclosed by a counterclockwise
    periodic polyline, as the contour integral of Phi(x) phi(y) dy."""
    frame = curve_frame(points, order)
    dy = frame.speed * frame.tangent[:, 1]
    g = special.norm_cdf(points[:, 0]) * special.norm_pdf(points[:, 1])
    return float(g @ dy)


def gaussian_volume(spec):
    """Gaussian measure of the solid bounded by ``spec``."""
    surface = make_surface(spec)
    if isinstance(surface, RoundSurface):
        return MeasureResult(float(round_volume(surface.radius, surface.k, surface.complement)), "closed-form")
    if isinstance(surface, CurveSurface):
        return MeasureResult(planar_region_volume(surface.samples, surface.order), "quadrature",
                             _curve_volume_error(surface))
    raise UnboundedRegionWithoutClosedForm(f"no volume routine for {surface.kind}")


def _curve_volume_error(surface):
    # difference between the requested stencil and the next coarser one
    other = 2 if surface.order == 4 else 4
    return abs(planar_region_volume(surface.samples, surface.order)
               - planar_region_volume(surface.samples, other))


def gaussian_perimeter(target):
    """Gaussian surface area of a surface (closed form) or a grid (quadrature)."""
    if isinstance(target, QuadratureGrid):
        return MeasureResult(target.perimeter, "quadrature")
    surface = make_surface(target)
    if isinstance(surface, RoundSurface):
        return MeasureResult(float(round_perimeter(surface.radius, surface.k)), "closed-form")
    grid = quadrature_grid(surface)
    coarse = quadrature_grid(surface, max(8, grid.size // 2))
    return MeasureResult(grid.perimeter, "quadrature", abs(grid.perimeter - coarse.perimeter))


def grid_perimeter(surface, grid):
    """Quadrature perimeter of ``grid``, checking it belongs to ``surface``."""
    grid.check_surface(surface)
    return MeasureResult(grid.perimeter, "quadrature")


# --------------------------------------------------------------------------
# volume constraint

def solve_constraint(family, c, tol=1e-13):
    """Free parameter of ``family`` giving Gaussian volume ``c``.

    ``family`` is a Sphere, Cylinder or Strip whose radius/half-width is
    ignored and solved for, or any callable p -> volume that is increasing
    on (0, inf).
    """
    if not 0.0 < c < 1.0:
        raise NoBracket(f"target volume {c} outside (0, 1)")
    if isinstance(family, Sphere):
        k, comp = family.dim, family.complement
    elif isinstance(family, Cylinder):
        k, comp = family.k, family.complement
    elif isinstance(family, Strip):
        k, comp = 0, family.complement
    elif callable(family):
        return _solve_callable(family, c, tol)
    else:
        raise NoBracket(f"cannot solve a volume constraint for {family!r}")
    # work with r^2 through the chi-squared CDF; complement volume decreases in r
    target = 1.0 - c if comp else c
    dof = k + 1
    hi = max(4.0, 2.0 * dof)
    while special.chi2_cdf(hi, dof) < target:
        hi *= 2.0
        if hi > 1e6:
            raise NoBracket("volume target not reached")
    res = bracket_root(lambda x: special.chi2_cdf(x, dof) - target, 0.0, hi, xtol=1e-16)
    r = math.sqrt(res.root)
    # polish in r with a Newton step on the density (keeps |V - c| < 1e-12)
    for _ in range(3):
        err = special.chi2_cdf(r * r, dof) - target
        dens = special.chi_pdf(r, dof)
        if dens <= 0 or abs(err) < 1e-16:
            break
        r -= err / dens
    return r


def _solve_callable(volume, c, tol):
    lo, hi = 1e-12, 1.0
    while volume(hi) < c:
        hi *= 2.0
        if hi > 1e4:
            raise NoBracket("volume target not reached")
    return bracket_root(lambda p: volume(p) - c, lo, hi, xtol=tol).root


# --------------------------------------------------------------------------
# section-one numbers

@dataclass(frozen=True)
class BallExpansion:
    exact: float
    approx: float
    difference: float
    corrected: float

    @property
    def corrected_difference(self):
        return self.exact - self.corrected


def ball_expansion(n, s):
    """Gaussian measure of the ball of radius sqrt(n + s sqrt(2n)) in R^n.

    ``approx`` is Phi(s) + (1 - s^2) phi(s) / sqrt(n).  ``corrected`` uses
    the chi-squared skewness coefficient sqrt(2)/3 in front of the same
    term, which is the actual first Edgeworth correction.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    x = n + s * math.sqrt(2.0 * n)
    exact = special.chi2_cdf(max(x, 0.0), n)
    base = special.norm_cdf(s)
    term = (1.0 - s * s) * float(special.norm_pdf(s)) / math.sqrt(n)
    approx = base + term
    corrected = base + math.sqrt(2.0) / 3.0 * term
    return BallExpansion(exact, approx, exact - approx, corrected)


@dataclass(frozen=True)
class TableRow:
    n: int
    c: float
    r: float
    perimeter: float

    def as_dict(self):
        return {"n": self.n, "c": self.c, "r": self.r, "perimeter": self.perimeter}


def profile_table(dims, c):
    """Radius and boundary area of the measure-c centered ball in R^n, per n."""
    rows = []
    for n in dims:
        if n < 1:
            raise ValueError("dimensions must be >= 1")
        r = solve_constraint(Sphere(1.0, n - 1) if n > 1 else Strip(1.0, 2), c)
        rows.append(TableRow(int(n), float(c), r, float(special.chi_pdf(r, n))))
    return rows


def format_table_csv(rows):
    lines = ["n,c,r,perimeter"]
    lines += [f"{r.n},{r.c:.12g},{r.r:.12g},{r.perimeter:.12g}" for r in rows]
    return "\n".join(lines) + "\n"


def format_table_json(rows, config=None):
    import json
    body = {"rows": [{"n": r.n, "c": float(f"{r.c:.12g}"), "r": float(f"{r.r:.12g}"),
                      "perimeter": float(f"{r.perimeter:.12g}")} for r in rows]}
    if config is not None:
        body = {"config": config, **body}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"
