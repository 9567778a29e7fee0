"""Bracketing scalar root finder.

Bisection that promotes to secant steps while they keep shrinking the
bracket quickly, and falls back to bisection when they do not.
"""

from dataclasses import dataclass

from .errors import NoBracket

MAXITER = 200


@dataclass(frozen=True)
class RootResult:
    root: float
    value: float
    iterations: int
    converged: bool


def bracket_root(f, a, b, xtol=1e-14, ftol=0.0, maxiter=MAXITER):
    """Find a sign change of ``f`` inside ``[a, b]``.

    Raises ``NoBracket`` if ``f(a)`` and ``f(b)`` have the same strict sign.
    Stops when the bracket is shorter than ``xtol * max(1, |x|)`` or when
    ``|f| <= ftol``.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return RootResult(a, fa, 0, True)
    if fb == 0.0:
        return RootResult(b, fb, 0, True)
    if (fa > 0) == (fb > 0):
        raise NoBracket(f"no sign change on [{a}, {b}]: f={fa:.3g}, {fb:.3g}")
    width = abs(b - a)
    x, fx = a, fa
    for it in range(1, maxiter + 1):
        # secant candidate from the bracket ends (regula falsi)
        s = b - fb * (b - a) / (fb - fa)
        lo, hi = min(a, b), max(a, b)
        if lo < s < hi and abs(b - a) < 0.5 * width:
            x = s
        else:
            x = 0.5 * (a + b)
        width = abs(b - a)
        fx = f(x)
        if fx == 0.0 or abs(fx) <= ftol:
            return RootResult(x, fx, it, True)
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        if abs(b - a) <= xtol * max(1.0, abs(x)):
            x = a if abs(fa) < abs(fb) else b
            return RootResult(x, fa if x == a else fb, it, True)
    x = a if abs(fa) < abs(fb) else b
    return RootResult(x, fa if x == a else fb, maxiter, False)


def expand_bracket(f, x0, step, limit, grow=2.0):
    """Walk right from ``x0`` until ``f`` changes sign; return the bracket.

    Raises ``NoBracket`` once the walk passes ``limit``.
    """
    a, fa = x0, f(x0)
    b = x0 + step
    while b <= limit:
        fb = f(b)
        if (fa > 0) != (fb > 0) or fb == 0.0:
            return a, b
        a, fa = b, fb
        step *= grow
        b = a + step
    raise NoBracket(f"no sign change found up to {limit}")
