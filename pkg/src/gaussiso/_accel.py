"""Optional numba acceleration.

Setting ``GAUSSISO_NO_NUMBA=1`` in the environment (before import) makes
every kernel run its pure-numpy implementation instead.
"""

import os

DISABLED = os.environ.get("GAUSSISO_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is present, else an identity decorator.

    The compiled function is always built when numba is installed so the
    benchmark can compare both paths; ``USE_NUMBA`` only controls which one
    the public kernels dispatch to.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)
