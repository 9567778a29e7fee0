"""Time the numba and pure-numpy variant of every hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--kernels zonal_sum,...] [--end-to-end]

Inputs are sized like the default grids.  Each numba kernel is called once
before timing so compilation is excluded.  ``--end-to-end`` also times a
flow run and an identity check in fresh interpreters with and without
GAUSSISO_NO_NUMBA=1.
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from gaussiso import _kernels
from gaussiso.geometry import Ellipsoid, Sphere, polar_curve, quadrature_grid
from gaussiso.lambda_solver import perturbed_circle


def _inputs():
    rng = np.random.default_rng(0)
    sphere = quadrature_grid(Sphere(1.5, 2))
    ell = quadrature_grid(Ellipsoid((2.0, 1.0, 0.7)), 512)
    wavy = quadrature_grid(polar_curve(lambda t: 1.0 + 0.3 * np.cos(6.0 * t), 2048))
    indptr, indices = wavy.adjacency()
    fvals = np.ascontiguousarray(wavy.points[:, 0] * wavy.normals[:, 1] - wavy.points[:, 1] * wavy.normals[:, 0])
    m = 2048
    cos = np.clip(rng.uniform(-1, 1, (256, 256)), -1, 1)
    vs = rng.standard_normal((256, 3))
    vs /= np.linalg.norm(vs, axis=1)[:, None]
    ws = rng.standard_normal((256, 3))
    ws /= np.linalg.norm(ws, axis=1)[:, None]
    curve = np.ascontiguousarray(perturbed_circle(0.5, 512))
    return {
        "gammainc_p": (2.5, np.linspace(0.0, 40.0, 4096)),
        "gammainc_q": (2.5, np.linspace(0.0, 40.0, 4096)),
        "zonal_sum": (cos, rng.standard_normal(32), 0.5),
        "cyclic_tridiag_solve": (np.full(m, -1.0), np.full(m, 3.0), np.full(m, -1.0), rng.standard_normal((m, 2))),
        "polyline_self_intersects": (curve,),
        "sign_components": (fvals, 1e-9, indptr, indices),
        "pair_integrals": (np.ascontiguousarray(ell.normals), ell.weights, np.ascontiguousarray(ell.shape)),
        "bilinear_values": (vs, ws, np.ascontiguousarray(sphere.normals), np.ascontiguousarray(sphere.shape),
                            sphere.A2, sphere.weights, 3.0),
        "product_moments": (rng.standard_normal((1 << 16, 3)), np.array([1.0, 0, 0]), np.array([0.6, 0.8, 0])),
    }


def bench_kernel(name, args, repeat):
    rows = {}
    for label, flag in (("numba", True), ("numpy", False)):
        fn = _kernels.variant(name, numba=flag)
        fn(*args)  # compile / warm caches
        number = 1
        while True:
            t = timeit.timeit(lambda fn=fn: fn(*args), number=number)
            if t > 0.05 or number >= 1 << 12:
                break
            number *= 4
        rows[label] = min(timeit.repeat(lambda fn=fn: fn(*args), number=number, repeat=repeat)) / number
    return rows


END_TO_END = (
    "from gaussiso.lambda_solver import mcf_minimize, perturbed_circle; "
    "from gaussiso.geometry import Sphere, make_surface, quadrature_grid; "
    "from gaussiso.variation import random_bilinear; "
    "mcf_minimize(perturbed_circle(0.5, 512), 0.5); "
    "s = make_surface(Sphere(1.5, 2)); random_bilinear(quadrature_grid(s), s.lam, trials=1000, seed=0)"
)


def end_to_end():
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, GAUSSISO_NO_NUMBA=flag)
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-c", END_TO_END], check=True, env=env)
        out[label] = time.perf_counter() - t0
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--kernels", default=None, help="comma-separated subset")
    p.add_argument("--end-to-end", action="store_true")
    args = p.parse_args(argv)
    inputs = _inputs()
    names = args.kernels.split(",") if args.kernels else list(inputs)
    print(f"{'kernel':26s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>9s}")
    for name in names:
        t = bench_kernel(name, inputs[name], args.repeat)
        print(f"{name:26s} {1e3 * t['numba']:12.4f} {1e3 * t['numpy']:12.4f} {t['numpy'] / t['numba']:9.2f}")
    if args.end_to_end:
        t = end_to_end()
        print(f"\nflow + 1000 bilinear trials, fresh interpreter (includes JIT compile):"
              f" numba {t['numba']:.2f}s, numpy {t['numpy']:.2f}s")


if __name__ == "__main__":
    main()
