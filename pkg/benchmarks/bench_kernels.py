"""Compiled versus NumPy element kernels.

Times the three kernels on random element data and a full transport
assembly on a refined mesh, and checks that both paths agree.

    python benchmarks/bench_kernels.py [--elements N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from mpoc.fem import _kernels_py, kernels
from mpoc.fem import assembly as asm
from mpoc.fem.spaces import SpaceSet
from mpoc.mesh import rectangle_mesh


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--elements", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels.HAVE_COMPILED:
        print("compiled kernels not available; only the NumPy path can be timed")
    rng = np.random.default_rng(0)
    ne, q = args.elements, 6
    left = rng.standard_normal((ne, 6, q))
    right = rng.standard_normal((ne, 6, q))
    dx = rng.random((ne, q))
    coef = rng.standard_normal(4 * ne)
    dofs = rng.integers(0, 4 * ne, (ne, 6))
    weight = rng.standard_normal((ne, q))

    cases = {
        "contract": (lambda: _kernels_py.contract(left, right, dx),
                     lambda: kernels.contract(left, right, dx)),
        "gather": (lambda: _kernels_py.gather(coef, dofs, left),
                   lambda: kernels.gather(coef, dofs, left)),
        "integrate": (lambda: _kernels_py.integrate(left, weight, dx),
                      lambda: kernels.integrate(left, weight, dx)),
    }
    n = int(np.sqrt(ne / 2))
    S = SpaceSet(rectangle_mesh(n, n))
    a = rng.standard_normal(2 * S.n2)
    rho = 1.0 + rng.random(S.dx.shape)

    def assemble():
        return asm.assemble_Btilde(S, rho, a)

    print(f"{'kernel':<12}{'numpy [ms]':>12}{'compiled [ms]':>15}{'speedup':>10}{'max diff':>12}")
    for name, (py, cy) in cases.items():
        tp, tc = best(py, args.repeat), best(cy, args.repeat)
        diff = np.abs(py() - cy()).max()
        print(f"{name:<12}{1e3 * tp:>12.2f}{1e3 * tc:>15.2f}{tp / tc:>10.1f}{diff:>12.1e}")
    tc = best(assemble, args.repeat)
    saved = kernels._compiled
    kernels._compiled = None
    try:
        tp = best(assemble, args.repeat)
        ref = assemble()
    finally:
        kernels._compiled = saved
    diff = abs(ref - assemble()).max()
    print(f"{'assembly':<12}{1e3 * tp:>12.2f}{1e3 * tc:>15.2f}{tp / tc:>10.1f}{diff:>12.1e}"
          f"   ({S.nt} triangles)")


if __name__ == "__main__":
    main()
