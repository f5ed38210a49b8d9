"""Element kernel dispatch.

The compiled extension is used for real double-precision data when it is
available; complex data (used by complex-step derivative checks) and
installs without a compiler go through the NumPy implementation.
Set ``MPOC_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("MPOC_PURE_PYTHON"):
        raise ImportError
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

HAVE_COMPILED = _compiled is not None
_threads = 1


def set_threads(n):
    """Number of element chunks processed concurrently by the compiled kernels."""
    global _threads
    _threads = max(1, int(n))


def _real(*arrays):
    return all(a.dtype == np.float64 for a in arrays)


def _chunked(fn, n, *arrays):
    if _threads == 1 or n < 2 * _threads:
        return fn(*arrays)
    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, n, _threads + 1).astype(int)
    with ThreadPoolExecutor(_threads) as pool:
        parts = pool.map(lambda ab: fn(*(a[ab[0]:ab[1]] for a in arrays)),
                         zip(bounds[:-1], bounds[1:]))
        return np.concatenate(list(parts))


def contract(left, right, dx):
    if _compiled is not None and _real(left, right, dx):
        return _chunked(_compiled.contract, len(dx), np.ascontiguousarray(left),
                        np.ascontiguousarray(right), np.ascontiguousarray(dx))
    return _kernels_py.contract(left, right, dx)


def gather(coef, dofs, table):
    coef = np.asarray(coef)
    if _compiled is not None and _real(coef, table):
        dofs = np.ascontiguousarray(dofs, dtype=np.int64)
        table = np.ascontiguousarray(table)
        if _threads == 1:
            return _compiled.gather(np.ascontiguousarray(coef), dofs, table)
        return _chunked(lambda d, t: _compiled.gather(coef, d, t), len(dofs), dofs, table)
    return _kernels_py.gather(coef, dofs, table)


def integrate(left, weight, dx):
    if _compiled is not None and _real(left, weight, dx):
        return _chunked(_compiled.integrate, len(dx), np.ascontiguousarray(left),
                        np.ascontiguousarray(weight), np.ascontiguousarray(dx))
    return _kernels_py.integrate(left, weight, dx)
