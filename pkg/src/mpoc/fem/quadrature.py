"""Quadrature rules on the reference triangle and on [0, 1]."""
import numpy as np

_a1 = 0.44594849091596488632
_b1 = 1.0 - 2.0 * _a1
_a2 = 0.09157621350977074346
_b2 = 1.0 - 2.0 * _a2
_w1 = 0.22338158967801146570
_w2 = 1.0 / 3.0 - _w1

#: barycentric coordinates (Q, 3) of the 6-point rule, exact for degree 4
TRI_BARY = np.array([
    [_b1, _a1, _a1], [_a1, _b1, _a1], [_a1, _a1, _b1],
    [_b2, _a2, _a2], [_a2, _b2, _a2], [_a2, _a2, _b2],
])
#: weights summing to 1; multiply by the triangle area
TRI_WEIGHTS = np.array([_w1, _w1, _w1, _w2, _w2, _w2])


def gauss_line(n=3):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
