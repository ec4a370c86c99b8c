"""Compiled helpers for matrix sampling."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def fill_hermitian(zr, zi, diag, scale, h):
    """Write upper-triangle draws (row-major) and their conjugates into ``h``."""
    n = h.shape[0]
    p = 0
    for i in range(n):
        h[i, i] = complex(diag[i] * scale, 0.0)
        for j in range(i + 1, n):
            h[i, j] = complex(zr[p] * scale, zi[p] * scale)
            h[j, i] = complex(zr[p] * scale, -zi[p] * scale)
            p += 1


@njit(cache=True, fastmath=True)
def polar_to_cartesian(r, theta, out_r, out_i):
    for i in range(r.shape[0]):
        out_r[i] = r[i] * np.cos(theta[i])
        out_i[i] = r[i] * np.sin(theta[i])
