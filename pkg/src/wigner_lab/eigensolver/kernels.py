"""Compiled kernels: Householder reduction, Q accumulation, implicit QL.

Complex matrices are carried as separate real and imaginary float64 arrays so
the inner loops vectorize.  Inner loop indices are uint64: numba then skips
negative-index wraparound, which otherwise blocks vectorization.
"""

import numpy as np
from numba import njit, uint64

_FM = {"reassoc", "contract", "nsz", "arcp"}
_EPS = np.finfo(np.float64).eps
_SAFMIN = np.finfo(np.float64).tiny


@njit(cache=True, fastmath=_FM)
def householder_lower(ar, ai, d, e, tau_r, tau_i):
    """Reduce the Hermitian matrix held in the lower triangle of (ar, ai).

    On exit ``d``/``e`` hold the real tridiagonal, and column k below the
    subdiagonal holds reflector k (its leading 1 implicit), with
    ``H_k = I - tau_k v_k v_k^*`` and ``Q = H_0 H_1 ... H_{n-2}``.
    """
    n = ar.shape[0]
    nu = uint64(n)
    one = uint64(1)
    vr = np.zeros(n)
    vi = np.zeros(n)
    pr = np.zeros(n)
    pi = np.zeros(n)
    for k in range(n - 1):
        d[k] = ar[k, k]
        alr = ar[k + 1, k]
        ali = ai[k + 1, k]
        xn2 = 0.0
        for i in range(k + 2, n):
            xn2 += ar[i, k] * ar[i, k] + ai[i, k] * ai[i, k]
        if xn2 == 0.0 and ali == 0.0:
            e[k] = alr
            tau_r[k] = 0.0
            tau_i[k] = 0.0
            continue
        beta = -np.copysign(np.sqrt(alr * alr + ali * ali + xn2), alr)
        tr = (beta - alr) / beta
        ti = -ali / beta
        dr = alr - beta
        den = dr * dr + ali * ali
        sr = dr / den
        si = -ali / den
        vr[k + 1] = 1.0
        vi[k + 1] = 0.0
        for i in range(k + 2, n):
            xr = ar[i, k]
            xi = ai[i, k]
            vr[i] = xr * sr - xi * si
            vi[i] = xr * si + xi * sr
            ar[i, k] = vr[i]
            ai[i, k] = vi[i]
        e[k] = beta
        tau_r[k] = tr
        tau_i[k] = ti
        m0 = uint64(k + 1)
        for i in range(m0, nu):
            pr[i] = 0.0
            pi[i] = 0.0
        # p = A v from the lower triangle: row dot plus scatter of the mirrored half
        for i in range(m0, nu):
            s1 = 0.0
            s2 = 0.0
            a = vr[i]
            b = vi[i]
            for j in range(m0, i):
                x = ar[i, j]
                y = ai[i, j]
                s1 += x * vr[j] - y * vi[j]
                s2 += x * vi[j] + y * vr[j]
                pr[j] += x * a + y * b
                pi[j] += x * b - y * a
            pr[i] += s1 + ar[i, i] * vr[i]
            pi[i] += s2 + ar[i, i] * vi[i]
        # w = tau p - (tau/2) (p^* v) tau v
        dotr = 0.0
        doti = 0.0
        for i in range(m0, nu):
            xr = tr * pr[i] - ti * pi[i]
            xi = tr * pi[i] + ti * pr[i]
            pr[i] = xr
            pi[i] = xi
            dotr += xr * vr[i] + xi * vi[i]
            doti += xr * vi[i] - xi * vr[i]
        a2r = -0.5 * (tr * dotr - ti * doti)
        a2i = -0.5 * (tr * doti + ti * dotr)
        for i in range(m0, nu):
            pr[i] += a2r * vr[i] - a2i * vi[i]
            pi[i] += a2r * vi[i] + a2i * vr[i]
        # A -= v w^* + w v^*
        for i in range(m0, nu):
            a = vr[i]
            b = vi[i]
            c = pr[i]
            dd = pi[i]
            for j in range(m0, i + one):
                ar[i, j] -= a * pr[j] + b * pi[j] + c * vr[j] + dd * vi[j]
                ai[i, j] -= b * pr[j] - a * pi[j] + dd * vr[j] - c * vi[j]
            ai[i, i] = 0.0
    d[n - 1] = ar[n - 1, n - 1]


@njit(cache=True, fastmath=_FM)
def accumulate_q(ar, ai, tau_r, tau_i, qr, qi):
    """Form Q (row-major) from the reflectors left in (ar, ai) by ``householder_lower``."""
    n = ar.shape[0]
    nu = uint64(n)
    for i in range(n):
        for j in range(n):
            qr[i, j] = 0.0
            qi[i, j] = 0.0
        qr[i, i] = 1.0
    vr = np.zeros(n)
    vi = np.zeros(n)
    yr = np.zeros(n)
    yi = np.zeros(n)
    for k in range(n - 2, -1, -1):
        tr = tau_r[k]
        ti = tau_i[k]
        if tr == 0.0 and ti == 0.0:
            continue
        m0 = uint64(k + 1)
        vr[k + 1] = 1.0
        vi[k + 1] = 0.0
        for i in range(k + 2, n):
            vr[i] = ar[i, k]
            vi[i] = ai[i, k]
        # y = v^* Q[m0:, m0:]
        for j in range(m0, nu):
            yr[j] = 0.0
            yi[j] = 0.0
        for i in range(m0, nu):
            a = vr[i]
            b = -vi[i]
            for j in range(m0, nu):
                yr[j] += a * qr[i, j] - b * qi[i, j]
                yi[j] += a * qi[i, j] + b * qr[i, j]
        # Q -= tau v y
        for i in range(m0, nu):
            cr = tr * vr[i] - ti * vi[i]
            ci = tr * vi[i] + ti * vr[i]
            for j in range(m0, nu):
                qr[i, j] -= cr * yr[j] - ci * yi[j]
                qi[i, j] -= cr * yi[j] + ci * yr[j]


@njit(cache=True, fastmath=_FM)
def _rotate_rows(wr, wi, i, c, s):
    # rows (i, i+1) <- (c x - s y, s x + c y)
    w = uint64(wr.shape[1])
    i0 = uint64(i)
    i1 = uint64(i + 1)
    for k in range(uint64(0), w):
        f = wr[i1, k]
        g = wr[i0, k]
        wr[i1, k] = s * g + c * f
        wr[i0, k] = c * g - s * f
    for k in range(uint64(0), w):
        f = wi[i1, k]
        g = wi[i0, k]
        wi[i1, k] = s * g + c * f
        wi[i0, k] = c * g - s * f


@njit(cache=True)
def implicit_ql(d, e, wr, wi, want_vectors, max_iter):
    """Implicit QL with Wilkinson shift on the tridiagonal (d, e).

    ``e`` has length n with ``e[n-1]`` unused.  When ``want_vectors`` is set the
    rotations are applied to rows of (wr, wi), whose row i becomes the
    eigenvector for ``d[i]``.  Returns -1 on success, otherwise the index of
    the eigenvalue that failed to converge within ``max_iter`` total sweeps.
    """
    n = d.shape[0]
    if n == 0:
        return -1
    e[n - 1] = 0.0
    total = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd or abs(e[m]) <= _SAFMIN:
                    break
                m += 1
            if m == l:
                break
            total += 1
            if total > max_iter:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.sqrt(g * g + 1.0)
            g = d[m] - d[l] + e[l] / (g + np.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.sqrt(f * f + g * g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    _rotate_rows(wr, wi, i, c, s)
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1
