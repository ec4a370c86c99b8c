"""Spectral functionals of a Hermitian matrix and the resolvent/minor identities.

Intervals are closed; an eigenvalue sitting exactly on an endpoint is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolver import SpectralDecomposition, eigh
from .ensemble import HermitianMatrix, minor


@dataclass(frozen=True)
class SpectralPoint:
    e: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.e, self.eta)


@dataclass(frozen=True)
class SpectralInterval:
    e: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"interval width must be positive, got {self.width}")

    @property
    def lo(self) -> float:
        return self.e - self.width / 2

    @property
    def hi(self) -> float:
        return self.e + self.width / 2


@dataclass(frozen=True, eq=False)
class OverlapVector:
    xi: np.ndarray


def _as_point(z) -> SpectralPoint:
    if isinstance(z, SpectralPoint):
        return z
    z = complex(z)
    return SpectralPoint(z.real, z.imag)


def empirical_cdf(eigenvalues: np.ndarray, e: float) -> float:
    """Fraction of eigenvalues <= e."""
    return int(np.searchsorted(eigenvalues, e, side="right")) / len(eigenvalues)


def stieltjes(eigenvalues: np.ndarray, z) -> complex:
    """m(z) = (1/N) sum 1/(mu - z)."""
    z = _as_point(z).z
    return complex(np.mean(1.0 / (np.asarray(eigenvalues) - z)))


def rho_eta(eigenvalues: np.ndarray, point) -> float:
    p = _as_point(point)
    x = np.asarray(eigenvalues) - p.e
    return float(np.mean(p.eta / (x * x + p.eta * p.eta)) / math.pi)


def semicircle_density(e: float) -> float:
    if abs(e) > 2.0:
        return 0.0
    return math.sqrt(4.0 - e * e) / (2.0 * math.pi)


def m_sc(z) -> complex:
    """Stieltjes transform of the semicircle law.

    Both roots of ``m^2 + z m + 1 = 0`` are formed without cancellation; the one
    with positive imaginary part is returned.
    """
    z = _as_point(z).z
    s = np.sqrt(z * z - 4.0 + 0j)
    if (z.conjugate() * s).real < 0:
        s = -s
    big = (-z - s) / 2.0
    small = 1.0 / big
    return complex(small if small.imag > 0 else big)


def self_consistency_residual(m: complex, z) -> float:
    z = _as_point(z).z
    return abs(m + 1.0 / (m + z))


def count_in_interval(eigenvalues: np.ndarray, interval: SpectralInterval) -> int:
    lo = np.searchsorted(eigenvalues, interval.lo, side="left")
    hi = np.searchsorted(eigenvalues, interval.hi, side="right")
    return int(hi - lo)


def overlaps_xi(minor_spectral: SpectralDecomposition, a: np.ndarray, n: int) -> OverlapVector:
    """xi_alpha = |sqrt(n) u_alpha^* a|^2 for the minor eigenvectors u_alpha.

    The completeness identity sum(xi) = n ||a||^2 is enforced to 1e-9 n.
    """
    u = minor_spectral.eigenvectors
    if u is None:
        raise ValueError("overlaps need minor eigenvectors")
    proj = u.conj().T @ a
    xi = n * (proj.real**2 + proj.imag**2)
    total = n * float(np.vdot(a, a).real)
    if abs(xi.sum() - total) > 1e-9 * n * max(total, 1.0):
        raise ArithmeticError("overlap completeness violated; minor eigenbasis is not orthonormal")
    return OverlapVector(xi)


def minor_resolvent_entry(h_kk: float, xi: np.ndarray, minor_evals: np.ndarray, n: int, z) -> complex:
    z = _as_point(z).z
    return complex(1.0 / (h_kk - z - np.sum(xi / (minor_evals - z)) / n))


def resolvent_diag_minor(h: HermitianMatrix, k: int, z, *, minor_spectral: SpectralDecomposition | None = None):
    """(H - z)^{-1}(k, k) by a dense solve and through the minor expansion.

    Returns ``(direct, via_minor)``.  Agreement is expected to ``1e-8 / eta^2``.
    """
    p = _as_point(z)
    n = h.n
    if n < 2:
        raise ValueError("minor expansion needs n >= 2")
    rhs = np.zeros(n, dtype=np.complex128)
    rhs[k] = 1.0
    direct = complex(np.linalg.solve(h.entries - p.z * np.eye(n), rhs)[k])
    md = minor(h, k)
    if minor_spectral is None:
        minor_spectral = eigh(md.b, want_vectors=True)
    xi = overlaps_xi(minor_spectral, md.a, n).xi
    return direct, minor_resolvent_entry(md.h_kk, xi, minor_spectral.eigenvalues, n, p)


def basic_count_bound(eigenvalues: np.ndarray, e: float, eta: float):
    """N_I <= (5/4) N eta Im m(E + i eta) for I = [E - eta/2, E + eta/2].

    Returns ``(lhs, rhs, ok)``; ``ok`` allows a relative rounding slack of 1e-12.
    """
    n = len(eigenvalues)
    lhs = count_in_interval(eigenvalues, SpectralInterval(e, eta))
    rhs = 1.25 * n * eta * stieltjes(eigenvalues, SpectralPoint(e, eta)).imag
    return lhs, rhs, lhs <= rhs * (1.0 + 1e-12)


def minor_stieltjes_gap(h_evals: np.ndarray, minor_evals: np.ndarray, z, slack: float = 0.0):
    """|m(z) - (1 - 1/N) m^(k)(z)| against pi/(N eta).

    ``slack`` absorbs eigenvalue errors; pass the solver residual bounds
    divided by eta^2.  Returns ``(gap, bound, ok)``.
    """
    p = _as_point(z)
    n = len(h_evals)
    m = stieltjes(h_evals, p)
    mk = stieltjes(minor_evals, p) if len(minor_evals) else 0.0
    gap = abs(m - (1.0 - 1.0 / n) * mk)
    bound = math.pi / (n * p.eta)
    return gap, bound, gap <= bound + slack


def x_and_z_statistics(xi: OverlapVector | np.ndarray, minor_evals: np.ndarray, z, interval: SpectralInterval):
    """(1/N) sum (xi - 1)/(lambda - z) and the overlap mass inside ``interval``.

    N is the full dimension, one more than the number of minor eigenvalues.
    """
    xi = xi.xi if isinstance(xi, OverlapVector) else np.asarray(xi)
    p = _as_point(z)
    n = len(minor_evals) + 1
    x_stat = complex(np.sum((xi - 1.0) / (minor_evals - p.z)) / n)
    lo = np.searchsorted(minor_evals, interval.lo, side="left")
    hi = np.searchsorted(minor_evals, interval.hi, side="right")
    return x_stat, float(np.sum(xi[lo:hi]))


def stieltjes_via_minors(h: HermitianMatrix, z) -> complex:
    """m(z) rebuilt as the average over k of the minor expansion of G_kk."""
    p = _as_point(z)
    n = h.n
    total = 0j
    for k in range(n):
        md = minor(h, k)
        dec = eigh(md.b, want_vectors=True)
        xi = overlaps_xi(dec, md.a, n).xi
        total += minor_resolvent_entry(md.h_kk, xi, dec.eigenvalues, n, p)
    return total / n
