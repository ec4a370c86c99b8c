from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..ensemble import HermitianMatrix
from . import kernels

EPS = float(np.finfo(np.float64).eps)


class SolverError(RuntimeError):
    """QL iteration did not converge; ``index`` is the stuck eigenvalue."""

    def __init__(self, message: str, index: int = -1):
        super().__init__(message)
        self.index = index


class CertificationError(SolverError):
    pass


@dataclass(eq=False)
class TridiagonalForm:
    """``T = q^* H q`` with diagonal ``d`` and nonnegative off-diagonal ``e``.

    ``q`` is None when the reduction was run on the eigenvalue-only path.
    """

    d: np.ndarray
    e: np.ndarray
    q: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def dense(self) -> np.ndarray:
        return np.diag(self.d) + np.diag(self.e, 1) + np.diag(self.e, -1)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "d", "e"])
            for i in range(self.n):
                w.writerow([i, f"{self.d[i]:.17g}", f"{self.e[i]:.17g}" if i < self.n - 1 else ""])


@dataclass(eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residual_bound: float

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def _split(h: HermitianMatrix):
    a = h.entries
    return np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)


def tridiagonalize(h: HermitianMatrix, want_q: bool = True) -> TridiagonalForm:
    if not isinstance(h, HermitianMatrix):
        h = HermitianMatrix(h)
    form, _ = _reduce(h, want_q)
    return form


def _reduce(h: HermitianMatrix, want_q: bool):
    n = h.n
    ar, ai = _split(h)
    d = np.empty(n)
    e = np.empty(max(n - 1, 0))
    tau_r = np.zeros(max(n - 1, 0))
    tau_i = np.zeros(max(n - 1, 0))
    kernels.householder_lower(ar, ai, d, e, tau_r, tau_i)
    # diagonal +-1 similarity makes every off-diagonal entry nonnegative
    signs = np.ones(n)
    for k in range(n - 1):
        signs[k + 1] = signs[k] if e[k] >= 0 else -signs[k]
    e = np.abs(e)
    q_parts = None
    q = None
    if want_q:
        qr = np.empty((n, n))
        qi = np.empty((n, n))
        kernels.accumulate_q(ar, ai, tau_r, tau_i, qr, qi)
        qr *= signs
        qi *= signs
        q_parts = (qr, qi)
        q = qr + 1j * qi
    return TridiagonalForm(d=d, e=e, q=q), q_parts


def _phase_fix(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its first non-negligible entry is real and positive."""
    mag = np.abs(v)
    thresh = np.sqrt(EPS) * mag.max(axis=0)
    first = np.argmax(mag > thresh, axis=0)
    lead = v[first, np.arange(v.shape[1])]
    return v * (np.abs(lead) / lead)


def tridiagonal_eigen(t: TridiagonalForm, want_vectors: bool = True, _q_parts=None) -> SpectralDecomposition:
    """Implicit-shift QL on ``t``; vectors are returned in the basis of ``t.q`` when present."""
    n = t.n
    d = t.d.astype(np.float64, copy=True)
    e = np.zeros(n)
    e[: n - 1] = t.e
    if want_vectors:
        if _q_parts is not None:
            wr = np.ascontiguousarray(_q_parts[0].T)
            wi = np.ascontiguousarray(_q_parts[1].T)
        elif t.q is not None:
            wr = np.ascontiguousarray(t.q.real.T)
            wi = np.ascontiguousarray(t.q.imag.T)
        else:
            wr = np.eye(n)
            wi = np.zeros((n, n))
    else:
        wr = np.empty((0, 0))
        wi = np.empty((0, 0))
    stuck = kernels.implicit_ql(d, e, wr, wi, want_vectors, 50 * n)
    if stuck >= 0:
        raise SolverError(f"QL iteration failed to converge for eigenvalue index {stuck}", stuck)
    order = np.argsort(d, kind="stable")
    evals = d[order]
    scale = max(float(np.max(np.abs(evals))), float(np.max(t.e, initial=0.0)), np.finfo(float).tiny)
    vecs = None
    if want_vectors:
        vecs = _phase_fix((wr[order] + 1j * wi[order]).T)
    return SpectralDecomposition(eigenvalues=evals, eigenvectors=vecs, residual_bound=64.0 * n * EPS * scale)


def eigh(h: HermitianMatrix, want_vectors: bool = True) -> SpectralDecomposition:
    """Eigendecomposition of ``h``, ascending, certified before return.

    With vectors, ``residual_bound`` is the measured max_a ||H v_a - mu_a v_a||_2.
    Without them it is the a-priori backward-error bound ``64 n eps ||H||_2``.
    Raises ``CertificationError`` if any invariant fails.
    """
    if not isinstance(h, HermitianMatrix):
        h = HermitianMatrix(h)
    n = h.n
    form, parts = _reduce(h, want_vectors)
    dec = tridiagonal_eigen(form, want_vectors, _q_parts=parts)
    certify(h, dec)
    return dec


def eigvalsh(h: HermitianMatrix) -> np.ndarray:
    return eigh(h, want_vectors=False).eigenvalues


def certify(h: HermitianMatrix, dec: SpectralDecomposition) -> None:
    a = h.entries
    n = h.n
    mu = dec.eigenvalues
    norm2 = max(float(np.max(np.abs(mu))), np.finfo(float).tiny)
    if np.any(np.diff(mu) < 0):
        raise CertificationError("eigenvalues not ascending")
    trace_tol = 1e-10 * n * max(h.norm_max(), np.finfo(float).tiny)
    if abs(mu.sum() - np.trace(a).real) > trace_tol:
        raise CertificationError("trace not conserved")
    frob = float(np.sum(a.real**2 + a.imag**2))
    if abs(float(np.dot(mu, mu)) - frob) > 1e-9 * n * max(h.norm_max() ** 2, 1.0):
        raise CertificationError("Frobenius norm not conserved")
    v = dec.eigenvectors
    if v is None:
        return
    res = a @ v - v * mu
    rmax = float(np.sqrt(np.max(np.sum(res.real**2 + res.imag**2, axis=0))))
    if rmax > 1e-10 * n * norm2:
        raise CertificationError(f"residual {rmax:.3e} exceeds certification bound")
    gram = v.conj().T @ v
    gram[np.diag_indices(n)] -= 1.0
    if float(np.max(np.abs(gram))) > 1e-10 * n:
        raise CertificationError("eigenvectors not orthonormal")
    dec.residual_bound = rmax


def interlacing_check(h_decomp: SpectralDecomposition, minor_decomp: SpectralDecomposition):
    """Check mu_1 <= lam_1 <= mu_2 <= ... <= lam_{n-1} <= mu_n.

    Returns ``(ok, worst)``, where ``worst`` is the largest signed violation
    (negative when every inequality holds strictly).  The slack is twice the
    sum of both residual bounds.
    """
    mu = h_decomp.eigenvalues
    lam = minor_decomp.eigenvalues
    if lam.shape[0] != mu.shape[0] - 1:
        raise ValueError(f"dimension mismatch: {mu.shape[0]} and {lam.shape[0]}")
    if lam.shape[0] == 0:
        return True, -np.inf
    slack = 2.0 * (h_decomp.residual_bound + minor_decomp.residual_bound)
    worst = float(max(np.max(mu[:-1] - lam), np.max(lam - mu[1:])))
    return worst <= slack, worst
