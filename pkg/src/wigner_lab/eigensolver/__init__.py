"""Dense Hermitian eigensolver: Householder tridiagonalization + implicit QL."""

from .dense import (
    EPS,
    CertificationError,
    SolverError,
    SpectralDecomposition,
    TridiagonalForm,
    certify,
    eigh,
    eigvalsh,
    interlacing_check,
    tridiagonal_eigen,
    tridiagonalize,
)

__all__ = [
    "EPS",
    "CertificationError",
    "SolverError",
    "SpectralDecomposition",
    "TridiagonalForm",
    "certify",
    "eigh",
    "eigvalsh",
    "interlacing_check",
    "tridiagonal_eigen",
    "tridiagonalize",
]
