"""Wigner matrix sampling.

Off-diagonal entries are ``z_ij / sqrt(n)`` with ``z`` drawn from a complex law of
mean 0 and ``E|z|^2 = 1``; diagonal entries are ``x_ii / sqrt(n)`` with a real law
of mean 0 and variance 1.  Laws are either products of i.i.d. real and imaginary
parts or rotationally invariant.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._sampling import fill_hermitian, polar_to_cartesian

OFFDIAGONAL_FAMILIES = ("complex-gaussian", "product-uniform", "radial-uniform", "product-gaussian")
DIAGONAL_FAMILIES = ("real-gaussian", "real-uniform")

# Symmetry branch of each off-diagonal family and its Fourier-decay remark.
# Nothing here is evaluated at runtime.
FAMILY_NOTES = {
    "complex-gaussian": {
        "branch": "radial",
        "sampler": "|z|^2 ~ Exp(1), uniform phase",
        "fourier_decay": "gaussian characteristic function; decay condition holds for every exponent a",
        "critical_delta0": 1.0,
    },
    "product-gaussian": {
        "branch": "product",
        "sampler": "(X + iY)/sqrt(2), X, Y i.i.d. N(0, 1)",
        "fourier_decay": "gaussian characteristic function; decay condition holds for every exponent a",
        "critical_delta0": 1.0,
    },
    "product-uniform": {
        "branch": "product",
        "sampler": "X + iY, X, Y i.i.d. uniform on [-sqrt(3/2), sqrt(3/2)]",
        "fourier_decay": "density is discontinuous on the square boundary; transform decays like |t|^-1 per axis",
        "critical_delta0": math.inf,
    },
    "radial-uniform": {
        "branch": "radial",
        "sampler": "uniform on the disk of radius sqrt(2)",
        "fourier_decay": "density is discontinuous on the circle |z| = sqrt(2); transform decays like |t|^-3/2",
        "critical_delta0": math.inf,
    },
}

DIAGONAL_CRITICAL_DELTA0 = {"real-gaussian": 0.5, "real-uniform": math.inf}

_PRODUCT_UNIFORM_HALF_WIDTH = math.sqrt(1.5)
_DISK_RADIUS = math.sqrt(2.0)
_REAL_UNIFORM_HALF_WIDTH = math.sqrt(3.0)


@dataclass(frozen=True)
class EntryDistributionSpec:
    """Law of the off-diagonal and diagonal entries, both at unit variance."""

    family: str = "complex-gaussian"
    diagonal_family: str = "real-gaussian"

    def __post_init__(self):
        if self.family not in OFFDIAGONAL_FAMILIES:
            raise ValueError(f"unknown entry family {self.family!r}; expected one of {OFFDIAGONAL_FAMILIES}")
        if self.diagonal_family not in DIAGONAL_FAMILIES:
            raise ValueError(
                f"unknown diagonal family {self.diagonal_family!r}; expected one of {DIAGONAL_FAMILIES}"
            )

    @property
    def branch(self) -> str:
        return FAMILY_NOTES[self.family]["branch"]

    @property
    def critical_delta0(self) -> float:
        return FAMILY_NOTES[self.family]["critical_delta0"]

    def to_dict(self) -> dict:
        return {"family": self.family, "diagonal": self.diagonal_family}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EntryDistributionSpec":
        return cls(family=d.get("family", "complex-gaussian"), diagonal_family=d.get("diagonal", "real-gaussian"))

    @classmethod
    def from_json(cls, text: str) -> "EntryDistributionSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class HermitianMatrix:
    """Dense complex Hermitian matrix.  Symmetry is checked exactly on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        a = np.ascontiguousarray(a, dtype=np.complex128)
        if not np.array_equal(a, a.conj().T):
            raise ValueError("matrix is not exactly Hermitian")
        object.__setattr__(self, "entries", a)

    @classmethod
    def _trusted(cls, entries: np.ndarray) -> "HermitianMatrix":
        # skips the O(n^2) symmetry scan for matrices built Hermitian by construction
        obj = object.__new__(cls)
        object.__setattr__(obj, "entries", entries)
        return obj

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def norm_max(self) -> float:
        return float(np.max(np.abs(self.entries)))


@dataclass(frozen=True, eq=False)
class MinorDecomposition:
    """``h`` split as (minor ``b``, removed column ``a`` without its diagonal, ``h_kk``)."""

    b: HermitianMatrix | None
    a: np.ndarray
    h_kk: float
    k: int

    def reassemble(self) -> np.ndarray:
        """Matrix with row/column ``k`` moved to the front: ``[[h_kk, a^*], [a, b]]``."""
        m = self.a.shape[0]
        out = np.empty((m + 1, m + 1), dtype=np.complex128)
        out[0, 0] = self.h_kk
        out[1:, 0] = self.a
        out[0, 1:] = self.a.conj()
        if m:
            out[1:, 1:] = self.b.entries
        return out


def stream_seed(master_seed: int, index: int) -> int:
    """64-bit seed for sample ``index`` of a run, a hash of ``(master_seed, index)``."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def sample_offdiagonal_array(spec: EntryDistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` i.i.d. draws of the off-diagonal law, in draw order."""
    fam = spec.family
    if fam == "complex-gaussian":
        r = np.sqrt(rng.standard_exponential(size))
        return _polar(r, rng.random(size) * (2.0 * np.pi))
    if fam == "product-gaussian":
        xy = rng.standard_normal((size, 2)) * (1.0 / math.sqrt(2.0))
        return xy[:, 0] + 1j * xy[:, 1]
    if fam == "product-uniform":
        xy = rng.uniform(-_PRODUCT_UNIFORM_HALF_WIDTH, _PRODUCT_UNIFORM_HALF_WIDTH, (size, 2))
        return xy[:, 0] + 1j * xy[:, 1]
    if fam == "radial-uniform":
        r = _DISK_RADIUS * np.sqrt(rng.random(size))
        return _polar(r, rng.random(size) * (2.0 * np.pi))
    raise AssertionError(fam)


def _polar(r, theta):
    out = np.empty(r.shape[0], dtype=np.complex128)
    polar_to_cartesian(r, theta, out.real, out.imag)
    return out


def sample_diagonal_array(spec: EntryDistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if spec.diagonal_family == "real-gaussian":
        return rng.standard_normal(size)
    return rng.uniform(-_REAL_UNIFORM_HALF_WIDTH, _REAL_UNIFORM_HALF_WIDTH, size)


def sample_offdiagonal(spec: EntryDistributionSpec, rng: np.random.Generator) -> complex:
    return complex(sample_offdiagonal_array(spec, rng, 1)[0])


def sample_wigner(n: int, spec: EntryDistributionSpec, seed: int) -> HermitianMatrix:
    """Draw one Wigner matrix.

    The upper-triangle entries are drawn first in row-major order, then the
    diagonal, all from one generator seeded with ``seed``.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    rng = make_rng(seed)
    z = sample_offdiagonal_array(spec, rng, n * (n - 1) // 2)
    x = sample_diagonal_array(spec, rng, n)
    h = np.empty((n, n), dtype=np.complex128)
    fill_hermitian(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), x, 1.0 / math.sqrt(n), h)
    return HermitianMatrix._trusted(h)


def minor(h: HermitianMatrix, k: int) -> MinorDecomposition:
    """Remove row and column ``k`` (0-based) from ``h``."""
    n = h.n
    if n < 2:
        raise ValueError("minor needs n >= 2")
    if not 0 <= k < n:
        raise IndexError(f"index {k} out of range for n={n}")
    keep = np.r_[0:k, k + 1 : n]
    b = h.entries[np.ix_(keep, keep)]
    a = h.entries[keep, k].copy()
    return MinorDecomposition(b=HermitianMatrix(b), a=a, h_kk=float(h.entries[k, k].real), k=k)


@dataclass
class MomentReport:
    family: str
    delta0: float
    n_samples: int
    mean: complex
    mean_stderr: float
    second_moment: float
    second_moment_stderr: float
    exp_moment: float
    exp_moment_stderr: float
    exp_moment_half: float
    diverging: bool
    diagonal_mean: float
    diagonal_variance: float
    diagonal_exp_moment: float | None


def verify_moment_conditions(spec: EntryDistributionSpec, delta0: float, n_samples: int, seed: int = 0) -> MomentReport:
    """Empirical first/second moments and ``E exp(delta0 |z|^2)``.

    ``exp_moment_half`` is the estimate on the first half of the draws;
    ``diverging`` is set when it differs from the full estimate by more than 5%.
    """
    if delta0 < 0:
        raise ValueError("delta0 must be nonnegative")
    if delta0 >= spec.critical_delta0:
        raise ValueError(
            f"delta0={delta0} is at or above the critical exponent {spec.critical_delta0} of {spec.family}"
        )
    rng = make_rng(seed)
    total = 2 * n_samples
    z = sample_offdiagonal_array(spec, rng, total)
    x = sample_diagonal_array(spec, rng, total)
    abs2 = z.real**2 + z.imag**2
    w = np.exp(delta0 * abs2)
    half = w[:n_samples].mean()
    full = w.mean()
    diag_exp = None
    if delta0 < DIAGONAL_CRITICAL_DELTA0[spec.diagonal_family]:
        diag_exp = float(np.exp(delta0 * x * x).mean())
    return MomentReport(
        family=spec.family,
        delta0=delta0,
        n_samples=total,
        mean=complex(z.mean()),
        mean_stderr=float(math.sqrt(abs2.var() / total)),
        second_moment=float(abs2.mean()),
        second_moment_stderr=float(abs2.std() / math.sqrt(total)),
        exp_moment=float(full),
        exp_moment_stderr=float(w.std() / math.sqrt(total)),
        exp_moment_half=float(half),
        diverging=bool(abs(half - full) > 0.05 * abs(full)),
        diagonal_mean=float(x.mean()),
        diagonal_variance=float(x.var()),
        diagonal_exp_moment=diag_exp,
    )


_HEADER = struct.Struct("<Q")


def dump_matrix(h: HermitianMatrix, path) -> None:
    """Little-endian: uint64 dimension, then row-major complex128 entries."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(h.n))
        fh.write(h.entries.astype("<c16", copy=False).tobytes(order="C"))


def load_matrix(path) -> HermitianMatrix:
    raw = Path(path).read_bytes()
    (n,) = _HEADER.unpack_from(raw)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if data.size != n * n:
        raise ValueError(f"expected {n * n} entries after header, found {data.size}")
    return HermitianMatrix(data.reshape(n, n).astype(np.complex128))
