"""Seeded sample loop with an order-independent merge.

Sample ``s`` of a run is drawn from ``stream_seed(master_seed, s)``, so the set
of matrices is fixed by the config alone.  Reducers turn one sample into a
``Record``; records fold into a ``Tally`` whose merge is exact and commutative
(integer counters, correctly rounded float sums, pattern histograms, and
index-keyed value lists).  Splitting the index range across any number of
worker processes therefore yields bit-identical aggregates.
"""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..eigensolver import SolverError, eigh
from ..ensemble import EntryDistributionSpec, sample_wigner, stream_seed
from .estimators import ExactSum

log = logging.getLogger(__name__)

FAILURE_LIMIT = 1e-3


class ExperimentAborted(RuntimeError):
    """Too many samples failed in the eigensolver."""


def available_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    spec: EntryDistributionSpec = field(default_factory=EntryDistributionSpec)
    n_samples: int = 100
    master_seed: int = 0
    e: float = 0.0
    grid: tuple[float, ...] | None = None
    k: int = 2
    p_norm: float = 2.0
    workers: int = 1
    kappa: float = 0.5
    delta: float = 0.1
    m: int = 4

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not 0 < self.kappa < 2:
            raise ValueError(f"kappa must lie in (0, 2), got {self.kappa}")
        if not abs(self.e) < 2 - self.kappa:
            raise ValueError(f"energy E={self.e} violates |E| < 2 - kappa = {2 - self.kappa}")
        if self.grid is not None:
            g = tuple(float(x) for x in self.grid)
            check_grid(g, "grid")
            object.__setattr__(self, "grid", g)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.p_norm >= 2:
            raise ValueError(f"p must be >= 2, got {self.p_norm}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    def with_(self, **changes) -> "ExperimentConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentConfig(**d)


def check_grid(g, name: str, allow_zero: bool = False) -> None:
    if len(g) == 0:
        raise ValueError(f"{name} must not be empty")
    lo_ok = (lambda x: x >= 0) if allow_zero else (lambda x: x > 0)
    if not all(lo_ok(x) and math.isfinite(x) for x in g):
        raise ValueError(f"{name} entries must be {'nonnegative' if allow_zero else 'positive'} and finite")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise ValueError(f"{name} must be sorted strictly ascending")


@dataclass
class Record:
    """What one sample contributes.  Every field is optional."""

    counts: dict = field(default_factory=dict)
    sums: dict = field(default_factory=dict)
    patterns: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)


class Tally:
    def __init__(self):
        self.counts: dict[str, np.ndarray] = {}
        self.sums: dict[str, list[ExactSum]] = {}
        self.patterns: dict[str, Counter] = {}
        self.values: dict[str, list] = {}
        self.n_used = 0
        self.n_censored = 0
        self.n_failed = 0
        self.failed: list[int] = []

    @property
    def n_seen(self) -> int:
        return self.n_used + self.n_censored + self.n_failed

    def add(self, rec: Record, index: int) -> None:
        self.n_used += 1
        for name, c in rec.counts.items():
            c = np.atleast_1d(np.asarray(c, dtype=np.int64))
            if name in self.counts:
                self.counts[name] += c
            else:
                self.counts[name] = c.copy()
        for name, s in rec.sums.items():
            s = np.atleast_1d(np.asarray(s, dtype=np.float64))
            acc = self.sums.setdefault(name, [ExactSum() for _ in range(s.size)])
            for a, x in zip(acc, s):
                a.add(x)
        for name, p in rec.patterns.items():
            self.patterns.setdefault(name, Counter())[p] += 1
        for name, v in rec.values.items():
            self.values.setdefault(name, []).append((index, np.atleast_1d(np.asarray(v))))

    def merge(self, other: "Tally") -> None:
        for name, c in other.counts.items():
            if name in self.counts:
                self.counts[name] += c
            else:
                self.counts[name] = c.copy()
        for name, acc in other.sums.items():
            mine = self.sums.setdefault(name, [ExactSum() for _ in acc])
            for a, b in zip(mine, acc):
                a.merge(b)
        for name, c in other.patterns.items():
            self.patterns.setdefault(name, Counter()).update(c)
        for name, v in other.values.items():
            self.values.setdefault(name, []).extend(v)
        self.n_used += other.n_used
        self.n_censored += other.n_censored
        self.n_failed += other.n_failed
        self.failed.extend(other.failed)

    def count(self, name: str) -> np.ndarray:
        return self.counts[name]

    def total(self, name: str) -> np.ndarray:
        return np.array([a.value for a in self.sums[name]])

    def collected(self, name: str) -> np.ndarray:
        """Stored per-sample values, concatenated in sample-index order."""
        items = sorted(self.values.get(name, []), key=lambda t: t[0])
        if not items:
            return np.empty(0)
        return np.concatenate([v for _, v in items])

    def bookkeeping(self) -> dict:
        return {"n_used": self.n_used, "n_censored": self.n_censored, "n_failed": self.n_failed}


class Reducer:
    """Per-sample statistic.

    ``want_vectors`` selects the eigenvector path; ``needs_decomposition``
    False hands the reducer ``dec=None``.  Returning None censors the sample.
    """

    want_vectors = False
    needs_decomposition = True

    def __call__(self, h, dec, config: ExperimentConfig, index: int) -> Record | None:
        raise NotImplementedError


def _run_range(config: ExperimentConfig, reducer: Reducer, start: int, stop: int) -> Tally:
    t = Tally()
    for s in range(start, stop):
        h = sample_wigner(config.n, config.spec, stream_seed(config.master_seed, s))
        try:
            dec = eigh(h, reducer.want_vectors) if reducer.needs_decomposition else None
            rec = reducer(h, dec, config, s)
        except (SolverError, ArithmeticError) as exc:
            log.warning("sample %d failed: %s", s, exc)
            t.n_failed += 1
            t.failed.append(s)
            continue
        if rec is None:
            t.n_censored += 1
        else:
            t.add(rec, s)
    return t


def _chunks(n_samples: int, workers: int):
    size = max(1, min(2000, math.ceil(n_samples / (workers * 8))))
    return [(a, min(a + size, n_samples)) for a in range(0, n_samples, size)]


def _check_failures(t: Tally, n_samples: int) -> None:
    if t.n_failed > FAILURE_LIMIT * n_samples:
        raise ExperimentAborted(
            f"{t.n_failed} of {n_samples} samples failed (limit {FAILURE_LIMIT:.1%}); first failures: {sorted(t.failed)[:10]}"
        )


def run_experiment(config: ExperimentConfig, reducer) -> Tally:
    """Apply ``reducer`` to every sample of ``config`` and merge the records.

    ``reducer`` is a ``Reducer`` instance or a registered name.  Raises
    ``ExperimentAborted`` when more than 0.1% of samples fail.
    """
    if isinstance(reducer, str):
        reducer = make_reducer(reducer, config)
    n = config.n_samples
    workers = min(config.workers, n)
    if workers <= 1:
        tally = _run_range(config, reducer, 0, n)
    else:
        tally = Tally()
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_run_range, config, reducer, a, b) for a, b in _chunks(n, workers)]
            for f in futures:
                tally.merge(f.result())
                _check_failures(tally, n)
    assert tally.n_seen == n
    _check_failures(tally, n)
    return tally


_REGISTRY: dict = {}


def register(name: str):
    def deco(factory):
        _REGISTRY[name] = factory
        return factory

    return deco


def make_reducer(name: str, config: ExperimentConfig) -> Reducer:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown reducer {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(config)


def reducer_names() -> list[str]:
    return sorted(_REGISTRY)
