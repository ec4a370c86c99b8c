from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


class FitRefused(ValueError):
    """Too few populated bins for an exponent fit."""


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    lo: float
    hi: float
    n: int
    n_events: int | None = None


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    slope_stderr: float
    r2: float
    bins_used: int


def tail_probability(n_events: int, n: int, confidence: float = 0.95) -> EstimateWithCI:
    """Proportion with its exact (Clopper-Pearson) two-sided interval."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if not 0 <= n_events <= n:
        raise ValueError(f"events {n_events} outside [0, {n}]")
    a = 1.0 - confidence
    lo = 0.0 if n_events == 0 else float(stats.beta.ppf(a / 2, n_events, n - n_events + 1))
    hi = 1.0 if n_events == n else float(stats.beta.ppf(1 - a / 2, n_events + 1, n - n_events))
    return EstimateWithCI(point=n_events / n, lo=lo, hi=hi, n=n, n_events=n_events)


def mean_estimate(total: float, total_sq: float, n: int, confidence: float = 0.95) -> EstimateWithCI:
    """Sample mean with a normal-approximation interval, from first and second sums."""
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * (n / (n - 1) if n > 1 else 0.0)
    half = stats.norm.ppf(0.5 + confidence / 2) * math.sqrt(var / n)
    return EstimateWithCI(point=mean, lo=mean - half, hi=mean + half, n=n)


def weighted_line_fit(x, y, w) -> ExponentFit:
    """Least squares of y on x with inverse-variance weights ``w``.

    The slope error treats the weights as known variances.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    ss_tot = (w * (y - ym) ** 2).sum()
    ss_res = (w * (y - intercept - slope * x) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        slope_stderr=float(math.sqrt(1.0 / sxx)),
        r2=float(min(max(r2, 0.0), 1.0)),
        bins_used=int(len(x)),
    )


def fit_power_law(scales, n_events, n_trials, min_events: int = 20):
    """Fit P(scale) ~ C scale^s by weighted least squares on log-log axes.

    Bins with fewer than ``min_events`` events are dropped; the variance of
    log p-hat is taken as (1 - p)/(n p).  Returns ``(fit, used_mask)``.
    Raises ``FitRefused`` when fewer than three bins remain.
    """
    scales = np.asarray(scales, float)
    k = np.asarray(n_events, float)
    n = np.broadcast_to(np.asarray(n_trials, float), k.shape)
    used = k >= min_events
    if used.sum() < 3:
        raise FitRefused(
            f"only {int(used.sum())} bins with >= {min_events} events (events per bin: {k.astype(int).tolist()})"
        )
    p = k[used] / n[used]
    var = (1.0 - p) / (n[used] * p)
    # p == 1 has zero variance; cap the weight at that of a single-trial miss
    w = 1.0 / np.maximum(var, 1.0 / n[used] ** 2)
    return weighted_line_fit(np.log(scales[used]), np.log(p), w), used


def hanson_wright_envelope(deltas, tails, a_norm: float) -> float:
    """Largest c with tails <= 4 exp(-c min(d/A, d^2/A^2)) at every populated delta."""
    best = math.inf
    for d, p in zip(deltas, tails):
        if p <= 0:
            continue
        t = min(d / a_norm, (d / a_norm) ** 2)
        if t <= 0:
            continue
        best = min(best, -math.log(p / 4.0) / t)
    return best


def hanson_wright_bound(deltas, a_norm: float, c: float) -> np.ndarray:
    r = np.asarray(deltas, float) / a_norm
    return 4.0 * np.exp(-c * np.minimum(r, r * r))


class ExactSum:
    """Order-independent float accumulator (Shewchuk partials).

    ``value`` is the correctly rounded sum of everything added or merged, so
    the result does not depend on how samples were split across workers.
    """

    __slots__ = ("partials",)

    def __init__(self):
        self.partials: list[float] = []

    def add(self, x: float) -> None:
        x = float(x)
        out = []
        for y in self.partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                out.append(lo)
            x = hi
        out.append(x)
        self.partials = out

    def merge(self, other: "ExactSum") -> None:
        for p in other.partials:
            self.add(p)

    @property
    def value(self) -> float:
        return math.fsum(self.partials)
