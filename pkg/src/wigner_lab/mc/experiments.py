"""Experiments built on the sample loop.

Each experiment returns an ``ExperimentResult`` holding fixed-header tables and
a JSON-ready summary.  Interval conventions: an energy window of width ``w``
around ``E`` is the closed interval ``[E - w/2, E + w/2]``; ``epsilon`` grids
are in units of ``1/N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..eigensolver import SpectralDecomposition, eigh, interlacing_check
from ..ensemble import EntryDistributionSpec, HermitianMatrix, make_rng, minor, sample_offdiagonal_array, stream_seed
from ..spectral import (
    SpectralInterval,
    SpectralPoint,
    basic_count_bound,
    count_in_interval,
    m_sc,
    minor_resolvent_entry,
    minor_stieltjes_gap,
    overlaps_xi,
    semicircle_density,
    stieltjes,
    x_and_z_statistics,
)
from ..tables import Table
from .estimators import (
    ExponentFit,
    FitRefused,
    fit_power_law,
    hanson_wright_bound,
    hanson_wright_envelope,
    mean_estimate,
    tail_probability,
    weighted_line_fit,
)
from .harness import ExperimentConfig, Record, Reducer, Tally, check_grid, register, run_experiment

DEFAULT_ETA_GRID = (0.05, 0.1, 0.2, 0.4)
DEFAULT_EPSILON_GRID = (0.125, 0.25, 0.5, 1.0)
DEFAULT_REPULSION_GRID = (0.25, 0.35, 0.5, 0.7, 1.0)
DEFAULT_K_GRID = (0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0)
DEFAULT_XI_DELTA_GRID = (0.05, 0.075, 0.1, 0.125, 0.15, 0.2)
DEFAULT_HW_DELTA_GRID = (0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0)
DEFAULT_DELOC_WIDTH = 8.0
WEGNER_RATIO_BOUND = 3.0
SEMICIRCLE_K = 300.0

# seed index reserved for post-processing draws (bootstrap), never a sample index
_AUX_INDEX = 2**62


@dataclass
class ExperimentResult:
    name: str
    config: ExperimentConfig
    tables: list[Table]
    summary: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    tally: Tally | None = None

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def bookkeeping(self) -> dict:
        if self.tally is None:
            return {"n_used": self.config.n_samples, "n_censored": 0, "n_failed": 0}
        return self.tally.bookkeeping()


def _grid(config: ExperimentConfig, default) -> tuple[float, ...]:
    return config.grid if config.grid is not None else tuple(default)


def _proportion_cols(k: int, n: int) -> list:
    est = tail_probability(int(k), int(n))
    return [est.point, est.lo, est.hi]


def _fit_dict(fit: ExponentFit | None) -> dict | None:
    if fit is None:
        return None
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_stderr": fit.slope_stderr,
        "r2": fit.r2,
        "bins_used": fit.bins_used,
    }


# ---------------------------------------------------------------- reducers


@register("count")
class CountReducer(Reducer):
    """N_I for a window of width ``grid[0]/N`` (default 1/N) around E."""

    def __init__(self, config: ExperimentConfig):
        self.width = (config.grid[0] if config.grid else 1.0) / config.n

    def __call__(self, h, dec, config, index):
        return Record(counts={"n_i": count_in_interval(dec.eigenvalues, SpectralInterval(config.e, self.width))})


@register("semicircle")
class SemicircleReducer(Reducer):
    def __init__(self, config: ExperimentConfig):
        self.grid = _grid(config, DEFAULT_ETA_GRID)

    def __call__(self, h, dec, config, index):
        mu = dec.eigenvalues
        n = config.n
        rho = semicircle_density(config.e)
        m_exceed = []
        n_exceed = []
        for eta in self.grid:
            p = SpectralPoint(config.e, eta)
            m_exceed.append(abs(stieltjes(mu, p) - m_sc(p)) >= config.delta)
            c = count_in_interval(mu, SpectralInterval(config.e, eta))
            n_exceed.append(abs(c / (n * eta) - rho) >= config.delta)
        return Record(counts={"m_exceed": m_exceed, "count_exceed": n_exceed})


@register("wegner")
class WegnerReducer(Reducer):
    def __init__(self, config: ExperimentConfig):
        self.grid = _grid(config, DEFAULT_EPSILON_GRID)

    def __call__(self, h, dec, config, index):
        mu = dec.eigenvalues
        n = config.n
        counts = []
        m2 = []
        for eps in self.grid:
            eta = eps / n
            counts.append(count_in_interval(mu, SpectralInterval(config.e, eta)))
            m = stieltjes(mu, SpectralPoint(config.e, eta))
            m2.append(n * eta * (m.real**2 + m.imag**2))
        m2 = np.array(m2)
        return Record(patterns={"n_i": tuple(counts)}, sums={"m2": m2, "m2_sq": m2 * m2})


@register("repulsion")
class RepulsionReducer(Reducer):
    def __init__(self, config: ExperimentConfig):
        self.grid = _grid(config, DEFAULT_REPULSION_GRID)

    def __call__(self, h, dec, config, index):
        mu = dec.eigenvalues
        c = np.array([count_in_interval(mu, SpectralInterval(config.e, eps / config.n)) for eps in self.grid])
        return Record(counts={"ge_k": c >= config.k, "ge_1": c >= 1})


class GapReducer(Reducer):
    def __init__(self, k_grid):
        self.k_grid = np.asarray(k_grid, float)

    def __call__(self, h, dec, config, index):
        mu = dec.eigenvalues
        n = config.n
        alpha = int(np.searchsorted(mu, config.e, side="right"))
        if alpha == 0 or alpha == n:
            return None
        gap = n * (mu[alpha] - config.e)
        return Record(counts={"exceed": gap >= self.k_grid})


register("gaps")(lambda config: GapReducer(_grid(config, DEFAULT_K_GRID)))


class DelocalizationReducer(Reducer):
    want_vectors = True

    def __init__(self, interval: SpectralInterval, p: float, m_grid):
        self.interval = interval
        self.p = float(p)
        self.m_grid = np.asarray(m_grid, float)

    def __call__(self, h, dec, config, index):
        mu = dec.eigenvalues
        n = config.n
        lo = np.searchsorted(mu, self.interval.lo, side="left")
        hi = np.searchsorted(mu, self.interval.hi, side="right")
        v = np.abs(dec.eigenvectors[:, lo:hi])
        linf = math.sqrt(n) * v.max(axis=0) if v.shape[1] else np.empty(0)
        lp = n ** (0.5 - 1.0 / self.p) * np.sum(v**self.p, axis=0) ** (1.0 / self.p)
        l2dev = np.abs(np.sqrt(np.sum(v * v, axis=0)) - 1.0)
        exceed_vec = (linf[:, None] >= self.m_grid[None, :]).sum(axis=0)
        return Record(
            counts={"n_vectors": linf.size, "exceed_vectors": exceed_vec, "exceed_samples": exceed_vec > 0},
            values={"linf": linf, "lp": lp, "l2dev": l2dev},
        )


register("deloc")(
    lambda config: DelocalizationReducer(
        SpectralInterval(config.e, DEFAULT_DELOC_WIDTH / config.n), config.p_norm, default_m_grid(config.n)
    )
)


@register("concentration")
class OverlapReducer(Reducer):
    """Overlaps of column 0 with the eigenvectors of the corresponding minor."""

    needs_decomposition = False

    def __init__(self, config: ExperimentConfig):
        self.eta = config.grid[0] if config.grid else 0.1

    def __call__(self, h, dec, config, index):
        n = config.n
        md = minor(h, 0)
        mdec = eigh(md.b, want_vectors=True)
        xi = overlaps_xi(mdec, md.a, n).xi
        p = SpectralPoint(config.e, self.eta)
        x, zs = x_and_z_statistics(xi, mdec.eigenvalues, p, SpectralInterval(config.e, self.eta))
        vals = np.array([x.real, x.imag, zs])
        return Record(
            counts={"pairs": xi.size},
            sums={"xi": xi.sum(), "xi_sq": float(np.dot(xi, xi)), "stats": vals, "stats_sq": vals * vals},
        )


class XiTailReducer(Reducer):
    needs_decomposition = False

    def __init__(self, m: int, delta_grid):
        self.m = int(m)
        self.delta = np.asarray(delta_grid, float)

    def __call__(self, h, dec, config, index):
        n = config.n
        md = minor(h, 0)
        mdec = eigh(md.b, want_vectors=True)
        xi = overlaps_xi(mdec, md.a, n).xi
        near = np.argsort(np.abs(mdec.eigenvalues - config.e), kind="stable")[: self.m]
        s = float(xi[near].sum())
        return Record(counts={"below": s <= self.delta * self.m}, sums={"sum": s})


register("xi-tail")(lambda config: XiTailReducer(min(config.m, config.n - 1), _grid(config, DEFAULT_XI_DELTA_GRID)))


CHECKS = ("interlacing", "minor_formula", "minor_stieltjes_gap", "basic_count_bound")


@register("identities")
class IdentityReducer(Reducer):
    """Deterministic identities, checked for every minor of every sample.

    Margins are stored per sample: the worst interlacing violation, and the
    largest ratio of observed to allowed deviation for the other three checks.
    """

    def __init__(self, config: ExperimentConfig):
        self.etas = _grid(config, (0.1,))

    def __call__(self, h, dec, config, index):
        n = config.n
        a = h.entries
        mu = dec.eigenvalues
        checks = np.zeros(4, dtype=np.int64)
        bad = np.zeros(4, dtype=np.int64)
        worst = np.full(4, -np.inf)
        points = [SpectralPoint(config.e, eta) for eta in self.etas]
        ginv = [np.diagonal(np.linalg.inv(a - p.z * np.eye(n))) for p in points]
        for p in points:
            lhs, rhs, ok = basic_count_bound(mu, p.e, p.eta)
            checks[3] += 1
            bad[3] += not ok
            worst[3] = max(worst[3], lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf))
        if n < 2:
            return Record(counts={"checks": checks, "violations": bad}, values={"worst": worst})
        for k in range(n):
            md = minor(h, k)
            mdec = eigh(md.b, want_vectors=True)
            ok, w = interlacing_check(dec, mdec)
            checks[0] += 1
            bad[0] += not ok
            worst[0] = max(worst[0], w)
            xi = overlaps_xi(mdec, md.a, n).xi
            lam = mdec.eigenvalues
            for p, g in zip(points, ginv):
                tol = 1e-8 / p.eta**2
                diff = abs(g[k] - minor_resolvent_entry(md.h_kk, xi, lam, n, p))
                checks[1] += 1
                bad[1] += diff > tol
                worst[1] = max(worst[1], diff / tol)
                slack = 2.0 * (dec.residual_bound + mdec.residual_bound) / p.eta**2
                gap, bound, ok = minor_stieltjes_gap(mu, lam, p, slack=slack)
                checks[2] += 1
                bad[2] += not ok
                worst[2] = max(worst[2], gap / bound)
        return Record(counts={"checks": checks, "violations": bad}, values={"worst": worst})


# ---------------------------------------------------------------- experiments


def default_m_grid(n: int) -> tuple[float, ...]:
    return tuple(sorted({2.0, 3.0, 4.0, 5.0, 6.0, 3.0 * math.sqrt(2.0 * math.log(max(n, 2)))}))


def identity_suite(config: ExperimentConfig) -> ExperimentResult:
    """Interlacing, minor resolvent formula, minor Stieltjes gap and the basic count bound.

    ``config.grid`` lists the eta values (default 0.1); each check runs at
    ``z = E + i eta`` for every minor.
    """
    tally = run_experiment(config, IdentityReducer(config))
    worst = tally.collected("worst").reshape(-1, 4)
    t = Table("identities", ["check", "n_checks", "n_violations", "worst_margin"])
    for j, name in enumerate(CHECKS):
        t.add(name, int(tally.count("checks")[j]), int(tally.count("violations")[j]), float(worst[:, j].max()))
    total = int(tally.count("violations").sum())
    return ExperimentResult(
        "identities", config, [t], {"violations": total, **tally.bookkeeping()}, tally=tally
    )


def count_experiment(config: ExperimentConfig) -> ExperimentResult:
    tally = run_experiment(config, CountReducer(config))
    width = config.grid[0] if config.grid else 1.0
    n_i = int(tally.count("n_i")[0])
    mean = n_i / tally.n_used
    t = Table("count", ["width", "mean_count", "density_ratio", "n_samples"])
    t.add(width, mean, mean / width / semicircle_density(config.e), tally.n_used)
    return ExperimentResult("count", config, [t], {"mean_count": mean}, tally=tally)


def semicircle_concentration(config: ExperimentConfig) -> ExperimentResult:
    """Exceedance of |m - m_sc| >= delta per eta and of the normalized window count per eta*."""
    grid = _grid(config, DEFAULT_ETA_GRID)
    tally = run_experiment(config, SemicircleReducer(config.with_(grid=grid)))
    n = config.n
    used = tally.n_used
    rho = semicircle_density(config.e)
    threshold = SEMICIRCLE_K / (math.pi * rho) / n
    t1 = Table("semicircle", ["eta", "n_eta", "p_exceed", "ci_lo", "ci_hi", "n_samples"])
    t2 = Table("semicircle_count", ["eta_star", "n_eta_star", "p_exceed", "ci_lo", "ci_hi", "n_samples"])
    for j, eta in enumerate(grid):
        t1.add(eta, n * eta, *_proportion_cols(tally.count("m_exceed")[j], used), used)
        t2.add(eta, n * eta, *_proportion_cols(tally.count("count_exceed")[j], used), used)
    summary = {
        "delta": config.delta,
        "eta_threshold": threshold,
        "in_theorem_range": [eta >= threshold for eta in grid],
        "monotone_up_to_ci": ci_monotone(t1),
        **tally.bookkeeping(),
    }
    return ExperimentResult("semicircle", config, [t1, t2], summary, tally=tally)


def ci_monotone(table: Table) -> bool:
    """True when every later p is <= every earlier p or their intervals overlap."""
    p, lo, hi = table.column("p_exceed"), table.column("ci_lo"), table.column("ci_hi")
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[j] > p[i] and lo[j] > hi[i]:
                return False
    return True


def _pattern_arrays(counter):
    keys = sorted(counter)
    values = np.array(keys, dtype=np.int64).reshape(len(keys), -1)
    freq = np.array([counter[k] for k in keys], dtype=np.int64)
    return values, freq


def _integer_moment(values, freq, power):
    """Mean of values**power with a normal interval, computed in exact integers."""
    n = int(freq.sum())
    out = []
    for j in range(values.shape[1]):
        x = [int(v) ** power for v in values[:, j]]
        s1 = sum(int(f) * xv for f, xv in zip(freq, x))
        s2 = sum(int(f) * xv * xv for f, xv in zip(freq, x))
        out.append(mean_estimate(float(s1), float(s2), n))
    return out


def wegner_moments(config: ExperimentConfig, n_boot: int = 2000) -> ExperimentResult:
    """Moments of N_I for windows of width epsilon/N, on the eigenvalue-only path.

    The ratio max/min of E N_I^2 / epsilon gets a multinomial bootstrap
    interval over the joint count patterns.
    """
    grid = _grid(config, DEFAULT_EPSILON_GRID)
    tally = run_experiment(config, WegnerReducer(config.with_(grid=grid)))
    used = tally.n_used
    values, freq = _pattern_arrays(tally.patterns["n_i"])
    m1 = _integer_moment(values, freq, 1)
    m2 = _integer_moment(values, freq, 2)
    mk = _integer_moment(values, freq, config.k)
    s = tally.total("m2")
    s2 = tally.total("m2_sq")
    eps = np.array(grid)
    t = Table(
        "wegner",
        [
            "epsilon", "mean_n", "mean_n_ci_lo", "mean_n_ci_hi",
            "mean_n2", "mean_n2_ci_lo", "mean_n2_ci_hi",
            "k", "mean_nk", "mean_nk_ci_lo", "mean_nk_ci_hi",
            "n_eta_mean_abs_m2", "n_eta_mean_abs_m2_ci_lo", "n_eta_mean_abs_m2_ci_hi",
            "mean_n2_over_epsilon", "density_ratio", "n_samples",
        ],
    )
    for j, e in enumerate(grid):
        am = mean_estimate(s[j], s2[j], used)
        t.add(
            e, m1[j].point, m1[j].lo, m1[j].hi,
            m2[j].point, m2[j].lo, m2[j].hi,
            config.k, mk[j].point, mk[j].lo, mk[j].hi,
            am.point, am.lo, am.hi,
            m2[j].point / e, m1[j].point / e, used,
        )
    ratio_vals = np.array([m.point for m in m2]) / eps
    ratio = float(ratio_vals.max() / ratio_vals.min()) if ratio_vals.min() > 0 else math.inf
    rng = make_rng(stream_seed(config.master_seed, _AUX_INDEX))
    boot = rng.multinomial(used, freq / used, size=n_boot)
    sq = values.astype(float) ** 2
    boot_m2 = (boot @ sq) / used / eps
    mn = boot_m2.min(axis=1)
    boot_ratio = np.full(n_boot, np.inf)
    np.divide(boot_m2.max(axis=1), mn, out=boot_ratio, where=mn > 0)
    lo, hi = np.quantile(boot_ratio, [0.025, 0.975], method="inverted_cdf")
    t_ratio = Table("wegner_ratio", ["ratio", "ci_lo", "ci_hi", "bound", "flagged", "n_samples"])
    t_ratio.add(ratio, float(lo), float(hi), WEGNER_RATIO_BOUND, ratio > WEGNER_RATIO_BOUND, used)
    rho = semicircle_density(config.e)
    summary = {
        "ratio": ratio,
        "ratio_ci": [float(lo), float(hi)],
        "flagged": ratio > WEGNER_RATIO_BOUND,
        "density_ratio_at_largest_epsilon": m1[-1].point / grid[-1],
        "semicircle_density": rho,
        **tally.bookkeeping(),
    }
    return ExperimentResult("wegner", config, [t, t_ratio], summary, tally=tally)


def repulsion_fit(config: ExperimentConfig, k: int | None = None, min_events: int = 20) -> ExperimentResult:
    """Fit log P(N_I >= k) against log epsilon; the k = 1 control is fitted alongside.

    ``fits['k']`` is None with ``summary['refused']`` set when fewer than three
    bins reach ``min_events``.
    """
    k = config.k if k is None else int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grid = _grid(config, DEFAULT_REPULSION_GRID)
    if grid[-1] > 1.0:
        raise ValueError("repulsion epsilon grid must lie in (0, 1]")
    cfg = config.with_(grid=grid, k=k)
    tally = run_experiment(cfg, RepulsionReducer(cfg))
    used = tally.n_used
    t = Table("repulsion", ["k", "epsilon", "n_events", "p", "ci_lo", "ci_hi", "used_in_fit", "n_samples"])
    t_fit = Table("repulsion_fit", ["k", "target", "slope", "slope_stderr", "intercept", "r2", "bins_used"])
    fits = {}
    summary = {"refused": {}}
    orders = [(k, "ge_k")] + ([(1, "ge_1")] if k != 1 else [])
    for order, key in orders:
        events = tally.count(key)
        try:
            fit, mask = fit_power_law(grid, events, used, min_events)
        except FitRefused as exc:
            fit, mask = None, np.zeros(len(grid), bool)
            summary["refused"][str(order)] = str(exc)
        fits["k" if order == k else "control"] = fit
        for j, eps in enumerate(grid):
            t.add(order, eps, int(events[j]), *_proportion_cols(events[j], used), bool(mask[j]), used)
        if fit is not None:
            t_fit.add(order, order * order, fit.slope, fit.slope_stderr, fit.intercept, fit.r2, fit.bins_used)
    summary.update(
        {"k": k, "fit": _fit_dict(fits["k"]), "control_fit": _fit_dict(fits.get("control")), **tally.bookkeeping()}
    )
    res = ExperimentResult("repulsion", cfg, [t, t_fit], summary, fits, tally=tally)
    return res


def gap_tail(config: ExperimentConfig, k_grid=None) -> ExperimentResult:
    """P(N (lambda_{alpha+1} - E) >= K) where alpha counts eigenvalues <= E.

    Samples with every eigenvalue on one side of E are censored.  The decay
    constant c of exp(-c sqrt(K)) is fitted and reported only.
    """
    k_grid = tuple(float(x) for x in (k_grid if k_grid is not None else DEFAULT_K_GRID))
    check_grid(k_grid, "K grid", allow_zero=True)
    tally = run_experiment(config, GapReducer(k_grid))
    used = tally.n_used
    t = Table("gaps", ["k", "n_events", "p_exceed", "ci_lo", "ci_hi", "n_used", "n_censored"])
    ex = tally.count("exceed") if used else np.zeros(len(k_grid), np.int64)
    for j, kk in enumerate(k_grid):
        cols = _proportion_cols(ex[j], used) if used else [math.nan] * 3
        t.add(kk, int(ex[j]), *cols, used, tally.n_censored)
    p = ex / max(used, 1)
    sel = (np.array(k_grid) > 0) & (ex > 0)
    c = None
    if sel.sum() >= 2:
        fit = weighted_line_fit(np.sqrt(np.array(k_grid)[sel]), np.log(p[sel]), np.ones(int(sel.sum())))
        c = -fit.slope
    summary = {
        "c_fit": c,
        "non_increasing": bool(np.all(np.diff(ex) <= 0)),
        **tally.bookkeeping(),
    }
    return ExperimentResult("gaps", config, [t], summary, tally=tally)


def delocalization_stats(config: ExperimentConfig, interval: SpectralInterval | None = None, p=None, m_grid=None):
    """Sup-norm and l^p summaries of eigenvectors whose eigenvalue lies in ``interval``.

    Default window: width 8/N around E.  Default M grid: 2..6 and 3 sqrt(2 log N).
    """
    n = config.n
    interval = interval or SpectralInterval(config.e, DEFAULT_DELOC_WIDTH / n)
    p = float(config.p_norm if p is None else p)
    if not p >= 2:
        raise ValueError(f"p must be >= 2, got {p}")
    m_grid = tuple(float(x) for x in (m_grid if m_grid is not None else default_m_grid(n)))
    check_grid(m_grid, "M grid")
    tally = run_experiment(config, DelocalizationReducer(interval, p, m_grid))
    linf = tally.collected("linf")
    lp = tally.collected("lp")
    l2dev = tally.collected("l2dev")
    nvec = int(tally.count("n_vectors")[0])
    q = Table("deloc_quantiles", ["statistic", "p", "q05", "q25", "median", "q75", "q95", "max", "n_vectors"])
    for name, pp, x in (("sqrt_n_linf", math.inf, linf), ("scaled_lp", p, lp)):
        if x.size:
            qs = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95])
            q.add(name, pp, *qs.tolist(), float(x.max()), int(x.size))
        else:
            q.add(name, pp, *([math.nan] * 6), 0)
    ex = Table("deloc_exceedance", ["m", "n_vectors_exceed", "n_samples_exceed", "p_sample_exceed", "ci_lo", "ci_hi", "n_samples"])
    used = tally.n_used
    for j, mm in enumerate(m_grid):
        se = int(tally.count("exceed_samples")[j])
        ex.add(mm, int(tally.count("exceed_vectors")[j]), se, *_proportion_cols(se, used), used)
    summary = {
        "interval": [interval.lo, interval.hi],
        "n_vectors": nvec,
        "median_sqrt_n_linf": float(np.median(linf)) if linf.size else None,
        "max_l2_deviation": float(l2dev.max()) if l2dev.size else 0.0,
        "threshold": 3.0 * math.sqrt(2.0 * math.log(max(n, 2))),
        "n_over_threshold": int((linf > 3.0 * math.sqrt(2.0 * math.log(max(n, 2)))).sum()),
        **tally.bookkeeping(),
    }
    return ExperimentResult("deloc", config, [q, ex], summary, tally=tally)


def overlap_concentration(config: ExperimentConfig) -> ExperimentResult:
    """Means of xi over all (sample, alpha) pairs and of the X and Z statistics."""
    tally = run_experiment(config, OverlapReducer(config))
    pairs = int(tally.count("pairs")[0])
    used = tally.n_used
    xi = mean_estimate(tally.total("xi")[0], tally.total("xi_sq")[0], pairs)
    st, st2 = tally.total("stats"), tally.total("stats_sq")
    t = Table("concentration", ["statistic", "mean", "ci_lo", "ci_hi", "n"])
    t.add("xi", xi.point, xi.lo, xi.hi, pairs)
    rows = {}
    for j, name in enumerate(("x_stat_re", "x_stat_im", "z_stat")):
        est = mean_estimate(st[j], st2[j], used)
        rows[name] = est
        t.add(name, est.point, est.lo, est.hi, used)
    summary = {"xi_mean": xi.point, "pairs": pairs, **tally.bookkeeping()}
    return ExperimentResult("concentration", config, [t], summary, tally=tally)


def xi_lower_tail(config: ExperimentConfig, m: int | None = None, delta_grid=None, min_events: int = 20):
    """P(sum of the m overlaps nearest E <= delta m), with a log-log slope fit."""
    m = config.m if m is None else int(m)
    if not 1 <= m <= config.n - 1:
        raise ValueError(f"m must lie in [1, n-1], got {m}")
    grid = tuple(float(x) for x in (delta_grid if delta_grid is not None else _grid(config, DEFAULT_XI_DELTA_GRID)))
    check_grid(grid, "delta grid")
    tally = run_experiment(config, XiTailReducer(m, grid))
    used = tally.n_used
    ev = tally.count("below")
    fit = None
    refused = None
    try:
        fit, mask = fit_power_law(grid, ev, used, min_events)
    except FitRefused as exc:
        mask = np.zeros(len(grid), bool)
        refused = str(exc)
    t = Table("xi_tail", ["delta", "n_events", "p", "ci_lo", "ci_hi", "used_in_fit", "n_samples"])
    for j, d in enumerate(grid):
        t.add(d, int(ev[j]), *_proportion_cols(ev[j], used), bool(mask[j]), used)
    t_fit = Table("xi_tail_fit", ["m", "slope", "slope_stderr", "intercept", "r2", "bins_used"])
    if fit is not None:
        t_fit.add(m, fit.slope, fit.slope_stderr, fit.intercept, fit.r2, fit.bins_used)
    summary = {"m": m, "fit": _fit_dict(fit), "refused": refused, "sum_mean": tally.total("sum")[0] / used, **tally.bookkeeping()}
    return ExperimentResult("xi-tail", config, [t, t_fit], summary, {"fit": fit}, tally=tally)


def hanson_wright_trial(a, spec: EntryDistributionSpec, n_samples: int, delta_grid=None, seed: int = 0, block: int = 4096):
    """Tails of X = sum a_jk (b_j conj(b_k) - E b_j conj(b_k)) for i.i.d. entries b_j.

    ``c_envelope`` is the largest c with every populated tail below
    4 exp(-c min(d/A, d^2/A^2)); ``c_least_squares`` fits the same form.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("coefficient matrix must be square")
    grid = tuple(float(x) for x in (delta_grid if delta_grid is not None else DEFAULT_HW_DELTA_GRID))
    check_grid(grid, "delta grid")
    n = a.shape[0]
    d = np.asarray(grid)
    exceed = np.zeros(len(grid), np.int64)
    tr = complex(np.trace(a))
    for b0 in range(0, n_samples, block):
        rows = min(block, n_samples - b0)
        rng = make_rng(stream_seed(seed, b0 // block))
        b = sample_offdiagonal_array(spec, rng, rows * n).reshape(rows, n)
        x = np.abs(np.einsum("sj,sj->s", b @ a, b.conj()) - tr)
        exceed += (x[:, None] >= d[None, :]).sum(axis=0)
    a_norm = float(np.sqrt(np.sum(np.abs(a) ** 2)))
    p = exceed / n_samples
    if a_norm > 0:
        c_env = hanson_wright_envelope(grid, p, a_norm)
        r = d / a_norm
        tt = np.minimum(r, r * r)
        sel = p > 0
        c_ls = float(np.sum(tt[sel] * -np.log(p[sel] / 4)) / np.sum(tt[sel] ** 2)) if sel.any() else math.inf
        bound = hanson_wright_bound(grid, a_norm, c_env) if math.isfinite(c_env) else np.zeros(len(grid))
    else:
        c_env = c_ls = math.inf
        bound = np.zeros(len(grid))
    t = Table("hanson_wright", ["delta", "n_events", "p", "ci_lo", "ci_hi", "bound", "n_samples"])
    for j, dd in enumerate(grid):
        t.add(dd, int(exceed[j]), *_proportion_cols(exceed[j], n_samples), float(bound[j]), n_samples)
    summary = {
        "a_norm": a_norm,
        "c_envelope": c_env,
        "c_least_squares": c_ls,
        "non_increasing": bool(np.all(np.diff(exceed) <= 0)),
        "below_bound": bool(np.all(p <= bound * (1 + 1e-12))),
    }
    cfg = ExperimentConfig(n=n, spec=spec, n_samples=n_samples, master_seed=seed, grid=grid)
    return ExperimentResult("hanson-wright", cfg, [t], summary)


@dataclass(frozen=True)
class GradientCheck:
    analytic: float
    finite_difference: float
    agreement_digits: float
    constant: float
    steps: tuple
    differences: tuple
    skipped: bool = False
    diagnostic: str = ""


def perturbation_gradient_check(h: HermitianMatrix, alpha: int, i: int, step_grid=(1e-3, 1e-4, 1e-5)) -> GradientCheck:
    """Central differences of mu_alpha in x_ii (with h_ii = x_ii / sqrt(N)) against |v_alpha(i)|^2 / sqrt(N).

    ``constant`` is the measured ratio finite_difference / analytic.  The
    difference quotient reported is the one from the pair of consecutive steps
    that agree best.  Near-degenerate eigenvalues are skipped.
    """
    if not isinstance(h, HermitianMatrix):
        h = HermitianMatrix(h)
    n = h.n
    dec: SpectralDecomposition = eigh(h, want_vectors=True)
    mu = dec.eigenvalues
    nb = [abs(mu[alpha] - mu[j]) for j in (alpha - 1, alpha + 1) if 0 <= j < n]
    gap = min(nb) if nb else math.inf
    floor = 1e3 * dec.residual_bound
    w = float(abs(dec.eigenvectors[i, alpha]) ** 2)
    analytic = w / math.sqrt(n)
    if gap <= floor:
        return GradientCheck(analytic, math.nan, math.nan, math.nan, tuple(step_grid), (), True,
                             f"eigenvalue {alpha} is within {gap:.3e} of a neighbor (threshold {floor:.3e})")
    diffs = []
    for step in step_grid:
        vals = []
        for sgn in (1.0, -1.0):
            a = h.entries.copy()
            a[i, i] += sgn * step / math.sqrt(n)
            vals.append(eigh(HermitianMatrix._trusted(a), want_vectors=False).eigenvalues[alpha])
        diffs.append((vals[0] - vals[1]) / (2 * step))
    if len(diffs) == 1:
        fd = diffs[0]
    else:
        j = int(np.argmin(np.abs(np.diff(diffs))))
        fd = diffs[j + 1]
    err = abs(fd - analytic)
    digits = math.inf if err == 0 else -math.log10(err / max(abs(analytic), 1e-300))
    const = fd / analytic if analytic > 0 else math.nan
    return GradientCheck(analytic, float(fd), digits, const, tuple(step_grid), tuple(float(x) for x in diffs))
