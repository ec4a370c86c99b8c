"""Acceptance criteria, run at their stated sizes and tolerances.

Each criterion prints one ``[C<n>] PASS|FAIL`` line; the lines are repeated in
the pytest terminal summary.  Expect roughly 45 minutes on a single core.
"""

import math
import time

import numpy as np
import pytest

from oracles import eigenvalues_by_bisection, m_sc_quadrature
from wigner_lab import cli
from wigner_lab.eigensolver import eigh, eigvalsh
from wigner_lab.ensemble import EntryDistributionSpec, sample_wigner, stream_seed
from wigner_lab.mc import (
    ExperimentConfig,
    available_workers,
    ci_monotone,
    gap_tail,
    hanson_wright_trial,
    overlap_concentration,
    repulsion_fit,
    wegner_moments,
    xi_lower_tail,
)
from wigner_lab.spectral import m_sc, self_consistency_residual, semicircle_density
from wigner_lab.tables import Table

pytestmark = pytest.mark.acceptance

GUE = EntryDistributionSpec()
WORKERS = available_workers()
RESULTS: list[str] = []


def report(cid: int, ok: bool, detail: str) -> None:
    line = f"[C{cid}] {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    assert ok, line


def _read_csv(path):
    import csv

    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """CLI runs reused by criterion 10."""
    return {"root": tmp_path_factory.mktemp("acceptance"), "done": {}}


def test_c1_identity_suite(runs):
    out = runs["root"] / "validate"
    t0 = time.perf_counter()
    rc = cli.main(["validate", "--n", "64", "--samples", "50", "--E", "0.3", "--grid", "0.1",
                   "--seed", "1", "--workers", str(WORKERS), "--out", str(out)])
    dt = time.perf_counter() - t0
    rows = _read_csv(out / "identities.csv")
    viol = {r["check"]: int(r["n_violations"]) for r in rows}
    checks = {r["check"]: int(r["n_checks"]) for r in rows}
    runs["done"]["validate"] = out
    ok = rc == 0 and sum(viol.values()) == 0 and checks["interlacing"] == 64 * 50 and dt < 30
    report(1, ok, f"violations {viol}, checks {checks}, {dt:.1f}s (limit 30s)")


def test_c2_eigensolver_certification():
    t0 = time.perf_counter()
    n = 256
    worst = {"residual": 0.0, "orth": 0.0, "trace": 0.0, "frob": 0.0}
    for s in range(100):
        h = sample_wigner(n, GUE, stream_seed(2, s))
        dec = eigh(h)
        a, v, mu = h.entries, dec.eigenvectors, dec.eigenvalues
        norm2 = np.abs(mu).max()
        res = np.sqrt((np.abs(a @ v - v * mu) ** 2).sum(axis=0)).max()
        worst["residual"] = max(worst["residual"], res / (1e-10 * n * norm2))
        worst["orth"] = max(worst["orth"], np.abs(v.conj().T @ v - np.eye(n)).max() / (1e-10 * n))
        worst["trace"] = max(worst["trace"], abs(mu.sum() - np.trace(a).real) / (1e-9 * n))
        worst["frob"] = max(worst["frob"], abs((mu**2).sum() - (np.abs(a) ** 2).sum()) / (1e-9 * n))
    oracle_err = 0.0
    for n_small in range(1, 9):
        for s in range(3):
            h = sample_wigner(n_small, GUE, stream_seed(22, 10 * n_small + s))
            oracle_err = max(oracle_err, np.abs(eigvalsh(h) - eigenvalues_by_bisection(h.entries)).max())
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1 and oracle_err <= 1e-12 and dt < 120
    ratios = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    report(2, ok, f"worst/limit: {ratios}; oracle max error {oracle_err:.2e}; {dt:.1f}s (limit 120s)")


def test_c3_semicircle_closed_form():
    e0 = abs(semicircle_density(0) - 1 / math.pi)
    e1 = abs(semicircle_density(1) - math.sqrt(3) / (2 * math.pi))
    grid = [complex(e, eta) for e in np.linspace(-3, 3, 10) for eta in np.geomspace(1e-3, 10, 10)]
    res = max(self_consistency_residual(m_sc(z), z) for z in grid)
    herglotz = all(m_sc(z).imag > 0 for z in grid)
    q = abs(m_sc(1j) - m_sc_quadrature(1j))
    ok = e0 <= 1e-15 and e1 <= 1e-15 and res <= 1e-13 and herglotz and q <= 1e-8
    report(3, ok, f"rho errors {e0:.1e}, {e1:.1e}; max residual {res:.1e} on {len(grid)} points; quadrature gap {q:.1e}")


def test_c4_local_semicircle(runs):
    out = runs["root"] / "semicircle"
    t0 = time.perf_counter()
    rc = cli.main(["semicircle", "--n", "512", "--E", "0", "--delta", "0.1", "--samples", "400",
                   "--grid", "0.05,0.1,0.2,0.4", "--seed", "4", "--workers", str(WORKERS), "--out", str(out)])
    dt = time.perf_counter() - t0
    rows = _read_csv(out / "semicircle.csv")
    runs["done"]["semicircle"] = out
    t = Table("semicircle", list(rows[0].keys()), [[float(r[h]) for h in rows[0]] for r in rows])
    p = {float(r["eta"]): float(r["p_exceed"]) for r in rows}
    mono = ci_monotone(t)
    ok = rc == 0 and p[0.2] <= 0.05 and mono and dt < 900
    report(4, ok, f"P(|m-m_sc|>=0.1) by eta {p}; monotone up to CI {mono}; {dt:.0f}s (limit 900s)")


def test_c5_wegner():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=256, n_samples=100_000, master_seed=5, grid=(0.125, 0.25, 0.5, 1.0), workers=WORKERS)
    r = wegner_moments(cfg)
    dt = time.perf_counter() - t0
    ratio = r.summary["ratio"]
    dens = r.summary["density_ratio_at_largest_epsilon"]
    rel = abs(dens * math.pi - 1)
    ok = ratio <= 3 and rel <= 0.2 and dt < 1800
    report(5, ok, f"max/min E N^2/eps = {ratio:.3f} (CI {r.summary['ratio_ci'][0]:.3f}..{r.summary['ratio_ci'][1]:.3f}); "
                  f"E N/(N|I|) = {dens:.4f} vs 1/pi ({rel:.1%} off); {dt:.0f}s (limit 1800s)")


def test_c6_level_repulsion():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=128, n_samples=400_000, master_seed=6, grid=(0.25, 0.35, 0.5, 0.7, 1.0), k=2,
                           workers=WORKERS)
    r = repulsion_fit(cfg, k=2)
    dt = time.perf_counter() - t0
    fit, ctl = r.fits["k"], r.fits["control"]
    ok = fit is not None and 3.2 <= fit.slope <= 4.8 and ctl is not None and 0.7 <= ctl.slope <= 1.3 and dt < 3600
    s = f"{fit.slope:.3f} +- {fit.slope_stderr:.3f} on {fit.bins_used} bins" if fit else f"refused ({r.summary['refused']})"
    report(6, ok, f"k=2 slope {s}; k=1 slope {ctl.slope:.3f}; events {r.table('repulsion').column('n_events')[:5]}; "
                  f"{dt:.0f}s (limit 3600s)")


def test_c7_gap_tail():
    cfg = ExperimentConfig(n=256, n_samples=10_000, master_seed=7, workers=WORKERS)
    r = gap_tail(cfg)
    t = r.table("gaps")
    k = t.column("k")
    p = t.column("p_exceed")
    ev = t.column("n_events")
    mono = all(b <= a for a, b in zip(ev, ev[1:]))
    ratio = p[k.index(10.0)] / p[k.index(2.0)]
    ok = mono and ratio <= 0.2 and p[0] == 1.0
    report(7, ok, f"tail {dict(zip(k, p))}; non-increasing {mono}; P(10)/P(2) = {ratio:.2e}; "
                  f"fitted c = {r.summary['c_fit']}; censored {r.bookkeeping['n_censored']}")


def test_c8_delocalization(runs):
    out = runs["root"] / "deloc"
    rc = cli.main(["deloc", "--n", "256", "--E", "0", "--width", "8", "--p", "2", "--samples", "1000",
                   "--seed", "8", "--workers", str(WORKERS), "--out", str(out)])
    runs["done"]["deloc"] = out
    q = {r["statistic"]: r for r in _read_csv(out / "deloc_quantiles.csv")}
    med = float(q["sqrt_n_linf"]["median"])
    thr = 3 * math.sqrt(2 * math.log(256))
    over = int(float(q["sqrt_n_linf"]["max"]) > thr)
    l2 = q["scaled_lp"]
    l2dev = max(abs(float(l2[c]) - 1) for c in ("q05", "median", "q95", "max"))
    import json

    m = json.loads((out / "manifest.json").read_text())["summary"]
    ok = rc == 0 and med <= 6 and m["n_over_threshold"] == 0 and not over and m["max_l2_deviation"] <= 1e-13
    report(8, ok, f"median sqrt(N)|v|_inf = {med:.3f}; max {float(q['sqrt_n_linf']['max']):.3f} vs {thr:.3f}; "
                  f"{m['n_vectors']} vectors; max | |v|_2 - 1 | = {m['max_l2_deviation']:.1e} (quantiles {l2dev:.1e})")


def test_c9_concentration():
    r = overlap_concentration(ExperimentConfig(n=64, n_samples=200, master_seed=9, workers=WORKERS))
    xi_mean, pairs = r.summary["xi_mean"], r.summary["pairs"]
    xt = xi_lower_tail(
        ExperimentConfig(n=64, n_samples=100_000, master_seed=91, workers=WORKERS),
        m=4, delta_grid=[0.05, 0.075, 0.1, 0.125, 0.15, 0.2],
    )
    fit = xt.fits["fit"]
    a = sample_wigner(64, GUE, stream_seed(92, 0)).entries / math.sqrt(64)
    hw = hanson_wright_trial(a, GUE, 100_000, seed=93)
    ok = (
        pairs >= 10_000 and 0.95 <= xi_mean <= 1.05
        and fit is not None and fit.slope >= 3
        and hw.summary["non_increasing"] and hw.summary["below_bound"] and hw.summary["c_envelope"] > 0
    )
    s = f"{fit.slope:.3f} +- {fit.slope_stderr:.3f} on {fit.bins_used} bins" if fit else f"refused ({xt.summary['refused']})"
    report(9, ok, f"xi mean {xi_mean:.4f} over {pairs} pairs; xi-tail slope (m=4) {s}; "
                  f"HW A={hw.summary['a_norm']:.3f}, c_env={hw.summary['c_envelope']:.3f}, "
                  f"c_ls={hw.summary['c_least_squares']:.3f}, tails {hw.table('hanson_wright').column('p')}")


def test_c10_reproducibility(runs):
    done = runs["done"]
    if not done:
        pytest.skip("needs the CLI runs of criteria 1, 4, 8")
    details = []
    ok = True
    for name, out in done.items():
        for workers in (2, 3):
            again = out.parent / f"{name}-w{workers}"
            rc = cli.main([name, "--config", str(out / "manifest.json"), "--workers", str(workers), "--out", str(again)])
            csvs = sorted(p.name for p in out.glob("*.csv"))
            same = rc == 0 and all((out / c).read_bytes() == (again / c).read_bytes() for c in csvs)
            ok &= same
            details.append(f"{name} w={workers}: {'identical' if same else 'DIFFERENT'} ({len(csvs)} csv)")
    report(10, ok, "; ".join(details))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
