import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import m_sc_quadrature
from wigner_lab.eigensolver import SpectralDecomposition, eigh, eigvalsh
from wigner_lab.ensemble import EntryDistributionSpec, HermitianMatrix, make_rng, minor, sample_wigner, stream_seed
from wigner_lab.spectral import (
    SpectralInterval,
    SpectralPoint,
    basic_count_bound,
    count_in_interval,
    empirical_cdf,
    m_sc,
    minor_resolvent_entry,
    minor_stieltjes_gap,
    overlaps_xi,
    resolvent_diag_minor,
    rho_eta,
    self_consistency_residual,
    semicircle_density,
    stieltjes,
    stieltjes_via_minors,
    x_and_z_statistics,
)

GUE = EntryDistributionSpec()


@pytest.fixture(scope="module")
def gue512():
    return eigvalsh(sample_wigner(512, GUE, 2024))


def test_point_and_interval_validation():
    with pytest.raises(ValueError):
        SpectralPoint(0, 0)
    with pytest.raises(ValueError):
        SpectralInterval(0, -1)
    i = SpectralInterval(1.0, 0.5)
    assert (i.lo, i.hi) == (0.75, 1.25)


def test_empirical_cdf(gue512):
    ev = np.array([-1.0, 0.0, 1.0])
    assert empirical_cdf(ev, 0) == pytest.approx(2 / 3)
    assert empirical_cdf(ev, -5) == 0 and empirical_cdf(ev, 5) == 1
    assert abs(empirical_cdf(gue512, 0) - 0.5) < 0.05


def test_stieltjes_examples():
    assert stieltjes(np.array([0.0]), 1j) == pytest.approx(1j)
    assert stieltjes(np.array([-1.0, 1.0]), SpectralPoint(0, 1)) == pytest.approx(0.5j)


@settings(max_examples=50, deadline=None)
@given(
    ev=st.lists(st.floats(-10, 10), min_size=1, max_size=30),
    e=st.floats(-5, 5),
    eta=st.floats(1e-3, 10),
)
def test_stieltjes_herglotz(ev, e, eta):
    m = stieltjes(np.sort(ev), SpectralPoint(e, eta))
    assert m.imag > 0 and abs(m) <= 1 / eta * (1 + 1e-12)
    assert rho_eta(np.sort(ev), SpectralPoint(e, eta)) == pytest.approx(m.imag / math.pi, rel=1e-12)


def test_rho_eta(gue512):
    assert rho_eta(np.array([0.3]), SpectralPoint(0.3, 1.0)) == pytest.approx(1 / math.pi)
    assert abs(rho_eta(gue512, SpectralPoint(0, 0.05)) * math.pi - 1) < 0.15


def test_rho_eta_unit_mass():
    ev = np.array([-1.0, 0.2, 0.5])
    eta = 0.01
    x = np.linspace(-10, 10, 20001)
    vals = [rho_eta(ev, SpectralPoint(e, eta)) for e in x]
    assert abs(np.trapezoid(vals, x) - 1) < 1e-3


def test_semicircle_density_values():
    assert abs(semicircle_density(0) - 1 / math.pi) <= 1e-15
    assert abs(semicircle_density(1) - math.sqrt(3) / (2 * math.pi)) <= 1e-15
    assert semicircle_density(2) == 0 and semicircle_density(-2) == 0 and semicircle_density(3) == 0


def test_m_sc_quadrature_and_boundary():
    assert abs(m_sc(1j) - m_sc_quadrature(1j)) < 1e-8
    assert m_sc(1j) == pytest.approx(0.6180339887498949j, abs=1e-12)
    for z in (0.5 + 0.3j, -1.2 + 0.05j, 2.5 + 0.1j):
        assert abs(m_sc(z) - m_sc_quadrature(z)) < 1e-8
    assert m_sc(SpectralPoint(0, 1e-6)).imag == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        m_sc(SpectralPoint(0, -1))


def test_m_sc_self_consistency_grid():
    es = np.linspace(-3, 3, 10)
    etas = np.geomspace(1e-4, 10, 10)
    for e in es:
        for eta in etas:
            m = m_sc(SpectralPoint(e, eta))
            assert m.imag > 0
            assert self_consistency_residual(m, SpectralPoint(e, eta)) <= 1e-13


def test_m_sc_continuity():
    es = np.linspace(-3, 3, 601)
    h = es[1] - es[0]
    vals = np.array([m_sc(SpectralPoint(e, 0.01)) for e in es])
    # |m_sc'| <= 1/eta on the upper half plane
    assert np.abs(np.diff(vals)).max() <= 10 * h / 0.01


def test_self_consistency_examples():
    assert self_consistency_residual(0j, 1j) == pytest.approx(1.0)


def test_self_consistency_empirical_n1024():
    z = SpectralPoint(0, 0.05)
    ok = 0
    trials = 40
    for s in range(trials):
        ev = eigvalsh(sample_wigner(1024, GUE, stream_seed(17, s)))
        ok += self_consistency_residual(stieltjes(ev, z), z) < 0.1
    assert ok >= 0.95 * trials


def test_count_in_interval():
    ev = np.array([-1.0, 0.0, 1.0])
    assert count_in_interval(ev, SpectralInterval(0, 1)) == 1
    assert count_in_interval(ev, SpectralInterval(0, 10)) == 3
    assert count_in_interval(ev, SpectralInterval(0.5, 1)) == 2  # both endpoints hit


def test_overlaps_aligned_and_complete():
    n = 5
    u = np.eye(4, dtype=complex)
    dec = SpectralDecomposition(np.arange(4.0), u, 0.0)
    a = np.zeros(4, complex)
    a[0] = 1 / math.sqrt(n)
    np.testing.assert_allclose(overlaps_xi(dec, a, n).xi, [1, 0, 0, 0])
    h = sample_wigner(20, GUE, 3)
    md = minor(h, 4)
    xi = overlaps_xi(eigh(md.b), md.a, 20).xi
    assert xi.sum() == pytest.approx(20 * np.vdot(md.a, md.a).real, rel=1e-12)
    bad = SpectralDecomposition(np.arange(4.0), 1.1 * u, 0.0)
    with pytest.raises(ArithmeticError):
        overlaps_xi(bad, np.ones(4, complex), 5)
    with pytest.raises(ValueError):
        overlaps_xi(SpectralDecomposition(np.arange(4.0), None, 0.0), a, n)


def test_xi_mean():
    total = 0.0
    pairs = 0
    for s in range(160):
        h = sample_wigner(64, GUE, stream_seed(5, s))
        md = minor(h, 0)
        xi = overlaps_xi(eigh(md.b), md.a, 64).xi
        total += xi.sum()
        pairs += xi.size
    assert pairs >= 10_000
    assert 0.95 <= total / pairs <= 1.05


def test_resolvent_minor_decoupled():
    h = HermitianMatrix(np.diag([1.0, -1.0]).astype(complex))
    direct, via = resolvent_diag_minor(h, 0, 1j)
    assert direct == pytest.approx(1 / (1 - 1j)) and via == pytest.approx(1 / (1 - 1j))


def test_resolvent_minor_random():
    z = SpectralPoint(0.3, 0.1)
    for s in range(50):
        h = sample_wigner(32, GUE, stream_seed(6, s))
        for k in range(32):
            d, v = resolvent_diag_minor(h, k, z)
            assert abs(d - v) <= 1e-8 / z.eta**2


def test_average_of_minor_formula_is_stieltjes():
    z = SpectralPoint(0.3, 0.1)
    for s in range(5):
        h = sample_wigner(24, GUE, stream_seed(7, s))
        assert abs(stieltjes_via_minors(h, z) - stieltjes(eigvalsh(h), z)) <= 1e-9


def test_basic_bound_examples_and_random():
    lhs, rhs, ok = basic_count_bound(np.array([0.4]), 0.4, 1.0)
    assert lhs == 1 and rhs == pytest.approx(1.25) and ok
    lhs, rhs, ok = basic_count_bound(np.array([5.0]), 0.0, 0.1)
    assert lhs == 0 and ok
    rng = make_rng(8)
    fails = 0
    for s in range(100):
        ev = eigvalsh(sample_wigner(64, GUE, stream_seed(8, s)))
        for _ in range(10):
            e = rng.uniform(-2.5, 2.5)
            eta = 10 ** rng.uniform(-3, 0.5)
            fails += not basic_count_bound(ev, e, eta)[2]
    assert fails == 0


def test_minor_stieltjes_gap():
    h = HermitianMatrix(np.array([[0, 1], [1, 0]], dtype=complex))
    mk = eigvalsh(minor(h, 0).b)
    gap, bound, ok = minor_stieltjes_gap(eigvalsh(h), mk, 1j)
    assert gap == pytest.approx(0, abs=1e-15) and bound == pytest.approx(math.pi / 2) and ok
    rng = make_rng(9)
    for s in range(100):
        h = sample_wigner(64, GUE, stream_seed(9, s))
        dh = eigh(h, want_vectors=False)
        for _ in range(10):
            k = int(rng.integers(64))
            dm = eigh(minor(h, k).b, want_vectors=False)
            z = SpectralPoint(rng.uniform(-2, 2), 10 ** rng.uniform(-3, 0))
            slack = 2 * (dh.residual_bound + dm.residual_bound) / z.eta**2
            assert minor_stieltjes_gap(dh.eigenvalues, dm.eigenvalues, z, slack)[2]
    gap, bound, ok = minor_stieltjes_gap(dh.eigenvalues, dm.eigenvalues, SpectralPoint(0, 1e8))
    assert gap <= 2 / (64 * 1e8) and ok


def test_x_and_z_statistics():
    lam = np.array([-1.0, 0.5, 2.0])
    z = SpectralPoint(0, 0.1)
    x, zs = x_and_z_statistics(np.ones(3), lam, z, SpectralInterval(0, 0.2))
    assert x == 0 and zs == 0
    xi = np.array([0.5, 2.0, 1.5])
    x, zs = x_and_z_statistics(xi, lam, z, SpectralInterval(0.5, 0.2))
    assert x == pytest.approx(np.sum((xi - 1) / (lam - z.z)) / 4)
    assert zs == 2.0


def test_x_stat_mean_zero():
    z = SpectralPoint(0.0, 0.1)
    xs = []
    for s in range(400):
        h = sample_wigner(24, GUE, stream_seed(10, s))
        md = minor(h, 0)
        dec = eigh(md.b)
        xi = overlaps_xi(dec, md.a, 24).xi
        xs.append(x_and_z_statistics(xi, dec.eigenvalues, z, SpectralInterval(0, 0.1))[0])
    xs = np.array(xs)
    for part in (xs.real, xs.imag):
        assert abs(part.mean()) <= 4 * part.std() / math.sqrt(part.size)
