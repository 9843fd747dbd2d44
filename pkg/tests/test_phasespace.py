import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ncslaser import phasespace as ps
from ncslaser.params import NormalizedParams
from ncslaser.state import FockDistribution, build_solution

FOCK1 = FockDistribution.fock(1)
VACUUM = FockDistribution.fock(0)


def gl_nodes(a, b, panels=64, order=20):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


# independent high-precision reference: own recurrence, own Laguerre sum


def mp_field_distribution(p: NormalizedParams, N=260, dps=160):
    with mp.workdps(dps):
        a0, nu, mu, eta = (mp.mpf(x) for x in (p.a0sq, p.nu0, p.mu0, p.eta))
        top = N + 200
        d = [mp.mpf(0)] * (top + 3)
        for n in (top + 1, top + 2):
            d[n] = (2 / eta) * (n + mu + 2 * a0 * n / (n + eta))
        for n in range(top, 0, -1):
            f1 = a0 / (nu + mp.mpf(n + 1) / 2 * (1 + 1 / (1 + d[n + 1])))
            f2 = a0 / (nu + mp.mpf(n + 2) / 2 * (1 + 1 / (1 + d[n + 2])))
            d[n] = (2 / eta) * ((mu + n) * (1 + f1) - (n + 1) / (1 + d[n + 1]) * f1 * (1 + f2))
        r11 = [mp.mpf(1)]
        for n in range(1, N + 2):
            r11.append(r11[-1] * a0 / (n * (mp.mpf(1) / 2 + (mp.mpf(1) / 2 + nu / n) * (1 + d[n]))))
        rf = [r11[n] + (1 + d[n + 1]) * r11[n + 1] for n in range(N + 1)]
        z = mp.fsum(rf)
        return [x / z for x in rf]


def mp_quasi(pf, r, s, dps=160):
    with mp.workdps(dps):
        r, s = mp.mpf(r), mp.mpf(s)
        c = (s + 1) / (s - 1)
        x = 4 * r * r / (1 - s * s)
        L0, L1 = mp.mpf(1), 1 - x
        total = pf[0] + pf[1] * c * L1
        cn = c
        for n in range(1, len(pf) - 1):
            L0, L1 = L1, ((2 * n + 1 - x) * L1 - n * L0) / (n + 1)
            cn *= c
            total += pf[n + 1] * cn * L1
        return 2 / (mp.pi * (1 - s)) * mp.exp(-2 * r * r / (1 - s)) * total


def test_kernel_examples():
    assert ps.fock_kernel(0, 0.0, -1.0) == pytest.approx(1 / math.pi, rel=1e-15)
    assert ps.fock_kernel(1, 0.0, 0.0) == pytest.approx(-2 / math.pi, rel=1e-15)
    r = np.linspace(0, 3, 7)
    for s in (-0.5, 0.0, 0.7):
        expect = 2 / (math.pi * (1 - s)) * np.exp(-2 * r**2 / (1 - s))
        assert np.allclose(ps.fock_kernel(0, r, s), expect, rtol=1e-14)
    with pytest.raises(ValueError):
        ps.fock_kernel(0, 0.0, 1.0)


@pytest.mark.parametrize("s,n_top", [(-0.5, 30), (0.0, 30), (0.25, 30), (0.5, 20)])
def test_kernel_normalization(s, n_top):
    # for s > 0 the kernel grows like |c|^n while integrating to 1; double
    # precision quadrature loses log10(max|k|) digits, hence n_top at s = 0.5
    r, w = gl_nodes(0.0, 14.0)
    for n in range(n_top + 1):
        total = np.sum(w * 2 * math.pi * r * ps.fock_kernel(n, r, s))
        assert total == pytest.approx(1.0, abs=1e-6), n


@pytest.mark.parametrize("n,s", [(30, 0.5), (200, 0.9)])
def test_kernel_pointwise_against_mpmath(n, s):
    r = np.array([0.05, 0.5, 1.5, 3.0])
    got = ps.fock_kernel(n, r, s)
    with mp.workdps(60):
        c = mp.mpf(s + 1) / (s - 1)
        for x, g in zip(r, got):
            x = mp.mpf(x)
            ref = 2 / (mp.pi * (1 - s)) * c**n * mp.exp(-2 * x * x / (1 - s)) * mp.laguerre(n, 0, 4 * x * x / (1 - s * s))
            assert g == pytest.approx(float(ref), rel=1e-10)


def test_q_function_examples(fig1_solution):
    r = np.linspace(0, 4, 50)
    assert np.allclose(ps.quasi_prob(VACUUM, r, -1.0), np.exp(-(r**2)) / math.pi, rtol=1e-14)
    d = fig1_solution.rhof
    grid = ps.default_grid(d).nodes()
    assert np.max(np.abs(ps.quasi_prob(d, grid, -1.0) - ps.q_function_closed_form(d, grid))) <= 1e-10


def test_wigner_at_origin(fig1_solution):
    p = fig1_solution.rhof.p
    expect = 2 / math.pi * math.fsum(p * (-1.0) ** np.arange(len(p)))
    assert ps.quasi_prob(fig1_solution.rhof, 0.0, 0.0) == pytest.approx(expect, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(1, 25), elements=st.floats(0, 1)).filter(lambda w: w.sum() > 1e-3))
def test_q_function_nonnegative_and_closed_form(w):
    d = FockDistribution.from_weights(w)
    r = np.linspace(0, 6, 40)
    q = ps.quasi_prob(d, r, -1.0)
    ref = ps.q_function_closed_form(d, r)
    assert np.all(ref >= 0)
    assert np.all(q >= -1e-15)
    assert np.max(np.abs(q - ref)) <= 1e-10


def test_min_over_radius_examples():
    vac = ps.min_over_radius(VACUUM, 0.0)
    assert not vac.negative and vac.value > 0
    one = ps.min_over_radius(FOCK1, 0.0)
    assert one.negative and one.r == pytest.approx(0.0, abs=1e-6)
    assert one.value == pytest.approx(-2 / math.pi, rel=1e-9)
    assert ps.min_over_radius(FOCK1, -0.99).negative
    with pytest.raises(ValueError):
        ps.min_over_radius(FOCK1, 1.0)


def test_s0_anchors():
    assert ps.s0_search(FOCK1).s0 == pytest.approx(-1.0, abs=0.01)
    for d in (VACUUM, FockDistribution.poisson(0.5), FockDistribution.thermal(0.3, 300)):
        rep = ps.s0_search(d)
        assert rep.s0 == 1.0 and rep.classical
        assert not any(t.negative for t in rep.s_trace)


@pytest.mark.slow
def test_s0_poisson_large_mean_is_classical():
    assert ps.s0_search(FockDistribution.poisson(5.0)).s0 == 1.0


def test_s0_tolerance_range():
    with pytest.raises(ValueError):
        ps.s0_search(FOCK1, tol_s=0.1)
    with pytest.raises(ValueError):
        ps.s0_search(FOCK1, tol_s=1e-6)


@pytest.fixture(scope="module")
def fig1_report(fig1_solution):
    return ps.s0_search(fig1_solution.rhof)


def test_s0_trace_invariants(fig1_report):
    rep = fig1_report
    assert -1 <= rep.s0 <= 1
    tol = rep.tolerance
    for t in rep.s_trace:
        if t.s < rep.s0 - tol:
            assert not t.negative, t
        if t.s >= rep.s0 + tol:
            assert t.negative, t
    ordered = sorted(rep.s_trace, key=lambda t: t.s)
    flags = [t.negative for t in ordered]
    assert flags == sorted(flags)  # once negative, negative for every larger s
    neg = [t.value for t in ordered if t.negative]
    assert all(b <= a for a, b in zip(neg, neg[1:]))


def test_s0_matches_independent_high_precision(fig1, fig1_report):
    """The sign change sits inside the reported bracket, checked with mpmath."""
    rep = fig1_report
    pf = mp_field_distribution(fig1)
    s_hi = rep.s0 + rep.tolerance
    s_lo = rep.s0 - rep.tolerance
    assert mp_quasi(pf, rep.r_min, s_hi) < 0
    r = np.linspace(0.0, 3.0, 151)
    assert min(mp_quasi(pf, x, s_lo) for x in r) > 0


def test_convolution_identity(fig1_solution):
    assert ps.convolution_check(VACUUM, 0.0, -1.0) <= 1e-8
    assert ps.convolution_check(FOCK1, 0.0, -1.0) <= 1e-6
    assert ps.convolution_check(fig1_solution.rhof, 0.0, -1.0) <= 1e-6
    with pytest.raises(ValueError):
        ps.convolution_check(VACUUM, -1.0, 0.0)


def test_scan_points_cover_the_cap():
    pts = ps.scan_points()
    assert pts == sorted(pts) and pts[-1] == ps.S_CAP
    assert all(-1 < s <= ps.S_CAP for s in pts)
