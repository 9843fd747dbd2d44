import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from ncslaser import deviation as dev
from ncslaser.observables import trace_distance_diagonal
from ncslaser.params import NormalizedParams
from ncslaser.state import (
    FockDistribution,
    build_solution,
    deformation,
    ncs_log_weights,
    strong_coupling_solution,
    strong_coupling_state,
    zero_deviation,
)

from conftest import DEPHASING, FIG3


def mittag_leffler(nmax=80):
    n = np.arange(nmax + 1)
    return FockDistribution.from_log_weights(-gammaln(n + 1) - np.log(n + 1))


def test_zero_deviation_deformations():
    coherent = deformation("ground", zero_deviation(NormalizedParams(1, 0, 1, 5), 20), 20)
    assert np.array_equal(coherent.F, np.ones(20))
    ml = deformation("ground", zero_deviation(NormalizedParams(1, 2, 3, 5), 20), 20)
    n = np.arange(1, 21)
    assert np.allclose(ml.F, 1 + 2 / n, rtol=1e-15)


def test_large_n_ground_deformation(fig1):
    table = dev.solve(fig1, 2000)
    F = deformation("ground", table, 2000)
    n = 2000
    assert F.at(n) / (n / fig1.eta) == pytest.approx(1.0, rel=0.05)


def test_deformation_kinds(fig1):
    table = dev.solve(fig1, 30)
    with pytest.raises(ValueError):
        deformation("bogus", table)
    with pytest.raises(ValueError):
        deformation("excited", table, 32)
    for kind in ("ground", "excited", "field"):
        assert np.all(deformation(kind, table, 20).F > 0)


def test_log_weights_examples():
    n = np.arange(11)
    assert np.allclose(ncs_log_weights(1.0, np.ones(10), 10), -gammaln(n + 1), atol=1e-13)
    w = ncs_log_weights(0.0, np.ones(5), 5)
    assert w[0] == 0 and np.all(np.isneginf(w[1:]))
    with pytest.raises(ValueError):
        ncs_log_weights(1.0, np.ones(3), 5)


def test_fig1_solution_invariants(fig1_solution):
    sol = fig1_solution
    assert math.fsum(sol.rho11) + math.fsum(sol.rho22) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(sol.rhof.p) == pytest.approx(1.0, abs=1e-12)
    assert sol.rhof.tail_bound <= 1e-12
    assert np.all(sol.rho11 >= 0) and np.all(sol.rho22 >= 0)
    assert np.allclose(sol.rhof.p, sol.rho11 + sol.rho22, rtol=1e-14, atol=0)
    assert sol.ground_weight == pytest.approx(math.fsum(sol.rho11), rel=1e-15)
    assert np.allclose(sol.u(), sol.rhof.p / math.sqrt(5.0), rtol=1e-15)


def test_excited_block_relation(fig1_solution):
    sol = fig1_solution
    d = sol.deviation.d_ext
    n = np.arange(sol.nmax)
    lhs = sol.rho22[n]
    rhs = (1 + d[n + 1]) * sol.rho11[n + 1]
    ok = rhs > 1e-300
    assert np.max(np.abs(lhs[ok] - rhs[ok]) / rhs[ok]) < 1e-12


def test_eigen_relation(fig1_solution):
    sol = fig1_solution
    r = sol.rho11
    for n in range(sol.nmax):
        if r[n + 1] < 1e-290:
            break
        lhs = (n + 1) * sol.f11.at(n + 1) * r[n + 1]
        assert lhs == pytest.approx(sol.params.a0sq * r[n], rel=1e-12)


@pytest.mark.parametrize("kind,block", [("excited", "rho22"), ("field", "rhof")])
def test_ncs_consistency(fig1_solution, kind, block):
    """The block built from its own deformation is the same distribution."""
    sol = fig1_solution
    n = sol.nmax
    F = deformation(kind, sol.deviation, n)
    logw = ncs_log_weights(sol.params.a0sq, F, n)
    ref = getattr(sol, block)
    ref = np.asarray(ref.p if hasattr(ref, "p") else ref)
    built = np.exp(logw - logw.max())
    built /= built.sum()
    target = ref / ref.sum()
    big = target > 1e-250
    assert np.max(np.abs(built[big] - target[big]) / target[big]) < 1e-9


def test_zero_pump_is_vacuum():
    sol = build_solution(NormalizedParams(0.0, 1.0, 3.0, 5.0))
    assert sol.rhof.p[0] == 1.0 and np.all(sol.rhof.p[1:] == 0)
    assert np.all(sol.rho22 == 0)
    assert sol.ground_weight == 1.0


def test_fixed_truncation_records_tail(fig1):
    sol = build_solution(fig1, nmax=3)
    assert sol.nmax == 3
    assert sol.tail_bound > 1e-6


def test_strong_coupling_closed_forms():
    coherent = strong_coupling_solution(NormalizedParams(2.0, 0.0, 2.0, 5.0), block="ground")
    assert trace_distance_diagonal(coherent, FockDistribution.poisson(2.0)) < 1e-12
    ml = strong_coupling_solution(NormalizedParams(1.0, 1.0, 2.0, 5.0), block="ground")
    assert trace_distance_diagonal(ml, mittag_leffler()) < 1e-12
    with pytest.raises(ValueError):
        strong_coupling_solution(NormalizedParams(1.0, 1.0, 2.0, 5.0), block="atom")


def test_strong_coupling_ignores_eta():
    a = strong_coupling_solution(NormalizedParams(1.0, 1.0, 3.0, 5.0))
    b = strong_coupling_solution(NormalizedParams(1.0, 1.0, 3.0, 500.0))
    assert np.array_equal(a.p, b.p)


def test_strong_coupling_tail_slower_than_exact(fig1_solution, fig1_sc):
    n = np.arange(8, 14)
    sc = fig1_sc.p[n + 1] / fig1_sc.p[n]
    assert np.allclose(sc * n, 1.0, atol=0.25)
    exact = fig1_solution.rhof.p[n + 1] / fig1_solution.rhof.p[n]
    assert np.all(exact < sc)


def test_strong_coupling_state_has_zero_deviation(fig1):
    sol = strong_coupling_state(fig1)
    assert np.all(sol.deviation.d_ext == 0)


@pytest.mark.parametrize("p", FIG3 + [DEPHASING], ids=str)
def test_caption_sets_build(p):
    sol = build_solution(p)
    assert sol.rhof.tail_bound <= 1e-12
    assert max(sol.diagnostics[k] for k in ("pump_balance", "excited_field", "deviation_field", "ground_ladder")) <= 1e-9


def test_fock_distribution_validation():
    with pytest.raises(ValueError):
        FockDistribution(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        FockDistribution(np.array([1.5, -0.5]))
    with pytest.raises(ValueError):
        FockDistribution(np.array([]))
    assert FockDistribution.fock(3).p[3] == 1.0
    th = FockDistribution.thermal(0.5, 200)
    assert th.p[1] / th.p[0] == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(0.01, 10),
    nu=st.floats(-0.5, 5),
    extra=st.floats(0, 20),
    eta=st.floats(1, 500),
)
def test_build_solution_properties(a, nu, extra, eta):
    sol = build_solution(NormalizedParams(a, nu, a + nu + extra, eta))
    assert math.fsum(sol.rhof.p) == pytest.approx(1.0, abs=1e-12)
    assert np.all(sol.rhof.p >= 0)
    assert sol.rhof.tail_bound <= 1e-12
    assert max(sol.diagnostics[k] for k in ("pump_balance", "excited_field", "deviation_field", "ground_ladder")) <= 1e-9
