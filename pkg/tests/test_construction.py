import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedirac.errors import ConfigurationError, DomainError, SelectionFailure
from sparsedirac.construction import (
    CoefficientCache,
    ConstructionConfig,
    EpsilonSchedule,
    GrowthSchedule,
    averaging_residual,
    build_pearson_sequence,
    concentration_set,
    no_point_spectrum_certificate,
    recheck_gaps,
    select_next_distance,
    support_l1,
    test_intervals as make_test_intervals,
    xi_interval,
    xi_measure,
)
from sparsedirac.coefficients import abc_from_transfer
from sparsedirac.odecore import closed_form_rectangular
from sparsedirac.potential import BumpProfile, build_bump_potential, free_potential
from sparsedirac.pruefer import lambda_of_kappa
from sparsedirac.spectral import measure_on_interval


def test_xi_geometry():
    assert xi_interval(1) == ((-2.0, -0.5), (0.5, 2.0))
    assert xi_measure(2) == pytest.approx(2 * (4 - 0.25))
    ivs = make_test_intervals(2, 3)
    assert len(ivs) == 6
    assert sum(b - a for a, b in ivs) == pytest.approx(xi_measure(2))
    with pytest.raises(DomainError):
        xi_interval(0)


def test_epsilon_schedules():
    eps = EpsilonSchedule("geometric", 1.0, 0.5)
    assert [eps(n) for n in (1, 2, 3)] == [0.5, 0.25, 0.125]
    with pytest.raises(ConfigurationError):
        EpsilonSchedule("power", 1.0, p=1.0)
    with pytest.raises(ConfigurationError):
        EpsilonSchedule("geometric", 1.0, ratio=1.0)
    assert EpsilonSchedule("list", values=(0.3, 0.2))(2) == 0.2
    with pytest.raises(DomainError):
        eps(0)


def test_growth_schedules():
    g = GrowthSchedule("exponential")
    assert g.floor(1) == 1.0 and g.floor(3) == pytest.approx(math.exp(4))
    with pytest.raises(DomainError):
        g.floor(7)
    assert g.log_floor(50) == 49.0**2
    geo = GrowthSchedule("geometric", 10.0, 2.0)
    assert [geo.floor(j) for j in (1, 2, 3)] == [10.0, 20.0, 40.0]
    with pytest.raises(ConfigurationError):
        GrowthSchedule("custom")


def test_averaging_residual_constant_g():
    r = averaging_residual(lambda k: 1 / k**2, lambda k, y: np.ones_like(y) * k, 50.0, (1.0, 2.0))
    assert r < 1e-12


@pytest.mark.parametrize("L", [3.0, 10.0, 77.0])
def test_averaging_residual_analytic(L):
    r = averaging_residual(lambda k: np.ones_like(k), lambda k, y: np.sin(y) ** 2, L, (1.0, 2.0), Gbar=lambda k: np.full_like(k, 0.5))
    exact = abs(math.sin(4 * L) - math.sin(2 * L)) / (4 * L)
    assert r == pytest.approx(exact, abs=1e-10)
    assert r <= 1 / (2 * L)


def test_averaging_residual_decays_for_bump_factor():
    def G(k, y):
        lam = lambda_of_kappa(k)
        c = abc_from_transfer(closed_form_rectangular(1.0, 1.0, lam), lam)
        return c.f(y)

    F = lambda k: 1 / k**2
    assert averaging_residual(F, G, 1e3, (1.0, 2.0), Gbar=lambda k: np.ones_like(k)) < averaging_residual(F, G, 10.0, (1.0, 2.0), Gbar=lambda k: np.ones_like(k))


def test_select_zero_height_bump():
    q = build_bump_potential([1.0], "rect", [2.0], widths=[1.0])
    sel = select_next_distance(q, 0.0, BumpProfile(1.0), [(1.0, 2.0)], 1e-12, 3.0)
    assert sel.distance == 3.0
    assert sel.gap < 1e-12


def test_select_inverse_sqrt_bump():
    q = build_bump_potential([1.0], "rect", [2.0], widths=[1.0])
    sel = select_next_distance(q, 1 / math.sqrt(2), BumpProfile(1.0), [(1.0, 2.0)], 1e-3, 5.0)
    assert math.isfinite(sel.distance) and sel.gap < 1e-3
    before = measure_on_interval(q, (1.0, 2.0), rtol=1e-10).value
    after = measure_on_interval(q.extend([1 / math.sqrt(2)], [BumpProfile(1.0)], [sel.distance]), (1.0, 2.0), rtol=1e-10).value
    assert abs(after - before) < 1e-3


def test_gap_trend_over_doublings():
    q = build_bump_potential([1.0], "rect", [2.0], widths=[1.0])
    base = measure_on_interval(q, (1.0, 2.0), rtol=1e-10).value
    gaps = []
    for i in range(6):
        cand = q.extend([1.0], [BumpProfile(1.0)], [2.0 * 2**i])
        gaps.append(abs(measure_on_interval(cand, (1.0, 2.0), rtol=1e-10).value - base))
    assert min(gaps[3:]) < max(gaps[:2])


def test_selection_failure_carries_best():
    q = build_bump_potential([1.0], "rect", [2.0], widths=[1.0])
    with pytest.raises(SelectionFailure) as info:
        select_next_distance(q, 1.0, BumpProfile(1.0), [(1.0, 2.0)], 1e-15, 2.0, max_doublings=1)
    assert info.value.best_gap > 0 and info.value.best_distance in (2.0, 4.0)


def test_concentration_trivial_thresholds():
    xi = xi_interval(1)
    empty = concentration_set(free_potential(), xi, 10.0)
    assert empty.measure == 0 and empty.intervals == ()
    full = concentration_set(free_potential(), xi, 1e-9)
    assert full.measure == pytest.approx(xi_measure(1), rel=1e-12)


def test_concentration_retention_and_subset():
    q = build_bump_potential([2.0, 3.0], "rect", [10.0, 20.0], widths=[1.0, 1.0])
    xi = xi_interval(1)
    cs = concentration_set(q, xi, 0.5)
    assert cs.retention_ok
    for lo, hi in cs.intervals:
        assert any(a <= lo < hi <= b for a, b in xi)
    assert cs.measure == pytest.approx(sum(b - a for a, b in cs.intervals), rel=1e-12)


def test_one_stage_inverse_sqrt_heights():
    cfg = ConstructionConfig(stages=1, bumps_per_stage=2, heights="inverse_sqrt", epsilon=EpsilonSchedule("geometric", 1.0, 0.5), growth=GrowthSchedule("geometric", 10.0, 2.0), pieces=1)
    res = build_pearson_sequence(cfg)
    assert res.failure is None
    st = res.stages[0]
    assert st.nu == 2
    eps1 = cfg.epsilon(1)
    assert all(g < b for g, b in zip(st.gaps, st.budgets))
    assert max(recheck_gaps(res, cfg)) < eps1 * 2**-2
    rec = st.to_json()
    assert set(rec) >= {"stage", "xi", "epsilon", "distances", "gaps", "s_measure", "thresholds"}


def test_construction_rejects_zero_heights():
    with pytest.raises(ConfigurationError):
        build_pearson_sequence(ConstructionConfig(heights="constant", height=0.0))


def test_support_l1_inverse_sqrt_heights():
    q = build_bump_potential([1 / math.sqrt(j) for j in range(1, 11)], "rect", [2.0] * 10, widths=[1.0] * 10)
    assert support_l1(q) == pytest.approx(1.0, rel=1e-12)


def direct_partial_sums(omega, kappa, N):
    getcontext().prec = 60
    total = Decimal(0)
    out = []
    for j in range(1, N + 1):
        total += (Decimal(j * j) - Decimal(2 * j) * Decimal(omega) / Decimal(abs(kappa))).exp()
        out.append(float(total.ln()))
    return np.array(out)


@pytest.mark.parametrize("omega,kappa", [(1.0, 1.0), (2.5, 0.7), (0.3, -1.4)])
def test_certificate_exact_small_j(omega, kappa):
    cert = no_point_spectrum_certificate(omega, kappa, N=5)
    assert np.allclose(cert.log_partial_sums, direct_partial_sums(omega, kappa, 5), rtol=0, atol=1e-12)
    direct = np.array([math.log(sum(math.exp(j * j - 2 * j * omega / abs(kappa)) for j in range(1, n + 1))) for n in range(1, 6)])
    assert np.allclose(cert.log_partial_sums, direct, atol=1e-12)


def test_certificate_terms_eventually_increase():
    cert = no_point_spectrum_certificate(5.0, 0.5, N=40)
    assert np.all(cert.term_increments[cert.onset - 1 :] > 0)
    assert np.all(cert.increments >= 0)
    assert np.allclose(cert.increments[-10:], cert.term_increments[-10:], rtol=1e-9)
    assert cert.certified
    assert np.allclose(cert.term_increments, cert.bounds, atol=1e-12)


def test_certificate_domain():
    with pytest.raises(DomainError):
        no_point_spectrum_certificate(1.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.1, 5.0), st.integers(3, 60))
def test_certificate_increment_property(omega, kappa, N):
    cert = no_point_spectrum_certificate(omega, kappa, N=N)
    n = np.arange(2, N + 1)
    assert np.allclose(cert.term_increments, (2 * n - 1) - 2 * omega / kappa, atol=1e-9)
    assert np.all(cert.increments >= 0)
    # log(1 + x) >= log(x) with x the newest term over the previous partial sum.
    assert np.all(cert.increments >= cert.log_terms[1:] - cert.log_partial_sums[:-1] - 1e-12)
