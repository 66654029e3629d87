import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sparsedirac.coefficients import (
    BumpCoefficients,
    abc_asymptotic,
    abc_from_transfer,
    divergence_partial_sums,
    f_extrema,
    f_of,
    h_of,
    hj_bound_constant,
    identity_defect,
    kernel_w,
    m_asymptotic,
    m_of,
    mean_f_quadrature,
    mean_log_f_quadrature,
)
from sparsedirac.errors import DomainError, InconsistentMatrixError
from sparsedirac.odecore import TransferMatrix, bump_transfer, closed_form_rectangular, free_transfer
from sparsedirac.potential import BumpProfile, build_bump_potential
from sparsedirac.pruefer import lambda_of_kappa


def rect_coeffs(H=1.0, alpha=1.0, lam=2.0):
    return abc_from_transfer(closed_form_rectangular(H, alpha, lam), lam)


def test_free_matrix_gives_trivial_coefficients():
    for alpha in (0.3, 1.0, 7.5):
        c = abc_from_transfer(free_transfer(alpha, 2.0), 2.0)
        assert (c.A, c.B, c.C) == pytest.approx((1.0, 0.0, 0.0), abs=1e-14)


def test_rect_example_identity():
    c = rect_coeffs()
    assert abs(identity_defect(c)) < 1e-10
    assert c.A > 1


def test_abc_by_explicit_formula():
    lam = 2.0
    M = closed_form_rectangular(1.0, 1.0, lam).as_array()
    cc = 3.0
    A = 0.5 * (M[0, 0] ** 2 + cc * M[1, 0] ** 2 + M[0, 1] ** 2 / cc + M[1, 1] ** 2)
    c = rect_coeffs()
    assert c.A == pytest.approx(A, rel=1e-14)


def test_radius_ratio_formula_against_vector():
    lam, alpha = 2.0, 1.0
    M = closed_form_rectangular(1.0, alpha, lam)
    c = abc_from_transfer(M, lam)
    er = math.sqrt((lam - 1) / (lam + 1))
    for y in np.linspace(0, math.pi, 7):
        p1, p2 = math.cos(y), er * math.sin(y)
        q1, q2 = M.m11 * p1 + M.m12 * p2, M.m21 * p1 + M.m22 * p2
        R2 = q1 * q1 + q2 * q2 / er**2
        assert R2 == pytest.approx(c.ratio(y), rel=1e-13)


def test_inconsistent_matrix_rejected():
    with pytest.raises(InconsistentMatrixError):
        abc_from_transfer(TransferMatrix(2.0, 0.0, 0.0, 1.0), 2.0)


def test_f_and_h_trivial():
    c = BumpCoefficients(1.0, 0.0, 0.0, 2.0, math.sqrt(3))
    y = np.linspace(0, 3, 11)
    assert np.all(f_of(c, y) == 1.0)
    assert np.all(h_of(c, y) == 0.0)
    assert m_of(c) == 0.0
    assert mean_f_quadrature(c) == pytest.approx(1.0, abs=1e-15)


def test_f_extrema_harmonic_addition():
    c = rect_coeffs()
    y = np.linspace(0, math.pi, 200_001)
    f = c.f(y)
    lo, hi = f_extrema(c)
    assert f.min() == pytest.approx(lo, rel=1e-9)
    assert f.max() == pytest.approx(hi, rel=1e-9)
    assert c.f(0.0) == pytest.approx(1 / (c.A + c.B), rel=1e-15)


def test_f_pi_periodic(rng):
    c = rect_coeffs(0.7, 1.3, -2.5)
    y = rng.uniform(-10, 10, 100)
    assert np.allclose(c.f(y), c.f(y + math.pi), rtol=1e-12)


def test_period_averages_against_scipy():
    c = rect_coeffs()
    mean_f = quad(lambda y: c.f(y), 0, math.pi, epsabs=1e-13)[0] / math.pi
    mean_log = quad(lambda y: c.h(y), 0, math.pi, epsabs=1e-13)[0] / math.pi
    assert mean_f == pytest.approx(1.0, abs=1e-9)
    assert mean_log == pytest.approx(c.m, abs=1e-9)
    assert mean_f_quadrature(c) == pytest.approx(1.0, abs=1e-9)
    assert mean_log_f_quadrature(c) == pytest.approx(math.log(2 / (c.A + 1)), abs=1e-9)


def test_m_negative_identical_bumps():
    q = build_bump_potential([1.0], "rect", [1.0], widths=[1.0])
    kappa = np.linspace(0.5, 2.0, 100)
    lam = lambda_of_kappa(kappa)
    c = abc_from_transfer(bump_transfer(q, 0, lam), lam)
    assert np.all(c.m < 0)
    assert np.all(c.A > 1)


def test_asymptotic_trivial_height():
    p = BumpProfile(1.0, "rect")
    assert abc_asymptotic(p, 1.0, 0.0) == (1.0, 0.0, 0.0)
    assert m_asymptotic(p, 1.0, 0.0) == 0.0


def test_b_coefficient_example():
    H = 1e-4
    p = BumpProfile(1.0, "rect")
    _, B, C = abc_asymptotic(p, 1.0, H)
    assert B == pytest.approx(-2 * H * (1 - math.cos(2)) / 2, rel=1e-10)
    assert C == pytest.approx(2 * H * math.sin(2) / 2, rel=1e-10)
    lam = math.sqrt(2)
    num = abc_from_transfer(closed_form_rectangular(H, 1.0, lam), lam)
    assert num.B == pytest.approx(B, rel=1e-3)
    assert num.C == pytest.approx(C, rel=1e-3)


def scipy_kernel(profile, kappa, shift=0.0):
    edges = list(profile.breakpoints)
    i_s = sum(quad(lambda s: profile(s) * math.sin(2 * kappa * (s + shift)), a, b, epsabs=1e-14)[0] for a, b in zip(edges[:-1], edges[1:]))
    i_c = sum(quad(lambda s: profile(s) * math.cos(2 * kappa * (s + shift)), a, b, epsabs=1e-14)[0] for a, b in zip(edges[:-1], edges[1:]))
    return 4 / kappa**2 * (i_s**2 + i_c**2)


@pytest.mark.parametrize("kind", ["rect", "cos", "tri"])
def test_kernel_against_scipy(kind):
    p = BumpProfile(1.4, kind)
    for kappa in (0.5, 1.0, 2.3, -1.7):
        assert kernel_w(p, kappa) == pytest.approx(scipy_kernel(p, kappa), rel=1e-9)
        assert kernel_w(p, kappa, position=3.7) == pytest.approx(kernel_w(p, kappa), rel=1e-9)
        assert kernel_w(p, kappa) > 0


def asymptotic_slopes(profile, kappa):
    lam = lambda_of_kappa(kappa)
    hs = np.array([1e-1, 3e-2, 1e-2, 3e-3])
    eA, em = [], []
    for H in hs:
        q = build_bump_potential([H], [profile], [1.0])
        c = abc_from_transfer(bump_transfer(q, 0, lam, tol=1e-13), lam)
        eA.append(abs(c.A - abc_asymptotic(profile, kappa, H)[0]))
        em.append(abs(c.m - m_asymptotic(profile, kappa, H)))
    return np.polyfit(np.log(hs), np.log(eA), 1)[0], np.polyfit(np.log(hs), np.log(em), 1)[0]


@pytest.mark.parametrize("kind,kappa", [("rect", 1.0), ("cos", 1.5), ("tri", -0.8)])
def test_asymptotic_order(kind, kappa):
    sA, sm = asymptotic_slopes(BumpProfile(1.0, kind), kappa)
    assert sA >= 2.7
    assert sm >= 2.7


def test_translation_invariance_of_A(rng):
    for _ in range(10):
        kind = rng.choice(["rect", "cos", "tri"])
        H, w, lam = rng.uniform(0.2, 2), rng.uniform(0.3, 2), rng.choice([-1, 1]) * rng.uniform(1.1, 4)
        base = abc_from_transfer(bump_transfer(build_bump_potential([H], kind, [1.0], widths=[w]), 0, lam, method="rk4"), lam)
        # Translating the bump conjugates M by free rotations, which leaves A fixed.
        shift = rng.uniform(0, 20)
        Fm = free_transfer(shift, lam)
        M = Fm.inverse().compose(base.transfer.compose(Fm))
        moved = abc_from_transfer(M, lam)
        assert abs(moved.A - base.A) < 1e-9


def test_divergence_trivial_and_lower_bound():
    p = BumpProfile(1.0, "rect")
    assert divergence_partial_sums([0.0] * 5, p, 1.0) == 0.0
    i_s = quad(lambda s: math.sin(s) ** 2, 0, 1)[0]
    i_c = quad(lambda s: math.cos(s) ** 2, 0, 1)[0]
    n = 100
    heights = [1 / math.sqrt(j) for j in range(1, n + 1)]
    bound = sum(2 / j * i_s * i_c for j in range(1, n + 1))
    assert divergence_partial_sums(heights, p, 1.0, n) >= bound


def test_divergence_harmonic_growth():
    p = BumpProfile(1.0, "rect")
    heights = [1 / math.sqrt(j) for j in range(1, 4001)]
    w = kernel_w(p, 1.0)
    s1 = divergence_partial_sums(heights, p, 1.0, 2000)
    s2 = divergence_partial_sums(heights, p, 1.0, 4000)
    assert s2 - s1 == pytest.approx(w * math.log(2), rel=1e-3)


def test_divergence_domain():
    with pytest.raises(DomainError):
        divergence_partial_sums([1.0], BumpProfile(1.0), 1.0, 0)


def test_hj_constant_limit_and_brute_scan():
    assert hj_bound_constant(1 - 1e-9) == pytest.approx(2.0, abs=1e-6)
    s = np.linspace(0.5, 1.0, 1_000_001)[:-1]
    brute = max(2.0, float(np.max(np.log(s) ** 2 / (s - 1 - np.log(s)))))
    assert hj_bound_constant(0.5) == pytest.approx(brute, rel=1e-9)


@pytest.mark.parametrize("c", [0.0, 1.0, -0.5, 1.5])
def test_hj_constant_domain(c):
    with pytest.raises(DomainError):
        hj_bound_constant(c)


def test_hj_inequality_random(rng):
    c = 0.3
    K = hj_bound_constant(c)
    count = 0
    while count < 1000:
        lam = rng.choice([-1, 1]) * rng.uniform(1.1, 5)
        co = rect_coeffs(rng.uniform(0, 1.5), rng.uniform(0.2, 2), lam)
        y = rng.uniform(0, math.pi)
        f = co.f(y)
        if f < c:
            continue
        h = math.log(f)
        assert h * h <= K * (f - 1 - h) + 1e-12
        count += 1


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2), st.floats(0.2, 2), st.floats(1.1, 5), st.booleans())
def test_identity_and_bounds_property(H, alpha, lam, neg):
    lam = -lam if neg else lam
    if abs(1 + lam - H) < 1e-6:
        return
    c = rect_coeffs(H, alpha, lam)
    assert abs(identity_defect(c)) < 1e-9 * max(1.0, c.A**2)
    assert c.A >= 1 - 1e-12
    assert c.A > c.amplitude


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.2, 2), st.floats(1.1, 5), st.booleans())
def test_period_average_property(H, alpha, lam, neg):
    lam = -lam if neg else lam
    if abs(1 + lam - H) < 0.05:
        return
    c = rect_coeffs(H, alpha, lam)
    assert mean_f_quadrature(c) == pytest.approx(1.0, abs=1e-9)
    assert mean_log_f_quadrature(c) == pytest.approx(c.m, abs=1e-9)
