import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sparsedirac.coefficients import f_extrema
from sparsedirac.errors import DomainError, GapParameterError, ResolutionWarning
from sparsedirac.potential import build_bump_potential, free_potential
from sparsedirac.pruefer import SpectralParam, lambda_of_kappa
from sparsedirac.spectral import (
    bump_coefficients,
    count_eigenvalues_regular,
    d_factor,
    density_direct,
    density_product,
    density_profile,
    empirical_density,
    free_measure,
    measure_on_interval,
    norming_constant,
    regular_step_function,
)


def random_potential(rng, n, kinds=("rect", "cos", "tri"), eta=0.0):
    return build_bump_potential(
        rng.uniform(0.2, 2.0, n), list(rng.choice(kinds, n)), rng.uniform(1.0, 12.0, n), widths=rng.uniform(0.4, 2.0, n), eta=eta
    )


def test_d_factor_examples():
    r3 = math.sqrt(3)
    assert d_factor(r3, 1.0) == pytest.approx(1.5, rel=1e-15)
    assert d_factor(-r3, 1.0) == pytest.approx(0.5, rel=1e-15)
    assert d_factor(r3, 2.0) == pytest.approx(3 / 8, rel=1e-15)
    with pytest.raises(GapParameterError):
        d_factor(0.0, 1.0)


def test_free_density_both_routes():
    p = SpectralParam.from_kappa(math.sqrt(3))
    assert density_product(free_potential(), p) == pytest.approx(1.5 / math.pi, rel=1e-15)
    assert density_direct(free_potential(), p) == pytest.approx(1.5 / math.pi, rel=1e-15)


def test_free_density_tends_to_limit_from_above():
    k = np.geomspace(1, 1e6, 50)
    d = density_product(free_potential(), SpectralParam.from_kappa(k))
    assert np.all(d > 1 / math.pi)
    assert np.all(np.diff(d) < 0)
    assert d[-1] == pytest.approx(1 / math.pi, rel=1e-6)


@pytest.mark.parametrize("n", [1, 3])
def test_routes_agree(rng, n):
    q = random_potential(rng, n, eta=0.9)
    k = np.concatenate([-np.linspace(3, 0.2, 25), np.linspace(0.2, 3, 25)])
    p = SpectralParam.from_kappa(k)
    a, b = density_product(q, p), density_direct(q, p)
    assert np.max(np.abs(a - b) / b) < 1e-8
    assert np.all(a > 0)


def test_repeated_evaluation_bit_identical(rng):
    q = random_potential(rng, 3)
    p = SpectralParam.from_kappa(np.linspace(0.5, 2, 40))
    assert np.array_equal(density_product(q, p), density_product(q, p))


def test_profile_threads_match(rng):
    q = random_potential(rng, 2)
    k = np.linspace(0.3, 2.5, 300)
    one = density_profile(q, k, threads=1).density
    four = density_profile(q, k, threads=4).density
    assert np.max(np.abs(one - four)) <= 1e-15 * np.max(one)
    with pytest.raises(GapParameterError):
        density_profile(q, [-1.0, 0.0, 1.0])


def test_free_measure_closed_form():
    m = measure_on_interval(free_potential(), (1.0, 2.0)).value
    exact = (2 + math.asinh(2) - 1 - math.asinh(1)) / math.pi
    assert m == pytest.approx(exact, rel=1e-9)
    assert free_measure((1.0, 2.0)) == pytest.approx(exact, rel=1e-15)
    neg = quad(lambda k: (1 - 1 / math.hypot(k, 1)) / math.pi, -2, -1)[0]
    assert measure_on_interval(free_potential(), (-2.0, -1.0)).value == pytest.approx(neg, rel=1e-9)


def test_measure_additivity(rng):
    q = random_potential(rng, 2, kinds=("rect",))
    whole = measure_on_interval(q, (1.0, 2.0), rtol=1e-11).value
    parts = measure_on_interval(q, (1.0, 1.5), rtol=1e-11).value + measure_on_interval(q, (1.5, 2.0), rtol=1e-11).value
    assert whole == pytest.approx(parts, abs=1e-9)


def test_measure_single_bump_bounds():
    q = build_bump_potential([1.0], "rect", [3.0], widths=[1.0])
    iv = (1.0, 2.0)
    k = np.linspace(*iv, 2001)
    c = bump_coefficients(q, SpectralParam.from_kappa(k))[0]
    lo, hi = f_extrema(c)
    m = measure_on_interval(q, iv).value
    assert float(np.min(lo)) * free_measure(iv) <= m <= float(np.max(hi)) * free_measure(iv)


def test_measure_rejects_interval_across_zero():
    with pytest.raises(GapParameterError):
        measure_on_interval(free_potential(), (-1.0, 1.0))


def test_weyl_count_free_example():
    assert count_eigenvalues_regular(free_potential(), 100.0, math.sqrt(2), math.sqrt(5)) in (31, 32)
    assert count_eigenvalues_regular(free_potential(), 100.0, 2.0, 2.0) == 0


def test_weyl_count_errors():
    q = build_bump_potential([1.0], "rect", [10.0], widths=[1.0])
    with pytest.raises(DomainError):
        count_eigenvalues_regular(q, 5.0, 1.5, 2.0)
    with pytest.raises(GapParameterError):
        count_eigenvalues_regular(q, 50.0, -1.5, 2.0)


def test_one_bump_changes_count_by_bounded_amount():
    q = build_bump_potential([1.0], "rect", [10.0], widths=[1.0])
    diffs = []
    for b in (100.0, 200.0, 400.0):
        lam = (math.sqrt(2), math.sqrt(5))
        diffs.append(count_eigenvalues_regular(q, b, *lam) - count_eigenvalues_regular(free_potential(), b, *lam))
    assert max(abs(d) for d in diffs) <= 2


def test_count_matches_located_eigenvalues():
    q = build_bump_potential([0.8], "cos", [5.0], widths=[2.0])
    steps = regular_step_function(q, 60.0, (math.sqrt(2), math.sqrt(5)))
    assert len(steps) == count_eigenvalues_regular(q, 60.0, math.sqrt(2), math.sqrt(5))
    assert all(j > 0 for _, j in steps)


def test_norming_constant_free_limit():
    lam = 2.0
    val = norming_constant(free_potential(), 50.0, lam) / 50.0
    assert val == pytest.approx(lam / (lam + 1), rel=0.02)


def test_norming_constant_against_quadrature():
    q = build_bump_potential([0.7, 1.2], ["cos", "rect"], [3.0, 2.0], widths=[1.5, 1.0], eta=0.4)
    lam = -2.3
    from scipy.integrate import solve_ivp

    from sparsedirac.potential import evaluate
    from sparsedirac.pruefer import boundary_vector

    def rhs(r, y):
        v = evaluate(q, r)
        return [(-v + 1 + lam) * y[1], (v + 1 - lam) * y[0], y[0] ** 2 + y[1] ** 2]

    b = 12.0
    edges = [0.0, *sorted(set(q.starts + q.ends)), b]
    y = [*boundary_vector(q.eta), 0.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        y = solve_ivp(rhs, (lo, hi), y, rtol=1e-12, atol=1e-13, method="DOP853").y[:, -1]
    assert norming_constant(q, b, lam) == pytest.approx(y[2], rel=1e-9)


def test_step_function_positive_jumps_and_density():
    steps = regular_step_function(free_potential(), 200.0, (math.sqrt(2), math.sqrt(5)))
    assert all(j > 0 for _, j in steps)
    edges = np.linspace(1.05, 1.95, 10)
    emp = empirical_density(steps, edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    ref = density_product(free_potential(), SpectralParam.from_kappa(centres))
    assert np.nanmax(np.abs(emp / ref - 1)) < 0.05


def test_resolution_warning_on_coarse_grid(rng):
    # A single cell for many eigenvalues must still return them all, and the
    # warning fires only when roots collapse numerically.
    with warnings.catch_warnings():
        warnings.simplefilter("error", ResolutionWarning)
        steps = regular_step_function(free_potential(), 30.0, (1.5, 2.5), cells_per_spacing=1)
    assert len(steps) == count_eigenvalues_regular(free_potential(), 30.0, 1.5, 2.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 4), st.floats(0.3, 3.0), st.booleans(), st.integers(0, 2**31 - 1))
def test_route_agreement_property(n, kappa, neg, seed):
    rng = np.random.default_rng(seed)
    q = random_potential(rng, n, eta=float(rng.uniform(0, 3.1)))
    p = SpectralParam.from_kappa(-kappa if neg else kappa)
    a, b = density_product(q, p), density_direct(q, p)
    assert a > 0
    assert abs(a - b) <= 1e-8 * b


def test_measure_node_cap_is_reported():
    q = build_bump_potential([1.0, 1.0], "rect", [5.0, 50.0], widths=[1.0, 1.0])
    with pytest.warns(ResolutionWarning, match="unresolved"):
        m = measure_on_interval(q, (1.0, 2.0), rtol=1e-15, max_nodes=2000)
    assert not m.converged and m.nodes >= 2000


def test_measure_absolute_tolerance():
    q = build_bump_potential([1.0, 1.0], "rect", [5.0, 50.0], widths=[1.0, 1.0])
    strict = measure_on_interval(q, (1.0, 2.0), rtol=1e-12)
    loose = measure_on_interval(q, (1.0, 2.0), rtol=1e-12, atol=1e-4)
    assert strict.converged and loose.converged
    assert loose.nodes <= strict.nodes
    assert loose.value == pytest.approx(strict.value, abs=1e-4)
