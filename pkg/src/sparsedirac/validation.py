"""Quick invariant suite used by the ``validate`` command."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import angular, coefficients, construction, odecore, spectral
from .potential import BumpProfile, build_bump_potential, free_potential
from .pruefer import SpectralParam, kappa_of_lambda, lambda_of_kappa


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_rect_case(rng):
    while True:
        H = rng.uniform(0, 2)
        alpha = rng.uniform(0.2, 2)
        lam = rng.choice([-1.0, 1.0]) * rng.uniform(1.1, 5)
        if abs(lam - H - 1) > 0.05 and abs(lam - H + 1) > 0.05:
            return H, alpha, lam


def check_transfer_oracle(rng, cases: int = 40) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        H, alpha, lam = _random_rect_case(rng)
        num = odecore.integrate_fundamental(odecore.SystemCoefficients.dirac(lambda r: np.full_like(r, H), lam), (0, alpha))
        ref = odecore.closed_form_rectangular(H, alpha, lam)
        worst = max(worst, float(np.max(np.abs(num.as_array() - ref.as_array()))))
    return CheckResult("transfer matrix RK4 vs closed form", worst < 1e-9, f"max entry error {worst:.3g}")


def check_abc_identity(rng, cases: int = 40) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        H, alpha, lam = _random_rect_case(rng)
        c = coefficients.abc_from_transfer(odecore.closed_form_rectangular(H, alpha, lam), lam)
        worst = max(worst, abs(coefficients.identity_defect(c)))
    return CheckResult("A^2 - B^2 - C^2 = 1", worst < 1e-9, f"max defect {worst:.3g}")


def check_period_averages(rng, cases: int = 10) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        H, alpha, lam = _random_rect_case(rng)
        c = coefficients.abc_from_transfer(odecore.closed_form_rectangular(H, alpha, lam), lam)
        worst = max(worst, abs(coefficients.mean_f_quadrature(c) - 1.0), abs(coefficients.mean_log_f_quadrature(c) - c.m))
    return CheckResult("period averages of f and log f", worst < 1e-9, f"max error {worst:.3g}")


def check_density_routes(rng) -> CheckResult:
    kap = np.concatenate([-np.linspace(3, 1.05, 20), np.linspace(1.05, 3, 20)])
    p = SpectralParam.from_kappa(kap)
    worst = 0.0
    for n in (0, 1, 3):
        q = build_bump_potential(rng.uniform(0.2, 1.5, n), "cos", rng.uniform(1, 10, n), widths=rng.uniform(0.5, 2, n), eta=0.3)
        a, b = spectral.density_product(q, p), spectral.density_direct(q, p)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return CheckResult("density product vs direct", worst < 1e-8, f"max difference {worst:.3g}")


def check_weyl_count(rng) -> CheckResult:
    worst = 0.0
    for b in (100, 200):
        n = spectral.count_eigenvalues_regular(free_potential(), b, math.sqrt(2), math.sqrt(5))
        worst = max(worst, abs(n - b / math.pi))
    return CheckResult("Weyl eigenvalue count", worst <= 3, f"max deviation {worst:.3g}")


def check_channel(rng) -> CheckResult:
    r = np.linspace(0.1, 10, 400)
    res = max(angular.bessel_residual(k, 2.0, r) for k in (1, -1, 2))
    orth = max(
        float(np.max(np.abs(angular.transform_matrix(k, x).T @ angular.transform_matrix(k, x) - np.eye(2))))
        for k in (1, -1, 2, -2)
        for x in (0.1, 1.0, 10.0)
    )
    ok = res < 1e-8 and orth < 1e-12
    return CheckResult("Bessel residual and orthogonal transform", ok, f"residual {res:.3g}, orthogonality {orth:.3g}")


def check_certificate(rng) -> CheckResult:
    cert = construction.no_point_spectrum_certificate(1.0, 1.0, N=12)
    ok = bool(np.allclose(cert.term_increments, cert.bounds, atol=1e-12)) and cert.certified
    return CheckResult("point-spectrum certificate increments", ok, f"certified={cert.certified}")


CHECKS: tuple[Callable, ...] = (
    check_transfer_oracle,
    check_abc_identity,
    check_period_averages,
    check_density_routes,
    check_weyl_count,
    check_channel,
    check_certificate,
)


def run_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check(rng) for check in CHECKS]
