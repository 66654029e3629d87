"""Per-bump oscillation coefficients and density factors.

For a bump with unit-determinant transfer matrix ``M`` and
``c = (lambda + 1)/(lambda - 1)``::

    A = (M11^2 + c M21^2 + M12^2 / c + M22^2) / 2
    B = (M11^2 + c M21^2 - M12^2 / c - M22^2) / 2
    C = M11 M12 / sqrt(c) + sqrt(c) M21 M22

The squared Prüfer radius changes across the bump by the factor
``A + B cos 2y + C sin 2y`` where ``y`` is the angle at the bump start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DomainError, InconsistentMatrixError
from .odecore import TransferMatrix
from .pruefer import kappa_of_lambda
from .quadrature import adaptive_simpson, adaptive_simpson_periodic

DET_TOL = 1e-6
QUAD_TOL = 1e-10


@dataclass(frozen=True)
class BumpCoefficients:
    """Coefficients ``A, B, C`` of one bump at one or many spectral values."""

    A: object
    B: object
    C: object
    lam: object
    kappa: object
    index: int | None = None
    transfer: TransferMatrix | None = None

    @property
    def amplitude(self):
        """``sqrt(B^2 + C^2)``."""
        return np.hypot(self.B, self.C)

    def ratio(self, y):
        """``A + B cos 2y + C sin 2y``."""
        return self.A + self.B * np.cos(2.0 * y) + self.C * np.sin(2.0 * y)

    def f(self, y):
        return f_of(self, y)

    def h(self, y):
        return h_of(self, y)

    @property
    def m(self):
        return m_of(self)


def abc_from_transfer(M: TransferMatrix, lam=None, index: int | None = None) -> BumpCoefficients:
    """Compute ``A``, ``B``, ``C`` from a transfer matrix.

    Raises
    ------
    InconsistentMatrixError
        If ``det M`` deviates from 1 by more than ``1e-6``.
    """
    lam = M.lam if lam is None else lam
    kappa = kappa_of_lambda(lam)
    drift = np.max(np.abs(np.asarray(M.det) - 1.0))
    if not drift <= DET_TOL:
        raise InconsistentMatrixError(f"transfer matrix determinant drifts by {drift:g}")
    lam_a = np.asarray(lam, dtype=float)
    c = (lam_a + 1.0) / (lam_a - 1.0)
    rc = np.sqrt(c)
    m11, m12, m21, m22 = M.m11, M.m12, M.m21, M.m22
    u = m11 * m11 + c * m21 * m21
    v = m12 * m12 / c + m22 * m22
    A = 0.5 * (u + v)
    B = 0.5 * (u - v)
    C = m11 * m12 / rc + rc * m21 * m22
    if np.ndim(A) == 0:
        A, B, C = float(A), float(B), float(C)
    return BumpCoefficients(A, B, C, lam, kappa, index, M)


def identity_defect(coeffs: BumpCoefficients):
    """``A^2 - B^2 - C^2 - 1``, zero for exact coefficients."""
    return coeffs.A**2 - coeffs.B**2 - coeffs.C**2 - 1.0


def f_of(coeffs: BumpCoefficients, y):
    """Density factor ``1/(A + B cos 2y + C sin 2y)``; positive and pi-periodic."""
    return 1.0 / coeffs.ratio(y)


def h_of(coeffs: BumpCoefficients, y):
    """``log f``."""
    return -np.log(coeffs.ratio(y))


def m_of(coeffs: BumpCoefficients):
    """Closed-form period average of ``log f``: ``log(2/(A + 1))``."""
    return np.log(2.0 / (np.asarray(coeffs.A) + 1.0)) if np.ndim(coeffs.A) else math.log(2.0 / (coeffs.A + 1.0))


def f_extrema(coeffs: BumpCoefficients):
    """``(min f, max f) = (1/(A + sqrt(B^2 + C^2)), 1/(A - sqrt(B^2 + C^2)))``."""
    amp = coeffs.amplitude
    return 1.0 / (coeffs.A + amp), 1.0 / (coeffs.A - amp)


def _scalar(coeffs: BumpCoefficients) -> BumpCoefficients:
    if np.ndim(coeffs.A):
        raise ValueError("period averages are computed for scalar coefficients")
    return coeffs


def mean_f_quadrature(coeffs: BumpCoefficients, tol: float = QUAD_TOL) -> float:
    """``(1/pi) int_0^pi f dy`` by adaptive Simpson."""
    c = _scalar(coeffs)
    return adaptive_simpson_periodic(lambda y: 1.0 / c.ratio(y), math.pi, tol * math.pi) / math.pi


def mean_log_f_quadrature(coeffs: BumpCoefficients, tol: float = QUAD_TOL) -> float:
    """``(1/pi) int_0^pi log f dy`` by adaptive Simpson."""
    c = _scalar(coeffs)
    return adaptive_simpson_periodic(lambda y: -math.log(c.ratio(y)), math.pi, tol * math.pi) / math.pi


# Small-height asymptotics ---------------------------------------------------


def _piecewise_adaptive(fn, edges, tol):
    pieces = list(zip(edges[:-1], edges[1:]))
    return math.fsum(adaptive_simpson(fn, float(lo), float(hi), tol / len(pieces)) for lo, hi in pieces)


def profile_trig_integrals(profile, kappa: float, position: float = 0.0, tol: float = QUAD_TOL):
    """``(int W(s - p) sin 2 kappa s ds, int W(s - p) cos 2 kappa s ds)`` over ``[p, p + alpha]``."""
    edges = profile.breakpoints
    w = lambda s: float(profile(s))
    i_sin = _piecewise_adaptive(lambda s: w(s) * math.sin(2.0 * kappa * (s + position)), edges, tol)
    i_cos = _piecewise_adaptive(lambda s: w(s) * math.cos(2.0 * kappa * (s + position)), edges, tol)
    return i_sin, i_cos


def kernel_w(profile, kappa: float, position: float = 0.0) -> float:
    """Second-order kernel ``(4/kappa^2)[(int W sin 2 kappa s)^2 + (int W cos 2 kappa s)^2]``.

    ``A = 1 + (H^2/2) kernel_w + O(H^3)``.  The value does not depend on
    ``position``.
    """
    i_sin, i_cos = profile_trig_integrals(profile, kappa, position)
    return 4.0 / kappa**2 * (i_sin * i_sin + i_cos * i_cos)


def kernel_w_printed(profile, kappa: float, lam: float, position: float = 0.0) -> float:
    """Alternative bracket built from ``int W sin cos``, ``int W sin^2`` and ``int W cos^2``.

    ``(8/kappa^2) Isc^2 + 4 Iss Icc + ((lambda^2 + 1)/(lambda^2 - 1))(Iss^2 + Icc^2)``.
    Kept for comparison; it does not reproduce the numerical ``A``.
    """
    edges = profile.breakpoints
    w = lambda s: float(profile(s))
    k = kappa
    p = position
    isc = _piecewise_adaptive(lambda s: w(s) * math.sin(k * (s + p)) * math.cos(k * (s + p)), edges, QUAD_TOL)
    iss = _piecewise_adaptive(lambda s: w(s) * math.sin(k * (s + p)) ** 2, edges, QUAD_TOL)
    icc = _piecewise_adaptive(lambda s: w(s) * math.cos(k * (s + p)) ** 2, edges, QUAD_TOL)
    return 8.0 / k**2 * isc**2 + 4.0 * iss * icc + (lam**2 + 1.0) / (lam**2 - 1.0) * (iss**2 + icc**2)


def abc_asymptotic(profile, kappa: float, H: float, position: float = 0.0):
    """Leading-order ``(A, B, C)`` for small height ``H``.

    ``A ~ 1 + (H^2/2) W``, ``B ~ -(2H/kappa) int W sin 2 kappa s``,
    ``C ~ (2H/kappa) int W cos 2 kappa s``.  With ``position = 0`` the
    integrals use the bump's local frame, matching transfer matrices taken on
    ``[0, alpha]``.
    """
    if H == 0:
        return 1.0, 0.0, 0.0
    i_sin, i_cos = profile_trig_integrals(profile, kappa, position)
    w = 4.0 / kappa**2 * (i_sin * i_sin + i_cos * i_cos)
    return 1.0 + 0.5 * H * H * w, -2.0 * H / kappa * i_sin, 2.0 * H / kappa * i_cos


def m_asymptotic(profile, kappa: float, H: float, coefficient: float = 0.25) -> float:
    """Leading-order ``m ~ -coefficient * H^2 * W``.

    Expanding ``log(2/(A + 1))`` with ``A = 1 + (H^2/2) W`` gives the
    default coefficient ``1/4``.
    """
    if H == 0:
        return 0.0
    return -coefficient * H * H * kernel_w(profile, kappa)


@lru_cache(maxsize=256)
def _cached_kernel(profile, kappa: float) -> float:
    return kernel_w(profile, kappa)


def divergence_partial_sums(heights: Sequence[float], profiles, kappa: float, n: int | None = None) -> float:
    """``sum_{j <= n} H_j^2 W_j(kappa)``.

    ``profiles`` is one profile shared by all bumps or a sequence of them.
    """
    n = len(heights) if n is None else int(n)
    if n < 1:
        raise DomainError("n must be at least 1")
    if n > len(heights):
        raise DomainError(f"n={n} exceeds the {len(heights)} available heights")
    shared = not isinstance(profiles, (list, tuple))
    terms = []
    for j in range(n):
        h = float(heights[j])
        if h == 0.0:
            continue
        prof = profiles if shared else profiles[j]
        terms.append(h * h * _cached_kernel(prof, float(kappa)))
    return math.fsum(terms)


def _ratio_g(s: np.ndarray) -> np.ndarray:
    """``(log s)^2 / (s - 1 - log s)`` with its removable value 2 at ``s = 1``."""
    s = np.asarray(s, dtype=float)
    e = s - 1.0
    out = np.full_like(s, 2.0)
    far = np.abs(e) > 1e-4
    ls = np.log1p(e[far])
    out[far] = ls * ls / (e[far] - ls)
    near = ~far & (e != 0)
    en = e[near]
    # Series of both numerator and denominator around s = 1.
    num = en**2 * (1.0 - en + 11.0 / 12.0 * en**2)
    den = en**2 * (0.5 - en / 3.0 + en**2 / 4.0)
    out[near] = num / den
    return out


def hj_bound_constant(c: float, points: int = 200_001) -> float:
    """``K_c = max{2, max_{s in [c, 1]} (log s)^2/(s - 1 - log s)}`` by dense scan.

    Guarantees ``h^2 <= K_c (f - 1 - h)`` with ``h = log f`` whenever ``f >= c``.

    Raises
    ------
    DomainError
        Unless ``0 < c < 1``.
    """
    if not (0.0 < c < 1.0):
        raise DomainError("c must lie in (0, 1)")
    s = np.linspace(c, 1.0, points)
    return float(max(2.0, np.max(_ratio_g(s))))
