"""Transfer matrices of the radial Dirac system.

The system is ``Psi' = [[0, P(r)], [Q(r), 0]] Psi`` with
``P = -q + 1 + lambda`` and ``Q = q + 1 - lambda``.  The coefficient matrix
has zero trace, so every fundamental matrix has unit determinant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IntegrationError, SingularParameterError

DEFAULT_TOL = 1e-10
MAX_DOUBLINGS = 18


@dataclass(frozen=True)
class SystemCoefficients:
    """Off-diagonal coefficients of a traceless 2x2 system.

    ``upper(r)`` multiplies ``Psi_2`` in ``Psi_1'`` and ``lower(r)``
    multiplies ``Psi_1`` in ``Psi_2'``.  Both accept a 1-D array of radii
    and return an array whose leading axis matches it; trailing axes (for
    example a grid of spectral parameters) broadcast.
    """

    upper: Callable[[np.ndarray], np.ndarray]
    lower: Callable[[np.ndarray], np.ndarray]
    granularity: int = 1
    breakpoints: tuple[float, ...] = ()

    @classmethod
    def dirac(cls, potential: Callable, lam, granularity: int = 1) -> "SystemCoefficients":
        """Coefficients ``-q + 1 + lambda`` and ``q + 1 - lambda``.

        ``lam`` may be an array; the result then broadcasts over it.
        """
        lam = np.asarray(lam, dtype=float)

        def upper(r):
            qv = np.asarray(potential(r), dtype=float)
            return (-qv + 1.0).reshape(qv.shape + (1,) * lam.ndim) + lam

        def lower(r):
            qv = np.asarray(potential(r), dtype=float)
            return (qv + 1.0).reshape(qv.shape + (1,) * lam.ndim) - lam

        return cls(upper, lower, granularity)


@dataclass(frozen=True)
class TransferMatrix:
    """Fundamental matrix value at the right end of ``interval``.

    Entries may be floats or arrays over a spectral-parameter grid.
    """

    m11: object
    m12: object
    m21: object
    m22: object
    interval: tuple[float, float] = (0.0, 0.0)
    lam: object = None
    steps: int = field(default=0, compare=False)

    @property
    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m21

    def as_array(self) -> np.ndarray:
        """Entries stacked as shape ``(2, 2, ...)``."""
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=float)

    def compose(self, first: "TransferMatrix") -> "TransferMatrix":
        """``self @ first``: apply ``first`` then ``self``."""
        return TransferMatrix(
            self.m11 * first.m11 + self.m12 * first.m21,
            self.m11 * first.m12 + self.m12 * first.m22,
            self.m21 * first.m11 + self.m22 * first.m21,
            self.m21 * first.m12 + self.m22 * first.m22,
            (first.interval[0], self.interval[1]),
            self.lam,
        )

    def inverse(self) -> "TransferMatrix":
        # Unit determinant makes the adjugate the inverse.
        return TransferMatrix(self.m22, -self.m12, -self.m21, self.m11, self.interval[::-1], self.lam)


def identity_transfer(lam=None) -> TransferMatrix:
    return TransferMatrix(1.0, 0.0, 0.0, 1.0, (0.0, 0.0), lam)


def _rk4_linear(U, L, h, y11, y12, y21, y22):
    """Classical RK4 for ``y1' = P y2``, ``y2' = Q y1`` on both columns.

    ``U`` and ``L`` hold ``P`` and ``Q`` on the half-step grid
    ``r0, r0 + h/2, ..., r1`` (length ``2n + 1``).
    """
    h2 = 0.5 * h
    h6 = h / 6.0
    n = (len(U) - 1) // 2
    for i in range(n):
        p0, pm, p1 = U[2 * i], U[2 * i + 1], U[2 * i + 2]
        q0, qm, q1 = L[2 * i], L[2 * i + 1], L[2 * i + 2]
        # column 1
        k1a, k1b = p0 * y21, q0 * y11
        k2a, k2b = pm * (y21 + h2 * k1b), qm * (y11 + h2 * k1a)
        k3a, k3b = pm * (y21 + h2 * k2b), qm * (y11 + h2 * k2a)
        k4a, k4b = p1 * (y21 + h * k3b), q1 * (y11 + h * k3a)
        y11 = y11 + h6 * (k1a + 2.0 * (k2a + k3a) + k4a)
        y21 = y21 + h6 * (k1b + 2.0 * (k2b + k3b) + k4b)
        # column 2
        k1a, k1b = p0 * y22, q0 * y12
        k2a, k2b = pm * (y22 + h2 * k1b), qm * (y12 + h2 * k1a)
        k3a, k3b = pm * (y22 + h2 * k2b), qm * (y12 + h2 * k2a)
        k4a, k4b = p1 * (y22 + h * k3b), q1 * (y12 + h * k3a)
        y12 = y12 + h6 * (k1a + 2.0 * (k2a + k3a) + k4a)
        y22 = y22 + h6 * (k1b + 2.0 * (k2b + k3b) + k4b)
    return y11, y12, y21, y22


def _sample(fn, r0, r1, n):
    grid = np.linspace(r0, r1, 2 * n + 1)
    vals = np.asarray(fn(grid))
    if vals.shape[:1] != grid.shape:
        vals = np.broadcast_to(vals, grid.shape + vals.shape[1:]) if vals.ndim else np.full(grid.shape, float(vals))
    if not np.all(np.isfinite(vals)):
        raise IntegrationError("non-finite coefficient value on the integration grid")
    if vals.ndim == 1:
        return vals.tolist()
    return list(vals)


def fundamental_fixed(coeffs: SystemCoefficients, r0: float, r1: float, n: int, y0=None):
    """Fundamental matrix after ``n`` RK4 steps; ``y0`` defaults to the identity."""
    U = _sample(coeffs.upper, r0, r1, n)
    L = _sample(coeffs.lower, r0, r1, n)
    h = (r1 - r0) / n
    if y0 is None:
        y0 = (1.0, 0.0, 0.0, 1.0)
    return _rk4_linear(U, L, h, *y0)


def initial_steps(length: float, granularity: int = 1, per_unit: float = 16.0) -> int:
    n = max(8, int(math.ceil(per_unit * length)))
    g = max(1, int(granularity))
    return g * int(math.ceil(n / g))


def richardson(step_fn: Callable[[int], tuple], n0: int, tol: float, max_doublings: int = MAX_DOUBLINGS):
    """Double the step count until successive results differ by less than ``tol``.

    ``step_fn(n)`` returns a tuple of arrays/floats.  Returns the finer
    result and the step count that produced it.
    """
    prev = step_fn(n0)
    n = n0
    for _ in range(max_doublings):
        n *= 2
        cur = step_fn(n)
        diff = max(float(np.max(np.abs(np.asarray(c) - np.asarray(p)))) for c, p in zip(cur, prev))
        if not math.isfinite(diff):
            raise IntegrationError("integration produced non-finite values")
        if diff < tol:
            return cur, n
        prev = cur
    raise IntegrationError(f"step refinement did not reach tolerance {tol:g} after {max_doublings} doublings")


def integrate_fundamental(
    coeffs: SystemCoefficients,
    interval: tuple[float, float],
    h: float | None = None,
    tol: float = DEFAULT_TOL,
    lam=None,
) -> TransferMatrix:
    """Fundamental matrix at the right end of ``interval`` from the identity.

    Parameters
    ----------
    coeffs : SystemCoefficients
    interval : (float, float)
        Finite integration interval ``[a, b]``.
    h : float, optional
        Fixed step size.  When omitted the step is halved until the entries
        change by less than ``tol``.
    tol : float
        Richardson acceptance threshold on the entries.
    lam : optional
        Spectral parameter recorded on the result.

    Raises
    ------
    IntegrationError
        On non-finite coefficients or failed refinement.
    """
    a, b = float(interval[0]), float(interval[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise IntegrationError("interval must be finite")
    if b == a:
        return TransferMatrix(1.0, 0.0, 0.0, 1.0, (a, b), lam, 0)
    g = coeffs.granularity
    if h is not None:
        n = g * max(1, int(round(abs(b - a) / (h * g))))
        y = fundamental_fixed(coeffs, a, b, n)
    else:
        y, n = richardson(lambda m: fundamental_fixed(coeffs, a, b, m), initial_steps(abs(b - a), g), tol)
    return TransferMatrix(*y, (a, b), lam, n)


def _series_cs(s, alpha):
    """``cosh(sqrt(s) alpha)`` and ``sinh(sqrt(s) alpha) / sqrt(s)`` for tiny ``s alpha^2``."""
    x = s * alpha * alpha
    c = 1.0 + x / 2.0 * (1.0 + x / 12.0 * (1.0 + x / 30.0 * (1.0 + x / 56.0)))
    sn = alpha * (1.0 + x / 6.0 * (1.0 + x / 20.0 * (1.0 + x / 42.0 * (1.0 + x / 72.0))))
    return c, sn


def rectangular_entries(H, alpha, lam, series_cutoff: float = 1e-4):
    """Closed-form transfer entries over a constant potential ``H`` of length ``alpha``.

    Works elementwise on arrays and never raises; ``s = 1 - (lam - H)**2``
    selects the trigonometric (``s < 0``) or hyperbolic (``s > 0``) branch,
    with a Taylor series near ``s = 0``.
    """
    H = np.asarray(H, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    lam = np.asarray(lam, dtype=float)
    d = lam - H
    a = 1.0 + d
    bq = 1.0 - d
    s = a * bq
    x = s * alpha * alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.sqrt(np.abs(s))
        trig_c, trig_s = np.cos(mu * alpha), np.sin(mu * alpha) / mu
        hyp_c, hyp_s = np.cosh(mu * alpha), np.sinh(mu * alpha) / mu
    ser_c, ser_s = _series_cs(s, alpha)
    small = np.abs(x) < series_cutoff
    c = np.where(small, ser_c, np.where(s < 0, trig_c, hyp_c))
    sn = np.where(small, ser_s, np.where(s < 0, trig_s, hyp_s))
    out = (c, a * sn, bq * sn, c)
    if out[0].ndim == 0:
        return tuple(float(v) for v in out)
    return out


def closed_form_rectangular(H, alpha, lam) -> TransferMatrix:
    """Analytic transfer matrix of a rectangular bump of height ``H`` and width ``alpha``.

    With ``a = 1 + lambda - H``: for ``(lambda - H)^2 > 1`` and
    ``mu = sqrt((lambda - H)^2 - 1)`` the matrix is
    ``[[cos mu alpha, (a/mu) sin mu alpha], [-(mu/a) sin mu alpha, cos mu alpha]]``;
    for ``(lambda - H)^2 < 1`` the hyperbolic analogue; at ``|lambda - H| = 1``
    the polynomial limit.

    Raises
    ------
    SingularParameterError
        If ``a = 0`` (``lambda = H - 1``).
    """
    d = np.asarray(lam, dtype=float) - np.asarray(H, dtype=float)
    if np.any(1.0 + d == 0.0):
        raise SingularParameterError("lambda = H - 1 makes the closed form singular")
    m = rectangular_entries(H, alpha, lam)
    return TransferMatrix(*m, (0.0, float(np.max(alpha))), lam)


def free_transfer(length, lam) -> TransferMatrix:
    """Transfer matrix across a potential-free segment."""
    return TransferMatrix(*rectangular_entries(0.0, length, lam), (0.0, float(np.max(length))), lam)


def apply_transfer(M: TransferMatrix, psi):
    """Matrix-vector product ``M @ psi``; ``psi`` is a pair of floats or arrays."""
    p1, p2 = psi
    return (M.m11 * p1 + M.m12 * p2, M.m21 * p1 + M.m22 * p2)


def propagate_free(state, dr: float, kappa=None):
    """Exact propagation of a Prüfer state over a free segment of length ``dr``.

    The angle decreases by ``kappa * dr`` and the radius is unchanged.
    """
    if dr < 0:
        from .errors import DomainError

        raise DomainError("free propagation needs dr >= 0")
    k = state.param.kappa if kappa is None else kappa
    return state.replace(r=state.r + dr, theta=state.theta - k * dr)


def bump_transfer(q, j: int, lam, tol: float = DEFAULT_TOL, method: str = "auto") -> TransferMatrix:
    """Transfer matrix of bump ``j`` of potential ``q`` on its local interval.

    ``method`` is ``"auto"`` (closed form for rectangular bumps, RK4
    otherwise), ``"closed"`` or ``"rk4"``.
    """
    prof = q.profiles[j]
    H = q.heights[j]
    alpha = prof.width
    if method == "closed" or (method == "auto" and prof.kind == "rect"):
        if prof.kind != "rect":
            raise ValueError("closed form only exists for rectangular bumps")
        return TransferMatrix(*rectangular_entries(H / alpha, alpha, lam), (0.0, alpha), lam)
    g = 2 if prof.kind == "tri" else (len(prof.samples) - 1 if prof.kind == "samples" else 1)
    coeffs = SystemCoefficients.dirac(q.local_potential(j), lam, granularity=g)
    return integrate_fundamental(coeffs, (0.0, alpha), tol=tol, lam=lam)
