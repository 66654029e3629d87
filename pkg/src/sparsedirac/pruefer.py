"""Generalized Prüfer coordinates for the radial Dirac system.

Solutions are written ``Psi_1 = R cos(theta)`` and
``Psi_2 = R sqrt((lambda - 1)/(lambda + 1)) sin(theta)``.  Outside the
central gap ``|lambda| > 1`` the natural spectral variable is
``kappa = sign(lambda) sqrt(lambda^2 - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .errors import DegenerateSolutionError, DomainError, GapParameterError, IntegrationError
from .odecore import DEFAULT_TOL, MAX_DOUBLINGS, initial_steps


def kappa_of_lambda(lam):
    """``sign(lambda) sqrt(lambda^2 - 1)``; raises inside the gap ``|lambda| <= 1``."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam_arr) <= 1.0) or np.any(~np.isfinite(lam_arr)):
        raise GapParameterError("spectral parameter must satisfy |lambda| > 1")
    # (|l| - 1)(|l| + 1) avoids cancellation in l*l - 1 near the gap edge.
    out = np.sign(lam_arr) * np.sqrt((np.abs(lam_arr) - 1.0) * (np.abs(lam_arr) + 1.0))
    return float(out) if out.ndim == 0 else out


def lambda_of_kappa(kappa):
    """``sign(kappa) sqrt(kappa^2 + 1)``; raises at ``kappa = 0``."""
    k = np.asarray(kappa, dtype=float)
    if np.any(k == 0.0) or np.any(~np.isfinite(k)):
        raise GapParameterError("kappa must be nonzero and finite")
    out = np.sign(k) * np.hypot(k, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectralParam:
    """Spectral parameter in both coordinates.

    ``lam`` and ``kappa`` may be floats or equally shaped arrays.
    """

    lam: object
    kappa: object

    @classmethod
    def from_lambda(cls, lam) -> "SpectralParam":
        lam = np.asarray(lam, dtype=float)
        k = kappa_of_lambda(lam)
        return cls(float(lam) if lam.ndim == 0 else lam, k)

    @classmethod
    def from_kappa(cls, kappa) -> "SpectralParam":
        kappa = np.asarray(kappa, dtype=float)
        lam = lambda_of_kappa(kappa)
        return cls(lam, float(kappa) if kappa.ndim == 0 else kappa)

    @property
    def ellipse_ratio(self):
        """``sqrt((lambda - 1)/(lambda + 1))``."""
        lam = np.asarray(self.lam)
        out = np.sqrt((lam - 1.0) / (lam + 1.0))
        return float(out) if out.ndim == 0 else out

    @property
    def c(self):
        """``(lambda + 1)/(lambda - 1)``, the inverse squared ellipse ratio."""
        return (self.lam + 1.0) / (self.lam - 1.0)

    def __len__(self) -> int:
        return int(np.size(self.kappa))


@dataclass(frozen=True)
class PrueferState:
    """Prüfer radius and unwrapped angle at position ``r``.

    ``log_R`` is stored instead of ``R`` so that long propagations cannot
    underflow; ``R`` is exposed as a property.
    """

    r: float
    log_R: object
    theta: object
    param: SpectralParam

    @property
    def R(self):
        return np.exp(self.log_R)

    def replace(self, **changes) -> "PrueferState":
        return replace(self, **changes)

    def psi(self):
        return from_pruefer(self.R, self.theta, self.param)


def to_pruefer(psi1, psi2, param: SpectralParam):
    """Radius and angle of a solution vector.

    Returns
    -------
    R, theta
        ``R`` from the generalized Pythagoras
        ``R^2 = Psi_1^2 + ((lambda + 1)/(lambda - 1)) Psi_2^2`` and
        ``theta = atan2(sqrt((lambda + 1)/(lambda - 1)) Psi_2, Psi_1)``.

    Raises
    ------
    DegenerateSolutionError
        For the zero vector.
    """
    p1 = np.asarray(psi1, dtype=float)
    p2 = np.asarray(psi2, dtype=float)
    if np.any((p1 == 0) & (p2 == 0)):
        raise DegenerateSolutionError("the zero vector has no Prüfer angle")
    scaled = p2 / np.asarray(param.ellipse_ratio)
    R = np.hypot(p1, scaled)
    theta = np.arctan2(scaled, p1)
    if R.ndim == 0:
        return float(R), float(theta)
    return R, theta


def from_pruefer(R, theta, param: SpectralParam):
    """Inverse of :func:`to_pruefer`."""
    return R * np.cos(theta), R * np.asarray(param.ellipse_ratio) * np.sin(theta)


def boundary_vector(eta: float):
    """Unit vector satisfying ``Psi_1(0) sin(eta) + Psi_2(0) cos(eta) = 0``.

    The sign is chosen so the first component is nonnegative, which puts the
    initial angle in ``(-pi/2, pi/2]``.
    """
    v = (math.cos(eta), -math.sin(eta))
    if eta >= 0.5 * math.pi:
        v = (-v[0], -v[1])
    return v


def initial_state(eta: float, param: SpectralParam, r: float = 0.0) -> PrueferState:
    """Prüfer state of the boundary vector at ``r``.

    The angle is ``-arctan(sqrt((lambda + 1)/(lambda - 1)) tan(eta))`` and
    ``R(0)^2 = cos^2(eta) + ((lambda + 1)/(lambda - 1)) sin^2(eta)``.
    """
    p1, p2 = boundary_vector(eta)
    shape = np.shape(param.kappa)
    R, theta = to_pruefer(np.full(shape, p1), np.full(shape, p2), param)
    if eta == 0.5 * math.pi:
        theta = np.full(shape, 0.5 * math.pi) if shape else 0.5 * math.pi
    return PrueferState(float(r), np.log(R), theta, param)


class Perturbation(Protocol):
    """Extra terms in the Prüfer laws.

    The angle law gains ``G(r, theta) = g0(r) + g1(r) cos(2 theta)`` and the
    log-radius law gains ``sin(2 theta) F(r)``.  ``parts(r)`` returns
    ``(F, g0, g1)`` evaluated on a 1-D radius grid, broadcasting over the
    spectral grid in trailing axes.
    """

    def parts(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class PrueferTrace:
    """Result of propagating through a potential.

    Attributes
    ----------
    theta_start, log_R_start
        Values at each bump start ``a_j``.
    theta_end, log_R_end
        Values at each bump end ``b_j``.
    initial, final : PrueferState
    """

    theta_start: tuple
    log_R_start: tuple
    theta_end: tuple
    log_R_end: tuple
    initial: PrueferState
    final: PrueferState


def _rk4_pruefer(base, amp, famp, h, theta, log_r):
    """RK4 for ``theta' = base + amp cos(2 theta)`` and ``(log R)' = famp sin(2 theta)``."""
    h2, h6 = 0.5 * h, h / 6.0
    n = (len(base) - 1) // 2
    for i in range(n):
        b0, bm, b1 = base[2 * i], base[2 * i + 1], base[2 * i + 2]
        a0, am, a1 = amp[2 * i], amp[2 * i + 1], amp[2 * i + 2]
        f0, fm, f1 = famp[2 * i], famp[2 * i + 1], famp[2 * i + 2]
        t1 = theta
        k1 = b0 + a0 * np.cos(2.0 * t1)
        t2 = theta + h2 * k1
        k2 = bm + am * np.cos(2.0 * t2)
        t3 = theta + h2 * k2
        k3 = bm + am * np.cos(2.0 * t3)
        t4 = theta + h * k3
        k4 = b1 + a1 * np.cos(2.0 * t4)
        log_r = log_r + h6 * (
            f0 * np.sin(2.0 * t1) + 2.0 * fm * (np.sin(2.0 * t2) + np.sin(2.0 * t3)) + f1 * np.sin(2.0 * t4)
        )
        theta = theta + h6 * (k1 + 2.0 * (k2 + k3) + k4)
    return theta, log_r


def _segment(potential, perturbation, param, r0, r1, theta, log_r, tol, granularity):
    """Integrate the Prüfer laws on ``[r0, r1]`` with step refinement."""
    lam = np.asarray(param.lam, dtype=float)
    kap = np.asarray(param.kappa, dtype=float)

    def coeff_arrays(n):
        grid = np.linspace(r0, r1, 2 * n + 1)
        qv = np.zeros_like(grid) if potential is None else np.asarray(potential(grid), dtype=float)
        qv = qv.reshape(grid.shape + (1,) * kap.ndim)
        qk = qv / kap
        base = -kap + qk * lam + np.zeros_like(qk)
        amp = qk + np.zeros_like(base)
        famp = amp.copy()
        if perturbation is not None:
            F, g0, g1 = perturbation.parts(grid)
            base = base + g0
            amp = amp + g1
            famp = famp + F
        if not (np.all(np.isfinite(base)) and np.all(np.isfinite(amp)) and np.all(np.isfinite(famp))):
            raise IntegrationError("non-finite coefficient in the Prüfer laws")
        return list(base), list(amp), list(famp)

    def run(n):
        base, amp, famp = coeff_arrays(n)
        return _rk4_pruefer(base, amp, famp, (r1 - r0) / n, theta, log_r)

    per_unit = 16.0 * max(1.0, float(np.max(np.abs(kap))))
    n = initial_steps(r1 - r0, granularity, per_unit)
    prev = run(n)
    for _ in range(MAX_DOUBLINGS):
        n *= 2
        cur = run(n)
        diff = max(float(np.max(np.abs(c - p))) for c, p in zip(cur, prev))
        if not math.isfinite(diff):
            raise IntegrationError("Prüfer integration produced non-finite values")
        if diff < tol:
            return cur
        prev = cur
    raise IntegrationError(f"Prüfer step refinement did not reach {tol:g}")


def _granularity(profile) -> int:
    if profile.kind == "tri":
        return 2
    if profile.kind == "samples":
        return len(profile.samples) - 1
    return 1


def propagate_pruefer(
    q,
    param: SpectralParam,
    perturbation: Perturbation | None = None,
    r_start: float = 0.0,
    r_end: float | None = None,
    theta0=None,
    log_R0=None,
    tol: float = DEFAULT_TOL,
    max_free_step: float = 4.0,
) -> PrueferTrace:
    """Propagate ``(log R, theta)`` from ``r_start`` to ``r_end`` through ``q``.

    On bumps the two laws are integrated jointly by RK4 with step refinement.
    Gaps are propagated exactly (``theta`` decreases by ``kappa * dr``)
    unless a perturbation is present, in which case they are integrated too.

    Parameters
    ----------
    q : BumpPotential
    param : SpectralParam
        Scalar or array-valued; arrays are propagated in parallel.
    perturbation : Perturbation, optional
        Angular-momentum terms.  Requires ``r_start >= 1``.
    r_start, r_end : float
        ``r_end`` defaults to ``b_n``.
    theta0, log_R0 : optional
        Initial values; default to the boundary condition of ``q`` at
        ``r_start``.
    tol : float
        Step-refinement tolerance per segment.
    max_free_step : float
        Maximum length of perturbed gap sub-segments.

    Raises
    ------
    DomainError
        If ``r_end < r_start``, ``r_start < 0`` or a perturbation starts below 1.
    """
    if r_start < 0:
        raise DomainError("r_start must be nonnegative")
    if perturbation is not None and r_start < 1.0:
        raise DomainError("perturbed propagation starts at r >= 1")
    if r_end is None:
        r_end = max(q.support_end, r_start)
    if r_end < r_start:
        raise DomainError("r_end must not precede r_start")
    init = initial_state(q.eta, param, r_start)
    shape = np.shape(param.kappa)
    theta = np.broadcast_to(np.asarray(init.theta if theta0 is None else theta0, dtype=float), shape).copy()
    log_r = np.broadcast_to(np.asarray(init.log_R if log_R0 is None else log_R0, dtype=float), shape).copy()
    if not shape:
        theta, log_r = float(theta), float(log_r)
    init = PrueferState(float(r_start), log_r, theta, param)
    kap = param.kappa

    def free(r0, r1, theta, log_r):
        if r1 <= r0:
            return theta, log_r
        if perturbation is None:
            return theta - kap * (r1 - r0), log_r
        pieces = max(1, int(math.ceil((r1 - r0) / max_free_step)))
        edges = np.linspace(r0, r1, pieces + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            theta, log_r = _segment(None, perturbation, param, lo, hi, theta, log_r, tol, 1)
        return theta, log_r

    th_s, lr_s, th_e, lr_e = [], [], [], []
    r = r_start
    for j in range(q.n_bumps):
        a, b = q.starts[j], q.ends[j]
        if b <= r_start:
            continue
        if a >= r_end:
            break
        lo = max(a, r)
        theta, log_r = free(r, lo, theta, log_r)
        th_s.append(theta)
        lr_s.append(log_r)
        hi = min(b, r_end)
        local = q.local_potential(j)
        width = q.profiles[j].width
        # Clip so round-off in b - a cannot push end nodes off the support.
        pot = (lambda rr, a=a, local=local, width=width: local(np.clip(rr - a, 0.0, width)))
        theta, log_r = _segment(pot, perturbation, param, lo, hi, theta, log_r, tol, _granularity(q.profiles[j]))
        th_e.append(theta)
        lr_e.append(log_r)
        r = hi
    theta, log_r = free(r, r_end, theta, log_r)
    final = PrueferState(float(r_end), log_r, theta, param)
    return PrueferTrace(tuple(th_s), tuple(lr_s), tuple(th_e), tuple(lr_e), init, final)
