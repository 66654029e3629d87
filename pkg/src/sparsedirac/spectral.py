"""Spectral density of the half-line problem and the regular problem on ``[0, b]``.

Two independent routes give the density ``d rho / d kappa``:

* product: ``(1/pi) prod_j f_j(kappa, y_j) D(kappa)`` using transfer
  matrices, with ``y_j`` the Prüfer angle at the start of bump ``j``;
* direct: ``(lambda + 1)/(pi lambda R_n^2)`` with ``R_n`` obtained by
  integrating the nonlinear Prüfer laws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .coefficients import BumpCoefficients, abc_from_transfer
from .errors import DomainError, GapParameterError, ResolutionWarning
from .odecore import DEFAULT_TOL, bump_transfer, initial_steps
from .parallel import chunked_map
from .potential import BumpPotential
from .pruefer import SpectralParam, boundary_vector, from_pruefer, initial_state, lambda_of_kappa, propagate_pruefer, to_pruefer
from .quadrature import composite_simpson, simpson_weights


@dataclass(frozen=True)
class DensityProfile:
    """Density samples on a kappa grid."""

    kappa: np.ndarray
    density: np.ndarray
    provenance: str
    r0: float = 0.0

    @property
    def lam(self) -> np.ndarray:
        return lambda_of_kappa(self.kappa)


@dataclass(frozen=True)
class IntervalMeasure:
    """Spectral measure of ``[kappa_1, kappa_2]``."""

    interval: tuple[float, float]
    value: float
    nodes: int = 0
    converged: bool = True


def d_factor(kappa, R_left):
    """``((lambda + 1)/lambda) / R_left^2`` with ``lambda = lambda(kappa)``."""
    lam = lambda_of_kappa(kappa)
    return (lam + 1.0) / lam / (np.asarray(R_left) ** 2)


def _as_param(param) -> SpectralParam:
    if isinstance(param, SpectralParam):
        return param
    return SpectralParam.from_kappa(param)


def bump_coefficients(q: BumpPotential, param, tol: float = DEFAULT_TOL) -> list[BumpCoefficients]:
    """Coefficients of every bump of ``q`` at ``param``."""
    param = _as_param(param)
    return [abc_from_transfer(bump_transfer(q, j, param.lam, tol=tol), param.lam, j) for j in range(q.n_bumps)]


def product_chain(coeffs: Sequence[BumpCoefficients], distances: Sequence[float], eta: float, param, start: int = 0, theta=None):
    """Log of ``prod f_j`` and the angle after the last bump, by transfer matrices.

    Parameters
    ----------
    coeffs : sequence of BumpCoefficients
        Coefficients with their transfer matrices attached.
    distances : sequence of float
        Gaps in front of each bump.
    eta : float
        Boundary angle (used when ``theta`` is None).
    param : SpectralParam
    theta : optional
        Angle at the end of the previous bump (or at 0).

    Returns
    -------
    log_f : array
        ``sum_j log f_j``.
    theta : array
        Angle at the end of the last bump, modulo ``2 pi``.
    """
    param = _as_param(param)
    kap = np.asarray(param.kappa, dtype=float)
    if theta is None:
        theta = np.broadcast_to(np.asarray(initial_state(eta, param).theta, dtype=float), kap.shape)
    log_f = np.zeros(kap.shape)
    for c, d in zip(coeffs, distances):
        y = theta - kap * d
        log_f = log_f - np.log(c.ratio(y))
        M = c.transfer
        p1, p2 = from_pruefer(1.0, y, param)
        n1, n2 = M.m11 * p1 + M.m12 * p2, M.m21 * p1 + M.m22 * p2
        _, theta = to_pruefer(n1, n2, param)
    return log_f, theta


def density_product(q: BumpPotential, param, tol: float = DEFAULT_TOL, coeffs=None):
    """``(1/pi) prod_j f_j(kappa, theta_{j-1} - kappa d_j) D(kappa)``."""
    param = _as_param(param)
    if coeffs is None:
        coeffs = bump_coefficients(q, param, tol)
    log_f, _ = product_chain(coeffs, q.distances, q.eta, param)
    R0 = np.exp(initial_state(q.eta, param).log_R)
    out = np.exp(log_f) * d_factor(param.kappa, R0) / math.pi
    return float(out) if np.ndim(out) == 0 else out


def density_direct(q: BumpPotential, param, tol: float = DEFAULT_TOL):
    """``(lambda + 1)/(pi lambda R_n^2)`` from the propagated Prüfer radius."""
    param = _as_param(param)
    tr = propagate_pruefer(q, param, tol=tol)
    lam = param.lam
    out = (lam + 1.0) / lam / np.exp(2.0 * np.asarray(tr.final.log_R)) / math.pi
    return float(out) if np.ndim(out) == 0 else out


def density_profile(q: BumpPotential, kappa, route: str = "product", threads: int = 1) -> DensityProfile:
    """Density samples of ``q`` on a kappa grid via the chosen route."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa == 0):
        raise GapParameterError("kappa grid must avoid 0")
    fn = {"product": density_product, "direct": density_direct}[route]
    values = chunked_map(lambda k: fn(q, SpectralParam.from_kappa(k)), kappa, threads)
    return DensityProfile(kappa, values, route)


def _check_interval(k1: float, k2: float) -> None:
    if k1 * k2 <= 0 and not (k1 == k2 and k1 != 0):
        raise GapParameterError("interval must not contain kappa = 0")


def measure_on_interval(
    q: BumpPotential,
    interval: tuple[float, float],
    nodes: int | None = None,
    rtol: float = 1e-8,
    coeff_fn=None,
    max_nodes: int = 2**22 + 1,
    atol: float = 0.0,
) -> IntervalMeasure:
    """Composite Simpson of the product density over ``interval``.

    The node count doubles until the change drops below
    ``max(rtol * |value|, atol)`` unless ``nodes`` is fixed.  Hitting
    ``max_nodes`` first returns the last value with ``converged=False`` and a
    :class:`ResolutionWarning`.  ``coeff_fn(param)`` may supply cached bump
    coefficients.
    """
    k1, k2 = float(interval[0]), float(interval[1])
    _check_interval(k1, k2)
    if k1 == k2:
        return IntervalMeasure((k1, k2), 0.0, 0)

    def density_at(grid):
        p = SpectralParam.from_kappa(grid)
        coeffs = coeff_fn(p) if coeff_fn is not None else None
        return density_product(q, p, coeffs=coeffs)

    if nodes is not None:
        n = int(nodes) | 1
        vals = density_at(np.linspace(k1, k2, n))
        return IntervalMeasure((k1, k2), float(composite_simpson(vals, k1, k2)), n)
    # Oscillations in kappa have period about pi / b_n.
    n = 2 * max(32, int(4.0 * q.support_end * abs(k2 - k1))) + 1
    vals = density_at(np.linspace(k1, k2, n))
    prev = float(composite_simpson(vals, k1, k2))
    while n < max_nodes:
        # Refinement keeps the old nodes and only evaluates the new midpoints.
        h = (k2 - k1) / (n - 1)
        mids = density_at(k1 + h * (np.arange(n - 1) + 0.5))
        fine = np.empty(2 * n - 1)
        fine[0::2] = vals
        fine[1::2] = mids
        vals, n = fine, 2 * n - 1
        cur = float(composite_simpson(vals, k1, k2))
        if abs(cur - prev) <= max(rtol * abs(cur), atol):
            return IntervalMeasure((k1, k2), cur, n)
        prev = cur
    warnings.warn(f"measure on [{k1:g}, {k2:g}] unresolved at {n} nodes", ResolutionWarning, stacklevel=2)
    return IntervalMeasure((k1, k2), prev, n, False)


def free_measure(interval: tuple[float, float]) -> float:
    """Measure of the free potential with ``eta = 0``: ``(1/pi)[kappa + asinh kappa]``."""
    k1, k2 = interval
    sign = 1.0 if k1 > 0 else -1.0
    # For kappa < 0, (lambda + 1)/lambda = 1 - 1/sqrt(kappa^2 + 1).
    F = lambda k: k + sign * math.asinh(k)
    return (F(k2) - F(k1)) / math.pi


# Regular problem on [0, b] -------------------------------------------------


def winding_angles(q: BumpPotential, b: float, kappa, tol: float = DEFAULT_TOL):
    """Unwrapped Prüfer angle ``theta(b; kappa)``."""
    if b <= q.support_end:
        raise DomainError("b must exceed the end of the last bump")
    param = SpectralParam.from_kappa(np.atleast_1d(np.asarray(kappa, dtype=float)))
    return np.asarray(propagate_pruefer(q, param, r_end=b, tol=tol).final.theta)


def count_eigenvalues_regular(q: BumpPotential, b: float, lam1: float, lam2: float) -> int:
    """Number of eigenvalues in ``(lambda_1, lambda_2]`` of the problem on ``[0, b]``.

    The right boundary condition is ``Psi_2(b) = 0``, i.e. ``theta(b)`` a
    multiple of ``pi``.  The count is the number of such multiples swept by
    the unwrapped angle between the two endpoints.
    """
    if b <= q.support_end:
        raise DomainError("b must exceed the end of the last bump")
    if lam1 == lam2:
        return 0
    lo, hi = sorted((lam1, lam2))
    if lo * hi < 0 or min(abs(lo), abs(hi)) <= 1.0:
        raise GapParameterError("both endpoints must lie on one side of the gap")
    from .pruefer import kappa_of_lambda

    th = winding_angles(q, b, [kappa_of_lambda(lo), kappa_of_lambda(hi)])
    # theta(b) decreases in kappa; eigenvalues in (lo, hi] sit where it hits pi Z.
    t_lo, t_hi = th[0], th[1]
    return int(abs(math.floor(t_lo / math.pi) - math.floor(t_hi / math.pi)))


def _psi_segment_norm(q: BumpPotential, j: int, lam: float, psi, rtol: float = 1e-12):
    """Propagate ``psi`` across bump ``j`` and integrate ``|Psi|^2`` over it."""
    prof = q.profiles[j]
    alpha = prof.width
    pot = q.local_potential(j)
    g = 2 if prof.kind == "tri" else (len(prof.samples) - 1 if prof.kind == "samples" else 1)

    def run(n):
        grid = np.linspace(0.0, alpha, 2 * n + 1)
        qv = np.asarray(pot(np.clip(grid, 0.0, alpha)), dtype=float)
        P = (-qv + 1.0 + lam).tolist()
        Q = (qv + 1.0 - lam).tolist()
        h = alpha / n
        y1, y2 = psi
        out1, out2 = [y1], [y2]
        for i in range(n):
            p0, pm, p1 = P[2 * i], P[2 * i + 1], P[2 * i + 2]
            q0, qm, q1 = Q[2 * i], Q[2 * i + 1], Q[2 * i + 2]
            k1a, k1b = p0 * y2, q0 * y1
            k2a, k2b = pm * (y2 + 0.5 * h * k1b), qm * (y1 + 0.5 * h * k1a)
            k3a, k3b = pm * (y2 + 0.5 * h * k2b), qm * (y1 + 0.5 * h * k2a)
            k4a, k4b = p1 * (y2 + h * k3b), q1 * (y1 + h * k3a)
            y1 += h / 6.0 * (k1a + 2 * (k2a + k3a) + k4a)
            y2 += h / 6.0 * (k1b + 2 * (k2b + k3b) + k4b)
            out1.append(y1)
            out2.append(y2)
        sq = np.asarray(out1) ** 2 + np.asarray(out2) ** 2
        return (y1, y2), float(np.dot(simpson_weights(n + 1, h), sq))

    n = 2 * max(16, initial_steps(alpha, g) // 2)
    prev = run(n)
    for _ in range(14):
        n *= 2
        cur = run(n)
        if abs(cur[1] - prev[1]) <= rtol * max(1.0, abs(cur[1])) and max(abs(cur[0][0] - prev[0][0]), abs(cur[0][1] - prev[0][1])) < 1e-11:
            return cur
        prev = cur
    return cur


def _free_norm(R2, theta0, kappa, lam, length):
    """``int |Psi|^2`` over a free segment of given length, starting at angle ``theta0``."""
    s2 = (lam - 1.0) / (lam + 1.0)
    mean = 0.5 * (1.0 + s2) * length
    osc = 0.5 * (1.0 - s2) * (math.sin(2.0 * theta0) - math.sin(2.0 * (theta0 - kappa * length))) / (2.0 * kappa)
    return R2 * (mean + osc)


def norming_constant(q: BumpPotential, b: float, lam: float) -> float:
    """``a^2 = int_0^b |Psi|^2`` for the solution with unit boundary vector."""
    param = SpectralParam.from_lambda(lam)
    kap = param.kappa
    psi = boundary_vector(q.eta)
    total = 0.0
    r = 0.0
    for j in range(q.n_bumps):
        R, th = to_pruefer(*psi, param)
        d = q.starts[j] - r
        total += _free_norm(R * R, th, kap, lam, d)
        psi = from_pruefer(R, th - kap * d, param)
        psi, part = _psi_segment_norm(q, j, lam, psi)
        total += part
        r = q.ends[j]
    R, th = to_pruefer(*psi, param)
    total += _free_norm(R * R, th, kap, lam, b - r)
    return total


def regular_step_function(
    q: BumpPotential,
    b: float,
    lam_range: tuple[float, float],
    cells_per_spacing: int = 4,
    xtol: float = 1e-13,
) -> list[tuple[float, float]]:
    """Eigenvalues of the problem on ``[0, b]`` in ``lam_range`` with jumps ``1/a^2``.

    Eigenvalues are bracketed on a kappa grid several times finer than the
    expected spacing ``pi/b`` and refined by Brent's method on
    ``theta(b; kappa) - m pi``.  If a grid cell holds more than one root a
    :class:`ResolutionWarning` names the cell and only its first root is kept.
    """
    from .pruefer import kappa_of_lambda

    l1, l2 = sorted(lam_range)
    if l1 * l2 < 0 or min(abs(l1), abs(l2)) <= 1.0:
        raise GapParameterError("lambda range must lie on one side of the gap")
    if b <= q.support_end:
        raise DomainError("b must exceed the end of the last bump")
    k1, k2 = kappa_of_lambda(l1), kappa_of_lambda(l2)
    n = max(8, int(math.ceil(cells_per_spacing * b * (k2 - k1) / math.pi))) + 1
    grid = np.linspace(k1, k2, n)
    th = winding_angles(q, b, grid)
    floors = np.floor(th / math.pi)

    def theta_at(k):
        return float(winding_angles(q, b, [k])[0])

    out = []
    for i in range(n - 1):
        # theta decreases with kappa; the cell holds the multiples m pi in (th[i+1], th[i]].
        ms = np.arange(floors[i + 1] + 1, floors[i] + 1)
        roots = []
        for m in ms:
            target = m * math.pi
            roots.append(brentq(lambda k: theta_at(k) - target, grid[i], grid[i + 1], xtol=xtol, rtol=1e-15))
        roots.sort()
        if len(roots) > 1 and np.min(np.diff(roots)) < 10 * xtol:
            warnings.warn(
                f"eigenvalues unresolved in kappa cell [{grid[i]:.12g}, {grid[i + 1]:.12g}]",
                ResolutionWarning,
                stacklevel=2,
            )
        for k_star in roots:
            lam_star = float(lambda_of_kappa(k_star))
            out.append((lam_star, 1.0 / norming_constant(q, b, lam_star)))
    return out


def empirical_density(steps: Sequence[tuple[float, float]], edges: np.ndarray) -> np.ndarray:
    """Smoothed density of a step function, averaged over kappa bins.

    Each interior jump is divided by half the distance between its
    neighbours, which removes the counting noise of a plain histogram.
    Bins without an interior jump are NaN.
    """
    from .pruefer import kappa_of_lambda

    edges = np.asarray(edges, dtype=float)
    if len(steps) < 3:
        return np.full(edges.size - 1, np.nan)
    order = np.argsort([s[0] for s in steps])
    k = kappa_of_lambda(np.array([steps[i][0] for i in order]))
    w = np.array([steps[i][1] for i in order])
    local = 2.0 * w[1:-1] / (k[2:] - k[:-2])
    centre = k[1:-1]
    out = np.full(edges.size - 1, np.nan)
    idx = np.digitize(centre, edges) - 1
    for b in range(edges.size - 1):
        sel = idx == b
        if np.any(sel):
            out[b] = local[sel].mean()
    return out
