"""Angular-momentum channels of the three-dimensional problem.

Channel ``k`` (a nonzero integer) turns the radial system into
``y' = [[-k/r, 1 + lambda], [1 - lambda, k/r]] y`` for the free part.  An
orthogonal change of variables removes the diagonal and leaves a
position-dependent mass ``m(r) = sqrt(1 + k^2/r^2)`` and drift
``l(r) = k/(2(r^2 + k^2))``, both decaying like ``1/r^2``::

    Psi' = [[0, -q + m - l + lambda], [q + m + l - lambda, 0]] Psi
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bessel import spherical_half_j, spherical_half_y
from .coefficients import BumpCoefficients, abc_from_transfer
from .errors import ConfigurationError, DomainError, ResolventParameterError, SparseDiracError
from .odecore import DEFAULT_TOL, SystemCoefficients, TransferMatrix, integrate_fundamental
from .parallel import chunked_map
from .potential import BumpPotential
from .pruefer import SpectralParam, from_pruefer, initial_state, propagate_pruefer, to_pruefer
from .quadrature import adaptive_simpson, adaptive_simpson_periodic, cumulative_trapezoid
from .spectral import DensityProfile, density_product

DEFAULT_TAIL = 100.0


def _check_k(k: int) -> int:
    if int(k) != k or k == 0:
        raise DomainError(f"angular quantum number must be a nonzero integer, got {k!r}")
    return int(k)


def mass_drift(k: int, r):
    """``m(r) = sqrt(1 + k^2/r^2)`` and ``l(r) = k/(2(r^2 + k^2))``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("mass and drift are defined for r > 0")
    m = np.sqrt(1.0 + (k / r) ** 2)
    l = k / (2.0 * (r * r + k * k))
    if m.ndim == 0:
        return float(m), float(l)
    return m, l


def mass_minus_one(k: int, r):
    """``m(r) - 1`` without cancellation."""
    r = np.asarray(r, dtype=float)
    t = (k / r) ** 2
    return t / (np.sqrt(1.0 + t) + 1.0)


@dataclass(frozen=True)
class Channel:
    """Angular channel ``k`` at spectral parameter ``param``."""

    k: int
    param: SpectralParam

    def __post_init__(self) -> None:
        _check_k(self.k)

    @property
    def c_bound(self):
        """``C_{k,kappa} = |k|/(2|kappa|) + |lambda| k^2/|kappa|``."""
        k, lam, kap = abs(self.k), np.abs(self.param.lam), np.abs(self.param.kappa)
        return k / (2.0 * kap) + lam * k * k / kap

    @property
    def c_tilde_bound(self):
        """``C~_{k,kappa} = (|lambda| + 1)(|k| + 2k^2)/(2|kappa|)``."""
        k, lam, kap = abs(self.k), np.abs(self.param.lam), np.abs(self.param.kappa)
        return (lam + 1.0) * (k + 2.0 * k * k) / (2.0 * kap)

    def parts(self, r):
        """``(F, g0, g1)`` on a radius grid, with ``G = g0 + g1 cos 2 theta``."""
        r = np.asarray(r, dtype=float)
        m1 = mass_minus_one(self.k, r)
        l = self.k / (2.0 * (r * r + self.k * self.k))
        lam = np.asarray(self.param.lam, dtype=float)
        kap = np.asarray(self.param.kappa, dtype=float)
        ex = (1,) * kap.ndim
        m1 = m1.reshape(r.shape + ex)
        l = l.reshape(r.shape + ex)
        F = (l + lam * m1) / kap
        g0 = (lam * l + m1) / kap
        return F, g0, F

    def system(self, potential=None, offset: float = 0.0) -> SystemCoefficients:
        """Linear system of the channel; ``potential`` is evaluated at ``r - offset``."""
        lam = np.asarray(self.param.lam, dtype=float)
        ex = (1,) * lam.ndim
        k = self.k

        def pieces(r):
            r = np.asarray(r, dtype=float)
            qv = np.zeros_like(r) if potential is None else np.asarray(potential(r - offset), dtype=float)
            m1 = mass_minus_one(k, r)
            l = k / (2.0 * (r * r + k * k))
            return qv.reshape(r.shape + ex), m1.reshape(r.shape + ex), l.reshape(r.shape + ex)

        def upper(r):
            qv, m1, l = pieces(r)
            return -qv + 1.0 + m1 - l + lam

        def lower(r):
            qv, m1, l = pieces(r)
            return qv + 1.0 + m1 + l - lam

        return SystemCoefficients(upper, lower)


def fk_gk(k: int, param: SpectralParam, r, theta):
    """Perturbation terms ``F_k(r)`` and ``G_k(r, theta)``.

    ``F_k = l/kappa + (lambda/kappa)(m - 1)`` and
    ``G_k = ((lambda + cos 2 theta)/kappa) l + ((1 + lambda cos 2 theta)/kappa)(m - 1)``.
    """
    _check_k(k)
    r = np.asarray(r, dtype=float)
    m1 = mass_minus_one(k, r)
    l = k / (2.0 * (r * r + k * k))
    lam, kap = param.lam, param.kappa
    c2 = np.cos(2.0 * np.asarray(theta))
    F = l / kap + lam / kap * m1
    G = (lam + c2) / kap * l + (1.0 + lam * c2) / kap * m1
    return F, G


def transform_matrix(k: int, r) -> np.ndarray:
    """Orthogonal ``A(r)`` with ``A^T v`` solving the mass/drift form when ``v`` solves the 1/r form.

    ``A = [[sgn(k) c, -s], [s, sgn(k) c]]`` with
    ``c = sqrt((1 + rho)/2)``, ``s = sqrt((1 - rho)/2)`` and
    ``rho = r/sqrt(r^2 + k^2)``.
    """
    _check_k(k)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("transform is defined for r > 0")
    rho = r / np.hypot(r, k)
    c = np.sqrt(0.5 * (1.0 + rho))
    # 1 - rho = k^2 / (sqrt(r^2+k^2) (sqrt(r^2+k^2) + r)), free of cancellation.
    hyp = np.hypot(r, k)
    s = np.sqrt(0.5 * k * k / (hyp * (hyp + r)))
    sg = 1.0 if k > 0 else -1.0
    return np.array([[sg * c, -s], [s, sg * c]])


def _kappa_hat(lam):
    lam = np.asarray(lam)
    if np.iscomplexobj(lam):
        return np.sqrt(lam * lam - 1.0)
    return np.sqrt(lam * lam - 1.0 + 0j).real


def free_solution_bessel(k: int, lam, r, kind: str = "J"):
    """Free solution of ``y' = [[-k/r, 1 + lambda], [1 - lambda, k/r]] y``.

    ``kind="J"`` gives the solution regular at 0,
    ``(sqrt(r) J_{|k+1/2|}(x), sgn(k) (kappa_hat/(1 + lambda)) sqrt(r) J_{|k-1/2|}(x))``
    with ``x = kappa_hat r`` and ``kappa_hat`` the principal root of
    ``lambda^2 - 1``; ``kind="Y"`` the Weber analogue, singular at 0.
    """
    _check_k(k)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        if kind == "J" and np.all(r >= 0):
            out = np.zeros((2,) + r.shape, dtype=np.result_type(lam, float))
            pos = r > 0
            if np.any(pos):
                out[:, pos] = free_solution_bessel(k, lam, r[pos], kind)
            return out
        raise DomainError("the Weber solution is singular at r = 0")
    kh = _kappa_hat(lam)
    x = kh * r
    fn = spherical_half_j if kind == "J" else spherical_half_y
    sr = np.sqrt(r)
    v1 = sr * fn(abs(k + 0.5), x)
    v2 = np.sign(k) * (kh / (1.0 + lam)) * sr * fn(abs(k - 0.5), x)
    return np.array([v1, v2])


def bessel_residual(k: int, lam, r, kind: str = "J", h: float = 1e-3, relative: bool = False) -> float:
    """Max residual of :func:`free_solution_bessel` using a 5-point derivative.

    The difference step is ``h * min(r, 1)``.  With ``relative=True`` the
    residual at each node is divided by ``|v(r)|``.
    """
    r = np.asarray(r, dtype=float)
    h = h * np.minimum(r, 1.0)
    sol = lambda x: free_solution_bessel(k, lam, x, kind)
    v = sol(r)
    dv = (sol(r - 2 * h) - 8.0 * sol(r - h) + 8.0 * sol(r + h) - sol(r + 2 * h)) / (12.0 * h)
    rhs1 = -k / r * v[0] + (1.0 + lam) * v[1]
    rhs2 = (1.0 - lam) * v[0] + k / r * v[1]
    res = np.maximum(np.abs(dv[0] - rhs1), np.abs(dv[1] - rhs2))
    if relative:
        res = res / np.sqrt(np.abs(v[0]) ** 2 + np.abs(v[1]) ** 2)
    return float(np.max(res))


def wronskian(u, v):
    return u[0] * v[1] - u[1] * v[0]


# k-channel density ----------------------------------------------------------


def integral_fk(k: int, param: SpectralParam, r0: float, r1: float, tol: float = 1e-12) -> float:
    """``int_{r0}^{r1} F_k dr`` by adaptive Simpson (scalar parameter)."""
    lam, kap = float(param.lam), float(param.kappa)
    return adaptive_simpson(lambda r: (k / (2.0 * (r * r + k * k)) + lam * float(mass_minus_one(k, r))) / kap, r0, r1, tol)


def integral_fk_exact(k: int, param: SpectralParam, r0: float, r1: float):
    """Closed form of ``int F_k``.

    Uses ``int l = (1/2) arctan(r/k)`` and
    ``int (m - 1) = sqrt(r^2 + k^2) - |k| asinh(|k|/r) - r``.
    """
    ak = abs(k)
    L = lambda r: 0.5 * math.atan(r / k)
    Mm = lambda r: k * k / (math.hypot(r, k) + r) - ak * math.asinh(ak / r)
    return ((L(r1) - L(r0)) + param.lam * (Mm(r1) - Mm(r0))) / param.kappa


@dataclass(frozen=True)
class FTilde:
    """k-channel density factor of one bump.

    ``f(y, z) = exp(-2 I) / (A + B cos 2(y + z) + C sin 2(y + z))`` where
    ``I`` is the gap log-radius integral.
    """

    coeffs: BumpCoefficients
    gap_integral: float

    def f(self, y, z=0.0):
        return math.exp(-2.0 * self.gap_integral) / self.coeffs.ratio(np.asarray(y) + z)

    @property
    def m(self) -> float:
        """``log(2/(A + 1)) - 2 I``."""
        return math.log(2.0 / (self.coeffs.A + 1.0)) - 2.0 * self.gap_integral

    @property
    def mean(self) -> float:
        """Period average of ``f``: ``exp(-2 I)``."""
        return math.exp(-2.0 * self.gap_integral)

    def mean_quadrature(self, z: float = 0.0, tol: float = 1e-10) -> float:
        return adaptive_simpson_periodic(lambda y: float(self.f(y, z)), math.pi, tol * math.pi) / math.pi

    def mean_log_quadrature(self, z: float = 0.0, tol: float = 1e-10) -> float:
        return adaptive_simpson_periodic(lambda y: math.log(float(self.f(y, z))), math.pi, tol * math.pi) / math.pi


def ftilde_mtilde(coeffs: BumpCoefficients, k: int, param: SpectralParam, gap: tuple[float, float], gap_integral: float | None = None) -> FTilde:
    """k-channel factor for a bump preceded by ``gap = (b_{j-1}, a_j)``.

    ``gap_integral`` defaults to ``int_gap F_k`` by quadrature; pass the
    trajectory integral ``int_gap sin(2 theta) F_k`` for the exact factor.
    With ``k = 0`` the factor reduces to ``f_j``.
    """
    lo, hi = gap
    if lo < 1.0:
        raise DomainError("k-channel gaps lie in [1, inf)")
    if gap_integral is None:
        gap_integral = 0.0 if k == 0 else integral_fk(k, param, lo, hi)
    return FTilde(coeffs, float(gap_integral))


def _segments(q: BumpPotential, r_end: float):
    """Alternating gap/bump segments of ``[1, r_end]``: ``(lo, hi, bump_index or None)``."""
    segs = []
    r = 1.0
    for j in range(q.n_bumps):
        segs.append((r, q.starts[j], None))
        segs.append((q.starts[j], q.ends[j], j))
        r = q.ends[j]
    segs.append((r, r_end, None))
    return [s for s in segs if s[1] > s[0]]


def free_channel_basis(k: int, param: SpectralParam, r: float) -> np.ndarray:
    """Fundamental matrix ``A(r)^T [v, w]`` of the free channel system at ``r``.

    Shape ``(2, 2) + kappa.shape``; columns are the transformed Bessel and
    Weber solutions.
    """
    lam = np.asarray(param.lam, dtype=float)
    A = transform_matrix(k, r)
    v = free_solution_bessel(k, lam, r, "J")
    w = free_solution_bessel(k, lam, r, "Y")
    tv = np.einsum("ij,i...->j...", A, v)
    tw = np.einsum("ij,i...->j...", A, w)
    return np.stack([tv, tw], axis=1)


def free_channel_transfer(k: int, param: SpectralParam, lo: float, hi: float) -> TransferMatrix:
    """Exact transfer matrix of the free channel system from ``lo`` to ``hi``."""
    P1 = free_channel_basis(k, param, hi)
    P0 = free_channel_basis(k, param, lo)
    det0 = P0[0, 0] * P0[1, 1] - P0[0, 1] * P0[1, 0]
    inv = np.array([[P0[1, 1], -P0[0, 1]], [-P0[1, 0], P0[0, 0]]]) / det0
    M = np.einsum("ij...,jk...->ik...", P1, inv)
    return TransferMatrix(M[0, 0], M[0, 1], M[1, 0], M[1, 1], (lo, hi), param.lam)


def _segment_transfer(q, channel: Channel, lo, hi, j, tol):
    """Transfer matrix of the channel system on ``[lo, hi]``.

    Gaps use the exact Bessel basis; bumps are integrated by RK4.
    """
    if j is None:
        return free_channel_transfer(channel.k, channel.param, lo, hi)
    a, width = q.starts[j], q.profiles[j].width
    local = q.local_potential(j)
    system = channel.system(lambda s: local(np.clip(s, 0.0, width)), a)
    return integrate_fundamental(system, (lo, hi), tol=tol, lam=channel.param.lam)


def _validate_k_potential(q: BumpPotential) -> None:
    if q.n_bumps and q.distances[0] <= 1.0:
        raise ConfigurationError("k-channel potentials need d_1 > 1 so bumps start beyond r = 1")


def density_k_product(q: BumpPotential, param: SpectralParam, k: int, r_end: float | None = None, tol: float = DEFAULT_TOL):
    """Product route: ``(1/pi) prod f~_j D~(kappa)`` with exact per-segment factors.

    Each gap and bump contributes the radius ratio ``A + B cos 2y + C sin 2y``
    of its channel transfer matrix; gap factors are the trajectory values of
    ``exp(2 int sin(2 theta) F_k)``.  Gap matrices come from the exact Bessel
    basis, bump matrices from RK4.  The tail up to ``r_end`` counts as a
    final gap.
    """
    _validate_k_potential(q)
    if k == 0:
        return _density_k0(q, param)
    r_end = q.support_end + DEFAULT_TAIL if r_end is None else r_end
    channel = Channel(k, param)
    init = initial_state(q.eta, param, 1.0)
    theta = np.asarray(init.theta, dtype=float)
    log_ratio = np.zeros(np.shape(param.kappa))
    for lo, hi, j in _segments(q, r_end):
        M = _segment_transfer(q, channel, lo, hi, j, tol)
        c = abc_from_transfer(M, param.lam)
        log_ratio = log_ratio + np.log(c.ratio(theta))
        p1, p2 = from_pruefer(1.0, theta, param)
        _, theta = to_pruefer(M.m11 * p1 + M.m12 * p2, M.m21 * p1 + M.m22 * p2, param)
    lam = param.lam
    out = (lam + 1.0) / lam * np.exp(-2.0 * init.log_R - log_ratio) / math.pi
    return float(out) if np.ndim(out) == 0 else out


def density_k_direct(q: BumpPotential, param: SpectralParam, k: int, r_end: float | None = None, tol: float = DEFAULT_TOL):
    """Direct route: ``(lambda + 1)/(pi lambda R~(r_end)^2)`` by nonlinear Prüfer integration."""
    _validate_k_potential(q)
    if k == 0:
        return _density_k0(q, param)
    r_end = q.support_end + DEFAULT_TAIL if r_end is None else r_end
    tr = propagate_pruefer(q, param, perturbation=Channel(k, param), r_start=1.0, r_end=r_end, tol=tol)
    lam = param.lam
    out = (lam + 1.0) / lam / np.exp(2.0 * np.asarray(tr.final.log_R)) / math.pi
    return float(out) if np.ndim(out) == 0 else out


def _density_k0(q: BumpPotential, param):
    shifted = BumpPotential(q.heights, q.profiles, (q.distances[0] - 1.0,) + q.distances[1:], q.eta) if q.n_bumps else q
    return density_product(shifted, param)


def density_k(q: BumpPotential, param, k: int, r_end: float | None = None, route: str = "product"):
    """Spectral density of channel ``k`` on ``[1, inf)`` truncated at ``r_end``."""
    if not isinstance(param, SpectralParam):
        param = SpectralParam.from_kappa(param)
    fn = density_k_product if route == "product" else density_k_direct
    return fn(q, param, k, r_end)


# Green kernel on (0, 1] ------------------------------------------------------


@dataclass(frozen=True)
class GreenKernel:
    """Regular solution ``v``, boundary solution ``y`` and their Wronskian on a grid."""

    r: np.ndarray
    v: np.ndarray
    y: np.ndarray
    wronskian: complex


def green_kernel(k: int, lam: complex, n: int, eta: float = 0.0) -> GreenKernel:
    """Solutions on the grid ``r_i = i/n``, ``i = 1..n``.

    ``v`` is regular at 0; ``y`` satisfies ``y_1(1) sin eta + y_2(1) cos eta = 0``.
    """
    _check_k(k)
    lam = complex(lam)
    if lam.imag == 0:
        raise ResolventParameterError("the resolvent needs Im(lambda) != 0")
    r = np.arange(1, n + 1) / n
    v = free_solution_bessel(k, lam, r, "J")
    w = free_solution_bessel(k, lam, r, "Y")
    target = np.array([math.cos(eta), -math.sin(eta)], dtype=complex)
    basis = np.array([[v[0, -1], w[0, -1]], [v[1, -1], w[1, -1]]])
    c = np.linalg.solve(basis, target)
    y = c[0] * v + c[1] * w
    W = complex(wronskian(v[:, -1], y[:, -1]))
    return GreenKernel(r, v, y, W)


def greens_hs_norm(k: int, lam: complex = 2 + 1j, n: int = 2000, eta: float = 0.0, oriented: bool = True) -> float:
    """Squared Hilbert-Schmidt norm ``2 int_0^1 |y|^2 int_0^r |v|^2 / |W|^2``.

    ``oriented=False`` swaps the roles of ``v`` and ``y``; that kernel is not
    square integrable and its value grows under grid refinement.
    """
    g = green_kernel(k, lam, n, eta)
    v2 = np.sum(np.abs(g.v) ** 2, axis=0)
    y2 = np.sum(np.abs(g.y) ** 2, axis=0)
    if oriented:
        inner_vals, outer = v2, y2
        # v vanishes at 0, so the cumulative integral starts from (0, 0).
        r = np.concatenate(([0.0], g.r))
        inner = cumulative_trapezoid(np.concatenate(([0.0], inner_vals)), r)[1:]
    else:
        inner_vals, outer = y2, v2
        r = g.r
        inner = cumulative_trapezoid(inner_vals, r)
    integrand = outer * inner
    rr = np.concatenate(([0.0], g.r))
    total = cumulative_trapezoid(np.concatenate(([0.0], integrand)), rr)[-1]
    return float(2.0 * total / abs(g.wronskian) ** 2)


# Channel sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSweep:
    """Per-channel densities and the envelope across channels."""

    profiles: dict
    errors: dict
    kappa: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    c_bounds: dict = field(default_factory=dict)
    c_tilde_bounds: dict = field(default_factory=dict)


def channel_sweep(q: BumpPotential, k_max: int, kappa, threads: int = 1, r_end: float | None = None) -> ChannelSweep:
    """Density of every channel ``k`` in ``{-k_max..-1, 1..k_max}`` on a kappa grid.

    Failures are recorded per channel and the sweep continues.
    """
    if k_max < 1:
        raise DomainError("k_max must be at least 1")
    kappa = np.asarray(kappa, dtype=float)
    param = SpectralParam.from_kappa(kappa)
    profiles, errors, cb, ctb = {}, {}, {}, {}
    for k in [*range(-k_max, 0), *range(1, k_max + 1)]:
        try:
            dens = chunked_map(lambda kk: density_k(q, SpectralParam.from_kappa(kk), k, r_end), kappa, threads, chunk=16)
            profiles[k] = DensityProfile(kappa, dens, f"channel:{k}", 1.0)
            ch = Channel(k, param)
            cb[k], ctb[k] = np.asarray(ch.c_bound), np.asarray(ch.c_tilde_bound)
        except SparseDiracError as exc:
            errors[k] = str(exc)
    if profiles:
        stack = np.vstack([p.density for p in profiles.values()])
        lo, hi = stack.min(axis=0), stack.max(axis=0)
    else:
        lo = hi = np.full(kappa.shape, np.nan)
    return ChannelSweep(profiles, errors, kappa, lo, hi, cb, ctb)
