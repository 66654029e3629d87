"""Inductive sparse-bump construction and its diagnostics.

Stage ``n`` works on ``Xi_n = [-2n, -1/(2n)] U [1/(2n), 2n]``.  Each new
bump is pushed far enough out that interval measures on ``Xi_n`` barely
move, after which the super-level set ``S_n`` of the density at threshold
``eps_n / |Xi_n|`` is recorded.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import abc_from_transfer
from .errors import ConfigurationError, DomainError, SelectionFailure
from .odecore import bump_transfer
from .parallel import chunked_map
from .potential import BumpPotential, BumpProfile, free_potential
from .pruefer import SpectralParam
from .quadrature import composite_simpson, simpson_nodes
from .spectral import density_product, measure_on_interval

EXP_FLOOR_LIMIT = 6
GAP_RESOLUTION = 0.01


# Schedules -------------------------------------------------------------------


@dataclass(frozen=True)
class EpsilonSchedule:
    """Summable tolerance schedule.

    ``kind="geometric"``: ``eps_n = eps0 * ratio**n`` with ``0 < ratio < 1``;
    ``kind="power"``: ``eps_n = eps0 * n**(-p)`` with ``p > 1``;
    ``kind="list"``: explicit finite values.
    """

    kind: str = "geometric"
    eps0: float = 1.0
    ratio: float = 0.5
    p: float = 2.0
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "geometric":
            if not (0.0 < self.ratio < 1.0):
                raise ConfigurationError("geometric epsilon schedule needs 0 < ratio < 1 to be summable")
        elif self.kind == "power":
            if not self.p > 1.0:
                raise ConfigurationError("power epsilon schedule n^-p is summable only for p > 1")
        elif self.kind == "list":
            if not self.values:
                raise ConfigurationError("list epsilon schedule needs values")
        else:
            raise ConfigurationError(f"unknown epsilon schedule {self.kind!r}")
        vals = self.values if self.kind == "list" else (self.eps0,)
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ConfigurationError("epsilon values must be positive and finite")

    def __call__(self, n: int) -> float:
        if n < 1:
            raise DomainError("stages are numbered from 1")
        if self.kind == "geometric":
            return self.eps0 * self.ratio**n
        if self.kind == "power":
            return self.eps0 * n ** (-self.p)
        if n > len(self.values):
            raise DomainError(f"epsilon list has only {len(self.values)} entries")
        return self.values[n - 1]


@dataclass(frozen=True)
class GrowthSchedule:
    """Lower bounds for the bump distances ``d_j`` (``j >= 1``).

    ``exponential`` uses ``d_j >= exp((j - 1)^2)``; its numeric floors
    are available only for ``j <= 6``, while :meth:`log_floor` works for any
    ``j``.
    """

    mode: str = "geometric"
    base: float = 10.0
    factor: float = 2.0
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in ("exponential", "geometric", "custom"):
            raise ConfigurationError(f"unknown growth mode {self.mode!r}")
        if self.mode == "geometric" and not (self.base > 0 and self.factor >= 1):
            raise ConfigurationError("geometric growth needs base > 0 and factor >= 1")
        if self.mode == "custom" and (not self.values or min(self.values) <= 0):
            raise ConfigurationError("custom growth needs positive values")

    def log_floor(self, j: int) -> float:
        if j < 1:
            raise DomainError("bump indices start at 1")
        if self.mode == "exponential":
            return float((j - 1) ** 2)
        return math.log(self.floor(j))

    def floor(self, j: int) -> float:
        if j < 1:
            raise DomainError("bump indices start at 1")
        if self.mode == "exponential":
            if j > EXP_FLOOR_LIMIT:
                raise DomainError(f"exp((j-1)^2) floors overflow desk arithmetic beyond j = {EXP_FLOOR_LIMIT}")
            return math.exp((j - 1) ** 2)
        if self.mode == "geometric":
            return self.base * self.factor ** (j - 1)
        if j > len(self.values):
            raise DomainError(f"custom growth has only {len(self.values)} entries")
        return self.values[j - 1]


def xi_interval(n: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """``Xi_n`` as its negative and positive components."""
    if n < 1:
        raise DomainError("stages are numbered from 1")
    lo, hi = 1.0 / (2 * n), 2.0 * n
    return (-hi, -lo), (lo, hi)


def xi_measure(n: int) -> float:
    return 2.0 * (2.0 * n - 1.0 / (2 * n))


def test_intervals(n: int, pieces: int = 1) -> list[tuple[float, float]]:
    """Components of ``Xi_n``, each split into ``pieces`` equal parts."""
    out = []
    for lo, hi in xi_interval(n):
        edges = np.linspace(lo, hi, pieces + 1)
        out.extend((float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]))
    return out


# Averaging ------------------------------------------------------------------


def averaging_residual(F: Callable, G: Callable, L: float, interval: tuple[float, float], Gbar: Callable | None = None, nodes: int | None = None) -> float:
    """``|int F(kappa) [G(kappa, L kappa) - Gbar(kappa)] d kappa|``.

    ``G`` is pi-periodic in its second argument.  ``Gbar`` defaults to the
    period average computed on 257 points per period.
    """
    a, b = interval
    if nodes is None:
        nodes = max(2001, int(40 * abs(L) * (b - a)) + 1)
    k = simpson_nodes(a, b, nodes)
    if Gbar is None:
        y = np.linspace(0.0, math.pi, 257)[:-1]
        gbar = np.array([np.mean(G(kk, y)) for kk in k])
    else:
        gbar = np.asarray(Gbar(k), dtype=float)
    vals = np.asarray(F(k), dtype=float) * (np.asarray(G(k, L * k), dtype=float) - gbar)
    return float(abs(composite_simpson(vals, a, b)))


# Coefficient cache -------------------------------------------------------------


class CoefficientCache:
    """Memoises bump coefficients on linspace grids.

    Bump coefficients do not depend on where the bump sits, so they are
    shared across candidate distances.  Eviction is least-recently-used and
    bounded by the number of stored grid values.
    """

    def __init__(self, max_values: int = 12_000_000):
        self._store: OrderedDict = OrderedDict()
        self.max_values = max_values
        self._size = 0

    def get(self, q: BumpPotential, param: SpectralParam):
        k = np.asarray(param.kappa)
        grid_key = (float(k[0]), float(k[-1]), int(k.size))
        out = []
        for j in range(q.n_bumps):
            key = (q.heights[j], q.profiles[j], grid_key)
            c = self._store.get(key)
            if c is None:
                c = abc_from_transfer(bump_transfer(q, j, param.lam), param.lam, j)
                if 8 * k.size <= self.max_values:
                    self._store[key] = c
                    self._size += 8 * k.size
                    while self._size > self.max_values:
                        _, old = self._store.popitem(last=False)
                        self._size -= 8 * np.size(old.A)
            else:
                self._store.move_to_end(key)
            out.append(c)
        return out


def _measures(q: BumpPotential, intervals, cache: CoefficientCache, rtol: float, atol: float = 0.0) -> list[float]:
    return [measure_on_interval(q, iv, rtol=rtol, coeff_fn=lambda p: cache.get(q, p), atol=atol).value for iv in intervals]


# Distance selection ------------------------------------------------------------


@dataclass(frozen=True)
class SelectionResult:
    distance: float
    gap: float
    trace: tuple[tuple[float, float], ...]


def select_next_distance(
    q: BumpPotential,
    height: float,
    profile: BumpProfile,
    intervals: Sequence[tuple[float, float]],
    tol: float,
    d_floor: float,
    max_doublings: int = 20,
    rtol: float = 1e-7,
    cache: CoefficientCache | None = None,
    base_measures: Sequence[float] | None = None,
) -> SelectionResult:
    """First ``d = d_floor * 2^i`` keeping every interval measure within ``tol``.

    Measures are resolved to ``max(rtol * |mu|, tol * GAP_RESOLUTION)`` so the
    accepted gap is accurate well below ``tol``.

    Raises
    ------
    SelectionFailure
        If no candidate meets ``tol``; carries the best distance and gap.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if d_floor <= 0:
        raise DomainError("d_floor must be positive")
    cache = cache or CoefficientCache()
    atol = tol * GAP_RESOLUTION
    base = list(base_measures) if base_measures is not None else _measures(q, intervals, cache, rtol, atol)
    trace = []
    best = (math.inf, None)
    d = float(d_floor)
    for _ in range(max_doublings + 1):
        cand = q.extend([height], [profile], [d])
        new = _measures(cand, intervals, cache, rtol, atol)
        gap = max(abs(a - b) for a, b in zip(new, base))
        trace.append((d, gap))
        if gap < best[0]:
            best = (gap, d)
        if gap < tol:
            return SelectionResult(d, gap, tuple(trace))
        d *= 2.0
    raise SelectionFailure(
        f"no distance up to {d / 2:g} brings the measure gap below {tol:g} (best {best[0]:g})",
        best_distance=best[1],
        best_gap=best[0],
    )


# Concentration sets ----------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationSet:
    intervals: tuple[tuple[float, float], ...]
    measure: float
    threshold: float
    mass_outside: float
    xi_measure: float
    nodes: int

    @property
    def retention_ok(self) -> bool:
        """``mu(Xi \\ S) <= threshold * |Xi|`` (with a small quadrature allowance)."""
        return self.mass_outside <= self.threshold * self.xi_measure * (1.0 + 1e-6) + 1e-12


def _component_set(q, lo, hi, threshold, cache, max_nodes, variation):
    n = max(1025, int(64 * max(q.support_end, 1.0) * (hi - lo) / math.pi)) | 1
    while True:
        k = np.linspace(lo, hi, n)
        p = SpectralParam.from_kappa(k)
        dens = density_product(q, p, coeffs=cache.get(q, p))
        rel = np.max(np.abs(np.diff(dens)) / np.minimum(dens[:-1], dens[1:]))
        if rel < variation or n >= max_nodes:
            break
        n = 2 * n - 1
    cells = dens[:-1] >= threshold - 1e-12
    h = (hi - lo) / (n - 1)
    intervals = []
    i = 0
    while i < cells.size:
        if cells[i]:
            j = i
            while j + 1 < cells.size and cells[j + 1]:
                j += 1
            intervals.append((float(k[i]), float(k[j + 1])))
            i = j + 1
        else:
            i += 1
    cell_mass = 0.5 * (dens[:-1] + dens[1:]) * h
    return intervals, float(np.sum(cells) * h), float(np.sum(cell_mass[~cells])), n


def concentration_set(
    q: BumpPotential,
    xi: Sequence[tuple[float, float]],
    threshold: float,
    cache: CoefficientCache | None = None,
    max_nodes: int = 2**20 + 1,
    variation: float = 0.1,
) -> ConcentrationSet:
    """Super-level set ``{kappa in Xi : density > threshold}``.

    The grid is refined until neighbouring density samples differ by less
    than ``variation`` (relative) or ``max_nodes`` is reached.  Cells are
    half-open and a cell belongs to the set when its left sample reaches the
    threshold (ties included).
    """
    if threshold <= 0:
        raise DomainError("threshold must be positive")
    cache = cache or CoefficientCache()
    all_iv, meas, outside, nodes = [], 0.0, 0.0, 0
    for lo, hi in xi:
        iv, m, o, n = _component_set(q, lo, hi, threshold, cache, max_nodes, variation)
        all_iv.extend(iv)
        meas += m
        outside += o
        nodes += n
    lebesgue = float(sum(hi - lo for lo, hi in xi))
    return ConcentrationSet(tuple(all_iv), meas, threshold, outside, lebesgue, nodes)


# Staged build -----------------------------------------------------------------


@dataclass(frozen=True)
class ConstructionConfig:
    """Parameters of a staged build.

    ``heights`` is ``"inverse_sqrt"`` (``H_j = 1/sqrt(j)``), ``"constant"``
    (``height`` for every bump) or an explicit sequence cycled over bumps.
    ``budget`` is ``"epsilon"`` (``eps_n 2^{-(j+1)}`` with ``j`` the global
    bump index) or ``"uniform"`` (``eps_{n-1} / r`` with ``r`` the number of
    test intervals, ``eps_0 = eps_1``).
    """

    stages: int = 3
    bumps_per_stage: int = 2
    heights: object = "inverse_sqrt"
    height: float = 1.0
    profile: str = "rect"
    width: float = 1.0
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    growth: GrowthSchedule = field(default_factory=GrowthSchedule)
    budget: str = "epsilon"
    pieces: int = 2
    rtol: float = 1e-7
    max_doublings: int = 20
    fixed_threshold: float | None = None
    eta: float = 0.0

    def height_of(self, j: int) -> float:
        if isinstance(self.heights, str):
            if self.heights == "inverse_sqrt":
                return 1.0 / math.sqrt(j)
            if self.heights == "constant":
                return float(self.height)
            raise ConfigurationError(f"unknown height schedule {self.heights!r}")
        seq = list(self.heights)
        return float(seq[(j - 1) % len(seq)])


@dataclass(frozen=True)
class ConstructionStage:
    """Record of one completed stage."""

    stage: int
    xi: tuple[tuple[float, float], ...]
    epsilon: float
    nu: int
    distances: tuple[float, ...]
    gaps: tuple[float, ...]
    budgets: tuple[float, ...]
    threshold: float
    s_intervals: tuple[tuple[float, float], ...]
    s_measure: float
    mass_outside: float
    fixed_threshold: float | None = None
    s_measure_fixed: float | None = None

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "xi": [list(c) for c in self.xi],
            "epsilon": self.epsilon,
            "distances": list(self.distances),
            "gaps": list(self.gaps),
            "budgets": list(self.budgets),
            "nu": self.nu,
            "s_measure": self.s_measure,
            "s_intervals": [list(c) for c in self.s_intervals],
            "mass_outside": self.mass_outside,
            "thresholds": {"stage": self.threshold, "fixed": self.fixed_threshold, "s_measure_fixed": self.s_measure_fixed},
        }


@dataclass
class ConstructionResult:
    stages: list
    potential: BumpPotential
    failure: SelectionFailure | None = None


def _check_heights(cfg: ConstructionConfig) -> None:
    total = cfg.stages * cfg.bumps_per_stage
    hs = [cfg.height_of(j) for j in range(1, total + 1)]
    if any(h < 0 for h in hs):
        raise ConfigurationError("heights must be nonnegative")
    if all(h == 0 for h in hs):
        raise ConfigurationError("at least one bump must have nonzero height")


def build_pearson_sequence(cfg: ConstructionConfig, on_stage: Callable | None = None) -> ConstructionResult:
    """Run the staged construction.

    Returns every completed stage; on a selection failure the partial result
    carries the exception instead of raising.
    """
    _check_heights(cfg)
    q = free_potential(cfg.eta)
    cache = CoefficientCache()
    stages: list[ConstructionStage] = []
    fixed_xi = xi_interval(cfg.stages)
    j = 0
    for n in range(1, cfg.stages + 1):
        eps = cfg.epsilon(n)
        xi = xi_interval(n)
        ivs = test_intervals(n, cfg.pieces)
        dists, gaps, budgets = [], [], []
        for _ in range(cfg.bumps_per_stage):
            j += 1
            if cfg.budget == "epsilon":
                budget = eps * 2.0 ** (-(j + 1))
            elif cfg.budget == "uniform":
                budget = cfg.epsilon(max(n - 1, 1)) / len(ivs)
            else:
                raise ConfigurationError(f"unknown budget rule {cfg.budget!r}")
            prof = BumpProfile(cfg.width, cfg.profile)
            try:
                sel = select_next_distance(
                    q, cfg.height_of(j), prof, ivs, budget, cfg.growth.floor(j), cfg.max_doublings, cfg.rtol, cache
                )
            except SelectionFailure as exc:
                return ConstructionResult(stages, q, exc)
            q = q.extend([cfg.height_of(j)], [prof], [sel.distance])
            dists.append(sel.distance)
            gaps.append(sel.gap)
            budgets.append(budget)
        thr = eps / xi_measure(n)
        cs = concentration_set(q, xi, thr, cache)
        fixed = None
        if cfg.fixed_threshold is not None:
            fixed = concentration_set(q, fixed_xi, cfg.fixed_threshold, cache).measure
        stage = ConstructionStage(
            n, xi, eps, q.n_bumps, tuple(dists), tuple(gaps), tuple(budgets), thr, cs.intervals, cs.measure, cs.mass_outside, cfg.fixed_threshold, fixed
        )
        stages.append(stage)
        if on_stage is not None:
            on_stage(stage)
    return ConstructionResult(stages, q)


def recheck_gaps(result: ConstructionResult, cfg: ConstructionConfig, rtol: float = 1e-10) -> list[float]:
    """Recompute ``max_Sigma |mu_j(Sigma) - mu_{j-1}(Sigma)|`` for every placed bump."""
    out = []
    j = 0
    cache = CoefficientCache()
    for st in result.stages:
        ivs = test_intervals(st.stage, cfg.pieces)
        for _ in st.distances:
            j += 1
            before = _measures(result.potential.truncate(j - 1), ivs, cache, rtol)
            after = _measures(result.potential.truncate(j), ivs, cache, rtol)
            out.append(max(abs(a - b) for a, b in zip(after, before)))
    return out


# Point-spectrum certificate --------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    """Log-domain growth certificate for ``sum_j exp(j^2 - 2 j omega/|kappa|)``."""

    omega: float
    kappa: float
    log_terms: np.ndarray
    log_partial_sums: np.ndarray
    increments: np.ndarray
    term_increments: np.ndarray
    bounds: np.ndarray
    onset: int

    @property
    def certified(self) -> bool:
        """Term increments are linear in ``N``; a positive last one means they grow from there on."""
        return bool(self.term_increments.size and self.term_increments[-1] > 0)


def support_l1(q_or_profiles, heights=None) -> float:
    """``omega = sup_j H_j int |W_j|``."""
    if isinstance(q_or_profiles, BumpPotential):
        heights, profiles = q_or_profiles.heights, q_or_profiles.profiles
    else:
        profiles = q_or_profiles
    from .potential import profile_mass

    return max((h * profile_mass(p) for h, p in zip(heights, profiles)), default=0.0)


def no_point_spectrum_certificate(omega: float, kappa: float, N: int = 20, growth: GrowthSchedule | None = None) -> Certificate:
    """Log-domain terms ``log d_{j+1} - 2 j omega/|kappa|`` and their partial sums.

    With the exponential schedule ``log d_{j+1} = j^2``.  ``onset`` is the
    first ``N`` with ``N > omega/|kappa|``.
    """
    if kappa == 0:
        raise DomainError("kappa must be nonzero")
    growth = growth or GrowthSchedule("exponential")
    j = np.arange(1, N + 1)
    log_d = np.array([growth.log_floor(int(i) + 1) for i in j])
    logt = log_d - 2.0 * j * omega / abs(kappa)
    logs = np.logaddexp.accumulate(logt)
    inc = np.diff(logs)
    tinc = np.diff(logt)
    bounds = (2.0 * j[1:] - 1.0) - 2.0 * omega / abs(kappa)
    onset = int(math.floor(omega / abs(kappa))) + 1
    return Certificate(omega, kappa, logt, logs, inc, tinc, bounds, max(onset, 2))
