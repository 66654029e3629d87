"""Bump potentials on the half line.

A potential is a finite sequence of compactly supported bumps ``H_j W_j``
separated by gaps ``d_j``.  Bump ``j`` occupies ``[a_j, b_j]`` with
``a_j = b_{j-1} + d_j``, ``b_0 = 0`` and ``b_j = a_j + alpha_j``.  Every
profile ``W_j`` has unit mass on ``[0, alpha_j]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateProfileError, DomainError, GeometryError, ShapeError

NAMED_PROFILES = ("rect", "cos", "tri")


@dataclass(frozen=True)
class BumpProfile:
    """Unit-mass bump shape on ``[0, width]``.

    Parameters
    ----------
    width : float
        Support length ``alpha``.
    kind : {"rect", "cos", "tri", "samples"}
        Named closed form or a sampled table.
    samples : tuple of float, optional
        Values on a uniform grid over ``[0, width]`` (``kind == "samples"``),
        already scaled to unit mass.  Evaluated by linear interpolation.
    """

    width: float
    kind: str = "rect"
    samples: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not (self.width > 0 and math.isfinite(self.width)):
            raise GeometryError(f"bump width must be positive and finite, got {self.width!r}")
        if self.kind not in NAMED_PROFILES + ("samples",):
            raise ShapeError(f"unknown profile kind {self.kind!r}")
        if self.kind == "samples":
            if len(self.samples) < 2:
                raise ShapeError("sampled profile needs at least 2 nodes")
            if min(self.samples) < 0:
                raise ShapeError("sampled profile has negative values")

    @property
    def is_constant(self) -> bool:
        return self.kind == "rect"

    @property
    def peak(self) -> float:
        """Maximum of the shape."""
        if self.kind == "rect":
            return 1.0 / self.width
        if self.kind in ("cos", "tri"):
            return 2.0 / self.width
        return max(self.samples)

    @property
    def breakpoints(self) -> np.ndarray:
        """Points in ``[0, width]`` where the shape may fail to be smooth."""
        if self.kind == "samples":
            return np.linspace(0.0, self.width, len(self.samples))
        if self.kind == "tri":
            return np.array([0.0, 0.5 * self.width, self.width])
        return np.array([0.0, self.width])

    def __call__(self, s):
        """Evaluate the shape at local coordinates ``s``; zero outside ``[0, width]``."""
        s = np.asarray(s, dtype=float)
        a = self.width
        inside = (s >= 0.0) & (s <= a)
        if self.kind == "rect":
            val = np.full_like(s, 1.0 / a)
        elif self.kind == "cos":
            val = (1.0 - np.cos(2.0 * np.pi * s / a)) / a
        elif self.kind == "tri":
            val = (2.0 / a) * (1.0 - np.abs(2.0 * s / a - 1.0))
        else:
            nodes = np.linspace(0.0, a, len(self.samples))
            val = np.interp(s, nodes, np.asarray(self.samples))
        out = np.where(inside, val, 0.0)
        return out if out.ndim else float(out)

    def to_json(self) -> Any:
        if self.kind == "samples":
            return {"samples": list(self.samples)}
        return self.kind


def _linear_interpolant_mass(samples: np.ndarray, width: float) -> float:
    # Composite Simpson on nodes plus midpoints of the linear interpolant.
    n = samples.size
    fine = np.empty(2 * n - 1)
    fine[0::2] = samples
    fine[1::2] = 0.5 * (samples[:-1] + samples[1:])
    h = width / (2 * (n - 1))
    w = np.ones(fine.size)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(np.dot(w, fine) * h / 3.0)


def normalize_profile(samples: Sequence[float], width: float) -> BumpProfile:
    """Scale a sampled shape to unit mass on ``[0, width]``.

    Parameters
    ----------
    samples : sequence of float
        Nonnegative values on a uniform grid covering ``[0, width]``.
    width : float
        Support length.

    Returns
    -------
    BumpProfile
        Sampled profile whose linear interpolant integrates to one.

    Raises
    ------
    ShapeError
        On negative samples or fewer than two nodes.
    DegenerateProfileError
        If the shape has zero mass.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ShapeError("sampled profile needs at least 2 nodes")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("sampled profile contains non-finite values")
    if np.any(arr < 0):
        raise ShapeError("sampled profile has negative values")
    if not (width > 0):
        raise GeometryError(f"bump width must be positive, got {width!r}")
    mass = _linear_interpolant_mass(arr, width)
    if mass <= 0:
        raise DegenerateProfileError("profile has zero mass")
    return BumpProfile(width=float(width), kind="samples", samples=tuple((arr / mass).tolist()))


def profile_mass(profile: BumpProfile) -> float:
    """Integral of the profile over its support."""
    if profile.kind == "samples":
        return _linear_interpolant_mass(np.asarray(profile.samples), profile.width)
    return 1.0


def make_profile(spec: Any, width: float) -> BumpProfile:
    """Build a profile from a descriptor entry (name or ``{"samples": [...]}``)."""
    if isinstance(spec, BumpProfile):
        if not math.isclose(spec.width, width, rel_tol=0, abs_tol=1e-15):
            raise GeometryError("profile width disagrees with bump width")
        return spec
    if isinstance(spec, str):
        return BumpProfile(width=float(width), kind=spec)
    if isinstance(spec, Mapping) and "samples" in spec:
        return normalize_profile(spec["samples"], width)
    raise ShapeError(f"unrecognised profile specification {spec!r}")


@dataclass(frozen=True)
class BumpPotential:
    """Finite bump potential with derived endpoints.

    Attributes
    ----------
    heights : tuple of float
        Bump heights ``H_j >= 0``.
    profiles : tuple of BumpProfile
        Unit-mass shapes.
    distances : tuple of float
        Gaps ``d_j > 0``; ``d_1`` is measured from the origin.
    eta : float
        Boundary angle at ``r = 0`` in ``[0, pi)``.
    starts, ends : tuple of float
        Derived ``a_j`` and ``b_j``.
    """

    heights: tuple[float, ...]
    profiles: tuple[BumpProfile, ...]
    distances: tuple[float, ...]
    eta: float = 0.0
    starts: tuple[float, ...] = field(init=False)
    ends: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.heights)
        if len(self.profiles) != n or len(self.distances) != n:
            raise GeometryError(
                f"length mismatch: {n} heights, {len(self.profiles)} profiles, {len(self.distances)} distances"
            )
        if not (0.0 <= self.eta < math.pi):
            raise GeometryError(f"boundary angle must lie in [0, pi), got {self.eta!r}")
        for h in self.heights:
            if not (h >= 0 and math.isfinite(h)):
                raise GeometryError(f"heights must be finite and nonnegative, got {h!r}")
        starts, ends = [], []
        b = 0.0
        for d, p in zip(self.distances, self.profiles):
            if not (d > 0 and math.isfinite(d)):
                raise GeometryError(f"distances must be positive and finite, got {d!r}")
            a = b + d
            b = a + p.width
            starts.append(a)
            ends.append(b)
        object.__setattr__(self, "starts", tuple(starts))
        object.__setattr__(self, "ends", tuple(ends))

    @property
    def n_bumps(self) -> int:
        return len(self.heights)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(p.width for p in self.profiles)

    @property
    def support_end(self) -> float:
        """``b_n``, or 0 for the free potential."""
        return self.ends[-1] if self.ends else 0.0

    def local_potential(self, j: int):
        """Callable ``s -> H_j W_j(s)`` on the local interval ``[0, alpha_j]``."""
        h, p = self.heights[j], self.profiles[j]
        return lambda s: h * p(s)

    def evaluate(self, r):
        return evaluate(self, r)

    def extend(self, heights: Iterable[float], profiles: Iterable[BumpProfile], distances: Iterable[float]) -> "BumpPotential":
        """Return a new potential with bumps appended."""
        return BumpPotential(
            heights=self.heights + tuple(float(h) for h in heights),
            profiles=self.profiles + tuple(profiles),
            distances=self.distances + tuple(float(d) for d in distances),
            eta=self.eta,
        )

    def truncate(self, n: int) -> "BumpPotential":
        """The potential made of the first ``n`` bumps."""
        return BumpPotential(self.heights[:n], self.profiles[:n], self.distances[:n], self.eta)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "bumps": [
                {"height": h, "width": p.width, "profile": p.to_json()} for h, p in zip(self.heights, self.profiles)
            ],
            "distances": list(self.distances),
        }


def build_bump_potential(
    heights: Sequence[float],
    profiles: Sequence[Any],
    distances: Sequence[float],
    eta: float = 0.0,
    widths: Sequence[float] | None = None,
) -> BumpPotential:
    """Assemble a bump potential.

    Parameters
    ----------
    heights : sequence of float
    profiles : sequence
        ``BumpProfile`` objects, profile names, or ``{"samples": [...]}``.
        A single name is broadcast to every bump.
    distances : sequence of float
    eta : float, default 0
    widths : sequence of float, optional
        Required when profiles are given by name or samples.

    Examples
    --------
    >>> q = build_bump_potential([1, 1], "rect", [2, 3], widths=[1, 1])
    >>> q.starts, q.ends
    ((2.0, 6.0), (3.0, 7.0))
    """
    heights = [float(h) for h in heights]
    n = len(heights)
    if isinstance(profiles, (str, BumpProfile)) or (isinstance(profiles, Mapping)):
        profiles = [profiles] * n
    profiles = list(profiles)
    if len(profiles) != n or len(distances) != n:
        raise GeometryError(f"length mismatch: {n} heights, {len(profiles)} profiles, {len(distances)} distances")
    if widths is None:
        if not all(isinstance(p, BumpProfile) for p in profiles):
            raise GeometryError("widths are required unless BumpProfile objects are supplied")
        built = profiles
    else:
        if len(widths) != n:
            raise GeometryError(f"expected {n} widths, got {len(widths)}")
        built = [make_profile(p, float(w)) for p, w in zip(profiles, widths)]
    return BumpPotential(tuple(heights), tuple(built), tuple(float(d) for d in distances), float(eta))


def free_potential(eta: float = 0.0) -> BumpPotential:
    return BumpPotential((), (), (), float(eta))


def evaluate(q: BumpPotential, r):
    """Potential value ``q(r)``; exactly zero on gaps.

    Raises
    ------
    DomainError
        If any ``r`` is negative.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise DomainError("potential is defined on r >= 0")
    out = np.zeros_like(r_arr)
    if q.n_bumps:
        starts = np.asarray(q.starts)
        idx = np.searchsorted(starts, r_arr, side="right") - 1
        for j in np.unique(idx[idx >= 0]):
            sel = idx == j
            local = r_arr[sel] - starts[j]
            out[sel] = q.heights[j] * np.asarray(q.profiles[j](local))
    return out if out.ndim else float(out)


def potential_from_dict(desc: Mapping[str, Any]) -> BumpPotential:
    """Parse the JSON potential descriptor."""
    try:
        bumps = desc.get("bumps", [])
        distances = desc.get("distances", [])
        eta = float(desc.get("eta", 0.0))
        heights = [float(b["height"]) for b in bumps]
        widths = [float(b["width"]) for b in bumps]
        profiles = [b.get("profile", "rect") for b in bumps]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigurationError(f"malformed potential descriptor: {exc}") from exc
    return build_bump_potential(heights, profiles, distances, eta=eta, widths=widths)


def load_potential(path) -> BumpPotential:
    with open(path, encoding="utf-8") as fh:
        return potential_from_dict(json.load(fh))


def dump_potential(q: BumpPotential, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(q.to_dict(), fh, indent=2)
