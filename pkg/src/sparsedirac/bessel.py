"""Half-integer order Bessel and Weber functions from elementary closed forms.

``J_{1/2}(x) = sqrt(2/(pi x)) sin x`` and ``J_{-1/2}(x) = sqrt(2/(pi x)) cos x``
seed the three-term recurrence ``Z_{nu+1} = (2 nu / x) Z_nu - Z_{nu-1}``.
``Y`` is recurred upward, where it is dominant.  ``J`` is recurred downward
(Miller's algorithm) and normalised against the larger of the two seeds.
Real and complex arguments are both supported (principal branch).
"""

from __future__ import annotations

import numpy as np


def _check_order(order: float) -> int:
    n = order - 0.5
    if abs(n - round(n)) > 1e-12 or order < 0.5 - 1e-12:
        raise ValueError(f"order must be a positive half-integer, got {order}")
    return int(round(n))


def _seeds(x):
    pref = np.sqrt(2.0 / (np.pi * x))
    return pref * np.sin(x), pref * np.cos(x)


def spherical_half_j(order: float, x):
    """``J_order(x)`` for ``order`` in ``{1/2, 3/2, ...}``."""
    n = _check_order(order)
    x = np.asarray(x)
    dtype = np.result_type(x, float)
    x = x.astype(dtype)
    j_half, j_mhalf = _seeds(x)
    if n == 0:
        return j_half
    # Miller: start well above both the order and |x|.
    start = n + int(np.max(np.abs(x), initial=0.0)) + 30
    hi = np.zeros_like(x)
    cur = np.ones_like(x) * 1e-30
    target = None
    # cur holds J_{nu}, hi holds J_{nu+1}, with nu = start + 1/2 going down.
    for m in range(start, -1, -1):
        nu = m + 0.5
        if m == n:
            target = cur.copy()
        # J_{nu-1} = (2 nu / x) J_nu - J_{nu+1}
        lower = (2.0 * nu / x) * cur - hi
        hi, cur = cur, lower
        big = np.abs(cur) > 1e150
        if np.any(big):
            scale = np.where(big, 1e-150, 1.0)
            cur, hi = cur * scale, hi * scale
            if target is not None:
                target = target * scale
    # Now hi = J_{1/2} (unnormalised), cur = J_{-1/2} (unnormalised).
    use_half = np.abs(j_half) >= np.abs(j_mhalf)
    norm = np.where(use_half, j_half / np.where(use_half, hi, 1.0), j_mhalf / np.where(use_half, 1.0, cur))
    return target * norm


def spherical_half_y(order: float, x):
    """``Y_order(x)`` for ``order`` in ``{1/2, 3/2, ...}``."""
    n = _check_order(order)
    x = np.asarray(x)
    x = x.astype(np.result_type(x, float))
    j_half, j_mhalf = _seeds(x)
    y_mhalf, y_half = j_half, -j_mhalf
    if n == 0:
        return y_half
    prev, cur = y_mhalf, y_half
    for m in range(n):
        nu = m + 0.5
        prev, cur = cur, (2.0 * nu / x) * cur - prev
    return cur
