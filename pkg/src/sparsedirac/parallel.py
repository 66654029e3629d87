"""Deterministic chunked parallel map over spectral grids."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np


def chunked_map(fn: Callable[[np.ndarray], np.ndarray], grid: np.ndarray, threads: int = 1, chunk: int = 64) -> np.ndarray:
    """Apply a vectorised ``fn`` to slices of ``grid`` and concatenate in order.

    Every output cell depends only on its own grid value, so the result does
    not depend on ``threads``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return np.zeros(0)
    pieces = [grid[i : i + chunk] for i in range(0, grid.size, chunk)]
    if threads <= 1 or len(pieces) == 1:
        return np.concatenate([np.atleast_1d(fn(p)) for p in pieces])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(fn, pieces))
    return np.concatenate([np.atleast_1d(r) for r in results])
