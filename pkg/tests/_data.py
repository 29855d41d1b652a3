"""Initial data shared by the test modules."""
from __future__ import annotations

import numpy as np

from boltzprice.grid import Grid


def bump(x: np.ndarray, lo: float, hi: float, height: float = 1.0) -> np.ndarray:
    """Parabola vanishing at ``lo`` and ``hi`` with peak ``height``, zero outside."""
    mid = 0.5 * (lo + hi)
    scale = height / ((mid - lo) * (hi - mid))
    return np.where((x >= lo) & (x <= hi), scale * (x - lo) * (hi - x), 0.0)


def example1_fields(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x = grid.x
    f = np.where(x <= 0.5, 1.0, np.where(x < 0.6, -10.0 * x + 6.0, 0.0))
    g = np.where(x > 0.6, 10.0 * x - 6.0, 0.0)
    return f, g


def example4_fields(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x = grid.x
    tol = 1e-9 * grid.h
    f = np.where((x >= 9 - tol) & (x <= 9.5 + tol), 1.0,
                 np.where((x > 9.5) & (x < 10), -2.0 * x + 20.0, 0.0))
    g = np.where((x >= 10 - tol) & (x <= 11 + tol), 2.0 * x - 20.0, 0.0)
    return f, np.maximum(g, 0.0)


def dense_neumann_heat(n: int, ratio: float) -> np.ndarray:
    """``I - ratio * Laplacian`` with reflected ghosts, assembled entry by entry."""
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = 1.0 + 2.0 * ratio
        for j in (i - 1, i + 1):
            jj = -j if j < 0 else (2 * (n - 1) - j if j > n - 1 else j)
            A[i, jj] -= ratio
    return A
