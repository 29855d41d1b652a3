"""Uniform vertex grids and the array primitives shared by every solver.

Fields are plain float64 arrays with one sample per node (``n_cells + 1``
entries). A grid never owns field data; solvers pass the grid alongside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lapack

from .errors import SolverError

logger = logging.getLogger(__name__)

# round-off negatives above -EPS_POS are clamped, anything below is an error
EPS_POS = 1e-12
# relative threshold defining the numerical support of a density
EPS_SUPP = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred mesh on ``[x_min, x_max]``."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ValueError("n_cells must be an integer >= 4")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.h * np.arange(self.n_nodes)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.flags.writeable = False
        return w

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, h: float) -> "Grid":
        n = (x_max - x_min) / h
        n_int = int(round(n))
        if abs(n - n_int) > 1e-9 * max(1.0, n):
            raise ValueError(f"domain length {x_max - x_min} is not a multiple of h={h}")
        return cls(x_min, x_max, n_int)

    def check(self, u: np.ndarray, name: str = "field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_nodes,):
            raise ValueError(f"{name} has shape {u.shape}, expected ({self.n_nodes},)")
        return u

    def sample(self, func) -> np.ndarray:
        return np.asarray(func(self.x), dtype=float)


def shift_steps(a: float, grid: Grid) -> int:
    """Number of grid cells spanned by the transaction cost ``a``.

    ``a`` has to be an exact multiple of ``h`` so that shifted samples stay
    on the grid.
    """
    if a < 0:
        raise ValueError("transaction cost a must be non-negative")
    ratio = a / grid.h
    steps = int(round(ratio))
    if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"a={a} is not an integer multiple of h={grid.h}")
    if steps > grid.n_cells:
        raise ValueError("shift exceeds domain")
    return steps


def shift_field(u: np.ndarray, steps: int, direction: int = +1, fill: float = 0.0) -> np.ndarray:
    """Return ``out[j] = u[j + direction*steps]``; out-of-range samples take ``fill``."""
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if steps < 0:
        raise ValueError("shift steps must be non-negative")
    if steps > n - 1:
        raise ValueError("shift exceeds domain")
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    if steps == 0:
        return u.copy()
    out = np.full(n, fill, dtype=float)
    if direction > 0:
        out[: n - steps] = u[steps:]
    else:
        out[steps:] = u[: n - steps]
    return out


def integrate(u: np.ndarray, grid: Grid) -> float:
    """Composite trapezoidal rule on the grid nodes."""
    return float(np.dot(grid.weights, grid.check(u)))


def positive_part(u: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(u, dtype=float), 0.0)


def negative_part(u: np.ndarray) -> np.ndarray:
    return np.maximum(-np.asarray(u, dtype=float), 0.0)


def clamp_roundoff(u: np.ndarray, name: str = "density") -> np.ndarray:
    """Zero out round-off negatives; raise if a value is below ``-EPS_POS``."""
    lo = float(u.min())
    if lo >= 0.0:
        return u
    if lo < -EPS_POS or not np.isfinite(lo):
        raise SolverError(f"positivity lost: min({name}) = {lo:.3e}")
    logger.debug("clamping round-off negatives in %s (min %.3e)", name, lo)
    return np.maximum(u, 0.0)


def numerical_support(u: np.ndarray, grid: Grid, rel: float = EPS_SUPP) -> tuple[float, float] | None:
    """Interval spanned by nodes with ``u > rel * max(u)``, or None for a zero field."""
    u = grid.check(u)
    top = float(u.max())
    if top <= 0.0:
        return None
    idx = np.flatnonzero(u > rel * top)
    return float(grid.x[idx[0]]), float(grid.x[idx[-1]])


class TridiagonalSolver:
    """LU factorisation of a tridiagonal matrix, reusable for many right-hand sides.

    ``lower`` and ``upper`` hold the ``n - 1`` off-diagonal entries; row ``i``
    reads ``lower[i-1]*w[i-1] + diag[i]*w[i] + upper[i]*w[i+1]``.
    """

    def __init__(self, lower, diag, upper):
        dl = np.array(lower, dtype=float)
        d = np.array(diag, dtype=float)
        du = np.array(upper, dtype=float)
        n = d.shape[0]
        if dl.shape != (n - 1,) or du.shape != (n - 1,):
            raise ValueError("off-diagonals must have length n - 1")
        self.n = n
        self._matrix = (dl.copy(), d.copy(), du.copy())
        if n < 3:
            # scipy's gttrf wrapper rejects n < 3; a dense solve is exact enough here
            self._dense = np.diag(d) + np.diag(dl, -1) + np.diag(du, 1)
            if np.linalg.det(self._dense) == 0.0:
                raise SolverError("singular system")
            self._lu = None
            return
        dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(dl, d, du)
        if info != 0:
            raise SolverError("singular system")
        self._lu = (dl_f, d_f, du_f, du2, ipiv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.array(rhs, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has length {b.shape[0]}, expected {self.n}")
        if self._lu is None:
            return np.linalg.solve(self._dense, b)
        x, info = lapack.dgttrs(*self._lu, b)
        if info != 0:
            raise SolverError("singular system")
        return x

    def matvec(self, w: np.ndarray) -> np.ndarray:
        dl, d, du = self._matrix
        out = d * w
        out[1:] += dl * w[:-1]
        out[:-1] += du * w[1:]
        return out


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """One-shot tridiagonal solve; see :class:`TridiagonalSolver` for the layout."""
    return TridiagonalSolver(lower, diag, upper).solve(rhs)


class BorderedTridiagonalSolver:
    """Tridiagonal matrix plus a few extra dense entries in selected rows.

    The extra entries are rank-one updates ``e_i r_i^T``; solves go through
    the Woodbury identity so each costs two tridiagonal sweeps plus O(n).
    """

    def __init__(self, lower, diag, upper, extra_rows: dict[int, dict[int, float]]):
        self._tri = TridiagonalSolver(lower, diag, upper)
        n = self._tri.n
        self.rows = sorted(extra_rows)
        m = len(self.rows)
        self._V = np.zeros((m, n))
        U = np.zeros((n, m))
        for q, i in enumerate(self.rows):
            U[i, q] = 1.0
            for col, val in extra_rows[i].items():
                self._V[q, col] += val
        self._Z = np.column_stack([self._tri.solve(U[:, q]) for q in range(m)]) if m else np.zeros((n, 0))
        cap = np.eye(m) + self._V @ self._Z
        if m and abs(np.linalg.det(cap)) < 1e-14:
            raise SolverError("singular system")
        self._cap = cap

    @property
    def n(self) -> int:
        return self._tri.n

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        y = self._tri.solve(rhs)
        if not self.rows:
            return y
        corr = np.linalg.solve(self._cap, self._V @ y)
        return y - self._Z @ corr

    def matvec(self, w: np.ndarray) -> np.ndarray:
        out = self._tri.matvec(w)
        for q, i in enumerate(self.rows):
            out[i] += self._V[q] @ w
        return out

    def dense(self) -> np.ndarray:
        eye = np.eye(self.n)
        return np.column_stack([self.matvec(eye[:, j]) for j in range(self.n)])


def neumann_heat_coefficients(n_nodes: int, ratio: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients of ``I + ratio * A`` for the Neumann Laplacian with ghost reflection.

    ``ratio`` is ``D * dt / h**2``. The reflected ghost node doubles the
    inward coupling in the first and last rows.
    """
    diag = np.full(n_nodes, 1.0 + 2.0 * ratio)
    lower = np.full(n_nodes - 1, -ratio)
    upper = np.full(n_nodes - 1, -ratio)
    upper[0] = -2.0 * ratio
    lower[-1] = -2.0 * ratio
    return lower, diag, upper


class HeatStepper:
    """Implicit Euler step of ``u_t = D u_xx`` with homogeneous Neumann conditions."""

    def __init__(self, n_nodes: int, diffusion: float, dt: float, h: float):
        if diffusion < 0 or dt <= 0:
            raise ValueError("diffusion must be >= 0 and dt > 0")
        self.ratio = diffusion * dt / h**2
        self._solver = TridiagonalSolver(*neumann_heat_coefficients(n_nodes, self.ratio))

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        return self._solver.solve(rhs)

    def residual(self, w: np.ndarray, rhs: np.ndarray) -> float:
        return float(np.max(np.abs(self._solver.matvec(w) - rhs)))
