"""Uniform B-spline grids and basis evaluation (Cox-de Boor)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class SplineGrid:
    """Uniform knot vector over ``interior_range`` extended by ``order`` steps per side.

    ``order`` is the polynomial degree, so the grid carries
    ``num_intervals + order`` basis functions.
    """

    interior_range: tuple[float, float]
    num_intervals: int
    order: int
    knots: np.ndarray

    @property
    def num_basis(self) -> int:
        return self.num_intervals + self.order

    def __eq__(self, other):
        if not isinstance(other, SplineGrid):
            return NotImplemented
        return (
            self.interior_range == other.interior_range
            and self.num_intervals == other.num_intervals
            and self.order == other.order
            and np.array_equal(self.knots, other.knots)
        )

    def __hash__(self):
        return hash((self.interior_range, self.num_intervals, self.order))


def make_uniform_grid(interior_range, G: int, r: int) -> SplineGrid:
    lo, hi = (float(v) for v in interior_range)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise InvalidArgument(f"degenerate interval [{lo}, {hi}]")
    if int(G) != G or G < 1:
        raise InvalidArgument(f"grid intervals must be a positive integer, got {G}")
    if int(r) != r or r < 1:
        raise InvalidArgument(f"spline order must be a positive integer, got {r}")
    G, r = int(G), int(r)
    h = (hi - lo) / G
    knots = lo + h * np.arange(-r, G + r + 1, dtype=float)
    # pin the interior endpoints exactly so they appear among the knots
    knots[r] = lo
    knots[r + G] = hi
    knots.setflags(write=False)
    return SplineGrid((lo, hi), G, r, knots)


def _basis_table(x: np.ndarray, knots: np.ndarray, order: int) -> list[np.ndarray]:
    """Cox-de Boor tables for degrees 0..order; entry k has shape x.shape + (len(knots)-1-k,)."""
    t = knots
    xe = x[..., None]
    B = ((xe >= t[:-1]) & (xe < t[1:])).astype(float)
    tables = [B]
    for k in range(1, order + 1):
        left_den = t[k:-1] - t[: -k - 1]
        right_den = t[k + 1:] - t[1:-k]
        left = (xe - t[: -k - 1]) / left_den * B[..., :-1]
        right = (t[k + 1:] - xe) / right_den * B[..., 1:]
        B = left + right
        tables.append(B)
    return tables


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("spline argument must be finite")
    return x


def basis_matrix(x, grid: SplineGrid) -> np.ndarray:
    """Vectorized basis: returns array of shape ``x.shape + (G + r,)``."""
    x = _check_finite(x)
    return _basis_table(x, grid.knots, grid.order)[-1]


def basis_derivative_matrix(x, grid: SplineGrid) -> np.ndarray:
    x = _check_finite(x)
    return _derivative_from_lower(_basis_table(x, grid.knots, grid.order)[-2], grid)


def basis_and_derivative(x, grid: SplineGrid) -> tuple[np.ndarray, np.ndarray]:
    x = _check_finite(x)
    tables = _basis_table(x, grid.knots, grid.order)
    return tables[-1], _derivative_from_lower(tables[-2], grid)


def _derivative_from_lower(lower: np.ndarray, grid: SplineGrid) -> np.ndarray:
    t, k = grid.knots, grid.order
    left = k / (t[k:-1] - t[: -k - 1]) * lower[..., :-1]
    right = k / (t[k + 1:] - t[1:-k]) * lower[..., 1:]
    return left - right


def basis_all(x: float, grid: SplineGrid) -> np.ndarray:
    """All ``G + r`` basis values at a single point."""
    if np.ndim(x) != 0:
        raise InvalidArgument("basis_all expects a scalar; use basis_matrix for arrays")
    return basis_matrix(float(x), grid)


def basis_all_derivative(x: float, grid: SplineGrid) -> np.ndarray:
    if np.ndim(x) != 0:
        raise InvalidArgument("basis_all_derivative expects a scalar")
    return basis_derivative_matrix(float(x), grid)
