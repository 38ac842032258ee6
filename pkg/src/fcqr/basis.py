"""Clamped B-spline bases and quadrature against sampled curves.

A basis of order ``r`` (polynomial degree ``r - 1``) with ``M`` equally
spaced interior knots spans ``M + r`` functions.  Boundary knots are
repeated ``r`` times so endpoint evaluation is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigurationError, DomainError

__all__ = ["SplineBasis", "SampledFunction", "make_basis", "eval_basis", "inner_product"]


@dataclass(frozen=True)
class SplineBasis:
    order: int
    n_interior: int
    domain: tuple[float, float]

    @property
    def dimension(self) -> int:
        return self.n_interior + self.order

    @property
    def knot_vector(self) -> np.ndarray:
        a, b = self.domain
        interior = np.linspace(a, b, self.n_interior + 2)[1:-1]
        return np.concatenate(
            [np.full(self.order, a), interior, np.full(self.order, b)]
        )

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knot_vector[self.order : self.order + self.n_interior]


def make_basis(order: int, n_interior: int, domain: tuple[float, float]) -> SplineBasis:
    if order < 2:
        raise ConfigurationError(f"spline order must be >= 2, got {order}")
    if n_interior < 0:
        raise ConfigurationError(f"n_interior must be >= 0, got {n_interior}")
    a, b = float(domain[0]), float(domain[1])
    if not np.isfinite(a) or not np.isfinite(b) or a >= b:
        raise ConfigurationError(f"degenerate domain [{a}, {b}]")
    return SplineBasis(order=int(order), n_interior=int(n_interior), domain=(a, b))


def evaluate_matrix(basis: SplineBasis, s: np.ndarray) -> np.ndarray:
    """Dense (len(s), dimension) matrix of basis values; s must lie in the domain."""
    s = np.asarray(s, dtype=float)
    a, b = basis.domain
    if s.size and (s.min() < a - 1e-12 or s.max() > b + 1e-12):
        raise DomainError(f"evaluation points outside domain [{a}, {b}]")
    s = np.clip(s, a, b)
    mat = BSpline.design_matrix(
        s, basis.knot_vector, basis.order - 1, extrapolate=False
    )
    return mat.toarray()


def eval_basis(basis: SplineBasis, s: float) -> np.ndarray:
    return evaluate_matrix(basis, np.array([float(s)]))[0]


@dataclass(frozen=True)
class SampledFunction:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ConfigurationError("sampling grid needs at least 2 points")
        if np.any(np.diff(grid) <= 0):
            raise ConfigurationError("sampling grid must be strictly increasing")
        if values.shape != grid.shape:
            raise ConfigurationError("values and grid must have equal length")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def _refined_grid(basis: SplineBasis, grid: np.ndarray) -> np.ndarray:
    a, b = basis.domain
    if abs(grid[0] - a) > 1e-8 * max(1.0, abs(a)) or abs(grid[-1] - b) > 1e-8 * max(1.0, abs(b)):
        raise DomainError(
            f"sampling grid [{grid[0]}, {grid[-1]}] does not span basis domain [{a}, {b}]"
        )
    return np.union1d(grid, basis.interior_knots)


def quadrature_map(basis: SplineBasis, grid: np.ndarray) -> np.ndarray:
    """(len(grid), dimension) matrix Q with <x, B_l> = values @ Q[:, l].

    Composite trapezoid on the union of the sampling grid and the knot
    locations, with x linearly interpolated onto inserted knots.
    """
    grid = np.asarray(grid, dtype=float)
    refined = _refined_grid(basis, grid)
    bmat = evaluate_matrix(basis, refined)
    dt = np.diff(refined)
    w = np.zeros(refined.size)
    w[:-1] += dt / 2.0
    w[1:] += dt / 2.0
    # linear interpolation refined -> grid, as a sparse two-band operator
    idx = np.clip(np.searchsorted(grid, refined, side="right") - 1, 0, grid.size - 2)
    frac = (refined - grid[idx]) / (grid[idx + 1] - grid[idx])
    q = np.zeros((grid.size, basis.dimension))
    wb = bmat * w[:, None]
    np.add.at(q, idx, wb * (1.0 - frac)[:, None])
    np.add.at(q, idx + 1, wb * frac[:, None])
    return q


def inner_product(x: SampledFunction, basis: SplineBasis) -> np.ndarray:
    """Approximate integrals of x(s) * B_l(s) over the basis domain."""
    return x.values @ quadrature_map(basis, x.grid)
