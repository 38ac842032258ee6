"""Sequential estimation for censored quantile regression with functional predictors.

Per quantile level the estimating equation is the gradient of the convex
piecewise-linear function

    G(b) = sum_i z_i * [ delta_i * max(W_i'b - log y_i, 0) + u_ij * (log y_i - W_i'b) ],

which we minimize exactly as a weighted least-absolute-deviation linear
program (z_i are optional resampling multipliers, identically 1 by default).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .basis import SplineBasis, evaluate_matrix, quadrature_map
from .cohort import Cohort
from .errors import ConfigurationError, DegenerateDataError, FitError

__all__ = [
    "QuantileGrid",
    "CoefficientSurface",
    "transform_h",
    "build_grid",
    "design_matrix",
    "hazard_weight",
    "solve_step",
    "objective_value",
    "fit_sequential",
    "predict_quantile",
    "empirical_loss",
]

log = logging.getLogger(__name__)

BIG_M_SCALE = 1e6
SOLVER_MAXITER = 200


def transform_h(u):
    """Cumulative-hazard transform H(u) = -log(1 - u)."""
    return -np.log1p(-np.asarray(u, dtype=float))


@dataclass(frozen=True)
class QuantileGrid:
    levels: np.ndarray  # tau_0 = 0 < tau_1 < ... < tau_L < 1
    h_jumps: np.ndarray = field(default=None)  # H(tau_{l+1}) - H(tau_l), length L

    def __post_init__(self) -> None:
        levels = np.asarray(self.levels, dtype=float)
        if levels[0] != 0.0:
            raise ConfigurationError("quantile grid must start at exactly 0")
        if levels[-1] >= 1.0:
            raise ConfigurationError("upper quantile level must be < 1 (H diverges at 1)")
        if np.any(np.diff(levels) <= 0):
            raise ConfigurationError("quantile levels must be strictly increasing")
        h = transform_h(levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "h_jumps", np.diff(h))

    @property
    def n_levels(self) -> int:
        """Number of positive levels L."""
        return self.levels.size - 1

    def level_index(self, tau: float) -> int:
        j = int(np.argmin(np.abs(self.levels - tau)))
        if abs(self.levels[j] - tau) > 1e-9:
            raise ConfigurationError(f"tau={tau} is not on the fitted quantile grid")
        return j


def build_grid(tau_max: float, step: float) -> QuantileGrid:
    if not 0 < step < tau_max:
        raise ConfigurationError(f"need 0 < step < tau_max, got step={step}, tau_max={tau_max}")
    if tau_max >= 1:
        raise ConfigurationError(f"tau_max must be < 1, got {tau_max}")
    n = round(tau_max / step)
    if abs(n * step - tau_max) > 1e-9:
        n = int(np.floor(tau_max / step + 1e-9))
    return QuantileGrid(levels=np.linspace(0.0, n * step, n + 1))


@dataclass(frozen=True)
class CoefficientSurface:
    """Fitted spline coefficient surfaces: one gamma vector per predictor per level."""

    bases: tuple[SplineBasis, ...]
    grid: QuantileGrid
    gamma: np.ndarray  # (L, total_dim), level j=1..L in row j-1
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        total = sum(b.dimension for b in self.bases)
        if self.gamma.shape != (self.grid.n_levels, total):
            raise ConfigurationError(
                f"gamma shape {self.gamma.shape} inconsistent with grid/bases "
                f"({self.grid.n_levels}, {total})"
            )

    @property
    def q(self) -> int:
        return len(self.bases)

    def _slice(self, d: int) -> slice:
        offsets = np.cumsum([0] + [b.dimension for b in self.bases])
        return slice(offsets[d - 1], offsets[d])

    def coeff_values(self, d: int, s: np.ndarray, j: int) -> np.ndarray:
        """alpha_d(s, tau_j) for positive level index j (1-based)."""
        bmat = evaluate_matrix(self.bases[d - 1], np.asarray(s, dtype=float))
        return bmat @ self.gamma[j - 1, self._slice(d)]

    def coeff_surface(self, d: int, s: np.ndarray) -> np.ndarray:
        """(L, len(s)) values of alpha_d on abscissae s for all positive levels."""
        bmat = evaluate_matrix(self.bases[d - 1], np.asarray(s, dtype=float))
        return self.gamma[:, self._slice(d)] @ bmat.T


def design_matrix(cohort: Cohort, bases: Sequence[SplineBasis]) -> np.ndarray:
    """Rows of concatenated inner products (W_i1', ..., W_iq')."""
    if len(bases) != cohort.q:
        raise ConfigurationError(f"expected {cohort.q} bases, got {len(bases)}")
    blocks = []
    for d, basis in enumerate(bases, start=1):
        qmap = quadrature_map(basis, cohort.grid)
        blocks.append(cohort.predictor_values(d) @ qmap)
    return np.hstack(blocks)


def hazard_weight(fitted_quantiles: np.ndarray, y_i: float, grid: QuantileGrid, j: int) -> float:
    """Cumulative weight u_ij from fitted quantiles at levels 0..j-1.

    ``fitted_quantiles[l]`` holds Q(tau_l) for l = 0..j-1 with Q(tau_0) = 0.
    """
    fq = np.asarray(fitted_quantiles, dtype=float)
    if fq.size < j:
        raise ConfigurationError(f"need fitted quantiles for levels 0..{j - 1}")
    ind = y_i >= fq[:j]
    return float(np.sum(ind * grid.h_jumps[:j]))


def objective_value(W, resp, delta, u, b, zeta=None) -> float:
    """Convex per-level objective G at coefficient vector b."""
    z = np.ones(len(resp)) if zeta is None else np.asarray(zeta, dtype=float)
    r = W @ b - resp
    return float(np.sum(z * (delta * np.maximum(r, 0.0) + u * (-r))))


def solve_step(W, resp, delta, u, zeta=None):
    """Minimize G for one level; returns (coefficients, diagnostics dict).

    Solved exactly through the dual of the equivalent weighted-L1 linear
    program.  A big-M pseudo-observation absorbs the linear term so the
    problem stays bounded even on degenerate levels.
    """
    W = np.asarray(W, dtype=float)
    resp = np.asarray(resp, dtype=float)
    delta = np.asarray(delta, dtype=float)
    u = np.asarray(u, dtype=float)
    n, p = W.shape
    z = np.ones(n) if zeta is None else np.asarray(zeta, dtype=float)

    event_w = z * delta / 2.0
    ev = event_w > 0
    if not np.any(ev):
        raise DegenerateDataError("no weighted events at this level; objective unbounded")

    lin = ((z * (u - delta / 2.0))[:, None] * W).sum(axis=0)
    big_m = BIG_M_SCALE * max(1.0, float(np.abs(resp).max()))

    cw = event_w[ev]
    obj = -np.concatenate([resp[ev], [big_m]])
    a_eq = np.column_stack([W[ev].T, lin])
    bounds = np.vstack([np.column_stack([-cw, cw]), [[-1.0, 1.0]]])
    res = linprog(obj, A_eq=a_eq, b_eq=np.zeros(p), bounds=bounds, method="highs-ds")
    if res.status != 0:
        res = linprog(obj, A_eq=a_eq, b_eq=np.zeros(p), bounds=bounds, method="highs")
    if res.status != 0 or res.eqlin is None:
        # near-degenerate instances (e.g. tiny multiplier weights) can stall
        # both simplex variants; interior point with crossover still recovers
        # usable equality marginals
        res = linprog(obj, A_eq=a_eq, b_eq=np.zeros(p), bounds=bounds, method="highs-ipm")
    if res.status != 0 or res.eqlin is None:
        raise FitError(f"level solver failed: status {res.status} ({res.message})")
    b = -np.asarray(res.eqlin.marginals, dtype=float)
    pseudo_active = res.x[-1] < 1.0 - 1e-9
    diag = {
        "objective": objective_value(W, resp, delta, u, b, z),
        "pseudo_active": bool(pseudo_active),
        "n_events": int(np.sum(ev)),
    }
    return b, diag


def _sequential_core(
    W: np.ndarray,
    delta: np.ndarray,
    grid: QuantileGrid,
    responses: Callable[[int], np.ndarray],
    zeta: np.ndarray | None = None,
):
    """Shared recursion over levels j = 1..L.

    ``responses(j)`` returns the level-j response vector (log follow-up for
    the baseline fit, transfer residuals for the debias fit); the same
    vectors drive the at-risk indicators in the cumulative weights.  The
    level-0 indicator is identically 1 by the Q(tau_0) = 0 convention.
    """
    n, p = W.shape
    L = grid.n_levels
    gamma = np.zeros((L, p))
    u = np.zeros(n)
    flagged: list[int] = []
    diags = []
    for j in range(1, L + 1):
        if j == 1:
            u = u + grid.h_jumps[0]
        else:
            ind = responses(j - 1) >= W @ gamma[j - 2]
            u = u + ind * grid.h_jumps[j - 1]
        try:
            gamma[j - 1], diag = solve_step(W, responses(j), delta, u, zeta)
        except (DegenerateDataError, FitError):
            # carry the previous level forward and mark the level unusable;
            # an isolated solver stall should not void the whole recursion
            gamma[j - 1] = gamma[j - 2] if j > 1 else 0.0
            diag = {"objective": np.nan, "pseudo_active": True, "n_events": 0}
        if diag["pseudo_active"] or diag["n_events"] < p:
            flagged.append(j)
        diags.append(diag)
    return gamma, {"flagged_levels": flagged, "levels": diags}


def fit_sequential(
    cohort: Cohort,
    bases: Sequence[SplineBasis],
    grid: QuantileGrid,
    zeta: np.ndarray | None = None,
) -> CoefficientSurface:
    """Fit the full coefficient surface on one cohort, level by level."""
    W = design_matrix(cohort, bases)
    total_dim = W.shape[1]
    if cohort.n < total_dim:
        raise ConfigurationError(
            f"cohort {cohort.label}: n={cohort.n} below total basis dimension {total_dim}"
        )
    delta = cohort.delta.astype(float)
    if not np.any(delta > 0):
        raise DegenerateDataError(f"cohort {cohort.label}: no observed events")
    log_y = np.log(cohort.y)
    gamma, diag = _sequential_core(W, delta, grid, lambda j: log_y, zeta)
    meta = {
        "label": cohort.label,
        "n": cohort.n,
        "censoring_rate": cohort.censoring_rate,
        "flagged_levels": diag["flagged_levels"],
    }
    return CoefficientSurface(bases=tuple(bases), grid=grid, gamma=gamma, meta=meta)


def predict_quantile(fit: CoefficientSurface, predictors, tau: float) -> float:
    """Predicted conditional quantile exp(sum_d <x_d, alpha_d(., tau)>); 0 at tau_0."""
    j = fit.grid.level_index(tau)
    if j == 0:
        return 0.0
    w = np.concatenate(
        [
            x.values @ quadrature_map(basis, x.grid)
            for x, basis in zip(predictors, fit.bases)
        ]
    )
    return float(np.exp(w @ fit.gamma[j - 1]))


def linear_predictor(surface, cohort: Cohort, grid: QuantileGrid) -> np.ndarray:
    """(L, n) matrix of <X_i, alpha(., tau_j)> via dense-grid quadrature.

    Works for any surface exposing ``coeff_surface(d, s) -> (L, len(s))``;
    the surface is evaluated on the cohort's own sampling grid, not through
    its fitting basis.
    """
    s = cohort.grid
    dt = np.diff(s)
    w = np.zeros(s.size)
    w[:-1] += dt / 2.0
    w[1:] += dt / 2.0
    eta = np.zeros((grid.n_levels, cohort.n))
    for d in range(1, cohort.q + 1):
        vals = cohort.predictor_values(d)  # (n, m)
        alpha = surface.coeff_surface(d, s)  # (L, m)
        eta += alpha @ (w[None, :] * vals).T
    return eta


def empirical_loss(surface, eval_cohort: Cohort, grid: QuantileGrid) -> np.ndarray:
    """Per-level empirical loss of a surface on a held-out cohort.

    The cumulative weights are rebuilt sequentially from the same surface,
    mirroring the fitting recursion.
    """
    eta = linear_predictor(surface, eval_cohort, grid)
    log_y = np.log(eval_cohort.y)
    delta = eval_cohort.delta.astype(float)
    n = eval_cohort.n
    L = grid.n_levels
    losses = np.zeros(L)
    u = np.zeros(n)
    for j in range(1, L + 1):
        if j == 1:
            u = u + grid.h_jumps[0]
        else:
            u = u + (log_y >= eta[j - 2]) * grid.h_jumps[j - 1]
        r = eta[j - 1] - log_y
        losses[j - 1] = np.sum(delta * np.maximum(r, 0.0) + u * (-r))
    return losses
