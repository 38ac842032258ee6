"""Similarity weighting, source aggregation, and the debias correction.

Sources contribute through their fitted coefficient surfaces only.  Each
source gets a kernel-transformed weight from the held-out loss difference
against a target half-fit, the weighted average forms the transfer
surface, and a sequential refit on target residuals estimates the
target-minus-source difference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import SplineBasis, make_basis
from .cohort import Cohort, split_half
from .cqr import (
    CoefficientSurface,
    QuantileGrid,
    _sequential_core,
    design_matrix,
    empirical_loss,
    fit_sequential,
    linear_predictor,
)
from .errors import ConfigurationError, DegenerateDataError

__all__ = [
    "SimilarityReport",
    "SourceWeight",
    "DenseSurface",
    "TransferFit",
    "TransferConfig",
    "loss_difference",
    "similarity_weight",
    "hard_threshold_weight",
    "aggregate_sources",
    "debias_fit",
    "transfer_estimate",
    "pooled_fit",
    "default_knot_count",
    "default_eta_knot_count",
    "default_bandwidth",
]

log = logging.getLogger(__name__)

DENSE_POINTS = 201
WEIGHT_MASS_FLOOR = 1e-12


def default_knot_count(n: int) -> int:
    """Interior knots for the baseline fit, ceil(n^(1/5))."""
    return int(math.ceil(n ** 0.2))


def default_eta_knot_count(n: int) -> int:
    """Interior knots for the difference surface, max(0, ceil(n^(1/7)) - 2).

    The target-minus-source difference is assumed far smoother than the
    coefficients themselves (near-parametric), so its basis grows at the
    same slow rate but from a much smaller constant; at moderate n this
    yields a knot-free cubic basis, which is what makes the correction
    fit markedly less noisy than a baseline refit.
    """
    return max(0, int(math.ceil(n ** (1.0 / 7.0))) - 2)


def default_bandwidth(n0: int) -> float:
    return 2.0 * math.log(5.0 * n0)


@dataclass(frozen=True)
class SourceWeight:
    label: str
    n_k: int
    loss_diff: float
    weight: float


@dataclass(frozen=True)
class SimilarityReport:
    sources: tuple[SourceWeight, ...]
    bandwidth: float
    kernel: str
    split_seed: int


@dataclass(frozen=True)
class DenseSurface:
    """Coefficient surfaces tabulated on a shared dense abscissa grid.

    Common representation for weighted source averages whose fitting bases
    may differ; evaluation interpolates linearly between grid points.
    """

    s_grid: np.ndarray  # (n_s,)
    values: np.ndarray  # (q, L, n_s)
    grid: QuantileGrid

    @property
    def q(self) -> int:
        return self.values.shape[0]

    def coeff_values(self, d: int, s: np.ndarray, j: int) -> np.ndarray:
        return np.interp(np.asarray(s, dtype=float), self.s_grid, self.values[d - 1, j - 1])

    def coeff_surface(self, d: int, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.s_grid, s, side="right") - 1, 0, self.s_grid.size - 2)
        frac = (s - self.s_grid[idx]) / (self.s_grid[idx + 1] - self.s_grid[idx])
        vals = self.values[d - 1]
        return vals[:, idx] * (1.0 - frac) + vals[:, idx + 1] * frac


def _tabulate(surface, q: int, s_grid: np.ndarray, grid: QuantileGrid) -> np.ndarray:
    return np.stack([surface.coeff_surface(d, s_grid) for d in range(1, q + 1)])


def loss_difference(
    target_fit: CoefficientSurface,
    source_fit,
    eval_subset: Cohort,
    grid: QuantileGrid,
) -> float:
    """Average over levels and subjects of (source loss - target loss).

    Per-subject scaling keeps the statistic on a fixed scale as the
    held-out half grows, so a bandwidth of order log(n) separates
    matching sources (difference near zero) from shifted ones.
    """
    loss_src = empirical_loss(source_fit, eval_subset, grid)
    loss_tgt = empirical_loss(target_fit, eval_subset, grid)
    return float(np.mean(loss_src - loss_tgt)) / eval_subset.n


def similarity_weight(D: float, h: float) -> float:
    """Gaussian-kernel weight (1/h) * K(D/h), K the standard normal density."""
    if h <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {h}")
    return float(np.exp(-0.5 * (D / h) ** 2) / (h * math.sqrt(2.0 * math.pi)))


def hard_threshold_weight(D: float, h: float) -> float:
    """Uniform-kernel weight 0.5 * I(|D| <= h)."""
    if h <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {h}")
    return 0.5 if abs(D) <= h else 0.0


_KERNELS = {"gaussian": similarity_weight, "uniform": hard_threshold_weight}


def aggregate_sources(
    source_fits: Sequence,
    report: SimilarityReport,
    s_grid: np.ndarray,
    grid: QuantileGrid,
    q: int,
    normalization: str = "similarity",
) -> tuple[DenseSurface, bool]:
    """Sample-size-and-similarity weighted average of source surfaces.

    With ``normalization="similarity"`` the weighted sum is divided by
    the weight mass sum(n_k * w_k), producing a convex combination of
    the source surfaces.  With ``"size"`` it is divided by sum(n_k),
    the conventional hard-threshold recipe: excluded or downweighted
    sources shrink the aggregate toward zero instead of renormalizing
    the remainder.

    Returns (surface, fallback); when the total weight mass floors, the
    surface is identically zero and fallback is True.
    """
    if len(source_fits) == 0:
        raise ConfigurationError("at least one source fit is required")
    if normalization not in ("similarity", "size"):
        raise ConfigurationError(f"unknown normalization {normalization!r}")
    n_k = np.array([sw.n_k for sw in report.sources], dtype=float)
    w = np.array([sw.weight for sw in report.sources], dtype=float)
    mass = float(np.sum(n_k * w))
    if mass < WEIGHT_MASS_FLOOR * float(np.sum(n_k)):
        log.warning("source weight mass %.3g below floor; falling back to target-only", mass)
        zero = np.zeros((q, grid.n_levels, s_grid.size))
        return DenseSurface(s_grid=s_grid, values=zero, grid=grid), True
    denom = mass if normalization == "similarity" else float(np.sum(n_k))
    stacked = np.stack([_tabulate(fit, q, s_grid, grid) for fit in source_fits])
    values = np.tensordot(n_k * w, stacked, axes=1) / denom
    return DenseSurface(s_grid=s_grid, values=values, grid=grid), False


def debias_fit(
    target: Cohort,
    transfer: DenseSurface,
    grid: QuantileGrid,
    eta_bases: Sequence[SplineBasis],
    zeta: np.ndarray | None = None,
) -> CoefficientSurface:
    """Sequential refit on transfer residuals, estimating the difference surface.

    With a zero transfer surface this reproduces the target-only baseline
    fit on the eta-basis.  Optional multipliers ``zeta`` perturb every
    subject's contribution (resampling replicates).
    """
    W = design_matrix(target, eta_bases)
    if target.n < W.shape[1]:
        raise ConfigurationError(
            f"target n={target.n} below eta basis dimension {W.shape[1]}"
        )
    delta = target.delta.astype(float)
    if not np.any(delta > 0):
        raise DegenerateDataError(f"cohort {target.label}: no observed events")
    eta_lin = linear_predictor(transfer, target, grid)  # (L, n)
    residuals = np.log(target.y)[None, :] - eta_lin
    gamma, diag = _sequential_core(W, delta, grid, lambda j: residuals[j - 1], zeta)
    low_events = [
        j for j, d in enumerate(diag["levels"], start=1) if d["n_events"] < W.shape[1]
    ]
    meta = {
        "label": f"{target.label}/debias",
        "n": target.n,
        "flagged_levels": diag["flagged_levels"],
        "low_event_levels": low_events,
    }
    return CoefficientSurface(bases=tuple(eta_bases), grid=grid, gamma=gamma, meta=meta)


@dataclass(frozen=True)
class TransferConfig:
    grid: QuantileGrid
    bandwidth: float | None = None  # None -> 2 log(5 n0)
    kernel: str = "gaussian"
    knots: int | None = None  # None -> ceil(n^(1/5)) of the fitting cohort
    eta_knots: int | None = None  # None -> ceil(n0^(1/7))
    dense_points: int = DENSE_POINTS
    seed: int = 0
    normalization: str = "auto"  # "auto": similarity kernel -> convex, uniform -> size
    debias: bool = True  # False: stop after the transfer step (select-and-average)

    def __post_init__(self) -> None:
        if self.kernel not in _KERNELS:
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.normalization not in ("auto", "similarity", "size"):
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")

    @property
    def resolved_normalization(self) -> str:
        if self.normalization != "auto":
            return self.normalization
        return "similarity" if self.kernel == "gaussian" else "size"


@dataclass(frozen=True)
class TransferFit:
    transfer: DenseSurface
    debias: CoefficientSurface | None  # None when the refit was disabled
    final: DenseSurface
    report: SimilarityReport
    residuals: np.ndarray  # (L, n0) transfer residuals log y_i - <X_i, transfer(tau_j)>
    fallback: bool


def _target_bases(cohort: Cohort, knots: int | None) -> list[SplineBasis]:
    domain = (float(cohort.grid[0]), float(cohort.grid[-1]))
    m = knots if knots is not None else default_knot_count(cohort.n)
    return [make_basis(4, m, domain) for _ in range(cohort.q)]


def transfer_estimate(
    target: Cohort,
    source_fits: Sequence[CoefficientSurface],
    config: TransferConfig,
) -> TransferFit:
    """Full pipeline: split, half-fit, weights, aggregation, debias."""
    if len(source_fits) == 0:
        raise ConfigurationError("at least one source estimator is required")
    domain = (float(target.grid[0]), float(target.grid[-1]))
    for fit in source_fits:
        for b in fit.bases:
            if not np.allclose(b.domain, domain):
                raise ConfigurationError(
                    f"source {fit.meta.get('label', '?')!r} domain {b.domain} "
                    f"differs from target domain {domain}"
                )
        if fit.q != target.q:
            raise ConfigurationError("source predictor count differs from target")

    grid = config.grid
    half_fit_cohort, eval_half = split_half(target, config.seed)
    half_bases = _target_bases(half_fit_cohort, config.knots)
    target_half_fit = fit_sequential(half_fit_cohort, half_bases, grid)

    h = config.bandwidth if config.bandwidth is not None else default_bandwidth(target.n)
    kernel = _KERNELS[config.kernel]
    entries = []
    for fit in source_fits:
        d_k = loss_difference(target_half_fit, fit, eval_half, grid)
        entries.append(
            SourceWeight(
                label=str(fit.meta.get("label", "")),
                n_k=int(fit.meta.get("n", 0)),
                loss_diff=d_k,
                weight=kernel(d_k, h),
            )
        )
    report = SimilarityReport(
        sources=tuple(entries), bandwidth=h, kernel=config.kernel, split_seed=config.seed
    )

    s_grid = np.linspace(domain[0], domain[1], config.dense_points)
    transfer_surface, fallback = aggregate_sources(
        source_fits, report, s_grid, grid, target.q,
        normalization=config.resolved_normalization,
    )

    if config.debias:
        eta_m = (
            config.eta_knots if config.eta_knots is not None else default_eta_knot_count(target.n)
        )
        eta_bases = [make_basis(4, eta_m, domain) for _ in range(target.q)]
        debias = debias_fit(target, transfer_surface, grid, eta_bases)
        final_values = transfer_surface.values + _tabulate(debias, target.q, s_grid, grid)
    else:
        debias = None
        final_values = transfer_surface.values
    final = DenseSurface(s_grid=s_grid, values=final_values, grid=grid)
    residuals = np.log(target.y)[None, :] - linear_predictor(transfer_surface, target, grid)
    return TransferFit(
        transfer=transfer_surface,
        debias=debias,
        final=final,
        report=report,
        residuals=residuals,
        fallback=fallback,
    )


def pooled_fit(
    cohorts: Sequence[Cohort],
    grid: QuantileGrid,
    knots: int | None = None,
) -> CoefficientSurface:
    """Comparator: concatenate target and source rows and fit the baseline."""
    if len(cohorts) == 0:
        raise ConfigurationError("pooled fit needs at least one cohort")
    q = cohorts[0].q
    if any(c.q != q for c in cohorts):
        raise ConfigurationError("cohorts disagree on predictor count")
    subjects = tuple(s for c in cohorts for s in c.subjects)
    pooled = Cohort(subjects=subjects, q=q, label="pooled")
    bases = _target_bases(pooled, knots)
    return fit_sequential(pooled, bases, grid)
