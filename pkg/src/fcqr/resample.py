"""Multiplier-resampling confidence intervals for the transfer estimator.

Each replicate re-solves only the debias step with i.i.d. positive
multipliers of mean 1 and variance 1; the transfer surface is held fixed.
Pointwise bands are the point estimate plus/minus a normal quantile times
the replicate standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm

from .basis import SplineBasis
from .cohort import Cohort
from .cqr import CoefficientSurface, QuantileGrid
from .errors import ConfigurationError, InsufficientDataError
from .transfer import DenseSurface, TransferFit, _tabulate, debias_fit

__all__ = [
    "PerturbationDraw",
    "CiBand",
    "draw_perturbations",
    "perturbed_debias",
    "replicate_surfaces",
    "build_ci",
]


@dataclass(frozen=True)
class PerturbationDraw:
    zeta: np.ndarray
    distribution: str
    seed: int


def draw_perturbations(n: int, seed: int, distribution: str = "exponential") -> PerturbationDraw:
    """i.i.d. nonnegative multipliers with mean 1 and variance 1."""
    if n < 1:
        raise ConfigurationError(f"need n >= 1 draws, got {n}")
    if distribution != "exponential":
        raise ConfigurationError(f"unsupported perturbation distribution {distribution!r}")
    rng = np.random.default_rng(seed)
    return PerturbationDraw(zeta=rng.exponential(1.0, size=n), distribution=distribution, seed=seed)


def perturbed_debias(
    target: Cohort,
    transfer: DenseSurface,
    grid: QuantileGrid,
    eta_bases: Sequence[SplineBasis],
    zeta: np.ndarray,
) -> CoefficientSurface:
    """Debias refit with every subject's contribution multiplied by zeta_i."""
    return debias_fit(target, transfer, grid, eta_bases, zeta=np.asarray(zeta, dtype=float))


def replicate_surfaces(
    fit: TransferFit,
    target: Cohort,
    n_replicates: int,
    seed: int,
) -> list[DenseSurface]:
    """Final surfaces from ``n_replicates`` perturbed debias refits.

    Replicate b uses seed ``seed + b`` so results do not depend on
    scheduling order.
    """
    if n_replicates < 2:
        raise InsufficientDataError(f"need at least 2 replicates, got {n_replicates}")
    if fit.debias is None:
        raise ConfigurationError(
            "resampling requires a fit whose correction refit was enabled"
        )
    grid = fit.transfer.grid
    surfaces = []
    for b in range(n_replicates):
        draw = draw_perturbations(target.n, seed + b)
        deb = perturbed_debias(target, fit.transfer, grid, fit.debias.bases, draw.zeta)
        values = fit.transfer.values + _tabulate(deb, target.q, fit.transfer.s_grid, grid)
        surfaces.append(DenseSurface(s_grid=fit.transfer.s_grid, values=values, grid=grid))
    return surfaces


@dataclass(frozen=True)
class CiBand:
    table: pd.DataFrame  # columns: predictor, s, tau, estimate, sd, lower, upper
    level: float


def build_ci(
    point_surface,
    replicates: Sequence,
    a: float,
    query_s: Sequence[float],
    taus: Sequence[float],
    grid: QuantileGrid,
    q: int,
) -> CiBand:
    """Pointwise bands: estimate +/- z_{a/2} * replicate SD at each query point."""
    if len(replicates) < 2:
        raise InsufficientDataError(f"need at least 2 replicates, got {len(replicates)}")
    if not 0 < a < 1:
        raise ConfigurationError(f"alpha must be in (0, 1), got {a}")
    z = float(norm.ppf(1.0 - a / 2.0))
    s_arr = np.asarray(query_s, dtype=float)
    rows = []
    for tau in taus:
        j = grid.level_index(tau)
        if j == 0:
            raise ConfigurationError("confidence bands are undefined at tau_0")
        for d in range(1, q + 1):
            point = np.asarray(point_surface.coeff_values(d, s_arr, j))
            rep = np.stack([r.coeff_values(d, s_arr, j) for r in replicates])
            sd = rep.std(axis=0, ddof=1)
            for s_val, pt, sd_val in zip(s_arr, point, sd):
                rows.append((d, s_val, tau, pt, sd_val, pt - z * sd_val, pt + z * sd_val))
    table = pd.DataFrame(
        rows, columns=["predictor", "s", "tau", "estimate", "sd", "lower", "upper"]
    )
    return CiBand(table=table, level=1.0 - a)
