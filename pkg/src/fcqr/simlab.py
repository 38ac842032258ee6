"""Monte Carlo laboratory: scenario generation, comparator methods, metrics.

Survival times follow a location-scale construction on two functional
predictors: log T = <X1, psi11> + <X2, psi2> + <X1, psi12> * eps, so the
tau-th log-quantile coefficient of X1 is psi11 + psi12 * F_eps^{-1}(tau).
Four source scenarios perturb the generating surfaces by known shifts and
scalings of increasing severity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import norm

from .basis import SampledFunction, make_basis
from .cohort import Cohort, Subject
from .cqr import QuantileGrid, build_grid, empirical_loss, fit_sequential
from .errors import CalibrationError, ConfigurationError
from .transfer import (
    TransferConfig,
    default_knot_count,
    pooled_fit,
    transfer_estimate,
)

__all__ = [
    "ScenarioConfig",
    "TrueSurfaces",
    "true_coefficients",
    "gen_predictors",
    "gen_survival",
    "calibrate_censoring",
    "apply_censoring",
    "make_cohort",
    "rmse",
    "prediction_error",
    "run_scenario",
    "ScenarioResult",
]

log = logging.getLogger(__name__)

N_TERMS = 20  # series length for both predictor processes
GRID_POINTS = 101
METHODS = ("Target", "Pooled", "Trans_HT", "SITL")

_S = np.linspace(0.0, 1.0, GRID_POINTS)
_KS = np.arange(1, N_TERMS + 1)
_XI = (-1.0) ** (_KS + 1) / _KS
# phi_1 = 1, phi_k = sqrt(2) cos((k-1) pi s) for k > 1
_PHI = np.where(
    (_KS[:, None] == 1), 1.0, math.sqrt(2.0) * np.cos((_KS[:, None] - 1) * math.pi * _S[None, :])
)
_X2_BASIS = make_basis(4, N_TERMS - 4, (0.0, 1.0))


def _psi11(s: np.ndarray) -> np.ndarray:
    k = _KS[:, None]
    terms = ((-1.0) ** k / k**2) * (math.sqrt(2.0) * np.cos((k - 1) * math.pi * np.asarray(s)[None, :]))
    return 4.0 * terms.sum(axis=0)


def _alpha2(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return 4.0 * (np.cos(3 * math.pi * s) + np.sin(3 * math.pi * s))


@dataclass(frozen=True)
class TrueSurfaces:
    """Closed-form generating and coefficient surfaces for one scenario case."""

    case: int
    sigma_eps: float

    def _check(self) -> None:
        if self.case not in (1, 2, 3, 4):
            raise ConfigurationError(f"case must be 1..4, got {self.case}")

    def __post_init__(self) -> None:
        self._check()

    def f_eps_inv(self, tau: float) -> float:
        return float(norm.ppf(tau)) * self.sigma_eps

    # generating surfaces ------------------------------------------------
    def psi11(self, s: np.ndarray, source: bool = False) -> np.ndarray:
        base = _psi11(s)
        if source and self.case == 4:
            return 3.0 * base
        return base

    def psi12(self, s: np.ndarray) -> np.ndarray:
        return np.ones_like(np.asarray(s, dtype=float))

    def psi2(self, s: np.ndarray, source: bool = False) -> np.ndarray:
        base = _alpha2(s)
        if not source or self.case == 1:
            return base
        s = np.asarray(s, dtype=float)
        if self.case == 2:
            return base + 10.0 * np.exp(s)
        if self.case == 3:
            return 3.0 * base
        return 3.0 * base + 10.0 * np.exp(s)

    # quantile coefficient surfaces --------------------------------------
    def alpha(self, d: int, s: np.ndarray, tau: float, source: bool = False) -> np.ndarray:
        if d == 1:
            return self.psi11(s, source) + self.psi12(s) * self.f_eps_inv(tau)
        if d == 2:
            return self.psi2(s, source)
        raise ConfigurationError(f"predictor index must be 1 or 2, got {d}")


def true_coefficients(case: int, sigma_eps: float = math.sqrt(0.2)) -> TrueSurfaces:
    return TrueSurfaces(case=case, sigma_eps=sigma_eps)


def gen_predictors(n: int, seed, sigma_zeta2: float = 1.0):
    """Sampled (X1, X2) paths on the shared 101-point grid over [0, 1].

    X1 is the absolute value of a cosine series with uniform scores;
    X2 is a Gaussian random combination of 20 cubic B-splines.
    """
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    scores = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(n, N_TERMS))
    x1 = np.abs((scores * _XI[None, :]) @ _PHI)
    zeta = rng.normal(0.0, math.sqrt(sigma_zeta2), size=(n, N_TERMS))
    from .basis import evaluate_matrix

    bmat = evaluate_matrix(_X2_BASIS, _S)  # (101, 20)
    x2 = zeta @ bmat.T
    return x1, x2


def _trapz_weights(s: np.ndarray) -> np.ndarray:
    w = np.zeros(s.size)
    dt = np.diff(s)
    w[:-1] += dt / 2.0
    w[1:] += dt / 2.0
    return w


def gen_survival(
    x1: np.ndarray,
    x2: np.ndarray,
    surfaces: TrueSurfaces,
    seed,
    source: bool = False,
) -> np.ndarray:
    """Survival times from the location-scale model; integrals by trapezoid."""
    rng = np.random.default_rng(seed)
    w = _trapz_weights(_S)
    loc = x1 @ (w * surfaces.psi11(_S, source)) + x2 @ (w * surfaces.psi2(_S, source))
    scale = x1 @ (w * surfaces.psi12(_S))
    eps = rng.normal(0.0, surfaces.sigma_eps, size=x1.shape[0])
    return np.exp(loc + scale * eps)


def calibrate_censoring(pilot_t: np.ndarray, target_rate: float) -> float:
    """Upper bound of the uniform censoring law matching the target rate.

    The expected censoring rate for C ~ U(0, c_max) is
    mean(min(T_i / c_max, 1)) over the pilot sample, monotone in c_max;
    solved by bisection to +/- 1%.
    """
    if not 0 < target_rate < 1:
        raise ConfigurationError(f"target rate must be in (0, 1), got {target_rate}")
    pilot_t = np.asarray(pilot_t, dtype=float)

    def rate(c_max: float) -> float:
        return float(np.mean(np.minimum(pilot_t / c_max, 1.0)))

    lo, hi = float(np.min(pilot_t)) * 1e-6, float(np.max(pilot_t)) * 1e6
    if not (rate(hi) < target_rate < rate(lo)):
        raise CalibrationError(
            f"target rate {target_rate} unreachable with uniform censoring on this pilot"
        )
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if rate(mid) > target_rate:
            lo = mid
        else:
            hi = mid
        if abs(rate(mid) - target_rate) < 1e-4:
            return mid
    achieved = rate(math.sqrt(lo * hi))
    if abs(achieved - target_rate) > 0.01:
        raise CalibrationError(
            f"censoring calibration did not converge: achieved {achieved:.4f} "
            f"for target {target_rate:.4f}"
        )
    return math.sqrt(lo * hi)


def apply_censoring(t: np.ndarray, target_rate: float, seed, c_max: float | None = None):
    """(Y, delta) under independent uniform censoring; rate 0 leaves data uncensored.

    With ``c_max`` omitted, the bound is calibrated on ``t`` itself (useful
    when ``t`` is a large pilot sample).
    """
    t = np.asarray(t, dtype=float)
    if target_rate == 0:
        return t.copy(), np.ones(t.size, dtype=int)
    if c_max is None:
        c_max = calibrate_censoring(t, target_rate)
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.0, c_max, size=t.size)
    delta = (t <= c).astype(int)
    return np.minimum(t, c), delta


def make_cohort(
    n: int,
    surfaces: TrueSurfaces,
    censor_rate: float,
    seed,
    label: str,
    source: bool = False,
    sigma_zeta2: float = 1.0,
    c_max: float | None = None,
) -> Cohort:
    seq = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_pred, s_surv, s_cens = seq.spawn(3)
    x1, x2 = gen_predictors(n, s_pred, sigma_zeta2)
    t = gen_survival(x1, x2, surfaces, s_surv, source)
    y, delta = apply_censoring(t, censor_rate, s_cens, c_max)
    subjects = tuple(
        Subject(
            id=f"{label}-{i}",
            y=float(y[i]),
            delta=int(delta[i]),
            predictors=(
                SampledFunction(grid=_S, values=x1[i]),
                SampledFunction(grid=_S, values=x2[i]),
            ),
        )
        for i in range(n)
    )
    return Cohort(subjects=subjects, q=2, label=label)


def rmse(surface, truth: TrueSurfaces, d: int, tau: float, grid: QuantileGrid) -> float:
    """Root integrated squared error of a fitted coefficient surface at one level."""
    j = grid.level_index(tau)
    s = np.linspace(0.0, 1.0, 201)
    est = np.asarray(surface.coeff_values(d, s, j))
    err2 = (est - truth.alpha(d, s, tau)) ** 2
    return float(math.sqrt(np.trapezoid(err2, s)))


def prediction_error(surface, test_cohort: Cohort, grid: QuantileGrid) -> float:
    """Mean over levels of the empirical loss on the test set, per subject."""
    losses = empirical_loss(surface, test_cohort, grid)
    return float(np.mean(losses) / test_cohort.n)


@dataclass(frozen=True)
class ScenarioConfig:
    n0: int = 100
    source_sizes: tuple[int, ...] = (500, 1000, 500, 1000)
    case: int = 2
    censor_rate: float = 0.1
    tau_max: float = 0.8
    tau_step: float = 0.01
    metric_taus: tuple[float, ...] = (0.3, 0.5, 0.7)
    sigma_zeta2: float = 1.0  # score variance of the second predictor
    sigma_eps2: float = 0.2
    replications: int = 20
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    knots: int | None = None
    eta_knots: int | None = None
    bandwidth: float | None = None
    test_n: int = 400

    def __post_init__(self) -> None:
        if self.case not in (1, 2, 3, 4):
            raise ConfigurationError(f"case must be in 1..4, got {self.case}")
        if self.replications < 1:
            raise ConfigurationError("need at least one replication")
        if not 0 <= self.censor_rate < 1:
            raise ConfigurationError(f"censor rate must be in [0, 1), got {self.censor_rate}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigurationError(f"unknown methods {sorted(unknown)}")
        if len(self.source_sizes) == 0 and set(self.methods) - {"Target"}:
            raise ConfigurationError("source cohorts required for transfer/pooled methods")

    @property
    def k(self) -> int:
        return len(self.source_sizes)


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    records: pd.DataFrame  # one row per (replication, method) with metric columns
    summary: pd.DataFrame  # mean and sd per method and metric
    failures: list
    weight_records: pd.DataFrame  # per (replication, source): loss diff and weight


def _pilot_cmax(surfaces: TrueSurfaces, censor_rate: float, sigma_zeta2: float,
                seed, source: bool) -> float | None:
    if censor_rate == 0:
        return None
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_pred, s_surv = seq.spawn(2)
    x1, x2 = gen_predictors(100_000, s_pred, sigma_zeta2)
    t = gen_survival(x1, x2, surfaces, s_surv, source)
    return calibrate_censoring(t, censor_rate)


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    grid = build_grid(config.tau_max, config.tau_step)
    surfaces = true_coefficients(config.case, math.sqrt(config.sigma_eps2))
    root = np.random.SeedSequence(config.seed)
    pilot_seed, *rep_seeds = root.spawn(config.replications + 1)

    c_max_target = _pilot_cmax(
        surfaces, config.censor_rate, config.sigma_zeta2, pilot_seed, source=False
    )
    c_max_source = _pilot_cmax(
        surfaces, config.censor_rate, config.sigma_zeta2, pilot_seed, source=True
    )

    needs_transfer = bool({"SITL", "Trans_HT"} & set(config.methods))
    needs_sources = needs_transfer or "Pooled" in config.methods

    records = []
    weight_rows = []
    failures = []
    for rep, seq in enumerate(rep_seeds):
        s_target, s_test, s_split, *s_sources = seq.spawn(2 + 1 + config.k)
        try:
            target = make_cohort(
                config.n0, surfaces, config.censor_rate, s_target,
                label=f"target-rep{rep}", sigma_zeta2=config.sigma_zeta2,
                c_max=c_max_target,
            )
            test = make_cohort(
                config.test_n, surfaces, config.censor_rate, s_test,
                label=f"test-rep{rep}", sigma_zeta2=config.sigma_zeta2,
                c_max=c_max_target,
            )
            sources = []
            source_fits = []
            if needs_sources:
                for k, (n_k, s_k) in enumerate(zip(config.source_sizes, s_sources), start=1):
                    src = make_cohort(
                        n_k, surfaces, config.censor_rate, s_k,
                        label=f"source-{k}", source=True,
                        sigma_zeta2=config.sigma_zeta2, c_max=c_max_source,
                    )
                    sources.append(src)
                if needs_transfer:
                    for src in sources:
                        m = config.knots if config.knots is not None else default_knot_count(src.n)
                        bases = [make_basis(4, m, (0.0, 1.0)) for _ in range(src.q)]
                        source_fits.append(fit_sequential(src, bases, grid))
        except Exception as exc:  # data generation failure kills the whole replication
            failures.append({"replication": rep, "method": "*", "error": repr(exc)})
            continue

        split_seed = int(s_split.generate_state(1)[0] % (2**31))
        surfaces_by_method = {}
        for method in config.methods:
            try:
                if method == "Target":
                    m = config.knots if config.knots is not None else default_knot_count(target.n)
                    bases = [make_basis(4, m, (0.0, 1.0)) for _ in range(target.q)]
                    surfaces_by_method[method] = fit_sequential(target, bases, grid)
                elif method == "Pooled":
                    surfaces_by_method[method] = pooled_fit(
                        [target, *sources], grid, knots=config.knots
                    )
                else:
                    kernel = "gaussian" if method == "SITL" else "uniform"
                    tc = TransferConfig(
                        grid=grid,
                        bandwidth=config.bandwidth,
                        kernel=kernel,
                        knots=config.knots,
                        eta_knots=config.eta_knots,
                        seed=split_seed,
                        debias=(method == "SITL"),
                    )
                    fit = transfer_estimate(target, source_fits, tc)
                    surfaces_by_method[method] = fit.final
                    if method == "SITL":
                        for sw in fit.report.sources:
                            weight_rows.append(
                                {
                                    "replication": rep,
                                    "source": sw.label,
                                    "n_k": sw.n_k,
                                    "loss_diff": sw.loss_diff,
                                    "weight": sw.weight,
                                }
                            )
            except Exception as exc:
                failures.append({"replication": rep, "method": method, "error": repr(exc)})

        for method, surf in surfaces_by_method.items():
            row = {"replication": rep, "method": method}
            for tau in config.metric_taus:
                for d in (1, 2):
                    row[f"rmse_a{d}_tau{tau:g}"] = rmse(surf, surfaces, d, tau, grid)
            row["prediction_error"] = prediction_error(surf, test, grid)
            records.append(row)

    if failures:
        log.warning("%d replication failures recorded", len(failures))
    records_df = pd.DataFrame(records)
    if records_df.empty:
        raise CalibrationError("all replications failed; no results to aggregate")
    metric_cols = [c for c in records_df.columns if c not in ("replication", "method")]
    summary = records_df.groupby("method")[metric_cols].agg(["mean", "std"])
    summary = summary.reindex([m for m in config.methods if m in summary.index])
    return ScenarioResult(
        config=config,
        records=records_df,
        summary=summary,
        failures=failures,
        weight_records=pd.DataFrame(weight_rows),
    )
