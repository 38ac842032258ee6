"""Multiplier resampling and pointwise confidence bands."""

import numpy as np
import pytest
from scipy.stats import norm

from fcqr.basis import make_basis
from fcqr.cqr import build_grid, fit_sequential
from fcqr.errors import ConfigurationError, InsufficientDataError
from fcqr.resample import (
    build_ci,
    draw_perturbations,
    perturbed_debias,
    replicate_surfaces,
)
from fcqr.transfer import TransferConfig, transfer_estimate

from conftest import synth_cohort


def test_perturbations_mean_one_variance_one():
    draw = draw_perturbations(20000, seed=9)
    assert draw.zeta.shape == (20000,)
    assert np.all(draw.zeta >= 0)
    assert draw.zeta.mean() == pytest.approx(1.0, abs=0.03)
    assert draw.zeta.var() == pytest.approx(1.0, abs=0.06)


def test_perturbations_deterministic_and_validated():
    a = draw_perturbations(50, seed=3)
    b = draw_perturbations(50, seed=3)
    assert np.array_equal(a.zeta, b.zeta)
    assert not np.array_equal(a.zeta, draw_perturbations(50, seed=4).zeta)
    with pytest.raises(ConfigurationError):
        draw_perturbations(0, seed=0)
    with pytest.raises(ConfigurationError):
        draw_perturbations(10, seed=0, distribution="rademacher")


@pytest.fixture(scope="module")
def tiny_transfer():
    grid = build_grid(0.5, 0.1)
    target = synth_cohort(60, seed=13, censor=0.1)
    bases = [make_basis(4, 2, (0.0, 1.0))]
    src = fit_sequential(synth_cohort(150, seed=17, censor=0.1, label="src"), bases, grid)
    fit = transfer_estimate(target, [src], TransferConfig(grid=grid, seed=2))
    return grid, target, fit


def test_unit_multipliers_reproduce_point_fit(tiny_transfer):
    grid, target, fit = tiny_transfer
    deb = perturbed_debias(
        target, fit.transfer, grid, fit.debias.bases, np.ones(target.n)
    )
    assert np.allclose(deb.gamma, fit.debias.gamma, atol=1e-8)


def test_replicates_deterministic_and_distinct(tiny_transfer):
    grid, target, fit = tiny_transfer
    reps_a = replicate_surfaces(fit, target, 3, seed=100)
    reps_b = replicate_surfaces(fit, target, 3, seed=100)
    for ra, rb in zip(reps_a, reps_b):
        assert np.array_equal(ra.values, rb.values)
    # different replicates differ from one another
    assert not np.allclose(reps_a[0].values, reps_a[1].values)


def test_replicate_count_validated(tiny_transfer):
    grid, target, fit = tiny_transfer
    with pytest.raises(InsufficientDataError):
        replicate_surfaces(fit, target, 1, seed=0)


def test_resampling_requires_correction_refit(tiny_transfer):
    grid, target, _ = tiny_transfer
    bases = [make_basis(4, 2, (0.0, 1.0))]
    src = fit_sequential(synth_cohort(150, seed=17, censor=0.1, label="src"), bases, grid)
    no_refit = transfer_estimate(
        target, [src], TransferConfig(grid=grid, seed=2, kernel="uniform", debias=False)
    )
    with pytest.raises(ConfigurationError):
        replicate_surfaces(no_refit, target, 5, seed=0)


def test_ci_band_structure_and_width(tiny_transfer):
    grid, target, fit = tiny_transfer
    reps = replicate_surfaces(fit, target, 25, seed=7)
    band = build_ci(fit.final, reps, 0.05, [0.25, 0.75], [0.3], grid, target.q)
    assert band.level == pytest.approx(0.95)
    assert list(band.table.columns) == [
        "predictor", "s", "tau", "estimate", "sd", "lower", "upper"
    ]
    assert len(band.table) == 2  # one predictor, two query points, one level
    z = norm.ppf(0.975)
    row = band.table.iloc[0]
    assert row["upper"] - row["lower"] == pytest.approx(2 * z * row["sd"])
    assert row["lower"] <= row["estimate"] <= row["upper"]
    # SD matches the ddof=1 sample SD of the replicate evaluations
    j = grid.level_index(0.3)
    rep_vals = np.stack([r.coeff_values(1, np.array([0.25]), j) for r in reps])[:, 0]
    assert row["sd"] == pytest.approx(rep_vals.std(ddof=1))


def test_ci_validation(tiny_transfer):
    grid, target, fit = tiny_transfer
    reps = replicate_surfaces(fit, target, 3, seed=7)
    with pytest.raises(ConfigurationError):
        build_ci(fit.final, reps, 0.05, [0.5], [0.0], grid, target.q)  # tau_0
    with pytest.raises(ConfigurationError):
        build_ci(fit.final, reps, 1.5, [0.5], [0.3], grid, target.q)
    with pytest.raises(InsufficientDataError):
        build_ci(fit.final, reps[:1], 0.05, [0.5], [0.3], grid, target.q)
