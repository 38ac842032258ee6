"""Shared fixtures: small synthetic cohorts and coarse quantile grids."""

import numpy as np
import pytest

from fcqr.basis import SampledFunction
from fcqr.cohort import Cohort, Subject
from fcqr.cqr import build_grid


def synth_cohort(n, seed, q=1, censor=0.0, m=41, label="synth", shift=0.0,
                 domain=(0.0, 1.0)):
    """Small cohort with smooth random predictors and log-linear survival.

    log T_i = 1.5 * mean(x_i1) (+ 0.8 * mean(x_i2)) + 0.5 * eps_i + shift,
    with optional uniform censoring.  Cheap enough for property tests.
    """
    rng = np.random.default_rng(seed)
    s = np.linspace(domain[0], domain[1], m)
    subjects = []
    for i in range(n):
        preds = []
        acc = 0.0
        for d, slope in zip(range(q), (1.5, 0.8)):
            a, b, c = rng.normal(size=3)
            vals = a + b * s + c * np.sin(np.pi * s)
            preds.append(SampledFunction(grid=s, values=vals))
            acc += slope * np.trapezoid(vals, s)
        t = float(np.exp(acc + shift + 0.5 * rng.normal()))
        if censor > 0 and rng.uniform() < censor:
            y, delta = t * rng.uniform(0.3, 1.0), 0
        else:
            y, delta = t, 1
        subjects.append(Subject(id=f"s{i}", y=y, delta=delta, predictors=tuple(preds)))
    return Cohort(subjects=tuple(subjects), q=q, label=label)


@pytest.fixture(scope="session")
def coarse_grid():
    return build_grid(0.6, 0.05)


@pytest.fixture(scope="session")
def small_cohort():
    return synth_cohort(60, seed=11, censor=0.15)
