"""Censored survival cohorts with functional predictors: data model and CSV ingestion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import IngestionError, InsufficientDataError

__all__ = ["Subject", "Cohort", "load_cohort", "write_cohort", "split_half"]

log = logging.getLogger(__name__)

from .basis import SampledFunction


@dataclass(frozen=True)
class Subject:
    id: str
    y: float
    delta: int
    predictors: tuple[SampledFunction, ...]

    def __post_init__(self) -> None:
        if not self.y > 0:
            raise IngestionError(f"subject {self.id}: follow-up time must be positive, got {self.y}")
        if self.delta not in (0, 1):
            raise IngestionError(f"subject {self.id}: delta must be 0 or 1, got {self.delta}")


@dataclass(frozen=True)
class Cohort:
    subjects: tuple[Subject, ...]
    q: int
    label: str = "cohort"

    def __post_init__(self) -> None:
        grid = None
        for sub in self.subjects:
            if len(sub.predictors) != self.q:
                raise IngestionError(
                    f"subject {sub.id}: expected {self.q} predictors, got {len(sub.predictors)}"
                )
            for pred in sub.predictors:
                if grid is None:
                    grid = pred.grid
                elif pred.grid.shape != grid.shape or not np.allclose(pred.grid, grid):
                    raise IngestionError(
                        f"subject {sub.id}: inconsistent sampling grid within cohort"
                    )

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def y(self) -> np.ndarray:
        return np.array([s.y for s in self.subjects])

    @property
    def delta(self) -> np.ndarray:
        return np.array([s.delta for s in self.subjects])

    @property
    def grid(self) -> np.ndarray:
        return self.subjects[0].predictors[0].grid

    def predictor_values(self, d: int) -> np.ndarray:
        """(n, m) matrix of sampled values for predictor d (1-based)."""
        return np.stack([s.predictors[d - 1].values for s in self.subjects])

    @property
    def censoring_rate(self) -> float:
        return float(np.mean(1 - self.delta))

    def subset(self, indices: np.ndarray, label: str | None = None) -> "Cohort":
        return Cohort(
            subjects=tuple(self.subjects[i] for i in indices),
            q=self.q,
            label=label or self.label,
        )


def load_cohort(observations_file, functional_file, label: str = "cohort") -> Cohort:
    """Read a cohort from the observations/functional CSV pair.

    observations: header ``subject_id,y,delta``.  functional (long form):
    header ``subject_id,predictor,s,value`` with predictor in 1..q.
    """
    try:
        obs = pd.read_csv(observations_file)
        fun = pd.read_csv(functional_file)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestionError(f"cannot read cohort files: {exc}") from exc

    for frame, cols, name in (
        (obs, ["subject_id", "y", "delta"], "observations"),
        (fun, ["subject_id", "predictor", "s", "value"], "functional"),
    ):
        missing = [c for c in cols if c not in frame.columns]
        if missing:
            raise IngestionError(f"{name} file missing columns {missing}")

    if obs["subject_id"].duplicated().any():
        dup = obs.loc[obs["subject_id"].duplicated(), "subject_id"].iloc[0]
        raise IngestionError(f"duplicate subject_id {dup!r} in observations file")
    dup_mask = fun.duplicated(subset=["subject_id", "predictor", "s"])
    if dup_mask.any():
        row = fun[dup_mask].iloc[0]
        raise IngestionError(
            f"duplicate functional row (subject {row['subject_id']!r}, "
            f"predictor {row['predictor']}, s={row['s']})"
        )

    preds = sorted(fun["predictor"].unique())
    q = len(preds)
    if preds != list(range(1, q + 1)):
        raise IngestionError(f"predictor indices must be 1..q, got {preds}")

    grouped = {
        (sid, d): g.sort_values("s")
        for (sid, d), g in fun.groupby(["subject_id", "predictor"], sort=False)
    }
    subjects = []
    for row in obs.itertuples(index=False):
        sid = row.subject_id
        try:
            y = float(row.y)
            delta = int(row.delta)
        except (TypeError, ValueError) as exc:
            raise IngestionError(f"subject {sid!r}: non-numeric y or delta") from exc
        if float(row.delta) not in (0.0, 1.0):
            raise IngestionError(f"subject {sid!r}: delta must be 0 or 1, got {row.delta}")
        if not y > 0:
            raise IngestionError(f"subject {sid!r}: y must be positive, got {y}")
        curves = []
        for d in range(1, q + 1):
            g = grouped.get((sid, d))
            if g is None:
                raise IngestionError(f"subject {sid!r}: missing functional rows for predictor {d}")
            curves.append(
                SampledFunction(grid=g["s"].to_numpy(float), values=g["value"].to_numpy(float))
            )
        subjects.append(Subject(id=str(sid), y=y, delta=delta, predictors=tuple(curves)))

    extra = set(fun["subject_id"]) - set(obs["subject_id"])
    if extra:
        raise IngestionError(f"functional file has unknown subject_id {sorted(extra)[0]!r}")

    cohort = Cohort(subjects=tuple(subjects), q=q, label=label)
    log.info("loaded cohort %s: n=%d, q=%d, censoring rate %.3f",
             label, cohort.n, q, cohort.censoring_rate)
    return cohort


def write_cohort(cohort: Cohort, observations_file, functional_file) -> None:
    obs = pd.DataFrame(
        {
            "subject_id": [s.id for s in cohort.subjects],
            "y": [s.y for s in cohort.subjects],
            "delta": [s.delta for s in cohort.subjects],
        }
    )
    rows = []
    for sub in cohort.subjects:
        for d, pred in enumerate(sub.predictors, start=1):
            for s_val, v in zip(pred.grid, pred.values):
                rows.append((sub.id, d, s_val, v))
    fun = pd.DataFrame(rows, columns=["subject_id", "predictor", "s", "value"])
    obs.to_csv(observations_file, index=False)
    fun.to_csv(functional_file, index=False)


def split_half(cohort: Cohort, seed: int) -> tuple[Cohort, Cohort]:
    """Disjoint random halves; the first gets floor(n/2) subjects."""
    if cohort.n < 4:
        raise InsufficientDataError(f"need at least 4 subjects to split, got {cohort.n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(cohort.n)
    half = cohort.n // 2
    first = np.sort(perm[:half])
    second = np.sort(perm[half:])
    return (
        cohort.subset(first, label=f"{cohort.label}/half-a"),
        cohort.subset(second, label=f"{cohort.label}/half-b"),
    )
