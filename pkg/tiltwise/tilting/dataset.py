# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
The (X, A, Y) sample shared by the nuisance fits and the estimator.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from constants import MIN_POINTS_PER_INTERVAL, POINTS_PER_UNIT
from tilting.tilt_core import SupportGrid, detect_support


def _readonly(values, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float)
    if ndim == 2 and array.ndim == 1:
        array = array[:, None]
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Covariates X (n x d), treatment A and outcome Y. When rescale_record is set,
    A holds the treatment mapped affinely from [a_min, a_max] onto [0, 1] and
    treatment_raw keeps the original values.
    """
    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    treatment_raw: np.ndarray
    rescale_record: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", _readonly(self.covariates, 2))
        for name in ("treatment", "outcome", "treatment_raw"):
            object.__setattr__(self, name, _readonly(getattr(self, name), 1))
        n = self.treatment.shape[0]
        if self.covariates.shape[0] != n or self.outcome.shape[0] != n or self.treatment_raw.shape[0] != n:
            raise ValueError("covariates, treatment and outcome must have the same number of rows")
        for name in ("covariates", "treatment", "outcome"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains missing or non-finite values")

    @classmethod
    def from_arrays(cls, covariates, treatment, outcome, rescale: bool = True) -> "Dataset":
        raw = np.asarray(treatment, dtype=float)
        if not rescale:
            return cls(covariates=covariates, treatment=raw, outcome=outcome, treatment_raw=raw)
        a_min, a_max = float(np.min(raw)), float(np.max(raw))
        if a_max <= a_min:
            raise ValueError("treatment is constant and cannot be rescaled")
        return cls(
            covariates=covariates,
            treatment=(raw - a_min) / (a_max - a_min),
            outcome=outcome,
            treatment_raw=raw,
            rescale_record=(a_min, a_max),
        )

    @property
    def n(self) -> int:
        return int(self.treatment.shape[0])

    @property
    def d(self) -> int:
        return int(self.covariates.shape[1])

    def features(self) -> np.ndarray:
        """Outcome-regression design matrix [X, A]."""
        return np.column_stack([self.covariates, self.treatment])

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            covariates=self.covariates[index],
            treatment=self.treatment[index],
            outcome=self.outcome[index],
            treatment_raw=self.treatment_raw[index],
            rescale_record=self.rescale_record,
        )

    def rescaled_subset(self, index, lo: float, hi: float) -> "Dataset":
        """
        Rows in index with their treatment mapped from [lo, hi] (on the current
        treatment scale) onto [0, 1].
        """
        if hi <= lo:
            raise ValueError(f"cannot rescale onto an empty range [{lo}, {hi}]")
        part = self.subset(index)
        if self.rescale_record is None:
            record = (lo, hi)
        else:
            a_min, a_max = self.rescale_record
            record = (a_min + lo * (a_max - a_min), a_min + hi * (a_max - a_min))
        return Dataset(
            covariates=part.covariates,
            treatment=np.clip((part.treatment - lo) / (hi - lo), 0.0, 1.0),
            outcome=part.outcome,
            treatment_raw=part.treatment_raw,
            rescale_record=record,
        )

    def to_raw_scale(self, a):
        """Map a rescaled treatment value back to the original units."""
        if self.rescale_record is None:
            return a
        a_min, a_max = self.rescale_record
        return a_min + np.asarray(a) * (a_max - a_min)

    def support_grid(self, points_per_unit: int = POINTS_PER_UNIT, min_points: int = MIN_POINTS_PER_INTERVAL,
                     support_gap: Optional[float] = None) -> SupportGrid:
        """
        Design grid over the treatment support: [0, 1] after rescaling, the
        observed range otherwise. With support_gap set, the support is split
        wherever the observed values leave a gap wider than that fraction of
        their range.
        """
        if support_gap is not None:
            span = float(self.treatment.max() - self.treatment.min())
            intervals = detect_support(self.treatment, support_gap * span, merge_isolated=True)
            if self.rescale_record is not None:
                # rescaled treatment keeps its outer edges at 0 and 1
                intervals[0] = (0.0, intervals[0][1])
                intervals[-1] = (intervals[-1][0], 1.0)
        elif self.rescale_record is not None:
            intervals = [(0.0, 1.0)]
        else:
            intervals = [(float(self.treatment.min()), float(self.treatment.max()))]
        return SupportGrid.from_intervals(intervals, points_per_unit, min_points)


def assign_folds(n: int, folds: int, seed: int) -> np.ndarray:
    """
    Random fold ids in 0..folds-1 with sizes differing by at most one.
    """
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=int)
    assignments[order] = np.arange(n) % folds
    return assignments
