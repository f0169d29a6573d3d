# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Nuisance fits for the one-step estimator: the outcome regression mu(x, a),
the conditional treatment density pi(a|x) by regression of kernel-transformed
treatments, and the experimental nu / eta regressions.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from aws_lambda_powertools import Logger
from scipy.stats import norm

from constants import CV_DESIGN_POINTS, MIN_FOLD_ROWS, OVERFLOW_EXPONENT
from errors import CrossFitLeak, DegenerateFold, EmptyCandidateSet, NonpositiveBandwidth, OverflowRisk
from tilting.dataset import Dataset, assign_folds
from tilting.learners import FittedRegressor, NadarayaWatson, Regressor, as_features
from tilting.tilt_core import ConditionalDensitySlice, SupportGrid, TiltSpec

logger = Logger(service="tiltwise", child=True)

KERNELS = {"gaussian": norm}


def _index(fold) -> np.ndarray:
    index = np.asarray(fold)
    if index.dtype == bool:
        index = np.flatnonzero(index)
    index = np.array(index, dtype=int)
    index.setflags(write=False)
    return index


def _check_fold(index: np.ndarray) -> None:
    if index.size < MIN_FOLD_ROWS:
        raise DegenerateFold(f"training fold has {index.size} rows, at least {MIN_FOLD_ROWS} are required")


@dataclass(frozen=True, eq=False)
class CrossFitModel:
    """Bookkeeping shared by every fold-trained model."""
    fold_id: int
    train_index: np.ndarray

    def assert_held_out(self, index) -> None:
        """
        Raise CrossFitLeak if any row in index was used to train this model.
        """
        if np.isin(_index(index), self.train_index).any():
            raise CrossFitLeak(f"model trained for fold {self.fold_id} asked to predict on its own training rows")


@dataclass(frozen=True, eq=False)
class OutcomeModel(CrossFitModel):
    fitted: FittedRegressor = None

    def predict(self, covariates, treatment) -> np.ndarray:
        features = np.column_stack([as_features(covariates), np.asarray(treatment, dtype=float)])
        return np.asarray(self.fitted.predict(features))

    def predict_grid(self, covariates, grid: SupportGrid) -> np.ndarray:
        """mu_hat(x_i, a_d) as an (m, D) matrix."""
        covariates = as_features(covariates)
        rows, points = covariates.shape[0], grid.size
        features = np.column_stack([
            np.repeat(covariates, points, axis=0),
            np.tile(grid.points, rows),
        ])
        return np.asarray(self.fitted.predict(features)).reshape(rows, points)


@dataclass(frozen=True, eq=False)
class DensityModel(CrossFitModel):
    """
    pi_hat(a_d|x) for every design point of grid. A single multi-output fit
    carries the per-design-point regressions.
    """
    fitted: FittedRegressor = None
    grid: SupportGrid = None
    bandwidth: float = 1.0
    kernel: str = "gaussian"
    boundary_correction: bool = False

    def evaluate_grid(self, covariates) -> np.ndarray:
        """Clipped density matrix with one row per covariate row."""
        return np.clip(np.asarray(self.fitted.predict(as_features(covariates))), 0.0, None)

    def evaluate(self, x) -> ConditionalDensitySlice:
        row = np.asarray(x, dtype=float).reshape(1, -1)
        return ConditionalDensitySlice(grid=self.grid, values=self.evaluate_grid(row)[0])


def kernel_transform_targets(a_values, a_d, h: float, kernel: str = "gaussian") -> np.ndarray:
    """
    K((A_i - a_d) / h) / h. A vector of design points gives one column per point.
    """
    if not h > 0:
        raise NonpositiveBandwidth(f"bandwidth must be > 0, got {h}")
    offsets = np.subtract.outer(np.asarray(a_values, dtype=float), np.asarray(a_d, dtype=float))
    return KERNELS[kernel].pdf(offsets / h) / h


def kernel_mass(grid: SupportGrid, h: float, kernel: str = "gaussian") -> np.ndarray:
    """Kernel mass inside the support intervals for each design point."""
    mass = np.zeros(grid.size)
    for lo, hi in grid.intervals:
        mass += KERNELS[kernel].cdf((hi - grid.points) / h) - KERNELS[kernel].cdf((lo - grid.points) / h)
    return mass


def _density_targets(treatment, grid: SupportGrid, h: float, boundary_correction: bool, kernel: str = "gaussian") -> np.ndarray:
    targets = kernel_transform_targets(treatment, grid.points, h, kernel)
    if boundary_correction:
        targets = targets / kernel_mass(grid, h, kernel)
    return targets


def fit_outcome_regression(learner: Regressor, data: Dataset, fold, fold_id: int = -1) -> OutcomeModel:
    """
    Function to fit mu(x, a) on the rows in fold.
    """
    index = _index(fold)
    _check_fold(index)
    outcome = data.outcome[index]
    if np.var(outcome) == 0:
        raise DegenerateFold(f"outcome is constant on the training rows of fold {fold_id}")
    fitted = learner.fit(data.features()[index], outcome)
    logger.debug("Fitted outcome regression", extra={"fold": fold_id, "rows": int(index.size)})
    return OutcomeModel(fold_id=fold_id, train_index=index, fitted=fitted)


def fit_conditional_density(learner: Regressor, data: Dataset, grid: SupportGrid, h: float, fold,
                            fold_id: int = -1, boundary_correction: bool = False,
                            kernel: str = "gaussian") -> DensityModel:
    """
    Function to fit pi(a_d|x) by regressing kernel-transformed treatments on X.
    """
    if not h > 0:
        raise NonpositiveBandwidth(f"bandwidth must be > 0, got {h}")
    index = _index(fold)
    _check_fold(index)
    targets = _density_targets(data.treatment[index], grid, h, boundary_correction, kernel)
    fitted = learner.fit(data.covariates[index], targets)
    logger.debug("Fitted conditional density", extra={"fold": fold_id, "rows": int(index.size), "bandwidth": h})
    return DensityModel(
        fold_id=fold_id,
        train_index=index,
        fitted=fitted,
        grid=grid,
        bandwidth=float(h),
        kernel=kernel,
        boundary_correction=boundary_correction,
    )


def _coarse_grid(grid: SupportGrid, design_points: int) -> SupportGrid:
    per_unit = max(1, math.ceil((design_points - 1) / grid.total_length))
    return SupportGrid.from_intervals(grid.intervals, points_per_unit=per_unit, min_points=2)


def _interpolate_rows(points: np.ndarray, values: np.ndarray, a: np.ndarray) -> np.ndarray:
    """values[..., i, :] is a piecewise-linear function of a[i] on points."""
    right = np.clip(np.searchsorted(points, a), 1, points.size - 1)
    left = right - 1
    t = np.clip((a - points[left]) / (points[right] - points[left]), 0.0, 1.0)
    rows = np.arange(a.size)
    return (1.0 - t) * values[..., rows, left] + t * values[..., rows, right]


def select_bandwidth_cv(data: Dataset, grid: SupportGrid, candidate_h: Sequence[float], folds: int,
                        learner: Optional[Regressor] = None, design_points: int = CV_DESIGN_POINTS,
                        seed: int = 0, boundary_correction: bool = False) -> float:
    """
    Pick the bandwidth minimizing the held-out least-squares criterion
    integral(pi_hat^2) - 2 pi_hat(A_i|X_i), evaluated on design_points evenly
    spaced design points. Ties go to the larger bandwidth.

    This is least-squares cross-validation of the density pi_hat itself. It is
    not the squared error of the regression of the kernel targets on X, whose
    noise term grows as h shrinks and would push the choice to the largest h.
    """
    candidates = np.sort(np.asarray(list(candidate_h), dtype=float))[::-1]
    if candidates.size == 0:
        raise EmptyCandidateSet("no candidate bandwidths given")
    if np.any(candidates <= 0):
        raise NonpositiveBandwidth("candidate bandwidths must be > 0")
    if np.unique(candidates).size == 1:
        return float(candidates[0])

    learner = learner or NadarayaWatson()
    coarse = _coarse_grid(grid, design_points)
    assignments = assign_folds(data.n, folds, seed)
    scores = np.zeros(candidates.size)
    for k in range(folds):
        train, test = np.flatnonzero(assignments != k), np.flatnonzero(assignments == k)
        _check_fold(train)
        targets = np.hstack([
            _density_targets(data.treatment[train], coarse, h, boundary_correction) for h in candidates
        ])
        fitted = learner.fit(data.covariates[train], targets)
        predicted = np.clip(fitted.predict(data.covariates[test]), 0.0, None)
        predicted = predicted.reshape(test.size, candidates.size, coarse.size).transpose(1, 0, 2)
        squared = (predicted ** 2) @ coarse.weights
        at_observed = _interpolate_rows(coarse.points, predicted, data.treatment[test])
        scores += (squared - 2.0 * at_observed).mean(axis=1) * test.size / data.n

    chosen = float(candidates[int(np.argmin(scores))])
    logger.info("Selected bandwidth by cross-validation", extra={"bandwidth": chosen, "candidates": int(candidates.size)})
    return chosen


def fit_nu_eta(learner: Regressor, data: Dataset, tilt: TiltSpec, mu: OutcomeModel, fold) -> tuple:
    """
    Function to fit nu(x) = E[exp(delta A)|X] and eta(x) = E[exp(delta A) mu(X, A)|X]
    directly. Experimental: xi = eta / nu loses the double robustness of the
    quadrature path.
    """
    index = _index(fold)
    _check_fold(index)
    covariates, treatment = data.covariates[index], data.treatment[index]
    if abs(tilt.delta) * float(np.max(np.abs(treatment))) > OVERFLOW_EXPONENT:
        raise OverflowRisk(f"exp({tilt.delta} * A) is too large for a regression target")
    weights = np.exp(tilt.delta * treatment)
    nu_model = learner.fit(covariates, weights)
    eta_model = learner.fit(covariates, weights * mu.predict(covariates, treatment))
    return nu_model, eta_model
