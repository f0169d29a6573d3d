# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Cross-fitted one-step estimator of the incremental effect psi(delta).

For each fold k, mu_hat and pi_hat are fitted on the other folds. On the rows of
fold k the estimator integrates them over the design grid to get nu_hat and
xi_hat, then averages the influence values
    exp(delta * A) / nu_hat(X) * (Y - xi_hat(X)) + xi_hat(X).
mu_hat and pi_hat do not depend on delta, so a whole delta grid shares one set of
fold fits.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Protocol, Sequence

import numpy as np
from aws_lambda_powertools import Logger
from joblib import Parallel, delayed
from scipy.stats import norm

import constants
from constants import LARGE_RATIO_THRESHOLD, MIN_ESTIMATION_ROWS, MIN_FOLD_ROWS, NU_FLOOR_SCALE
from errors import CrossFitLeak, EmptyFold, TooFewRows, TooFewValues, UnsortedDeltaGrid
from models import EstimateDiagnostics, EstimatorConfig, IncrementalEstimate
from tilting.dataset import Dataset, assign_folds
from tilting.learners import Regressor, make_learner
from tilting.nuisance import DensityModel, OutcomeModel, fit_conditional_density, fit_nu_eta, fit_outcome_regression, select_bandwidth_cv
from tilting.tilt_core import SupportGrid, TiltSpec, row_cumulants, row_tilts

logger = Logger(service="tiltwise", child=True)

__all__ = [
    "CrossFitter",
    "Dataset",
    "FoldFit",
    "FoldNuisances",
    "FoldPlan",
    "IncrementalEstimate",
    "InfluenceValues",
    "LearnedNuisances",
    "compute_nu_hat",
    "compute_xi_hat",
    "cross_fit_psi",
    "estimate_curve",
    "fold_psi_hat",
    "influence_variance",
    "split_folds",
    "tilted_marginal_density",
]


@dataclass(frozen=True, eq=False)
class FoldPlan:
    folds: int
    assignments: np.ndarray
    seed: int

    def train_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != k)

    def test_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def sizes(self) -> list[int]:
        return [int(size) for size in np.bincount(self.assignments, minlength=self.folds)]


def split_folds(n: int, K: int, seed: int) -> FoldPlan:
    """
    Function to split n units into K folds of near-equal size, reproducibly from seed.
    """
    if K < 2 or n < K * MIN_FOLD_ROWS:
        raise TooFewRows(f"{n} rows cannot be split into {K} folds of at least {MIN_FOLD_ROWS}")
    assignments = assign_folds(n, K, seed)
    assignments.setflags(write=False)
    return FoldPlan(folds=K, assignments=assignments, seed=seed)


def floored_log_nu(grid: SupportGrid, density: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """
    log nu_hat per row of a density matrix, floored at log(1e-6 * exp(max(delta, 0))).
    Returns the floored values and the mask of rows where the floor engaged.
    """
    log_floor = np.log(NU_FLOOR_SCALE) + max(delta, 0.0)
    log_nu = np.atleast_1d(row_cumulants(grid, density, delta))
    engaged = log_nu < log_floor
    return np.where(engaged, log_floor, log_nu), engaged


def _report_floor(engaged: np.ndarray, delta: float, fold_id: int) -> None:
    count = int(np.sum(engaged))
    if count:
        logger.warning("FloorEngaged", extra={"delta": delta, "fold": fold_id, "count": count})


def compute_nu_hat(density: DensityModel, tilt: TiltSpec, x) -> float:
    """
    nu_hat(x) = sum_d w_d exp(delta a_d) pi_hat(a_d|x), floored to stay positive.
    """
    values = density.evaluate_grid(np.asarray(x, dtype=float).reshape(1, -1))
    log_nu, engaged = floored_log_nu(density.grid, values, tilt.delta)
    _report_floor(engaged, tilt.delta, density.fold_id)
    with np.errstate(over="ignore"):
        return float(np.exp(log_nu[0]))


def compute_xi_hat(mu: OutcomeModel, density: DensityModel, tilt: TiltSpec, x) -> float:
    """
    xi_hat(x): mu_hat(x, .) averaged under the estimated tilted slice.
    """
    row = np.asarray(x, dtype=float).reshape(1, -1)
    values = density.evaluate_grid(row)
    log_nu, _ = floored_log_nu(density.grid, values, tilt.delta)
    tilted = row_tilts(density.grid, values, tilt.delta, log_nu)
    return float(((mu.predict_grid(row, density.grid) * tilted) @ density.grid.weights)[0])


@dataclass(frozen=True, eq=False)
class FoldFit:
    """
    Delta-free nuisances of one fold with their predictions on the fold's
    held-out rows: pi_hat and mu_hat on the design grid.
    """
    fold_id: int
    train_index: np.ndarray
    test_index: np.ndarray
    mu: OutcomeModel
    density: DensityModel
    density_held_out: np.ndarray
    mu_held_out: np.ndarray


@dataclass(frozen=True, eq=False)
class FoldNuisances:
    """Tilt-dependent held-out nuisances of one fold."""
    fold_id: int
    mu: OutcomeModel
    density: DensityModel
    nu_hat: np.ndarray
    xi_hat: np.ndarray
    log_nu: np.ndarray
    floor_engaged: int = 0


@dataclass(frozen=True, eq=False)
class InfluenceValues:
    values: np.ndarray
    fold_ids: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != np.shape(self.fold_ids):
            raise ValueError("influence values and fold ids differ in length")
        if not np.all(np.isfinite(values)):
            raise ValueError("influence values must be finite")


def influence_variance(values: InfluenceValues) -> float:
    """
    Pooled sample variance (ddof=1) of the per-unit influence values.
    """
    array = np.asarray(values.values, dtype=float)
    if array.size < 2:
        raise TooFewValues(f"need at least 2 influence values, got {array.size}")
    return float(np.var(array, ddof=1))


def fold_psi_hat(data: Dataset, fold: FoldPlan, k: int, nuis: FoldNuisances, tilt: TiltSpec) -> tuple[float, np.ndarray]:
    """
    Function to average the influence values over the held-out rows of fold k.
    """
    test = fold.test_index(k)
    if test.size == 0:
        raise EmptyFold(f"fold {k} has no held-out rows")
    if nuis.fold_id != k:
        raise CrossFitLeak(f"nuisances of fold {nuis.fold_id} used to evaluate fold {k}")
    nuis.mu.assert_held_out(test)
    nuis.density.assert_held_out(test)
    with np.errstate(over="ignore"):
        ratio = np.exp(tilt.delta * data.treatment[test] - nuis.log_nu)
    values = ratio * (data.outcome[test] - nuis.xi_hat) + nuis.xi_hat
    return float(values.mean()), values


class NuisanceProvider(Protocol):
    bandwidth: float

    def fit(self, data: Dataset, train_index: np.ndarray, fold_id: int, grid: SupportGrid) -> tuple[OutcomeModel, DensityModel]:
        ...


@dataclass(frozen=True)
class LearnedNuisances:
    """Nuisances fitted by the configured learners."""
    outcome_learner: Regressor
    density_learner: Regressor
    bandwidth: float
    boundary_correction: bool

    @classmethod
    def from_config(cls, data: Dataset, grid: SupportGrid, config: EstimatorConfig) -> "LearnedNuisances":
        density_learner = make_learner(config.density_learner)
        bandwidth = config.bandwidth
        if bandwidth is None:
            bandwidth = select_bandwidth_cv(
                data, grid, config.bandwidths, config.folds,
                learner=density_learner,
                design_points=config.cv_design_points,
                seed=config.seed,
                boundary_correction=config.boundary_correction,
            )
        return cls(
            outcome_learner=make_learner(config.outcome_learner),
            density_learner=density_learner,
            bandwidth=float(bandwidth),
            boundary_correction=config.boundary_correction,
        )

    def fit(self, data: Dataset, train_index: np.ndarray, fold_id: int, grid: SupportGrid) -> tuple[OutcomeModel, DensityModel]:
        mu = fit_outcome_regression(self.outcome_learner, data, train_index, fold_id)
        density = fit_conditional_density(
            self.density_learner, data, grid, self.bandwidth, train_index, fold_id,
            boundary_correction=self.boundary_correction,
        )
        return mu, density


class CrossFitter:
    """
    Holds the fold plan and the delta-free fold fits of one dataset and
    evaluates the one-step estimator at any tilt.
    """

    def __init__(self, data: Dataset, config: Optional[EstimatorConfig] = None,
                 nuisances: Optional[NuisanceProvider] = None, grid: Optional[SupportGrid] = None):
        self.config = config or constants.config
        if data.n < MIN_ESTIMATION_ROWS:
            raise TooFewRows(f"estimation needs at least {MIN_ESTIMATION_ROWS} rows, got {data.n}")
        self.data = data
        self.grid = grid or data.support_grid(self.config.points_per_unit, self.config.min_points, self.config.support_gap)
        self.plan = split_folds(data.n, self.config.folds, self.config.seed)
        self.nuisances = nuisances or LearnedNuisances.from_config(data, self.grid, self.config)
        self.regression_learner = make_learner(self.config.density_learner)

    def _fit_fold(self, k: int) -> FoldFit:
        train, test = self.plan.train_index(k), self.plan.test_index(k)
        mu, density = self.nuisances.fit(self.data, train, k, self.grid)
        mu.assert_held_out(test)
        density.assert_held_out(test)
        held_out = self.data.covariates[test]
        return FoldFit(
            fold_id=k,
            train_index=train,
            test_index=test,
            mu=mu,
            density=density,
            density_held_out=density.evaluate_grid(held_out),
            mu_held_out=mu.predict_grid(held_out, self.grid),
        )

    @cached_property
    def fold_fits(self) -> list[FoldFit]:
        logger.info("Cross-fitting nuisances", extra={
            "rows": self.data.n, "folds": self.plan.folds, "design_points": self.grid.size,
            "bandwidth": self.nuisances.bandwidth,
        })
        return Parallel(n_jobs=self.config.n_jobs, prefer="threads")(
            delayed(self._fit_fold)(k) for k in range(self.plan.folds)
        )

    def fold_nuisances(self, fit: FoldFit, tilt: TiltSpec) -> FoldNuisances:
        if self.config.parameterization == "regression":
            return self._regression_nuisances(fit, tilt)
        log_nu, engaged = floored_log_nu(self.grid, fit.density_held_out, tilt.delta)
        _report_floor(engaged, tilt.delta, fit.fold_id)
        tilted = row_tilts(self.grid, fit.density_held_out, tilt.delta, log_nu)
        with np.errstate(over="ignore"):
            nu_hat = np.exp(log_nu)
        return FoldNuisances(
            fold_id=fit.fold_id,
            mu=fit.mu,
            density=fit.density,
            nu_hat=nu_hat,
            xi_hat=(fit.mu_held_out * tilted) @ self.grid.weights,
            log_nu=log_nu,
            floor_engaged=int(engaged.sum()),
        )

    def _regression_nuisances(self, fit: FoldFit, tilt: TiltSpec) -> FoldNuisances:
        nu_model, eta_model = fit_nu_eta(self.regression_learner, self.data, tilt, fit.mu, fit.train_index)
        held_out = self.data.covariates[fit.test_index]
        floor = NU_FLOOR_SCALE * np.exp(max(tilt.delta, 0.0))
        raw_nu = np.asarray(nu_model.predict(held_out))
        engaged = raw_nu < floor
        _report_floor(engaged, tilt.delta, fit.fold_id)
        nu_hat = np.maximum(raw_nu, floor)
        return FoldNuisances(
            fold_id=fit.fold_id,
            mu=fit.mu,
            density=fit.density,
            nu_hat=nu_hat,
            xi_hat=np.asarray(eta_model.predict(held_out)) / nu_hat,
            log_nu=np.log(nu_hat),
            floor_engaged=int(engaged.sum()),
        )

    def influence(self, tilt: TiltSpec) -> tuple[InfluenceValues, list[float], EstimateDiagnostics]:
        """
        Per-unit influence values in ascending unit order, the per-fold
        estimates and the run diagnostics at one tilt.
        """
        values = np.empty(self.data.n)
        ratios = np.empty(self.data.n)
        fold_psi, floor_engaged = [], 0
        for fit in self.fold_fits:
            nuis = self.fold_nuisances(fit, tilt)
            psi_k, phi = fold_psi_hat(self.data, self.plan, fit.fold_id, nuis, tilt)
            values[fit.test_index] = phi
            with np.errstate(over="ignore"):
                ratios[fit.test_index] = np.exp(tilt.delta * self.data.treatment[fit.test_index] - nuis.log_nu)
            fold_psi.append(psi_k)
            floor_engaged += nuis.floor_engaged

        large = ratios > LARGE_RATIO_THRESHOLD
        if large.any():
            logger.warning("Large likelihood ratios", extra={
                "delta": tilt.delta, "count": int(large.sum()), "max_ratio": float(ratios.max()),
            })
        diagnostics = EstimateDiagnostics(
            bandwidth=self.nuisances.bandwidth,
            floor_engaged=floor_engaged,
            large_ratio_count=int(large.sum()),
            max_ratio=float(ratios.max()),
            fold_sizes=self.plan.sizes(),
            parameterization=self.config.parameterization,
        )
        return InfluenceValues(values=values, fold_ids=self.plan.assignments), fold_psi, diagnostics

    def estimate(self, tilt: TiltSpec) -> IncrementalEstimate:
        values, fold_psi, diagnostics = self.influence(tilt)
        psi_hat = float(np.mean(fold_psi))
        sigma2 = influence_variance(values)
        se = float(np.sqrt(sigma2 / self.data.n))
        z = float(norm.ppf(1.0 - self.config.alpha / 2.0))
        return IncrementalEstimate(
            delta=tilt.delta,
            psi_hat=psi_hat,
            sigma2_hat=sigma2,
            se=se,
            ci_lower=psi_hat - z * se,
            ci_upper=psi_hat + z * se,
            n=self.data.n,
            alpha=self.config.alpha,
            fold_psi=fold_psi,
            diagnostics=diagnostics,
        )

    def tilted_marginal_density(self, deltas: Sequence[float]) -> np.ndarray:
        """
        Average over units of the held-out estimated tilted slices, one row per delta.
        """
        rows = []
        for delta in deltas:
            total = np.zeros(self.grid.size)
            for fit in self.fold_fits:
                log_nu, _ = floored_log_nu(self.grid, fit.density_held_out, float(delta))
                total += row_tilts(self.grid, fit.density_held_out, float(delta), log_nu).sum(axis=0)
            rows.append(total / self.data.n)
        return np.vstack(rows)


def cross_fit_psi(data: Dataset, tilt: TiltSpec, config: Optional[EstimatorConfig] = None,
                  nuisances: Optional[NuisanceProvider] = None) -> IncrementalEstimate:
    return CrossFitter(data, config, nuisances).estimate(tilt)


def _check_deltas(deltas: Sequence[float]) -> np.ndarray:
    grid = np.asarray(list(deltas), dtype=float)
    if grid.size == 0:
        raise ValueError("delta grid is empty")
    if not np.all(np.isfinite(grid)):
        raise ValueError("delta grid contains non-finite values")
    if np.any(np.diff(grid) < 0):
        raise UnsortedDeltaGrid(f"delta grid must be sorted ascending, got {grid.tolist()}")
    return grid


def estimate_curve(data: Dataset, deltas: Sequence[float], config: Optional[EstimatorConfig] = None,
                   nuisances: Optional[NuisanceProvider] = None, fitter: Optional[CrossFitter] = None) -> list[IncrementalEstimate]:
    """
    Function to estimate psi over a sorted delta grid, sharing one set of fold fits.
    """
    grid = _check_deltas(deltas)
    fitter = fitter or CrossFitter(data, config, nuisances)
    estimates = [fitter.estimate(TiltSpec(delta)) for delta in grid]
    logger.info("Estimated incremental effect curve", extra={"deltas": int(grid.size), "rows": data.n})
    return estimates


def tilted_marginal_density(fitter: CrossFitter, deltas: Sequence[float]) -> np.ndarray:
    return fitter.tilted_marginal_density(_check_deltas(deltas))
