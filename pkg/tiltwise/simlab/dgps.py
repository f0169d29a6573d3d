# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Synthetic data generating processes with closed-form treatment densities and
outcome regressions, used as ground truth by the simulation oracles.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from aws_lambda_powertools import Logger

from tilting.dataset import Dataset
from tilting.tilt_core import SupportGrid

logger = Logger(service="tiltwise", child=True)

# Rows per block when densities vary with x
_CHUNK_ROWS = 2048


@dataclass(frozen=True)
class DGPSpec:
    """
    X ~ Uniform(0, 1)^d, A | X with density proportional to density_fn on the
    support intervals, Y = mu(X, A) + N(0, noise_sd^2).

    density_fn(X, a) maps an (m, d) covariate block and D treatment values to an
    (m, D) unnormalized density; outcome_fn(X, a) maps (m, d) and (m, k) to (m, k).
    Declared bounds feed the variance envelopes; B bounds |mu| + 5 noise sd.
    """
    name: str
    dimension: int
    density_fn: Callable
    outcome_fn: Callable
    noise_sd: float
    intervals: tuple = ((0.0, 1.0),)
    pi_min: Optional[float] = None
    pi_max: Optional[float] = None
    bound_b: Optional[float] = None
    lipschitz: Optional[float] = None
    covariate_free_density: bool = False
    sampling_points_per_unit: int = 1000

    @property
    def sigma2_min(self) -> float:
        return self.noise_sd ** 2

    @property
    def interval_count(self) -> int:
        return len(self.intervals)

    @property
    def min_interval_length(self) -> float:
        return min(hi - lo for lo, hi in self.intervals)

    def grid(self, points_per_unit: int) -> SupportGrid:
        return SupportGrid.from_intervals(self.intervals, points_per_unit=points_per_unit)

    def sample_covariates(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(size=(n, self.dimension))

    def density_matrix(self, covariates: np.ndarray, grid: SupportGrid) -> np.ndarray:
        """pi(a_d | x_i) on grid, normalized by quadrature per row."""
        covariates = np.asarray(covariates, dtype=float)
        if self.covariate_free_density:
            row = np.clip(self.density_fn(covariates[:1], grid.points), 0.0, None)
            row = np.where(grid.in_support(grid.points), row, 0.0)
            row = row / grid.integrate(row)[:, None]
            return np.broadcast_to(row, (covariates.shape[0], grid.size)).copy()
        values = np.clip(self.density_fn(covariates, grid.points), 0.0, None)
        values = np.where(grid.in_support(grid.points)[None, :], values, 0.0)
        return values / grid.integrate(values)[:, None]

    def mu(self, covariates: np.ndarray, treatment: np.ndarray) -> np.ndarray:
        """mu at paired rows: treatment has one value per covariate row."""
        treatment = np.asarray(treatment, dtype=float)
        return self.outcome_fn(np.asarray(covariates, dtype=float), treatment[:, None])[:, 0]

    def mu_grid(self, covariates: np.ndarray, grid: SupportGrid) -> np.ndarray:
        covariates = np.asarray(covariates, dtype=float)
        return self.outcome_fn(covariates, np.broadcast_to(grid.points, (covariates.shape[0], grid.size)))

    def sample_treatment(self, covariates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """
        Inverse-CDF draws from the piecewise-linear interpolation of pi(.|x) on
        the sampling grid. Cells never straddle a gap between intervals.
        """
        grid = self.grid(self.sampling_points_per_unit)
        same_interval = grid.interval_index[:-1] == grid.interval_index[1:]
        left = grid.points[:-1][same_interval]
        width = np.diff(grid.points)[same_interval]
        uniforms = rng.uniform(size=covariates.shape[0])
        draws = np.empty(covariates.shape[0])
        for start in range(0, covariates.shape[0], _CHUNK_ROWS):
            block = slice(start, start + _CHUNK_ROWS)
            density = self.density_matrix(covariates[block], grid)
            p0 = density[:, :-1][:, same_interval]
            p1 = density[:, 1:][:, same_interval]
            mass = width * (p0 + p1) / 2.0
            cumulative = np.cumsum(mass, axis=1)
            target = uniforms[block] * cumulative[:, -1]
            cell = np.minimum((cumulative < target[:, None]).sum(axis=1), mass.shape[1] - 1)
            rows = np.arange(cell.size)
            remaining = (target - (cumulative[rows, cell] - mass[rows, cell])) / width[cell]
            start_density, slope = p0[rows, cell], p1[rows, cell] - p0[rows, cell]
            root = np.sqrt(np.clip(start_density ** 2 + 2.0 * slope * remaining, 0.0, None))
            denominator = start_density + root
            fraction = np.where(denominator > 0, 2.0 * remaining / np.where(denominator > 0, denominator, 1.0), 0.5)
            draws[block] = left[cell] + np.clip(fraction, 0.0, 1.0) * width[cell]
        return draws


def generate_dataset(dgp: DGPSpec, n: int, seed) -> Dataset:
    """
    Function to draw n i.i.d. units from dgp, reproducibly from seed.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    covariates = dgp.sample_covariates(n, rng)
    treatment = dgp.sample_treatment(covariates, rng)
    outcome = dgp.mu(covariates, treatment) + dgp.noise_sd * rng.standard_normal(n)
    lo, hi = dgp.intervals[0][0], dgp.intervals[-1][1]
    return Dataset(
        covariates=covariates,
        treatment=(treatment - lo) / (hi - lo),
        outcome=outcome,
        treatment_raw=treatment,
        rescale_record=(lo, hi),
    )


def _flat_density(covariates, a):
    return np.ones((np.shape(covariates)[0], np.size(a)))


def _logistic_density(covariates, a):
    location = 0.3 + 0.4 * covariates[:, :1]
    z = np.abs((np.asarray(a)[None, :] - location) / 0.25)
    return np.exp(-z) / (1.0 + np.exp(-z)) ** 2


def _linear_outcome(covariates, a):
    return np.array(a, dtype=float)


def _null_outcome(covariates, a):
    return np.zeros_like(a, dtype=float)


def _constant_outcome(covariates, a):
    return np.full_like(a, 1.5, dtype=float)


def _logistic_outcome(covariates, a):
    return a + 0.5 * covariates[:, :1]


def _scan_density_bounds(density_fn, dimension: int, intervals) -> tuple[float, float]:
    """Extremes of the normalized density over a dense sweep of x_1 with other covariates at 0.5."""
    sweep = np.full((201, dimension), 0.5)
    sweep[:, 0] = np.linspace(0.0, 1.0, 201)
    spec = DGPSpec(name="scan", dimension=dimension, density_fn=density_fn, outcome_fn=_null_outcome,
                   noise_sd=1.0, intervals=intervals)
    grid = spec.grid(400)
    values = spec.density_matrix(sweep, grid)[:, grid.in_support(grid.points)]
    return float(values.min()), float(values.max())


def _build_registry() -> dict:
    noise = 0.25
    logistic_min, logistic_max = _scan_density_bounds(_logistic_density, 2, ((0.0, 1.0),))
    holey = ((0.0, 0.4), (0.6, 1.0))
    specs = [
        DGPSpec(name="uniform", dimension=1, density_fn=_flat_density, outcome_fn=_linear_outcome, noise_sd=noise,
                pi_min=1.0, pi_max=1.0, bound_b=1.0 + 5 * noise, lipschitz=1.0, covariate_free_density=True),
        DGPSpec(name="uniform-null", dimension=1, density_fn=_flat_density, outcome_fn=_null_outcome, noise_sd=noise,
                pi_min=1.0, pi_max=1.0, bound_b=5 * noise, lipschitz=0.0, covariate_free_density=True),
        DGPSpec(name="uniform-constant", dimension=1, density_fn=_flat_density, outcome_fn=_constant_outcome, noise_sd=noise,
                pi_min=1.0, pi_max=1.0, bound_b=1.5 + 5 * noise, lipschitz=0.0, covariate_free_density=True),
        DGPSpec(name="logistic", dimension=2, density_fn=_logistic_density, outcome_fn=_logistic_outcome, noise_sd=noise,
                pi_min=0.99 * logistic_min, pi_max=1.01 * logistic_max, bound_b=1.5 + 5 * noise, lipschitz=1.0),
        DGPSpec(name="holey", dimension=1, density_fn=_flat_density, outcome_fn=_linear_outcome, noise_sd=noise,
                intervals=holey, pi_min=1.25, pi_max=1.25, bound_b=1.0 + 5 * noise, lipschitz=1.0,
                covariate_free_density=True),
    ]
    return {spec.name: spec for spec in specs}


DGPS = _build_registry()


def get_dgp(name: str) -> DGPSpec:
    try:
        return DGPS[name]
    except KeyError:
        raise ValueError(f"unknown DGP {name!r}; choose from {sorted(DGPS)}") from None
