# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Ground-truth quantities of a DGPSpec: psi(delta), the efficiency bound, the
variance envelopes, edge dose-response values and the second-order remainder of
the one-step estimator under controlled nuisance perturbations. Integrals over
the treatment use grid quadrature; integrals over X use Monte Carlo.
"""

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from aws_lambda_powertools import Logger

from constants import ORACLE_MC_X, ORACLE_MC_X_MIN
from errors import MissingBoundDeclaration, PositiveDeltaRequired
from simlab.dgps import DGPSpec
from tilting.dataset import Dataset
from tilting.nuisance import DensityModel, OutcomeModel
from tilting.tilt_core import SupportGrid, TiltSpec, row_cumulants, row_tilts

logger = Logger(service="tiltwise", child=True)

# Matrix cells per block of covariate rows
_CHUNK_CELLS = 4_000_000


class OracleValue(NamedTuple):
    value: float
    mc_se: float


class VarianceBounds(NamedTuple):
    lower: float
    upper: float


class RemainderTerms(NamedTuple):
    r1: float
    r2: float
    total: float
    mixed_bound: float
    l2_bound: float


def oracle_grid(dgp: DGPSpec, delta: float) -> SupportGrid:
    """Quadrature grid fine enough that delta * spacing stays below 0.02."""
    return dgp.grid(max(400, math.ceil(50 * abs(delta))))


def _covariates(dgp: DGPSpec, mc_x: int, seed) -> np.ndarray:
    if mc_x < ORACLE_MC_X_MIN:
        raise ValueError(f"oracle Monte Carlo needs at least {ORACLE_MC_X_MIN} covariate draws, got {mc_x}")
    return dgp.sample_covariates(mc_x, np.random.default_rng(seed))


def _blocks(covariates: np.ndarray, grid: SupportGrid):
    rows = max(64, _CHUNK_CELLS // grid.size)
    for start in range(0, covariates.shape[0], rows):
        yield covariates[start:start + rows]


def _tilted_block(dgp: DGPSpec, block: np.ndarray, grid: SupportGrid, delta: float):
    density = dgp.density_matrix(block, grid)
    cumulants = row_cumulants(grid, density, delta)
    tilted = row_tilts(grid, density, delta, cumulants)
    mu = dgp.mu_grid(block, grid)
    return density, cumulants, tilted, mu, (mu * tilted) @ grid.weights


def oracle_psi(dgp: DGPSpec, tilt: TiltSpec, mc_x: int = ORACLE_MC_X, seed=0) -> OracleValue:
    """
    psi(delta) = E_X[ integral mu(X, a) q_delta(a|X) da ] with its Monte Carlo standard error.
    """
    grid = oracle_grid(dgp, tilt.delta)
    xi = np.concatenate([
        _tilted_block(dgp, block, grid, tilt.delta)[4] for block in _blocks(_covariates(dgp, mc_x, seed), grid)
    ])
    return OracleValue(value=float(xi.mean()), mc_se=float(xi.std(ddof=1) / np.sqrt(xi.size)))


def oracle_efficiency_bound(dgp: DGPSpec, tilt: TiltSpec, mc_x: int = ORACLE_MC_X, seed=0) -> OracleValue:
    """
    E[(q/pi)^2 (var(Y|X,A) + (mu - xi)^2)] + var(xi(X)), the variance of the
    efficient influence function.
    """
    grid = oracle_grid(dgp, tilt.delta)
    within, xi = [], []
    for block in _blocks(_covariates(dgp, mc_x, seed), grid):
        density, cumulants, tilted, mu, block_xi = _tilted_block(dgp, block, grid, tilt.delta)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = np.where(density > 0, np.exp(tilt.delta * grid.points - cumulants[:, None]), 0.0)
        spread = dgp.sigma2_min + (mu - block_xi[:, None]) ** 2
        within.append((tilted * ratio * spread) @ grid.weights)
        xi.append(block_xi)
    within, xi = np.concatenate(within), np.concatenate(xi)
    centered = (xi - xi.mean()) ** 2
    return OracleValue(
        value=float(within.mean() + centered.mean()),
        mc_se=float((within + centered).std(ddof=1) / np.sqrt(xi.size)),
    )


def variance_bounds(dgp: DGPSpec, tilt: TiltSpec) -> VarianceBounds:
    """
    Envelopes on the efficiency bound under weak positivity:
    lower = delta pi_min sigma2_min / (2 pi_max^2 K),
    upper = B^2 (1 + 5 pi_max / (2 pi_min^2) (2 / L + delta)).
    """
    if not tilt.delta > 0:
        raise PositiveDeltaRequired(f"variance bounds need delta > 0, got {tilt.delta}")
    missing = [name for name in ("pi_min", "pi_max", "bound_b") if getattr(dgp, name) is None]
    if missing:
        raise MissingBoundDeclaration(f"DGP {dgp.name!r} does not declare {', '.join(missing)}")
    delta, pi_min, pi_max = tilt.delta, dgp.pi_min, dgp.pi_max
    lower = delta * pi_min * dgp.sigma2_min / (2.0 * pi_max ** 2 * dgp.interval_count)
    upper = dgp.bound_b ** 2 * (1.0 + 5.0 * pi_max / (2.0 * pi_min ** 2) * (2.0 / dgp.min_interval_length + delta))
    return VarianceBounds(lower=float(lower), upper=float(upper))


def oracle_dose_edge(dgp: DGPSpec, side: Literal["upper", "lower"] = "upper", mc_x: int = ORACLE_MC_X, seed=0) -> OracleValue:
    """E[Y^1] (upper) or E[Y^0] (lower) at the edge of the support."""
    covariates = _covariates(dgp, mc_x, seed)
    edge = dgp.intervals[-1][1] if side == "upper" else dgp.intervals[0][0]
    values = dgp.mu(covariates, np.full(covariates.shape[0], edge))
    return OracleValue(value=float(values.mean()), mc_se=float(values.std(ddof=1) / np.sqrt(values.size)))


def sigma_delta_limit(dgp: DGPSpec, mc_x: int = ORACLE_MC_X, seed=0) -> OracleValue:
    """
    Limit of sigma^2_delta / delta as delta grows: E[var(Y|X,1) / (2 pi(1|X))].
    """
    grid = oracle_grid(dgp, 0.0)
    values = np.concatenate([
        dgp.sigma2_min / (2.0 * dgp.density_matrix(block, grid)[:, -1])
        for block in _blocks(_covariates(dgp, mc_x, seed), grid)
    ])
    return OracleValue(value=float(values.mean()), mc_se=float(values.std(ddof=1) / np.sqrt(values.size)))


def density_bump(covariates: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Multiplicative density perturbation g(a, x) = sin(2 pi a)(1 + x_1) / 2."""
    return np.sin(2.0 * np.pi * np.asarray(a))[None, :] * (1.0 + covariates[:, :1]) / 2.0


def outcome_bump(covariates: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Additive outcome perturbation f(a, x) = cos(pi a) x_1."""
    return np.cos(np.pi * np.asarray(a))[None, :] * covariates[:, :1]


def perturbed_density(dgp: DGPSpec, covariates: np.ndarray, grid: SupportGrid, epsilon: float) -> np.ndarray:
    """pi (1 + epsilon g), renormalized on grid."""
    density = dgp.density_matrix(covariates, grid) * (1.0 + epsilon * density_bump(covariates, grid.points))
    return density / grid.integrate(density)[:, None]


def remainder_diagnostic(dgp: DGPSpec, epsilon: float, tilt: TiltSpec, mc_x: int = ORACLE_MC_X, seed=0,
                         perturb_density: bool = True, perturb_outcome: bool = True) -> RemainderTerms:
    """
    Second-order remainder of the one-step estimator when pi_hat = pi (1 + eps g)
    (renormalized) and mu_hat = mu + eps f.

    r1 = E[ (int (q/pi) mu_hat pi_hat) (int (q_hat/pi_hat)(pi - pi_hat))^2 ]
    r2 = E[ int (q_hat/pi_hat - q/pi)((pi - pi_hat) mu_hat + (mu - mu_hat) pi) ]
    total is the bias psi(P_hat) - psi(P) + E_P[phi(Z; P_hat)], which equals
    E[(xi_hat - xi)(nu_hat - nu) / nu_hat] = r2 - r1 under quadrature.
    The bounds are the mixed sup-L2 product and the plain L2 product.
    """
    if not 0.0 <= epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in [0, 0.5], got {epsilon}")
    grid = oracle_grid(dgp, tilt.delta)
    delta, weights = tilt.delta, grid.weights
    exp_weights = np.exp(delta * grid.points - np.max(delta * grid.points))
    sums = {"r1": 0.0, "r2": 0.0, "total": 0.0, "ratio_gap": 0.0, "pi_gap": 0.0, "mu_gap": 0.0}
    pi_gap_by_a = np.zeros(grid.size)
    mu_gap_by_a = np.zeros(grid.size)
    covariates = _covariates(dgp, mc_x, seed)
    for block in _blocks(covariates, grid):
        density = dgp.density_matrix(block, grid)
        density_hat = perturbed_density(dgp, block, grid, epsilon if perturb_density else 0.0)
        mu = dgp.mu_grid(block, grid)
        mu_hat = mu + (epsilon if perturb_outcome else 0.0) * outcome_bump(block, grid.points)

        # nu and nu_hat share the exp(-max(delta * a)) scale, which cancels in every ratio below
        nu = (density * exp_weights) @ weights
        nu_hat = (density_hat * exp_weights) @ weights
        ratio = np.where(density > 0, exp_weights / nu[:, None], 0.0)
        ratio_hat = np.where(density_hat > 0, exp_weights / nu_hat[:, None], 0.0)
        xi = (mu * density * ratio) @ weights
        xi_hat = (mu_hat * density_hat * ratio_hat) @ weights

        r1 = ((ratio * mu_hat * density_hat) @ weights) * (((ratio_hat * (density - density_hat)) @ weights) ** 2)
        r2 = ((ratio_hat - ratio) * ((density - density_hat) * mu_hat + (mu - mu_hat) * density)) @ weights
        sums["r1"] += r1.sum()
        sums["r2"] += r2.sum()
        sums["total"] += ((xi_hat - xi) * (nu_hat - nu) / nu_hat).sum()
        sums["ratio_gap"] += (((ratio_hat - ratio) ** 2 * density) @ weights).sum()
        sums["pi_gap"] += (((density_hat - density) ** 2 * density) @ weights).sum()
        sums["mu_gap"] += (((mu_hat - mu) ** 2 * density) @ weights).sum()
        pi_gap_by_a += ((density_hat - density) ** 2).sum(axis=0)
        mu_gap_by_a += ((mu_hat - mu) ** 2).sum(axis=0)

    m = covariates.shape[0]
    sup_pi = float(np.sqrt(pi_gap_by_a.max() / m))
    sup_mu = float(np.sqrt(mu_gap_by_a.max() / m))
    l2_ratio, l2_pi, l2_mu = (float(np.sqrt(sums[key] / m)) for key in ("ratio_gap", "pi_gap", "mu_gap"))
    return RemainderTerms(
        r1=sums["r1"] / m,
        r2=sums["r2"] / m,
        total=sums["total"] / m,
        mixed_bound=sup_pi * sup_mu + sup_pi ** 2,
        l2_bound=l2_ratio * (l2_pi + l2_mu) + l2_pi ** 2,
    )


@dataclass(frozen=True, eq=False)
class OracleOutcomeRegressor:
    """mu from the DGP, optionally shifted by a constant bias."""
    dgp: DGPSpec
    bias: float = 0.0

    def predict(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        return self.dgp.mu(features[:, :-1], features[:, -1]) + self.bias


@dataclass(frozen=True, eq=False)
class OracleDensityRegressor:
    """pi(a_d|x) from the DGP on grid, optionally perturbed by a renormalized bump."""
    dgp: DGPSpec
    grid: SupportGrid
    shift: float = 0.0

    def predict(self, covariates) -> np.ndarray:
        return perturbed_density(self.dgp, np.asarray(covariates, dtype=float), self.grid, self.shift)


@dataclass(frozen=True)
class OracleNuisances:
    """
    Nuisance provider returning the true mu and pi of a DGP in place of fitted
    learners. mu_bias adds a constant to mu; density_shift perturbs pi within its
    support and renormalizes.
    """
    dgp: DGPSpec
    mu_bias: float = 0.0
    density_shift: float = 0.0
    bandwidth: float = 0.0

    def fit(self, data: Dataset, train_index: np.ndarray, fold_id: int, grid: SupportGrid) -> tuple[OutcomeModel, DensityModel]:
        mu = OutcomeModel(fold_id=fold_id, train_index=train_index,
                          fitted=OracleOutcomeRegressor(self.dgp, self.mu_bias))
        density = DensityModel(fold_id=fold_id, train_index=train_index,
                               fitted=OracleDensityRegressor(self.dgp, grid, self.density_shift),
                               grid=grid, bandwidth=self.bandwidth, kernel="oracle")
        return mu, density


def oracle_nuisances(dgp: DGPSpec, mu_bias: float = 0.0, density_shift: float = 0.0) -> OracleNuisances:
    return OracleNuisances(dgp=dgp, mu_bias=mu_bias, density_shift=density_shift)
