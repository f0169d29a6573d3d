# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W0613,W1203

"""
Pydantic models for configuration documents and for every record tiltwise
serializes (estimates, dose-response results, simulation reports).
"""

import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

LearnerName = Literal["nadaraya_watson", "knn", "ridge"]


class LearnerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: LearnerName
    options: dict[str, float] = Field(default_factory=dict)


class EstimatorConfig(BaseModel):
    """
    Settings consumed by the cross-fitted estimator. The default instance is built in constants.py.
    """
    model_config = ConfigDict(frozen=True)

    folds: int = Field(ge=2)
    bandwidths: list[float]
    bandwidth: Optional[float] = None
    points_per_unit: int = Field(ge=2)
    min_points: int = Field(ge=2)
    outcome_learner: LearnerSpec
    density_learner: LearnerSpec
    seed: int
    alpha: float = Field(gt=0.0, lt=1.0)
    boundary_correction: bool
    cv_design_points: int = Field(ge=1)
    parameterization: Literal["quadrature", "regression"]
    n_jobs: int
    support_gap: Optional[float] = Field(default=None, gt=0.0)

    @field_validator("bandwidths")
    @classmethod
    def bandwidths_positive(cls, value):
        if any(not h > 0 for h in value):
            raise ValueError("candidate bandwidths must be > 0")
        return value

    @field_validator("bandwidth")
    @classmethod
    def bandwidth_positive(cls, value):
        if value is not None and not value > 0:
            raise ValueError("bandwidth must be > 0")
        return value


class DataConfig(BaseModel):
    """Where the data comes from and how columns are preprocessed."""

    input_path: Path
    outcome: str
    treatment: str
    covariates: Union[Literal["rest"], list[str]]
    rescale: bool
    log_outcome: bool
    log_treatment: bool
    out_dir: Path

    @model_validator(mode="after")
    def columns_distinct(self):
        columns = [self.outcome, self.treatment]
        if self.covariates != "rest":
            columns += list(self.covariates)
        if len(set(columns)) != len(columns):
            raise ValueError(f"columns must be distinct, got {columns}")
        return self


def _learner(base: LearnerSpec, name: str) -> LearnerSpec:
    # a named learner keeps the tuned options of the default when it is the same learner
    return base if base.name == name else LearnerSpec(name=name)


class EstimationSettings(BaseModel):
    """Estimator knobs shared by the analyze, dose and simulate commands."""

    folds: int = Field(ge=2)
    bandwidths: list[float]
    bandwidth: Optional[float] = None
    design_points: int = Field(ge=2)
    outcome_learner: LearnerName
    density_learner: LearnerName
    seed: int
    alpha: float = Field(gt=0.0, lt=1.0)
    boundary_correction: bool
    support_gap: Optional[float] = Field(default=None, gt=0.0)
    threads: int = Field(ge=1)

    @field_validator("bandwidths")
    @classmethod
    def bandwidths_positive(cls, value):
        if any(not h > 0 for h in value):
            raise ValueError("candidate bandwidths must be > 0")
        return value

    def estimator_config(self, base: EstimatorConfig) -> EstimatorConfig:
        """
        Overlay these settings on a base EstimatorConfig.
        """
        return base.model_copy(update={
            "folds": self.folds,
            "bandwidths": list(self.bandwidths),
            "bandwidth": self.bandwidth,
            "points_per_unit": self.design_points,
            "outcome_learner": _learner(base.outcome_learner, self.outcome_learner),
            "density_learner": _learner(base.density_learner, self.density_learner),
            "seed": self.seed,
            "alpha": self.alpha,
            "boundary_correction": self.boundary_correction,
            "support_gap": self.support_gap,
            "n_jobs": self.threads,
        })


class RunConfig(DataConfig, EstimationSettings):
    """
    Configuration of the analyze command.
    """

    delta_min: float
    delta_max: float
    delta_steps: int = Field(ge=1)
    deltas: Optional[list[float]] = None
    tilted_densities: bool

    @model_validator(mode="after")
    def delta_grid_valid(self):
        if self.deltas is not None:
            if len(self.deltas) == 0:
                raise ValueError("delta list is empty")
            if not all(math.isfinite(d) for d in self.deltas):
                raise ValueError("delta list contains non-finite values")
        elif not (math.isfinite(self.delta_min) and math.isfinite(self.delta_max)):
            raise ValueError("delta grid bounds must be finite")
        elif self.delta_max < self.delta_min:
            raise ValueError("delta_max must be >= delta_min")
        return self

    def delta_grid(self) -> np.ndarray:
        if self.deltas is not None:
            return np.asarray(self.deltas, dtype=float)
        return np.linspace(self.delta_min, self.delta_max, self.delta_steps)


class DoseConfig(DataConfig, EstimationSettings):
    target: Literal["edge-upper", "edge-lower", "point"]
    at: Optional[float] = None
    c: float = Field(gt=0.0)

    @model_validator(mode="after")
    def point_needs_location(self):
        if self.target == "point" and self.at is None:
            raise ValueError("the point target needs --at")
        return self


class SimulationConfig(EstimationSettings):
    """
    Configuration of the simulate command.
    """

    experiment: Literal["rate", "coverage", "bounds", "remainder", "edge"]
    dgp: str
    deltas: list[float]
    ns: list[int]
    n: int = Field(ge=1)
    replications: int = Field(ge=1)
    epsilons: list[float]
    c: float = Field(gt=0.0)
    mc_x: int = Field(ge=1)
    oracle_nuisances: bool
    check: bool
    out_dir: Path

    @field_validator("deltas", "ns", "epsilons")
    @classmethod
    def non_empty(cls, value):
        if len(value) == 0:
            raise ValueError("grid must not be empty")
        return value


class EstimateDiagnostics(BaseModel):
    bandwidth: float
    floor_engaged: int = 0
    large_ratio_count: int = 0
    max_ratio: float = 0.0
    fold_sizes: list[int] = Field(default_factory=list)
    parameterization: str = "quadrature"


class IncrementalEstimate(BaseModel):
    """
    One point of the incremental effect curve with its Wald interval.
    """

    delta: float
    psi_hat: float
    sigma2_hat: float = Field(ge=0.0)
    se: float = Field(ge=0.0)
    ci_lower: float
    ci_upper: float
    n: int
    alpha: float
    fold_psi: list[float]
    diagnostics: EstimateDiagnostics

    @model_validator(mode="after")
    def interval_ordered(self):
        if not self.ci_lower <= self.psi_hat <= self.ci_upper:
            raise ValueError(
                f"confidence interval [{self.ci_lower}, {self.ci_upper}] does not contain {self.psi_hat}"
            )
        return self


class DoseResponseEstimate(BaseModel):
    target: Literal["edge-upper", "edge-lower", "point"]
    a_prime: float
    delta_used: float = Field(gt=0.0)
    direction: Literal[-1, 1]
    c: float
    estimate: float
    se: float
    n: int
    components: dict[str, float] = Field(default_factory=dict)

    @field_validator("estimate")
    @classmethod
    def estimate_finite(cls, value):
        if not math.isfinite(value):
            raise ValueError("dose-response estimate is not finite")
        return value


class IngestReport(BaseModel):
    rows_read: int
    rows_kept: int
    dropped_rows: list[int] = Field(default_factory=list)


class RateCell(BaseModel):
    n: int
    delta: float
    replications: int
    oracle_psi: float
    rmse: float
    mean_error: float
    efficient_rmse: Optional[float] = None


class SlopeCheck(BaseModel):
    axis: Literal["delta", "n"]
    fixed_at: float
    slope: float
    target: float
    tolerance: float
    passed: bool


class RateReport(BaseModel):
    dgp: str
    oracle_nuisances: bool
    cells: list[RateCell]
    slopes: list[SlopeCheck] = Field(default_factory=list)


class CoverageReport(BaseModel):
    dgp: str
    delta: float
    n: int
    replications: int
    oracle_psi: float
    coverage: float
    mean_psi_hat: float
    mean_se: float
    oracle_nuisances: bool
    lower_target: float
    upper_target: float
    passed: bool


class BoundsRow(BaseModel):
    dgp: str
    delta: float
    lower: float
    efficiency_bound: float
    mc_se: float
    upper: float
    passed: bool


class RemainderRow(BaseModel):
    dgp: str
    delta: float
    epsilon: float
    r1: float
    r2: float
    total: float
    mixed_bound: float
    l2_bound: float


class EdgeRateCell(BaseModel):
    n: int
    delta: float
    replications: int
    truth: float
    rmse: float
    mean_error: float


class EdgeRateReport(BaseModel):
    dgp: str
    side: Literal["upper", "lower"]
    c: float
    cells: list[EdgeRateCell]
    slope: SlopeCheck


class RemainderCheck(BaseModel):
    epsilon: float
    term: Literal["r1", "r2"]
    ratio: float
    lower_target: float
    upper_target: float
    passed: bool


class EdgeBiasRow(BaseModel):
    delta: float
    bias: float
    bound: float
    refined: float
    passed: bool


class ExportConfig(BaseModel):
    """Configuration of the simulate-data command."""

    dgp: str
    n: int = Field(ge=1)
    seed: int
    out: Path
