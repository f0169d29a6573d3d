# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Dose-response values recovered from steep tilts.

As delta grows, q_delta piles its mass at the upper edge of the support and
psi(delta) tends to E[Y^1]; the bias is O(1/delta) and the standard error is
O(sqrt(delta / n)), so delta = c * n^(1/3) balances the two. Interior points are
handled by splitting the sample at a' and running one edge estimate on each
side.
"""

from typing import Literal, NamedTuple, Optional, Union

import numpy as np
from aws_lambda_powertools import Logger
from joblib import Parallel, delayed

import constants
from constants import DOSE_SCHEDULE_C, MIN_ESTIMATION_ROWS, MIN_HALF_SAMPLE_ROWS, ORACLE_MC_X
from errors import EmptyHalfSample, InteriorPointRequired, PositiveDeltaRequired, TooFewRows
from models import DoseResponseEstimate, EstimatorConfig
from simlab.dgps import DGPSpec
from simlab.oracles import oracle_efficiency_bound
from tilting.estimator import CrossFitter, Dataset, NuisanceProvider, influence_variance
from tilting.tilt_core import TiltSpec

logger = Logger(service="tiltwise", child=True)


class EdgeBiasBound(NamedTuple):
    bound: float
    refined: float


def schedule_delta(n: int, c: float = DOSE_SCHEDULE_C) -> float:
    return float(c * n ** (1.0 / 3.0))


def estimate_edge(data: Dataset, side: Literal["upper", "lower"], c: float = DOSE_SCHEDULE_C,
                  config: Optional[EstimatorConfig] = None,
                  nuisances: Optional[NuisanceProvider] = None) -> DoseResponseEstimate:
    """
    Function to estimate E[Y^1] (upper) or E[Y^0] (lower) with delta = +/- c * n^(1/3).
    """
    if data.n < MIN_ESTIMATION_ROWS:
        raise TooFewRows(f"estimation needs at least {MIN_ESTIMATION_ROWS} rows, got {data.n}")
    if side not in ("upper", "lower"):
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    magnitude = schedule_delta(data.n, c)
    direction = 1 if side == "upper" else -1
    fitter = CrossFitter(data, config, nuisances)
    result = fitter.estimate(TiltSpec(direction * magnitude))
    edge = fitter.grid.hi if side == "upper" else fitter.grid.lo
    logger.info("Estimated dose-response at the support edge", extra={
        "side": side, "delta": direction * magnitude, "estimate": result.psi_hat,
    })
    return DoseResponseEstimate(
        target=f"edge-{side}",
        a_prime=float(data.to_raw_scale(edge)),
        delta_used=magnitude,
        direction=direction,
        c=c,
        estimate=result.psi_hat,
        se=result.se,
        n=data.n,
        components={"ci_lower": result.ci_lower, "ci_upper": result.ci_upper},
    )


def split_at_point(data: Dataset, a_prime: float) -> tuple[Dataset, Dataset]:
    """
    Halves of the sample at a' (ties to the lower half), each with its
    treatment rescaled so that a' sits on the edge of [0, 1].
    """
    lo, hi = float(data.treatment.min()), float(data.treatment.max())
    if not lo < a_prime < hi:
        raise InteriorPointRequired(f"a' = {a_prime} must lie strictly inside ({lo}, {hi})")
    lower = np.flatnonzero(data.treatment <= a_prime)
    upper = np.flatnonzero(data.treatment > a_prime)
    for name, half in (("lower", lower), ("upper", upper)):
        if half.size < MIN_HALF_SAMPLE_ROWS:
            raise EmptyHalfSample(f"{name} half has {half.size} rows, at least {MIN_HALF_SAMPLE_ROWS} are required")
    return (
        data.rescaled_subset(lower, lo, a_prime),
        data.rescaled_subset(upper, a_prime, hi),
    )


def estimate_at_point(data: Dataset, a_prime: float, c: float = DOSE_SCHEDULE_C,
                      config: Optional[EstimatorConfig] = None) -> DoseResponseEstimate:
    """
    Function to estimate E[Y^a'] at an interior point: a positive tilt on the
    units below a', a negative tilt on the units above, averaged with equal weights.
    """
    config = config or constants.config
    lower_data, upper_data = split_at_point(data, a_prime)
    below, above = Parallel(n_jobs=min(2, config.n_jobs), prefer="threads")([
        delayed(estimate_edge)(lower_data, "upper", c, config),
        delayed(estimate_edge)(upper_data, "lower", c, config),
    ])
    estimate = 0.5 * (below.estimate + above.estimate)
    se = 0.5 * float(np.hypot(below.se, above.se))
    logger.info("Estimated dose-response at an interior point", extra={"a_prime": a_prime, "estimate": estimate})
    return DoseResponseEstimate(
        target="point",
        a_prime=float(data.to_raw_scale(a_prime)),
        delta_used=0.5 * (below.delta_used + above.delta_used),
        direction=1,
        c=c,
        estimate=estimate,
        se=se,
        n=data.n,
        components={
            "lower_estimate": below.estimate,
            "lower_se": below.se,
            "lower_n": below.n,
            "lower_delta": below.delta_used,
            "upper_estimate": above.estimate,
            "upper_se": above.se,
            "upper_n": above.n,
            "upper_delta": above.delta_used,
        },
    )


def sigma_delta_ratio(data_or_dgp: Union[Dataset, DGPSpec], tilt: TiltSpec,
                      config: Optional[EstimatorConfig] = None, mc_x: int = ORACLE_MC_X,
                      seed: int = 0, nuisances: Optional[NuisanceProvider] = None) -> float:
    """
    sigma^2_delta / delta, from the oracle efficiency bound for a DGPSpec or from
    the cross-fitted influence values for a Dataset.
    """
    if not tilt.delta > 0:
        raise PositiveDeltaRequired(f"sigma_delta_ratio needs delta > 0, got {tilt.delta}")
    if isinstance(data_or_dgp, DGPSpec):
        return oracle_efficiency_bound(data_or_dgp, tilt, mc_x, seed=seed).value / tilt.delta
    values, _, _ = CrossFitter(data_or_dgp, config, nuisances).influence(tilt)
    return influence_variance(values) / tilt.delta


def edge_bias_bound(lipschitz: float, pi_max: float, pi_min: float, delta: float) -> EdgeBiasBound:
    """
    Bound on |psi(delta) - E[Y^1]| for an L-Lipschitz outcome regression:
    (L pi_max / pi_min) / delta, and the sharper (L pi_max / pi_min)(1/delta - 1/(e^delta - 1)).
    """
    if not delta > 0:
        raise PositiveDeltaRequired(f"edge bias bound needs delta > 0, got {delta}")
    scale = lipschitz * pi_max / pi_min
    return EdgeBiasBound(bound=scale / delta, refined=scale * (1.0 / delta - 1.0 / np.expm1(delta)))
