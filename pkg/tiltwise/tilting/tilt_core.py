# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Grid quadrature algebra of exponential tilts.

A tilt reweights a conditional treatment density by exp(delta * a) and
renormalizes. Everything here is computed in log space on a SupportGrid with
trapezoid weights, so that the normalizer, tilted moments and the KL divergence
stay finite for |delta| up to several hundred.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from constants import MIN_POINTS_PER_INTERVAL, POINTS_PER_UNIT
from errors import IdenticallyZeroDensity, OutOfSupportQuery

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Slack for hull membership of query points
_HULL_TOL = 1e-12


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SupportGrid:
    """
    Ordered treatment design points with trapezoid weights over one or more
    disjoint closed intervals. Gaps between intervals carry no design points.
    """
    points: np.ndarray
    weights: np.ndarray
    intervals: tuple
    interval_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "intervals", tuple((float(lo), float(hi)) for lo, hi in self.intervals))
        index = np.array(self.interval_index, dtype=int)
        index.setflags(write=False)
        object.__setattr__(self, "interval_index", index)

        if self.points.ndim != 1 or self.points.shape != self.weights.shape:
            raise ValueError("points and weights must be 1-D arrays of equal length")
        if np.any(np.diff(self.points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(self.weights < 0):
            raise ValueError("quadrature weights must be >= 0")
        for k, (lo, hi) in enumerate(self.intervals):
            members = self.points[self.interval_index == k]
            if members.size == 0 or members[0] < lo or members[-1] > hi:
                raise ValueError(f"interval {k} ({lo}, {hi}) does not hold its grid points")
        if abs(self.weights.sum() - self.total_length) > 1e-12 * max(1.0, self.total_length):
            raise ValueError("quadrature weights do not sum to the total interval length")

    @classmethod
    def from_intervals(cls, intervals, points_per_unit: int = POINTS_PER_UNIT,
                       min_points: int = MIN_POINTS_PER_INTERVAL) -> "SupportGrid":
        """
        Build a trapezoid grid with max(min_points, ceil(length * points_per_unit) + 1)
        equally spaced points on each interval.
        """
        ordered = sorted((float(lo), float(hi)) for lo, hi in intervals)
        if not ordered:
            raise ValueError("at least one support interval is required")
        for lo, hi in ordered:
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ValueError(f"invalid support interval ({lo}, {hi})")
        for (_, prev_hi), (lo, _) in zip(ordered, ordered[1:]):
            if lo <= prev_hi:
                raise ValueError("support intervals must be disjoint and separated by a gap")

        points, weights, index = [], [], []
        for k, (lo, hi) in enumerate(ordered):
            count = max(min_points, math.ceil((hi - lo) * points_per_unit) + 1)
            spacing = (hi - lo) / (count - 1)
            local = np.full(count, spacing)
            local[0] = local[-1] = spacing / 2.0
            points.append(np.linspace(lo, hi, count))
            weights.append(local)
            index.append(np.full(count, k))
        return cls(
            points=np.concatenate(points),
            weights=np.concatenate(weights),
            intervals=tuple(ordered),
            interval_index=np.concatenate(index),
        )

    @classmethod
    def unit(cls, points_per_unit: int = POINTS_PER_UNIT,
             min_points: int = MIN_POINTS_PER_INTERVAL) -> "SupportGrid":
        return cls.from_intervals([(0.0, 1.0)], points_per_unit, min_points)

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def lo(self) -> float:
        return self.intervals[0][0]

    @property
    def hi(self) -> float:
        return self.intervals[-1][1]

    @property
    def total_length(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def in_hull(self, a: ArrayLike) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return (a >= self.lo - _HULL_TOL) & (a <= self.hi + _HULL_TOL)

    def in_support(self, a: ArrayLike) -> np.ndarray:
        """True where a falls inside one of the closed intervals."""
        a = np.asarray(a, dtype=float)
        inside = np.zeros(a.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (a >= lo - _HULL_TOL) & (a <= hi + _HULL_TOL)
        return inside

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature over the last axis."""
        return np.asarray(values, dtype=float) @ self.weights


@dataclass(frozen=True, eq=False)
class ConditionalDensitySlice:
    """pi(.|x) evaluated on a SupportGrid."""
    grid: SupportGrid
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.points.shape:
            raise ValueError(f"slice has {values.shape} values for a grid of {self.grid.size} points")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < 0):
            raise ValueError("density values must be >= 0")

    @classmethod
    def from_function(cls, grid: SupportGrid, density) -> "ConditionalDensitySlice":
        return cls(grid=grid, values=np.asarray(density(grid.points), dtype=float))

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def check_normalized(self, tol: float) -> None:
        """
        Raise ValueError unless the quadrature integral lies within tol of one.
        """
        total = self.integral()
        if abs(total - 1.0) > tol:
            raise ValueError(f"slice integrates to {total}, outside 1 +/- {tol}")

    def value_at(self, a: ArrayLike) -> np.ndarray:
        """Piecewise-linear density inside the intervals, zero in gaps."""
        a = np.asarray(a, dtype=float)
        interpolated = np.interp(a, self.grid.points, self.values)
        return np.where(self.grid.in_support(a), interpolated, 0.0)


@dataclass(frozen=True)
class TiltSpec:
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        if not math.isfinite(self.delta):
            raise ValueError(f"tilt delta must be finite, got {self.delta}")


@dataclass(frozen=True, eq=False)
class TiltedSlice(ConditionalDensitySlice):
    """
    q_delta(.|x) on the grid, with nu = exp(cumulant). normalizer is inf when
    nu itself overflows double precision; cumulant stays exact.
    """
    normalizer: float = 1.0
    cumulant: float = 0.0


def _log_terms(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> np.ndarray:
    positive = slice_.values > 0
    if not positive.any():
        raise IdenticallyZeroDensity("conditional density slice is zero at every design point")
    with np.errstate(divide="ignore"):
        log_density = np.log(slice_.values)
    return np.where(positive, tilt.delta * slice_.grid.points + log_density, -np.inf)


def tilt_cumulant(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> float:
    """kappa(delta) = log of the tilt normalizer."""
    return float(logsumexp(_log_terms(slice_, tilt) + slice_.grid.log_weights))


def tilt_normalizer(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> float:
    with np.errstate(over="ignore"):
        return float(np.exp(tilt_cumulant(slice_, tilt)))


def tilt_density(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> TiltedSlice:
    """
    Function to tilt a slice: q = exp(delta * a) * pi / nu, zero wherever pi is zero.
    """
    log_terms = _log_terms(slice_, tilt)
    cumulant = float(logsumexp(log_terms + slice_.grid.log_weights))
    values = np.where(np.isfinite(log_terms), np.exp(log_terms - cumulant), 0.0)
    with np.errstate(over="ignore"):
        normalizer = float(np.exp(cumulant))
    return TiltedSlice(grid=slice_.grid, values=values, normalizer=normalizer, cumulant=cumulant)


def likelihood_ratio(slice_: ConditionalDensitySlice, tilt: TiltSpec, a: ArrayLike):
    """
    q_delta(a|x) / pi(a|x) = exp(delta * a) / nu where pi(a|x) > 0, and 0 where
    pi(a|x) = 0 (including gaps between support intervals).
    """
    scalar = np.ndim(a) == 0
    query = np.atleast_1d(np.asarray(a, dtype=float))
    if not np.all(slice_.grid.in_hull(query)):
        raise OutOfSupportQuery(f"treatment value outside [{slice_.grid.lo}, {slice_.grid.hi}]")
    cumulant = tilt_cumulant(slice_, tilt)
    density = slice_.value_at(query)
    with np.errstate(over="ignore"):
        ratio = np.where(density > 0, np.exp(tilt.delta * query - cumulant), 0.0)
    return float(ratio[0]) if scalar else ratio


def tilted_moment(slice_: ConditionalDensitySlice, tilt: TiltSpec, order: int, central: bool = False) -> float:
    if order not in (1, 2, 3):
        raise ValueError(f"moment order must be 1, 2 or 3, got {order}")
    tilted = tilt_density(slice_, tilt)
    grid = slice_.grid
    if not central:
        return float(grid.integrate(tilted.values * grid.points ** order))
    mean = grid.integrate(tilted.values * grid.points)
    return float(grid.integrate(tilted.values * (grid.points - mean) ** order))


def kl_divergence(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> float:
    """D_KL(q_delta || pi) = delta * E_Q[A] - kappa(delta), clipped at zero."""
    tilted = tilt_density(slice_, tilt)
    mean = float(slice_.grid.integrate(tilted.values * slice_.grid.points))
    return max(tilt.delta * mean - tilted.cumulant, 0.0)


def kl_derivatives(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> tuple[float, float]:
    """
    First and second delta-derivatives of the KL divergence:
    delta * var_Q and var_Q + delta * (third central moment under Q).
    """
    variance = tilted_moment(slice_, tilt, 2, central=True)
    third = tilted_moment(slice_, tilt, 3, central=True)
    return tilt.delta * variance, variance + tilt.delta * third


def tilted_skewness(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> float:
    variance = tilted_moment(slice_, tilt, 2, central=True)
    if variance <= 0:
        return 0.0
    return tilted_moment(slice_, tilt, 3, central=True) / variance ** 1.5


def kl_is_concave(slice_: ConditionalDensitySlice, tilt: TiltSpec) -> bool:
    """
    True when the KL divergence bends downward at delta, which for delta > 0 is
    -skewness_Q > 1 / (delta * sd_Q).
    """
    return kl_derivatives(slice_, tilt)[1] < 0


def detect_support(a_values: ArrayLike, min_gap: float, merge_isolated: bool = False) -> list[tuple[float, float]]:
    """
    Split observed treatment values into support intervals wherever consecutive
    sorted values are more than min_gap apart. A value cut off on both sides is
    an error, or with merge_isolated joins the neighbouring interval.
    """
    if not min_gap > 0:
        raise ValueError("min_gap must be > 0")
    values = np.unique(np.asarray(a_values, dtype=float))
    if values.size < 2:
        raise ValueError("at least two distinct treatment values are needed to detect a support")
    breaks = np.flatnonzero(np.diff(values) > min_gap)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [values.size - 1]])
    intervals, pending = [], None
    for start, end in zip(starts, ends):
        if values[end] <= values[start]:
            if not merge_isolated:
                raise ValueError(
                    f"treatment value {values[start]} is isolated by gaps wider than {min_gap}; increase the gap"
                )
            if intervals:
                intervals[-1] = (intervals[-1][0], float(values[end]))
            elif pending is None:
                pending = float(values[start])
            continue
        lo = float(values[start]) if pending is None else pending
        pending = None
        intervals.append((lo, float(values[end])))
    if not intervals:
        return [(float(values[0]), float(values[-1]))]
    return intervals


def row_cumulants(grid: SupportGrid, density: np.ndarray, delta: float) -> np.ndarray:
    """
    Cumulants of many slices at once. density has one slice per row; rows with
    no positive value get -inf.
    """
    density = np.asarray(density, dtype=float)
    with np.errstate(divide="ignore"):
        log_terms = np.log(np.clip(density, 0.0, None)) + delta * grid.points + grid.log_weights
        return logsumexp(log_terms, axis=-1)


def row_tilts(grid: SupportGrid, density: np.ndarray, delta: float, cumulants: np.ndarray) -> np.ndarray:
    """Tilted slices per row given their (possibly floored) cumulants."""
    density = np.clip(np.asarray(density, dtype=float), 0.0, None)
    with np.errstate(divide="ignore"):
        log_density = np.log(density)
    with np.errstate(invalid="ignore", over="ignore"):
        log_q = log_density + delta * grid.points - np.asarray(cumulants)[..., None]
        return np.where(density > 0, np.exp(log_q), 0.0)
