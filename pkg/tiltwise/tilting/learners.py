# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0
# pylint: disable=C0301,R0801,W1203

"""
Built-in regressors for the nuisance functions. Each learner is an immutable
settings object whose fit() returns an immutable fitted model; targets may be a
vector or an (n, m) matrix, in which case the m regressions share one fit.
"""

from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np
from sklearn import linear_model
from sklearn.base import BaseEstimator, clone
from sklearn.neighbors import KNeighborsRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from models import LearnerSpec


class FittedRegressor(Protocol):
    def predict(self, features: np.ndarray) -> np.ndarray:
        ...


class Regressor(Protocol):
    def fit(self, features: np.ndarray, targets: np.ndarray) -> FittedRegressor:
        ...


def as_features(features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    if features.ndim != 2:
        raise ValueError(f"features must be a matrix, got shape {features.shape}")
    return features


def _as_targets(targets, rows: int) -> np.ndarray:
    targets = np.asarray(targets, dtype=float)
    if targets.ndim not in (1, 2) or targets.shape[0] != rows:
        raise ValueError(f"targets of shape {targets.shape} do not match {rows} feature rows")
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    return targets


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


# Ridge added to the local slope block of the local-linear normal equations
_SLOPE_RIDGE = 1e-3


def _local_linear(weights: np.ndarray, block: np.ndarray, train: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Intercepts of weighted least-squares lines centred at each query row."""
    b, p = block.shape
    offsets = train[None, :, :] - block[:, None, :]
    gram = np.empty((b, p + 1, p + 1))
    gram[:, 0, 0] = weights.sum(axis=1)
    first = np.einsum("bn,bnj->bj", weights, offsets)
    gram[:, 0, 1:] = first
    gram[:, 1:, 0] = first
    gram[:, 1:, 1:] = np.einsum("bn,bnj,bnk->bjk", weights, offsets, offsets) + _SLOPE_RIDGE * np.eye(p)
    rhs = np.empty((b, p + 1, targets.shape[1]))
    rhs[:, 0, :] = weights @ targets
    for j in range(p):
        rhs[:, j + 1, :] = (weights * offsets[:, :, j]) @ targets
    return np.linalg.solve(gram, rhs)[:, 0, :]


@dataclass(frozen=True, eq=False)
class FittedNadarayaWatson:
    train: np.ndarray
    targets: np.ndarray
    bandwidth: np.ndarray
    chunk_cells: int
    degree: int = 0

    def predict(self, features) -> np.ndarray:
        query = as_features(features) / self.bandwidth
        train_sq = (self.train ** 2).sum(axis=1)
        targets = self.targets if self.targets.ndim == 2 else self.targets[:, None]
        rows = max(1, self.chunk_cells // max(1, self.train.shape[0] * (1 + self.degree * self.train.shape[1])))
        out = []
        for start in range(0, query.shape[0], rows):
            block = query[start:start + rows]
            dist = (block ** 2).sum(axis=1)[:, None] + train_sq[None, :] - 2.0 * block @ self.train.T
            log_w = -0.5 * np.clip(dist, 0.0, None)
            log_w -= log_w.max(axis=1, keepdims=True)
            weights = np.exp(log_w)
            weights /= weights.sum(axis=1, keepdims=True)
            if self.degree == 1 and self.train.shape[1]:
                out.append(_local_linear(weights, block, self.train, targets))
            else:
                out.append(weights @ targets)
        if not out:
            return np.empty((0,) + self.targets.shape[1:])
        predicted = np.concatenate(out, axis=0)
        return predicted if self.targets.ndim == 2 else predicted[:, 0]


@dataclass(frozen=True)
class NadarayaWatson:
    """
    Kernel-weighted average with a product Gaussian kernel. The bandwidth per
    feature is bandwidth_scale * sd * n^(-1/(p+4)). degree=1 fits a local line
    instead of a local constant, which removes the first-order bias at the
    edges of the feature range.
    """
    bandwidth_scale: float = 1.0
    chunk_cells: int = 2_000_000
    degree: int = 0

    def fit(self, features, targets) -> FittedNadarayaWatson:
        if self.degree not in (0, 1):
            raise ValueError(f"degree must be 0 or 1, got {self.degree}")
        features = as_features(features)
        targets = _as_targets(targets, features.shape[0])
        n, p = features.shape
        spread = features.std(axis=0, ddof=1) if n > 1 else np.ones(p)
        spread = np.where(spread > 0, spread, 1.0)
        bandwidth = self.bandwidth_scale * spread * n ** (-1.0 / (p + 4))
        return FittedNadarayaWatson(
            train=_readonly(features / bandwidth),
            targets=_readonly(targets),
            bandwidth=_readonly(bandwidth),
            chunk_cells=self.chunk_cells,
            degree=self.degree,
        )


@dataclass(frozen=True, eq=False)
class FittedMean:
    """Prediction without features: the training mean."""
    mean: np.ndarray

    def predict(self, features) -> np.ndarray:
        rows = as_features(features).shape[0]
        return np.broadcast_to(self.mean, (rows,) + self.mean.shape).copy()


@dataclass(frozen=True, eq=False)
class FittedEstimator:
    """A fitted scikit-learn estimator behind the FittedRegressor protocol."""
    model: BaseEstimator

    def predict(self, features) -> np.ndarray:
        return self.model.predict(as_features(features))


def _fit_estimator(estimator: BaseEstimator, features, targets) -> Union[FittedEstimator, FittedMean]:
    features = as_features(features)
    targets = _as_targets(targets, features.shape[0])
    if features.shape[1] == 0:
        return FittedMean(mean=_readonly(targets.mean(axis=0)))
    return FittedEstimator(model=clone(estimator).fit(features, targets))


@dataclass(frozen=True)
class KNearestNeighbors:
    """Average of the k nearest training targets in standardized feature space."""
    k: int = 25

    def fit(self, features, targets) -> Union[FittedEstimator, FittedMean]:
        k = int(min(max(self.k, 1), as_features(features).shape[0]))
        return _fit_estimator(make_pipeline(StandardScaler(), KNeighborsRegressor(n_neighbors=k)), features, targets)


@dataclass(frozen=True)
class Ridge:
    """Linear least squares with an L2 penalty on the slopes only."""
    alpha: float = 1e-3

    def fit(self, features, targets) -> Union[FittedEstimator, FittedMean]:
        return _fit_estimator(linear_model.Ridge(alpha=self.alpha), features, targets)


LEARNERS = {
    "nadaraya_watson": (NadarayaWatson, {"bandwidth_scale": float, "degree": int}),
    "knn": (KNearestNeighbors, {"k": int}),
    "ridge": (Ridge, {"alpha": float}),
}


def make_learner(spec: Union[LearnerSpec, str]) -> Regressor:
    """
    Function to build a built-in learner from its name and options.
    """
    if isinstance(spec, str):
        spec = LearnerSpec(name=spec)
    learner_cls, allowed = LEARNERS[spec.name]
    unknown = set(spec.options) - set(allowed)
    if unknown:
        raise ValueError(f"unknown options {sorted(unknown)} for learner {spec.name}")
    return learner_cls(**{key: allowed[key](value) for key, value in spec.options.items()})
