"""Publishable index: factor draws rescaled to GDP growth moments, with bands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegeneratePosteriorError, InputError, InsufficientDataError

MIN_GDP_OBS = 8
BAND = (16.0, 84.0)


@dataclass
class IndexSeries:
    stamps: list
    mean: np.ndarray
    median: np.ndarray
    p16: np.ndarray
    p84: np.ndarray
    factor_moments: tuple[float, float]
    gdp_moments: tuple[float, float]

    def __len__(self) -> int:
        return self.mean.size

    @property
    def trough(self) -> int:
        return int(np.argmin(self.mean))


def _as_draws(factor_draws) -> np.ndarray:
    d = np.asarray(factor_draws, dtype=float)
    if d.ndim == 1:
        d = d[None, :]
    if d.ndim != 2 or d.shape[0] == 0 or d.shape[1] < 2:
        raise InputError(f"factor draws must be (draws, periods) with at least 2 periods, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InputError("factor draws contain non-finite values")
    return d


def gdp_moments(gdp_growth) -> tuple[float, float]:
    g = np.asarray(gdp_growth, dtype=float).ravel()
    g = g[~np.isnan(g)]
    if g.size < MIN_GDP_OBS:
        raise InsufficientDataError(f"index scaling needs at least {MIN_GDP_OBS} GDP observations, got {g.size}")
    return float(g.mean()), float(g.std(ddof=1))


def factor_moments(factor_draws) -> tuple[float, float]:
    """Sample mean and standard deviation of the posterior-mean path."""
    path = _as_draws(factor_draws).mean(axis=0)
    sd = float(path.std(ddof=1))
    if not sd > 0:
        raise DegeneratePosteriorError("posterior-mean factor has zero variance; cannot scale the index")
    return float(path.mean()), sd


def affine(x, fm: tuple[float, float], gm: tuple[float, float]):
    return gm[0] + gm[1] * (np.asarray(x, dtype=float) - fm[0]) / fm[1]


def scale_index(factor_draws, gdp_growth, stamps=None) -> IndexSeries:
    """Rescale every draw with one affine map and summarise per stamp.

    The map sends the posterior-mean factor path to GDP growth's sample mean
    and standard deviation; applying the same map to all draws keeps the
    bands coherent with the central path.
    """
    d = _as_draws(factor_draws)
    gm = gdp_moments(gdp_growth)
    fm = factor_moments(d)
    scaled = affine(d, fm, gm)
    med, lo, hi = np.percentile(scaled, [50.0, *BAND], axis=0)
    stamps = list(stamps) if stamps is not None else list(range(d.shape[1]))
    if len(stamps) != d.shape[1]:
        raise InputError(f"{len(stamps)} stamps for {d.shape[1]} periods")
    return IndexSeries(stamps, affine(d.mean(axis=0), fm, gm), med, lo, hi, fm, gm)


class IndexScaler(TransformerMixin, BaseEstimator):
    """Learns the affine map from factor draws ``X`` (draws, periods) and GDP growth ``y``."""

    def fit(self, X, y):
        self.factor_moments_ = factor_moments(X)
        self.gdp_moments_ = gdp_moments(y)
        self.n_features_in_ = _as_draws(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "factor_moments_")
        return affine(X, self.factor_moments_, self.gdp_moments_)

    def inverse_transform(self, X):
        check_is_fitted(self, "factor_moments_")
        return affine(X, self.gdp_moments_, self.factor_moments_)
