"""Conditional posterior draws used inside one Gibbs sweep.

Everything here works on plain numpy arrays; the orchestration (which
series, which lags, which volatility switches) lives in ``estimator``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DegeneratePosteriorError, InsufficientDataError, InputError

logger = logging.getLogger(__name__)

# Kim, Shephard & Chib (1998) seven-component approximation to log chi^2(1).
KSC_PROBS = np.array([0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750])
KSC_MEANS = np.array([-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819]) - 1.2704
KSC_VARS = np.array([5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261])

LOG_OFFSET = 1e-6
MAX_REJECTIONS = 100


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters of the factor model.

    AR coefficients get Minnesota priors with variance ``gamma / h**2`` at
    lag ``h``; the factor's first-lag mean is ``phi_first_mean``. Random-walk
    variances of log volatilities get IG(omega_dof/2, omega_dof*omega_scale/2);
    constant innovation variances (no stochastic volatility) get
    IG(var_dof/2, var_dof*var_scale/2).
    """

    phi_first_mean: float = 0.9
    gamma: float = 0.2
    loading_var: float = 10.0
    omega_dof: float = 1.0
    omega_scale: float = 1e-4
    var_dof: float = 1.0
    var_scale: float = 1e-4
    h0_mean: float = 0.0
    h0_var: float = 10.0

    def __post_init__(self):
        for name in ("gamma", "loading_var", "omega_dof", "omega_scale", "var_dof", "var_scale", "h0_var"):
            if not getattr(self, name) > 0:
                raise InputError(f"prior {name} must be positive")

    def minnesota(self, p: int, first_mean: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        mean = np.zeros(p)
        mean[0] = first_mean
        return mean, self.gamma / np.arange(1, p + 1) ** 2

    @property
    def omega_ig(self) -> tuple[float, float]:
        return 0.5 * self.omega_dof, 0.5 * self.omega_dof * self.omega_scale

    @property
    def var_ig(self) -> tuple[float, float]:
        return 0.5 * self.var_dof, 0.5 * self.var_dof * self.var_scale


@dataclass(frozen=True)
class VolPath:
    """Standard deviations ``sigma`` (length T) and the log-variance RW variance."""

    sigma: np.ndarray
    omega2: float

    @property
    def log_var(self) -> np.ndarray:
        return 2.0 * np.log(self.sigma)


def is_stationary(coefs) -> bool:
    """True when every root of the AR companion matrix is inside the unit circle."""
    c = np.atleast_1d(np.asarray(coefs, dtype=float))
    if c.size == 1:
        return abs(c[0]) < 1.0
    comp = np.zeros((c.size, c.size))
    comp[0] = c
    comp[np.arange(1, c.size), np.arange(c.size - 1)] = 1.0
    return bool(np.max(np.abs(np.linalg.eigvals(comp))) < 1.0)


def lag_matrix(x: np.ndarray, p: int) -> np.ndarray:
    """Rows t = p..T-1 of [x_{t-1}, ..., x_{t-p}]."""
    T = x.size
    return np.column_stack([x[p - h:T - h] for h in range(1, p + 1)]) if T > p else np.empty((0, p))


def normal_regression_draw(y, X, weights, prior_mean, prior_var, rng):
    """One draw from the Gaussian posterior of ``y = X b + e``, ``var(e_t) = 1/weights_t``."""
    Xw = X * weights[:, None]
    precision = np.diag(1.0 / prior_var) + X.T @ Xw
    rhs = prior_mean / prior_var + Xw.T @ y
    chol = np.linalg.cholesky(precision)
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    return mean + np.linalg.solve(chol.T, rng.standard_normal(mean.size)), mean


def _draw_ar(path, sigma, p, prior_mean, prior_var, rng, what):
    path = np.asarray(path, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), path.shape)
    if path.size < p:
        raise InsufficientDataError(f"{what}: path of length {path.size} too short for AR({p})")
    y = path[p:]
    X = lag_matrix(path, p)
    w = 1.0 / sigma[p:] ** 2
    for _ in range(MAX_REJECTIONS):
        draw, _ = normal_regression_draw(y, X, w, prior_mean, prior_var, rng)
        if is_stationary(draw):
            return draw
    logger.warning("%s: %d non-stationary draws in a row, using the prior mean", what, MAX_REJECTIONS)
    return prior_mean.copy()


def draw_ar_idio(idio_path, sigma_path, priors: Priors, rng, p: int) -> np.ndarray:
    """AR(p) coefficients of an idiosyncratic component, prior centred at zero."""
    mean, var = priors.minnesota(p, 0.0)
    return _draw_ar(idio_path, sigma_path, p, mean, var, rng, "idiosyncratic AR")


def draw_ar_factor(factor_path, sigma_path, priors: Priors, rng, p: int) -> np.ndarray:
    """AR(p) coefficients of the factor, prior centred at (0.9, 0, ...)."""
    mean, var = priors.minnesota(p, priors.phi_first_mean)
    return _draw_ar(factor_path, sigma_path, p, mean, var, rng, "factor AR")


def quasi_difference(x: np.ndarray, rho: np.ndarray, start: int) -> np.ndarray:
    """Rows ``t >= start`` of ``x_t - sum_j rho_j x_{t-j}`` (requires ``start >= len(rho)``)."""
    out = x[start:].copy()
    for j, r in enumerate(rho, start=1):
        out -= r * x[start - j:x.size - j]
    return out


def draw_loading(y, factor, sigma, rho, priors: Priors, rng, s: int = 0, fix_contemporaneous=None):
    """GLS draw of one series' loadings on ``f_t, ..., f_{t-s}``.

    ``y`` is the series at weekly frequency, ``factor`` the factor path on the
    same spine, ``sigma`` the idiosyncratic innovation scale path and ``rho``
    its AR coefficients. Both sides are quasi-differenced by ``1 - rho(L)``
    and rows are weighted by ``1/sigma_t``. With ``fix_contemporaneous`` set,
    the lag-0 loading is pinned to that value and only lagged loadings are
    drawn.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(factor, dtype=float)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    start = rho.size + s
    if y.size <= start:
        raise InsufficientDataError(f"series of length {y.size} too short for loading regression")
    if not np.any(f):
        raise DegeneratePosteriorError("factor path has zero variance; loading posterior is degenerate")
    ytil = quasi_difference(y, rho, start)
    X = np.column_stack([quasi_difference(np.roll(f, k), rho, start) for k in range(s + 1)])
    w = 1.0 / sigma[start:] ** 2
    out = np.empty(s + 1)
    if fix_contemporaneous is not None:
        out[0] = fix_contemporaneous
        if s == 0:
            return out
        ytil = ytil - fix_contemporaneous * X[:, 0]
        X = X[:, 1:]
        out[1:], _ = normal_regression_draw(ytil, X, w, np.zeros(s), np.full(s, priors.loading_var), rng)
        return out
    out[:], _ = normal_regression_draw(ytil, X, w, np.zeros(s + 1), np.full(s + 1, priors.loading_var), rng)
    return out


def draw_loadings(factor_path, idio_sigma_paths, rho, data, priors: Priors, rng, s: int = 0, gdp_index: int = 0):
    """Loadings of every series; series ``gdp_index`` has its contemporaneous loading fixed at 1.

    ``data`` is ``(T, n)`` weekly-frequency observations (latent weekly values
    for monthly and quarterly series).
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[1]
    sig = np.asarray(idio_sigma_paths, dtype=float)
    rho = np.asarray(rho, dtype=float).reshape(n, -1)
    out = np.empty((n, s + 1))
    for i in range(n):
        fix = 1.0 if i == gdp_index else None
        out[i] = draw_loading(data[:, i], factor_path, sig[:, i], rho[i], priors, rng, s, fix)
    return out


def draw_variance(residuals, priors: Priors, rng) -> float:
    """Constant innovation variance from its inverse-gamma conditional."""
    e = np.asarray(residuals, dtype=float)
    shape, scale = priors.var_ig
    return 1.0 / rng.gamma(shape + 0.5 * e.size, 1.0 / (scale + 0.5 * e @ e))


@njit(cache=True)
def _local_level_ffbs(obs, obs_var, omega2, m0, v0, z):
    """Draw h from h_t = h_{t-1} + N(0, omega2), obs_t = h_t + N(0, obs_var_t)."""
    T = obs.size
    a = np.empty(T)
    P = np.empty(T)
    pred_m = m0
    pred_v = v0
    for t in range(T):
        if t > 0:
            pred_m = a[t - 1]
            pred_v = P[t - 1] + omega2
        gain = pred_v / (pred_v + obs_var[t])
        a[t] = pred_m + gain * (obs[t] - pred_m)
        P[t] = pred_v * (1.0 - gain)
    h = np.empty(T)
    h[T - 1] = a[T - 1] + np.sqrt(P[T - 1]) * z[T - 1]
    for t in range(T - 2, -1, -1):
        g = P[t] / (P[t] + omega2)
        mean = a[t] + g * (h[t + 1] - a[t])
        var = P[t] * (1.0 - g)
        h[t] = mean + np.sqrt(max(var, 0.0)) * z[t]
    return h


def draw_mixture_indicators(ystar, log_var, rng) -> np.ndarray:
    """Component of the seven-point mixture for every period."""
    resid = ystar[:, None] - log_var[:, None] - KSC_MEANS[None, :]
    logp = np.log(KSC_PROBS) - 0.5 * np.log(KSC_VARS) - 0.5 * resid ** 2 / KSC_VARS
    logp -= logp.max(axis=1, keepdims=True)
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(ystar.size) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), KSC_PROBS.size - 1)


def draw_volpath(residuals, current: VolPath, priors: Priors, rng, sample_omega: bool = True) -> VolPath:
    """Stochastic-volatility update for one shock series.

    Draws the mixture indicators given the current log variances, the whole
    log-variance path by forward filtering and backward sampling, and then
    the random-walk variance from its inverse-gamma conditional (unless
    ``sample_omega`` is False).
    """
    e = np.asarray(residuals, dtype=float)
    if e.shape != current.sigma.shape:
        raise InputError(f"residuals {e.shape} and volatility path {current.sigma.shape} differ in length")
    ystar = np.log(e ** 2 + LOG_OFFSET)
    comp = draw_mixture_indicators(ystar, current.log_var, rng)
    h = _local_level_ffbs(
        ystar - KSC_MEANS[comp], KSC_VARS[comp], float(current.omega2),
        priors.h0_mean, priors.h0_var, rng.standard_normal(e.size),
    )
    omega2 = current.omega2
    if sample_omega:
        omega2 = draw_omega2(h, priors, rng)
    return VolPath(np.exp(0.5 * h), float(omega2))


def draw_omega2(log_var, priors: Priors, rng) -> float:
    dh = np.diff(np.asarray(log_var, dtype=float))
    shape, scale = priors.omega_ig
    return 1.0 / rng.gamma(shape + 0.5 * dh.size, 1.0 / (scale + 0.5 * dh @ dh))
