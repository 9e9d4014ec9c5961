"""Gibbs sampler for the mixed-frequency factor model, DIC and the model grid."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import samplers
from ._validation import check_gdp, check_panel
from .exceptions import EstimationError, HfeiError, InputError
from .panel import GrowthPanel, MixedPanel, demean
from .samplers import Priors, VolPath
from .ssmfilter import DIFFUSE_SCALE, loglikelihood, simulation_smoother, smoothed_state
from .statespace import ChainConfig, ModelSpec, StateLayout, build_layout, build_system

logger = logging.getLogger(__name__)

VOLATILITY_CONFIGS = (("none", False, False), ("factor", True, False), ("idio", False, True), ("both", True, True))


def spec_for_panel(spec: ModelSpec, panel: MixedPanel) -> ModelSpec:
    return replace(spec, n_q=panel.n_q, n_m=panel.n_m, n_w=panel.n_w)


def spec_hash(spec: ModelSpec) -> str:
    return hashlib.sha256(repr(asdict(spec)).encode()).hexdigest()[:16]


@dataclass
class PosteriorDraws:
    """Kept Gibbs output, one leading axis entry per kept iteration.

    ``sigma_idio`` is (K, T, n); ``loglik`` holds log f(y | volatilities, theta)
    evaluated at each kept draw.
    """

    factor: np.ndarray
    loadings: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    sigma_factor: np.ndarray
    sigma_idio: np.ndarray
    omega2_factor: np.ndarray
    omega2_idio: np.ndarray
    loglik: np.ndarray
    spec: ModelSpec
    seed: int | None = None
    ids: list = field(default_factory=list)
    gdp_index: int = 0
    init_scale: float = DIFFUSE_SCALE
    diagnostics: dict = field(default_factory=dict)

    BLOCKS = ("factor", "loadings", "phi", "rho", "sigma_factor", "sigma_idio",
              "omega2_factor", "omega2_idio", "loglik")

    @property
    def n_kept(self) -> int:
        return self.loglik.shape[0]

    def posterior_mean(self) -> dict:
        if self.n_kept == 0:
            raise InputError("no kept draws")
        return {
            "loadings": self.loadings.mean(axis=0),
            "phi": self.phi.mean(axis=0),
            "rho": self.rho.mean(axis=0),
            "sigma_factor": self.sigma_factor.mean(axis=0),
            "sigma_idio": self.sigma_idio.mean(axis=0),
        }

    @property
    def factor_mean(self) -> np.ndarray:
        return self.factor.mean(axis=0)


@dataclass(frozen=True)
class DicReport:
    mean_deviance: float
    deviance_at_mean: float
    p_d: float
    dic: float

    @classmethod
    def from_logliks(cls, logliks, loglik_at_mean) -> "DicReport":
        dbar = -2.0 * float(np.mean(logliks))
        dtheta = -2.0 * float(loglik_at_mean)
        p_d = dbar - dtheta
        return cls(dbar, dtheta, p_d, dbar + p_d)


def prepare_data(panel: MixedPanel) -> tuple[np.ndarray, np.ndarray]:
    """Demeaned observation matrix and the column means that were removed."""
    if panel.means is not None:
        return panel.values, panel.means
    dm = demean(panel)
    return dm.values, dm.means


def _initial_values(Y, layout: StateLayout, spec: ModelSpec, gdp: int):
    """Crude starting point: a cross-sectional proxy factor scaled like the GDP series."""
    T, n = Y.shape
    filled = np.empty_like(Y)
    scale = np.ones(n)
    for i in range(n):
        ok = np.flatnonzero(~np.isnan(Y[:, i]))
        if ok.size >= 2:
            filled[:, i] = np.interp(np.arange(T), ok, Y[ok, i])
            scale[i] = np.std(Y[ok, i]) or 1.0
        else:
            filled[:, i] = 0.0
    z = filled / scale
    proxy = z.mean(axis=1) * scale[gdp]
    pv = max(float(np.var(proxy)), 1e-12)
    lam = np.zeros((n, spec.s + 1))
    sig_i = np.empty(n)
    for i in range(n):
        ok = ~np.isnan(Y[:, i])
        yv = float(np.var(Y[ok, i])) if ok.sum() >= 2 else pv
        if ok.sum() >= 2 and np.var(proxy[ok]) > 0:
            lam[i, 0] = np.cov(Y[ok, i], proxy[ok])[0, 1] / np.var(proxy[ok], ddof=1)
        else:
            lam[i, 0] = 1.0
        # half of the observed variance, undone for window averaging
        sig_i[i] = np.sqrt(max(0.5 * yv * layout.frequencies[i].window, 1e-12))
    lam[gdp, 0] = 1.0
    phi, _ = spec.priors.minnesota(spec.p_f, spec.priors.phi_first_mean)
    rho = np.zeros((n, spec.p_q))
    sig_f = np.sqrt(pv * (1.0 - min(phi[0] ** 2, 0.99)))
    return lam, phi, rho, sig_f, sig_i


def _extended(path0: np.ndarray, lag_value: float) -> np.ndarray:
    return np.concatenate([[lag_value], path0])


def _split_half_psrf(x: np.ndarray) -> np.ndarray:
    """Potential scale reduction across the two halves of one chain, per parameter."""
    K = x.shape[0]
    h = K // 2
    if h < 2:
        return np.full(x.shape[1:], np.nan)
    a, b = x[:h], x[h:2 * h]
    means = np.stack([a.mean(0), b.mean(0)])
    W = 0.5 * (a.var(0, ddof=1) + b.var(0, ddof=1))
    B = h * means.var(0, ddof=1)
    var_hat = (h - 1) / h * W + B / h
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(np.where(W > 0, var_hat / W, np.nan))


def run_gibbs(spec: ModelSpec, panel: MixedPanel, seed=None, gdp=None,
              init_scale: float = DIFFUSE_SCALE, callback=None) -> PosteriorDraws:
    """Run the sampler and keep every post-burn-in draw.

    Each sweep draws the states, then loadings, idiosyncratic AR
    coefficients, factor AR coefficients and volatilities. Volatility paths
    are constant (inverse-gamma variance draws) for components whose
    stochastic-volatility switch is off.
    """
    spec = spec_for_panel(spec, panel)
    gdp = check_gdp(panel, gdp)
    Y, _ = prepare_data(panel)
    T, n = Y.shape
    layout = build_layout(spec, panel.frequencies)
    pri = spec.priors
    s, p_f, p_q = spec.s, spec.p_f, spec.p_q
    if T <= max(p_f, p_q + s) + 2:
        raise InputError(f"spine of {T} pseudo-weeks too short for the chosen lag orders")
    rng = np.random.default_rng(seed)
    init = (np.zeros(layout.n_s), init_scale * np.eye(layout.n_s))

    lam, phi, rho, sf0, si0 = _initial_values(Y, layout, spec, gdp)
    vol_f = VolPath(np.full(T, sf0), pri.omega_scale)
    vol_i = [VolPath(np.full(T, si0[i]), pri.omega_scale) for i in range(n)]
    idio_slots = layout.idio_slots

    K = spec.chain.kept
    burn = spec.chain.burn_in
    out = {
        "factor": np.empty((K, T)),
        "loadings": np.empty((K, n, s + 1)),
        "phi": np.empty((K, p_f)),
        "rho": np.empty((K, n, p_q)),
        "sigma_factor": np.empty((K, T)),
        "sigma_idio": np.empty((K, T, n)),
        "omega2_factor": np.full(K, np.nan),
        "omega2_idio": np.full((K, n), np.nan),
        "loglik": np.empty(K),
    }

    def sigmas():
        return np.column_stack([vol_f.sigma] + [v.sigma for v in vol_i])

    def store(k, factor):
        out["factor"][k] = factor
        out["loadings"][k] = lam
        out["phi"][k] = phi
        out["rho"][k] = rho
        out["sigma_factor"][k] = vol_f.sigma
        out["sigma_idio"][k] = np.column_stack([v.sigma for v in vol_i])
        if spec.sv_factor:
            out["omega2_factor"][k] = vol_f.omega2
        if spec.sv_idio:
            out["omega2_idio"][k] = [v.omega2 for v in vol_i]

    it = 0
    try:
        for it in range(1, spec.chain.iterations + 1):
            system = build_system(layout, lam, phi, rho)
            draw, ll_prev = simulation_smoother(system, Y, sigmas(), init, rng, return_loglik=True)
            if it - 1 > burn:
                out["loglik"][it - 2 - burn] = ll_prev

            f = draw[:, 0]
            f_ext = _extended(f, draw[0, 1])
            u = draw[:, idio_slots]
            # Latent weekly counterpart of every series under the current loadings.
            yw = u + lam[:, 0] * f[:, None]
            if s:
                yw += lam[:, 1] * f_ext[:-1, None]

            sig_i = np.column_stack([v.sigma for v in vol_i])
            lam = samplers.draw_loadings(f, sig_i, rho, yw, pri, rng, s=s, gdp_index=gdp)

            u = yw - lam[:, 0] * f[:, None]
            if s:
                u -= lam[:, 1] * f_ext[:-1, None]
            rho = np.vstack([samplers.draw_ar_idio(u[:, i], vol_i[i].sigma, pri, rng, p_q) for i in range(n)])
            phi = samplers.draw_ar_factor(f, vol_f.sigma, pri, rng, p_f)

            eps = f[p_f:] - samplers.lag_matrix(f, p_f) @ phi
            vol_f = _update_vol(eps, vol_f, p_f, spec.sv_factor, pri, rng)
            for i in range(n):
                eta = u[p_q:, i] - samplers.lag_matrix(u[:, i], p_q) @ rho[i]
                vol_i[i] = _update_vol(eta, vol_i[i], p_q, spec.sv_idio, pri, rng)

            if it > burn:
                store(it - 1 - burn, f)
            if callback is not None:
                callback(it)
        system = build_system(layout, lam, phi, rho)
        out["loglik"][K - 1] = loglikelihood(system, Y, sigmas(), init)
    except (HfeiError, np.linalg.LinAlgError, FloatingPointError) as exc:
        err = EstimationError(f"Gibbs sampler failed at iteration {it}: {exc}", iteration=it)
        err.partial = {k: v[:max(it - 1 - burn, 0)] for k, v in out.items()}
        raise err from exc

    draws = PosteriorDraws(**out, spec=spec, seed=seed, ids=panel.ids, gdp_index=gdp, init_scale=init_scale)
    draws.diagnostics = {
        "psrf_loadings": _split_half_psrf(draws.loadings.reshape(K, -1)),
        "psrf_phi": _split_half_psrf(draws.phi),
        "psrf_rho": _split_half_psrf(draws.rho.reshape(K, -1)),
    }
    return draws


def _update_vol(resid, current: VolPath, p: int, stochastic: bool, pri: Priors, rng) -> VolPath:
    """New volatility path; the first ``p`` periods copy the first modelled one."""
    if stochastic:
        win = VolPath(current.sigma[p:], current.omega2)
        new = samplers.draw_volpath(resid, win, pri, rng)
        sigma = np.concatenate([np.full(p, new.sigma[0]), new.sigma])
        return VolPath(sigma, new.omega2)
    var = samplers.draw_variance(resid, pri, rng)
    return VolPath(np.full(current.sigma.size, np.sqrt(var)), current.omega2)


def loglik_at(draws: PosteriorDraws, panel: MixedPanel, loadings, phi, rho, sigma_factor, sigma_idio) -> float:
    """log f(y | volatility paths, parameters) from one filter pass."""
    Y, _ = prepare_data(panel)
    layout = build_layout(draws.spec, panel.frequencies)
    system = build_system(layout, loadings, phi, rho)
    sig = np.column_stack([sigma_factor, sigma_idio])
    init = (np.zeros(layout.n_s), draws.init_scale * np.eye(layout.n_s))
    return loglikelihood(system, Y, sig, init)


def recompute_loglik(draws: PosteriorDraws, panel: MixedPanel, k: int) -> float:
    """Re-evaluate the stored conditional log-likelihood of kept draw ``k``."""
    return loglik_at(draws, panel, draws.loadings[k], draws.phi[k], draws.rho[k],
                     draws.sigma_factor[k], draws.sigma_idio[k])


def compute_dic(draws: PosteriorDraws, panel: MixedPanel, spec: ModelSpec | None = None) -> DicReport:
    """Conditional DIC with the posterior mean of parameters and volatility paths as plug-in."""
    if draws.n_kept == 0:
        raise InputError("cannot compute DIC from an empty set of draws")
    if spec is not None and spec_for_panel(spec, panel) != draws.spec:
        raise InputError("spec does not match the one the draws were produced with")
    pm = draws.posterior_mean()
    ll_mean = loglik_at(draws, panel, pm["loadings"], pm["phi"], pm["rho"], pm["sigma_factor"], pm["sigma_idio"])
    return DicReport.from_logliks(draws.loglik, ll_mean)


@dataclass
class GridCell:
    spec: ModelSpec
    report: DicReport | None
    error: str | None = None


def grid_specs(base_spec: ModelSpec) -> list[ModelSpec]:
    """The eight (heterogeneity x volatility) variants of ``base_spec``."""
    return [replace(base_spec, s=s, sv_factor=vf, sv_idio=vi)
            for _, vf, vi in VOLATILITY_CONFIGS for s in (0, 1)]


def _grid_cell(spec, panel, seed, gdp, init_scale):
    try:
        draws = run_gibbs(spec, panel, seed=seed, gdp=gdp, init_scale=init_scale)
        return GridCell(draws.spec, compute_dic(draws, panel))
    except HfeiError as exc:
        logger.error("grid cell %s failed: %s", spec.label(), exc)
        return GridCell(spec_for_panel(spec, panel), None, f"{exc.category}: {exc}")


def run_grid(panel: MixedPanel, base_spec: ModelSpec, seed=None, gdp=None,
             init_scale: float = DIFFUSE_SCALE, n_jobs: int | None = None) -> list[GridCell]:
    """Estimate all eight specifications with the same seed and report DIC for each."""
    specs = grid_specs(base_spec)
    if n_jobs in (None, 1):
        return [_grid_cell(sp, panel, seed, gdp, init_scale) for sp in specs]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(_grid_cell)(sp, panel, seed, gdp, init_scale) for sp in specs)


def best_cell(cells: list[GridCell]) -> GridCell:
    """Lowest DIC among the cells that ran."""
    ok = [c for c in cells if c.report is not None]
    if not ok:
        raise InputError("no grid cell produced a DIC")
    return min(ok, key=lambda c: c.report.dic)


class BayesianDFM(TransformerMixin, BaseEstimator):
    """Single-factor mixed-frequency dynamic factor model estimated by Gibbs sampling.

    ``fit`` takes a :class:`~hfei.panel.MixedPanel` of growth rates, or a
    ``(T, n)`` array with NaN for missing entries together with
    ``frequencies``. ``transform`` returns the smoothed factor at the
    posterior-mean parameters as a ``(T, 1)`` array.

    Parameters
    ----------
    p_f, p_q : int
        Autoregressive orders of the factor and idiosyncratic components.
    s : {0, 1}
        Number of factor lags each series loads on.
    sv_factor, sv_idio : bool
        Stochastic volatility in the factor / idiosyncratic innovations.
    n_iter, burn_in : int
        Total sweeps and how many of them are discarded.
    gdp : str or int, optional
        Series whose contemporaneous loading is fixed to one. Defaults to the
        first (quarterly) column.
    """

    def __init__(self, p_f=2, p_q=3, s=0, sv_factor=False, sv_idio=False, n_iter=7500, burn_in=2500,
                 gdp=None, priors=None, init_scale=DIFFUSE_SCALE, frequencies=None, random_state=None):
        self.p_f = p_f
        self.p_q = p_q
        self.s = s
        self.sv_factor = sv_factor
        self.sv_idio = sv_idio
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.gdp = gdp
        self.priors = priors
        self.init_scale = init_scale
        self.frequencies = frequencies
        self.random_state = random_state

    def _spec(self) -> ModelSpec:
        return ModelSpec(
            p_f=self.p_f, p_q=self.p_q, s=self.s, sv_factor=self.sv_factor, sv_idio=self.sv_idio,
            priors=self.priors if self.priors is not None else Priors(),
            chain=ChainConfig(self.n_iter, self.burn_in),
        )

    def fit(self, X, y=None):
        panel = check_panel(X, self.frequencies)
        self.panel_ = panel if panel.means is not None else demean(panel)
        self.draws_ = run_gibbs(self._spec(), self.panel_, seed=self.random_state, gdp=self.gdp,
                                init_scale=self.init_scale)
        pm = self.draws_.posterior_mean()
        self.loadings_ = pm["loadings"]
        self.phi_ = pm["phi"]
        self.rho_ = pm["rho"]
        self.sigma_factor_ = pm["sigma_factor"]
        self.sigma_idio_ = pm["sigma_idio"]
        self.factor_ = self.draws_.factor_mean
        self.means_ = self.panel_.means
        self.n_features_in_ = panel.shape[1]
        return self

    def _sigmas_for(self, T):
        sig = np.column_stack([self.sigma_factor_, self.sigma_idio_])
        if T <= sig.shape[0]:
            return sig[:T]
        return np.vstack([sig, np.repeat(sig[-1:], T - sig.shape[0], axis=0)])

    def _system(self):
        layout = build_layout(self.draws_.spec, self.panel_.frequencies)
        return layout, build_system(layout, self.loadings_, self.phi_, self.rho_)

    def _centered(self, X):
        panel = check_panel(X, self.frequencies if self.frequencies is not None else self.panel_.frequencies)
        if panel.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} series, got {panel.shape[1]}")
        return panel.values - self.means_

    def transform(self, X):
        check_is_fitted(self, "draws_")
        Y = self._centered(X)
        layout, system = self._system()
        init = (np.zeros(layout.n_s), self.init_scale * np.eye(layout.n_s))
        states = smoothed_state(system, Y, self._sigmas_for(Y.shape[0]), init)
        return states[:, :1]

    def score(self, X, y=None):
        """Log-likelihood of ``X`` at the posterior-mean parameters."""
        check_is_fitted(self, "draws_")
        Y = self._centered(X)
        layout, system = self._system()
        init = (np.zeros(layout.n_s), self.init_scale * np.eye(layout.n_s))
        return loglikelihood(system, Y, self._sigmas_for(Y.shape[0]), init)

    def dic(self) -> DicReport:
        check_is_fitted(self, "draws_")
        return compute_dic(self.draws_, self.panel_)
