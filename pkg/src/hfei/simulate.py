"""Draw synthetic panels from the factor model itself, with the hidden truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calendar import PseudoWeekStamp
from .exceptions import InputError
from .panel import Frequency, GrowthPanel, SeriesMeta
from .samplers import is_stationary
from .statespace import ModelSpec

BURN = 300


@dataclass(frozen=True)
class RegimeParams:
    """Two-state level shifts added to the factor: ``p``/``q`` are the stay probabilities of expansion/recession."""

    mu0: float = -2.0
    mu1: float = 2.0
    p: float = 0.95
    q: float = 0.95

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.q <= 1):
            raise InputError("regime stay probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class TrueParams:
    """Data-generating parameters.

    ``rho`` may have fewer columns than the model's ``p_q``; missing lags
    are zero. ``omega2_*`` of zero means constant volatility.
    """

    loadings: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    sigma_factor: float = 1.0
    sigma_idio: np.ndarray | float = 1.0
    omega2_factor: float = 0.0
    omega2_idio: np.ndarray | float = 0.0
    regime: RegimeParams | None = None

    def __post_init__(self):
        lam = np.asarray(self.loadings, dtype=float)
        object.__setattr__(self, "loadings", lam[:, None] if lam.ndim == 1 else lam)
        object.__setattr__(self, "phi", np.atleast_1d(np.asarray(self.phi, dtype=float)))
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "rho", rho[:, None] if rho.ndim == 1 else rho)
        n = self.loadings.shape[0]
        object.__setattr__(self, "sigma_idio", np.broadcast_to(np.asarray(self.sigma_idio, float), (n,)).copy())
        object.__setattr__(self, "omega2_idio", np.broadcast_to(np.asarray(self.omega2_idio, float), (n,)).copy())
        if self.rho.shape[0] != n:
            raise InputError("rho needs one row per series")
        if not is_stationary(self.phi) or not all(is_stationary(r) for r in self.rho):
            raise InputError("explosive AR parameters: simulation needs stationary coefficients")
        if self.sigma_factor < 0 or np.any(self.sigma_idio < 0):
            raise InputError("innovation scales must be non-negative")
        if self.omega2_factor < 0 or np.any(self.omega2_idio < 0):
            raise InputError("log-volatility variances must be non-negative")


@dataclass
class SimulatedTruth:
    factor: np.ndarray
    idio: np.ndarray
    latent: np.ndarray
    sigma_factor: np.ndarray
    sigma_idio: np.ndarray
    params: TrueParams
    extra: dict = field(default_factory=dict)


def _sv_path(rng, T, sigma0, omega2):
    if omega2 == 0 or sigma0 == 0:
        return np.full(T, float(sigma0))
    h = 2.0 * np.log(sigma0) + np.cumsum(np.sqrt(omega2) * rng.standard_normal(T))
    return np.exp(0.5 * h)


def _ar(rng, coefs, sig):
    p = coefs.size
    x = np.zeros(sig.size + p)
    e = sig * rng.standard_normal(sig.size)
    for t in range(sig.size):
        x[t + p] = coefs @ x[t:t + p][::-1] + e[t]
    return x[p:]


def simulate_panel(params: TrueParams, spec: ModelSpec, T: int, seed=None,
                   origin: PseudoWeekStamp = PseudoWeekStamp(2000, 1, 1),
                   leading_missing=None, ids=None) -> tuple[GrowthPanel, SimulatedTruth]:
    """Simulate ``T`` pseudo-weeks for ``spec.n_q`` quarterly, ``n_m`` monthly, ``n_w`` weekly series.

    Weekly observables are ``sum_k loadings[i, k] f_{t-k} + u_{i,t}``; a monthly
    (quarterly) value is the mean of the latent weekly values over the 4 (12)
    pseudo-weeks ending at its observation stamp. ``leading_missing`` masks
    that many leading spine periods per series. With ``params.regime`` set
    the factor is a Markov-switching level plus the AR deviation, and the
    regime path is returned in ``truth.extra["states"]``.
    """
    n = spec.n
    lam = params.loadings
    if lam.shape != (n, spec.s + 1):
        raise InputError(f"loadings must be {(n, spec.s + 1)} for this spec, got {lam.shape}")
    if params.phi.size > spec.p_f or params.rho.shape[1] > spec.p_q:
        raise InputError("true AR orders exceed the model's lag orders")
    rng = np.random.default_rng(seed)
    total = T + BURN
    sig_f = _sv_path(rng, total, params.sigma_factor, params.omega2_factor)
    f_full = _ar(rng, params.phi, sig_f)
    extra = {}
    if params.regime is not None:
        r = params.regime
        _, states = simulate_regime_path(r.mu0, r.mu1, 0.0, r.p, r.q, total, seed=rng)
        f_full = f_full + np.where(states == 1, r.mu1, r.mu0)
        extra["states"] = states[BURN:]
    sig_i = np.column_stack([_sv_path(rng, total, params.sigma_idio[i], params.omega2_idio[i]) for i in range(n)]) \
        if n else np.empty((total, 0))
    u_full = np.column_stack([_ar(rng, params.rho[i], sig_i[:, i]) for i in range(n)]) if n else np.empty((total, 0))

    latent_full = u_full.copy()
    for k in range(spec.s + 1):
        latent_full[k:] += lam[:, k] * f_full[:total - k, None]
    keep = slice(BURN, total)
    latent = latent_full[keep]
    freqs = [Frequency.QUARTERLY] * spec.n_q + [Frequency.MONTHLY] * spec.n_m + [Frequency.WEEKLY] * spec.n_w
    index = [origin.shift(t) for t in range(T)]

    obs = np.full((T, n), np.nan)
    for i, freq in enumerate(freqs):
        w = freq.window
        for t, stamp in enumerate(index):
            if freq is Frequency.WEEKLY:
                obs[t, i] = latent[t, i]
            elif (stamp.is_month_end if freq is Frequency.MONTHLY else stamp.is_quarter_end):
                # window may reach into the burn-in when the spine starts mid-period
                obs[t, i] = np.mean(latent_full[BURN + t - w + 1:BURN + t + 1, i])
    if leading_missing is not None:
        lead = np.broadcast_to(np.asarray(leading_missing, dtype=int), (n,))
        for i in range(n):
            obs[:lead[i], i] = np.nan

    ids = list(ids) if ids is not None else (
        [f"q{i}" for i in range(spec.n_q)] + [f"m{i}" for i in range(spec.n_m)] + [f"w{i}" for i in range(spec.n_w)]
    )
    panel = GrowthPanel.from_columns(index, dict(zip(ids, obs.T)), [SeriesMeta(i, f) for i, f in zip(ids, freqs)])
    truth = SimulatedTruth(f_full[keep], u_full[keep], latent, sig_f[keep], sig_i[keep], params, extra)
    return panel, truth


def simulate_regime_path(mu0: float, mu1: float, sigma: float, p: float, q: float, T: int, seed=None,
                         start_state: int | None = None):
    """Two-state Markov-switching series.

    ``p`` is the probability of staying in expansion (state 1) and ``q`` of
    staying in recession (state 0). Returns ``(values, states)``.
    """
    for name, v in (("p", p), ("q", q)):
        if not 0 <= v <= 1:
            raise InputError(f"{name} must be a probability")
    rng = np.random.default_rng(seed)
    states = np.empty(T, dtype=int)
    ergodic = 0.5 if p + q == 2 else (1 - q) / (2 - p - q)
    states[0] = start_state if start_state is not None else int(rng.random() < ergodic)
    u = rng.random(T)
    for t in range(1, T):
        stay = p if states[t - 1] == 1 else q
        states[t] = states[t - 1] if u[t] < stay else 1 - states[t - 1]
    values = np.where(states == 1, mu1, mu0) + sigma * rng.standard_normal(T)
    return values, states
