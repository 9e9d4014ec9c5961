"""Second-stage two-state Markov-switching model with episode-specific means.

Regime 0 is recession, regime 1 expansion. Every maximal run of one regime
(an episode) has its own mean level, drawn from the regime's Normal prior.
The regime path is sampled with the episode means integrated out, which
turns forward filtering / backward sampling into an exact recursion over
change points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.stats import truncnorm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InputError

logger = logging.getLogger(__name__)

CALL_LEVEL = 0.65
DATE_LEVEL = 0.5
END_LEVEL = 0.35
MAX_ORDER_TRIES = 200


@dataclass(frozen=True)
class RegimeSpec:
    """Priors and chain settings.

    ``p`` is P(stay in expansion), ``q`` is P(stay in recession). The prior on
    the noise is Gamma(shape, rate) on the precision ``1/sigma**2``. With
    ``standardize`` the input path is z-scored before fitting so the default
    mean priors apply to any factor scale.
    """

    m0: float = -1.0
    v0: float = 1.0
    m1: float = 1.0
    v1: float = 1.0
    a_p: float = 9.0
    b_p: float = 1.0
    a_q: float = 9.0
    b_q: float = 1.0
    prec_shape: float = 2.0
    prec_rate: float = 1.0
    n_iter: int = 2000
    burn_in: int = 500
    order_means: bool = True
    standardize: bool = False

    def __post_init__(self):
        for name in ("v0", "v1", "a_p", "b_p", "a_q", "b_q", "prec_shape", "prec_rate"):
            if not getattr(self, name) > 0:
                raise InputError(f"regime prior {name} must be positive")
        if self.n_iter < 1 or not 0 <= self.burn_in < self.n_iter:
            raise InputError("need n_iter >= 1 and 0 <= burn_in < n_iter")

    @property
    def kept(self) -> int:
        return self.n_iter - self.burn_in


@dataclass(frozen=True)
class DatedRecession:
    """Indices along the probability path; the ``*_stamp`` fields mirror them when stamps are known.

    ``end`` is the first period back below 0.5 (the first expansion period);
    ``end_call`` and ``end`` are None while the recession is still open.
    """

    start: int
    call: int
    end_call: int | None
    end: int | None
    start_stamp: object = None
    call_stamp: object = None
    end_call_stamp: object = None
    end_stamp: object = None

    @property
    def ongoing(self) -> bool:
        return self.end is None


@dataclass
class RegimePosterior:
    recession_prob: np.ndarray
    p: np.ndarray
    q: np.ndarray
    sigma2: np.ndarray
    mean_path: np.ndarray
    recession_mean: np.ndarray
    expansion_mean: np.ndarray
    n_episodes: np.ndarray
    recessions: list = field(default_factory=list)
    spec: RegimeSpec | None = None
    seed: int | None = None
    center: float = 0.0
    scale: float = 1.0
    n_truncated: int = 0

    @property
    def classification(self) -> np.ndarray:
        """0 where recession is more likely than not, 1 elsewhere (matches the state coding)."""
        return (self.recession_prob <= 0.5).astype(int)


# segment log marginal likelihood, mean integrated out
@njit(cache=True)
def _segment_loglik(S, SS, n, m, V, sig2):
    xbar = S / n
    ss = SS - S * xbar
    if ss < 0.0:
        ss = 0.0
    vn = V + sig2 / n
    return (-0.5 * n * np.log(2.0 * np.pi * sig2) - 0.5 * np.log(V * n / sig2 + 1.0)
            - 0.5 * ss / sig2 - 0.5 * (xbar - m) ** 2 / vn)


@njit(cache=True)
def _logsumexp(x):
    mx = np.max(x)
    if not np.isfinite(mx):
        return mx
    return mx + np.log(np.sum(np.exp(x - mx)))


@njit(cache=True)
def _segment_forward(y, m, V, log_stay, log_switch, log_init, sig2):
    """log F[k, b]: data up to b with a regime-k episode ending exactly at b."""
    T = y.size
    cs = np.zeros(T + 1)
    cs2 = np.zeros(T + 1)
    for t in range(T):
        cs[t + 1] = cs[t] + y[t]
        cs2[t + 1] = cs2[t] + y[t] * y[t]
    F = np.full((2, T), -np.inf)
    terms = np.empty(T)
    for b in range(T):
        for k in range(2):
            other = 1 - k
            for a in range(b + 1):
                if a == 0:
                    head = log_init[k]
                else:
                    head = F[other, a - 1] + log_switch[other]
                n = b - a + 1
                terms[a] = head + (n - 1) * log_stay[k] + _segment_loglik(
                    cs[b + 1] - cs[a], cs2[b + 1] - cs2[a], n, m[k], V[k], sig2)
            F[k, b] = _logsumexp(terms[:b + 1])
    return F, cs, cs2


@njit(cache=True)
def _segment_backward(F, cs, cs2, m, V, log_stay, log_switch, log_init, sig2, u):
    T = F.shape[1]
    states = np.empty(T, dtype=np.int64)
    last = np.array([F[0, T - 1], F[1, T - 1]])
    w = np.exp(last - _logsumexp(last))
    k = 0 if u[0] < w[0] else 1
    b = T - 1
    j = 1
    terms = np.empty(T)
    while b >= 0:
        other = 1 - k
        for a in range(b + 1):
            head = log_init[k] if a == 0 else F[other, a - 1] + log_switch[other]
            n = b - a + 1
            terms[a] = head + (n - 1) * log_stay[k] + _segment_loglik(
                cs[b + 1] - cs[a], cs2[b + 1] - cs2[a], n, m[k], V[k], sig2)
        tot = _logsumexp(terms[:b + 1])
        r = u[j] if j < u.size else 0.5
        j += 1
        acc = 0.0
        start = 0
        for a in range(b, -1, -1):
            acc += np.exp(terms[a] - tot)
            if r < acc:
                start = a
                break
        for t in range(start, b + 1):
            states[t] = k
        b = start - 1
        k = other
    return states


def sample_regime_path(y, spec: RegimeSpec, p: float, q: float, sigma2: float, rng) -> np.ndarray:
    """One exact draw of the regime path given (p, q, sigma2), episode means integrated out."""
    y = np.ascontiguousarray(y, dtype=float)
    m = np.array([spec.m0, spec.m1])
    V = np.array([spec.v0, spec.v1])
    with np.errstate(divide="ignore"):
        log_stay = np.log(np.array([q, p]))
        log_switch = np.log(np.array([1.0 - q, 1.0 - p]))
    log_init = np.log(np.array([0.5, 0.5]))
    F, cs, cs2 = _segment_forward(y, m, V, log_stay, log_switch, log_init, float(sigma2))
    u = rng.random(y.size + 1)
    return _segment_backward(F, cs, cs2, m, V, log_stay, log_switch, log_init, float(sigma2), u)


def episodes(states) -> list[tuple[int, int, int]]:
    """Maximal runs as (regime, start, stop) with ``stop`` exclusive."""
    s = np.asarray(states)
    if s.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(s)) + 1
    bounds = np.concatenate([[0], cuts, [s.size]])
    return [(int(s[a]), int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def transition_counts(states) -> np.ndarray:
    """``counts[i, j]`` = number of moves from regime i to regime j."""
    s = np.asarray(states, dtype=int)
    counts = np.zeros((2, 2), dtype=int)
    np.add.at(counts, (s[:-1], s[1:]), 1)
    return counts


def transition_posterior(states, spec: RegimeSpec) -> tuple[tuple[float, float], tuple[float, float]]:
    """Beta parameters of p (expansion stay) and q (recession stay) given a path."""
    c = transition_counts(states)
    return (spec.a_p + c[1, 1], spec.b_p + c[1, 0]), (spec.a_q + c[0, 0], spec.b_q + c[0, 1])


def _draw_means(y, eps, spec: RegimeSpec, sigma2, rng):
    prior = {0: (spec.m0, spec.v0), 1: (spec.m1, spec.v1)}
    post = []
    for k, a, b in eps:
        m, V = prior[k]
        n = b - a
        vn = 1.0 / (1.0 / V + n / sigma2)
        post.append((vn * (m / V + y[a:b].sum() / sigma2), np.sqrt(vn)))
    mu_mean = np.array([pm for pm, _ in post])
    mu_sd = np.array([ps for _, ps in post])
    kinds = np.array([k for k, _, _ in eps])
    rec, exp_ = kinds == 0, kinds == 1
    for _ in range(MAX_ORDER_TRIES):
        mu = mu_mean + mu_sd * rng.standard_normal(mu_mean.size)
        if not spec.order_means or not rec.any() or not exp_.any() or mu[rec].max() < mu[exp_].mean():
            return mu, False
    # fall back: keep the expansion draw, truncate recession means below its average
    bound = mu[exp_].mean()
    hi = (bound - mu_mean[rec]) / mu_sd[rec]
    mu[rec] = truncnorm.rvs(-np.inf, hi, loc=mu_mean[rec], scale=mu_sd[rec], random_state=rng)
    return mu, True


def fit_regime(factor, spec: RegimeSpec | None = None, seed=None, stamps=None) -> RegimePosterior:
    """Gibbs sampler for the switching model on a point factor path.

    Sweep: regime path (collapsed over episode means), episode means from
    their Normal conditionals, ``p`` and ``q`` from Beta conditionals, the
    noise precision from its Gamma conditional. A regime absent from a draw
    contributes a prior draw to that draw's regime-mean summary.
    """
    spec = spec or RegimeSpec()
    y = np.asarray(factor, dtype=float).ravel()
    if y.size < 2:
        raise InputError("regime model needs at least 2 periods")
    if not np.all(np.isfinite(y)):
        raise InputError("factor path must be finite")
    center, scale = 0.0, 1.0
    if spec.standardize:
        center, scale = float(y.mean()), float(y.std(ddof=1))
        if not scale > 0:
            raise InputError("cannot standardize a constant factor path")
        y = (y - center) / scale
    rng = np.random.default_rng(seed)
    T, K = y.size, spec.kept
    p, q = spec.a_p / (spec.a_p + spec.b_p), spec.a_q / (spec.a_q + spec.b_q)
    sigma2 = max(0.25 * float(np.var(y)), 1e-8)
    out = {name: np.empty(K) for name in ("p", "q", "sigma2", "rec", "exp")}
    n_eps = np.empty(K, dtype=int)
    mean_path = np.empty((K, T))
    rec_count = np.zeros(T)
    truncated = 0
    for it in range(spec.n_iter):
        states = sample_regime_path(y, spec, p, q, sigma2, rng)
        eps = episodes(states)
        mu, cut = _draw_means(y, eps, spec, sigma2, rng)
        truncated += cut
        level = np.empty(T)
        for (_, a, b), m in zip(eps, mu):
            level[a:b] = m
        (ap, bp), (aq, bq) = transition_posterior(states, spec)
        p, q = rng.beta(ap, bp), rng.beta(aq, bq)
        resid = y - level
        sigma2 = 1.0 / rng.gamma(spec.prec_shape + 0.5 * T, 1.0 / (spec.prec_rate + 0.5 * resid @ resid))
        k = it - spec.burn_in
        if k >= 0:
            kinds = np.array([e[0] for e in eps])
            out["p"][k], out["q"][k], out["sigma2"][k] = p, q, sigma2
            out["rec"][k] = mu[kinds == 0].mean() if (kinds == 0).any() else spec.m0 + np.sqrt(spec.v0) * rng.standard_normal()
            out["exp"][k] = mu[kinds == 1].mean() if (kinds == 1).any() else spec.m1 + np.sqrt(spec.v1) * rng.standard_normal()
            n_eps[k] = len(eps)
            mean_path[k] = center + scale * level
            rec_count += states == 0
    if truncated:
        logger.warning("episode-mean ordering fell back to truncation in %d of %d sweeps", truncated, spec.n_iter)
    prob = rec_count / K
    return RegimePosterior(
        recession_prob=prob, p=out["p"], q=out["q"], sigma2=out["sigma2"] * scale ** 2,
        mean_path=mean_path, recession_mean=center + scale * out["rec"],
        expansion_mean=center + scale * out["exp"], n_episodes=n_eps,
        recessions=date_recessions(prob, stamps), spec=spec, seed=seed, center=center, scale=scale,
        n_truncated=truncated,
    )


def date_recessions(prob, stamps=None) -> list[DatedRecession]:
    """Turning points from a recession-probability path.

    A recession is called when the probability exceeds 0.65 and dated back to
    the start of the run above 0.5 containing the call. It is called over
    when the probability drops below 0.35 and dated to end at the first
    period below 0.5 after the call.
    """
    x = np.asarray(prob, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise InputError("probabilities must lie in [0, 1]")
    stamp = (lambda i: None) if stamps is None else (lambda i: None if i is None else stamps[i])
    out = []
    t, T = 0, x.size
    while t < T:
        if x[t] <= CALL_LEVEL:
            t += 1
            continue
        call = t
        start = call
        while start > 0 and x[start - 1] > DATE_LEVEL:
            start -= 1
        below = np.flatnonzero(x[call + 1:] < DATE_LEVEL)
        end = call + 1 + int(below[0]) if below.size else None
        over = np.flatnonzero(x[call + 1:] < END_LEVEL)
        end_call = call + 1 + int(over[0]) if over.size else None
        out.append(DatedRecession(start, call, end_call, end, stamp(start), stamp(call), stamp(end_call), stamp(end)))
        if end_call is None:
            break
        t = end_call + 1
    return out


def in_recession(n: int, recessions) -> tuple[np.ndarray, np.ndarray]:
    """Per-period flag and 1-based episode id (0 outside dated recessions)."""
    flag = np.zeros(n, dtype=int)
    ident = np.zeros(n, dtype=int)
    for j, r in enumerate(recessions, start=1):
        stop = n if r.end is None else r.end
        flag[r.start:stop] = 1
        ident[r.start:stop] = j
    return flag, ident


class MarkovSwitchingRecession(BaseEstimator):
    """Estimator wrapper around :func:`fit_regime`.

    ``fit`` takes a 1-D factor path (or a single-column 2-D array);
    ``fit_predict`` returns the dated in-recession flags.
    """

    def __init__(self, m0=-1.0, v0=1.0, m1=1.0, v1=1.0, a_p=9.0, b_p=1.0, a_q=9.0, b_q=1.0,
                 prec_shape=2.0, prec_rate=1.0, n_iter=2000, burn_in=500, order_means=True,
                 standardize=True, random_state=None):
        self.m0 = m0
        self.v0 = v0
        self.m1 = m1
        self.v1 = v1
        self.a_p = a_p
        self.b_p = b_p
        self.a_q = a_q
        self.b_q = b_q
        self.prec_shape = prec_shape
        self.prec_rate = prec_rate
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.order_means = order_means
        self.standardize = standardize
        self.random_state = random_state

    def _spec(self) -> RegimeSpec:
        keys = RegimeSpec.__dataclass_fields__
        return RegimeSpec(**{k: v for k, v in self.get_params().items() if k in keys})

    def fit(self, X, y=None):
        x = np.asarray(X, dtype=float)
        if x.ndim == 2:
            if x.shape[1] != 1:
                raise InputError(f"expected one factor column, got {x.shape[1]}")
            x = x[:, 0]
        self.posterior_ = fit_regime(x, self._spec(), seed=self.random_state)
        self.recession_prob_ = self.posterior_.recession_prob
        self.recessions_ = self.posterior_.recessions
        self.n_features_in_ = 1
        return self

    def fit_predict(self, X, y=None):
        self.fit(X)
        return in_recession(self.recession_prob_.size, self.recessions_)[0]

    def predict_proba(self, X=None):
        check_is_fitted(self, "posterior_")
        p = self.recession_prob_
        return np.column_stack([p, 1.0 - p])
