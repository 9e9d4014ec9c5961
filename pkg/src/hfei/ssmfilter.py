"""Kalman filter with missing observations and a simulation smoother.

The model is ``y_t = H x_t`` (no measurement noise) and
``x_t = F x_{t-1} + R_t v_t`` where ``R_t`` is diagonal on the shock slots.
``x_0 ~ N(a0, P0)`` is the first period's state before ``y_0`` is seen.

Missing entries are NaN and their rows of ``H`` are dropped for that period.
The fast path processes the remaining rows one at a time, which is the same
posterior as the joint update; ``method="joint"`` runs the textbook
multivariate update instead and is kept as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import InputError, NumericError
from .statespace import StateSpaceSystem

DIFFUSE_SCALE = 1e6
JITTER = 1e-10
_LOG2PI = np.log(2.0 * np.pi)


@dataclass
class FilterResult:
    """Per-period predicted/updated moments and log-likelihood contributions.

    ``predicted_mean[t]`` is ``E[x_t | y_0..y_{t-1}]`` and ``updated_mean[t]``
    is ``E[x_t | y_0..y_t]``. Covariances are present only when requested.
    """

    predicted_mean: np.ndarray
    updated_mean: np.ndarray
    loglik_t: np.ndarray
    predicted_cov: np.ndarray | None = None
    updated_cov: np.ndarray | None = None

    @property
    def loglik(self) -> float:
        return float(self.loglik_t.sum())


def _csr(M):
    rows, cols = np.nonzero(M)
    ptr = np.zeros(M.shape[0] + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    return np.cumsum(ptr), cols.astype(np.int64), M[rows, cols].astype(np.float64)


@njit(cache=True)
def _forward(Fp, Fi, Fv, Hp, Hi, Hv, Q, Y, A0, P0, jitter, K_out, v_out, s_out, ll_out,
             store_moments, a_pred, a_upd, P_pred, P_upd):
    """Sequential-row Kalman filter over ``m`` data sets sharing one covariance path.

    Y is (m, T, n), A0 is (m, n_s). Writes gains (T, n, n_s), innovations
    (m, T, n), innovation variances (T, n; 0 where missing) and per-period
    log-likelihoods (m, T).
    """
    m, T, n = Y.shape
    ns = P0.shape[0]
    a = A0.copy()
    P = P0.copy()
    Ph = np.empty(ns)
    tmp = np.empty((ns, ns))
    anew = np.empty(ns)
    for t in range(T):
        if t > 0:
            # a <- F a
            for d in range(m):
                for r in range(ns):
                    acc = 0.0
                    for k in range(Fp[r], Fp[r + 1]):
                        acc += Fv[k] * a[d, Fi[k]]
                    anew[r] = acc
                for r in range(ns):
                    a[d, r] = anew[r]
            # P <- F P F' + diag(Q_t)
            for r in range(ns):
                for c in range(ns):
                    tmp[r, c] = 0.0
                for k in range(Fp[r], Fp[r + 1]):
                    f = Fv[k]
                    src = Fi[k]
                    for c in range(ns):
                        tmp[r, c] += f * P[src, c]
            for r in range(ns):
                for c in range(ns):
                    acc = 0.0
                    for k in range(Fp[c], Fp[c + 1]):
                        acc += tmp[r, Fi[k]] * Fv[k]
                    P[r, c] = acc
            for r in range(ns):
                P[r, r] += Q[t, r]
            for r in range(ns):
                for c in range(r + 1, ns):
                    avg = 0.5 * (P[r, c] + P[c, r])
                    P[r, c] = avg
                    P[c, r] = avg
        if store_moments:
            for r in range(ns):
                a_pred[t, r] = a[0, r]
                for c in range(ns):
                    P_pred[t, r, c] = P[r, c]
        for d in range(m):
            ll_out[d, t] = 0.0
        for i in range(n):
            if np.isnan(Y[0, t, i]):
                s_out[t, i] = 0.0
                continue
            for r in range(ns):
                acc = 0.0
                for k in range(Hp[i], Hp[i + 1]):
                    acc += P[r, Hi[k]] * Hv[k]
                Ph[r] = acc
            s = jitter
            for k in range(Hp[i], Hp[i + 1]):
                s += Hv[k] * Ph[Hi[k]]
            s_out[t, i] = s
            for r in range(ns):
                K_out[t, i, r] = Ph[r] / s
            for d in range(m):
                pred = 0.0
                for k in range(Hp[i], Hp[i + 1]):
                    pred += Hv[k] * a[d, Hi[k]]
                v = Y[d, t, i] - pred
                v_out[d, t, i] = v
                for r in range(ns):
                    a[d, r] += K_out[t, i, r] * v
                ll_out[d, t] += -0.5 * (np.log(2.0 * np.pi * s) + v * v / s)
            for r in range(ns):
                pr = Ph[r] / s
                for c in range(ns):
                    P[r, c] -= pr * Ph[c]
        if store_moments:
            for r in range(ns):
                a_upd[t, r] = a[0, r]
                for c in range(ns):
                    P_upd[t, r, c] = P[r, c]


@njit(cache=True)
def _smooth_mean(Fp, Fi, Fv, FTp, FTi, FTv, Hp, Hi, Hv, Q, K, v, s, a0, P0):
    """Fast state smoother: E[x_t | all y] from stored gains and innovations."""
    T, n = s.shape
    ns = a0.size
    rt0 = np.empty((T, ns))
    r = np.zeros(ns)
    rnew = np.empty(ns)
    for t in range(T - 1, -1, -1):
        for i in range(n - 1, -1, -1):
            if s[t, i] == 0.0:
                continue
            kr = 0.0
            for c in range(ns):
                kr += K[t, i, c] * r[c]
            coef = v[t, i] / s[t, i] - kr
            for k in range(Hp[i], Hp[i + 1]):
                r[Hi[k]] += Hv[k] * coef
        for c in range(ns):
            rt0[t, c] = r[c]
        # r <- F' r
        for c in range(ns):
            acc = 0.0
            for k in range(FTp[c], FTp[c + 1]):
                acc += FTv[k] * r[FTi[k]]
            rnew[c] = acc
        for c in range(ns):
            r[c] = rnew[c]
    out = np.empty((T, ns))
    for c in range(ns):
        acc = a0[c]
        for k in range(ns):
            acc += P0[c, k] * rt0[0, k]
        out[0, c] = acc
    for t in range(1, T):
        for c in range(ns):
            acc = Q[t, c] * rt0[t, c]
            for k in range(Fp[c], Fp[c + 1]):
                acc += Fv[k] * out[t - 1, Fi[k]]
            out[t, c] = acc
    return out


@njit(cache=True)
def _simulate_states(Fp, Fi, Fv, Q, x0, Z):
    T, ns = Z.shape
    x = np.empty((T, ns))
    for c in range(ns):
        x[0, c] = x0[c]
    for t in range(1, T):
        for c in range(ns):
            acc = np.sqrt(Q[t, c]) * Z[t, c]
            for k in range(Fp[c], Fp[c + 1]):
                acc += Fv[k] * x[t - 1, Fi[k]]
            x[t, c] = acc
    return x


def psd_sqrt(P):
    """A square root ``L`` with ``L @ L.T == P`` for symmetric PSD ``P``."""
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (P + P.T))
        return V * np.sqrt(np.clip(w, 0.0, None))


class _Prepared:
    """System matrices in the sparse form the kernels expect."""

    def __init__(self, system: StateSpaceSystem, data, sigmas, init):
        self.system = system
        Y = np.asarray(data, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[1] != system.n:
            raise InputError(f"data has {Y.shape[1]} columns, system has {system.n} observables")
        bad = np.isinf(Y)
        if bad.any():
            raise NumericError(f"non-finite observation at t={int(np.argwhere(bad)[0, 0])}")
        T = Y.shape[0]
        sig = np.asarray(sigmas, dtype=float)
        if sig.ndim == 1:
            sig = np.broadcast_to(sig, (T, sig.size))
        if sig.shape != (T, system.shock_slots.size):
            raise InputError(f"shock scales must be {(T, system.shock_slots.size)}, got {sig.shape}")
        nonpos = ~(np.isfinite(sig) & (sig > 0))
        if nonpos.any():
            raise NumericError(f"shock scale not positive and finite at t={int(np.argwhere(nonpos)[0, 0])}")
        if init is None:
            a0 = np.zeros(system.n_s)
            P0 = DIFFUSE_SCALE * np.eye(system.n_s)
        else:
            a0, P0 = init
            a0 = np.asarray(a0, dtype=float).reshape(system.n_s)
            P0 = np.asarray(P0, dtype=float).reshape(system.n_s, system.n_s)
        if not (np.all(np.isfinite(a0)) and np.all(np.isfinite(P0))):
            raise NumericError("non-finite initial state moments")
        self.Y = Y
        self.T = T
        self.Q = system.state_variances(sig)
        self.a0 = a0
        self.P0 = P0
        self.F = _csr(system.F)
        self.FT = _csr(np.ascontiguousarray(system.F.T))
        self.H = _csr(system.H)

    def forward(self, datasets, means, store_moments=False):
        T, n, ns = self.T, self.system.n, self.system.n_s
        m = datasets.shape[0]
        K = np.zeros((T, n, ns))
        v = np.zeros((m, T, n))
        s = np.zeros((T, n))
        ll = np.zeros((m, T))
        if store_moments:
            ap, au = np.zeros((T, ns)), np.zeros((T, ns))
            Pp, Pu = np.zeros((T, ns, ns)), np.zeros((T, ns, ns))
        else:
            ap = au = np.zeros((1, 1))
            Pp = Pu = np.zeros((1, 1, 1))
        _forward(*self.F, *self.H, self.Q, datasets, means, self.P0, JITTER, K, v, s, ll,
                 store_moments, ap, au, Pp, Pu)
        if not np.all(np.isfinite(ll)):
            t = int(np.argwhere(~np.isfinite(ll))[0, 1])
            raise NumericError(f"filter produced a non-finite log-likelihood at t={t}")
        return K, v, s, ll, (ap, au, Pp, Pu)


def _joint_filter(system, Y, Q, a0, P0, store):
    """Multivariate update with row deletion (reference implementation)."""
    T = Y.shape[0]
    ns = system.n_s
    F, H = system.F, system.H
    a, P = a0.copy(), P0.copy()
    ap, au, Pp, Pu = (np.zeros((T, ns)), np.zeros((T, ns)), np.zeros((T, ns, ns)), np.zeros((T, ns, ns)))
    ll = np.zeros(T)
    for t in range(T):
        if t > 0:
            a = F @ a
            P = F @ P @ F.T + np.diag(Q[t])
            P = 0.5 * (P + P.T)
        ap[t], Pp[t] = a, P
        obs = ~np.isnan(Y[t])
        if obs.any():
            Ho = H[obs]
            S = Ho @ P @ Ho.T + JITTER * np.eye(obs.sum())
            v = Y[t, obs] - Ho @ a
            K = np.linalg.solve(S, Ho @ P).T
            a = a + K @ v
            L = np.eye(ns) - K @ Ho
            P = L @ P @ L.T + JITTER * K @ K.T
            P = 0.5 * (P + P.T)
            sign, logdet = np.linalg.slogdet(S)
            ll[t] = -0.5 * (obs.sum() * _LOG2PI + logdet + v @ np.linalg.solve(S, v))
        au[t], Pu[t] = a, P
    if not np.all(np.isfinite(ll)):
        raise NumericError(f"filter produced a non-finite log-likelihood at t={int(np.argwhere(~np.isfinite(ll))[0, 0])}")
    return FilterResult(ap, au, ll, Pp if store else None, Pu if store else None)


def kalman_filter(system: StateSpaceSystem, data, sigmas, init=None, store_cov: bool = True,
                  method: str = "sequential") -> FilterResult:
    """Filter ``data`` (T x n, NaN = missing) given shock scales ``sigmas`` (T x n_shocks).

    ``init`` is ``(a0, P0)``; the default is mean zero and ``1e6 * I``.
    """
    prep = _Prepared(system, data, sigmas, init)
    if method == "joint":
        return _joint_filter(system, prep.Y, prep.Q, prep.a0, prep.P0, store_cov)
    if method != "sequential":
        raise InputError(f"unknown filter method {method!r}")
    _, _, _, ll, (ap, au, Pp, Pu) = prep.forward(prep.Y[None], prep.a0[None], store_moments=True)
    return FilterResult(ap, au, ll[0], Pp if store_cov else None, Pu if store_cov else None)


def loglikelihood(system: StateSpaceSystem, data, sigmas, init=None) -> float:
    """Gaussian log-likelihood of the observed entries."""
    prep = _Prepared(system, data, sigmas, init)
    _, _, _, ll, _ = prep.forward(prep.Y[None], prep.a0[None])
    return float(ll.sum())


def smoothed_state(system: StateSpaceSystem, data, sigmas, init=None) -> np.ndarray:
    """``E[x_t | y]`` for every t, shape (T, n_s)."""
    prep = _Prepared(system, data, sigmas, init)
    K, v, s, _, _ = prep.forward(prep.Y[None], prep.a0[None])
    return _smooth_mean(*prep.F, *prep.FT, *prep.H, prep.Q, K, v[0], s, prep.a0, prep.P0)


def simulation_smoother(system: StateSpaceSystem, data, sigmas, init=None, rng=None,
                        return_loglik: bool = False):
    """One joint draw of the state path given the data, shape (T, n_s).

    Mean-correction scheme: simulate states and data from the model, then
    shift the simulated path by the smoothed mean of the data-minus-simulation
    residual. With ``return_loglik`` the log-likelihood of ``data`` from the
    same filter pass is returned as well.
    """
    rng = np.random.default_rng(rng)
    prep = _Prepared(system, data, sigmas, init)
    ns = system.n_s
    x0 = prep.a0 + psd_sqrt(prep.P0) @ rng.standard_normal(ns)
    xsim = _simulate_states(*prep.F, prep.Q, x0, rng.standard_normal((prep.T, ns)))
    ysim = xsim @ system.H.T
    ystar = prep.Y - ysim
    datasets = np.stack([prep.Y, ystar])
    means = np.stack([prep.a0, np.zeros(ns)])
    K, v, s, ll, _ = prep.forward(datasets, means)
    corr = _smooth_mean(*prep.F, *prep.FT, *prep.H, prep.Q, K, v[1], s, np.zeros(ns), prep.P0)
    draw = xsim + corr
    if return_loglik:
        return draw, float(ll[0].sum())
    return draw
