"""State-space form of the mixed-frequency factor model.

State ordering: the factor and its lags first, then one block of lagged
idiosyncratic terms per series, quarterly series first, then monthly, then
weekly. Observation rows follow the same series order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import BuildError, SpecError
from .panel import Frequency
from .samplers import Priors

MAX_LAG = 12


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 7500
    burn_in: int = 2500

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise SpecError(
                f"need 0 <= burn_in < iterations, got burn_in={self.burn_in}, iterations={self.iterations}"
            )

    @property
    def kept(self) -> int:
        return self.iterations - self.burn_in


@dataclass(frozen=True)
class ModelSpec:
    """Lag orders, heterogeneity, volatility switches, priors and chain length."""

    p_f: int = 2
    p_q: int = 3
    s: int = 0
    sv_factor: bool = False
    sv_idio: bool = False
    n_q: int = 0
    n_m: int = 0
    n_w: int = 0
    priors: Priors = field(default_factory=Priors)
    chain: ChainConfig = field(default_factory=ChainConfig)

    def __post_init__(self):
        if not 1 <= self.p_f < MAX_LAG:
            raise SpecError(f"p_f must be in 1..11, got {self.p_f}")
        if not 1 <= self.p_q < MAX_LAG:
            raise SpecError(f"p_q must be in 1..11, got {self.p_q}")
        if self.s not in (0, 1):
            raise SpecError(f"s must be 0 or 1, got {self.s}")
        if min(self.n_q, self.n_m, self.n_w) < 0:
            raise SpecError("series counts must be non-negative")

    @property
    def n(self) -> int:
        return self.n_q + self.n_m + self.n_w

    @property
    def volatility(self) -> str:
        return {
            (False, False): "none",
            (True, False): "factor",
            (False, True): "idio",
            (True, True): "both",
        }[(self.sv_factor, self.sv_idio)]

    def label(self) -> str:
        return f"s={self.s},sv={self.volatility}"


@dataclass(frozen=True)
class StateLayout:
    """Where each block of the state vector lives.

    ``blocks[i]`` is the ``(start, size)`` of series ``i``'s idiosyncratic
    block; the factor block always starts at 0.
    """

    frequencies: tuple[Frequency, ...]
    p_f: int
    p_q: int
    s: int
    factor_size: int
    blocks: tuple[tuple[int, int], ...]
    n_s: int

    @property
    def n(self) -> int:
        return len(self.frequencies)

    @property
    def d(self) -> int:
        return max(self.p_q, 4)

    @property
    def shock_slots(self) -> np.ndarray:
        return np.array([0] + [start for start, _ in self.blocks], dtype=np.int64)

    @property
    def idio_slots(self) -> np.ndarray:
        return np.array([start for start, _ in self.blocks], dtype=np.int64)

    def position(self, block, lag: int) -> int:
        """State index of ``lag`` within ``block`` ("factor" or a series index)."""
        start, size = (0, self.factor_size) if block == "factor" else self.blocks[block]
        if not 0 <= lag < size:
            raise BuildError(f"lag {lag} outside block {block!r} of size {size}")
        return start + lag

    def locate(self, position: int):
        """Inverse of :meth:`position`."""
        if 0 <= position < self.factor_size:
            return "factor", position
        for i, (start, size) in enumerate(self.blocks):
            if start <= position < start + size:
                return i, position - start
        raise BuildError(f"state position {position} outside 0..{self.n_s - 1}")


def _block_size(freq: Frequency, p_q: int) -> int:
    if freq is Frequency.QUARTERLY:
        return MAX_LAG
    if freq is Frequency.MONTHLY:
        return max(p_q, 4) + 1
    return p_q + 1


def build_layout(spec: ModelSpec, frequencies: Sequence | None = None) -> StateLayout:
    """Lay out the state vector for ``spec``.

    ``frequencies`` defaults to ``n_q`` quarterly, ``n_m`` monthly and
    ``n_w`` weekly series, in that order.
    """
    if spec.p_f >= MAX_LAG or spec.p_q >= MAX_LAG:
        raise SpecError("p_f and p_q must be below 12")
    if frequencies is None:
        freqs = (Frequency.QUARTERLY,) * spec.n_q + (Frequency.MONTHLY,) * spec.n_m + (Frequency.WEEKLY,) * spec.n_w
    else:
        freqs = tuple(Frequency.parse(f) for f in frequencies)
        ranks = [f.rank for f in freqs]
        if ranks != sorted(ranks):
            raise SpecError("series must be ordered quarterly, monthly, weekly")
    factor_size = MAX_LAG + spec.s
    blocks = []
    pos = factor_size
    for f in freqs:
        size = _block_size(f, spec.p_q)
        blocks.append((pos, size))
        pos += size
    return StateLayout(freqs, spec.p_f, spec.p_q, spec.s, factor_size, tuple(blocks), pos)


def build_H(layout: StateLayout, loadings) -> np.ndarray:
    """Observation matrix.

    ``loadings`` has one row per series and ``s + 1`` columns (contemporaneous
    loading, then the loading on the lagged factor). Monthly and quarterly
    rows average the loading polynomial applied to the factor over their
    4- or 12-week window, and average the series' own idiosyncratic term over
    the same window.
    """
    lam = np.asarray(loadings, dtype=float)
    if lam.ndim == 1 and layout.s == 0:
        lam = lam[:, None]
    if lam.shape != (layout.n, layout.s + 1):
        raise BuildError(f"loadings must be {(layout.n, layout.s + 1)}, got {lam.shape}")
    H = np.zeros((layout.n, layout.n_s))
    for i, (freq, (start, _)) in enumerate(zip(layout.frequencies, layout.blocks)):
        window = freq.window
        for j in range(window):
            for k in range(layout.s + 1):
                H[i, j + k] += lam[i, k] / window
            H[i, start + j] += 1.0 / window
    return H


def _companion_into(F: np.ndarray, start: int, size: int, coefs: np.ndarray) -> None:
    F[start, start:start + coefs.size] = coefs
    idx = np.arange(start + 1, start + size)
    F[idx, idx - 1] = 1.0


def build_F(layout: StateLayout, phi, rho) -> np.ndarray:
    """Block-diagonal transition matrix of companion blocks."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    rho = np.asarray(rho, dtype=float)
    if rho.ndim == 1:
        rho = rho.reshape(layout.n, -1) if layout.n else rho.reshape(0, layout.p_q)
    if phi.shape != (layout.p_f,):
        raise BuildError(f"phi must have {layout.p_f} entries, got {phi.shape}")
    if rho.shape != (layout.n, layout.p_q):
        raise BuildError(f"rho must be {(layout.n, layout.p_q)}, got {rho.shape}")
    F = np.zeros((layout.n_s, layout.n_s))
    _companion_into(F, 0, layout.factor_size, phi)
    for i, (start, size) in enumerate(layout.blocks):
        _companion_into(F, start, size, rho[i])
    return F


def build_Rt(layout: StateLayout, sigma_f, sigma_idio) -> np.ndarray:
    """Innovation scale of every state, zero outside the shock slots.

    Scalars give one period; arrays with a leading time axis give a
    ``(T, n_s)`` path.
    """
    sf = np.asarray(sigma_f, dtype=float)
    si = np.asarray(sigma_idio, dtype=float)
    if np.any(sf <= 0) or np.any(si <= 0) or not (np.all(np.isfinite(sf)) and np.all(np.isfinite(si))):
        raise BuildError("innovation scales must be positive and finite")
    if si.shape[-1:] != (layout.n,) and not (layout.n == 0 and si.size == 0):
        raise BuildError(f"need {layout.n} idiosyncratic scales, got shape {si.shape}")
    lead = np.broadcast_shapes(sf.shape, si.shape[:-1])
    out = np.zeros(lead + (layout.n_s,))
    out[..., 0] = sf
    out[..., layout.idio_slots] = si
    return out


@dataclass(frozen=True)
class StateSpaceSystem:
    """``y_t = H x_t``, ``x_t = F x_{t-1} + R_t v_t`` with ``R_t`` diagonal on ``shock_slots``."""

    H: np.ndarray
    F: np.ndarray
    shock_slots: np.ndarray
    layout: StateLayout | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        slots = np.asarray(self.shock_slots, dtype=np.int64).ravel()
        if F.shape[0] != F.shape[1] or H.shape[1] != F.shape[0]:
            raise BuildError(f"incompatible H {H.shape} and F {F.shape}")
        if slots.size and (slots.min() < 0 or slots.max() >= F.shape[0]):
            raise BuildError("shock slot outside the state vector")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "shock_slots", slots)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def n_s(self) -> int:
        return self.F.shape[0]

    def state_variances(self, sigmas) -> np.ndarray:
        """Turn shock scales ``(T, n_shocks)`` into state innovation variances ``(T, n_s)``."""
        sig = np.asarray(sigmas, dtype=float)
        if sig.ndim == 1:
            sig = sig[None, :]
        if sig.shape[1] != self.shock_slots.size:
            raise BuildError(f"need {self.shock_slots.size} shock scales per period, got {sig.shape[1]}")
        q = np.zeros((sig.shape[0], self.n_s))
        q[:, self.shock_slots] = sig ** 2
        return q


def build_system(layout: StateLayout, loadings, phi, rho) -> StateSpaceSystem:
    return StateSpaceSystem(build_H(layout, loadings), build_F(layout, phi, rho), layout.shock_slots, layout)
