"""Input coercion shared by the estimators."""

from __future__ import annotations

import numpy as np

from .calendar import PseudoWeekStamp
from .exceptions import InputError
from .panel import Frequency, GrowthPanel, MixedPanel, SeriesMeta

DEFAULT_ORIGIN = PseudoWeekStamp(2000, 1, 1)


def check_panel(X, frequencies=None, origin: PseudoWeekStamp = DEFAULT_ORIGIN) -> MixedPanel:
    """Return ``X`` as a panel.

    Panels pass through. Arrays and DataFrames need ``frequencies`` (one per
    column, already ordered quarterly, monthly, weekly); a DataFrame index of
    :class:`PseudoWeekStamp` is used as the spine, otherwise the spine starts
    at ``origin``.
    """
    if isinstance(X, MixedPanel):
        return X
    if frequencies is None:
        raise InputError("array input needs `frequencies` (one of quarterly/monthly/weekly per column)")
    index = None
    ids = None
    if hasattr(X, "columns") and hasattr(X, "index"):
        ids = [str(c) for c in X.columns]
        if len(X.index) and isinstance(X.index[0], PseudoWeekStamp):
            index = list(X.index)
        X = X.to_numpy(dtype=float)
    values = np.asarray(X, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise InputError(f"expected a 2-D array, got shape {values.shape}")
    if np.isinf(values).any():
        raise InputError("input contains infinite values")
    freqs = [Frequency.parse(f) for f in frequencies]
    if len(freqs) != values.shape[1]:
        raise InputError(f"{len(freqs)} frequencies for {values.shape[1]} columns")
    if [f.rank for f in freqs] != sorted(f.rank for f in freqs):
        raise InputError("columns must be ordered quarterly, monthly, weekly")
    ids = ids or [f"x{i}" for i in range(values.shape[1])]
    if index is None:
        index = [origin.shift(t) for t in range(values.shape[0])]
    return GrowthPanel(index, values, [SeriesMeta(i, f) for i, f in zip(ids, freqs)])


def check_gdp(panel: MixedPanel, gdp=None) -> int:
    """Column position of the normalising series (default: the first column)."""
    n = panel.shape[1]
    if n == 0:
        raise InputError("panel has no series")
    if gdp is None:
        return 0
    if isinstance(gdp, (int, np.integer)):
        if not 0 <= gdp < n:
            raise InputError(f"gdp column {gdp} outside 0..{n - 1}")
        return int(gdp)
    return panel.position(str(gdp))
