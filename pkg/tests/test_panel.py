import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfei.calendar import PseudoWeekStamp, stamp_range
from hfei.exceptions import InputError, InsufficientDataError, TransformError
from hfei.panel import (Frequency, MixedPanel, SeriesMeta, build_panel, demean, impute_weekly_gaps,
                        period_end, proxy_interpolate, yoy_transform)

import oracles

ORIGIN = PseudoWeekStamp(2018, 1, 1)


def spine(n):
    return [ORIGIN.shift(t) for t in range(n)]


def weekly_panel(values, sid="w"):
    return MixedPanel.from_columns(spine(len(values)), {sid: np.asarray(values, float)}, [SeriesMeta(sid, "weekly")])


def test_constant_level_has_zero_growth():
    g = yoy_transform(weekly_panel(np.full(100, 7.0)))
    assert np.all(np.isnan(g.values[:48]))
    assert np.all(g.values[48:] == 0.0)


def test_weekly_growth_formula():
    x = np.full(49, 100.0)
    x[48] = 110.0
    g = yoy_transform(weekly_panel(x))
    assert g.values[48, 0] == pytest.approx(0.09531017980432493, abs=1e-12)


def test_monthly_series_with_24_observations():
    idx = spine(96)
    col = np.full(96, np.nan)
    col[[i for i, s in enumerate(idx) if s.is_month_end]] = np.linspace(100, 130, 24)
    p = MixedPanel.from_columns(idx, {"m": col}, [SeriesMeta("m", "monthly")])
    assert int(np.sum(~np.isnan(yoy_transform(p).values))) == oracles.frozen()["monthly_24_growth"]


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3))
def test_growth_ignores_positive_rescaling(c):
    rng = np.random.default_rng(0)
    x = np.exp(rng.standard_normal(120))
    a = yoy_transform(weekly_panel(x)).values
    b = yoy_transform(weekly_panel(c * x)).values
    np.testing.assert_allclose(a[48:], b[48:], atol=1e-12)


def test_nonpositive_level_names_series_and_stamp():
    x = np.full(60, 5.0)
    x[10] = 0.0
    with pytest.raises(TransformError, match=r"'w'.*2018-03-W3"):
        yoy_transform(weekly_panel(x))


def test_impute_examples():
    assert impute_weekly_gaps([1.0, np.nan, 3.0]).tolist() == [1.0, 2.0, 3.0]
    idx = spine(4)
    anchor = np.array([np.nan, np.nan, np.nan, 7.0])
    out = impute_weekly_gaps([1.0, 2.0, 3.0, np.nan], anchor, idx)
    assert out[3] == 7.0
    clean = np.arange(5.0)
    assert impute_weekly_gaps(clean).tolist() == clean.tolist()


def test_impute_leaves_boundaries_and_reports():
    report = {}
    out = impute_weekly_gaps([np.nan, 1.0, np.nan, np.nan, 4.0, np.nan], report=report)
    assert math.isnan(out[0]) and math.isnan(out[-1])
    assert out[2] == out[3] == 2.5
    assert report == {"anchor": 0, "neighbour": 2, "boundary": 2}


def test_anchor_value_is_kept_exactly():
    idx = spine(16)
    weekly = np.arange(16.0)
    weekly[[3, 7, 11]] = np.nan
    anchor = np.full(16, np.nan)
    anchor[[3, 7, 11, 15]] = [10.5, 20.25, 30.125, 40.0]
    out = impute_weekly_gaps(weekly, anchor, idx)
    assert out[[3, 7, 11]].tolist() == [10.5, 20.25, 30.125]
    assert out[15] == 15.0


def _monthly(n=60):
    return [PseudoWeekStamp(2015, 1, 4).shift(4 * k) for k in range(n)]


def test_proxy_full_target_passes_through():
    stamps = _monthly(10)
    t = np.arange(10.0)
    assert proxy_interpolate(t, t * 3, stamps).tolist() == t.tolist()


def test_proxy_exact_linear_relation():
    stamps = _monthly(20)
    proxy = np.linspace(1, 5, 20)
    target = 2 * proxy
    target[::3] = np.nan
    out = proxy_interpolate(target, proxy, stamps)
    np.testing.assert_allclose(out, 2 * proxy, atol=1e-12)


def test_proxy_with_break_recovers_generating_equation():
    rng = np.random.default_rng(12)
    stamps = _monthly(60)
    brk = stamps[30]
    proxy = rng.standard_normal(60).cumsum()
    dummy = np.array([s >= brk for s in stamps], float)
    truth = 1 + 0.5 * proxy + 0.2 * dummy
    target = truth + 0.01 * rng.standard_normal(60)
    hidden = rng.random(60) < 0.4
    target[hidden] = np.nan
    out = proxy_interpolate(target, proxy, stamps, break_stamp=brk)
    assert np.max(np.abs(out[hidden] - truth[hidden])) < 0.05
    assert np.array_equal(out[~hidden], target[~hidden])


def test_proxy_needs_four_pairs():
    stamps = _monthly(6)
    target = np.array([1.0, 2.0, 3.0, np.nan, np.nan, np.nan])
    with pytest.raises(InsufficientDataError):
        proxy_interpolate(target, np.arange(6.0), stamps)


def test_panel_rejects_off_stamp_monthly_value():
    idx = spine(8)
    col = np.full(8, np.nan)
    col[1] = 1.0
    with pytest.raises(InputError, match="observation stamps"):
        MixedPanel(idx, col, [SeriesMeta("m", "monthly")])


def test_panel_orders_and_validates():
    idx = spine(12)
    q = np.full(12, np.nan)
    q[11] = 1.0
    p = MixedPanel.from_columns(idx, {"w": np.ones(12), "q": q, "m": np.where([s.is_month_end for s in idx], 2.0, np.nan)},
                                [SeriesMeta("w", "w"), SeriesMeta("q", "q"), SeriesMeta("m", "m")])
    assert p.ids == ["q", "m", "w"]
    assert (p.n_q, p.n_m, p.n_w) == (1, 1, 1)
    with pytest.raises(InputError):
        MixedPanel(idx, np.ones((12, 2)), [SeriesMeta("w", "w"), SeriesMeta("m", "m")])
    with pytest.raises(InputError):
        MixedPanel([idx[0], idx[2]], np.ones((2, 1)), [SeriesMeta("w", "w")])


def test_build_panel_places_periods_and_rejects_duplicates():
    meta = {"m": SeriesMeta("m", "monthly"), "w": SeriesMeta("w", "weekly")}
    p = build_panel({"m": {PseudoWeekStamp(2020, 1, 1): 5.0}, "w": {PseudoWeekStamp(2020, 1, 2): 1.0}}, meta)
    assert p.index == stamp_range(PseudoWeekStamp(2020, 1, 2), PseudoWeekStamp(2020, 1, 4))
    assert p.column("m")[-1] == 5.0
    with pytest.raises(InputError, match="two values"):
        build_panel({"m": {PseudoWeekStamp(2020, 1, 1): 5.0, PseudoWeekStamp(2020, 1, 3): 6.0}}, meta)
    with pytest.raises(InputError, match="empty"):
        build_panel({}, meta)
    assert period_end(PseudoWeekStamp(2020, 5, 2), Frequency.QUARTERLY) == PseudoWeekStamp(2020, 6, 4)


def test_demean_stores_means():
    p = weekly_panel([1.0, 2.0, np.nan, 3.0])
    d = demean(p)
    assert d.means.tolist() == [2.0]
    assert np.nansum(d.values) == 0.0


def test_trim_leading_unobserved():
    from hfei.panel import trim_leading_unobserved

    idx = [PseudoWeekStamp(2020, 1, 1).shift(t) for t in range(6)]
    panel = MixedPanel.from_columns(idx, {"w": [np.nan, np.nan, 1.0, np.nan, 2.0, np.nan]},
                                    [SeriesMeta("w", Frequency.WEEKLY)])
    out = trim_leading_unobserved(panel)
    assert out.index == idx[2:]
    assert np.array_equal(out.values[:, 0], [1.0, np.nan, 2.0, np.nan], equal_nan=True)
    assert trim_leading_unobserved(out) is out
    with pytest.raises(InputError):
        trim_leading_unobserved(MixedPanel.from_columns(idx, {"w": np.full(6, np.nan)},
                                                        [SeriesMeta("w", Frequency.WEEKLY)]))
