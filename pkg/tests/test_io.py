import numpy as np
import pytest

from hfei import io as hio
from hfei.calendar import PseudoWeekStamp
from hfei.estimator import run_gibbs
from hfei.exceptions import InputError
from hfei.index import scale_index
from hfei.samplers import Priors
from hfei.simulate import TrueParams, simulate_panel
from hfei.statespace import ChainConfig, ModelSpec

import oracles


def test_fmt_round_trips_doubles():
    for x in (0.1, 1 / 3, -2.5e-300, 123456789.123456789):
        assert float(hio.fmt(x)) == x
    assert hio.fmt(float("nan")) == "nan"


def test_bool_and_stamp_cells():
    assert hio.parse_bool("Yes") and not hio.parse_bool("off")
    with pytest.raises(InputError):
        hio.parse_bool("maybe")
    s = PseudoWeekStamp(2020, 3, 4)
    assert hio.stamp_cells(s) == ["2020-03-22", "4"]
    assert hio.stamp_from_cells("2020-03-22", "4") == s
    with pytest.raises(InputError):
        hio.stamp_from_cells("2020-03-22", "2")


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\np_f = 3\nprior.gamma=0.5  # inline\n\nseed = 4\n")
    assert hio.read_config(p) == {"p_f": "3", "prior.gamma": "0.5", "seed": "4"}
    spec = hio.spec_from_flat(hio.read_config(p))
    assert spec.p_f == 3 and spec.priors.gamma == 0.5
    p.write_text("no equals sign\n")
    with pytest.raises(InputError, match=":1:"):
        hio.read_config(p)


def test_spec_flat_round_trip():
    spec = ModelSpec(p_f=3, p_q=2, s=1, sv_factor=True, priors=Priors(gamma=0.4), chain=ChainConfig(100, 30))
    assert hio.spec_from_flat(hio.spec_to_flat(spec)) == spec
    with pytest.raises(InputError):
        hio.spec_from_flat({"p_f": "two"})


def _panel():
    spec = ModelSpec(p_f=1, p_q=1, n_q=1, n_m=1, n_w=1)
    return simulate_panel(TrueParams([1.0, 0.5, 2.0], [0.5], [[0.1], [0.0], [0.2]]), spec, 96, seed=1,
                          leading_missing=[0, 0, 5])[0]


def test_panel_file_round_trip(tmp_path):
    panel = _panel()
    hio.write_panel(tmp_path / "p.csv", panel)
    back = hio.read_panel(tmp_path / "p.csv")
    assert back.ids == panel.ids and back.index == panel.index
    assert back.frequencies == panel.frequencies
    assert np.array_equal(back.values, panel.values, equal_nan=True)


def test_draw_store_round_trip(tmp_path):
    panel = _panel()
    draws = run_gibbs(ModelSpec(p_f=1, p_q=1, chain=ChainConfig(12, 4)), panel, seed=3)
    draws.ids = panel.ids
    hio.write_draws(tmp_path / "d", draws)
    back = hio.read_draws(tmp_path / "d")
    for name in draws.BLOCKS:
        assert np.array_equal(getattr(back, name), getattr(draws, name), equal_nan=True)
    assert back.spec == draws.spec and back.seed == 3 and back.ids == panel.ids
    manifest = (tmp_path / "d" / "manifest.txt").read_text()
    assert "time" not in manifest
    (tmp_path / "d" / "manifest.txt").write_text(manifest.replace("spec.p_f=1", "spec.p_f=2"))
    with pytest.raises(InputError, match="hash"):
        hio.read_draws(tmp_path / "d")
    with pytest.raises(InputError):
        hio.read_draws(tmp_path)


def test_index_export_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    stamps = [PseudoWeekStamp(2020, 1, 1).shift(t) for t in range(30)]
    idx = scale_index(rng.standard_normal((40, 30)), rng.standard_normal(10), stamps)
    hio.write_index(tmp_path / "i.csv", idx)
    back_stamps, table = hio.read_index(tmp_path / "i.csv")
    assert back_stamps == stamps
    for j, attr in enumerate(("mean", "median", "p16", "p84")):
        assert np.array_equal(table[:, j], getattr(idx, attr))
    hio.write_factor(tmp_path / "f.csv", stamps, idx.mean)
    s2, f2 = hio.read_factor(tmp_path / "f.csv")
    assert s2 == stamps and np.array_equal(f2, idx.mean)


def _write_rows(path, rows, header="series_id,date,value"):
    path.write_text(header + "\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows))
    return path


def test_observation_errors_carry_line_numbers(tmp_path):
    p = _write_rows(tmp_path / "o.csv", [("w", "2020-01-01", "1"), ("w", "2020-13-01", "2"), ("w", "2020-01-02", "x")])
    with pytest.raises(InputError) as err:
        hio.read_observations(p)
    assert "line 3" in str(err.value) and "line 4" in str(err.value)


def test_duplicate_and_empty_observations(tmp_path):
    p = _write_rows(tmp_path / "o.csv", [("w", "2020-01-01", "1"), ("w", "2020-01-01", "2")])
    with pytest.raises(InputError, match="duplicate"):
        hio.read_observations(p)
    with pytest.raises(InputError, match="empty"):
        hio.read_observations(_write_rows(tmp_path / "e.csv", []))
    with pytest.raises(InputError, match="missing column"):
        hio.read_observations(_write_rows(tmp_path / "m.csv", [], header="series_id,date"))


def test_series_table(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("series_id,frequency,kind,zero_fill\nw,weekly,stock,no\nm,monthly,flow,\nw,weekly,stock,no\n")
    with pytest.raises(InputError, match="twice"):
        hio.read_series_table(p)
    p.write_text("series_id,frequency,kind,zero_fill\nw,weekly,stock,no\nm,monthly,flow,yes\n")
    setup = hio.read_series_table(p)
    assert setup["m"].meta.zero_fill and not setup["w"].meta.zero_fill


def test_prepare_two_years_daily(tmp_path):
    """Daily observations of one weekly stock series over two calendar years."""
    from hfei.cli import RunConfig, cmd_prepare

    rows = oracles.daily_stock_file()
    obs = _write_rows(tmp_path / "o.csv", [(a, b, repr(c)) for a, b, c in rows])
    ser = tmp_path / "s.csv"
    ser.write_text("series_id,frequency,kind,zero_fill\nw,weekly,stock,no\n")
    cfg = RunConfig(out=tmp_path / "out", observations=obs, series=ser)
    cmd_prepare(cfg)
    panel = hio.read_panel(tmp_path / "out" / "panel.csv")
    expect = oracles.frozen()["prepare_two_years_daily"]
    assert len(panel.index) == expect["stamps"]
    assert int(np.sum(~np.isnan(panel.values))) == expect["growth"]
