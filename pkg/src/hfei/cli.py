"""Batch command line: prepare, estimate, grid, regime, export-index, simulate.

Every command reads an optional flat ``key = value`` config file; ``--set``
and the dedicated flags override it. Outputs go under ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import io as hio
from .calendar import PseudoWeekStamp
from .estimator import VOLATILITY_CONFIGS, compute_dic, run_gibbs, run_grid, spec_hash
from .exceptions import EstimationError, HfeiError, InputError
from .index import scale_index
from .panel import (Frequency, MixedPanel, impute_weekly_gaps, proxy_interpolate, trim_leading_unobserved,
                    yoy_transform)
from .regime import RegimeSpec, fit_regime, in_recession
from .simulate import RegimeParams, TrueParams, simulate_panel
from .statespace import ModelSpec

logger = logging.getLogger("hfei")

CONFIG_HELP = """\
config keys (flat `key = value`, `#` comments):
  observations, series, panel, draws, factor   input paths
  seed, threads, gdp                           run settings (gdp: series id, default first column)
  p_f, p_q, s, sv_factor, sv_idio              model spec
  iterations, burn_in                          Gibbs chain length
  prior.<name>                                 phi_first_mean, gamma, loading_var, omega_dof,
                                               omega_scale, var_dof, var_scale, h0_mean, h0_var
  regime.<name>                                m0, v0, m1, v1, a_p, b_p, a_q, b_q, prec_shape,
                                               prec_rate, n_iter, burn_in, order_means, standardize
  sim.<name>                                   T, n_q, n_m, n_w, phi, sigma_factor, sigma_idio,
                                               omega2_factor, regime, mu0, mu1, p, q
"""


@dataclass(frozen=True)
class SimSettings:
    T: int = 480
    n_q: int = 1
    n_m: int = 1
    n_w: int = 3
    phi: float = 0.8
    sigma_factor: float = 0.6
    sigma_idio: float = 0.3
    omega2_factor: float = 0.0
    regime: bool = False
    mu0: float = -2.0
    mu1: float = 2.0
    p: float = 0.95
    q: float = 0.95


@dataclass
class RunConfig:
    out: Path = Path("out")
    observations: Path | None = None
    series: Path | None = None
    panel: Path | None = None
    draws: Path | None = None
    factor: Path | None = None
    seed: int = 0
    threads: int = 1
    gdp: str | None = None
    spec: ModelSpec = field(default_factory=ModelSpec)
    regime: RegimeSpec = field(default_factory=lambda: RegimeSpec(standardize=True))
    sim: SimSettings = field(default_factory=SimSettings)

    @classmethod
    def from_values(cls, values: dict[str, str]) -> "RunConfig":
        cfg = cls()
        for key in ("out", "observations", "series", "panel", "draws", "factor"):
            if values.get(key):
                setattr(cfg, key, Path(values[key]))
        try:
            if "seed" in values:
                cfg.seed = int(values["seed"])
            if "threads" in values:
                cfg.threads = int(values["threads"])
        except ValueError as exc:
            raise InputError(f"config: {exc}") from exc
        if cfg.threads < 1:
            raise InputError("threads must be at least 1")
        cfg.gdp = values.get("gdp") or None
        cfg.spec = hio.spec_from_flat(values, cfg.spec)
        cfg.regime = hio.dataclass_from_flat(RegimeSpec, values, "regime.", cfg.regime)
        cfg.sim = hio.dataclass_from_flat(SimSettings, values, "sim.", cfg.sim)
        return cfg

    def need(self, key: str) -> Path:
        path = getattr(self, key)
        if path is None:
            raise InputError(f"missing input: set `{key}` in the config or pass --{key}")
        if not Path(path).exists():
            raise InputError(f"{key}: {path} does not exist")
        return Path(path)


# ---------------------------------------------------------------- commands


def cmd_prepare(cfg: RunConfig) -> None:
    records = hio.read_observations(cfg.need("observations"))
    setup = hio.read_series_table(cfg.need("series"))
    levels = hio.level_panel(records, setup)
    cols = {sid: levels.values[:, i].copy() for i, sid in enumerate(levels.ids)}
    report = {sid: {"observed": int(np.sum(~np.isnan(c)))} for sid, c in cols.items()}

    for sid in levels.ids:
        st = setup[sid]
        if st.meta.frequency is not Frequency.WEEKLY:
            continue
        anchor = None
        if st.anchor:
            if st.anchor not in cols:
                raise InputError(f"series {sid!r}: anchor {st.anchor!r} has no observations")
            anchor = cols[st.anchor]
        cols[sid] = impute_weekly_gaps(cols[sid], anchor, levels.index, report[sid])
    for sid in levels.ids:
        st = setup[sid]
        if not st.proxy:
            continue
        if st.proxy not in cols:
            raise InputError(f"series {sid!r}: proxy {st.proxy!r} has no observations")
        before = np.isnan(cols[sid])
        cols[sid] = proxy_interpolate(cols[sid], cols[st.proxy], levels.index, st.proxy_break, st.proxy_start)
        report[sid]["proxy"] = int(np.sum(before & ~np.isnan(cols[sid])))

    filled = MixedPanel.from_columns(levels.index, cols, levels.meta)
    growth = yoy_transform(filled)
    cfg.out.mkdir(parents=True, exist_ok=True)
    hio.write_panel(cfg.out / "panel.csv", growth)
    lines = [f"stamps={len(growth.index)}", f"first={growth.index[0]}", f"last={growth.index[-1]}"]
    for i, sid in enumerate(growth.ids):
        r = report[sid]
        r["growth"] = int(np.sum(~np.isnan(growth.values[:, i])))
        lines.append(f"{sid}: " + " ".join(f"{k}={r[k]}" for k in
                                             ("observed", "anchor", "neighbour", "boundary", "proxy", "growth") if k in r))
    (cfg.out / "quality.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _gdp_growth(panel: MixedPanel, gdp_index: int) -> np.ndarray:
    g = panel.values[:, gdp_index]
    if panel.means is not None:
        g = g + panel.means[gdp_index]
    return g


def _export_index(cfg: RunConfig, panel: MixedPanel, draws) -> None:
    series = scale_index(draws.factor, _gdp_growth(panel, draws.gdp_index), panel.index)
    hio.write_index(cfg.out / "index.csv", series)
    g = _gdp_growth(panel, draws.gdp_index)
    rows = [[*hio.stamp_cells(s), hio.fmt(v)] for s, v in zip(panel.index, g) if s.is_quarter_end and not np.isnan(v)]
    hio.write_table(cfg.out / "gdp.csv", ["date", "week", "gdp_growth"], rows)


def _estimation_panel(cfg: RunConfig) -> MixedPanel:
    return trim_leading_unobserved(hio.read_panel(cfg.need("panel")))


def cmd_estimate(cfg: RunConfig) -> None:
    panel = _estimation_panel(cfg)
    draws = run_gibbs(cfg.spec, panel, seed=cfg.seed, gdp=cfg.gdp)
    dic = compute_dic(draws, panel)
    cfg.out.mkdir(parents=True, exist_ok=True)
    hio.write_draws(cfg.out / "draws", draws)
    hio.write_factor(cfg.out / "factor.csv", panel.index, draws.factor_mean)
    _export_index(cfg, panel, draws)
    pm = draws.posterior_mean()
    lines = [f"spec={draws.spec.label()}", f"spec_hash={spec_hash(draws.spec)}", f"seed={cfg.seed}",
             f"kept={draws.n_kept}", f"mean_deviance={hio.fmt(dic.mean_deviance)}",
             f"deviance_at_mean={hio.fmt(dic.deviance_at_mean)}", f"p_d={hio.fmt(dic.p_d)}",
             f"dic={hio.fmt(dic.dic)}", f"phi={' '.join(hio.fmt(v) for v in pm['phi'])}"]
    for i, sid in enumerate(draws.ids):
        lines.append(f"{sid}: loadings={' '.join(hio.fmt(v) for v in pm['loadings'][i])} "
                     f"rho={' '.join(hio.fmt(v) for v in pm['rho'][i])}")
    for name, val in draws.diagnostics.items():
        lines.append(f"max_{name}={hio.fmt(np.nanmax(val)) if np.isfinite(val).any() else 'nan'}")
    (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def dic_table(cells) -> str:
    """4 x 2 text grid: rows are volatility configurations, columns heterogeneity orders."""
    by = {(c.spec.volatility, c.spec.s): c for c in cells}
    lines = [f"{'volatility':<12}{'s=0':>20}{'s=1':>20}"]
    for name, _, _ in VOLATILITY_CONFIGS:
        cells_txt = []
        for s in (0, 1):
            c = by.get((name, s))
            cells_txt.append("failed" if c is None or c.report is None else f"{c.report.dic:.4f}")
        lines.append(f"{name:<12}{cells_txt[0]:>20}{cells_txt[1]:>20}")
    return "\n".join(lines) + "\n"


def cmd_grid(cfg: RunConfig) -> None:
    panel = _estimation_panel(cfg)
    cells = run_grid(panel, cfg.spec, seed=cfg.seed, gdp=cfg.gdp, n_jobs=cfg.threads)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "dic_table.txt").write_text(dic_table(cells), encoding="utf-8")
    rows = []
    for c in cells:
        r = c.report
        nums = ["", "", "", ""] if r is None else [hio.fmt(r.mean_deviance), hio.fmt(r.deviance_at_mean),
                                                   hio.fmt(r.p_d), hio.fmt(r.dic)]
        rows.append([c.spec.volatility, c.spec.s, *nums, c.error or "ok"])
    hio.write_table(cfg.out / "grid.csv",
                    ["volatility", "s", "mean_deviance", "deviance_at_mean", "p_d", "dic", "status"], rows)
    failed = [c for c in cells if c.report is None]
    if len(failed) == len(cells):
        raise EstimationError(f"every grid cell failed; first: {failed[0].error}")


def cmd_regime(cfg: RunConfig) -> None:
    stamps, factor = hio.read_factor(cfg.need("factor"))
    post = fit_regime(factor, cfg.regime, seed=cfg.seed, stamps=stamps)
    flag, ident = in_recession(len(stamps), post.recessions)
    cfg.out.mkdir(parents=True, exist_ok=True)
    hio.write_table(cfg.out / "regime.csv", ["date", "week", "recession_prob", "in_recession", "episode_id"],
                    ([*hio.stamp_cells(s), hio.fmt(p), f, e]
                     for s, p, f, e in zip(stamps, post.recession_prob, flag, ident)))

    def cell(stamp):
        return "" if stamp is None else str(stamp)

    hio.write_table(cfg.out / "recessions.csv", ["episode_id", "start", "call", "end_call", "end"],
                    ([j, cell(r.start_stamp), cell(r.call_stamp), cell(r.end_call_stamp), cell(r.end_stamp)]
                     for j, r in enumerate(post.recessions, start=1)))
    lines = [f"seed={cfg.seed}", f"p_mean={hio.fmt(post.p.mean())}", f"q_mean={hio.fmt(post.q.mean())}",
             f"sigma2_mean={hio.fmt(post.sigma2.mean())}",
             f"recession_mean={hio.fmt(post.recession_mean.mean())}",
             f"expansion_mean={hio.fmt(post.expansion_mean.mean())}", f"recessions={len(post.recessions)}"]
    (cfg.out / "regime_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_export_index(cfg: RunConfig) -> None:
    draws = hio.read_draws(cfg.need("draws"))
    panel = _estimation_panel(cfg)
    if panel.ids != draws.ids:
        raise InputError("panel series do not match the ones the draws were estimated on")
    if draws.factor.shape[1] != len(panel.index):
        raise InputError("panel spine length differs from the stored factor draws")
    cfg.out.mkdir(parents=True, exist_ok=True)
    _export_index(cfg, panel, draws)


def cmd_simulate(cfg: RunConfig) -> None:
    """Synthetic growth panel plus matching raw level files and the hidden truth."""
    sim = cfg.sim
    spec = replace(cfg.spec, n_q=sim.n_q, n_m=sim.n_m, n_w=sim.n_w)
    rng = np.random.default_rng(cfg.seed)
    n = spec.n
    loadings = rng.uniform(0.5, 2.0, size=(n, spec.s + 1))
    loadings[0, 0] = 1.0
    rho = rng.uniform(-0.3, 0.5, size=(n, 1))
    regime = RegimeParams(sim.mu0, sim.mu1, sim.p, sim.q) if sim.regime else None
    params = TrueParams(loadings, [sim.phi], rho, sim.sigma_factor, sim.sigma_idio,
                        omega2_factor=sim.omega2_factor, regime=regime)
    origin = PseudoWeekStamp(2001, 1, 1)
    panel, truth = simulate_panel(params, spec, sim.T, seed=rng, origin=origin)

    # raw levels whose lag-48 log differences reproduce the simulated growth
    lead = origin.shift(-48)
    index = [lead.shift(t) for t in range(sim.T + 48)]
    levels = np.full((sim.T + 48, n), np.nan)
    for t in range(sim.T + 48):
        for i in range(n):
            if t < 48:
                if not np.isnan(panel.values[t, i]):
                    levels[t, i] = 100.0
            elif not np.isnan(panel.values[t - 48, i]):
                levels[t, i] = levels[t - 48, i] * np.exp(panel.values[t - 48, i])
    raw = MixedPanel.from_columns(index, dict(zip(panel.ids, levels.T)), panel.meta)

    cfg.out.mkdir(parents=True, exist_ok=True)
    hio.write_panel(cfg.out / "panel.csv", panel)
    hio.write_observations(cfg.out / "observations.csv", raw)
    hio.write_series_table(cfg.out / "series.csv", panel.meta)
    states = truth.extra.get("states")
    hio.write_table(cfg.out / "truth.csv", ["date", "week", "factor", "state"],
                    ([*hio.stamp_cells(s), hio.fmt(f), "" if states is None else int(states[t])]
                     for t, (s, f) in enumerate(zip(panel.index, truth.factor))))
    hio.write_table(cfg.out / "truth_params.csv", ["series_id", "loading", "rho"],
                    ([sid, hio.fmt(loadings[i, 0]), hio.fmt(rho[i, 0])] for i, sid in enumerate(panel.ids)))


COMMANDS = {
    "prepare": (cmd_prepare, "build the pseudo-weekly growth panel from raw observations"),
    "estimate": (cmd_estimate, "run the Gibbs sampler; write draws, factor, index and DIC summary"),
    "grid": (cmd_grid, "estimate the eight specifications and tabulate DIC"),
    "regime": (cmd_regime, "fit the Markov-switching model to a factor file and date recessions"),
    "export-index": (cmd_export_index, "rescale stored factor draws to GDP growth"),
    "simulate": (cmd_simulate, "write a synthetic panel, raw inputs and the true factor"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfei", description="High-frequency economic index toolkit.",
                                     epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, epilog=CONFIG_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, help="flat key = value file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="cap on worker processes and BLAS threads")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        for key in ("observations", "series", "panel", "draws", "factor"):
            p.add_argument(f"--{key}")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _values(args) -> dict[str, str]:
    values = hio.read_config(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for key in ("out", "seed", "threads", "observations", "series", "panel", "draws", "factor"):
        v = getattr(args, key)
        if v is not None:
            values[key] = str(v)
    return values


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    func = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.from_values(_values(args))
        with threadpool_limits(limits=cfg.threads):
            func(cfg)
    except HfeiError as exc:
        print(f"error [{exc.category}] {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io] {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
