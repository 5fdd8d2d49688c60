"""Command-line interface wiring ingestion, analyses, and reports into reproducible runs.

Every command is a pure function of (input files, flags, seed): identical
invocations write byte-identical outputs, and each run emits a manifest.json
(resolved config, input digests, seed, version, output list) from which
`marketgap rerun` reproduces the run.

Exit codes: 0 success, 2 usage, 3 data, 4 numeric.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from datetime import date
from pathlib import Path

from . import __version__
from .errors import DataError, MarketGapError, UsageError
from .ordinal import entropy_series, phase_statistics
from .panel import load_price_panel, log_returns, write_metadata, write_price_panel
from .portfolio import (
    StudyConfig,
    quintile_report,
    report_to_dict,
    run_portfolio_study,
    write_observations_csv,
)
from .regimes import (
    GapConfig,
    SegmentationParams,
    gap_series,
    monthly_sector_heatmap,
    phase_segmentation,
    phase_windows_to_dict,
    write_gap_csv,
    write_gap_jsonl,
    write_heatmap_csv,
)
from .synth import (
    generate_factor_panel,
    load_scenario_json,
    one_factor_config,
    risk_study_scenario,
    three_phase_config,
    three_phase_scenario,
    truth_to_dict,
)

ENTROPY_CSV_HEADER = "date,n_stocks,H_ord_nats,p0,p1,p2,p3,p4,p5"
ENTROPY_CSV_UNITS = (
    "# units: date=ISO-8601 date, n_stocks=count, H_ord_nats=nats, "
    "p0..p5=probability (dimensionless)"
)


# ---------- Small helpers ----------

def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _round9(x: float) -> float:
    return float(_fmt(x))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: list, outputs: list) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": config.get("seed"),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
    }
    _write_json(manifest, out_dir / "manifest.json")


def _load_panel(config: dict):
    return load_price_panel(
        config["prices"], layout=config.get("layout", "long"), metadata=config.get("meta")
    )


def _input_paths(config: dict) -> list:
    return [p for p in (config.get("prices"), config.get("meta"), config.get("scenario")) if p]


def _out_dir(config: dict) -> Path:
    out = Path(config["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------- Commands ----------

def run_gap(config: dict) -> None:
    if config.get("by_sector") and config.get("meta") is None:
        raise UsageError("--by-sector requires --meta with sector labels")
    out = _out_dir(config)
    panel = _load_panel(config)
    gap_cfg = GapConfig(
        window=config["window"],
        step=config["step"],
        rho_mode=config["rho_mode"],
        norm_mode=config["norm_mode"],
    )
    threads = config.get("threads", 1)
    outputs: list[str] = []
    summary: dict = {"config": {
        "window": gap_cfg.window, "step": gap_cfg.step,
        "rho_mode": gap_cfg.rho_mode, "norm_mode": gap_cfg.norm_mode,
    }, "markets": {}}
    for market in panel.markets():
        sub = panel.market_panel(market)
        returns = log_returns(sub)
        series = gap_series(returns, gap_cfg, threads=threads)
        name = _slug(market)
        write_gap_csv(series, out / f"gap_{name}.csv")
        write_gap_jsonl(series, out / f"gap_{name}.jsonl")
        outputs += [f"gap_{name}.csv", f"gap_{name}.jsonl"]
        deltas = series.deltas
        summary["markets"][market] = {
            "n_windows": len(series.summaries),
            "n_dropped_windows": len(series.dropped),
            "delta_mean": _round9(deltas.mean()) if deltas.size else None,
            "delta_min": _round9(deltas.min()) if deltas.size else None,
            "delta_max": _round9(deltas.max()) if deltas.size else None,
            "max_abs_delta": _round9(max(abs(deltas.min()), abs(deltas.max())))
            if deltas.size else None,
            "lambda_norm_mean": _round9(series.lambda_norms.mean()) if deltas.size else None,
        }
        if config.get("by_sector"):
            sectors_summary = {}
            for sector in sub.sectors():
                members = [t for t in sub.tickers if sub.sector_of[t] == sector]
                if len(members) < 2:
                    raise DataError(
                        f"sector {sector!r} in market {market!r} has {len(members)} "
                        "ticker(s); need >= 2 for --by-sector"
                    )
                sector_series = gap_series(
                    log_returns(sub.restrict(members)), gap_cfg, threads=threads
                )
                sec_name = f"{name}_{_slug(sector)}"
                write_gap_csv(sector_series, out / f"gap_{sec_name}.csv")
                outputs.append(f"gap_{sec_name}.csv")
                sectors_summary[sector] = {
                    "n_windows": len(sector_series.summaries),
                    "delta_mean": _round9(sector_series.deltas.mean())
                    if sector_series.summaries else None,
                }
            summary["markets"][market]["sectors"] = sectors_summary
    _write_json(summary, out / "summary.json")
    outputs.append("summary.json")
    _write_manifest(out, "gap", config, _input_paths(config), outputs)


def _write_entropy_csv(series, path) -> None:
    lines = [ENTROPY_CSV_UNITS, ENTROPY_CSV_HEADER]
    for i, d in enumerate(series.dates):
        probs = ",".join(_fmt(p) for p in series.probabilities[i])
        lines.append(f"{d.isoformat()},{series.n_stocks[i]},{_fmt(series.values[i])},{probs}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _phase_stats_dict(stats) -> dict:
    def stat(s):
        if s is None:
            return None
        return {
            "mean_nats": _round9(s.mean),
            "std_nats": _round9(s.std) if s.std is not None else None,
            "n": s.count,
        }

    return {
        "pre_shock": stat(stats.pre_shock),
        "shock": stat(stats.shock),
        "false_recovery": stat(stats.false_recovery),
        "stabilized": stat(stats.stabilized),
        "false_recovery_p95_nats": _round9(stats.false_recovery_p95)
        if stats.false_recovery_p95 is not None else None,
        "percentile_method": stats.percentile_method,
    }


def run_entropy(config: dict) -> None:
    out = _out_dir(config)
    panel = _load_panel(config)
    outputs: list[str] = []
    for market in panel.markets():
        sub = panel.market_panel(market)
        returns = log_returns(sub)
        series = entropy_series(returns, length=config["window"], step=config["step"])
        name = _slug(market)
        _write_entropy_csv(series, out / f"entropy_{name}.csv")
        outputs.append(f"entropy_{name}.csv")
        if config.get("event_date"):
            event = date.fromisoformat(config["event_date"])
            if bool(config.get("stabilized_start")) != bool(config.get("stabilized_end")):
                raise UsageError("--stabilized-start and --stabilized-end go together")
            params = SegmentationParams(
                shock_halfwidth=config["shock_halfwidth"],
                threshold=config["entropy_threshold"],
                sustain_days=config["sustain_days"],
                stabilized=(
                    (date.fromisoformat(config["stabilized_start"]),
                     date.fromisoformat(config["stabilized_end"]))
                    if config.get("stabilized_start")
                    else None
                ),
            )
            phases = phase_segmentation(series.dates, series.values, event, params=params)
            stats = phase_statistics(series, phases)
            _write_json(
                {"phases": phase_windows_to_dict(phases), "statistics": _phase_stats_dict(stats)},
                out / f"phases_{name}.json",
            )
            outputs.append(f"phases_{name}.json")
    _write_manifest(out, "entropy", config, _input_paths(config), outputs)


def run_heatmap(config: dict) -> None:
    out = _out_dir(config)
    if config.get("meta") is None:
        raise UsageError("heatmap requires --meta with sector labels")
    panel = _load_panel(config)
    gap_cfg = GapConfig(
        window=config["window"], step=config["step"],
        rho_mode=config["rho_mode"], norm_mode=config["norm_mode"],
    )
    outputs: list[str] = []
    for market in panel.markets():
        sub = panel.market_panel(market)
        grid = monthly_sector_heatmap(
            log_returns(sub), sub.sector_of, gap_cfg, threads=config.get("threads", 1)
        )
        name = _slug(market)
        write_heatmap_csv(grid, out / f"heatmap_{name}.csv")
        outputs.append(f"heatmap_{name}.csv")
    _write_manifest(out, "heatmap", config, _input_paths(config), outputs)


def run_portfolio(config: dict) -> None:
    out = _out_dir(config)
    panel = _load_panel(config)
    study_cfg = StudyConfig(
        formation=config["formation"],
        test=config["test"],
        n_stocks=config["n_stocks"],
        portfolios=config["portfolios"],
        annualization=config["annualization"],
        step=config.get("study_step"),
    )
    event = date.fromisoformat(config["event_date"]) if config.get("event_date") else None
    results = []
    reports = {}
    for stream, market in enumerate(panel.markets()):
        sub = panel.market_panel(market)
        result = run_portfolio_study(
            log_returns(sub), study_cfg, seed=config["seed"], market=market,
            stream=stream, threads=config.get("threads", 1),
        )
        results.append(result)
        reports[market] = report_to_dict(quintile_report(result.observations, event))
        reports[market]["skipped_windows"] = [
            {"window_index": w, "reason": reason} for w, reason in result.skipped_windows
        ]
        reports[market]["skipped_portfolios"] = result.skipped_portfolios
    write_observations_csv(results, out / "observations.csv")
    report = {
        "study": {
            "formation": study_cfg.formation,
            "test": study_cfg.test,
            "n_stocks": study_cfg.n_stocks,
            "portfolios": study_cfg.portfolios,
            "annualization": study_cfg.annualization,
            "step": study_cfg.effective_step,
            "seed": config["seed"],
            "resampling": "per_window",
            "event_date": config.get("event_date"),
            "variance_convention": {
                "formation_moments": "population (1/T)",
                "test_window": "sample (1/(h-1))",
            },
        },
        "markets": reports,
    }
    _write_json(report, out / "report.json")
    _write_manifest(
        out, "portfolio", config, _input_paths(config), ["observations.csv", "report.json"]
    )


def run_synth(config: dict) -> None:
    out = _out_dir(config)
    outputs = ["prices.csv", "meta.csv"]
    truth = None
    if config.get("scenario"):
        synth_cfg = load_scenario_json(config["scenario"])
        if config.get("seed") is not None:
            synth_cfg.seed = config["seed"]
        panel = generate_factor_panel(synth_cfg)
    else:
        preset = config.get("preset") or "three-phase"
        seed = config["seed"] if config.get("seed") is not None else None
        if preset == "three-phase":
            result = three_phase_scenario(
                three_phase_config(seed) if seed is not None else None
            )
            panel, truth = result.panel, truth_to_dict(result.truth)
        elif preset == "risk-study":
            args = (seed,) if seed is not None else ()
            panel, event = risk_study_scenario(*args)
            truth = {"event_date": event.isoformat()}
        elif preset == "one-factor":
            kwargs = {"seed": seed} if seed is not None else {}
            panel = generate_factor_panel(one_factor_config(**kwargs))
        else:
            raise UsageError(f"unknown preset {preset!r}")
    write_price_panel(panel, out / "prices.csv")
    write_metadata(panel, out / "meta.csv")
    if truth is not None:
        _write_json(truth, out / "truth.json")
        outputs.append("truth.json")
    _write_manifest(out, "synth", config, _input_paths(config), outputs)


_RUNNERS = {
    "gap": run_gap,
    "entropy": run_entropy,
    "heatmap": run_heatmap,
    "portfolio": run_portfolio,
    "synth": run_synth,
}


def run_rerun(config: dict) -> None:
    with open(config["manifest"], "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    command = manifest.get("command")
    if command not in _RUNNERS:
        raise DataError(f"manifest names unknown command {command!r}")
    stored = dict(manifest["config"])
    stored["out_dir"] = config["out_dir"]
    _RUNNERS[command](stored)


# ---------- Argument parsing ----------

def _iso_date(text: str) -> str:
    try:
        date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date (YYYY-MM-DD): {text!r}")
    return text


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text}")
    return value


def _positive_int(text: str) -> int:
    value = _nonneg_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_common_inputs(p: argparse.ArgumentParser, need_meta: bool = False) -> None:
    p.add_argument("--prices", required=True, help="close-price file")
    p.add_argument("--layout", choices=("long", "wide"), default="long",
                   help="price file layout (default long)")
    p.add_argument("--meta", required=need_meta, default=None,
                   help="ticker,sector,market metadata file")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--threads", type=_positive_int, default=1,
                   help="worker threads (results identical for any count)")


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=_positive_int, default=60, help="rolling window length")
    p.add_argument("--step", type=_positive_int, default=1, help="rolling step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketgap",
        description="Rolling spectral market-structure analytics on daily price panels",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap", help="spectral gap time series per market")
    _add_common_inputs(p)
    _add_window_flags(p)
    p.add_argument("--rho-mode", choices=("signed", "abs"), default="signed",
                   help="mean off-diagonal (signed) or mean absolute correlation")
    p.add_argument("--norm-mode", choices=("excess", "plain"), default="excess",
                   help="leading-eigenvalue normalization")
    p.add_argument("--by-sector", action="store_true",
                   help="also emit intra-sector series (needs --meta)")

    p = sub.add_parser("entropy", help="cross-sectional ordinal entropy series")
    _add_common_inputs(p)
    _add_window_flags(p)
    p.add_argument("--event-date", type=_iso_date, default=None,
                   help="shock announcement date (enables phase segmentation)")
    p.add_argument("--shock-halfwidth", type=_nonneg_int, default=2,
                   help="trading days on each side of the event (default 2)")
    p.add_argument("--entropy-threshold", type=float, default=1.0,
                   help="sustained-restoration threshold in nats (default 1.0)")
    p.add_argument("--sustain-days", type=_positive_int, default=20,
                   help="consecutive days above threshold (default 20)")
    p.add_argument("--stabilized-start", type=_iso_date, default=None)
    p.add_argument("--stabilized-end", type=_iso_date, default=None)

    p = sub.add_parser("heatmap", help="monthly sector heatmap of lambda_norm")
    _add_common_inputs(p, need_meta=True)
    _add_window_flags(p)
    p.add_argument("--rho-mode", choices=("signed", "abs"), default="signed")
    p.add_argument("--norm-mode", choices=("excess", "plain"), default="excess")

    p = sub.add_parser("portfolio", help="rolling Monte Carlo portfolio risk study")
    _add_common_inputs(p)
    p.add_argument("--formation", type=_positive_int, default=60, help="formation window days")
    p.add_argument("--test", type=_positive_int, default=20, help="test window days")
    p.add_argument("--n-stocks", type=_positive_int, default=10, help="stocks per portfolio")
    p.add_argument("--portfolios", type=_positive_int, default=500, help="portfolios per window")
    p.add_argument("--annualization", type=float, default=252.0)
    p.add_argument("--study-step", type=_positive_int, default=None,
                   help="days between windows (default: test length)")
    p.add_argument("--seed", type=_nonneg_int, required=True,
                   help="RNG seed (required for reproducibility)")
    p.add_argument("--event-date", type=_iso_date, default=None,
                   help="split subperiod statistics at this date")

    p = sub.add_parser("synth", help="generate a synthetic factor-model panel")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--scenario", default=None, help="scenario config JSON")
    group.add_argument("--preset", choices=("three-phase", "risk-study", "one-factor"),
                       default=None, help="built-in scenario (default three-phase)")
    p.add_argument("--seed", type=_nonneg_int, default=None,
                   help="override the scenario seed")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("--manifest", required=True, help="manifest.json of a previous run")
    p.add_argument("--out-dir", required=True)

    return parser


def _config_from_args(args: argparse.Namespace) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "command"}
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    runner = {**_RUNNERS, "rerun": run_rerun}[args.command]
    try:
        runner(_config_from_args(args))
    except MarketGapError as exc:
        print(f"marketgap {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
