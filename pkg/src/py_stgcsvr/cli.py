"""Command-line entry points for every pipeline stage.

Exit codes: 0 on success, 1 on usage or validation errors, 2 on any other failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from py_stgcsvr import artifacts, datasets
from py_stgcsvr.conformal import PredictionInterval, RollingCalibrator, required_history, run_conformal
from py_stgcsvr.errors import ConfigError, InvalidArgumentError, StgcsvrError
from py_stgcsvr.forecaster import (
    ForecastBundle,
    GcsvrModel,
    fit,
    forecast_recursive,
    one_step_forecasts,
    residual_sigma,
)
from py_stgcsvr.graph import StationNetwork, build_adjacency
from py_stgcsvr.loader import load_config
from py_stgcsvr.mcb import mcb_test
from py_stgcsvr.metrics import METRIC_NAMES, PredictiveLaw, exceedance_probability, score_forecast
from py_stgcsvr.models.config import RunConfig, SyntheticSpec
from py_stgcsvr.models.hooks import ProgressHook
from py_stgcsvr.panel import PanelSeries, impute
from py_stgcsvr.runner import BacktestRunner, naive_sigma
from py_stgcsvr.schedule import make_schedule
from py_stgcsvr.synthetic import generate_synthetic
from py_stgcsvr.utils._logger import configure_from_env, logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ------------------------------------------------------------------
# Shared plumbing
# ------------------------------------------------------------------


def _run_config(args: argparse.Namespace, **extra: Any) -> RunConfig:
    overrides: Dict[str, Any] = {
        "out_dir": args.out,
        "seed": args.seed,
        "jobs": args.jobs,
        "stations": getattr(args, "stations", None),
        "panel": getattr(args, "panel", None),
        **extra,
    }
    config = load_config(args.config, overrides)
    return _with_default_inputs(config)


def _output_config(args: argparse.Namespace) -> RunConfig:
    # commands that only write files need no stations or panel
    return load_config(args.config, {"out_dir": args.out, "seed": args.seed, "jobs": args.jobs})


def _with_default_inputs(config: RunConfig) -> RunConfig:
    # inputs default to the files `synth` writes into the output directory
    update: Dict[str, Path] = {}
    for name in ("stations", "panel"):
        candidate = config.out_dir / f"{name}.csv"
        if getattr(config, name) is None and candidate.exists():
            update[name] = candidate
    config = config.model_copy(update=update) if update else config
    config.require_files()
    return config


def _require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise ConfigError(f"No {what} file given; pass --{what} or set '{what}' in the config file.")
    return path


def _network(config: RunConfig) -> StationNetwork:
    stations = datasets.load_stations(_require(config.stations, "stations"))
    return build_adjacency(stations, config.graph.sigma_tilde_sq, config.graph.eps_sparsity)


def _panel(config: RunConfig, network: StationNetwork) -> PanelSeries:
    return datasets.load_panel(_require(config.panel, "panel"), network.station_ids)


def _model_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    return Path(args.model) if getattr(args, "model", None) else config.out_dir


def _history(panel: PanelSeries, origin: Optional[str]) -> PanelSeries:
    if origin is None:
        return panel
    return panel.until(datasets.date_of(origin))


# ------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic station file and panel into ``out_dir``."""
    config = _output_config(args)
    fields = {
        "nodes": args.nodes,
        "topology": args.topology,
        "ar": args.ar,
        "coupling": args.coupling,
        "noise": args.noise,
        "days": args.days,
        "seed": config.seed,
        "outlier_rate": args.outlier_rate,
        "missing_rate": args.missing_rate,
        "start_date": args.start_date,
    }
    spec = SyntheticSpec(**{k: v for k, v in fields.items() if v is not None})
    stations, panel, _ = generate_synthetic(spec)
    out = config.out_dir
    datasets.write_stations(stations, out / "stations.csv")
    datasets.write_panel(panel, out / "panel.csv")
    logger.info("Wrote %d stations x %d days to %s", spec.nodes, spec.days, out)
    return EXIT_OK


def cmd_build_graph(args: argparse.Namespace) -> int:
    """Build the station graph and write ``graph.json``."""
    config = _run_config(args)
    network = _network(config)
    path = artifacts.write_graph(network, config.out_dir / artifacts.GRAPH_NAME, config.echo())
    logger.info("Graph with %d stations written to %s", network.size, path)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Train the encoder and the per-station SVRs, then save the model directory."""
    config = _run_config(args)
    network = _network(config)
    panel = _history(_panel(config, network), args.train_end)
    model = fit(panel, network, config.gcn, config.svr, jobs=config.jobs)
    directory = artifacts.save_model(model, _model_dir(args, config), config.echo())
    logger.info("Model for %d stations saved to %s", network.size, directory.parent)
    return EXIT_OK


def _calibrated_intervals(
    model: GcsvrModel, history: PanelSeries, bundle: ForecastBundle, config: RunConfig
) -> Optional[List[List[Optional[PredictionInterval]]]]:
    needed = required_history(config.conformal)
    last = history.n_days - 1
    first = last - needed + 1
    if first < model.input_window:
        logger.warning("History too short for %d calibration residuals; forecasts carry no intervals", needed)
        return None
    if model.train_end is not None and model.train_end >= history.date_at(first):
        logger.warning(
            "Model was trained through %s; calibration residuals from %s on are in-sample and intervals may be narrow",
            model.train_end,
            history.date_at(first),
        )
    forecasts = one_step_forecasts(model, history, first, last)
    actuals = history.reorder(model.station_ids).observed()[first : last + 1]
    calibrator = RollingCalibrator(model.network.size, config.conformal)
    calibrator.warm_up(actuals, forecasts)
    return calibrator.horizon_intervals(bundle.values)


def cmd_forecast(args: argparse.Namespace) -> int:
    """Forecast ``horizon`` days past the panel end (or ``--origin``) and write ``forecasts.json``."""
    config = _run_config(args, horizon=args.horizon)
    model = artifacts.load_model(_model_dir(args, config))
    history = _history(datasets.load_panel(_require(config.panel, "panel"), model.station_ids), args.origin)
    bundle = forecast_recursive(model, history, config.horizon, config.refresh_embeddings)

    exceedance = None
    if config.threshold is not None:
        sigma = residual_sigma(model, history, config.conformal.window)
        exceedance = np.array(
            [
                [
                    exceedance_probability(PredictiveLaw.gaussian(value, float(sigma[i])), config.threshold)
                    for i, value in enumerate(row)
                ]
                for row in bundle.values
            ]
        )
    intervals = _calibrated_intervals(model, history, bundle, config)
    bundle = replace(bundle, intervals=intervals, exceedance=exceedance)
    path = artifacts.write_forecasts(
        bundle,
        config.out_dir / "forecasts.json",
        seed=config.seed,
        threshold=config.threshold,
        config=config.echo(),
    )
    logger.info("Forecast %d days from %s written to %s", bundle.horizon, bundle.origin, path)
    return EXIT_OK


def _evaluate_forecasts(args: argparse.Namespace, config: RunConfig) -> int:
    forecasts_path = Path(args.forecasts) if args.forecasts else config.out_dir / "forecasts.json"
    bundle = artifacts.read_forecasts(forecasts_path)
    panel = impute(datasets.load_panel(_require(config.panel, "panel"), bundle.station_ids))
    history = panel.until(bundle.origin)
    observed = (panel.end - bundle.origin).days
    if observed < 1:
        raise InvalidArgumentError(
            f"Panel ends on {panel.end}; nothing after the forecast origin {bundle.origin} to score."
        )
    if observed < bundle.horizon:
        logger.warning("Only %d of %d forecast days are observed; scoring those", observed, bundle.horizon)
        bundle = bundle.truncated(observed)
    actuals = panel.between(bundle.dates[0], bundle.dates[-1]).observed()

    manifest = _model_dir(args, config) / artifacts.MANIFEST_NAME
    if manifest.exists():
        sigma = residual_sigma(artifacts.load_model(manifest.parent), history, config.conformal.window)
    else:
        sigma = naive_sigma(history.values, config.conformal.window)
    report = score_forecast(actuals, bundle.values, history.observed(), sigma, bundle.station_ids, config.pinball_rho)
    payload = {"origin": bundle.origin.isoformat(), "horizon": bundle.horizon, "report": report.to_dict()}
    path = artifacts.write_metrics(payload, config.out_dir / "metrics.json", config.echo())
    logger.info("Scores for %d stations written to %s", len(bundle.station_ids), path)
    return EXIT_OK


def _evaluate_backtest(config: RunConfig) -> int:
    if config.test_year_start is None:
        raise ConfigError("evaluate --backtest needs test_year_start (flag or config file).")
    network = _network(config)
    panel = _panel(config, network)
    schedule = make_schedule(config.test_year_start, config.horizon)
    runner = BacktestRunner(panel, network, config, hooks=[ProgressHook(len(schedule.windows))], schedule=schedule)
    result = runner.run()
    out = config.out_dir
    artifacts.write_metrics(result.to_dict(), out / "metrics.json", config.echo())
    for metric in METRIC_NAMES:
        datasets.write_scores(result.scores_long(metric), out / f"scores_{metric}.csv")
        artifacts.write_mcb(result.mcb(metric), out / f"mcb_{metric}.csv")
        artifacts.write_plotdata(result.plotdata(metric), out / f"plotdata_{metric}.csv")
    logger.info("Backtest of %d windows written to %s", len(result.windows), out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score a forecast file, or run the rolling backtest with ``--backtest``."""
    extra: Dict[str, Any] = {"horizon": args.horizon, "test_year_start": args.test_year_start}
    config = _run_config(args, **extra)
    if args.backtest:
        return _evaluate_backtest(config)
    return _evaluate_forecasts(args, config)


def cmd_mcb(args: argparse.Namespace) -> int:
    """Run the MCB test on a long-format score table and write ``mcb.csv``."""
    config = _output_config(args)
    matrix, _, models = datasets.read_scores(args.scores)
    result = mcb_test(matrix, args.theta, models)
    path = artifacts.write_mcb(result, config.out_dir / "mcb.csv")
    logger.info(
        "MCB over %d tasks: best model %s, cd %.4f; written to %s", result.n_tasks, models[result.best], result.cd, path
    )
    return EXIT_OK


def cmd_conformal(args: argparse.Namespace) -> int:
    """Stream one-step conformal intervals through the test year."""
    config = _run_config(args, test_year_start=args.test_year_start, horizon=args.horizon)
    if config.test_year_start is None:
        raise ConfigError("conformal needs test_year_start (flag or config file).")
    model = artifacts.load_model(_model_dir(args, config))
    panel = datasets.load_panel(_require(config.panel, "panel"), model.station_ids)
    run = run_conformal(model, panel, make_schedule(config.test_year_start, config.horizon), config.conformal)
    artifacts.write_intervals(run.records, config.out_dir / "intervals.csv")
    payload = {**run.coverage.to_dict(), "per_window": {str(k): v for k, v in run.per_window.items()}}
    path = artifacts.write_coverage(payload, config.out_dir / "coverage.json", config.echo())
    logger.info("Pooled coverage %.3f over %d points written to %s", run.coverage.pooled, run.coverage.n_points, path)
    return EXIT_OK


# ------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="Output directory (default: out, or out_dir from --config).")
    parser.add_argument("--seed", type=int, default=None, help="Run seed; every random draw derives from it.")
    parser.add_argument("--config", default=None, help="Flat TOML run configuration.")
    parser.add_argument("--jobs", type=int, default=None, help="Parallel station/window tasks (-1: all cores).")


def _inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stations", default=None, help="stations.csv (default: <out>/stations.csv).")
    parser.add_argument("--panel", default=None, help="panel.csv (default: <out>/panel.csv).")


def build_parser() -> argparse.ArgumentParser:
    """Return the ``stgcsvr`` argument parser."""
    parser = _Parser(prog="stgcsvr", description="Spatio-temporal GCN + SVR air-quality forecasting toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="Generate a synthetic graph-coupled AR panel.")
    _common(synth)
    synth.add_argument("--nodes", type=int, default=None)
    synth.add_argument("--topology", choices=("ring", "grid", "two-cluster"), default=None)
    synth.add_argument("--ar", type=float, default=None)
    synth.add_argument("--coupling", type=float, default=None)
    synth.add_argument("--noise", type=float, default=None)
    synth.add_argument("--days", type=int, default=None)
    synth.add_argument("--outlier-rate", dest="outlier_rate", type=float, default=None)
    synth.add_argument("--missing-rate", dest="missing_rate", type=float, default=None)
    synth.add_argument("--start-date", dest="start_date", default=None, help="First day (YYYY-MM-DD).")
    synth.set_defaults(handler=cmd_synth)

    graph = sub.add_parser("build-graph", help="Build the station graph (graph.json).")
    _common(graph)
    graph.add_argument("--stations", default=None, help="stations.csv (default: <out>/stations.csv).")
    graph.set_defaults(handler=cmd_build_graph)

    train = sub.add_parser("train", help="Train the GCN encoder and per-station SVRs.")
    _common(train)
    _inputs(train)
    train.add_argument("--train-end", dest="train_end", default=None, help="Last training day (YYYY-MM-DD).")
    train.add_argument("--model", default=None, help="Model directory (default: <out>).")
    train.set_defaults(handler=cmd_train)

    forecast = sub.add_parser("forecast", help="Recursive multi-step forecast (forecasts.json).")
    _common(forecast)
    forecast.add_argument("--panel", default=None, help="panel.csv (default: <out>/panel.csv).")
    forecast.add_argument("--horizon", type=int, default=None, help="30, 60 or 90 days.")
    forecast.add_argument("--origin", default=None, help="Last observed day used (default: panel end).")
    forecast.add_argument("--model", default=None, help="Model directory (default: <out>).")
    forecast.set_defaults(handler=cmd_forecast)

    evaluate = sub.add_parser("evaluate", help="Score forecasts, or run the rolling backtest.")
    _common(evaluate)
    _inputs(evaluate)
    evaluate.add_argument("--forecasts", default=None, help="forecasts.json (default: <out>/forecasts.json).")
    evaluate.add_argument("--model", default=None, help="Model directory used for residual spreads.")
    evaluate.add_argument("--backtest", action="store_true", help="Run the rolling-window backtest instead.")
    evaluate.add_argument("--horizon", type=int, default=None, help="Backtest window length: 30, 60 or 90.")
    evaluate.add_argument("--test-year-start", dest="test_year_start", default=None, help="YYYY-MM-DD.")
    evaluate.set_defaults(handler=cmd_evaluate)

    mcb = sub.add_parser("mcb", help="Multiple comparison with the best (mcb.csv).")
    _common(mcb)
    mcb.add_argument("--scores", required=True, help="Long-format task,model,score CSV.")
    mcb.add_argument("--theta", type=float, default=0.05, help="Significance level: 0.05 or 0.01.")
    mcb.set_defaults(handler=cmd_mcb)

    conformal = sub.add_parser("conformal", help="Rolling conformal intervals over the test year.")
    _common(conformal)
    conformal.add_argument("--panel", default=None, help="panel.csv (default: <out>/panel.csv).")
    conformal.add_argument("--model", default=None, help="Model directory (default: <out>).")
    conformal.add_argument("--horizon", type=int, default=None, help="Window length used for per-window coverage.")
    conformal.add_argument("--test-year-start", dest="test_year_start", default=None, help="YYYY-MM-DD.")
    conformal.set_defaults(handler=cmd_conformal)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    load_dotenv()
    configure_from_env()
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (StgcsvrError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except Exception as exc:  # anything else is a runtime failure
        logger.error("%s failed: %s", args.command, exc, exc_info=True)
        return EXIT_RUNTIME


def _entrypoint(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))


if __name__ == "__main__":
    _entrypoint()
