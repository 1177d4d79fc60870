"""
SurvBand - Main Entry Point

Command-line interface for ensemble-bootstrap confidence bands of neural
survival curves: simulate data, run coverage experiments, build bands for a
loaded dataset, run the fold width study, or configure an experiment in the
interactive wizard.
"""
from __future__ import annotations
import argparse
import os
import sys
from typing import List, Optional
from errors import ConfigurationError, ExperimentFailedError, SurvBandError
from file_output import FileOutput
from harness import run_dataset_bands, run_experiment, run_width_study
from loader import DataLoader
from logger_config import LoggerSetup
from models import ColumnSchema, ExperimentConfig
from printer import ReportPrinter
from simgen import generate, get_setting
from utils import STREAM_DATA, derive_rng, format_level, parse_csv_list
import settings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='survband', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)

    sim = sub.add_parser('simulate', help='Generate a simulated dataset')
    sim.add_argument('--setting', type=int, required=True)
    sim.add_argument('--n', type=int, required=True)
    sim.add_argument('--seed', type=int, default=settings.DEFAULT_SEED)
    sim.add_argument('--out', required=True)
    sim.add_argument('--no-censoring', action='store_true')

    def experiment_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument('--config', help='key=value network configuration file')
        p.add_argument('--controls', type=int)
        p.add_argument('--layers', type=int)
        p.add_argument('--width', type=int)
        p.add_argument('--epochs', type=int)
        p.add_argument('--patience', type=int)
        p.add_argument('--M', type=int)
        p.add_argument('--B', type=int)
        p.add_argument('--levels')
        p.add_argument('--methods')
        p.add_argument('--seed', type=int)
        p.add_argument('--workers', type=int)
        p.add_argument('--ensemble-mode', choices=('g', 'curve'))

    def data_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument('--data', required=True,
                       help='CSV file; a relative path is tried in the working directory, then in data/')
        p.add_argument('--time-col', required=True)
        p.add_argument('--event-col', required=True)
        p.add_argument('--features', required=True)

    cov = sub.add_parser('coverage', help='Run a simulation coverage experiment')
    experiment_flags(cov)
    cov.add_argument('--setting', type=int)
    cov.add_argument('--n', type=int)
    cov.add_argument('--R', type=int)
    cov.add_argument('--n-test', type=int)
    cov.add_argument('--out', default='report.csv')
    cov.add_argument('--plots')

    bands = sub.add_parser('bands', help='Bands for rows of a loaded dataset')
    experiment_flags(bands)
    data_flags(bands)
    bands.add_argument('--test-rows', required=True)
    bands.add_argument('--grid-points', type=int)
    bands.add_argument('--out', default='bands')

    widths = sub.add_parser('widths', help='Fold width study on a loaded dataset')
    experiment_flags(widths)
    data_flags(widths)
    widths.add_argument('--folds', type=int, default=10)
    widths.add_argument('--n-test-per-fold', type=int)
    widths.add_argument('--grid-points', type=int)
    widths.add_argument('--out', default='widths.csv')

    sub.add_parser('wizard', help='Configure a coverage experiment interactively')
    return parser


def base_config(loader: DataLoader) -> ExperimentConfig:
    """Experiment defaults from settings, overridden by Config.json and the default net file."""
    data = {'master_seed': settings.DEFAULT_SEED, 'workers': settings.DEFAULT_WORKERS}
    if os.path.exists(settings.CONFIG_JSON):
        data.update(loader.load_config())
    data.pop('consoleLogging', None)
    net = loader.load_net_config() if os.path.exists(settings.NET_CONFIG) else None
    return ExperimentConfig.from_dict(data, net=net)


def config_from_args(args: argparse.Namespace, loader: DataLoader) -> ExperimentConfig:
    """Apply --config and command-line flags on top of the defaults."""
    cfg = base_config(loader)
    net = loader.load_net_config(args.config) if args.config else cfg.net
    net = net.with_overrides(n_controls=args.controls, hidden_layers=args.layers, layer_width=args.width,
                             max_epochs=args.epochs, patience=args.patience)
    try:
        levels = tuple(parse_csv_list(args.levels, float)) if args.levels else None
    except ValueError:
        raise ConfigurationError(f"--levels must be comma-separated numbers, got {args.levels!r}")
    methods = tuple(parse_csv_list(args.methods)) if args.methods else None
    overrides = dict(net=net, M=args.M, B=args.B, levels=levels, methods=methods, master_seed=args.seed,
                     workers=args.workers, ensemble_mode=args.ensemble_mode)
    for name, attr in (('setting', 'setting'), ('n', 'n'), ('R', 'R'), ('n_test', 'n_test'),
                       ('n_test', 'n_test_per_fold'), ('grid_points', 'grid_points')):
        if getattr(args, attr, None) is not None:
            overrides[name] = getattr(args, attr)
    return cfg.with_overrides(**overrides)


def load_dataset(args: argparse.Namespace, loader: DataLoader):
    schema = ColumnSchema(args.time_col, args.event_col, tuple(parse_csv_list(args.features)))
    return loader.load_delimited(args.data, schema)


def cmd_simulate(args: argparse.Namespace, loader: DataLoader) -> None:
    setting = get_setting(args.setting)
    ds, _ = generate(setting, args.n, derive_rng(args.seed, STREAM_DATA), censoring=not args.no_censoring)
    path = FileOutput.save_dataset(ds, args.out)
    FileOutput.save_sidecar(args.out, {'setting': setting.id, 'n': args.n, 'seed': args.seed,
                                       'censoring': not args.no_censoring})
    print(f"{ds.n} records ({ds.censoring_fraction:.1%} censored) saved to: {path}")


def cmd_coverage(args: argparse.Namespace, loader: DataLoader) -> None:
    cfg = config_from_args(args, loader)
    ReportPrinter.print_header(cfg)
    try:
        report = run_experiment(cfg, out_path=args.out, plots_dir=args.plots)
    except ExperimentFailedError as e:
        if e.report is not None:
            ReportPrinter.print_report(e.report)
        raise
    ReportPrinter.print_report(report)
    print(f"\nReport saved to: {FileOutput.resolve(args.out)}")


def cmd_bands(args: argparse.Namespace, loader: DataLoader) -> None:
    cfg = config_from_args(args, loader).with_overrides(data_path=args.data)
    ds = load_dataset(args, loader)
    try:
        rows = parse_csv_list(args.test_rows, int)
    except ValueError:
        raise ConfigurationError(f"--test-rows must be comma-separated row indices, got {args.test_rows!r}")
    ReportPrinter.print_header(cfg, "Dataset Bands")
    for result in run_dataset_bands(ds, cfg, rows):
        stem = f"row{result.row}"
        for (method, level), band in result.bands.items():
            FileOutput.save_band_table(band, os.path.join(args.out, f"{stem}_{method}_{format_level(level).rstrip('%')}.csv"))
        FileOutput.save_curve_table(result.grid, {'base': result.base, 'center': result.center, 'km': result.km},
                                    os.path.join(args.out, f"{stem}_curves.csv"))
        FileOutput.save_band_plot(result.bands, result.km, args.out, stem, reference_label='Kaplan-Meier')
    print(f"\nBands for {len(rows)} rows saved to: {FileOutput.resolve(args.out)}")


def cmd_widths(args: argparse.Namespace, loader: DataLoader) -> None:
    cfg = config_from_args(args, loader).with_overrides(data_path=args.data)
    ds = load_dataset(args, loader)
    ReportPrinter.print_header(cfg, f"Width Study ({args.folds} folds)")
    report = run_width_study(ds, cfg, args.folds)
    ReportPrinter.print_width_report(report)
    print(f"\nReport saved to: {FileOutput.save_width_report(report, args.out)}")


def cmd_wizard(args: argparse.Namespace, loader: DataLoader) -> None:
    from textual_wizzard import ExperimentWizard
    cfg = ExperimentWizard(base_config(loader)).run()
    if cfg is None:
        print("Wizard closed without running an experiment.")
        return
    ReportPrinter.print_header(cfg)
    report = run_experiment(cfg, out_path='report.csv')
    ReportPrinter.print_report(report)
    print(f"\nReport saved to: {FileOutput.resolve('report.csv')}")


COMMANDS = {'simulate': cmd_simulate, 'coverage': cmd_coverage, 'bands': cmd_bands,
            'widths': cmd_widths, 'wizard': cmd_wizard}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for SurvBand.

    Returns:
        Process exit code: 0 on success, 1 on a SurvBandError.

    Logs:
        Info: Startup and completion.
        Error: Failures, with traceback.
    """
    args = build_parser().parse_args(argv)
    loader = DataLoader(DataLoader.get_current_directory())

    console_logging_enabled = settings.LOG_CONSOLE
    try:
        if os.path.exists(settings.CONFIG_JSON):
            config = loader.load_json(settings.CONFIG_JSON)
            console_logging_enabled = str(config.get('consoleLogging', settings.LOG_CONSOLE)).lower() == 'true'
    except Exception:
        pass
    logger = LoggerSetup.initialize(enable_console=console_logging_enabled)
    logger.info("=" * 60)
    logger.info(f"SurvBand starting ({args.command})")
    logger.info("=" * 60)

    try:
        COMMANDS[args.command](args, loader)
    except (SurvBandError, FileNotFoundError) as e:
        logger.exception(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        raise

    logger.info(f"SurvBand finished ({args.command})")
    if LoggerSetup.get_log_file():
        print(f"Log file saved to: {LoggerSetup.get_log_file()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
