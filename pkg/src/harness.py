"""
Experiment orchestration.

A repetition draws data, splits it, fits M ensemble runs on the training
rows and B bootstrap runs on resamples of them (validation fixed), then
turns the curves of every test point into bands. run_experiment repeats
this R times against the simulation truth and aggregates coverage and
width; run_dataset_bands and run_width_study do the same for a loaded
dataset, where no truth exists.
"""
from __future__ import annotations
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple
import numpy as np
from bands import band_width, build_band
from dataset import bootstrap_resample, continuous_features, kfold, split, standardize
from errors import ContractError, ExperimentFailedError, SurvBandError
from file_output import FileOutput
from hazardnet import HazardNet, train
from logger_config import run_logger
from models import (BandKey, BandResult, BootstrapReplicates, CoverageReport, CoverageRow, Dataset,
                    ExperimentConfig, NetConfig, RepetitionResult, RunDiagnostics, SplitPlan, SurvCurve,
                    TimeGrid, WidthReport, WidthRow)
from simgen import TruthOracle, draw_covariates, generate, get_setting, truth_curve
from survest import GFunction, breslow_fit, ensemble_curve_mean, ensemble_g, kaplan_meier, survival_curves
from utils import (STREAM_BOOTSTRAP, STREAM_DATA, STREAM_ENSEMBLE, STREAM_FOLDS, STREAM_RESAMPLE,
                   STREAM_SPLIT, STREAM_TEST_POINTS, derive_rng)

logger = logging.getLogger('SurvBand')


@dataclass(frozen=True, eq=False)
class RunTask:
    """One training run of a repetition, self-contained so it can be shipped to a worker."""
    kind: str
    run_id: int
    rep_id: int
    ds: Dataset
    plan: SplitPlan
    net: NetConfig
    master_seed: int
    test_x: np.ndarray
    grid: TimeGrid


@dataclass(eq=False)
class RunOutcome:
    kind: str
    run_id: int
    net: Optional[HazardNet]
    curves: np.ndarray
    diagnostics: RunDiagnostics


@dataclass(eq=False)
class CurveEstimates:
    """Curves of one repetition on a common grid.

    Attributes:
        grid: Evaluation grid.
        base: Single-run curves, shape (n_test, K).
        center: Ensemble curves, shape (n_test, K).
        boot: Bootstrap curves, shape (B, n_test, K).
        diagnostics: One entry per training run.
        valid_indices: Validation rows of the split.
    """
    grid: TimeGrid
    base: np.ndarray
    center: np.ndarray
    boot: np.ndarray
    diagnostics: List[RunDiagnostics]
    valid_indices: np.ndarray

    @property
    def n_test(self) -> int:
        return self.base.shape[0]

    def replicates(self, i: int) -> BootstrapReplicates:
        return BootstrapReplicates(self.boot[:, i, :], self.center[i], self.base[i], self.grid)


def fit_run(task: RunTask) -> RunOutcome:
    """Train one network and evaluate its curves at the test points.

    Ensemble and base runs train on the split's training rows with the
    ENSEMBLE stream; bootstrap runs train on a resample of those rows drawn
    from the RESAMPLE stream, with the BOOTSTRAP stream driving training.
    Each run's Breslow baseline is fitted on the rows it trained on.
    """
    if task.kind == 'bootstrap':
        rows = bootstrap_resample(task.plan.train_indices,
                                  derive_rng(task.master_seed, STREAM_RESAMPLE, task.rep_id, task.run_id))
        rng = derive_rng(task.master_seed, STREAM_BOOTSTRAP, task.rep_id, task.run_id)
    else:
        rows = task.plan.train_indices
        rng = derive_rng(task.master_seed, STREAM_ENSEMBLE, task.rep_id, task.run_id)
    net, report = train(task.ds, task.plan, task.net, rng, train_rows=rows,
                        log=run_logger(task.kind, task.rep_id, task.run_id))
    g = GFunction.single(net)
    baseline = breslow_fit(task.ds, g, rows)
    curves = survival_curves(baseline, g, task.test_x, task.grid, extend=True)
    keep = None if task.kind == 'bootstrap' else net
    return RunOutcome(task.kind, task.run_id, keep, curves,
                      RunDiagnostics.from_report(task.kind, task.run_id, report))


def estimate_curves(ds: Dataset, plan: SplitPlan, cfg: ExperimentConfig, test_x: np.ndarray,
                    grid: TimeGrid, rep_id: int = 0, executor: Optional[Executor] = None) -> CurveEstimates:
    """Run the M + B (+1) fits of one repetition and collect base, center and bootstrap curves.

    Args:
        ds: Standardized dataset.
        plan: Train/validation split of ds.
        cfg: Experiment configuration.
        test_x: Model-scale test covariates, shape (n_test, d).
        grid: Evaluation grid.
        rep_id: Repetition index selecting the random substreams.
        executor: Optional pool running the fits in parallel.

    Returns:
        CurveEstimates with runs in a fixed order regardless of completion order.
    """
    kinds = [('ensemble', m) for m in range(cfg.M)]
    if not cfg.alias_base:
        kinds.append(('base', cfg.M))
    kinds += [('bootstrap', b) for b in range(cfg.B)]
    tasks = [RunTask(kind, run_id, rep_id, ds, plan, cfg.net, cfg.master_seed, test_x, grid)
             for kind, run_id in kinds]
    outcomes = list(executor.map(fit_run, tasks)) if executor is not None else [fit_run(t) for t in tasks]

    members = [o for o in outcomes if o.kind == 'ensemble']
    base = members[0].curves if cfg.alias_base else next(o for o in outcomes if o.kind == 'base').curves
    if cfg.ensemble_mode == 'curve':
        center = ensemble_curve_mean([o.curves for o in members])
    else:
        g = ensemble_g([o.net for o in members], ds.standardization)
        center = survival_curves(breslow_fit(ds, g, plan.train_indices), g, test_x, grid, extend=True)
    boot = np.stack([o.curves for o in outcomes if o.kind == 'bootstrap'])
    logger.debug(f"Repetition {rep_id}: {len(outcomes)} training runs on {len(plan.train_indices)} rows")
    return CurveEstimates(grid, base, center, boot, [o.diagnostics for o in outcomes],
                          np.asarray(plan.valid_indices))


def assemble_bands(est: CurveEstimates, methods: Sequence[str],
                   levels: Sequence[float]) -> Dict[BandKey, List[BandResult]]:
    """One band per test point for every (method, level)."""
    bands: Dict[BandKey, List[BandResult]] = {(m, lv): [] for m in methods for lv in levels}
    for i in range(est.n_test):
        reps = est.replicates(i)
        for method in methods:
            for level in levels:
                bands[(method, level)].append(build_band(method, reps, level))
    return bands


def run_repetition(cfg: ExperimentConfig, rep_id: int, test_x_raw: np.ndarray,
                   executor: Optional[Executor] = None) -> RepetitionResult:
    """One simulation repetition: fresh data, fits, and bands at the test points.

    Failures of library code are captured in the result instead of raised.
    """
    try:
        setting = get_setting(cfg.setting)
        ds_raw, _ = generate(setting, cfg.n, derive_rng(cfg.master_seed, STREAM_DATA, rep_id))
        plan = split(ds_raw, 1.0 - cfg.valid_fraction, derive_rng(cfg.master_seed, STREAM_SPLIT, rep_id))
        ds = standardize(ds_raw, range(ds_raw.d), fit_indices=plan.train_indices)
        test_x = ds.standardization.transform_x(np.asarray(test_x_raw, dtype=float))
        est = estimate_curves(ds, plan, cfg, test_x, setting.grid, rep_id, executor)
        bands = assemble_bands(est, cfg.methods, cfg.levels)
    except (SurvBandError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        logger.warning(f"Repetition {rep_id} failed: {e}")
        return RepetitionResult(rep_id, error=f"{type(e).__name__}: {e}")
    logger.info(f"Repetition {rep_id} done ({len(est.diagnostics)} training runs)")
    return RepetitionResult(rep_id, bands, est.diagnostics, est.valid_indices)


def _repetition_job(args: Tuple[ExperimentConfig, int, np.ndarray]) -> RepetitionResult:
    cfg, rep_id, test_x = args
    return run_repetition(cfg, rep_id, test_x)


def coverage(rep_bands: Sequence[Dict[BandKey, List[BandResult]]], truths: Sequence[SurvCurve],
             config: Optional[ExperimentConfig] = None) -> CoverageReport:
    """Coverage rate and mean width per (method, level).

    A band covers test point i when lower <= S_true <= upper at every grid
    point. Coverage averages, over test points, the share of repetitions
    that cover; the mean width averages band_width over repetitions and
    test points. Sums run in repetition order.

    Raises:
        ContractError: No repetitions, test-point count or grid mismatch.
    """
    if not rep_bands:
        raise ContractError("Coverage needs at least one repetition")
    keys = ([(m, lv) for m in config.methods for lv in config.levels] if config is not None
            else list(rep_bands[0].keys()))
    rows = []
    for method, level in keys:
        covered = np.zeros(len(truths))
        width_total = 0.0
        for bands in rep_bands:
            per_point = bands[(method, level)]
            if len(per_point) != len(truths):
                raise ContractError(f"{len(per_point)} bands for {len(truths)} test points")
            for i, (band, truth) in enumerate(zip(per_point, truths)):
                if not band.grid.same_as(truth.grid):
                    raise ContractError("Band and truth curves are on different grids")
                covered[i] += band.covers(truth.values)
                width_total += band_width(band)
        n_reps = len(rep_bands)
        rows.append(CoverageRow(method, level, float(np.mean(covered / n_reps)),
                                width_total / (n_reps * len(truths))))
    return CoverageReport(rows, config, n_repetitions=len(rep_bands))


def run_experiment(cfg: ExperimentConfig, out_path: Optional[str] = None,
                   plots_dir: Optional[str] = None) -> CoverageReport:
    """Run R simulation repetitions and aggregate coverage and width.

    Test covariates come from the TEST_POINTS stream and are shared by all
    repetitions. With workers > 1 repetitions run in a process pool; results
    are aggregated in repetition order either way.

    Args:
        cfg: Experiment configuration (simulation setting).
        out_path: Report CSV to write.
        plots_dir: Directory for summary SVGs.

    Returns:
        CoverageReport over the successful repetitions.

    Raises:
        ExperimentFailedError: More than cfg.max_failure_rate of the repetitions failed.
    """
    setting = get_setting(cfg.setting)
    test_x = draw_covariates(setting, cfg.n_test, derive_rng(cfg.master_seed, STREAM_TEST_POINTS))
    oracle = TruthOracle(setting)
    truths = [truth_curve(oracle, x, setting.grid) for x in test_x]
    logger.info(f"Coverage experiment {cfg.setting_label}: n={cfg.n} M={cfg.M} B={cfg.B} R={cfg.R} "
                f"n_test={cfg.n_test} workers={cfg.workers} seed={cfg.master_seed}")

    jobs = [(cfg, rep_id, test_x) for rep_id in range(cfg.R)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_repetition_job, jobs))
    else:
        results = [_repetition_job(job) for job in jobs]

    ok = [r for r in results if not r.has_error]
    failures = [(r.rep_id, r.error) for r in results if r.has_error]
    report = coverage([r.bands for r in ok], truths, cfg) if ok else CoverageReport([], cfg)
    report.n_repetitions = cfg.R
    report.failures = failures
    report.diagnostics = {r.rep_id: [replace(d, rows_seen=None) for d in r.diagnostics] for r in ok}

    if out_path:
        FileOutput.save_report(report, out_path)
    if plots_dir and ok:
        FileOutput.save_report_plot(report, plots_dir)
        first = ok[0]
        FileOutput.save_band_plot({k: v[0] for k, v in first.bands.items()}, truths[0].values,
                                  plots_dir, f"{setting.label}_point0_rep{first.rep_id}")

    if report.failure_rate > cfg.max_failure_rate:
        logger.error(f"{report.n_failed} of {cfg.R} repetitions failed")
        raise ExperimentFailedError(f"{report.n_failed} of {cfg.R} repetitions failed "
                                    f"(limit {cfg.max_failure_rate:.0%})", report)
    logger.info(f"Coverage experiment finished: {len(ok)} of {cfg.R} repetitions succeeded")
    return report


def real_grid(ds: Dataset, train_rows: Sequence[int], grid_points: int) -> TimeGrid:
    """grid_points equally spaced times on (0, tau], tau = last training event time."""
    rows = np.asarray(train_rows, dtype=int)
    event_times = ds.time[rows][ds.event[rows]]
    if event_times.size == 0 or event_times.max() <= 0:
        raise ContractError("Training rows need a positive event time to define a grid")
    tau = float(event_times.max())
    return TimeGrid(tau * np.arange(1, grid_points + 1) / grid_points)


@dataclass(eq=False)
class PreparedData:
    """A loaded dataset restricted to its fitting rows, standardized and split."""
    ds: Dataset
    plan: SplitPlan
    grid: TimeGrid
    fit_rows: np.ndarray


def prepare_real_dataset(ds_raw: Dataset, fit_rows: Sequence[int], cfg: ExperimentConfig,
                         rep_id: int = 0) -> PreparedData:
    """Split the fitting rows, standardize continuous features on the training part and build the grid."""
    fit_rows = np.asarray(fit_rows, dtype=int)
    sub = ds_raw.subset(fit_rows)
    plan = split(sub, 1.0 - cfg.valid_fraction, derive_rng(cfg.master_seed, STREAM_SPLIT, rep_id))
    ds = standardize(sub, continuous_features(sub), fit_indices=plan.train_indices)
    return PreparedData(ds, plan, real_grid(sub, plan.train_indices, cfg.grid_points), fit_rows)


@dataclass(eq=False)
class DatasetBands:
    """Bands and reference curves for one held-out row of a loaded dataset."""
    row: int
    grid: TimeGrid
    base: np.ndarray
    center: np.ndarray
    km: np.ndarray
    bands: Dict[BandKey, BandResult]


def _pool(cfg: ExperimentConfig) -> Optional[ProcessPoolExecutor]:
    return ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None


def run_dataset_bands(ds_raw: Dataset, cfg: ExperimentConfig, test_rows: Sequence[int]) -> List[DatasetBands]:
    """Bands for selected rows of a loaded dataset, fitted on all other rows.

    Raises:
        ContractError: Test row out of range or no rows left for fitting.
    """
    test_rows = [int(i) for i in test_rows]
    if not test_rows or any(i < 0 or i >= ds_raw.n for i in test_rows):
        raise ContractError(f"Test rows must be within [0, {ds_raw.n - 1}], got {test_rows}")
    fit_rows = np.setdiff1d(np.arange(ds_raw.n), test_rows)
    prep = prepare_real_dataset(ds_raw, fit_rows, cfg)
    test_x = prep.ds.standardization.transform_x(ds_raw.x[test_rows])
    logger.info(f"Fitting {cfg.n_training_runs} runs on {fit_rows.size} rows for {len(test_rows)} test rows")

    pool = _pool(cfg)
    try:
        est = estimate_curves(prep.ds, prep.plan, cfg, test_x, prep.grid, 0, pool)
    finally:
        if pool is not None:
            pool.shutdown()
    train = prep.plan.train_indices
    km, _ = kaplan_meier(prep.ds.time[train], prep.ds.event[train], prep.grid)
    bands = assemble_bands(est, cfg.methods, cfg.levels)
    return [DatasetBands(row, prep.grid, est.base[i], est.center[i], km,
                         {key: per_point[i] for key, per_point in bands.items()})
            for i, row in enumerate(test_rows)]


def run_width_study(ds_raw: Dataset, cfg: ExperimentConfig, folds: int) -> WidthReport:
    """Mean band widths under the K-fold protocol.

    Each fold is held out in turn; up to cfg.n_test of its rows are the test
    points, the remaining folds are split and fitted.
    """
    fold_sets = kfold(ds_raw.n, folds, derive_rng(cfg.master_seed, STREAM_FOLDS))
    keys = [(m, lv) for m in cfg.methods for lv in cfg.levels]
    totals = {key: 0.0 for key in keys}
    n_points = 0
    pool = _pool(cfg)
    try:
        for fold, held_out in enumerate(fold_sets):
            test_rows = held_out
            if held_out.size > cfg.n_test:
                pick = derive_rng(cfg.master_seed, STREAM_TEST_POINTS, fold)
                test_rows = np.sort(pick.choice(held_out, size=cfg.n_test, replace=False))
            fit_rows = np.setdiff1d(np.arange(ds_raw.n), held_out)
            prep = prepare_real_dataset(ds_raw, fit_rows, cfg, rep_id=fold)
            test_x = prep.ds.standardization.transform_x(ds_raw.x[test_rows])
            est = estimate_curves(prep.ds, prep.plan, cfg, test_x, prep.grid, fold, pool)
            for key, per_point in assemble_bands(est, cfg.methods, cfg.levels).items():
                totals[key] += sum(band_width(b) for b in per_point)
            n_points += test_rows.size
            logger.info(f"Fold {fold + 1}/{folds} done ({test_rows.size} test rows)")
    finally:
        if pool is not None:
            pool.shutdown()
    rows = [WidthRow(m, lv, totals[(m, lv)] / n_points, n_points) for m, lv in keys]
    return WidthReport(rows, cfg, folds)
