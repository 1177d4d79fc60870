"""
Data models for survband.
Defines survival records and datasets, time grids and survival curves,
network configuration and training reports, bands and experiment reports.
"""
from __future__ import annotations
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple
import numpy as np
from errors import ConfigurationError, ContractError, ValidationError

METHODS: Tuple[str, ...] = ('naive', 'ks', 'prop_ks')
ENSEMBLE_MODES: Tuple[str, ...] = ('g', 'curve')

# Tolerance for monotonicity and [0,1] checks on computed curves.
CURVE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SurvRecord:
    """One right-censored observation.

    Attributes:
        x: Covariate vector of the dataset-wide dimension d.
        time: Observed time min(t*, c), nonnegative.
        event: True iff the event was observed (not censored).
    """
    x: np.ndarray
    time: float
    event: bool

    def __post_init__(self):
        if not np.isfinite(self.time) or self.time < 0:
            raise ValidationError(f"Observed time must be finite and >= 0, got {self.time}")


@dataclass(frozen=True, eq=False)
class Standardization:
    """Training statistics used to standardize covariates and time.

    Features not listed in feature_indices (pre-encoded categoricals) are left
    untouched. Time is never overwritten in the dataset; the time statistics
    are applied when time is fed to the network.
    """
    feature_indices: Tuple[int, ...]
    feature_means: np.ndarray
    feature_sds: np.ndarray
    time_mean: float
    time_sd: float

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        """Apply the stored feature statistics to raw covariates (1-D or 2-D)."""
        out = np.array(x, dtype=float, copy=True)
        if self.feature_indices:
            idx = list(self.feature_indices)
            out[..., idx] = (out[..., idx] - self.feature_means) / self.feature_sds
        return out

    def transform_time(self, t) -> np.ndarray:
        """Standardize raw times with the stored training (mean, sd)."""
        return (np.asarray(t, dtype=float) - self.time_mean) / self.time_sd

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feature_indices': list(self.feature_indices),
            'feature_means': self.feature_means.tolist(),
            'feature_sds': self.feature_sds.tolist(),
            'time_mean': self.time_mean,
            'time_sd': self.time_sd,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Standardization':
        return cls(
            feature_indices=tuple(int(i) for i in data['feature_indices']),
            feature_means=np.asarray(data['feature_means'], dtype=float),
            feature_sds=np.asarray(data['feature_sds'], dtype=float),
            time_mean=float(data['time_mean']),
            time_sd=float(data['time_sd']),
        )


@dataclass(eq=False)
class Dataset:
    """Right-censored survival data in column form.

    Attributes:
        x: Covariates, shape (n, d).
        time: Observed times, shape (n,), raw scale, nonnegative.
        event: Event indicators, shape (n,), bool.
        feature_names: Names of the d covariate columns.
        standardization: Statistics applied to x (and to time at network input), if any.
    """
    x: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: List[str]
    standardization: Optional[Standardization] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=bool)
        if self.x.ndim != 2:
            raise ValidationError(f"Covariates must be a 2-D array, got shape {self.x.shape}")
        n, d = self.x.shape
        if self.time.shape != (n,) or self.event.shape != (n,):
            raise ValidationError("time and event must have one entry per record")
        if len(self.feature_names) != d:
            raise ValidationError(f"Expected {d} feature names, got {len(self.feature_names)}")
        if not np.all(np.isfinite(self.time)) or np.any(self.time < 0):
            raise ValidationError("Observed times must be finite and >= 0")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    @property
    def censoring_fraction(self) -> float:
        return 1.0 - self.n_events / self.n if self.n else 0.0

    @property
    def scaled_time(self) -> np.ndarray:
        """Time as fed to the network: standardized if statistics are stored."""
        if self.standardization is None:
            return self.time.copy()
        return self.standardization.transform_time(self.time)

    @property
    def records(self) -> List[SurvRecord]:
        return [SurvRecord(x=self.x[i].copy(), time=float(self.time[i]), event=bool(self.event[i]))
                for i in range(self.n)]

    def require_events(self) -> None:
        """Raise ValidationError if no record has an observed event."""
        if self.n_events == 0:
            raise ValidationError("Dataset has no observed events; nothing to estimate")

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        """Rows at the given indices (repeats allowed), keeping the standardization."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.x[idx], self.time[idx], self.event[idx],
                       list(self.feature_names), self.standardization)

    @classmethod
    def from_records(cls, records: Sequence[SurvRecord], feature_names: Optional[List[str]] = None) -> 'Dataset':
        """Build a Dataset from SurvRecords, checking they share one dimension."""
        if not records:
            raise ValidationError("Cannot build a dataset from zero records")
        dims = {np.asarray(r.x).shape for r in records}
        if len(dims) != 1:
            raise ValidationError(f"Records have differing covariate shapes: {sorted(dims)}")
        x = np.vstack([np.asarray(r.x, dtype=float) for r in records])
        names = feature_names or [f"x{j + 1}" for j in range(x.shape[1])]
        return cls(x, np.array([r.time for r in records]), np.array([r.event for r in records]), names)


@dataclass(frozen=True, eq=False)
class ColumnSchema:
    """Column mapping for delimited survival files."""
    time_col: str
    event_col: str
    features: Tuple[str, ...]


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Train/validation partition of the indices 0..n-1."""
    train_indices: np.ndarray
    valid_indices: np.ndarray
    fraction: float

    def __post_init__(self):
        train = np.asarray(self.train_indices)
        valid = np.asarray(self.valid_indices)
        if np.intersect1d(train, valid).size:
            raise ContractError("Train and validation indices overlap")
        n = train.size + valid.size
        if np.unique(np.concatenate([train, valid])).size != n or (n and np.max(np.concatenate([train, valid])) != n - 1):
            raise ContractError("Split must cover every index exactly once")

    @property
    def n(self) -> int:
        return len(self.train_indices) + len(self.valid_indices)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing evaluation times in (0, tau]."""
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, 'points', pts)
        if pts.ndim != 1 or pts.size == 0:
            raise ContractError("Time grid must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(pts)) or pts[0] <= 0:
            raise ContractError("Time grid points must be finite and > 0")
        if np.any(np.diff(pts) <= 0):
            raise ContractError("Time grid must be strictly increasing")

    @property
    def tau(self) -> float:
        return float(self.points[-1])

    def __len__(self) -> int:
        return self.points.size

    def same_as(self, other: 'TimeGrid') -> bool:
        return self is other or np.array_equal(self.points, other.points)

    @classmethod
    def regular(cls, start: float, stop: float, step: float) -> 'TimeGrid':
        """Grid start, start+step, ..., stop (inclusive), rounded against drift."""
        count = int(round((stop - start) / step)) + 1
        return cls(np.round(start + step * np.arange(count), 10))


@dataclass(frozen=True, eq=False)
class SurvCurve:
    """A survival function sampled on a time grid."""
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, 'values', vals)
        if vals.shape != (len(self.grid),):
            raise ContractError(f"Curve has {vals.size} values for a grid of {len(self.grid)} points")
        if np.any(vals < -CURVE_TOL) or np.any(vals > 1 + CURVE_TOL):
            raise ContractError("Survival values must lie in [0, 1]")
        if np.any(np.diff(vals) > CURVE_TOL):
            raise ContractError("Survival values must be non-increasing")


@dataclass(frozen=True)
class NetConfig:
    """Architecture and optimisation settings of one hazard network run.

    Attributes:
        hidden_layers: Number of hidden blocks (>= 1).
        layer_width: Units per hidden block.
        dropout_rate: Dropout probability in [0, 1).
        learning_rate: Adam step size.
        batch_size: Events per minibatch.
        max_epochs: Epoch cap; early stopping usually ends training sooner.
        patience: Epochs without validation improvement tolerated before stopping.
        n_controls: Controls sampled from each event's risk set.
        seed: Seed used when train() is called without a generator.
        batch_norm: Batch normalization between hidden blocks.
    """
    hidden_layers: int = 2
    layer_width: int = 32
    dropout_rate: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 1500
    patience: int = 15
    n_controls: int = 8
    seed: int = 0
    batch_norm: bool = True

    def __post_init__(self):
        for name in ('hidden_layers', 'layer_width', 'batch_size', 'max_epochs', 'patience', 'n_controls'):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"NetConfig.{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"NetConfig.dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"NetConfig.learning_rate must be > 0, got {self.learning_rate}")

    def with_overrides(self, **overrides) -> 'NetConfig':
        """Copy with the given fields replaced; None values are ignored."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetConfig':
        """Create a NetConfig from a dictionary of (possibly string) values.

        Raises:
            ConfigurationError: Unknown key or value of the wrong type.
        """
        types = {f.name: f.type for f in fields(cls)}
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key not in types:
                raise ConfigurationError(f"Unknown NetConfig key '{key}'")
            kind = types[key]
            try:
                if kind == 'bool':
                    kwargs[key] = value if isinstance(value, bool) else str(value).strip().lower() in ('1', 'true', 'yes')
                elif kind == 'int':
                    kwargs[key] = int(value)
                else:
                    kwargs[key] = float(value)
            except (TypeError, ValueError):
                raise ConfigurationError(f"Invalid value for NetConfig.{key}: {value!r}")
        return cls(**kwargs)


@dataclass(eq=False)
class TrainReport:
    """Outcome of one training run.

    Attributes:
        epochs_run: Epochs executed.
        best_epoch: 1-based epoch with the lowest validation loss.
        train_loss_history: Mean training loss per epoch.
        valid_loss_history: Validation loss per epoch.
        stopped_early: True if patience ran out before max_epochs.
        initial_valid_loss: Validation loss of the freshly initialised network.
        empty_control_events: Training events whose risk set held nobody but themselves.
        rows_seen: Dataset row indices that entered a gradient computation.
        normalization: 'batch' or 'none'.
    """
    epochs_run: int
    best_epoch: int
    train_loss_history: List[float]
    valid_loss_history: List[float]
    stopped_early: bool
    initial_valid_loss: float
    empty_control_events: int = 0
    rows_seen: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    normalization: str = 'batch'

    @property
    def best_valid_loss(self) -> float:
        return self.valid_loss_history[self.best_epoch - 1]

    def same_history(self, other: 'TrainReport') -> bool:
        return (self.epochs_run == other.epochs_run and self.best_epoch == other.best_epoch
                and self.train_loss_history == other.train_loss_history
                and self.valid_loss_history == other.valid_loss_history
                and self.stopped_early == other.stopped_early)


@dataclass(frozen=True, eq=False)
class BreslowBaseline:
    """Breslow estimate of the cumulative baseline hazard as jumps at event times."""
    event_times: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.event_times, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        object.__setattr__(self, 'event_times', times)
        object.__setattr__(self, 'increments', inc)
        if times.shape != inc.shape or times.ndim != 1 or times.size == 0:
            raise ContractError("Breslow baseline needs one increment per event time")
        if np.any(np.diff(times) <= 0):
            raise ContractError("Breslow event times must be strictly increasing")
        if np.any(inc < 0):
            raise ContractError("Breslow increments must be nonnegative")

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    @property
    def last_event_time(self) -> float:
        return float(self.event_times[-1])


@dataclass(frozen=True, eq=False)
class BootstrapReplicates:
    """B bootstrap curves plus the ensemble center and base curve on one grid.

    Attributes:
        curves: Shape (B, K).
        center: Ensemble curve, shape (K,).
        base: Single-run curve the band is built around, shape (K,).
        grid: The common grid.
    """
    curves: np.ndarray
    center: np.ndarray
    base: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        curves = np.atleast_2d(np.asarray(self.curves, dtype=float))
        object.__setattr__(self, 'curves', curves)
        object.__setattr__(self, 'center', np.asarray(self.center, dtype=float))
        object.__setattr__(self, 'base', np.asarray(self.base, dtype=float))
        k = len(self.grid)
        if curves.shape[0] < 1:
            raise ContractError("At least one bootstrap curve is required")
        if curves.shape[1] != k or self.center.shape != (k,) or self.base.shape != (k,):
            raise ContractError("Bootstrap, center and base curves must share the grid")

    @property
    def B(self) -> int:
        return self.curves.shape[0]

    @classmethod
    def from_curves(cls, curves: Sequence[SurvCurve], center: SurvCurve, base: SurvCurve) -> 'BootstrapReplicates':
        grid = base.grid
        for curve in list(curves) + [center]:
            if not curve.grid.same_as(grid):
                raise ContractError("All replicate curves must share the identical grid")
        return cls(np.vstack([c.values for c in curves]), center.values, base.values, grid)


@dataclass(frozen=True, eq=False)
class BandResult:
    """A simultaneous confidence band around the base curve.

    Bounds are stored as arrays on the grid. The proportional band is not
    monotone in general, so bounds are not SurvCurves.
    """
    grid: TimeGrid
    lower: np.ndarray
    upper: np.ndarray
    base: np.ndarray
    method: str
    level: float
    critical: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"Unknown band method '{self.method}'")
        if not 0.0 < self.level < 1.0:
            raise ContractError(f"Band level must be in (0, 1), got {self.level}")
        lower, upper, base = (np.asarray(a, dtype=float) for a in (self.lower, self.upper, self.base))
        if np.any(lower < 0) or np.any(upper > 1) or np.any(lower > upper):
            raise ContractError("Band bounds must satisfy 0 <= lower <= upper <= 1")
        if np.any(base < lower - CURVE_TOL) or np.any(base > upper + CURVE_TOL):
            raise ContractError("Base curve must lie inside its band")

    def covers(self, truth: np.ndarray) -> bool:
        """True iff lower <= truth <= upper at every grid point (closed band)."""
        truth = np.asarray(truth, dtype=float)
        return bool(np.all(self.lower <= truth) and np.all(truth <= self.upper))


@dataclass(frozen=True)
class PointwiseCI:
    """Percentile interval at a single point."""
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ContractError(f"Interval lower {self.lower} exceeds upper {self.upper}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a coverage or real-data band experiment.

    Attributes:
        setting: Simulation setting id (1-5); ignored when data_path is set.
        data_path: Delimited dataset for the real-data commands.
        n: Training + validation sample size per repetition.
        net: Network configuration shared by every run.
        M: Ensemble size.
        B: Bootstrap replicates.
        R: Repetitions.
        n_test: Test points (per fold for the width study).
        levels: Nominal levels, each in (0, 1).
        methods: Subset of METHODS.
        master_seed: Root of every random substream.
        workers: Process pool size (1 runs serially).
        valid_fraction: Validation share of the split.
        ensemble_mode: 'g' (Breslow on the mean g) or 'curve' (mean of member curves).
        alias_base: Use ensemble member 0 as the base run instead of an extra fit.
        grid_points: Grid size on (0, tau] for real data.
        max_failure_rate: Share of failed repetitions tolerated.
    """
    setting: int = 1
    data_path: Optional[str] = None
    n: int = 1000
    net: NetConfig = field(default_factory=NetConfig)
    M: int = 20
    B: int = 100
    R: int = 50
    n_test: int = 50
    levels: Tuple[float, ...] = (0.90, 0.95)
    methods: Tuple[str, ...] = METHODS
    master_seed: int = 42
    workers: int = 1
    valid_fraction: float = 0.2
    ensemble_mode: str = 'g'
    alias_base: bool = True
    grid_points: int = 100
    max_failure_rate: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, 'levels', tuple(float(v) for v in self.levels))
        object.__setattr__(self, 'methods', tuple(self.methods))
        for name in ('n', 'M', 'B', 'R', 'n_test', 'workers', 'grid_points'):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.levels or any(not 0.0 < lv < 1.0 for lv in self.levels):
            raise ConfigurationError(f"Levels must lie in (0, 1), got {self.levels}")
        unknown = [m for m in self.methods if m not in METHODS]
        if not self.methods or unknown:
            raise ConfigurationError(f"Methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if self.ensemble_mode not in ENSEMBLE_MODES:
            raise ConfigurationError(f"ensemble_mode must be one of {ENSEMBLE_MODES}")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ConfigurationError("valid_fraction must be in (0, 1)")
        if self.data_path is None and self.setting not in (1, 2, 3, 4, 5):
            raise ConfigurationError(f"Unknown simulation setting {self.setting}")

    @property
    def n_training_runs(self) -> int:
        """Training runs per repetition: M + B, plus one if the base run is not aliased."""
        return self.M + self.B + (0 if self.alias_base else 1)

    @property
    def setting_label(self) -> str:
        if self.data_path is not None:
            return str(self.data_path)
        return f"S{self.setting}"

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """Copy with the given fields replaced; None values are ignored."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_dict(cls, data: Dict[str, Any], net: Optional[NetConfig] = None) -> 'ExperimentConfig':
        """Create an ExperimentConfig from Config.json-style data.

        A nested 'net' mapping is parsed with NetConfig.from_dict unless an
        explicit NetConfig is given.
        """
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known and k != 'net'}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown experiment keys: {sorted(unknown)}")
        if net is None and isinstance(data.get('net'), dict):
            net = NetConfig.from_dict(data['net'])
        for key in ('levels', 'methods'):
            if isinstance(kwargs.get(key), str):
                kwargs[key] = [item.strip() for item in kwargs[key].split(',') if item.strip()]
        if 'levels' in kwargs:
            kwargs['levels'] = tuple(float(v) for v in kwargs['levels'])
        return cls(net=net or NetConfig(), **kwargs)


@dataclass(eq=False)
class RunDiagnostics:
    """Per-run training summary kept with a repetition."""
    kind: str
    run_id: int
    epochs_run: int
    best_epoch: int
    best_valid_loss: float
    stopped_early: bool
    rows_seen: Optional[np.ndarray] = None

    @classmethod
    def from_report(cls, kind: str, run_id: int, report: TrainReport) -> 'RunDiagnostics':
        return cls(kind=kind, run_id=run_id, epochs_run=report.epochs_run,
                   best_epoch=report.best_epoch, best_valid_loss=report.best_valid_loss,
                   stopped_early=report.stopped_early, rows_seen=report.rows_seen)


BandKey = Tuple[str, float]


@dataclass(eq=False)
class RepetitionResult:
    """Bands of one repetition, one BandResult per test point for every (method, level).

    Attributes:
        rep_id: Repetition index.
        bands: (method, level) -> list of BandResult indexed by test point.
        diagnostics: One entry per training run.
        valid_indices: Validation rows of this repetition's split.
        error: Failure message, None if the repetition succeeded.
    """
    rep_id: int
    bands: Dict[BandKey, List[BandResult]] = field(default_factory=dict)
    diagnostics: List[RunDiagnostics] = field(default_factory=list)
    valid_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    error: Optional[str] = None

    @property
    def has_error(self) -> bool:
        """Check if this repetition failed."""
        return self.error is not None

    @property
    def n_training_runs(self) -> int:
        return len(self.diagnostics)


@dataclass(frozen=True)
class CoverageRow:
    method: str
    level: float
    coverage: float
    mean_width: float


@dataclass(eq=False)
class CoverageReport:
    """Coverage rates and mean widths per (method, level).

    Attributes:
        rows: One row per (method, level), in configuration order.
        config: Experiment that produced the report, if any.
        n_repetitions: Repetitions attempted.
        failures: (rep_id, message) of failed repetitions.
        diagnostics: rep_id -> run diagnostics (row instrumentation dropped).
    """
    rows: List[CoverageRow]
    config: Optional[ExperimentConfig] = None
    n_repetitions: int = 0
    failures: List[Tuple[int, str]] = field(default_factory=list)
    diagnostics: Dict[int, List[RunDiagnostics]] = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    @property
    def failure_rate(self) -> float:
        return self.n_failed / self.n_repetitions if self.n_repetitions else 0.0

    def row(self, method: str, level: float) -> CoverageRow:
        for r in self.rows:
            if r.method == method and abs(r.level - level) < 1e-12:
                return r
        raise KeyError((method, level))


@dataclass(frozen=True)
class WidthRow:
    method: str
    level: float
    mean_width: float
    n_points: int


@dataclass(eq=False)
class WidthReport:
    """Mean band widths of the real-data fold protocol (no truth available)."""
    rows: List[WidthRow]
    config: Optional[ExperimentConfig] = None
    folds: int = 0

    def row(self, method: str, level: float) -> WidthRow:
        for r in self.rows:
            if r.method == method and abs(r.level - level) < 1e-12:
                return r
        raise KeyError((method, level))
