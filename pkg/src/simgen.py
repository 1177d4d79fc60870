"""
Synthetic right-censored data for the five simulation settings.

Every setting has a hazard of the form h(t|x) = h0(t) exp{g(t, x)} with a
closed-form cumulative hazard, so event times are drawn by inverting H and
the true survival curve is known exactly.

    Setting  h0(t)   g(t, x)                                   covariates
    S1       0.1     b'x                                       U[-1,1]^3
    S2       0.1     b'x + 2/3 q(x)                            U[-1,1]^3
    S3       0.02    a(x) + b(x) t                             U[-1,1]^3
    S4       0.1 t   r(x) - 8.2                                copula [0,2]^5
    S5       0.1 t   r(x)^2 / 20 - 6                           copula [0,2]^5

with q(x) = x1^2 + x3^2 + x1x2 + x1x3 + x2x3, a(x) = b'x + 2/3 q(x) + x3,
b(x) = {0.2(x1 + x2) + 0.5 x1x2}^2 and
r(x) = x1^2 x2^3 + log(x3 + 1) + sqrt(x4x5 + 1) + exp(x5 / 2).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple
import numpy as np
from scipy.stats import norm
from errors import ContractError
from models import Dataset, SurvCurve, TimeGrid

logger = logging.getLogger('SurvBand')

BETA = np.array([0.44, 0.66, 0.88])
SETTING_IDS: Tuple[int, ...] = (1, 2, 3, 4, 5)

# Below this b(x) the Setting 3 hazard is treated as time-constant.
_B_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class SimSetting:
    """One generative law with its censoring scheme and evaluation grid.

    Attributes:
        id: Setting number 1-5.
        beta: Linear coefficients (Settings 1-3), else None.
        h0_spec: Baseline hazard description.
        censor_rate_param: Rate of the exponential censoring law.
        admin_cutoff: Administrative censoring time.
        grid: Evaluation grid for coverage and width.
        covariate_law: Covariate distribution description.
        dim: Covariate dimension.
        expected_censoring: Approximate censoring share of the law.
    """
    id: int
    beta: Optional[np.ndarray]
    h0_spec: str
    censor_rate_param: float
    admin_cutoff: float
    grid: TimeGrid
    covariate_law: str
    dim: int
    expected_censoring: float

    def __post_init__(self):
        if self.grid.points[0] < 0 or self.grid.tau > self.admin_cutoff:
            raise ContractError(f"Grid of setting {self.id} must lie within [0, {self.admin_cutoff}]")

    @property
    def label(self) -> str:
        return f"S{self.id}"

    @property
    def proportional(self) -> bool:
        return self.id != 3


def _build_settings() -> Dict[int, SimSetting]:
    uniform = "U[-1,1] i.i.d."
    copula = "Gaussian copula on [0,2], equicorrelation 0.5"
    early = TimeGrid.regular(0.1, 27.0, 0.1)
    late = TimeGrid.regular(2.0, 34.0, 0.1)
    return {
        1: SimSetting(1, BETA, "h0(t) = 0.1", 1 / 30, 30.0, early, uniform, 3, 0.30),
        2: SimSetting(2, BETA, "h0(t) = 0.1", 1 / 30, 30.0, early, uniform, 3, 0.20),
        3: SimSetting(3, BETA, "h0(t) = 0.02", 1 / 30, 30.0, early, uniform, 3, 0.30),
        4: SimSetting(4, None, "h0(t) = 0.1 t", 1 / 28, 34.0, late, copula, 5, 0.50),
        5: SimSetting(5, None, "h0(t) = 0.1 t", 1 / 45, 34.0, late, copula, 5, 0.60),
    }


_SETTINGS = _build_settings()


def get_setting(setting_id: int) -> SimSetting:
    """Look up a simulation setting by number."""
    try:
        return _SETTINGS[int(setting_id)]
    except (KeyError, ValueError, TypeError):
        raise ContractError(f"Unknown simulation setting {setting_id!r}; expected one of {SETTING_IDS}")


def _as_rows(setting: SimSetting, x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    rows = np.atleast_2d(arr)
    if rows.ndim != 2 or rows.shape[1] != setting.dim:
        raise ContractError(f"Setting {setting.id} expects {setting.dim} covariates, got shape {arr.shape}")
    return rows, single


def _quadratic(x: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    return x1 ** 2 + x3 ** 2 + x1 * x2 + x1 * x3 + x2 * x3


def _s3_terms(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = x @ BETA + 2.0 / 3.0 * _quadratic(x) + x[:, 2]
    b = (0.2 * (x[:, 0] + x[:, 1]) + 0.5 * x[:, 0] * x[:, 1]) ** 2
    return a, b


def _copula_core(x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4, x5 = (x[:, j] for j in range(5))
    return x1 ** 2 * x2 ** 3 + np.log(x3 + 1.0) + np.sqrt(x4 * x5 + 1.0) + np.exp(x5 / 2.0)


def _static_g(setting: SimSetting, x: np.ndarray) -> np.ndarray:
    """g(x) for the proportional-hazards settings."""
    if setting.id == 1:
        return x @ BETA
    if setting.id == 2:
        return x @ BETA + 2.0 / 3.0 * _quadratic(x)
    if setting.id == 4:
        return _copula_core(x) - 8.2
    if setting.id == 5:
        return _copula_core(x) ** 2 / 20.0 - 6.0
    raise ContractError("Setting 3 has a time-varying log relative risk")


def g_eval(setting: SimSetting, t, x):
    """Log relative risk g(t, x) of a setting.

    Args:
        setting: The generative law.
        t: Time (scalar, or one per row of x).
        x: Covariates, shape (d,) or (n, d).

    Returns:
        A float for a single covariate vector, else an array of shape (n,).
    """
    rows, single = _as_rows(setting, x)
    if setting.id == 3:
        a, b = _s3_terms(rows)
        out = a + b * np.asarray(t, dtype=float)
    else:
        out = _static_g(setting, rows) + 0.0 * np.asarray(t, dtype=float)
    return float(out[0]) if single and np.ndim(out) == 1 and out.size == 1 else out


def baseline_cumulative_hazard(setting: SimSetting, t) -> np.ndarray:
    """H0(t) = integral of h0 from 0 to t."""
    t = np.asarray(t, dtype=float)
    if setting.id in (1, 2):
        return 0.1 * t
    if setting.id == 3:
        return 0.02 * t
    return 0.05 * t ** 2


def cumulative_hazard(setting: SimSetting, t, x):
    """Closed-form H(t|x) = integral of h0(s) exp{g(s, x)} over [0, t]."""
    rows, single = _as_rows(setting, x)
    t = np.asarray(t, dtype=float)
    if setting.id == 3:
        a, b = _s3_terms(rows)
        safe_b = np.where(b > _B_EPS, b, 1.0)
        ramp = np.where(b > _B_EPS, np.expm1(b * t) / safe_b, t)
        out = 0.02 * np.exp(a) * ramp
    else:
        out = baseline_cumulative_hazard(setting, t) * np.exp(_static_g(setting, rows))
    return float(out[0]) if single and np.ndim(out) == 1 and out.size == 1 else out


def _invert(setting: SimSetting, rows: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Solve H(t*|x) = target for t*, row-wise."""
    if setting.id in (1, 2):
        return target / (0.1 * np.exp(_static_g(setting, rows)))
    if setting.id == 3:
        a, b = _s3_terms(rows)
        scale = 0.02 * np.exp(a)
        safe_b = np.where(b > _B_EPS, b, 1.0)
        # log1p argument is >= 0 because b >= 0
        return np.where(b > _B_EPS, np.log1p(safe_b * target / scale) / safe_b, target / scale)
    return np.sqrt(target / (0.05 * np.exp(_static_g(setting, rows))))


def sample_event_time(setting: SimSetting, x, u):
    """Event time t* with H(t*|x) = -ln u (inverse-transform sampling).

    Args:
        setting: The generative law.
        x: Covariates, shape (d,) or (n, d).
        u: Uniform draw(s) in (0, 1).

    Raises:
        ContractError: u outside the open unit interval, or bad covariate shape.
    """
    rows, single = _as_rows(setting, x)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u >= 1):
        raise ContractError("Uniform draw must lie in (0, 1)")
    out = _invert(setting, rows, -np.log(u) * np.ones(rows.shape[0]))
    return float(out[0]) if single and u.ndim == 0 else out


def draw_covariates(setting: SimSetting, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n covariate vectors from the setting's law."""
    if setting.id <= 3:
        return rng.uniform(-1.0, 1.0, size=(n, setting.dim))
    corr = np.full((setting.dim, setting.dim), 0.5)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)
    z = rng.standard_normal((n, setting.dim)) @ chol.T
    return 2.0 * norm.cdf(z)


@dataclass(frozen=True, eq=False)
class TruthOracle:
    """Exact hazard quantities of a setting."""
    setting: SimSetting

    def g(self, t, x):
        return g_eval(self.setting, t, x)

    def H0(self, t):
        return baseline_cumulative_hazard(self.setting, t)

    def cumulative_hazard(self, t, x):
        return cumulative_hazard(self.setting, t, x)

    def survival(self, t, x):
        return np.exp(-np.asarray(cumulative_hazard(self.setting, t, x)))


def generate(setting: SimSetting, n: int, rng: np.random.Generator, censoring: bool = True,
             x_fixed=None) -> Tuple[Dataset, TruthOracle]:
    """Generate n right-censored records from a setting.

    Each record draws x from the covariate law (or uses x_fixed), an event
    time by inversion, and a censoring time c ~ Exp(rate) capped at the
    administrative cutoff; it records (x, min(t*, c), 1{t* <= c}).

    Args:
        setting: The generative law.
        n: Number of records (>= 1).
        rng: Random stream; draws are taken in the order x, t*, c.
        censoring: If False, every event time is observed.
        x_fixed: Optional covariate vector shared by all records.

    Returns:
        (Dataset, TruthOracle); the dataset is unstandardized.
    """
    if n < 1:
        raise ContractError(f"Sample size must be >= 1, got {n}")
    if x_fixed is None:
        x = draw_covariates(setting, n, rng)
    else:
        x = np.tile(_as_rows(setting, x_fixed)[0], (n, 1))
    event_time = _invert(setting, x, rng.standard_exponential(n))
    if censoring:
        censor_time = np.minimum(rng.exponential(1.0 / setting.censor_rate_param, size=n), setting.admin_cutoff)
        time = np.minimum(event_time, censor_time)
        event = event_time <= censor_time
    else:
        time, event = event_time, np.ones(n, dtype=bool)
    ds = Dataset(x, time, event, [f"x{j + 1}" for j in range(setting.dim)])
    logger.debug(f"Generated {n} records for {setting.label}: censoring {ds.censoring_fraction:.3f}")
    return ds, TruthOracle(setting)


def truth_curve(oracle: TruthOracle, x, grid: TimeGrid) -> SurvCurve:
    """True survival S(t|x) on the grid."""
    setting = oracle.setting
    if grid.tau > setting.admin_cutoff:
        raise ContractError(f"Grid extends past the {setting.label} range (cutoff {setting.admin_cutoff})")
    rows, _ = _as_rows(setting, x)
    if rows.shape[0] != 1:
        raise ContractError("truth_curve takes a single covariate vector")
    tiled = np.repeat(rows, len(grid), axis=0)
    return SurvCurve(grid, np.exp(-cumulative_hazard(setting, grid.points, tiled)))
