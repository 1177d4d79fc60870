"""
Point-wise percentile intervals and simultaneous confidence bands.

Three bands are built around the base curve from B bootstrap curves:

    naive    deviations measured from the base curve itself
    ks       sup-norm deviations from the ensemble center
    prop_ks  sup of center deviations scaled by sqrt(S(1 - S)), S truncated to [0.01, 0.99]

All sups run over the common time grid only.
"""
from __future__ import annotations
import logging
from typing import List, Optional
import numpy as np
from errors import ContractError
from models import METHODS, BandResult, BootstrapReplicates, PointwiseCI

logger = logging.getLogger('SurvBand')

WEIGHT_FLOOR = 0.01
WEIGHT_CEIL = 0.99
# float slack for p * n landing just above an integer
_QUANTILE_SLACK = 1e-9


def quantile(values, p: float) -> float:
    """Lower empirical quantile: the smallest value whose empirical CDF is >= p.

    Raises:
        ContractError: Empty input or p outside [0, 1].
    """
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise ContractError("Quantile of an empty sequence")
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"Quantile probability must be in [0, 1], got {p}")
    k = int(np.ceil(p * arr.size - _QUANTILE_SLACK)) - 1
    return float(arr[min(max(k, 0), arr.size - 1)])


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must be in (0, 1), got {alpha}")
    return round(1.0 - alpha, 12)


def pointwise_ci(estimates, center: float, base: float, alpha: float, beta: float) -> PointwiseCI:
    """Percentile interval [base - v_(1-beta), base - v_alpha] at level 1 - alpha - beta.

    The v quantiles come from the bootstrap deviations estimates - center.
    """
    if alpha < 0 or beta < 0 or alpha + beta >= 1:
        raise ContractError(f"Need alpha, beta >= 0 and alpha + beta < 1, got {alpha}, {beta}")
    deviations = np.asarray(estimates, dtype=float) - center
    return PointwiseCI(lower=base - quantile(deviations, 1.0 - beta),
                       upper=base - quantile(deviations, alpha),
                       level=round(1.0 - alpha - beta, 12))


def pointwise_band(reps: BootstrapReplicates, alpha: float, beta: Optional[float] = None) -> List[PointwiseCI]:
    """pointwise_ci at every grid point, clipped to [0, 1]; beta defaults to alpha."""
    beta = alpha if beta is None else beta
    out = []
    for k in range(len(reps.grid)):
        ci = pointwise_ci(reps.curves[:, k], reps.center[k], reps.base[k], alpha, beta)
        out.append(PointwiseCI(float(np.clip(ci.lower, 0.0, 1.0)), float(np.clip(ci.upper, 0.0, 1.0)), ci.level))
    return out


def bootstrap_variance(estimates, center) -> np.ndarray:
    """B^-1 sum_b (estimate_b - center)^2 along the first axis.

    With the ensemble as center this removes the optimizer-noise term that
    the naive choice center = base leaves in.
    """
    est = np.asarray(estimates, dtype=float)
    if est.shape[0] == 0:
        raise ContractError("Variance of zero bootstrap estimates")
    return np.mean((est - np.asarray(center, dtype=float)) ** 2, axis=0)


def survival_weight(values) -> np.ndarray:
    """sqrt(S(1 - S)) with S truncated to [0.01, 0.99]."""
    s = np.clip(np.asarray(values, dtype=float), WEIGHT_FLOOR, WEIGHT_CEIL)
    return np.sqrt(s * (1.0 - s))


def _constant_band(reps: BootstrapReplicates, reference: np.ndarray, alpha: float, method: str) -> BandResult:
    level = _check_alpha(alpha)
    deviations = np.max(np.abs(reps.curves - reference), axis=1)
    critical = quantile(deviations, 1.0 - alpha)
    lower = np.clip(reps.base - critical, 0.0, 1.0)
    upper = np.clip(reps.base + critical, 0.0, 1.0)
    return BandResult(reps.grid, lower, upper, reps.base, method, level, critical)


def ks_band(reps: BootstrapReplicates, alpha: float) -> BandResult:
    """KS band: base -/+ the (1 - alpha) quantile of sup_t |S_b - S_center|."""
    return _constant_band(reps, reps.center, alpha, 'ks')


def naive_band(reps: BootstrapReplicates, alpha: float) -> BandResult:
    """Naive band: as ks_band but with deviations measured from the base curve."""
    return _constant_band(reps, reps.base, alpha, 'naive')


def prop_ks_band(reps: BootstrapReplicates, alpha: float) -> BandResult:
    """Proportional KS band.

    Each replicate's deviation from the center is scaled by the weight of
    that replicate's own curve; the final half-width at t is the critical
    value times the weight of the base curve at t.
    """
    level = _check_alpha(alpha)
    scaled = np.abs(reps.curves - reps.center) / survival_weight(reps.curves)
    critical = quantile(np.max(scaled, axis=1), 1.0 - alpha)
    half = survival_weight(reps.base) * critical
    lower = np.clip(reps.base - half, 0.0, 1.0)
    upper = np.clip(reps.base + half, 0.0, 1.0)
    return BandResult(reps.grid, lower, upper, reps.base, 'prop_ks', level, critical)


_BUILDERS = {'naive': naive_band, 'ks': ks_band, 'prop_ks': prop_ks_band}


def build_band(method: str, reps: BootstrapReplicates, level: float) -> BandResult:
    """Band of the given method at nominal level 1 - alpha."""
    if method not in METHODS:
        raise ContractError(f"Unknown band method '{method}'; expected one of {METHODS}")
    return _BUILDERS[method](reps, round(1.0 - level, 12))


def band_width(band: BandResult) -> float:
    """Half the grid average of upper - lower."""
    return float(0.5 * np.mean(band.upper - band.lower))
