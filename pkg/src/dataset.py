"""
Dataset preparation: standardization, train/validation splitting,
bootstrap resampling of the training rows and K-fold assignment.
"""
from __future__ import annotations
import logging
from typing import Iterable, List, Optional, Sequence, Union
import numpy as np
from errors import ContractError, DegenerateFeatureError
from models import Dataset, SplitPlan, Standardization

logger = logging.getLogger('SurvBand')

# sd at or below this counts as zero variance
_ZERO_SD = 1e-12


def continuous_features(ds: Dataset) -> List[int]:
    """Indices of features with more than two distinct values.

    Binary columns are treated as pre-encoded categoricals and left as they are.
    """
    return [j for j in range(ds.d) if np.unique(ds.x[:, j]).size > 2]


def standardize(ds: Dataset, continuous_features: Iterable[int],
                fit_indices: Optional[Sequence[int]] = None) -> Dataset:
    """Standardize the listed features and record time statistics.

    Statistics use the population variance (divide by n) and are computed
    on the rows in fit_indices (all rows if None), so that the training
    portion alone defines the transformation. Listed features are rewritten
    for every row; other features are untouched. Time keeps its raw scale in
    the dataset; its (mean, sd) is stored for the network input.

    Args:
        ds: Dataset to transform.
        continuous_features: Feature indices to standardize.
        fit_indices: Rows whose statistics define the transform.

    Returns:
        A new Dataset carrying its Standardization.

    Raises:
        ContractError: Feature index out of range or empty fit rows.
        DegenerateFeatureError: A listed feature, or time, has zero variance.
    """
    idx = sorted(set(int(j) for j in continuous_features))
    if any(j < 0 or j >= ds.d for j in idx):
        raise ContractError(f"Feature indices {idx} out of range for d={ds.d}")
    rows = np.arange(ds.n) if fit_indices is None else np.asarray(fit_indices, dtype=int)
    if rows.size == 0:
        raise ContractError("Standardization needs at least one fitting row")

    fit_x = ds.x[rows][:, idx]
    means = fit_x.mean(axis=0)
    sds = fit_x.std(axis=0)
    degenerate = [ds.feature_names[j] for j, sd in zip(idx, sds) if sd <= _ZERO_SD]
    if degenerate:
        logger.error(f"Zero-variance features: {degenerate}")
        raise DegenerateFeatureError(f"Zero-variance feature(s): {', '.join(degenerate)}")

    fit_t = ds.time[rows]
    time_mean, time_sd = float(fit_t.mean()), float(fit_t.std())
    if time_sd <= _ZERO_SD:
        raise DegenerateFeatureError("Observed times have zero variance")

    stats = Standardization(tuple(idx), means, sds, time_mean, time_sd)
    logger.debug(f"Standardized {len(idx)} of {ds.d} features on {rows.size} rows; "
                 f"time mean={time_mean:.4f} sd={time_sd:.4f}")
    return Dataset(stats.transform_x(ds.x), ds.time.copy(), ds.event.copy(),
                   list(ds.feature_names), stats)


def split(ds: Union[Dataset, int], fraction: float, rng: np.random.Generator) -> SplitPlan:
    """Uniformly random train/validation partition without replacement.

    Args:
        ds: Dataset, or its number of records.
        fraction: Training share in (0, 1).
        rng: Random stream; equal seeds give equal plans.

    Raises:
        ContractError: fraction out of range or either side would be empty.
    """
    n = ds if isinstance(ds, int) else ds.n
    if not 0.0 < fraction < 1.0:
        raise ContractError(f"Split fraction must be in (0, 1), got {fraction}")
    if n * fraction < 1 or n * (1.0 - fraction) < 1:
        raise ContractError(f"Split of n={n} with fraction {fraction} leaves an empty side")
    n_train = min(max(int(round(n * fraction)), 1), n - 1)
    perm = rng.permutation(n)
    return SplitPlan(np.sort(perm[:n_train]), np.sort(perm[n_train:]), float(fraction))


def bootstrap_resample(train_indices: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Draw |train| indices i.i.d. uniformly with replacement from train only.

    Raises:
        ContractError: Empty training set.
    """
    train = np.asarray(train_indices, dtype=int)
    if train.size == 0:
        raise ContractError("Cannot bootstrap an empty training set")
    return train[rng.integers(0, train.size, size=train.size)]


def kfold(n: int, folds: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Random assignment of 0..n-1 to `folds` disjoint, near-equal test folds."""
    if not 2 <= folds <= n:
        raise ContractError(f"Fold count must be in [2, {n}], got {folds}")
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]
