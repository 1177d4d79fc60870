"""
Survival estimation on top of a fitted relative-risk function.

Breslow baseline hazard, conditional survival curves on a time grid, the
M-run ensemble of g, and the Kaplan-Meier / Nelson-Aalen references.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union
import numpy as np
from errors import ContractError
from models import BreslowBaseline, Dataset, Standardization, SurvCurve, TimeGrid

logger = logging.getLogger('SurvBand')

# g is clamped here before exponentiation
G_CLIP = 30.0
# rows evaluated per network call when building g(t_i, x_j) tables
CHUNK_ROWS = 200_000

Member = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class GFunction:
    """Log relative risk g(t, x) on raw time and model-scale covariates.

    Members are callables (standardized time, covariate rows) -> values,
    usually HazardNets in inference mode. The function value is the
    arithmetic mean of the member values.

    Attributes:
        members: One or more member evaluators.
        standardization: Time statistics applied before calling members.
        provenance: 'single' or 'ensemble(M)'.
    """
    members: Tuple[Member, ...]
    standardization: Optional[Standardization] = None
    provenance: str = 'single'

    @classmethod
    def single(cls, net) -> 'GFunction':
        return cls((net,), getattr(net, 'standardization', None), 'single')

    @property
    def M(self) -> int:
        return len(self.members)

    def _scaled(self, t: np.ndarray) -> np.ndarray:
        if self.standardization is None:
            return t
        return self.standardization.transform_time(t)

    def evaluate_rows(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """g at paired (t[k], x[k]) rows."""
        ts = self._scaled(np.asarray(t, dtype=float))
        total = np.zeros(x.shape[0])
        for member in self.members:
            total += np.asarray(member(ts, x), dtype=float)
        return total / len(self.members)

    def __call__(self, t, x):
        rows = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (rows.shape[0],))
        out = self.evaluate_rows(t, rows)
        return float(out[0]) if np.ndim(x) == 1 and out.size == 1 else out

    def pairwise(self, times, x) -> np.ndarray:
        """Table of g(times[k], x[j]) with shape (len(times), len(x))."""
        times = np.asarray(times, dtype=float)
        rows = np.atleast_2d(np.asarray(x, dtype=float))
        n = rows.shape[0]
        out = np.empty((times.size, n))
        step = max(1, CHUNK_ROWS // max(n, 1))
        for begin in range(0, times.size, step):
            chunk = times[begin:begin + step]
            values = self.evaluate_rows(np.repeat(chunk, n), np.tile(rows, (chunk.size, 1)))
            out[begin:begin + chunk.size] = values.reshape(chunk.size, n)
        return out


def _same_standardization(a: Optional[Standardization], b: Optional[Standardization]) -> bool:
    if a is None or b is None:
        return a is b
    return a.to_dict() == b.to_dict()


def ensemble_g(members: Sequence, standardization: Optional[Standardization] = None) -> GFunction:
    """Mean of M member functions, g^M(t, x) = M^-1 sum_m g_m(t, x).

    Raises:
        ContractError: No members, or members with differing inputs.
    """
    if not members:
        raise ContractError("An ensemble needs at least one member")
    dims = {m.input_dim for m in members if hasattr(m, 'input_dim')}
    if len(dims) > 1:
        raise ContractError(f"Ensemble members disagree on input dimension: {sorted(dims)}")
    if standardization is None:
        stats = [getattr(m, 'standardization', None) for m in members]
        standardization = stats[0]
        if any(not _same_standardization(s, standardization) for s in stats[1:]):
            raise ContractError("Ensemble members must share one standardization")
    return GFunction(tuple(members), standardization, f"ensemble({len(members)})")


def breslow_fit(ds: Dataset, g: GFunction, rows: Optional[Sequence[int]] = None) -> BreslowBaseline:
    """Breslow estimate of the cumulative baseline hazard.

    For each distinct event time t_i the increment is the number of events at
    t_i over sum_j 1{t_j >= t_i} exp{g(t_i, x_j)}; tied events share one
    denominator.

    Args:
        ds: Model-scale dataset.
        g: Relative-risk function.
        rows: Fitting rows (a multiset); all rows if None.

    Raises:
        ContractError: The fitting rows hold no event.
    """
    idx = np.arange(ds.n) if rows is None else np.asarray(rows, dtype=int)
    time, event, x = ds.time[idx], ds.event[idx], ds.x[idx]
    if not event.any():
        raise ContractError("Breslow fit needs at least one event")
    event_times, counts = np.unique(time[event], return_counts=True)
    denom = np.empty(event_times.size)
    step = max(1, CHUNK_ROWS // idx.size)
    for begin in range(0, event_times.size, step):
        chunk = event_times[begin:begin + step]
        risk = np.exp(np.clip(g.pairwise(chunk, x), -G_CLIP, G_CLIP))
        at_risk = time[None, :] >= chunk[:, None]
        denom[begin:begin + chunk.size] = np.where(at_risk, risk, 0.0).sum(axis=1)
    return BreslowBaseline(event_times, counts / denom)


def nelson_aalen(time, event) -> BreslowBaseline:
    """Nelson-Aalen cumulative hazard: events over risk-set size at each event time."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    if not event.any():
        raise ContractError("Nelson-Aalen needs at least one event")
    event_times, counts = np.unique(time[event], return_counts=True)
    at_risk = (time[None, :] >= event_times[:, None]).sum(axis=1)
    return BreslowBaseline(event_times, counts / at_risk)


def survival_curves(baseline: BreslowBaseline, g: GFunction, x, grid: TimeGrid,
                    extend: bool = False) -> np.ndarray:
    """S(t|x) on the grid for many covariate rows, shape (n, len(grid)).

    H(t|x) = sum over event times t_i <= t of dH0(t_i) exp{g(t_i, x)}; the
    curve is a right-continuous step function, 1 before the first event.

    Args:
        baseline: Breslow baseline.
        g: Relative-risk function (the one the baseline was fitted with).
        x: Model-scale covariates, shape (d,) or (n, d).
        grid: Evaluation grid.
        extend: Hold the curve flat past the last event time instead of raising.

    Raises:
        ContractError: Grid extends past the last event time and extend is False.
    """
    if not extend and grid.tau > baseline.last_event_time:
        raise ContractError(f"Grid end {grid.tau} exceeds the last event time {baseline.last_event_time}")
    rows = np.atleast_2d(np.asarray(x, dtype=float))
    used = int(np.searchsorted(baseline.event_times, grid.tau, side='right'))
    if used == 0:
        return np.ones((rows.shape[0], len(grid)))
    times = baseline.event_times[:used]
    risk = np.exp(np.clip(g.pairwise(times, rows), -G_CLIP, G_CLIP))
    hazard = np.cumsum(baseline.increments[:used, None] * risk, axis=0)
    hazard = np.vstack([np.zeros((1, rows.shape[0])), hazard])
    steps = np.searchsorted(times, grid.points, side='right')
    return np.exp(-hazard[steps].T)


def survival_curve(baseline: BreslowBaseline, g: GFunction, x, grid: TimeGrid,
                   extend: bool = False) -> SurvCurve:
    """S(t|x) on the grid for a single covariate vector."""
    rows = np.atleast_2d(np.asarray(x, dtype=float))
    if rows.shape[0] != 1:
        raise ContractError("survival_curve takes a single covariate vector")
    return SurvCurve(grid, survival_curves(baseline, g, rows, grid, extend)[0])


def ensemble_curve_mean(curves: Union[np.ndarray, Sequence[SurvCurve]]) -> Union[np.ndarray, SurvCurve]:
    """Mean of member survival curves (the curve-averaging ensemble).

    Accepts SurvCurves on one grid, or an array whose first axis indexes members.
    """
    if len(curves) == 0:
        raise ContractError("An ensemble needs at least one member curve")
    if isinstance(curves[0], SurvCurve):
        grid = curves[0].grid
        if any(not c.grid.same_as(grid) for c in curves):
            raise ContractError("Member curves must share one grid")
        return SurvCurve(grid, np.mean([c.values for c in curves], axis=0))
    return np.mean(np.asarray(curves, dtype=float), axis=0)


def kaplan_meier(time, event, grid: TimeGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Kaplan-Meier survival and Greenwood standard error on the grid.

    Returns:
        (values, standard errors), each of shape (len(grid),).
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    if time.size == 0:
        raise ContractError("Kaplan-Meier needs at least one observation")
    event_times, deaths = np.unique(time[event], return_counts=True)
    at_risk = (time[None, :] >= event_times[:, None]).sum(axis=1)
    surv = np.cumprod(1.0 - deaths / at_risk)
    survivors = at_risk - deaths
    terms = np.divide(deaths, at_risk * survivors, out=np.zeros(deaths.size), where=survivors > 0)
    var = surv ** 2 * np.cumsum(terms)

    steps = np.searchsorted(event_times, grid.points, side='right')
    values = np.concatenate([[1.0], surv])[steps]
    se = np.sqrt(np.concatenate([[0.0], var])[steps])
    return values, se
