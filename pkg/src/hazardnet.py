"""
Relative-risk network g(t, x).

A plain numpy multilayer perceptron whose input is the standardized
covariate vector with standardized time appended as the last feature.
Each hidden block is Linear -> ReLU -> BatchNorm -> Dropout; the output is a
single linear unit. Training minimises the case-control sampled Cox partial
likelihood with Adam and patience-based early stopping.
"""
from __future__ import annotations
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union
import numpy as np
from scipy.special import logsumexp, softmax
from errors import ConfigurationError, ContractError, TrainingError
from models import BreslowBaseline, Dataset, NetConfig, SplitPlan, Standardization, TrainReport

logger = logging.getLogger('SurvBand')

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass(eq=False)
class HazardNet:
    """Parameters and normalization state of the network.

    Attributes:
        weights: One (fan_in, fan_out) matrix per layer; the last maps to 1 unit.
        biases: One bias vector per layer.
        gammas, betas: Batch-norm scale and shift per hidden layer.
        running_means, running_vars: Batch-norm statistics used at inference.
        dropout_rate: Dropout probability of the hidden blocks.
        batch_norm: Whether hidden blocks normalize.
        standardization: Statistics of the data the net was trained on.
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    gammas: List[np.ndarray] = field(default_factory=list)
    betas: List[np.ndarray] = field(default_factory=list)
    running_means: List[np.ndarray] = field(default_factory=list)
    running_vars: List[np.ndarray] = field(default_factory=list)
    dropout_rate: float = 0.0
    batch_norm: bool = True
    standardization: Optional[Standardization] = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractError("Each layer needs a weight matrix and a bias vector")
        if self.weights[-1].shape[1] != 1:
            raise ContractError("The output layer must have a single unit")
        n_hidden = len(self.weights) - 1
        if not self.gammas:
            widths = [w.shape[1] for w in self.weights[:-1]]
            self.gammas = [np.ones(k) for k in widths]
            self.betas = [np.zeros(k) for k in widths]
            self.running_means = [np.zeros(k) for k in widths]
            self.running_vars = [np.ones(k) for k in widths]
        if len(self.gammas) != n_hidden:
            raise ContractError("Normalization parameters must exist for every hidden layer")
        self._cache = None

    @classmethod
    def init(cls, config: NetConfig, input_dim: int, rng: np.random.Generator) -> 'HazardNet':
        """Kaiming-initialised network: W ~ N(0, 2/fan_in), zero biases.

        Args:
            config: Architecture settings.
            input_dim: Covariate dimension plus one for time.
            rng: Random stream; equal seeds give equal parameters.
        """
        if config.hidden_layers < 1:
            raise ConfigurationError("A hazard network needs at least one hidden layer")
        if input_dim < 2:
            raise ContractError(f"input_dim must cover covariates plus time, got {input_dim}")
        sizes = [input_dim] + [config.layer_width] * config.hidden_layers + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, dropout_rate=config.dropout_rate, batch_norm=config.batch_norm)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    def parameters(self) -> List[np.ndarray]:
        """Trainable arrays in a fixed order: per hidden layer W, b, gamma, beta; then W_out, b_out."""
        params = []
        for k in range(self.n_hidden):
            params += [self.weights[k], self.biases[k], self.gammas[k], self.betas[k]]
        return params + [self.weights[-1], self.biases[-1]]

    def inputs(self, t, x) -> np.ndarray:
        """Stack covariates and (already standardized) time into network input rows."""
        rows = np.atleast_2d(np.asarray(x, dtype=float))
        if rows.shape[1] != self.input_dim - 1:
            raise ContractError(f"Expected {self.input_dim - 1} covariates, got {rows.shape[1]}")
        t = np.broadcast_to(np.asarray(t, dtype=float), (rows.shape[0],))
        return np.column_stack([rows, t])

    def forward(self, t, x, training: bool = False, rng: Optional[np.random.Generator] = None,
                freeze_norm: bool = False):
        """Evaluate g(t, x).

        Args:
            t: Standardized time, scalar or one per row.
            x: Standardized covariates, shape (d,) or (n, d).
            training: Apply dropout and batch statistics.
            rng: Required for dropout in training mode.
            freeze_norm: Use running statistics even in training mode.

        Returns:
            A float for a single covariate vector, else shape (n,).
        """
        single = np.ndim(x) == 1 and np.ndim(t) == 0
        out = self.forward_rows(self.inputs(t, x), training, rng, freeze_norm)
        return float(out[0]) if single else out

    __call__ = forward

    def forward_rows(self, z: np.ndarray, training: bool = False, rng: Optional[np.random.Generator] = None,
                     freeze_norm: bool = False) -> np.ndarray:
        """Forward pass on prepared input rows.

        Training-mode passes keep what backward needs; inference leaves the net untouched.
        """
        if z.ndim != 2 or z.shape[1] != self.input_dim:
            raise ContractError(f"Input rows must have {self.input_dim} columns")
        if training and self.dropout_rate > 0 and rng is None:
            raise ContractError("Training-mode dropout needs a random stream")
        batch_stats = training and self.batch_norm and not freeze_norm
        layers = []
        a = z
        for k in range(self.n_hidden):
            h = a @ self.weights[k] + self.biases[k]
            r = np.maximum(h, 0.0)
            entry = {'a_in': a, 'h': h}
            if self.batch_norm:
                if batch_stats:
                    mean, var = r.mean(axis=0), r.var(axis=0)
                    self.running_means[k] = BN_MOMENTUM * self.running_means[k] + (1 - BN_MOMENTUM) * mean
                    self.running_vars[k] = BN_MOMENTUM * self.running_vars[k] + (1 - BN_MOMENTUM) * var
                else:
                    mean, var = self.running_means[k], self.running_vars[k]
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                r_hat = (r - mean) * inv_std
                entry.update(r_hat=r_hat, inv_std=inv_std)
                r = self.gammas[k] * r_hat + self.betas[k]
            if training and self.dropout_rate > 0:
                mask = (rng.random(r.shape) >= self.dropout_rate) / (1.0 - self.dropout_rate)
                r = r * mask
                entry['mask'] = mask
            layers.append(entry)
            a = r
        out = (a @ self.weights[-1] + self.biases[-1])[:, 0]
        if training:
            self._cache = {'layers': layers, 'a_last': a, 'batch_stats': batch_stats}
        return out

    def backward(self, grad_out: np.ndarray) -> List[np.ndarray]:
        """Gradients of a scalar loss w.r.t. parameters(), given dL/dg per row of the last forward."""
        if self._cache is None:
            raise ContractError("backward() needs a preceding forward pass")
        cache = self._cache
        g = np.asarray(grad_out, dtype=float)[:, None]
        grads_out = [cache['a_last'].T @ g, g.sum(axis=0)]
        da = g @ self.weights[-1].T
        hidden_grads = []
        for k in reversed(range(self.n_hidden)):
            entry = cache['layers'][k]
            if 'mask' in entry:
                da = da * entry['mask']
            if self.batch_norm:
                r_hat = entry['r_hat']
                d_gamma = (da * r_hat).sum(axis=0)
                d_beta = da.sum(axis=0)
                d_hat = da * self.gammas[k]
                if cache['batch_stats']:
                    m = d_hat.shape[0]
                    dr = entry['inv_std'] / m * (m * d_hat - d_hat.sum(axis=0) - r_hat * (d_hat * r_hat).sum(axis=0))
                else:
                    dr = d_hat * entry['inv_std']
            else:
                d_gamma = np.zeros_like(self.gammas[k])
                d_beta = np.zeros_like(self.betas[k])
                dr = da
            dh = dr * (entry['h'] > 0)
            hidden_grads.append([entry['a_in'].T @ dh, dh.sum(axis=0), d_gamma, d_beta])
            da = dh @ self.weights[k].T
        grads = []
        for block in reversed(hidden_grads):
            grads += block
        return grads + grads_out

    def state_copy(self) -> List[np.ndarray]:
        return [p.copy() for p in self.parameters()] + \
               [s.copy() for s in self.running_means + self.running_vars]

    def load_state(self, state: Sequence[np.ndarray]) -> None:
        """Restore a state_copy() in place, keeping optimizer references valid."""
        params = self.parameters()
        for target, source in zip(params, state[:len(params)]):
            np.copyto(target, source)
        stats = list(state[len(params):])
        self.running_means = [s.copy() for s in stats[:self.n_hidden]]
        self.running_vars = [s.copy() for s in stats[self.n_hidden:]]


@dataclass(frozen=True, eq=False)
class CaseControlBatch:
    """Events paired with controls sampled from their risk sets.

    Attributes:
        case_x: Covariates of the events, shape (nb, d).
        case_t: Standardized event times, shape (nb,).
        control_x: Covariates of the controls, shape (nb, C, d).
        control_mask: False where no control could be drawn, shape (nb, C).
        case_rows: Dataset rows of the events.
        control_rows: Dataset rows of the controls (the case row where masked).
    """
    case_x: np.ndarray
    case_t: np.ndarray
    control_x: np.ndarray
    control_mask: np.ndarray
    case_rows: np.ndarray
    control_rows: np.ndarray

    def __len__(self) -> int:
        return self.case_rows.size

    @property
    def n_controls(self) -> int:
        return self.control_mask.shape[1]

    @property
    def n_empty(self) -> int:
        """Events without any available control."""
        return int((~self.control_mask.any(axis=1)).sum())

    def take(self, idx: np.ndarray) -> 'CaseControlBatch':
        return CaseControlBatch(self.case_x[idx], self.case_t[idx], self.control_x[idx],
                                self.control_mask[idx], self.case_rows[idx], self.control_rows[idx])

    def used_rows(self) -> np.ndarray:
        return np.union1d(self.case_rows, self.control_rows[self.control_mask])


def sample_controls(ds: Dataset, pool_rows: Sequence[int], n_controls: int,
                    rng: np.random.Generator) -> CaseControlBatch:
    """Pair each event in the pool with controls from its risk set.

    The pool is a multiset of dataset rows (a bootstrap resample may repeat
    rows). For an event at time t_i the risk set is every other pool entry
    with time >= t_i; controls are drawn uniformly with replacement. An
    event whose risk set holds nobody else gets a fully masked row.
    """
    pool = np.asarray(pool_rows, dtype=int)
    times = ds.time[pool]
    order = np.argsort(times, kind='stable')
    sorted_times = times[order]
    rank = np.empty_like(order)
    rank[order] = np.arange(pool.size)

    case_pos = np.flatnonzero(ds.event[pool])
    start = np.searchsorted(sorted_times, times[case_pos], side='left')
    others = pool.size - start - 1
    draws = rng.integers(0, np.maximum(others, 1)[:, None], size=(case_pos.size, n_controls))
    sorted_idx = start[:, None] + draws
    sorted_idx = sorted_idx + (sorted_idx >= rank[case_pos][:, None])
    mask = np.broadcast_to((others > 0)[:, None], draws.shape).copy()
    control_pos = np.where(mask, order[np.minimum(sorted_idx, pool.size - 1)], case_pos[:, None])

    case_rows = pool[case_pos]
    control_rows = pool[control_pos]
    t_scaled = ds.scaled_time
    return CaseControlBatch(ds.x[case_rows], t_scaled[case_rows], ds.x[control_rows],
                            mask, case_rows, control_rows)


def _stacked_inputs(net: HazardNet, batch: CaseControlBatch) -> np.ndarray:
    nb, c = batch.control_mask.shape
    cases = net.inputs(batch.case_t, batch.case_x)
    controls = net.inputs(np.repeat(batch.case_t, c), batch.control_x.reshape(nb * c, -1))
    return np.vstack([cases, controls])


def _loss_terms(g: np.ndarray, batch: CaseControlBatch) -> np.ndarray:
    """Per-event log-sum-exp arguments [0, g_ctrl - g_case], masked entries at -inf."""
    nb, c = batch.control_mask.shape
    diffs = g[nb:].reshape(nb, c) - g[:nb, None]
    diffs = np.where(batch.control_mask, diffs, -np.inf)
    return np.column_stack([np.zeros(nb), diffs])


def ccl_loss(net: HazardNet, batch: CaseControlBatch, training: bool = False,
             rng: Optional[np.random.Generator] = None) -> float:
    """Mean over events of log(1 + sum_j exp{g(t_i, x_j) - g(t_i, x_i)})."""
    if len(batch) == 0:
        raise ContractError("Case-control batch holds no events")
    g = net.forward_rows(_stacked_inputs(net, batch), training, rng)
    return float(np.mean(logsumexp(_loss_terms(g, batch), axis=1)))


def loss_and_gradients(net: HazardNet, batch: CaseControlBatch,
                       rng: Optional[np.random.Generator] = None,
                       freeze_norm: bool = False) -> Tuple[float, List[np.ndarray]]:
    """Loss and exact gradients w.r.t. net.parameters(), from a training-mode pass."""
    if len(batch) == 0:
        raise ContractError("Case-control batch holds no events")
    nb, c = batch.control_mask.shape
    g = net.forward_rows(_stacked_inputs(net, batch), True, rng, freeze_norm)
    terms = _loss_terms(g, batch)
    loss = float(np.mean(logsumexp(terms, axis=1)))
    weights = softmax(terms, axis=1)[:, 1:] / nb
    grad_g = np.concatenate([-weights.sum(axis=1), weights.reshape(-1)])
    return loss, net.backward(grad_g)


class Adam:
    """Adam optimizer updating the given arrays in place."""

    def __init__(self, params: List[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.steps = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


class EarlyStopping:
    """Patience rule: stop once the validation loss has not improved for more than `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, loss: float, epoch: int) -> bool:
        """Record an epoch's loss; True if it is a new best."""
        if loss < self.best_loss:
            self.best_loss, self.best_epoch, self.wait = loss, epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait > self.patience


def train(ds: Dataset, plan: SplitPlan, config: NetConfig, rng: Optional[np.random.Generator] = None,
          train_rows: Optional[Sequence[int]] = None,
          log: Optional[Union[logging.Logger, logging.LoggerAdapter]] = None) -> Tuple[HazardNet, TrainReport]:
    """Fit a hazard network with early stopping on the validation loss.

    Gradients only ever see train_rows (plan.train_indices by default, or a
    bootstrap resample of them). Validation controls are drawn once and kept
    for the whole run; training controls are redrawn every epoch.

    Args:
        ds: Standardized dataset.
        plan: Train/validation split of ds.
        config: Network and optimisation settings.
        rng: Random stream (defaults to one seeded with config.seed).
        train_rows: Training multiset overriding plan.train_indices.
        log: Logger for run messages (module logger by default).

    Returns:
        (net restored to its best epoch, TrainReport)

    Raises:
        ConfigurationError: Validation or training rows contain no events.
        TrainingError: The loss became non-finite.
    """
    log = log or logger
    if plan.n != ds.n:
        raise ContractError(f"Split plan covers {plan.n} rows, dataset has {ds.n}")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    rows = plan.train_indices if train_rows is None else np.asarray(train_rows, dtype=int)
    if not ds.event[plan.valid_indices].any():
        raise ConfigurationError("Validation split has no events; validation loss is undefined")
    if not ds.event[rows].any():
        raise ConfigurationError("Training rows have no events")

    net = HazardNet.init(config, ds.d + 1, rng)
    net.standardization = ds.standardization
    valid_batch = sample_controls(ds, plan.valid_indices, config.n_controls, rng)
    initial_valid = ccl_loss(net, valid_batch)

    optimizer = Adam(net.parameters(), config.learning_rate)
    stopper = EarlyStopping(config.patience)
    best_state = net.state_copy()
    train_hist: List[float] = []
    valid_hist: List[float] = []
    seen = np.empty(0, dtype=int)
    empty = 0
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        epoch_batch = sample_controls(ds, rows, config.n_controls, rng)
        empty = epoch_batch.n_empty
        order = rng.permutation(len(epoch_batch))
        total = 0.0
        for begin in range(0, order.size, config.batch_size):
            mini = epoch_batch.take(order[begin:begin + config.batch_size])
            loss, grads = loss_and_gradients(net, mini, rng=rng)
            if not np.isfinite(loss):
                raise TrainingError(f"Non-finite training loss at epoch {epoch}")
            optimizer.step(grads)
            total += loss * len(mini)
        if epoch == 1:
            seen = epoch_batch.used_rows()
        else:
            seen = np.union1d(seen, epoch_batch.used_rows())
        train_hist.append(total / order.size)

        valid_loss = ccl_loss(net, valid_batch)
        if not np.isfinite(valid_loss):
            raise TrainingError(f"Non-finite validation loss at epoch {epoch}")
        valid_hist.append(valid_loss)
        if stopper.update(valid_loss, epoch):
            best_state = net.state_copy()
        if stopper.should_stop:
            stopped_early = True
            break

    net.load_state(best_state)
    net._cache = None
    if empty:
        log.warning(f"{empty} training events had no control in their risk set")
    report = TrainReport(epochs_run=len(valid_hist), best_epoch=stopper.best_epoch,
                         train_loss_history=train_hist, valid_loss_history=valid_hist,
                         stopped_early=stopped_early, initial_valid_loss=initial_valid,
                         empty_control_events=empty, rows_seen=seen,
                         normalization='batch' if net.batch_norm else 'none')
    log.debug(f"Trained {report.epochs_run} epochs, best {report.best_epoch} "
              f"(valid {report.best_valid_loss:.5f}, initial {initial_valid:.5f})")
    return net, report


def save_checkpoint(path: str, net: HazardNet, baseline: Optional[BreslowBaseline] = None) -> None:
    """Write the network (and optionally its Breslow baseline) to a .npz file."""
    meta = {'n_hidden': net.n_hidden, 'dropout_rate': net.dropout_rate, 'batch_norm': net.batch_norm,
            'has_standardization': net.standardization is not None, 'has_baseline': baseline is not None}
    arrays = {'meta': np.array(json.dumps(meta))}
    for k in range(len(net.weights)):
        arrays[f'W{k}'] = net.weights[k]
        arrays[f'b{k}'] = net.biases[k]
    for k in range(net.n_hidden):
        arrays[f'gamma{k}'] = net.gammas[k]
        arrays[f'beta{k}'] = net.betas[k]
        arrays[f'rmean{k}'] = net.running_means[k]
        arrays[f'rvar{k}'] = net.running_vars[k]
    if net.standardization is not None:
        std = net.standardization
        arrays['std_indices'] = np.asarray(std.feature_indices, dtype=int)
        arrays['std_means'] = std.feature_means
        arrays['std_sds'] = std.feature_sds
        arrays['std_time'] = np.array([std.time_mean, std.time_sd])
    if baseline is not None:
        arrays['baseline_times'] = baseline.event_times
        arrays['baseline_increments'] = baseline.increments
    with open(path, 'wb') as f:
        np.savez(f, **arrays)
    logger.info(f"Checkpoint written to {path}")


def load_checkpoint(path: str) -> Tuple[HazardNet, Optional[BreslowBaseline]]:
    """Read a checkpoint written by save_checkpoint."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data['meta']))
        n_layers = meta['n_hidden'] + 1
        hidden = range(meta['n_hidden'])
        std = None
        if meta['has_standardization']:
            std = Standardization(tuple(int(i) for i in data['std_indices']), data['std_means'].copy(),
                                  data['std_sds'].copy(), float(data['std_time'][0]), float(data['std_time'][1]))
        net = HazardNet(weights=[data[f'W{k}'].copy() for k in range(n_layers)],
                        biases=[data[f'b{k}'].copy() for k in range(n_layers)],
                        gammas=[data[f'gamma{k}'].copy() for k in hidden],
                        betas=[data[f'beta{k}'].copy() for k in hidden],
                        running_means=[data[f'rmean{k}'].copy() for k in hidden],
                        running_vars=[data[f'rvar{k}'].copy() for k in hidden],
                        dropout_rate=float(meta['dropout_rate']), batch_norm=bool(meta['batch_norm']),
                        standardization=std)
        baseline = None
        if meta['has_baseline']:
            baseline = BreslowBaseline(data['baseline_times'].copy(), data['baseline_increments'].copy())
    return net, baseline
