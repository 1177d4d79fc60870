import numpy as np
import pytest

from dataset import split, standardize
from errors import ConfigurationError, ContractError
from hazardnet import (CaseControlBatch, EarlyStopping, HazardNet, ccl_loss, load_checkpoint,
                       loss_and_gradients, sample_controls, save_checkpoint, train)
from models import BreslowBaseline, NetConfig, SplitPlan
from simgen import generate, get_setting


@pytest.fixture
def sim_dataset():
    raw, _ = generate(get_setting(1), 300, np.random.default_rng(21))
    return standardize(raw, [0, 1, 2])


def _single_pair_batch(case_x, control_x, t=0.0):
    return CaseControlBatch(np.array([case_x], dtype=float), np.array([t]),
                            np.array([[control_x]], dtype=float), np.array([[True]]),
                            np.array([0]), np.array([[1]]))


def _brute_force_loss(net, batch):
    total = 0.0
    for i in range(len(batch)):
        g_case = net(batch.case_t[i], batch.case_x[i])
        acc = 1.0
        for j in range(batch.n_controls):
            if batch.control_mask[i, j]:
                acc += np.exp(net(batch.case_t[i], batch.control_x[i, j]) - g_case)
        total += np.log(acc)
    return total / len(batch)


def _numeric_gradients(net, loss_fn, h=1e-5):
    grads = []
    for p in net.parameters():
        grad = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            up = loss_fn()
            p[idx] = keep - h
            down = loss_fn()
            p[idx] = keep
            grad[idx] = (up - down) / (2 * h)
        grads.append(grad)
    return grads


def _relative_error(analytic, numeric, floor=1e-5):
    """Worst per-parameter relative error; entries below the floor are compared absolutely."""
    a = np.concatenate([g.ravel() for g in analytic])
    b = np.concatenate([g.ravel() for g in numeric])
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


def test_kaiming_initialisation_variance():
    net = HazardNet.init(NetConfig(layer_width=64), 4, np.random.default_rng(0))
    assert net.weights[0].shape == (4, 64)
    assert net.weights[0].var() == pytest.approx(0.5, rel=0.2)
    assert net.weights[1].var() == pytest.approx(2.0 / 64, rel=0.2)
    assert all(np.all(b == 0) for b in net.biases)


def test_init_deterministic_given_seed():
    a = HazardNet.init(NetConfig(), 4, np.random.default_rng(5))
    b = HazardNet.init(NetConfig(), 4, np.random.default_rng(5))
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa, pb)


def test_zero_hidden_layers_rejected():
    with pytest.raises(ConfigurationError):
        NetConfig(hidden_layers=0)


def test_zero_weights_output_final_bias():
    net = HazardNet.init(NetConfig(layer_width=8), 4, np.random.default_rng(1))
    for w in net.weights:
        w[...] = 0.0
    net.biases[-1][...] = 0.7
    out = net.forward(np.array([0.0, 1.0, -2.0]), np.random.default_rng(2).normal(size=(3, 3)))
    np.testing.assert_allclose(out, 0.7)


def test_inference_deterministic_and_stateless():
    net = HazardNet.init(NetConfig(dropout_rate=0.5), 4, np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(10, 3))
    first = net(0.5, x)
    second = net(0.5, x)
    np.testing.assert_array_equal(first, second)
    assert net._cache is None


def test_single_covariate_vector_gives_float():
    net = HazardNet.init(NetConfig(), 4, np.random.default_rng(3))
    assert isinstance(net(0.0, np.zeros(3)), float)


def test_wrong_covariate_dimension():
    net = HazardNet.init(NetConfig(), 4, np.random.default_rng(3))
    with pytest.raises(ContractError):
        net(0.0, np.zeros(5))


def test_linear_network_reproduces_linear_risk():
    weights = [np.eye(4), np.array([[0.44], [0.66], [0.88], [0.0]])]
    net = HazardNet(weights, [np.zeros(4), np.zeros(1)], batch_norm=False)
    assert net(0.0, np.ones(3)) == pytest.approx(1.98)


def test_flat_risk_single_control_loss_is_log_two():
    net = HazardNet.init(NetConfig(layer_width=4), 4, np.random.default_rng(0))
    for w in net.weights:
        w[...] = 0.0
    batch = _single_pair_batch([0.3, -0.2, 1.0], [1.5, 0.0, -1.0])
    assert ccl_loss(net, batch) == pytest.approx(np.log(2.0))


def test_loss_vanishes_as_case_risk_dominates():
    losses = []
    for scale in (0.0, 1.0, 5.0, 20.0, 45.0):
        weights = [np.eye(4), np.array([[scale], [0.0], [0.0], [0.0]])]
        net = HazardNet(weights, [np.zeros(4), np.zeros(1)], batch_norm=False)
        losses.append(ccl_loss(net, _single_pair_batch([1.0, 0.0, 0.0], [0.0, 0.0, 0.0])))
    assert losses[0] == pytest.approx(np.log(2.0))
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-12


def test_loss_matches_brute_force(sim_dataset):
    net = HazardNet.init(NetConfig(layer_width=8), 4, np.random.default_rng(6))
    batch = sample_controls(sim_dataset, np.arange(sim_dataset.n), 3, np.random.default_rng(7))
    assert ccl_loss(net, batch) == pytest.approx(_brute_force_loss(net, batch), rel=1e-10)


def test_loss_invariant_to_output_shift(sim_dataset):
    net = HazardNet.init(NetConfig(layer_width=8), 4, np.random.default_rng(6))
    batch = sample_controls(sim_dataset, np.arange(sim_dataset.n), 3, np.random.default_rng(7))
    before = ccl_loss(net, batch)
    net.biases[-1] += 12.5
    assert ccl_loss(net, batch) == pytest.approx(before, rel=1e-10)


def test_output_bias_gradient_vanishes(sim_dataset):
    net = HazardNet.init(NetConfig(layer_width=8, dropout_rate=0.0), 4, np.random.default_rng(8))
    batch = sample_controls(sim_dataset, np.arange(sim_dataset.n), 4, np.random.default_rng(9))
    _, grads = loss_and_gradients(net, batch)
    assert grads[-1][0] == pytest.approx(0.0, abs=1e-12)


def test_dead_relu_has_zero_gradient(sim_dataset):
    net = HazardNet.init(NetConfig(layer_width=8, dropout_rate=0.0), 4, np.random.default_rng(8))
    net.biases[0][...] = -1e6
    batch = sample_controls(sim_dataset, np.arange(sim_dataset.n), 4, np.random.default_rng(9))
    _, grads = loss_and_gradients(net, batch)
    np.testing.assert_array_equal(grads[0], 0.0)
    np.testing.assert_array_equal(grads[1], 0.0)


@pytest.mark.parametrize("seed, layers, batch_norm, freeze_norm", [
    (0, 1, False, False),
    (1, 2, False, False),
    (2, 2, True, True),
    (3, 3, True, True),
    (4, 2, True, False),
    (5, 1, True, False),
])
def test_gradients_match_finite_differences(sim_dataset, seed, layers, batch_norm, freeze_norm):
    config = NetConfig(hidden_layers=layers, layer_width=4, dropout_rate=0.0, batch_norm=batch_norm)
    rng = np.random.default_rng(seed)
    net = HazardNet.init(config, 4, rng)
    if batch_norm:
        net.running_means = [rng.uniform(0.0, 1.0, 4) for _ in range(layers)]
        net.running_vars = [rng.uniform(0.5, 2.0, 4) for _ in range(layers)]
        net.gammas = [rng.uniform(0.5, 1.5, 4) for _ in range(layers)]
        net.betas = [rng.normal(0.0, 0.2, 4) for _ in range(layers)]
    full = sample_controls(sim_dataset, np.arange(sim_dataset.n), 2, rng)
    batch = full.take(np.arange(10))

    _, analytic = loss_and_gradients(net, batch, freeze_norm=freeze_norm)
    batch_stats = batch_norm and not freeze_norm
    numeric = _numeric_gradients(net, lambda: ccl_loss(net, batch, training=batch_stats))
    assert _relative_error(analytic, numeric) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_deep_net_gradients_match_per_parameter(sim_dataset, seed):
    config = NetConfig(hidden_layers=3, layer_width=16, dropout_rate=0.0, batch_norm=True)
    rng = np.random.default_rng(100 + seed)
    net = HazardNet.init(config, 4, rng)
    net.running_means = [rng.uniform(0.0, 1.0, 16) for _ in range(3)]
    net.running_vars = [rng.uniform(0.5, 2.0, 16) for _ in range(3)]
    batch = sample_controls(sim_dataset, np.arange(sim_dataset.n), 2, rng).take(np.arange(8))

    _, analytic = loss_and_gradients(net, batch, freeze_norm=True)
    numeric = _numeric_gradients(net, lambda: ccl_loss(net, batch))
    assert _relative_error(analytic, numeric) < 1e-4


def test_early_stopping_patience_one():
    stopper = EarlyStopping(patience=1)
    stopped_at = None
    for epoch, loss in enumerate([1.0, 2.0, 3.0, 0.5], start=1):
        stopper.update(loss, epoch)
        if stopper.should_stop:
            stopped_at = epoch
            break
    assert stopped_at == 3
    assert stopper.best_epoch == 1


def test_sample_controls_respects_risk_sets(sim_dataset):
    rows = np.arange(sim_dataset.n)
    batch = sample_controls(sim_dataset, rows, 5, np.random.default_rng(0))
    assert len(batch) == sim_dataset.n_events
    case_times = sim_dataset.time[batch.case_rows]
    for i in range(len(batch)):
        picked = batch.control_rows[i][batch.control_mask[i]]
        assert np.all(sim_dataset.time[picked] >= case_times[i])
        assert not np.any(picked == batch.case_rows[i])


def test_last_event_has_no_controls(tiny_dataset):
    batch = sample_controls(tiny_dataset, np.arange(tiny_dataset.n), 3, np.random.default_rng(0))
    last = np.flatnonzero(batch.case_rows == 5)[0]
    assert not batch.control_mask[last].any()
    assert batch.n_empty == 1


def test_train_deterministic(sim_dataset, small_net_config):
    plan = split(sim_dataset.n, 0.8, np.random.default_rng(1))
    net_a, report_a = train(sim_dataset, plan, small_net_config, np.random.default_rng(2))
    net_b, report_b = train(sim_dataset, plan, small_net_config, np.random.default_rng(2))
    assert report_a.same_history(report_b)
    for pa, pb in zip(net_a.parameters(), net_b.parameters()):
        np.testing.assert_array_equal(pa, pb)


def test_train_never_sees_validation_rows(sim_dataset, small_net_config):
    plan = split(sim_dataset.n, 0.8, np.random.default_rng(1))
    _, report = train(sim_dataset, plan, small_net_config, np.random.default_rng(2))
    assert np.intersect1d(report.rows_seen, plan.valid_indices).size == 0
    assert np.isin(report.rows_seen, plan.train_indices).all()
    assert 1 <= report.best_epoch <= report.epochs_run <= small_net_config.max_epochs
    assert report.best_valid_loss == min(report.valid_loss_history)


def test_train_on_resample_stays_inside_it(sim_dataset, small_net_config):
    plan = split(sim_dataset.n, 0.8, np.random.default_rng(1))
    resample = np.random.default_rng(3).choice(plan.train_indices, size=plan.train_indices.size)
    _, report = train(sim_dataset, plan, small_net_config, np.random.default_rng(2), train_rows=resample)
    assert np.isin(report.rows_seen, resample).all()


def test_train_improves_on_initial_loss(small_net_config):
    raw, _ = generate(get_setting(1), 1000, np.random.default_rng(31))
    ds = standardize(raw, [0, 1, 2])
    plan = split(ds.n, 0.8, np.random.default_rng(32))
    config = small_net_config.with_overrides(max_epochs=30)
    _, report = train(ds, plan, config, np.random.default_rng(33))
    assert report.best_valid_loss < report.initial_valid_loss


def test_validation_without_events(tiny_dataset, small_net_config):
    plan = SplitPlan(np.array([0, 1, 3, 5]), np.array([2, 4]), 0.67)
    with pytest.raises(ConfigurationError):
        train(tiny_dataset, plan, small_net_config, np.random.default_rng(0))


def test_plan_size_mismatch(tiny_dataset, small_net_config):
    plan = SplitPlan(np.array([0, 1, 2]), np.array([3]), 0.75)
    with pytest.raises(ContractError):
        train(tiny_dataset, plan, small_net_config, np.random.default_rng(0))


def test_checkpoint_round_trip(tmp_path, sim_dataset):
    net = HazardNet.init(NetConfig(layer_width=8), 4, np.random.default_rng(11))
    net.standardization = sim_dataset.standardization
    net.running_means[0] += 0.25
    baseline = BreslowBaseline(np.array([1.0, 2.5, 4.0]), np.array([0.1, 0.0, 0.3]))
    path = str(tmp_path / "net.npz")
    save_checkpoint(path, net, baseline)
    loaded, loaded_baseline = load_checkpoint(path)
    for pa, pb in zip(net.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(pa, pb)
    x = sim_dataset.x[:20]
    np.testing.assert_array_equal(net(0.3, x), loaded(0.3, x))
    np.testing.assert_array_equal(loaded_baseline.increments, baseline.increments)
    assert loaded.standardization.to_dict() == net.standardization.to_dict()


def test_checkpoint_without_baseline(tmp_path):
    net = HazardNet.init(NetConfig(batch_norm=False), 3, np.random.default_rng(0))
    path = str(tmp_path / "plain.npz")
    save_checkpoint(path, net)
    loaded, baseline = load_checkpoint(path)
    assert baseline is None and loaded.standardization is None and not loaded.batch_norm
