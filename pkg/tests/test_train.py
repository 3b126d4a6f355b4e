import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochfet.errors import ConfigError, MetricError, TrainingError
from stochfet.mdn import NetworkConfig, NetworkParams, init_params
from stochfet.oracle import OracleConfig, generate_synthetic_dataset
from stochfet.train import (
    DataPoint,
    Dataset,
    Scaling,
    TrainConfig,
    TrainedModel,
    evaluate_crps,
    gradient_check,
    loss_and_grads,
    r2_score,
    r_squared,
    split_holdout,
    train,
)

from conftest import SMALL_NET, SMALL_TRAIN


def untrained(cfg, dataset):
    params, table = init_params(cfg, dataset.device_count)
    return TrainedModel(cfg, params, table, dataset.scaling, np.asarray(dataset.device_labels))


def tiny_dataset(seed=0, n_dev=3):
    rng = np.random.default_rng(seed)
    n = 40
    return Dataset.from_arrays(rng.integers(0, n_dev, n), rng.uniform(0, 1.8, n), rng.uniform(0, 1e-4, n), device_count=n_dev)


def test_dataset_validation():
    with pytest.raises(ConfigError):
        Dataset.from_arrays([0, 1], [0.1, 0.2], [1e-6, -1e-6])
    with pytest.raises(ConfigError):
        Dataset.from_arrays([0, 3], [0.1, 0.2], [1e-6, 1e-6], device_count=2)
    with pytest.raises(ConfigError):
        Scaling(0.0, 0.0, 1.0)
    pts = [DataPoint(0, 0.1, 1e-6), DataPoint(1, 0.2, 2e-6)]
    ds = Dataset.from_points(pts)
    assert ds.points == pts and len(ds) == 2 and ds.device_count == 2


@settings(max_examples=100)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=20), st.lists(st.floats(0, 1e-3), min_size=2, max_size=20))
def test_scaling_roundtrip(v, i):
    n = min(len(v), len(i))
    s = Scaling.fit(np.array(v[:n]), np.array(i[:n]))
    np.testing.assert_allclose(s.unscale_v(s.scale_v(v[:n])), v[:n], rtol=1e-12, atol=1e-12 * max(1.0, s.v_std))
    np.testing.assert_allclose(s.unscale_i(s.scale_i(i[:n])), i[:n], rtol=1e-12, atol=0)
    assert np.all(s.scale_i(i[:n]) >= 0)


def test_train_config_validation():
    for kw in (dict(epochs=-1), dict(batch_size=0), dict(learning_rate=0), dict(loss="mse"), dict(holdout=1.0)):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


def test_holdout_split_is_stratified(small_data):
    data = small_data[0]
    tr, ho = split_holdout(data, 0.2, 0)
    assert np.intersect1d(tr, ho).size == 0 and tr.size + ho.size == len(data)
    for d in range(data.device_count):
        assert np.any(data.device_id[tr] == d) and np.any(data.device_id[ho] == d)


def test_epochs_zero_is_noop():
    data = tiny_dataset()
    cfg = NetworkConfig(hidden_sizes=(5,), seed=4)
    model = train(data, cfg, TrainConfig(epochs=0))
    p, table = init_params(cfg, data.device_count)
    for a, b in zip(model.params.arrays(), p.arrays()):
        assert np.array_equal(a, b)
    assert np.array_equal(model.embeddings, table)
    assert len(model.log) == 1


def test_empty_dataset_rejected():
    empty = Dataset.from_arrays(np.array([], dtype=int), [], [], device_count=1, scaling=Scaling(0.0, 1.0, 1.0))
    with pytest.raises(ConfigError):
        train(empty, NetworkConfig(hidden_sizes=(4,)))


def test_nan_loss_aborts_with_location():
    data = tiny_dataset()
    # a vanishing voltage scale overflows the first layer
    bad = Dataset(data.device_id, data.v_gate, data.i_drain, data.device_count, Scaling(0.0, 1e-300, 1e-4))
    with pytest.raises(TrainingError, match=r"epoch 1, batch 0"), np.errstate(all="ignore"):
        train(bad, NetworkConfig(hidden_sizes=(4,)), TrainConfig(epochs=1))


def test_training_is_bit_reproducible(small_data):
    data = small_data[0]
    cfg = TrainConfig(epochs=2, batch_size=64, seed=9)
    a = train(data, SMALL_NET, cfg)
    b = train(data, SMALL_NET, cfg)
    for x, y in zip(a.params.arrays(), b.params.arrays()):
        assert np.array_equal(x, y)
    assert np.array_equal(a.embeddings, b.embeddings)
    assert a.log == b.log


def test_training_reduces_holdout_loss(small_model):
    log = small_model.log
    assert log[-1][2] < log[0][2]
    assert log[-1][1] < log[0][1]


def test_gnll_training_converges(small_data):
    model = train(small_data[0], SMALL_NET, dataclasses.replace(SMALL_TRAIN, loss="gnll", learning_rate=1e-3))
    train_losses = [row[1] for row in model.log[1:]]
    assert sum(b > a for a, b in zip(train_losses, train_losses[1:])) <= 2
    assert model.log[-1][2] < model.log[0][2]


def test_embedding_locality_in_gradients():
    cfg = NetworkConfig(hidden_sizes=(6,), seed=1)
    params, table = init_params(cfg, 5)
    ids = np.array([0, 2, 2])
    _, _, _, g_tab = loss_and_grads(params, table, ids, np.array([0.1, -0.3, 0.5]), np.array([0.2, 0.4, 0.1]))
    assert np.all(g_tab[[1, 3, 4]] == 0.0)
    assert np.any(g_tab[0] != 0) and np.any(g_tab[2] != 0)
    zero = NetworkParams(cfg, [np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
    _, _, _, g_tab = loss_and_grads(zero, table, ids, np.array([0.1, -0.3, 0.5]), np.array([0.2, 0.4, 0.1]))
    assert np.all(g_tab == 0.0)


def test_adam_leaves_absent_device_rows_untouched():
    data = tiny_dataset(n_dev=4)
    keep = data.device_id != 3
    sub = Dataset(data.device_id[keep], data.v_gate[keep], data.i_drain[keep], 4, data.scaling)
    cfg = NetworkConfig(hidden_sizes=(6,), seed=2)
    model = train(sub, cfg, TrainConfig(epochs=3, batch_size=8, holdout=0.0))
    _, table = init_params(cfg, 4)
    assert np.array_equal(model.embeddings[3], table[3])
    assert not np.array_equal(model.embeddings[0], table[0])


@pytest.mark.parametrize("loss", ["crps", "gnll"])
def test_gradient_check_random_init(loss):
    rng = np.random.default_rng(3)
    data = tiny_dataset(seed=1)
    model = untrained(NetworkConfig(n_components=2, hidden_sizes=(6, 5), seed=11), data)
    for _ in range(3):
        j = int(rng.integers(len(data)))
        point = DataPoint(int(data.device_id[j]), float(data.v_gate[j]), float(data.i_drain[j]))
        assert gradient_check(model, point, 1e-6, loss) <= 1e-4


def test_gradient_check_step_order():
    data = tiny_dataset(seed=2)
    model = untrained(NetworkConfig(n_components=2, hidden_sizes=(5,), seed=3), data)
    point = data.points[0]
    _, an, fd1, _ = gradient_check(model, point, 1e-6, return_details=True)
    _, _, fd2, _ = gradient_check(model, point, 2e-6, return_details=True)
    # truncation error of central differences is O(h^2): tiny compared with the gradient itself
    assert np.max(np.abs(fd1 - fd2)) <= 1e-8 * max(1.0, np.max(np.abs(an)))
    with pytest.raises(ConfigError):
        gradient_check(model, point, 0.0)


def test_gradient_check_sigma_at_floor_gnll():
    # sigma ~ 1e-6 with y far from mu makes the loss ~1e10; the check must still resolve it
    data = tiny_dataset(seed=4)
    cfg = NetworkConfig(n_components=2, hidden_sizes=(4,), seed=5)
    model = untrained(cfg, data)
    model.params.biases[-1][2 * cfg.n_components :] = -13.0
    point = data.points[3]
    err, an, _, _ = gradient_check(model, point, 1e-6, "gnll", return_details=True)
    assert np.max(np.abs(an)) > 1e6
    assert err <= 1e-4


def test_gradient_check_precision_paths_agree():
    from stochfet import _extended
    from stochfet.train import _mp_differences

    data = tiny_dataset(seed=6)
    model = untrained(NetworkConfig(n_components=2, hidden_sizes=(3,), seed=2), data)
    point = data.points[5]
    _, an, fd, _ = gradient_check(model, point, 1e-6, "crps", return_details=True)
    ld = _extended.LD
    x = np.concatenate([model.scaling.scale_v([point.v_gate]), model.embeddings[point.device_id]]).astype(ld)
    y = float(model.scaling.scale_i([point.i_drain])[0])
    weights = [w.astype(ld) for w in model.params.weights]
    biases = [b.astype(ld) for b in model.params.biases]
    mp_fd = _mp_differences(model, weights, biases, x, y, 1e-6, "crps", 1.0)
    assert np.allclose(mp_fd, fd, rtol=1e-7, atol=1e-11)


def test_gradient_check_trained_model(small_model, small_data):
    point = small_data[0].points[17]
    assert gradient_check(small_model, point) <= 1e-4


def test_r2_definition():
    y = np.array([1.0, 2.0, 4.0, 7.0])
    assert r2_score(y, y) == 1.0
    assert r2_score(y, np.full(4, y.mean())) == 0.0
    with pytest.raises(MetricError):
        r2_score(np.ones(3), np.ones(3))


def test_r2_invariant_under_current_rescale(small_model, small_data):
    data = small_data[0]
    c = 1234.5
    scaled_model = dataclasses.replace(small_model, scaling=dataclasses.replace(small_model.scaling, i_scale=small_model.scaling.i_scale * c))
    scaled_data = Dataset(data.device_id, data.v_gate, data.i_drain * c, data.device_count, scaled_model.scaling)
    assert r_squared(scaled_model, scaled_data) == pytest.approx(r_squared(small_model, data), rel=1e-10)


def test_evaluate_crps_single_point_oracle():
    cfg = NetworkConfig(n_components=1, hidden_sizes=(3,), embedding_enabled=False)
    params, _ = init_params(cfg)
    zero = NetworkParams(cfg, [np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
    # sigma = softplus(b) + floor == 1 and mu == bias == y
    zero.biases[-1][:] = [0.0, 0.25, math.log(math.expm1(1.0 - 1e-6))]
    data = Dataset.from_arrays([0], [0.3], [0.25], scaling=Scaling(0.0, 1.0, 1.0))
    model = TrainedModel(cfg, zero, None, data.scaling, np.array([0]))
    assert evaluate_crps(model, data) == pytest.approx(0.23369497725510902, rel=1e-12)


def test_evaluate_crps_duplicate_invariance_and_training(small_model, small_data):
    data = small_data[0]
    idx = np.arange(50)
    sub = data.subset(idx)
    dup = data.subset(np.concatenate([idx, idx]))
    assert evaluate_crps(small_model, dup) == pytest.approx(evaluate_crps(small_model, sub), rel=1e-14)
    init = untrained(SMALL_NET, data)
    assert evaluate_crps(small_model, data) < evaluate_crps(init, data)


def test_no_embedding_training(small_data):
    cfg = dataclasses.replace(SMALL_NET, embedding_enabled=False)
    model = train(small_data[0], cfg, dataclasses.replace(SMALL_TRAIN, epochs=2))
    assert model.embeddings is None
    assert np.isfinite(r_squared(model, small_data[0]))
