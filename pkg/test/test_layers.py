import json

import numpy as np
import pytest

from errors import CheckpointError, ConfigError, ShapeError
from ShenJing import tape as T
from ShenJing.checkpoint import load_checkpoint, save_checkpoint
from ShenJing.layers import (BoundedActivation, NetworkConfig, bound_controls, init_params, lstm_forward,
                             mlp_forward)


def test_parameter_shapes(tiny_net):
    params = init_params(tiny_net, 'pcmp')
    assert params['lstm.Wx_i'].shape == (5, 4)
    assert params['lstm.Wh_f'].shape == (4, 4)
    assert params['mlp.W0'].shape == (4, 8)
    assert params['mlp.W1'].shape == (8, 2 * 4)
    assert init_params(tiny_net, 'lstm')['mlp.W1'].shape == (8, 4 * 4)


def test_init_is_seeded(tiny_net):
    a, b = init_params(tiny_net, 'pcmp'), init_params(tiny_net, 'pcmp')
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = init_params(tiny_net, 'pcmp', seed=7)
    assert not np.array_equal(a['mlp.W0'], c['mlp.W0'])


def test_bad_network_config():
    with pytest.raises(ConfigError):
        NetworkConfig(hidden_size=0)


def test_forward_shapes(tiny_net):
    params = init_params(tiny_net, 'pcmp')
    inputs = np.random.default_rng(0).normal(size=(6, 3, 5))
    h, hidden = lstm_forward(params, inputs)
    assert h.shape == (6, 4)
    assert len(hidden) == 3
    assert mlp_forward(params, h).shape == (6, 8)


def test_lstm_rejects_wrong_width(tiny_net):
    params = init_params(tiny_net, 'pcmp')
    with pytest.raises(ShapeError):
        lstm_forward(params, np.zeros((2, 3, 7)))
    with pytest.raises(ShapeError):
        lstm_forward(params, np.zeros((3, 5)))


def test_bounded_controls_stay_inside():
    act = BoundedActivation()
    raw = np.array([[-1e6, 1e6], [0.0, 0.0], [3.0, -3.0]])
    out = bound_controls(raw, act)
    assert np.all(np.abs(out) <= act.omega)
    np.testing.assert_allclose(out[1], [0.0, 0.0])
    np.testing.assert_allclose(out[2], act.omega * np.tanh([3.0, -3.0]))


def test_bounded_activation_requires_positive_scale():
    with pytest.raises(ConfigError):
        BoundedActivation(omega=np.array([1.0, 0.0]))


def test_network_gradient_matches_finite_difference(tiny_net):
    params = init_params(tiny_net, 'pcmp')
    inputs = np.random.default_rng(1).normal(size=(2, 3, 5))

    def loss_of(p):
        h, _ = lstm_forward(p, inputs)
        return T.reduce_sum(T.square(mlp_forward(p, h)))

    tape = T.Tape()
    variables = {k: tape.variable(v, k) for k, v in params.items()}
    grads = tape.backward(loss_of(variables)).named(variables)
    for name in ('lstm.Wx_g', 'lstm.b_f', 'mlp.W1'):
        idx = (0,) * params[name].ndim
        eps = 1e-6
        hi = {**params, name: params[name].copy()}
        lo = {**params, name: params[name].copy()}
        hi[name][idx] += eps
        lo[name][idx] -= eps
        numeric = (float(loss_of(hi)) - float(loss_of(lo))) / (2 * eps)
        assert grads[name][idx] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


def test_checkpoint_roundtrip_is_exact(tmp_path, tiny_net):
    params = init_params(tiny_net, 'lstm')
    velocity = {'velocity.mlp.W0': np.full((4, 8), 0.1)}
    path = save_checkpoint(tmp_path / 'ck' / 'model.json', params, {'head': 'lstm', 'epochs_done': 3}, velocity)
    loaded, meta, optimizer = load_checkpoint(path)
    assert meta == {'head': 'lstm', 'epochs_done': 3}
    assert set(loaded) == set(params)
    assert all(np.array_equal(loaded[k], params[k]) for k in params)
    np.testing.assert_array_equal(optimizer['velocity.mlp.W0'], velocity['velocity.mlp.W0'])


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{not json', encoding='utf-8')
    with pytest.raises(CheckpointError):
        load_checkpoint(broken)
    other = tmp_path / 'other.json'
    other.write_text(json.dumps({'format': 'something-else'}), encoding='utf-8')
    with pytest.raises(CheckpointError):
        load_checkpoint(other)
    wrong = tmp_path / 'wrong.json'
    wrong.write_text(json.dumps({'format': 'pcmp-checkpoint', 'version': 1,
                                 'params': {'w': {'shape': [2, 2], 'data': [1.0]}}}), encoding='utf-8')
    with pytest.raises(CheckpointError):
        load_checkpoint(wrong)
