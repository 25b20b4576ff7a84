from dataclasses import replace

import numpy as np
import pytest

from config import Config
from errors import ConfigError, DivergenceError, EmptyDatasetError, ShapeError
from TQ.tools import Dataset
from XunLian.loss import CurriculumSchedule, curriculum_loss, weighted_l1_loss
from XunLian.optim import SGD, Momentum, make_optimizer
from XunLian.train import LOG_COLUMNS, TrainConfig, batch_loss, local_targets, train, validate
from YuCe.heads import NetModel


def test_weighted_l1_example():
    target = np.zeros((1, 2, 4))
    pred = np.ones((1, 2, 4))
    assert float(weighted_l1_loss(target, pred)) == pytest.approx(6.0)
    assert float(weighted_l1_loss(target, pred, lam=[1, 0, 0, 0])) == pytest.approx(1.0)


def test_velocity_error_is_ignored_by_default():
    target = np.zeros((3, 4))
    pred = np.zeros((3, 4))
    pred[:, 3] = 5.0
    assert float(weighted_l1_loss(target, pred)) == 0.0


def test_curriculum_loss_only_sees_first_steps():
    target = np.zeros((2, 5, 4))
    pred = np.zeros((2, 5, 4))
    pred[:, 3:, 0] = 10.0
    assert float(curriculum_loss(target, pred, h=3)) == 0.0
    assert float(curriculum_loss(target, pred, h=4)) == pytest.approx(10.0 / 4)
    assert float(curriculum_loss(target, pred)) == pytest.approx(float(weighted_l1_loss(target, pred)))


def test_loss_argument_errors():
    with pytest.raises(ConfigError):
        curriculum_loss(np.zeros((5, 4)), np.zeros((5, 4)), h=6)
    with pytest.raises(ConfigError):
        curriculum_loss(np.zeros((5, 4)), np.zeros((5, 4)), h=0)
    with pytest.raises(ShapeError):
        weighted_l1_loss(np.zeros((5, 4)), np.zeros((4, 4)))
    with pytest.raises(ConfigError):
        weighted_l1_loss(np.zeros((5, 4)), np.zeros((5, 4)), lam=[1, 1, -1, 0])


def test_curriculum_schedule():
    schedule = CurriculumSchedule(h0=1, epochs_per_increment=2, h_max=5)
    horizons = [schedule.horizon(e) for e in range(12)]
    assert horizons[:4] == [1, 1, 2, 2]
    assert all(a <= b for a, b in zip(horizons, horizons[1:]))
    assert max(horizons) == 5
    assert replace(schedule, enabled=False).horizon(0) == 5
    with pytest.raises(ConfigError):
        CurriculumSchedule(h0=0)


def test_optimizers():
    params = {'w': np.array([1.0, 2.0])}
    grads = {'w': np.array([0.5, -0.5])}
    np.testing.assert_allclose(SGD(0.1).step(params, grads)['w'], [0.95, 2.05])
    opt = Momentum(0.1, momentum=0.5)
    first = opt.step(params, grads)
    second = opt.step(first, grads)
    np.testing.assert_allclose(second['w'], first['w'] - 0.1 * 1.5 * grads['w'])
    restored = make_optimizer('momentum', 0.1, 0.5)
    restored.load_state(opt.state())
    np.testing.assert_array_equal(restored.velocity['w'], opt.velocity['w'])
    with pytest.raises(ConfigError):
        make_optimizer('adam', 0.1)


def test_train_config_presets():
    assert TrainConfig.from_dict(Config.TRAIN).epochs == 350
    assert TrainConfig.from_dict(Config.TRAIN, preset='long').epochs == 1500
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def _cfg(**kw):
    base = dict(epochs=3, lr=1e-3, optimizer='momentum', batch_size=4, seed=0, eval_every=1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.mark.parametrize('head', ['pcmp', 'lstm'])
def test_batch_gradient_matches_finite_difference(head, tiny_net, tiny_dataset, dyn):
    model = NetModel.initialize(head, tiny_net)
    targets = local_targets(tiny_dataset)
    lam = np.array([1.0, 1.0, 4.0, 0.0])

    def loss_of(params):
        return batch_loss(model, params, tiny_dataset.obs, tiny_dataset.context, targets, dyn, lam, 4)

    _, grads = loss_of(model.params)
    eps = 1e-6
    for name in ('mlp.W1', 'lstm.Wx_o'):
        idx = (1, 2)
        hi = {**model.params, name: model.params[name].copy()}
        lo = {**model.params, name: model.params[name].copy()}
        hi[name][idx] += eps
        lo[name][idx] -= eps
        numeric = (loss_of(hi)[0] - loss_of(lo)[0]) / (2 * eps)
        assert grads[name][idx] == pytest.approx(numeric, rel=1e-4, abs=1e-9)


def test_zero_learning_rate_keeps_parameters(tiny_net, tiny_dataset, dyn):
    initial = NetModel.initialize('pcmp', tiny_net)
    result = train(tiny_dataset, 'pcmp', _cfg(lr=0.0), dyn, net=tiny_net)
    assert all(np.array_equal(result.model.params[k], initial.params[k]) for k in initial.params)
    losses = result.history['train_loss'].to_numpy()
    np.testing.assert_allclose(losses, losses[0], rtol=1e-12)


def test_training_is_reproducible(tiny_net, tiny_dataset, dyn):
    a = train(tiny_dataset, 'lstm', _cfg(), dyn, net=tiny_net)
    b = train(tiny_dataset, 'lstm', _cfg(), dyn, net=tiny_net)
    assert all(np.array_equal(a.model.params[k], b.model.params[k]) for k in a.model.params)
    np.testing.assert_array_equal(a.history['train_loss'], b.history['train_loss'])


def test_resume_matches_uninterrupted_run(tiny_net, tiny_dataset, dyn):
    full = train(tiny_dataset, 'pcmp', _cfg(epochs=4), dyn, net=tiny_net)
    half = train(tiny_dataset, 'pcmp', _cfg(epochs=2), dyn, net=tiny_net)
    resumed = train(tiny_dataset, 'pcmp', _cfg(epochs=4), dyn, model=half.model, start_epoch=2,
                    optimizer_state=half.optimizer_state, history=half.history)
    assert resumed.epochs_done == 4
    assert all(np.array_equal(full.model.params[k], resumed.model.params[k]) for k in full.model.params)
    np.testing.assert_array_equal(full.history['train_loss'], resumed.history['train_loss'])
    assert resumed.history['epoch'].tolist() == [0, 1, 2, 3]


def test_training_reduces_loss(tiny_net, tiny_dataset, dyn):
    result = train(tiny_dataset, 'pcmp', _cfg(epochs=40, lr=5e-3, batch_size=8), dyn, net=tiny_net)
    losses = result.history['train_loss']
    assert losses.iloc[-1] < losses.iloc[0]


@pytest.mark.slow
def test_pcmp_overfits_small_dataset(tiny_net, dataset_factory, dyn):
    data = dataset_factory(count=10, seed=7)
    initial_ade, _, _ = validate(NetModel.initialize('pcmp', tiny_net), data, dyn)
    result = train(data, 'pcmp', _cfg(epochs=1500, lr=1e-2, batch_size=10), dyn, net=tiny_net)
    losses = result.history['train_loss'].to_numpy()
    assert np.all(np.isfinite(losses))
    assert losses[-150:].mean() < losses[:150].mean()
    assert losses[-1] < 0.25 * losses[0]
    ade, _, _ = validate(result.model, data, dyn)
    assert ade < min(initial_ade, 0.01)


def test_validation_and_callback(tiny_net, dataset_factory, dyn):
    train_set, val_set = dataset_factory(seed=0), dataset_factory(count=4, seed=1)
    seen = []
    schedule = CurriculumSchedule(h0=1, epochs_per_increment=1, h_max=4)
    result = train(train_set, 'pcmp', _cfg(epochs=3, eval_every=2), dyn, net=tiny_net, schedule=schedule,
                   val=val_set, on_epoch=lambda epoch, model, state, history: seen.append((epoch, len(history))))
    history = result.history
    assert list(history.columns) == LOG_COLUMNS
    assert history['horizon'].tolist() == [1, 2, 3]
    assert np.isnan(history['val_ade'].iloc[0])
    assert np.isfinite(history['val_ade'].iloc[1])
    assert np.isfinite(history['val_iou'].iloc[2])
    assert seen == [(0, 1), (1, 2), (2, 3)]


def test_non_finite_targets_diverge(tiny_net, tiny_dataset, dyn):
    broken = Dataset(tiny_dataset.obs, tiny_dataset.context, np.full_like(tiny_dataset.target, np.nan),
                     tiny_dataset.strata)
    initial = NetModel.initialize('pcmp', tiny_net)
    with pytest.raises(DivergenceError) as info:
        train(broken, 'pcmp', _cfg(), dyn, net=tiny_net)
    assert info.value.epoch == 0
    assert np.array_equal(info.value.last_good.params['mlp.W0'], initial.params['mlp.W0'])


def test_empty_and_mismatched_datasets(tiny_net, tiny_dataset, dataset_factory, dyn):
    with pytest.raises(EmptyDatasetError):
        train(tiny_dataset.subset([]), 'pcmp', _cfg(), dyn, net=tiny_net)
    with pytest.raises(ShapeError):
        train(dataset_factory(horizon=5), 'pcmp', _cfg(), dyn, net=tiny_net)
    with pytest.raises(ConfigError):
        train(tiny_dataset, 'ctrv', _cfg(), dyn, net=tiny_net)
