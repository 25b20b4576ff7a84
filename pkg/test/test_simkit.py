import math

import numpy as np
import pandas as pd
import pytest

from DongLi.feasibility import is_feasible
from DongLi.integrate import IntegratorConfig
from DongLi.models import BicycleModel
from errors import ConfigError, DataError, EmptyDatasetError, OffTrackError
from FangZhen.controllers import pure_pursuit, pure_pursuit_steer, stanley
from FangZhen.generate import GenerationConfig, generate, generate_traces
from FangZhen.geometry import wrap_angle, wrap_progress
from FangZhen.raceline import build_raceline, speed_profile
from FangZhen.simulate import SimParams, Trace, load_trace, save_trace, simulate
from FangZhen.track import build_track, load_track, save_track
from TQ.tools import Dataset, load_dataset, save_dataset, split, window

L = 0.3302


@pytest.fixture(scope='module')
def straight_track():
    return build_track({'kind': 'straight', 'length': 50.0, 'width': 2.4, 'spacing': 0.5})


# --- 赛道与路线 ---

def test_circuit_closes_with_analytic_curvature():
    track = build_track({'kind': 'circuit', 'straights': [20.0, 10.0], 'radii': [8.0, 4.0, 6.0, 5.0],
                         'width': 2.4, 'spacing': 0.1})
    straights = 20.0 + 10.0 + (20 + 8 - 4 - 6 + 5) + (10 + 8 + 4 - 6 - 5)
    expected = straights + math.pi / 2 * (8 + 4 + 6 + 5)
    assert track.length == pytest.approx(expected, rel=1e-3)
    levels = np.array([0.0, 1 / 8, 1 / 4, 1 / 6, 1 / 5])
    nearest = np.abs(track.curvature[:, None] - levels[None, :]).min(axis=1)
    assert np.all(nearest < 1e-12)
    assert all(np.any(np.isclose(track.curvature, k)) for k in levels)
    assert np.linalg.norm(track.points[-1] - track.points[0]) < 0.2


def test_circuit_that_cannot_close():
    with pytest.raises(ConfigError):
        build_track({'kind': 'circuit', 'straights': [1.0, 1.0], 'radii': [2.0, 8.0, 8.0, 2.0]})
    with pytest.raises(ConfigError):
        build_track({'kind': 'hexagon'})


def test_straight_track_frenet(straight_track):
    s, d = straight_track.to_frenet(np.array([[25.0, 0.7], [10.0, -0.3]]))
    np.testing.assert_allclose(s, [0.5, 0.2], atol=1e-9)
    np.testing.assert_allclose(d, [0.7, -0.3], atol=1e-9)
    assert not straight_track.closed


def test_wrapping():
    np.testing.assert_allclose(wrap_progress([0.9, -0.6, 0.5, 0.1]), [-0.1, 0.4, -0.5, 0.1])
    assert float(wrap_angle(3 * math.pi / 2)) == pytest.approx(-math.pi / 2)


def test_track_file(tmp_path, circle_track):
    loaded = load_track(save_track(circle_track, tmp_path / 'track.csv'))
    assert len(loaded) == len(circle_track)
    assert loaded.length == pytest.approx(circle_track.length)
    with pytest.raises(DataError):
        load_track(tmp_path / 'missing.csv')


def test_offset_racelines_on_circle(circle_track):
    left = build_raceline(circle_track, 'left')
    right = build_raceline(circle_track, 'right')
    np.testing.assert_allclose(np.linalg.norm(left.points, axis=1), 10.0 - 0.3 * 1.2, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(right.points, axis=1), 10.0 + 0.3 * 1.2, atol=1e-9)
    assert left.path.length < right.path.length
    with pytest.raises(ConfigError):
        build_raceline(circle_track, 'middle')


def test_race_line_cuts_corners():
    track = build_track({'kind': 'stadium', 'straights': [20.0], 'radii': [6.0], 'width': 2.4, 'spacing': 0.2})
    race = build_raceline(track, 'race', offset_fraction=0.3, race_fraction=0.7)
    assert np.max(np.abs(race.offsets)) == pytest.approx(0.7 * 1.2)
    corner = track.curvature > 0
    assert np.all(race.offsets[corner] > 0.3 * 1.2)


def test_speed_profile_limits():
    flat = speed_profile(np.zeros(20), np.full(20, 0.5), v_max=7.0, lat_acc=6.0, lon_acc=4.0)
    np.testing.assert_allclose(flat, 7.0)
    kappa = np.concatenate([np.zeros(60), np.full(40, 1.0), np.zeros(60)])
    ds = np.full(kappa.size, 0.1)
    v = speed_profile(kappa, ds, v_max=7.0, lat_acc=6.0, lon_acc=4.0)
    assert np.all(v <= np.minimum(7.0, np.sqrt(6.0 / np.maximum(kappa, 1e-9))) + 1e-12)
    nxt = np.roll(v, -1)
    assert np.all(np.abs(nxt ** 2 - v ** 2) <= 2 * 4.0 * ds + 1e-9)
    assert v[60:100].max() == pytest.approx(math.sqrt(6.0))


# --- 控制器 ---

def test_pure_pursuit_on_circle_steers_for_radius(circle_track):
    assert pure_pursuit_steer(math.asin(0.1), 2.0, L) == pytest.approx(math.atan(L / 10.0))
    center = build_raceline(circle_track, 'center')
    u = pure_pursuit(np.array([10.0, 0.0, math.pi / 2, 2.0]), center, 0.8, wheelbase=L)
    assert u[0] == pytest.approx(math.atan(L / 10.0), abs=1e-5)


def test_stanley_cross_track_term(straight_track):
    center = build_raceline(straight_track, 'center')
    u = stanley(np.array([10.0, -1.0, 0.0, 1.0]), center, gain_k=1.0, softening=0.0, speed_gain=0.0)
    assert u[0] == pytest.approx(math.pi / 4, abs=1e-9)
    assert u[1] == 0.0


# --- 仿真 ---

def test_simulation_is_deterministic(circle_track):
    center = build_raceline(circle_track, 'center')
    a = simulate(circle_track, center, 'pure_pursuit', 0.8, 1.0, seed=3)
    b = simulate(circle_track, center, 'pure_pursuit', 0.8, 1.0, seed=3)
    assert len(a) == 101
    np.testing.assert_array_equal(a.states, b.states)
    assert a.meta == {'raceline': 'center', 'controller': 'pure_pursuit', 'speed': 0.8, 'seed': 3}
    _, d = circle_track.to_frenet(a.states[:, :2])
    assert np.max(np.abs(d)) < circle_track.half_width


def test_driving_straight_leaves_circle():
    track = build_track({'kind': 'circle', 'radius': 6.0, 'width': 2.4, 'spacing': 0.2})
    center = build_raceline(track, 'center')
    with pytest.raises(OffTrackError):
        simulate(track, center, lambda state: [0.0, 0.0], 1.0, 5.0, seed=0)


@pytest.mark.parametrize('controller, method', [('pure_pursuit', 'euler'), ('stanley', 'rk4'),
                                                ('pure_pursuit', 'rk4')])
def test_simulated_traces_are_feasible_with_logged_controls(circle_track, controller, method):
    integrator = IntegratorConfig(method=method)
    trace = simulate(circle_track, build_raceline(circle_track, 'left'), controller, 0.8, 1.0, seed=5,
                     integrator=integrator)
    result = is_feasible(trace.states, BicycleModel(), integrator)
    assert result.feasible, result.violation
    np.testing.assert_allclose(result.witnesses, trace.controls, rtol=0, atol=1e-9)


def test_pure_pursuit_settles_on_circle_radius(circle_track):
    center = build_raceline(circle_track, 'center')
    trace = simulate(circle_track, center, 'pure_pursuit', 0.5, 8.0, seed=1)
    radius = np.linalg.norm(trace.states[len(trace) // 2:, :2], axis=1)
    assert np.all(np.abs(radius - 10.0) <= 0.02 * 10.0)
    assert radius.mean() == pytest.approx(10.0, rel=0.02)


def test_trace_file(tmp_path, circle_track):
    center = build_raceline(circle_track, 'center')
    trace = simulate(circle_track, center, 'stanley', 1.0, 0.2, seed=1, sim=SimParams(softening=0.1))
    trace.meta['trace'] = 0
    loaded = load_trace(save_trace(trace, tmp_path / 'trace.csv'))
    np.testing.assert_array_equal(loaded.states, trace.states)
    np.testing.assert_array_equal(loaded.controls, trace.controls)
    assert loaded.meta['controller'] == 'stanley'
    assert loaded.meta['speed'] == 1.0


# --- 样本与划分 ---

def _line_trace(count=35):
    t = np.arange(count) * 0.01
    states = np.column_stack([t, np.zeros(count), np.zeros(count), np.ones(count)])
    meta = {'raceline': 'center', 'controller': 'pure_pursuit', 'speed': 1.0, 'trace': 7}
    return Trace(t=t, states=states, controls=np.zeros((count - 1, 2)), meta=meta)


def test_window_cuts_disjoint_samples():
    samples = window(_line_trace(), l=3, n=4, noise_sigma=0.0)
    assert len(samples) == 5
    np.testing.assert_array_equal(samples[1].obs, _line_trace().states[7:10])
    np.testing.assert_array_equal(samples[1].target, _line_trace().states[10:14])
    np.testing.assert_array_equal(samples[0].context, [0.0])
    assert samples[4].meta['window'] == 4
    assert window(_line_trace(6), l=3, n=4) == []


def test_window_noise_leaves_heading_clean():
    samples = window(_line_trace(), l=3, n=4, noise_sigma=0.5, rng=np.random.default_rng(0))
    obs = samples[0].obs
    np.testing.assert_array_equal(obs[:, 2], 0.0)
    assert np.any(obs[:, 0] != _line_trace().states[:3, 0])
    np.testing.assert_array_equal(samples[0].target, _line_trace().states[3:7])


def test_stratified_split(dataset_factory):
    data = dataset_factory(count=20)
    train, val, test = split(data, (0.8, 0.1, 0.1), seed=4)
    assert (len(train), len(val), len(test)) == (16, 2, 2)
    assert val.stratum_counts() == {'center/pure_pursuit/1.0': 1, 'left/pure_pursuit/1.0': 1}
    traces = sorted([*train.strata['trace'], *val.strata['trace'], *test.strata['trace']])
    assert traces == list(range(20))
    again = split(data, (0.8, 0.1, 0.1), seed=4)
    assert val.strata['trace'].tolist() == again[1].strata['trace'].tolist()
    with pytest.raises(EmptyDatasetError):
        split(data.subset([]))
    with pytest.raises(ConfigError):
        split(data, (0.5, 0.1, 0.1))


def test_split_assigns_windows_of_one_trace_independently():
    samples = window(_line_trace(70), l=3, n=4, noise_sigma=0.0)
    data = Dataset.from_samples(samples, 3, 4, 1)
    train, val, test = split(data, (0.8, 0.1, 0.1), seed=2)
    assert (len(train), len(val), len(test)) == (8, 1, 1)
    for part in (train, val, test):
        assert part.strata['trace'].tolist() == [7] * len(part)
    starts = np.concatenate([part.obs[:, 0, 0] for part in (train, val, test)])
    np.testing.assert_allclose(np.sort(starts), 0.07 * np.arange(10), atol=1e-12)


def test_filter(tiny_dataset):
    assert len(tiny_dataset.filter(raceline='left')) == 4
    assert len(tiny_dataset.filter(raceline=['left', 'center'], speed=1.0)) == 8
    assert len(tiny_dataset.filter(controller='stanley')) == 0
    with pytest.raises(DataError):
        tiny_dataset.filter(weather='rain')


def test_dataset_file(tmp_path, tiny_dataset):
    loaded = load_dataset(save_dataset(tiny_dataset, tmp_path / 'train.csv'))
    np.testing.assert_array_equal(loaded.obs, tiny_dataset.obs)
    np.testing.assert_array_equal(loaded.target, tiny_dataset.target)
    assert loaded.strata['raceline'].tolist() == tiny_dataset.strata['raceline'].tolist()
    pd.DataFrame({'x': [1]}).to_csv(tmp_path / 'bad.csv', index=False)
    with pytest.raises(DataError):
        load_dataset(tmp_path / 'bad.csv')


def _small_generation(**kw):
    base = dict(track={'kind': 'circle', 'radius': 6.0, 'width': 2.4, 'spacing': 0.2},
                racelines=('center', 'left'), controllers=('pure_pursuit',), speeds=(0.5,),
                duration=3.0, obs_len=5, horizon=10)
    base.update(kw)
    return GenerationConfig(**base)


def test_generate_small_dataset():
    track, traces, splits = generate(_small_generation())
    assert len(traces) == 2
    assert [len(t) for t in traces] == [301, 301]
    assert [len(splits[k]) for k in ('train', 'val', 'test')] == [32, 4, 4]
    np.testing.assert_allclose(splits['train'].context, 1 / 6, atol=1e-3)
    assert isinstance(splits['test'], Dataset)


def test_generation_does_not_depend_on_jobs():
    cfg = _small_generation(duration=1.0)
    _, serial = generate_traces(cfg, jobs=1)
    _, parallel = generate_traces(cfg, jobs=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.states, b.states)
    assert serial[0].meta['seed'] != serial[1].meta['seed']


def test_generation_config_validation():
    with pytest.raises(ConfigError):
        _small_generation(racelines=('zigzag',))
    with pytest.raises(ConfigError):
        _small_generation(race_fraction=0.2)
