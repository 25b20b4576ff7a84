import numpy as np
import pandas as pd
import pytest

from app import create_app
from DongLi.integrate import DynamicsConfig, IntegratorConfig, rollout
from DongLi.models import BicycleModel
from FangZhen.track import build_track
from ShenJing.layers import NetworkConfig
from TQ.tools import Dataset


def make_dataset(count=8, obs_len=3, horizon=4, seed=0):
    """由恒定控制的自行车模型轨迹构成的小数据集，分层交替为 center / left。"""
    rng = np.random.default_rng(seed)
    model, cfg = BicycleModel(), IntegratorConfig()
    obs, target, context, rows = [], [], [], []
    for i in range(count):
        start = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-np.pi, np.pi), rng.uniform(1, 3)])
        controls = np.tile([rng.uniform(-0.3, 0.3), rng.uniform(-1, 1)], (obs_len + horizon - 1, 1))
        states = np.vstack([start, rollout(start, controls, model, cfg)])
        obs.append(states[:obs_len])
        target.append(states[obs_len:])
        context.append([rng.uniform(-0.1, 0.1)])
        rows.append({'raceline': 'center' if i % 2 == 0 else 'left', 'controller': 'pure_pursuit',
                     'speed': 1.0, 'trace': i})
    return Dataset(np.array(obs), np.array(context), np.array(target), pd.DataFrame(rows))


@pytest.fixture
def dyn():
    return DynamicsConfig()


@pytest.fixture
def tiny_net():
    return NetworkConfig(hidden_size=4, mlp_widths=(8,), obs_len=3, horizon=4, context_size=1, init_seed=0)


@pytest.fixture
def tiny_dataset():
    return make_dataset()


@pytest.fixture
def dataset_factory():
    return make_dataset


@pytest.fixture(scope='session')
def circle_track():
    return build_track({'kind': 'circle', 'radius': 10.0, 'width': 2.4, 'spacing': 0.25})


SMALL_CONFIG = {
    'DATA': {
        'track': {'kind': 'circle', 'radius': 6.0, 'width': 2.4, 'spacing': 0.2},
        'racelines': ['center', 'left'],
        'controllers': ['pure_pursuit'],
        'speeds': [0.5],
        'duration': 3.0,
        'obs_len': 5,
        'horizon': 10,
    },
    'NETWORK': {'hidden_size': 4, 'mlp_widths': [8], 'obs_len': 5, 'horizon': 10},
    'TRAIN': {'epochs': 2, 'batch_size': 16, 'eval_every': 1},
}


@pytest.fixture(scope='module')
def app(tmp_path_factory):
    log_dir = tmp_path_factory.mktemp('log')
    return create_app(test_config={**SMALL_CONFIG, 'LOG_FILE': str(log_dir / 'app.log')})


@pytest.fixture(scope='module')
def runner(app):
    return app.test_cli_runner()


@pytest.fixture(scope='module')
def data_dir(runner, tmp_path_factory):
    out = tmp_path_factory.mktemp('data')
    result = runner.invoke(args=['gen-data', '--out', str(out)])
    assert result.exit_code == 0, result.output
    return out
