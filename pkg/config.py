import os
import math

from errors import ConfigError


class Config:
    SECRET_KEY = os.environ.get('SECRET_KEY') or 'your-secret-key'
    LOG_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'instance', 'app.log')
    LOG_MAX_BYTES = int(os.environ.get('PCMP_LOG_MAX_BYTES', 1_000_000))
    LOG_BACKUP_COUNT = 1
    # JSON 运行配置文件路径，未设置时只用下面的默认值
    RUN_CONFIG_FILE = os.environ.get('PCMP_CONFIG')
    JOBS = int(os.environ.get('PCMP_JOBS', 1))

    DYNAMICS = {
        'wheelbase': 0.3302,
        'reference_offset': True,
        'method': 'rk4',
        'ts': 0.01,
        'delta_max': 7 * math.pi / 16,
        'a_max': 20.0,
        'tol_feas': 1e-6,
        'tol_inversion': 1e-8,
    }
    NETWORK = {
        'hidden_size': 16,
        'mlp_widths': [64],
        'obs_len': 10,
        'horizon': 60,
        'context_size': 1,
        'init_seed': 0,
    }
    TRAIN = {
        'epochs': 350,
        'long_epochs': 1500,
        'lr': 1e-3,
        'optimizer': 'momentum',
        'momentum': 0.9,
        'batch_size': 64,
        'seed': 0,
        'weights': [1.0, 1.0, 4.0, 0.0],
        'eval_every': 10,
    }
    CURRICULUM = {
        'enabled': False,
        'h0': 1,
        'epochs_per_increment': 2,
    }
    DATA = {
        'track': {
            'kind': 'circuit',
            'straights': [20.0, 10.0],
            'radii': [8.0, 4.0, 6.0, 5.0],
            'width': 2.4,
            'spacing': 0.1,
        },
        'racelines': ['center', 'left', 'right', 'race'],
        'controllers': ['pure_pursuit', 'stanley'],
        'speeds': [0.75, 0.85, 1.0],
        'offset_fraction': 0.3,
        'v_max': 7.0,
        'lat_acc': 6.0,
        'lon_acc': 4.0,
        'duration': 60.0,
        'lookahead': 0.8,
        'stanley_gain': 2.0,
        'stanley_softening': 0.1,
        'speed_gain': 4.0,
        'race_fraction': 0.7,
        'race_smoothing': 4.0,
        'race_lat_gain': 1.2,
        'obs_len': 10,
        'horizon': 60,
        'noise_sigma': 0.1,
        'context_lookahead': [1.0],
        'ratios': [0.8, 0.1, 0.1],
        'seed': 0,
    }
    CONFORMAL = {
        'delta': 0.05,
        'mode': 'single-step',
        'region': 'rot-rect',
    }
    METRICS = {
        'length': 0.58,
        'width': 0.31,
    }


SECTIONS = ('DYNAMICS', 'NETWORK', 'TRAIN', 'CURRICULUM', 'DATA', 'CONFORMAL', 'METRICS')


def merge_section(defaults, overrides, section='', strict=True):
    """
    按键合并一个配置段，嵌套字典逐层合并。配置段的顶层键必须已知；嵌套字典
    （例如赛道参数随 kind 变化）允许新键。

    :param defaults: 默认配置字典
    :param overrides: 用户提供的覆盖值
    :param section: 配置段名称，用于错误信息
    :param strict: 为 True 时未知键报 ConfigError
    :return: 合并后的新字典
    """
    if overrides is None:
        return dict(defaults)
    if not isinstance(overrides, dict):
        raise ConfigError(f"配置段 {section} 必须是 JSON 对象")
    merged = dict(defaults)
    for key, value in overrides.items():
        if strict and key not in defaults:
            raise ConfigError(f"配置段 {section} 中存在未知键 '{key}'")
        if isinstance(defaults.get(key), dict) and isinstance(value, dict):
            merged[key] = merge_section(defaults[key], value, f"{section}.{key}", strict=False)
        else:
            merged[key] = value
    return merged


def require(condition, message):
    if not condition:
        raise ConfigError(message)
