"""
闭环仿真：控制器 → 自行车模型 RK4 积分，100 Hz。

轨迹文件为 CSV，前几行以 '# key: value' 记录元信息，之后是
t,x,y,theta,v,delta,a 列；delta/a 是从该时刻状态出发施加的控制，最后一行为空。
"""
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd

from config import require
from DongLi.integrate import IntegratorConfig, step
from DongLi.models import BicycleModel, BicycleParams, ControlBounds
from errors import DataError, OffTrackError
from FangZhen.controllers import CONTROLLERS, pure_pursuit, stanley

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['t', 'x', 'y', 'theta', 'v', 'delta', 'a']
META_KEYS = ('raceline', 'controller', 'speed', 'seed')


@dataclass(eq=False)
class Trace:
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class SimParams:
    lookahead: float = 0.8
    stanley_gain: float = 2.0
    speed_gain: float = 4.0
    softening: float = 0.1
    # 横向偏移超过 off_track_factor × 赛道宽度即判为驶出
    off_track_factor: float = 2.0

    def __post_init__(self):
        require(self.lookahead > 0, "前视距离必须为正")
        require(self.stanley_gain >= 0 and self.speed_gain >= 0, "控制增益不能为负")


def make_controller(name, raceline, sim, wheelbase, speed_scale, bounds):
    require(name in CONTROLLERS, f"未知控制器 '{name}'，可选 {CONTROLLERS}")
    if name == 'pure_pursuit':
        return partial(pure_pursuit, raceline=raceline, lookahead_m=sim.lookahead, wheelbase=wheelbase,
                       speed_gain=sim.speed_gain, speed_scale=speed_scale, bounds=bounds)
    return partial(stanley, raceline=raceline, gain_k=sim.stanley_gain, wheelbase=wheelbase,
                   speed_gain=sim.speed_gain, speed_scale=speed_scale, softening=sim.softening,
                   bounds=bounds)


def simulate(track, raceline, controller, speed_scale, duration, seed, sim=None, bicycle=None,
             integrator=None, bounds=None):
    """
    在赛道上闭环仿真一条轨迹。

    起点在路线上随机选取（由 seed 决定），初速度为该点目标速度。

    :param controller: 'pure_pursuit'、'stanley' 或可调用对象 state -> [δ, a]
    :param speed_scale: 目标速度缩放系数
    :param duration: 仿真时长（秒）
    :return: Trace
    """
    sim = sim or SimParams()
    bicycle = bicycle or BicycleParams()
    integrator = integrator or IntegratorConfig()
    bounds = bounds or ControlBounds()
    require(duration >= 0, f"仿真时长不能为负，当前 {duration}")
    model = BicycleModel(bicycle)
    name = controller if isinstance(controller, str) else getattr(controller, '__name__', 'custom')
    if isinstance(controller, str):
        controller = make_controller(controller, raceline, sim, bicycle.wheelbase, speed_scale, bounds)

    rng = np.random.default_rng(seed)
    s0 = rng.uniform()
    pos = raceline.path.evaluate(s0)
    state = np.array([pos[0], pos[1], float(raceline.path.heading(s0)),
                      speed_scale * float(raceline.speed_at(s0))])
    n_steps = int(round(duration / integrator.ts))
    limit = sim.off_track_factor * track.width
    states = np.empty((n_steps + 1, 4))
    controls = np.empty((n_steps, 2))
    states[0] = state
    for k in range(n_steps):
        u = np.asarray(controller(state), dtype=np.float64)
        state = step(state, u, model, integrator)
        _, d = track.to_frenet(state[:2])
        if abs(float(d)) > limit:
            raise OffTrackError(k + 1, float(d), limit)
        controls[k] = u
        states[k + 1] = state
    meta = {'raceline': raceline.label, 'controller': name, 'speed': float(speed_scale), 'seed': int(seed)}
    logger.debug(f"仿真完成 {meta}: {n_steps} 步")
    return Trace(t=np.arange(n_steps + 1) * integrator.ts, states=states, controls=controls, meta=meta)


def save_trace(trace, path):
    padded = np.vstack([trace.controls, np.full((1, 2), np.nan)])
    df = pd.DataFrame(np.column_stack([trace.t, trace.states, padded]), columns=TRACE_COLUMNS)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        for key in META_KEYS:
            if key in trace.meta:
                f.write(f"# {key}: {trace.meta[key]}\n")
        df.to_csv(f, index=False)
    return path


def load_trace(path):
    meta = {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for line in f:
                if not line.startswith('#'):
                    break
                key, _, value = line[1:].partition(':')
                meta[key.strip()] = value.strip()
    except FileNotFoundError:
        raise DataError(f"轨迹文件不存在: {path}")
    if 'speed' in meta:
        meta['speed'] = float(meta['speed'])
    if 'seed' in meta:
        meta['seed'] = int(meta['seed'])
    df = pd.read_csv(path, comment='#', float_precision='round_trip')
    missing = [c for c in TRACE_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"轨迹文件 {path} 缺少列 {missing}")
    values = df[TRACE_COLUMNS].to_numpy(dtype=np.float64)
    return Trace(t=values[:, 0], states=values[:, 1:5], controls=values[:-1, 5:7], meta=meta)
