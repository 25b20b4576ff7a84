"""
数据集生成流水线：赛道 → 路线 → 每个 (路线, 控制器, 速度) 单元闭环仿真 →
切窗口 → 分层划分。

每个单元的仿真种子和噪声随机数流都由 (seed, 单元编号) 派生，单元之间互不
依赖，可以并行。
"""
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from config import require
from DongLi.integrate import IntegratorConfig
from DongLi.models import BicycleParams, ControlBounds
from FangZhen.controllers import CONTROLLERS
from FangZhen.raceline import LABELS, build_raceline
from FangZhen.simulate import SimParams, simulate
from FangZhen.track import build_track
from TQ.tools import Dataset, split, window
from ZhiBiao.achieve import convert_seconds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationConfig:
    track: dict
    racelines: tuple = LABELS
    controllers: tuple = CONTROLLERS
    speeds: tuple = (0.75, 0.85, 1.0)
    offset_fraction: float = 0.3
    v_max: float = 7.0
    lat_acc: float = 6.0
    lon_acc: float = 4.0
    race_fraction: float = 0.7
    race_smoothing: float = 4.0
    race_lat_gain: float = 1.2
    duration: float = 60.0
    sim: SimParams = SimParams()
    obs_len: int = 10
    horizon: int = 60
    noise_sigma: float = 0.1
    context_lookahead: tuple = (1.0,)
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        for label in self.racelines:
            require(label in LABELS, f"未知路线 '{label}'，可选 {LABELS}")
        for name in self.controllers:
            require(name in CONTROLLERS, f"未知控制器 '{name}'，可选 {CONTROLLERS}")
        require(all(s > 0 for s in self.speeds), "速度系数必须为正")
        require(self.duration >= 0, "仿真时长不能为负")
        require(self.race_fraction > self.offset_fraction,
                "race 线的最大偏移必须超过左右偏移线")

    @classmethod
    def from_dict(cls, section):
        sim = SimParams(lookahead=float(section['lookahead']), stanley_gain=float(section['stanley_gain']),
                        speed_gain=float(section['speed_gain']),
                        softening=float(section.get('stanley_softening', 0.1)))
        return cls(track=dict(section['track']),
                   racelines=tuple(section['racelines']),
                   controllers=tuple(section['controllers']),
                   speeds=tuple(float(s) for s in section['speeds']),
                   offset_fraction=float(section['offset_fraction']),
                   v_max=float(section['v_max']),
                   lat_acc=float(section['lat_acc']),
                   lon_acc=float(section['lon_acc']),
                   race_fraction=float(section.get('race_fraction', 0.7)),
                   race_smoothing=float(section.get('race_smoothing', 4.0)),
                   race_lat_gain=float(section.get('race_lat_gain', 1.2)),
                   duration=float(section['duration']),
                   sim=sim,
                   obs_len=int(section['obs_len']),
                   horizon=int(section['horizon']),
                   noise_sigma=float(section['noise_sigma']),
                   context_lookahead=tuple(float(v) for v in section['context_lookahead']),
                   ratios=tuple(float(r) for r in section['ratios']),
                   seed=int(section['seed']))

    def cells(self):
        """所有 (路线, 控制器, 速度) 单元，顺序固定。"""
        return list(itertools.product(self.racelines, self.controllers, self.speeds))


def _cell_seed(seed, cell_id):
    return int(np.random.SeedSequence([seed, cell_id]).generate_state(1)[0])


def generate_traces(cfg, bicycle=None, integrator=None, bounds=None, jobs=1, track=None):
    """
    按单元仿真，返回 (track, traces)。traces 与 cfg.cells() 同序。
    """
    track = track or build_track(cfg.track)
    lines = {label: build_raceline(track, label, cfg.offset_fraction, cfg.v_max, cfg.lat_acc, cfg.lon_acc,
                                   cfg.race_fraction, cfg.race_smoothing, cfg.race_lat_gain)
             for label in cfg.racelines}

    def run(item):
        cell_id, (label, controller, speed) = item
        trace = simulate(track, lines[label], controller, speed, cfg.duration, _cell_seed(cfg.seed, cell_id),
                         sim=cfg.sim, bicycle=bicycle, integrator=integrator, bounds=bounds)
        trace.meta['trace'] = cell_id
        logger.info(f"单元 {cell_id} ({label}, {controller}, {speed}) 完成: {len(trace)} 个状态")
        return trace

    start = time.time()
    items = list(enumerate(cfg.cells()))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(run, items))
    else:
        traces = [run(item) for item in items]
    hours, minutes, seconds = convert_seconds(time.time() - start)
    logger.info(f"仿真 {len(traces)} 个单元共耗时 {hours}小时{minutes}分钟{seconds}秒")
    return track, traces


def build_dataset(cfg, track, traces):
    """切窗口并合并为一个数据集；每个单元的噪声来自独立的随机数流。"""
    samples = []
    for trace in traces:
        rng = np.random.default_rng([cfg.seed, int(trace.meta.get('trace', 0)), 1])
        samples.extend(window(trace, cfg.obs_len, cfg.horizon, cfg.noise_sigma, rng, track,
                              cfg.context_lookahead))
    return Dataset.from_samples(samples, cfg.obs_len, cfg.horizon, len(cfg.context_lookahead))


def generate(cfg, bicycle=None, integrator=None, bounds=None, jobs=1):
    """
    完整生成流程。

    :return: (track, traces, {'train': ..., 'val': ..., 'test': ...})
    """
    bicycle = bicycle or BicycleParams()
    integrator = integrator or IntegratorConfig()
    bounds = bounds or ControlBounds()
    track, traces = generate_traces(cfg, bicycle, integrator, bounds, jobs)
    dataset = build_dataset(cfg, track, traces)
    train, val, test = split(dataset, cfg.ratios, cfg.seed)
    logger.info(f"样本数 train/val/test = {len(train)}/{len(val)}/{len(test)}")
    return track, traces, {'train': train, 'val': val, 'test': test}
