"""
定步长数值积分：Euler 与经典四阶 Runge-Kutta。

控制量在每个步长内保持不变（零阶保持），每个采样间隔只积分一步。
"""
from dataclasses import dataclass, replace

import numpy as np

from config import require
from DongLi.models import BicycleModel, BicycleParams, ControlBounds
from errors import IntegrationError, NonFiniteError, PcmpError, ShapeError
from ShenJing import tape as T

METHODS = ('euler', 'rk4')


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = 'rk4'
    ts: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, 'method', str(self.method).lower())
        require(self.method in METHODS, f"未知积分方法 '{self.method}'，可选 {METHODS}")
        require(self.ts > 0, f"积分步长必须为正，当前 {self.ts}")

    @classmethod
    def from_dict(cls, section):
        return cls(method=section.get('method', 'rk4'), ts=float(section.get('ts', 0.01)))


def _axpy(p, k, h):
    return tuple(pi + h * ki for pi, ki in zip(p, k))


def advance(p, u, model, cfg):
    """
    按分量推进一步，分量可以是数组或 Var。

    :param p: 状态分量元组 (x, y, θ, v)
    :param u: 控制分量元组 (δ, a)，在整个步长内不变
    :param model: 提供 rates(p, u) 的动力学模型
    :param cfg: IntegratorConfig
    :return: 下一时刻状态分量元组
    """
    h = cfg.ts
    k1 = model.rates(p, u)
    if cfg.method == 'euler':
        return _axpy(p, k1, h)
    k2 = model.rates(_axpy(p, k1, h / 2), u)
    k3 = model.rates(_axpy(p, k2, h / 2), u)
    k4 = model.rates(_axpy(p, k3, h), u)
    return tuple(pi + (h / 6) * (a + 2 * b + 2 * c + d)
                 for pi, a, b, c, d in zip(p, k1, k2, k3, k4))


def _components(array, size, name):
    array = np.asarray(array, dtype=np.float64)
    if array.shape[-1] != size:
        raise ShapeError(f"{name} 最后一维必须为 {size}，实际 {array.shape}")
    return tuple(array[..., k] for k in range(size))


def _join(p):
    return np.stack(np.broadcast_arrays(*[T.value_of(c) for c in p]), axis=-1)


def step(state, u, model, cfg):
    """
    数组形式的一步积分。

    :param state: (..., 4) 当前状态
    :param u: (..., 2) 控制量
    :param model: 动力学模型（BicycleModel / CtrvModel）
    :param cfg: IntegratorConfig
    :return: (..., 4) 下一时刻状态
    """
    nxt = _join(advance(_components(state, 4, 'state'), _components(u, 2, 'control'), model, cfg))
    if not np.all(np.isfinite(nxt)):
        raise NonFiniteError(f"积分结果出现非有限值: {nxt}")
    return nxt


def rollout(state0, controls, model, cfg):
    """
    从 state0 出发逐步积分 n 步。

    输出不包含 state0 本身，output[0] 是积分一步后的状态。

    :param state0: (..., 4) 初始状态
    :param controls: (..., n, 2) 控制序列
    :param model: 动力学模型
    :param cfg: IntegratorConfig
    :return: (..., n, 4) 状态序列
    """
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim < 2 or controls.shape[-2] < 1:
        raise ShapeError(f"控制序列至少需要一步，实际形状 {controls.shape}")
    state = np.asarray(state0, dtype=np.float64)
    out = []
    for k in range(controls.shape[-2]):
        try:
            state = step(state, controls[..., k, :], model, cfg)
        except PcmpError as e:
            raise IntegrationError(k, e) from e
        out.append(state)
    return np.stack(out, axis=-2)


def rollout_traced(p0, controls, model, cfg):
    """
    分量形式的积分，供训练时在 Tape 上反向传播。

    :param p0: 初始状态分量元组
    :param controls: 每一步的控制分量元组列表 [(δ_k, a_k), ...]
    :return: 每一步的状态分量元组列表
    """
    p = tuple(p0)
    out = []
    for k, u in enumerate(controls):
        try:
            p = advance(p, u, model, cfg)
        except PcmpError as e:
            raise IntegrationError(k, e) from e
        out.append(p)
    return out


@dataclass(frozen=True)
class DynamicsConfig:
    """DYNAMICS 配置段对应的模型参数、积分设置、控制上下限和可行性容差。"""
    bicycle: BicycleParams = BicycleParams()
    integrator: IntegratorConfig = IntegratorConfig()
    bounds: ControlBounds = ControlBounds()
    tol_feas: float = 1e-6
    tol_inversion: float = 1e-8

    @classmethod
    def from_dict(cls, section):
        return cls(bicycle=BicycleParams(wheelbase=float(section['wheelbase']),
                                         reference_offset=bool(section.get('reference_offset', True))),
                   integrator=IntegratorConfig.from_dict(section),
                   bounds=ControlBounds(delta_max=float(section['delta_max']), a_max=float(section['a_max'])),
                   tol_feas=float(section.get('tol_feas', 1e-6)),
                   tol_inversion=float(section.get('tol_inversion', 1e-8)))

    def with_wheelbase(self, wheelbase):
        return replace(self, bicycle=replace(self.bicycle, wheelbase=wheelbase))

    @property
    def model(self):
        return BicycleModel(self.bicycle)
