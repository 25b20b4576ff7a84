"""
替代动力学模型：运动学自行车模型与 CTRV。

状态分量顺序固定为 [x, y, θ, v]，控制量为 [δ, a]。θ 不做取模，
积分过程中连续累加。

模型的 rates() 接受分量元组，分量可以是 numpy 数组也可以是 Tape 上的
Var，因此同一份模型既用于推理，也用于训练时的反向传播。
"""
import math
from dataclasses import dataclass

import numpy as np

from config import require
from errors import DataError, NonFiniteError, ShapeError, SingularityError
from ShenJing import tape as T

X, Y, THETA, V = range(4)
STATE_NAMES = ('x', 'y', 'theta', 'v')
DELTA, ACC = range(2)


@dataclass(frozen=True)
class BicycleParams:
    """
    参考点位于前后轴中心连线的中点。

    reference_offset=True 时按原式在速度上加 L/2（量纲上是长度加速度，
    保持原样实现）；False 时为标准运动学自行车模型。
    """
    wheelbase: float = 0.3302
    reference_offset: bool = True

    def __post_init__(self):
        require(self.wheelbase > 0, f"轴距必须为正，当前 {self.wheelbase}")


@dataclass(frozen=True)
class CtrvParams:
    omega: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        require(math.isfinite(self.omega) and math.isfinite(self.v), "CTRV 参数必须有限")


@dataclass(frozen=True)
class ControlBounds:
    delta_max: float = 7 * math.pi / 16
    a_max: float = 20.0

    def __post_init__(self):
        require(0 < self.delta_max < math.pi / 2, f"delta_max 必须位于 (0, π/2)，当前 {self.delta_max}")
        require(self.a_max > 0, "a_max 必须为正")

    @property
    def omega(self):
        """与控制量 [δ, a] 同序的缩放向量。"""
        return np.array([self.delta_max, self.a_max])

    def clip(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.clip(u, -self.omega, self.omega)


class BicycleModel:
    def __init__(self, params=None):
        self.params = params or BicycleParams()

    def __repr__(self):
        return f"BicycleModel(L={self.params.wheelbase}, offset={self.params.reference_offset})"

    @property
    def wheelbase(self):
        return self.params.wheelbase

    def rates(self, p, u):
        x, y, theta, v = p
        delta, a = u
        if np.any(np.abs(T.value_of(delta)) >= math.pi / 2):
            raise SingularityError(f"转向角 |δ| 必须小于 π/2，当前 {np.max(np.abs(T.value_of(delta)))}")
        L = self.params.wheelbase
        speed = v + L / 2 if self.params.reference_offset else v
        return (speed * T.cos(theta),
                speed * T.sin(theta),
                v * T.tan(delta) * (1.0 / L),
                a)

    def __call__(self, state, u):
        return bicycle_deriv(state, u, self.params)


class CtrvModel:
    """ω 和 v 在构造时固定，控制量被忽略。"""

    def __init__(self, params):
        self.params = params

    def __repr__(self):
        return f"CtrvModel(omega={self.params.omega}, v={self.params.v})"

    def rates(self, p, u=None):
        x, y, theta, v = p
        return (v * T.cos(theta), v * T.sin(theta), self.params.omega, 0.0)

    def __call__(self, state, u=None):
        return ctrv_deriv(state, self.params)


def _split(array, size, name):
    array = np.asarray(array, dtype=np.float64)
    if array.shape[-1] != size:
        raise ShapeError(f"{name} 最后一维必须为 {size}，实际 {array.shape}")
    return tuple(array[..., k] for k in range(size))


def _check_finite(out):
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"状态导数出现非有限值: {out}")
    return out


def bicycle_deriv(state, u, params=None):
    """
    运动学自行车模型的状态导数。

    ẋ=(v+L/2)cosθ, ẏ=(v+L/2)sinθ, θ̇=v·tanδ/L, v̇=a

    :param state: (..., 4) 状态 [x, y, θ, v]
    :param u: (..., 2) 控制 [δ, a]
    :param params: BicycleParams
    :return: (..., 4) 状态导数
    """
    params = params or BicycleParams()
    p = _split(state, 4, 'state')
    c = _split(u, 2, 'control')
    out = np.stack(np.broadcast_arrays(*BicycleModel(params).rates(p, c)), axis=-1)
    return _check_finite(out)


def ctrv_deriv(state, params):
    """CTRV：ẋ=v·cosθ, ẏ=v·sinθ, θ̇=ω, v̇=0。"""
    p = _split(state, 4, 'state')
    out = np.stack(np.broadcast_arrays(*CtrvModel(params).rates(p)), axis=-1)
    return _check_finite(out)


def estimate_ctrv(states, ts):
    """
    在观测窗口上用最小二乘估计 CTRV 参数。

    ω 取 θ 对时间线性拟合的斜率，v 取测量速度的最小二乘常数（均值）。
    窗口内状态完全相同时斜率为 0，即 ω=0。

    :param states: (l, 4) 观测状态，l ≥ 2
    :param ts: 采样间隔
    :return: CtrvParams
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] < 2:
        raise DataError(f"估计 CTRV 参数至少需要 2 个观测状态，实际 {states.shape}")
    t = np.arange(states.shape[0]) * ts
    omega = np.polyfit(t, states[:, THETA], 1)[0]
    return CtrvParams(omega=float(omega), v=float(np.mean(states[:, V])))
