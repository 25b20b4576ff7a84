"""
路径跟踪控制器：Pure Pursuit 与 Stanley。

两者的纵向控制相同：a = k_v·(v_target − v)。输出统一裁剪到控制量上下限。
"""
import math

import numpy as np

from DongLi.models import ControlBounds
from FangZhen.geometry import wrap_angle

CONTROLLERS = ('pure_pursuit', 'stanley')


def pure_pursuit_steer(alpha, lookahead, wheelbase):
    """δ = atan(2L·sin α / ℓ_d)。"""
    if lookahead <= 1e-9:
        return 0.0
    return math.atan(2 * wheelbase * math.sin(alpha) / lookahead)


def speed_control(v, v_target, gain):
    return gain * (v_target - v)


def pure_pursuit(state, raceline, lookahead_m, wheelbase=0.3302, speed_gain=4.0, speed_scale=1.0,
                 bounds=None):
    """
    :param state: [x, y, θ, v]
    :param raceline: RaceLine
    :param lookahead_m: 前视距离（沿路线弧长）
    :return: 裁剪后的 [δ, a]
    """
    bounds = bounds or ControlBounds()
    path = raceline.path
    x, y, theta, v = state
    s0, _ = path.project(np.array([x, y]))
    goal = path.evaluate(s0 + lookahead_m / path.length)
    dx, dy = goal[0] - x, goal[1] - y
    alpha = float(wrap_angle(math.atan2(dy, dx) - theta))
    delta = pure_pursuit_steer(alpha, math.hypot(dx, dy), wheelbase)
    a = speed_control(v, speed_scale * float(raceline.speed_at(s0)), speed_gain)
    return bounds.clip([delta, a])


def stanley(state, raceline, gain_k, wheelbase=0.3302, speed_gain=4.0, speed_scale=1.0,
            softening=0.1, bounds=None):
    """
    δ = ψ_e + atan(k·e / (ε + |v|))，在前轴处计算横向误差。

    参考点位于轴距中点，前轴在其前方 L/2。e 取 −d：车辆在路线右侧时
    e > 0，向左打方向。
    """
    bounds = bounds or ControlBounds()
    path = raceline.path
    x, y, theta, v = state
    front = np.array([x + 0.5 * wheelbase * math.cos(theta), y + 0.5 * wheelbase * math.sin(theta)])
    s, d = path.project(front)
    heading_err = float(wrap_angle(path.heading(s) - theta))
    e = -float(d)
    delta = heading_err + math.atan2(gain_k * e, softening + abs(v))
    a = speed_control(v, speed_scale * float(raceline.speed_at(s)), speed_gain)
    return bounds.clip([delta, a])
