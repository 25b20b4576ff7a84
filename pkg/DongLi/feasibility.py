"""
动力学可行性检查。

一条状态转移 p_t → p_{t+1} 可行，当且仅当存在界内控制 u 使得积分一步
后复现 p_{t+1}。自行车模型下 a 由 Δv 闭式求得；δ 在 Euler 下由 Δθ 闭式
求得，RK4 下以闭式解为初值做有界最小二乘反演。
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from DongLi.integrate import step
from DongLi.models import BicycleModel, ControlBounds, THETA, V
from errors import DataError, PcmpError

# 速度绝对值低于该阈值时，Δθ 无法由转向产生
V_EPS = 1e-9


@dataclass
class Violation:
    index: int
    reason: str
    residual: float = math.nan


@dataclass
class FeasibilityResult:
    feasible: bool
    witnesses: np.ndarray
    violation: Optional[Violation] = None

    def __bool__(self):
        return self.feasible


def _closed_form(p, q, L, ts, method):
    a = (q[V] - p[V]) / ts
    dtheta = q[THETA] - p[THETA]
    # θ̇ 在一个步长内随 v 线性变化，RK4 对它精确积分
    travel = p[V] * ts if method == 'euler' else p[V] * ts + 0.5 * a * ts * ts
    if abs(travel) < V_EPS:
        if abs(dtheta) > 0.0:
            return None, a
        return 0.0, a
    return math.atan(dtheta * L / travel), a


def steering_witness(p, q, wheelbase, ts, method='euler'):
    """
    仅由航向与速度变化求出的 (δ, a)；速度为零而航向变化时返回 None。
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return _closed_form(p, q, wheelbase, ts, method)


def is_feasible(traj, model, cfg, bounds=None, tol=1e-6, tol_inversion=1e-8):
    """
    检查轨迹中的每一步转移是否动力学可行。

    :param traj: (m, 4) 状态序列，m ≥ 2
    :param model: BicycleModel
    :param cfg: IntegratorConfig
    :param bounds: ControlBounds，默认 (±7π/16, ±20)
    :param tol: 复现下一状态的最大分量误差
    :param tol_inversion: RK4 数值反演的收敛容差
    :return: FeasibilityResult，包含每步的见证控制量或第一处违例
    """
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] < 2 or traj.shape[1] != 4:
        raise DataError(f"可行性检查需要 (m≥2, 4) 的轨迹，实际 {traj.shape}")
    if not isinstance(model, BicycleModel):
        raise DataError(f"可行性检查只支持自行车模型，实际 {model!r}")
    bounds = bounds or ControlBounds()
    L = model.wheelbase
    witnesses = np.full((traj.shape[0] - 1, 2), np.nan)

    def fail(k, reason, residual=math.nan):
        return FeasibilityResult(False, witnesses[:k], Violation(k, reason, residual))

    for k in range(traj.shape[0] - 1):
        p, q = traj[k], traj[k + 1]
        delta, a = _closed_form(p, q, L, cfg.ts, cfg.method)
        if delta is None:
            return fail(k, f"速度为零 (v={p[V]:.3g}) 时航向变化 {q[THETA] - p[THETA]:.3g} rad 无法实现")
        u = np.array([delta, a])
        if cfg.method == 'rk4':
            u = _invert(p, q, u, model, cfg, bounds, tol_inversion)
        if abs(u[0]) > bounds.delta_max + 1e-12:
            return fail(k, f"所需转向角 {u[0]:.4f} rad 超出上限 {bounds.delta_max:.4f}")
        if abs(u[1]) > bounds.a_max + 1e-12:
            return fail(k, f"所需加速度 {u[1]:.4f} m/s² 超出上限 {bounds.a_max:.4f}")
        try:
            reproduced = step(p, u, model, cfg)
        except PcmpError as e:
            return fail(k, f"积分失败: {e}")
        residual = float(np.max(np.abs(reproduced - q)))
        if residual > tol:
            return fail(k, f"复现误差 {residual:.3g} 超过容差 {tol:.3g}", residual)
        witnesses[k] = u
    return FeasibilityResult(True, witnesses)


def _invert(p, q, guess, model, cfg, bounds, tol):
    """在控制界内最小化一步积分与目标状态的差。"""
    lo = -bounds.omega
    hi = bounds.omega
    x0 = np.clip(guess, lo, hi)

    def residual(u):
        return step(p, u, model, cfg) - q

    if np.max(np.abs(residual(x0))) <= tol:
        return x0
    result = least_squares(residual, x0, bounds=(lo, hi), xtol=tol, ftol=tol * 1e-2, gtol=tol * 1e-2,
                           method='trf')
    return result.x


def feasibility_rate(trajectories, states0, model, cfg, bounds=None, tol=1e-6):
    """
    一批预测轨迹中可行轨迹所占比例。

    :param trajectories: (N, n, 4) 预测
    :param states0: (N, 4) 每条预测的起始状态（最后观测状态）
    :return: (比例, 每条是否可行的布尔数组)
    """
    trajectories = np.asarray(trajectories, dtype=np.float64)
    states0 = np.asarray(states0, dtype=np.float64)
    flags = np.array([
        is_feasible(np.concatenate([states0[i][None], trajectories[i]]), model, cfg, bounds, tol).feasible
        for i in range(trajectories.shape[0])
    ], dtype=bool)
    return (float(flags.mean()) if flags.size else math.nan), flags
