"""
坐标系变换：以最后观测位姿为原点的局部坐标系，以及赛道 Frenet 坐标。
"""
from dataclasses import dataclass

import numpy as np

from errors import ShapeError


@dataclass(frozen=True)
class LocalFrame:
    """
    原点位姿 (x, y, θ)。各字段可以是标量，也可以是批量数组 (N,)，
    此时与 (N, ..., d) 的点逐批对应。
    """
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_state(cls, state):
        state = np.asarray(state, dtype=np.float64)
        if state.shape[-1] < 3:
            raise ShapeError(f"位姿至少需要 (x, y, θ)，实际 {state.shape}")
        return cls(state[..., 0], state[..., 1], state[..., 2])


def _expand(value, ndim):
    value = np.asarray(value, dtype=np.float64)
    return value.reshape(value.shape + (1,) * max(ndim - value.ndim, 0))


def _frame_terms(points, frame):
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] < 2:
        raise ShapeError(f"点的最后一维至少为 2，实际 {points.shape}")
    ndim = points.ndim - 1
    fx, fy, ft = (_expand(v, ndim) for v in (frame.x, frame.y, frame.theta))
    return points, fx, fy, ft


def to_local(points, frame):
    """
    世界坐标 → 局部坐标。平移 −(x, y)、旋转 −θ；若有第三个分量（航向）则减去 θ，
    其余分量（速度）不变。

    :param points: (..., d)，d ≥ 2
    :param frame: LocalFrame
    """
    points, fx, fy, ft = _frame_terms(points, frame)
    c, s = np.cos(ft), np.sin(ft)
    dx = points[..., 0] - fx
    dy = points[..., 1] - fy
    out = points.copy()
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    if points.shape[-1] >= 3:
        out[..., 2] = points[..., 2] - ft
    return out


def from_local(points, frame):
    """局部坐标 → 世界坐标，to_local 的逆变换。"""
    points, fx, fy, ft = _frame_terms(points, frame)
    c, s = np.cos(ft), np.sin(ft)
    lx, ly = points[..., 0], points[..., 1]
    out = points.copy()
    out[..., 0] = c * lx - s * ly + fx
    out[..., 1] = s * lx + c * ly + fy
    if points.shape[-1] >= 3:
        out[..., 2] = points[..., 2] + ft
    return out


def to_frenet(points, track):
    """
    :param points: (..., ≥2) 世界坐标
    :param track: Track 或 Centerline
    :return: (..., 2)，[s, d]
    """
    project = track.to_frenet if hasattr(track, 'to_frenet') else track.project
    s, d = project(points)
    return np.stack([s, d], axis=-1)


def from_frenet(coords, track):
    coords = np.asarray(coords, dtype=np.float64)
    return track.from_frenet(coords[..., 0], coords[..., 1])
