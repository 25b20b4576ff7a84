"""
中心线几何：按弧长参数化的三次样条、投影（笛卡尔 → Frenet）及其逆变换。

闭合曲线使用周期样条，s 取模 1；开放曲线的 s 截断在 [0, 1]。
d 为有符号横向偏移，左正右负。
"""
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from errors import DataError

NEWTON_ITERATIONS = 30
NEWTON_TOL = 1e-13
# 两个候选投影的距离差小于该值时视为并列，取 s 较小者
TIE_TOL = 1e-12
CANDIDATES = 4


def wrap_angle(angle):
    """把角度折叠到 [−π, π)。"""
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def wrap_progress(ds):
    """归一化进度差折叠到 [−0.5, 0.5)，即取模 1 意义下绝对值最小的差。"""
    return (np.asarray(ds) + 0.5) % 1.0 - 0.5


def _spline(u, points, closed):
    if closed:
        return CubicSpline(u, points, bc_type='periodic', axis=0)
    return CubicSpline(u, points, axis=0)


def _segment_lengths(spline, u):
    nodes, weights = leggauss(5)
    a, b = u[:-1], u[1:]
    half = (b - a) / 2
    t = (a + b)[:, None] / 2 + half[:, None] * nodes[None, :]
    speed = np.linalg.norm(spline(t, 1), axis=-1)
    return half * (speed @ weights)


class Centerline:
    """
    平面参数曲线 c(u)，u ∈ [0, length]，近似为弧长参数。

    先按弦长参数化拟合，再用 Gauss-Legendre 积分得到样条在各节点处的弧长，
    以该弧长为参数重新拟合一次。
    """

    def __init__(self, points, closed=True):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise DataError(f"中心线点必须是 (m, 2) 数组，实际 {points.shape}")
        if closed and np.allclose(points[0], points[-1]):
            points = points[:-1]
        minimum = 3 if closed else 2
        if points.shape[0] < minimum:
            raise DataError(f"中心线至少需要 {minimum} 个点，实际 {points.shape[0]}")
        knots = np.vstack([points, points[:1]]) if closed else points
        chord = np.linalg.norm(np.diff(knots, axis=0), axis=1)
        if np.any(chord <= 0):
            raise DataError("中心线包含重复的相邻点")
        self.closed = closed
        u = np.concatenate([[0.0], np.cumsum(chord)])
        spline = _spline(u, knots, closed)
        u = np.concatenate([[0.0], np.cumsum(_segment_lengths(spline, u))])
        self.spline = _spline(u, knots, closed)
        self.knots = knots
        self.knot_u = u
        self.length = float(u[-1])
        dense = self._dense_samples()
        self._sample_u = dense
        self._tree = cKDTree(self.spline(dense))

    def _dense_samples(self):
        per_segment = 4
        frac = np.arange(per_segment) / per_segment
        u = (self.knot_u[:-1, None] + np.diff(self.knot_u)[:, None] * frac[None, :]).ravel()
        if not self.closed:
            u = np.append(u, self.length)
        return u

    def _param(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.closed:
            return np.mod(s, 1.0) * self.length
        return np.clip(s, 0.0, 1.0) * self.length

    def evaluate(self, s):
        """归一化进度 s 处的点 (..., 2)。"""
        return self.spline(self._param(s))

    def tangent(self, s):
        d1 = self.spline(self._param(s), 1)
        return d1 / np.linalg.norm(d1, axis=-1, keepdims=True)

    def normal(self, s):
        """左法向。"""
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def heading(self, s):
        t = self.tangent(s)
        return np.arctan2(t[..., 1], t[..., 0])

    def curvature(self, s):
        """有符号曲率，左转为正。"""
        u = self._param(s)
        d1 = self.spline(u, 1)
        d2 = self.spline(u, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def from_frenet(self, s, d):
        s = np.asarray(s, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        return self.evaluate(s) + d[..., None] * self.normal(s)

    def project(self, points):
        """
        把点投影到曲线上。

        先用 KD 树找离点最近的若干个稠密采样，再以每个采样为初值对
        (c(u)−p)·c'(u)=0 做牛顿迭代，取距离最小者；距离并列时取 s 较小者。

        :param points: (..., 2)
        :return: (s, d)，形状均为 (...)
        """
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] < 2:
            raise DataError(f"投影点最后一维至少为 2，实际 {points.shape}")
        batch_shape = points.shape[:-1]
        p = points[..., :2].reshape(-1, 2)
        k = min(CANDIDATES, self._sample_u.size)
        _, idx = self._tree.query(p, k=k)
        idx = np.asarray(idx).reshape(p.shape[0], k)
        u = self._refine(self._sample_u[idx], p)
        c = self.spline(u)
        offset = p[:, None, :] - c
        dist = np.linalg.norm(offset, axis=-1)
        s = u / self.length
        if self.closed:
            s = np.mod(s, 1.0)
        best = dist.min(axis=1, keepdims=True)
        tied = dist <= best + TIE_TOL
        choice = np.argmin(np.where(tied, s, np.inf), axis=1)
        rows = np.arange(p.shape[0])
        s = s[rows, choice]
        d1 = self.spline(u[rows, choice], 1)
        off = offset[rows, choice]
        d = (d1[:, 0] * off[:, 1] - d1[:, 1] * off[:, 0]) / np.linalg.norm(d1, axis=-1)
        if self.closed:
            # 取模后恰好为 1.0 的舍入
            s = np.where(s >= 1.0, 0.0, s)
        return s.reshape(batch_shape), d.reshape(batch_shape)

    def _refine(self, u, p):
        p = p[:, None, :]
        for _ in range(NEWTON_ITERATIONS):
            c = self.spline(u)
            d1 = self.spline(u, 1)
            d2 = self.spline(u, 2)
            r = c - p
            g = np.sum(r * d1, axis=-1)
            h = np.sum(d1 * d1, axis=-1) + np.sum(r * d2, axis=-1)
            # 二阶项为负时退化为梯度步
            h = np.where(h > 1e-9, h, np.sum(d1 * d1, axis=-1))
            du = -g / h
            du = np.clip(du, -0.5, 0.5)
            if self.closed:
                u = np.mod(u + du, self.length)
            else:
                u = np.clip(u + du, 0.0, self.length)
            if np.all(np.abs(du) < NEWTON_TOL * max(1.0, self.length)):
                break
        return u

    def arc_distance(self, s_from, s_to):
        """沿前进方向从 s_from 到 s_to 的归一化进度。"""
        diff = np.asarray(s_to) - np.asarray(s_from)
        return np.mod(diff, 1.0) if self.closed else diff


def circle_points(radius, spacing, center=(0.0, 0.0), start=0.0):
    """逆时针圆，从角度 start 开始，点数取 4 的倍数。"""
    count = max(4, int(math.ceil(2 * math.pi * radius / spacing / 4)) * 4)
    phi = start + 2 * math.pi * np.arange(count) / count
    return np.stack([center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)], axis=1)
