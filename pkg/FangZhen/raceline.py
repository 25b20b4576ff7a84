"""
行驶路线：中心线、左右偏移线和合成的 race 线，以及各自的目标速度。
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from config import require
from FangZhen.geometry import Centerline

logger = logging.getLogger(__name__)

LABELS = ('center', 'left', 'right', 'race')


@dataclass(eq=False)
class RaceLine:
    label: str
    path: Centerline
    speeds: np.ndarray
    offsets: np.ndarray

    @property
    def points(self):
        return self.path.knots[:len(self.speeds)]

    def speed_at(self, s):
        """路线上进度 s 处的目标速度（按节点线性插值）。"""
        u = np.asarray(s, dtype=np.float64) * self.path.length
        knots = self.path.knot_u
        if self.path.closed:
            return np.interp(u, knots, np.append(self.speeds, self.speeds[0]), period=self.path.length)
        return np.interp(u, knots, self.speeds)


def speed_profile(curvature, ds, v_max, lat_acc, lon_acc, closed=True):
    """
    由横向加速度上限得到每点速度上限，再做前向（加速）和后向（制动）两遍
    纵向加速度约束。

    :param curvature: (m,) 路线曲率
    :param ds: 相邻点间距，闭合路线长度为 m（含末点到首点），开放路线为 m−1
    :return: (m,) 目标速度
    """
    curvature = np.asarray(curvature, dtype=np.float64)
    v = np.minimum(v_max, np.sqrt(lat_acc / np.maximum(np.abs(curvature), 1e-9)))
    m = v.size
    laps = 2 if closed else 1
    span = m * laps if closed else m - 1
    for k in range(span):
        i, j = k % m, (k + 1) % m
        v[j] = min(v[j], np.sqrt(v[i] ** 2 + 2 * lon_acc * ds[i]))
    for k in range(span):
        j = (-k - 1) % m if closed else m - 1 - k
        i = (j - 1) % m if closed else j - 1
        v[i] = min(v[i], np.sqrt(v[j] ** 2 + 2 * lon_acc * ds[i]))
    return v


def _race_offsets(track, fraction, smoothing):
    spacing = track.length / len(track)
    kappa = gaussian_filter1d(track.curvature, sigma=max(smoothing / spacing, 1.0),
                              mode='wrap' if track.closed else 'nearest')
    peak = np.max(np.abs(kappa))
    if peak < 1e-12:
        return np.zeros(len(track))
    limit = fraction * track.half_width
    # 弯道内侧即曲率符号一侧（左正）
    return np.clip(kappa * (limit / peak), -limit, limit)


def build_raceline(track, label, offset_fraction=0.3, v_max=7.0, lat_acc=6.0, lon_acc=4.0,
                   race_fraction=0.7, race_smoothing=4.0, race_lat_gain=1.2):
    """
    生成一条行驶路线。

    :param track: Track
    :param label: center / left / right / race
    :param offset_fraction: 左右偏移线相对半宽的比例
    :param race_fraction: race 线最大切弯偏移相对半宽的比例，需超过 offset_fraction
    :param race_smoothing: race 线曲率平滑的高斯核宽度（米）
    :param race_lat_gain: race 线横向加速度上限的放大倍数
    :return: RaceLine
    """
    require(label in LABELS, f"未知路线 '{label}'，可选 {LABELS}")
    require(0 <= offset_fraction < 1 and 0 <= race_fraction < 1, "偏移比例必须位于 [0, 1)")
    half = track.half_width
    if label == 'center':
        offsets = np.zeros(len(track))
    elif label == 'left':
        offsets = np.full(len(track), offset_fraction * half)
    elif label == 'right':
        offsets = np.full(len(track), -offset_fraction * half)
    else:
        offsets = _race_offsets(track, race_fraction, race_smoothing)
        lat_acc = lat_acc * race_lat_gain
    pts = track.from_frenet(track.progress, offsets)
    path = Centerline(pts, closed=track.closed)
    m = len(offsets)
    kappa = path.curvature(path.knot_u[:m] / path.length)
    ds = np.diff(path.knot_u)
    speeds = speed_profile(kappa, ds, v_max, lat_acc, lon_acc, closed=track.closed)
    logger.info(f"路线 {label}: 长度 {path.length:.2f} m, 速度 {speeds.min():.2f}–{speeds.max():.2f} m/s")
    return RaceLine(label=label, path=path, speeds=speeds, offsets=offsets)
