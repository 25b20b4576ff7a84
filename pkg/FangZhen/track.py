"""
赛道：闭合中心线 + 每点左右宽度 + 曲率。

build_track 按配置生成合成赛道（圆、体育场形、直道 + 四段 90° 弯的环形
赛道、开放直道），load_track / save_track 读写 x,y,w_left,w_right 格式的
CSV。
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from config import require
from errors import ConfigError, DataError
from FangZhen.geometry import Centerline, circle_points

logger = logging.getLogger(__name__)

TRACK_COLUMNS = ['x', 'y', 'w_left', 'w_right']
KINDS = ('circle', 'stadium', 'circuit', 'straight')


@dataclass(eq=False)
class Track:
    points: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    closed: bool = True
    curvature: np.ndarray = None
    centerline: Centerline = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.w_left = np.broadcast_to(np.asarray(self.w_left, dtype=np.float64), self.points.shape[:1]).copy()
        self.w_right = np.broadcast_to(np.asarray(self.w_right, dtype=np.float64), self.points.shape[:1]).copy()
        if np.any(self.w_left <= 0) or np.any(self.w_right <= 0):
            raise DataError("赛道宽度必须为正")
        self.centerline = Centerline(self.points, closed=self.closed)
        if self.curvature is None:
            self.curvature = self.centerline.curvature(self.progress)
        self.curvature = np.asarray(self.curvature, dtype=np.float64)
        if not np.all(np.isfinite(self.curvature)):
            raise DataError("赛道曲率出现非有限值")

    def __len__(self):
        return self.points.shape[0]

    @property
    def length(self):
        return self.centerline.length

    @property
    def arclength(self):
        """每个中心线点的累计弧长。"""
        return self.centerline.knot_u[:len(self)]

    @property
    def progress(self):
        return self.arclength / self.length

    @property
    def half_width(self):
        return float(np.min(np.minimum(self.w_left, self.w_right)))

    @property
    def width(self):
        return float(np.min(self.w_left + self.w_right))

    def to_frenet(self, points):
        return self.centerline.project(points)

    def from_frenet(self, s, d):
        return self.centerline.from_frenet(s, d)

    def curvature_at(self, s):
        return self.centerline.curvature(s)

    def forward_curvature(self, points, lookahead):
        """
        车辆前方 lookahead 米处的中心线曲率。

        :param points: (..., ≥2) 位置
        :param lookahead: 前视距离列表（米）
        :return: (..., len(lookahead))
        """
        s, _ = self.to_frenet(points)
        ahead = np.asarray(lookahead, dtype=np.float64) / self.length
        return self.centerline.curvature(s[..., None] + ahead)


def _straight(start, heading, length, spacing):
    count = max(1, int(math.ceil(length / spacing)))
    t = np.arange(count) * (length / count)
    pts = start + t[:, None] * np.array([math.cos(heading), math.sin(heading)])
    return pts, np.zeros(count)


def _arc(start, heading, radius, sweep, spacing):
    """从 start 出发、初始航向 heading 的左转圆弧，不含终点。"""
    count = max(1, int(math.ceil(radius * sweep / spacing)))
    center = start + radius * np.array([-math.sin(heading), math.cos(heading)])
    phi = heading - math.pi / 2 + sweep * np.arange(count) / count
    pts = center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return pts, np.full(count, 1.0 / radius)


def _piecewise(segments, spacing):
    pos = np.zeros(2)
    heading = 0.0
    points, kappa = [], []
    for kind, a, b in segments:
        if kind == 'line':
            pts, k = _straight(pos, heading, a, spacing)
            pos = pos + a * np.array([math.cos(heading), math.sin(heading)])
        else:
            pts, k = _arc(pos, heading, a, b, spacing)
            center = pos + a * np.array([-math.sin(heading), math.cos(heading)])
            heading += b
            pos = center + a * np.array([math.sin(heading), -math.cos(heading)])
        points.append(pts)
        kappa.append(k)
    if np.linalg.norm(pos) > 1e-6:
        raise ConfigError(f"赛道没有闭合，终点偏离起点 {np.linalg.norm(pos):.3g} m")
    return np.vstack(points), np.concatenate(kappa)


def circuit_segments(straights, radii):
    """
    直道 + 四段 90° 左弯的闭合赛道。

    第三、四段直道由闭合条件确定：
    L3 = L1 + r1 − r2 − r3 + r4，L4 = L2 + r1 + r2 − r3 − r4。
    """
    l1, l2 = straights
    r1, r2, r3, r4 = radii
    l3 = l1 + r1 - r2 - r3 + r4
    l4 = l2 + r1 + r2 - r3 - r4
    require(l3 > 0 and l4 > 0, f"弯道半径 {radii} 与直道 {straights} 无法闭合 (L3={l3:.3g}, L4={l4:.3g})")
    quarter = math.pi / 2
    return [('line', l1, None), ('arc', r1, quarter),
            ('line', l2, None), ('arc', r2, quarter),
            ('line', l3, None), ('arc', r3, quarter),
            ('line', l4, None), ('arc', r4, quarter)]


def build_track(spec):
    """
    按配置生成赛道。

    :param spec: 字典，kind ∈ {circle, stadium, circuit, straight}；
                 circle 用 radius，stadium 用 straights[0] 与 radii[0]，
                 circuit 用 straights[:2] 与 radii[:4]，straight 用 length；
                 width 为总宽，spacing 为采样间距
    :return: Track
    """
    kind = spec.get('kind', 'circuit')
    width = float(spec.get('width', 2.4))
    spacing = float(spec.get('spacing', 0.1))
    require(kind in KINDS, f"未知赛道类型 '{kind}'，可选 {KINDS}")
    require(width > 0 and spacing > 0, "赛道宽度与采样间距必须为正")
    half = width / 2
    if kind == 'circle':
        radius = float(spec.get('radius', 20.0))
        require(radius > half, f"圆形赛道半径 {radius} 必须大于半宽 {half}")
        pts = circle_points(radius, spacing)
        return Track(pts, half, half, closed=True, curvature=np.full(len(pts), 1.0 / radius))
    if kind == 'straight':
        length = float(spec.get('length', 100.0))
        require(length > 0, "直道长度必须为正")
        count = int(math.ceil(length / spacing)) + 1
        pts = np.stack([np.linspace(0.0, length, count), np.zeros(count)], axis=1)
        return Track(pts, half, half, closed=False, curvature=np.zeros(count))
    straights = [float(v) for v in spec.get('straights', [20.0, 10.0])]
    radii = [float(v) for v in spec.get('radii', [8.0, 4.0, 6.0, 5.0])]
    require(all(r > half for r in radii), f"弯道半径 {radii} 必须大于半宽 {half}")
    if kind == 'stadium':
        segments = [('line', straights[0], None), ('arc', radii[0], math.pi),
                    ('line', straights[0], None), ('arc', radii[0], math.pi)]
    else:
        require(len(straights) >= 2 and len(radii) >= 4, "circuit 需要 2 段直道长度和 4 个弯道半径")
        segments = circuit_segments(straights[:2], radii[:4])
    pts, kappa = _piecewise(segments, spacing)
    logger.info(f"生成 {kind} 赛道: {len(pts)} 个点")
    return Track(pts, half, half, closed=True, curvature=kappa)


def save_track(track, path):
    df = pd.DataFrame({'x': track.points[:, 0], 'y': track.points[:, 1],
                       'w_left': track.w_left, 'w_right': track.w_right}, columns=TRACK_COLUMNS)
    df.to_csv(path, index=False)
    return path


def load_track(path, closed=True):
    """读取中心线 CSV；首尾点重合时去掉重复的末点。"""
    try:
        df = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f"赛道文件不存在: {path}")
    missing = [c for c in TRACK_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"赛道文件 {path} 缺少列 {missing}")
    pts = df[['x', 'y']].to_numpy(dtype=np.float64)
    w_left = df['w_left'].to_numpy(dtype=np.float64)
    w_right = df['w_right'].to_numpy(dtype=np.float64)
    if closed and len(pts) > 1 and np.allclose(pts[0], pts[-1]):
        pts, w_left, w_right = pts[:-1], w_left[:-1], w_right[:-1]
    return Track(pts, w_left, w_right, closed=closed)
