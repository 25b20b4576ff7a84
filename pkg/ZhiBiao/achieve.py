"""
评估指标：ADE、FDE 与有向包围盒 IoU。

位移误差只用 (x, y)；IoU 按车辆外形（默认 0.58 m × 0.31 m）在每个预测步
上计算后对步数取平均。
"""
import json
import math
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import pearsonr

from config import require
from errors import DataError, ShapeError

# 多边形面积小于该值视为退化
AREA_EPS = 1e-12


def convert_seconds(seconds):
    hours = seconds // 3600
    minutes = (seconds % 3600) // 60
    seconds = round(seconds % 60, 2)
    return hours, minutes, seconds


def _xy_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape[:-1] != truth.shape[:-1] or pred.shape[-1] < 2 or truth.shape[-1] < 2:
        raise ShapeError(f"预测与真值形状不一致: {pred.shape} vs {truth.shape}")
    if pred.ndim < 2 or pred.shape[-2] == 0:
        raise ShapeError(f"轨迹至少需要一步，实际 {pred.shape}")
    return pred[..., :2], truth[..., :2]


def displacement(pred, truth):
    """逐步欧氏位移误差 (..., n)。"""
    p, t = _xy_pair(pred, truth)
    return np.linalg.norm(p - t, axis=-1)


def ade(pred, truth):
    """平均位移误差；输入带批维时返回每条轨迹的 ADE。"""
    return displacement(pred, truth).mean(axis=-1)


def fde(pred, truth):
    return displacement(pred, truth)[..., -1]


@dataclass(frozen=True)
class Footprint:
    length: float = 0.58
    width: float = 0.31

    def __post_init__(self):
        require(self.length > 0 and self.width > 0, "车辆外形尺寸必须为正")

    @classmethod
    def from_dict(cls, section):
        return cls(length=float(section['length']), width=float(section['width']))


@dataclass(frozen=True)
class OrientedBox:
    x: float
    y: float
    theta: float
    length: float = 0.58
    width: float = 0.31

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise DataError(f"包围盒尺寸必须为正: {self.length} × {self.width}")

    def corners(self):
        """逆时针四个角点。"""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    @property
    def area(self):
        return self.length * self.width


def polygon_area(poly):
    """鞋带公式，逆时针为正。"""
    poly = np.asarray(poly, dtype=np.float64)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject, clipper):
    """
    Sutherland–Hodgman：用凸多边形 clipper（逆时针）裁剪 subject。
    """
    output = [np.asarray(p, dtype=np.float64) for p in subject]
    clipper = np.asarray(clipper, dtype=np.float64)
    for i in range(len(clipper)):
        a, b = clipper[i], clipper[(i + 1) % len(clipper)]
        edge = b - a

        def side(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])

        inputs, output = output, []
        if not inputs:
            break
        prev = inputs[-1]
        for cur in inputs:
            s_cur, s_prev = side(cur), side(prev)
            if s_cur >= 0:
                if s_prev < 0:
                    output.append(prev + (cur - prev) * (s_prev / (s_prev - s_cur)))
                output.append(cur)
            elif s_prev >= 0:
                output.append(prev + (cur - prev) * (s_prev / (s_prev - s_cur)))
            prev = cur
    return np.array(output) if output else np.empty((0, 2))


def oriented_iou(a, b):
    """两个有向包围盒的交并比。"""
    if a.area < AREA_EPS or b.area < AREA_EPS:
        raise DataError("退化包围盒（面积为 0）不能计算 IoU")
    inter = max(polygon_area(clip_polygon(a.corners(), b.corners())), 0.0)
    union = a.area + b.area - inter
    return float(min(max(inter / union, 0.0), 1.0))


def trajectory_iou(pred, truth, footprint=None):
    """
    每一步用预测/真值的 (x, y, θ) 放置车辆外形，返回各步 IoU 的平均值。

    :param pred: (n, ≥3)
    :param truth: (n, ≥3)
    """
    footprint = footprint or Footprint()
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] < 3:
        raise ShapeError(f"IoU 需要形状相同的 (n, ≥3) 轨迹: {pred.shape} vs {truth.shape}")
    values = [oriented_iou(OrientedBox(p[0], p[1], p[2], footprint.length, footprint.width),
                           OrientedBox(t[0], t[1], t[2], footprint.length, footprint.width))
              for p, t in zip(pred, truth)]
    return float(np.mean(values))


@dataclass
class MetricReport:
    ade: float
    fde: float
    iou: float
    count: int
    per_sample: pd.DataFrame = None

    def summary(self):
        return {'ade': self.ade, 'fde': self.fde, 'iou': self.iou, 'count': self.count}

    def save(self, json_path, csv_path=None):
        with open(json_path, 'w', encoding='utf-8') as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
        if csv_path is not None and self.per_sample is not None:
            self.per_sample.to_csv(csv_path, index=False)
        return json_path


def evaluate(pred, truth, footprint=None, strata=None):
    """
    批量评估。

    :param pred: (N, n, ≥3) 预测
    :param truth: (N, n, ≥3) 真值
    :param strata: 可选的分层信息 DataFrame，会并入逐样本明细
    :return: MetricReport
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 3:
        raise ShapeError(f"批量评估需要 (N, n, ≥3) 预测，实际 {pred.shape}")
    if pred.shape[0] == 0:
        raise DataError("没有可评估的样本")
    ade_values = ade(pred, truth)
    fde_values = fde(pred, truth)
    iou_values = np.array([trajectory_iou(p, t, footprint) for p, t in zip(pred, truth)])
    per_sample = pd.DataFrame({'sample': np.arange(pred.shape[0]), 'ade': ade_values,
                               'fde': fde_values, 'iou': iou_values})
    if strata is not None:
        per_sample = pd.concat([strata.reset_index(drop=True), per_sample], axis=1)
    return MetricReport(ade=float(ade_values.mean()), fde=float(fde_values.mean()),
                        iou=float(iou_values.mean()), count=int(pred.shape[0]), per_sample=per_sample)


def pearson(x, y):
    """皮尔逊相关系数；任一序列方差为 0 时返回 nan。"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ShapeError(f"相关系数需要等长且至少两个点的序列: {x.shape} vs {y.shape}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan
    return float(pearsonr(x, y)[0])


def save_reports(reports, directory, prefix='metrics'):
    """多个预测头的报告写成一个 JSON 和各自的逐样本 CSV。"""
    os.makedirs(directory, exist_ok=True)
    summary = {name: report.summary() for name, report in reports.items()}
    json_path = os.path.join(directory, f'{prefix}.json')
    with open(json_path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    paths = [json_path]
    for name, report in reports.items():
        if report.per_sample is not None:
            path = os.path.join(directory, f'{prefix}_{name}.csv')
            report.per_sample.to_csv(path, index=False)
            paths.append(path)
    return paths
