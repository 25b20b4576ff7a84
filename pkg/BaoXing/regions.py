"""
保形预测区域。

打分函数给出真值相对预测的有符号误差：旋转矩形区域在最后观测位姿的局部
坐标系里取 (Δx, Δy)，Frenet 区域取 (Δs, Δd)。CQR 在训练集打分上取经验
分位数 q_low / q_high，在验证集上计算非一致性分数
R = max(q_low − s, s − q_high)，再取其有限样本修正的分位数 E，
区域为闭区间 [q_low − E, q_high + E]，逐步逐维独立计算。
"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from BaoXing.frames import LocalFrame, from_frenet, from_local, to_frenet, to_local
from config import require
from errors import DataError, InsufficientSamplesError, ShapeError
from FangZhen.geometry import wrap_progress

logger = logging.getLogger(__name__)

MODES = ('single-step', 'multi-step')
KINDS = ('rot-rect', 'frenet', 'circle')
DIMENSIONS = {'rot-rect': ('x', 'y'), 'frenet': ('s', 'd'), 'circle': ('r',)}
REGION_FORMAT = 'pcmp-region'
# 浮点误差导致的 ceil 越界
CEIL_EPS = 1e-9


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"预测与真值长度不一致: {pred.shape} vs {truth.shape}")
    return pred, truth


def score_rotated_rect(pred, truth, frame):
    """
    局部坐标系下的有符号误差 [ᴸx − ᴸx̂, ᴸy − ᴸŷ]。

    :param pred: (..., n, ≥2) 世界坐标预测
    :param truth: (..., n, ≥2) 世界坐标真值
    :param frame: LocalFrame（最后观测位姿）
    :return: (..., n, 2)
    """
    pred, truth = _pair(pred, truth)
    return to_local(truth[..., :2], frame) - to_local(pred[..., :2], frame)


def score_frenet(pred, truth, track):
    """Frenet 坐标下的有符号误差 [Δs, Δd]，Δs 取模 1 意义下绝对值最小的差。"""
    pred, truth = _pair(pred, truth)
    p = to_frenet(pred[..., :2], track)
    t = to_frenet(truth[..., :2], track)
    diff = t - p
    diff[..., 0] = wrap_progress(diff[..., 0])
    return diff


def score_circle(pred, truth):
    """欧氏位移误差，用于圆形基线区域。"""
    pred, truth = _pair(pred, truth)
    return np.linalg.norm(truth[..., :2] - pred[..., :2], axis=-1)[..., None]


def compute_scores(kind, pred, truth, last_state, track=None):
    """按区域类型批量打分；rot-rect 与 circle 使用每个样本的最后观测位姿。"""
    require(kind in KINDS, f"未知区域类型 '{kind}'，可选 {KINDS}")
    if kind == 'frenet':
        if track is None:
            raise DataError("Frenet 区域需要赛道")
        return score_frenet(pred, truth, track)
    if kind == 'circle':
        return score_circle(pred, truth)
    return score_rotated_rect(pred, truth, LocalFrame.from_state(last_state))


def delta_bar(delta, mode, horizon, dims=2):
    """单步：对维度做并集界 δ/dims；多步：对步数和维度联合 δ/(dims·n)。"""
    require(0 < delta < 1, f"δ 必须位于 (0, 1)，当前 {delta}")
    require(mode in MODES, f"未知模式 '{mode}'，可选 {MODES}")
    return delta / dims if mode == 'single-step' else delta / (dims * horizon)


def conformal_rank(count, dbar):
    """有限样本修正的次序统计量序号 k = ⌈(1−δ̄)(M+1)⌉（从 1 开始）。"""
    return int(math.ceil((1 - dbar) * (count + 1) - CEIL_EPS))


def minimum_samples(dbar):
    """使 k ≤ M 成立的最小验证样本数 ⌈(1−δ̄)/δ̄⌉。"""
    return int(math.ceil((1 - dbar) / dbar - CEIL_EPS))


def conformal_quantile(values, dbar, axis=0):
    """沿 axis 取第 k 小的值。"""
    values = np.asarray(values, dtype=np.float64)
    count = values.shape[axis]
    k = conformal_rank(count, dbar)
    if k > count:
        raise InsufficientSamplesError(count, minimum_samples(dbar), dbar)
    return np.take(np.sort(values, axis=axis), k - 1, axis=axis)


@dataclass
class CalibratedRegion:
    kind: str
    mode: str
    delta: float
    delta_bar: float
    lower: np.ndarray
    upper: np.ndarray
    n_train: int = 0
    n_calibration: int = 0
    q_low: np.ndarray = None
    q_high: np.ndarray = None
    inflation: np.ndarray = None
    dims: tuple = field(default=None)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.dims is None:
            self.dims = DIMENSIONS[self.kind]
        if self.lower.shape != self.upper.shape:
            raise ShapeError("区域上下界形状不一致")
        if np.any(self.lower > self.upper):
            raise DataError("区域下界大于上界")

    @property
    def horizon(self):
        return self.lower.shape[0]

    def to_dict(self):
        return {
            'format': REGION_FORMAT,
            'kind': self.kind,
            'mode': self.mode,
            'delta': self.delta,
            'delta_bar': self.delta_bar,
            'dims': list(self.dims),
            'n_train': self.n_train,
            'n_calibration': self.n_calibration,
            'lower': self.lower.tolist(),
            'upper': self.upper.tolist(),
        }


def cqr_calibrate(train_scores, val_scores, delta=0.05, mode='single-step', kind='rot-rect'):
    """
    CQR 校准。

    q_low 取训练打分的 δ̄/2 分位（向下取次序统计量），q_high 取 1−δ̄/2 分位
    （向上取）；E 为验证集非一致性分数的第 ⌈(1−δ̄)(M+1)⌉ 小值。

    :param train_scores: (N, n, 2)
    :param val_scores: (M, n, 2)
    :param delta: 总失效概率
    :param mode: single-step（δ̄=δ/2）或 multi-step（δ̄=δ/(2n)）
    :return: CalibratedRegion
    """
    train_scores = np.asarray(train_scores, dtype=np.float64)
    val_scores = np.asarray(val_scores, dtype=np.float64)
    if train_scores.ndim != 3 or val_scores.ndim != 3 or train_scores.shape[1:] != val_scores.shape[1:]:
        raise ShapeError(f"打分形状必须为 (N, n, d) 且步数维数一致: {train_scores.shape} vs {val_scores.shape}")
    if train_scores.shape[0] == 0:
        raise DataError("训练打分为空")
    horizon, dims = val_scores.shape[1:]
    dbar = delta_bar(delta, mode, horizon, dims)
    count = val_scores.shape[0]
    if count < minimum_samples(dbar):
        raise InsufficientSamplesError(count, minimum_samples(dbar), dbar)
    q_low = np.quantile(train_scores, dbar / 2, axis=0, method='lower')
    q_high = np.quantile(train_scores, 1 - dbar / 2, axis=0, method='higher')
    nonconformity = np.maximum(q_low - val_scores, val_scores - q_high)
    inflation = conformal_quantile(nonconformity, dbar, axis=0)
    logger.info(f"CQR 校准 kind={kind} mode={mode} δ={delta} δ̄={dbar:.6g} M={count}")
    return CalibratedRegion(kind=kind, mode=mode, delta=delta, delta_bar=dbar,
                            lower=q_low - inflation, upper=q_high + inflation,
                            n_train=int(train_scores.shape[0]), n_calibration=count,
                            q_low=q_low, q_high=q_high, inflation=inflation)


def circle_calibrate(val_scores, delta=0.05, mode='single-step'):
    """
    圆形基线区域：每步取欧氏误差的保形分位数作为半径。

    :param val_scores: (M, n, 1) 或 (M, n) 欧氏误差
    """
    val_scores = np.asarray(val_scores, dtype=np.float64)
    if val_scores.ndim == 2:
        val_scores = val_scores[..., None]
    horizon = val_scores.shape[1]
    dbar = delta_bar(delta, mode, horizon, dims=1)
    count = val_scores.shape[0]
    if count < minimum_samples(dbar):
        raise InsufficientSamplesError(count, minimum_samples(dbar), dbar)
    radius = conformal_quantile(val_scores, dbar, axis=0)
    return CalibratedRegion(kind='circle', mode=mode, delta=delta, delta_bar=dbar,
                            lower=np.zeros_like(radius), upper=radius, n_calibration=count)


def calibrate(kind, train_scores, val_scores, delta=0.05, mode='single-step'):
    if kind == 'circle':
        return circle_calibrate(val_scores, delta, mode)
    return cqr_calibrate(train_scores, val_scores, delta, mode, kind)


def contains(region, scores):
    """
    批量包含判断（闭区间）。

    :param scores: (..., n, d)
    :return: (..., n, d) 逐维布尔数组
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[-2:] != region.lower.shape:
        raise ShapeError(f"打分形状 {scores.shape} 与区域 {region.lower.shape} 不一致")
    return (scores >= region.lower) & (scores <= region.upper)


def region_contains(region, score_sample, step):
    """
    单步包含判断。

    :param score_sample: 该步的 d 维打分
    :return: (逐维布尔数组, 各维同时满足)
    """
    score_sample = np.asarray(score_sample, dtype=np.float64)
    if not 0 <= step < region.horizon:
        raise DataError(f"步号 {step} 超出区域范围 [0, {region.horizon})")
    inside = (score_sample >= region.lower[step]) & (score_sample <= region.upper[step])
    return inside, bool(np.all(inside))


def coverage(region, scores):
    """
    覆盖率统计：单步逐维、单步联合（对所有样本和步平均），以及多步联合
    （所有步所有维都在区域内的样本比例）。
    """
    inside = contains(region, scores)
    joint = np.all(inside, axis=-1)
    result = {dim: float(inside[..., k].mean()) for k, dim in enumerate(region.dims)}
    result['joint'] = float(joint.mean())
    result['multi_step'] = float(np.all(joint, axis=-1).mean())
    return result


def _step_rates(region, scores):
    """单步模式区域的逐维及联合覆盖率（对样本和步平均）。"""
    cov = coverage(region, scores)
    return [cov[dim] for dim in region.dims] + ([cov['joint']] if len(region.dims) > 1 else [])


def _trajectory_rates(region, scores):
    """多步模式区域的逐维及联合覆盖率（整条预测都在区域内的样本比例）。"""
    inside = contains(region, scores)
    rates = [float(np.all(inside[..., k], axis=-1).mean()) for k in range(len(region.dims))]
    if len(region.dims) > 1:
        rates.append(coverage(region, scores)['multi_step'])
    return rates


def coverage_report(regions, scores):
    """
    覆盖率表，行为 x, y, x∧y, s, d, s∧d；有圆形区域时追加 r。

    single_step 列只用单步模式校准的区域，multi_step 列只用多步模式校准的区域，
    缺少对应模式时为 NaN。

    :param regions: {(kind, mode): CalibratedRegion}
    :param scores: {kind: (N, n, d) 测试集打分}
    :return: DataFrame，列 row / region / single_step / multi_step
    """
    kinds = ['rot-rect', 'frenet'] + (['circle'] if any(kind == 'circle' for kind, _ in regions) else [])
    rows = []
    for kind in kinds:
        dims = DIMENSIONS[kind]
        labels = [*dims, '∧'.join(dims)] if len(dims) > 1 else list(dims)
        single = regions.get((kind, 'single-step'))
        multi = regions.get((kind, 'multi-step'))
        single_rates = _step_rates(single, scores[kind]) if single is not None else [math.nan] * len(labels)
        multi_rates = _trajectory_rates(multi, scores[kind]) if multi is not None else [math.nan] * len(labels)
        for label, s, m in zip(labels, single_rates, multi_rates):
            rows.append({'row': label, 'region': kind, 'single_step': s, 'multi_step': m})
    return pd.DataFrame(rows, columns=['row', 'region', 'single_step', 'multi_step'])


def _rectangle(lo, hi, per_edge):
    t = np.linspace(0.0, 1.0, per_edge, endpoint=False)
    bottom = np.stack([lo[0] + (hi[0] - lo[0]) * t, np.full_like(t, lo[1])], axis=1)
    right = np.stack([np.full_like(t, hi[0]), lo[1] + (hi[1] - lo[1]) * t], axis=1)
    top = np.stack([hi[0] - (hi[0] - lo[0]) * t, np.full_like(t, hi[1])], axis=1)
    left = np.stack([np.full_like(t, lo[0]), hi[1] - (hi[1] - lo[1]) * t], axis=1)
    return np.vstack([bottom, right, top, left])


def region_polygons(region, pred, reference, per_edge=8):
    """
    把区域映射回世界坐标，每个预测步一个多边形。

    rot-rect：局部坐标系中轴对齐的矩形，四角经 from_local 变换（reference 为
    LocalFrame）。frenet：(s, d) 盒子的边界按 per_edge 个点采样后经 from_frenet
    映射，沿赛道弯曲（reference 为 Track）。circle：以预测点为圆心的多边形近似。

    :param pred: (n, ≥2) 世界坐标预测
    :return: (n, 4·per_edge, 2)
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape[0] != region.horizon:
        raise ShapeError(f"预测步数 {pred.shape[0]} 与区域步数 {region.horizon} 不一致")
    polygons = []
    if region.kind == 'circle':
        phi = np.linspace(0.0, 2 * np.pi, 4 * per_edge, endpoint=False)
        ring = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return pred[:, None, :2] + region.upper[:, 0][:, None, None] * ring[None]
    if region.kind == 'rot-rect':
        center = to_local(pred[:, :2], reference)
        for k in range(region.horizon):
            box = center[k] + _rectangle(region.lower[k], region.upper[k], per_edge)
            polygons.append(from_local(box, reference))
        return np.stack(polygons)
    center = to_frenet(pred[:, :2], reference)
    for k in range(region.horizon):
        box = center[k] + _rectangle(region.lower[k], region.upper[k], per_edge)
        polygons.append(from_frenet(box, reference))
    return np.stack(polygons)


def save_region(region, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(region.to_dict(), f, indent=2, ensure_ascii=False)
    return path


def load_region(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise DataError(f"区域文件不存在: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"区域文件不是合法 JSON: {path} ({e})")
    if payload.get('format') != REGION_FORMAT:
        raise DataError(f"{path} 不是区域文件")
    return CalibratedRegion(kind=payload['kind'], mode=payload['mode'], delta=payload['delta'],
                            delta_bar=payload['delta_bar'], lower=payload['lower'], upper=payload['upper'],
                            n_train=payload.get('n_train', 0), n_calibration=payload.get('n_calibration', 0),
                            dims=tuple(payload.get('dims', DIMENSIONS[payload['kind']])))
