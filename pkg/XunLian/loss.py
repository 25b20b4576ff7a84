"""
损失函数：加权 L1 与递增预测步长的课程损失。
"""
from dataclasses import dataclass, field

import numpy as np

from config import require
from errors import ConfigError, ShapeError
from ShenJing import tape as T


@dataclass(frozen=True)
class LossWeights:
    """按 (x, y, θ, v) 的逐通道权重，默认航向误差乘 4、速度不计入。"""
    lam: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 4.0, 0.0]))

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        require(lam.shape == (4,), f"损失权重必须是 4 维，实际 {lam.shape}")
        require(np.all(lam >= 0), f"损失权重不能为负: {lam}")
        object.__setattr__(self, 'lam', lam)


@dataclass(frozen=True)
class CurriculumSchedule:
    h0: int = 1
    epochs_per_increment: int = 2
    h_max: int = 60
    enabled: bool = True

    def __post_init__(self):
        require(1 <= self.h0 <= self.h_max, f"h0 必须位于 [1, {self.h_max}]，当前 {self.h0}")
        require(self.epochs_per_increment >= 1, "epochs_per_increment 至少为 1")

    @classmethod
    def from_dict(cls, section, horizon):
        return cls(h0=int(section.get('h0', 1)), epochs_per_increment=int(section.get('epochs_per_increment', 2)),
                   h_max=int(horizon), enabled=bool(section.get('enabled', True)))

    def horizon(self, epoch):
        """第 epoch 轮（从 0 开始）参与损失的步数。"""
        if not self.enabled:
            return self.h_max
        return min(self.h_max, self.h0 + epoch // self.epochs_per_increment)


def _check(target, pred):
    shape_t = np.shape(target)
    shape_p = np.shape(T.value_of(pred))
    if shape_t != shape_p:
        raise ShapeError(f"预测与目标形状不一致: {shape_p} vs {shape_t}")
    if len(shape_t) < 2 or shape_t[-1] != 4:
        raise ShapeError(f"轨迹必须是 (..., n, 4)，实际 {shape_t}")


def weighted_l1_loss(target, pred, lam=None):
    """
    L = (1/n)·Σ_k Σ_c λ_c·|F − F̂|，带批维时再对样本取平均。

    :param target: (..., n, 4) 真值
    :param pred: (..., n, 4) 预测，可以是 Var
    :param lam: 长度 4 的权重，默认 [1, 1, 4, 0]
    """
    _check(target, pred)
    lam = LossWeights().lam if lam is None else LossWeights(lam).lam
    err = T.absolute(T.sub(pred, target))
    per_step = T.reduce_sum(T.mul(err, lam), axis=-1)
    return T.reduce_mean(per_step)


def curriculum_loss(target, pred, lam=None, h=None):
    """只对前 h 步求平均的加权 L1；h = n 时与 weighted_l1_loss 相同。"""
    _check(target, pred)
    n = np.shape(target)[-2]
    h = n if h is None else h
    if not 1 <= h <= n:
        raise ConfigError(f"课程步长 h 必须位于 [1, {n}]，当前 {h}")
    if h == n:
        return weighted_l1_loss(target, pred, lam)
    window = (Ellipsis, slice(0, h), slice(None))
    return weighted_l1_loss(np.asarray(target)[window], T.getitem(pred, window), lam)
