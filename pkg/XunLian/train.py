"""
训练循环。

每轮用 (seed, epoch) 派生的随机数流打乱样本，因此从检查点恢复后的损失
序列与不间断训练完全一致。损失在最后观测位姿的局部坐标系中计算。
"""
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from BaoXing.frames import LocalFrame, to_local
from config import require
from errors import DivergenceError, EmptyDatasetError, NumericalError, ShapeError
from ShenJing.tape import Tape
from XunLian.loss import LossWeights, curriculum_loss
from XunLian.optim import OPTIMIZERS, make_optimizer
from YuCe.heads import NET_HEADS, NetModel, forward_local, predict_batch
from ZhiBiao.achieve import convert_seconds, evaluate

logger = logging.getLogger(__name__)

LOG_COLUMNS = ['epoch', 'horizon', 'train_loss', 'val_ade', 'val_fde', 'val_iou', 'elapsed']


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 350
    lr: float = 1e-3
    optimizer: str = 'momentum'
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0
    weights: tuple = (1.0, 1.0, 4.0, 0.0)
    eval_every: int = 10

    def __post_init__(self):
        require(self.epochs > 0, f"训练轮数必须为正，当前 {self.epochs}")
        require(self.lr >= 0, f"学习率不能为负，当前 {self.lr}")
        require(self.optimizer in OPTIMIZERS, f"未知优化器 '{self.optimizer}'，可选 {OPTIMIZERS}")
        require(self.batch_size > 0, "batch_size 必须为正")
        require(self.eval_every >= 0, "eval_every 不能为负")
        LossWeights(self.weights)

    @classmethod
    def from_dict(cls, section, preset=None):
        epochs = section['long_epochs'] if preset == 'long' else section['epochs']
        return cls(epochs=int(epochs), lr=float(section['lr']), optimizer=section['optimizer'],
                   momentum=float(section.get('momentum', 0.9)), batch_size=int(section['batch_size']),
                   seed=int(section['seed']), weights=tuple(float(w) for w in section['weights']),
                   eval_every=int(section.get('eval_every', 10)))


@dataclass
class TrainResult:
    model: NetModel
    history: pd.DataFrame
    optimizer_state: dict
    epochs_done: int


def local_targets(dataset):
    """目标轨迹变换到各自最后观测位姿的局部坐标系。"""
    return to_local(dataset.target, LocalFrame.from_state(dataset.last_state))


def batch_loss(model, params, obs, context, target_local, dyn, lam, h):
    """在新 Tape 上计算一个批次的损失与梯度。"""
    tape = Tape()
    variables = {name: tape.variable(value, name) for name, value in params.items()}
    pred, _ = forward_local(model, obs, context, dyn, params=variables)
    loss = curriculum_loss(target_local, pred, lam, h)
    grads = tape.backward(loss).named(variables)
    return float(loss.value), grads


def validate(model, dataset, dyn, footprint=None):
    states, _ = predict_batch(model.head, dataset.obs, dataset.context, dyn, model)
    report = evaluate(states, dataset.target, footprint)
    return report.ade, report.fde, report.iou


def train(dataset, head, cfg, dyn, net=None, schedule=None, val=None, footprint=None, model=None,
          start_epoch=0, optimizer_state=None, history=None, on_epoch=None):
    """
    训练 PCMP 或 LSTM 预测头。

    :param dataset: 训练集 Dataset
    :param head: 'pcmp' 或 'lstm'
    :param cfg: TrainConfig
    :param dyn: DynamicsConfig
    :param net: NetworkConfig，model 为 None 时用于初始化
    :param schedule: CurriculumSchedule，None 表示始终使用完整预测步长
    :param val: 验证集，每 eval_every 轮及最后一轮评估 ADE/FDE/IoU
    :param model: 从检查点恢复时的模型
    :param start_epoch: 已完成的轮数
    :param optimizer_state: 从检查点恢复时的优化器状态
    :param history: 已有的逐轮记录
    :param on_epoch: 每轮结束的回调 (epoch, model, optimizer_state, history)
    :return: TrainResult
    :raises DivergenceError: 损失或梯度出现非有限值，last_good 为本轮开始时的模型
    """
    require(head in NET_HEADS, f"只能训练 {NET_HEADS}，当前 '{head}'")
    if len(dataset) == 0:
        raise EmptyDatasetError("训练集为空")
    model = model or NetModel.initialize(head, net)
    if dataset.horizon != model.net.horizon or dataset.obs_len != model.net.obs_len:
        raise ShapeError(f"数据集窗口 (l={dataset.obs_len}, n={dataset.horizon}) 与网络配置 "
                         f"(l={model.net.obs_len}, n={model.net.horizon}) 不一致")
    if dataset.context.shape[1] != model.net.context_size:
        raise ShapeError(f"数据集上下文维数 {dataset.context.shape[1]} 与网络配置 {model.net.context_size} 不一致")
    lam = LossWeights(cfg.weights).lam
    optimizer = make_optimizer(cfg.optimizer, cfg.lr, cfg.momentum)
    if optimizer_state:
        optimizer.load_state(optimizer_state)
    targets = local_targets(dataset)
    rows = [] if history is None else history.to_dict('records')
    params = dict(model.params)
    start = time.time()
    for epoch in range(start_epoch, cfg.epochs):
        h = schedule.horizon(epoch) if schedule else model.net.horizon
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(dataset))
        last_good = NetModel(head, dict(params), model.net)
        total = 0.0
        try:
            for lo in range(0, len(order), cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                loss, grads = batch_loss(model, params, dataset.obs[idx], dataset.context[idx], targets[idx],
                                         dyn, lam, h)
                if not math.isfinite(loss):
                    raise DivergenceError(epoch, last_good)
                total += loss * len(idx)
                params = optimizer.step(params, grads)
        except DivergenceError:
            raise
        except NumericalError as e:
            logger.error(f"第 {epoch} 轮出现数值错误: {e}")
            raise DivergenceError(epoch, last_good) from e
        model = NetModel(head, params, model.net)
        row = {'epoch': epoch, 'horizon': h, 'train_loss': total / len(dataset),
               'val_ade': math.nan, 'val_fde': math.nan, 'val_iou': math.nan,
               'elapsed': round(time.time() - start, 3)}
        last_epoch = epoch == cfg.epochs - 1
        if val is not None and len(val) and (last_epoch or (cfg.eval_every and (epoch + 1) % cfg.eval_every == 0)):
            row['val_ade'], row['val_fde'], row['val_iou'] = validate(model, val, dyn, footprint)
        rows.append(row)
        logger.info(f"epoch {epoch} h={h} loss={row['train_loss']:.6f} val_ade={row['val_ade']:.4f}")
        if on_epoch is not None:
            on_epoch(epoch, model, optimizer.state(), pd.DataFrame(rows, columns=LOG_COLUMNS))
    hours, minutes, seconds = convert_seconds(time.time() - start)
    logger.info(f"{head} 训练 {cfg.epochs - start_epoch} 轮，耗时 {hours}小时{minutes}分钟{seconds}秒")
    return TrainResult(model=model, history=pd.DataFrame(rows, columns=LOG_COLUMNS),
                       optimizer_state=optimizer.state(), epochs_done=cfg.epochs)
