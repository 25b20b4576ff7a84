"""
三个预测头：PCMP（意图 → 动力学积分）、LSTM 基线（直接解码状态增量）和 CTRV 基线。

网络只看最后观测位姿局部坐标系下的输入；预测在局部坐标系中生成后再变换回
世界坐标。前向函数对参数是否为 Tape 变量无感，训练和推理共用同一份代码。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from BaoXing.frames import LocalFrame, from_local, to_local
from config import require
from DongLi.integrate import DynamicsConfig, rollout, rollout_traced
from DongLi.models import CtrvModel, estimate_ctrv
from errors import ShapeError
from ShenJing import tape as T
from ShenJing.checkpoint import load_checkpoint, save_checkpoint
from ShenJing.layers import BoundedActivation, NetworkConfig, bound_controls, init_params, lstm_forward, mlp_forward

logger = logging.getLogger(__name__)

HEADS = ('pcmp', 'lstm', 'ctrv')
NET_HEADS = ('pcmp', 'lstm')


@dataclass(eq=False)
class ObservationWindow:
    states: np.ndarray
    context: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.context = np.atleast_1d(np.asarray(self.context, dtype=np.float64))
        if self.states.ndim != 2 or self.states.shape[0] < 1 or self.states.shape[1] != 4:
            raise ShapeError(f"观测窗口必须是 (l≥1, 4)，实际 {self.states.shape}")

    @property
    def last(self):
        return self.states[-1]


@dataclass(eq=False)
class PredictedTrajectory:
    states: np.ndarray
    source: str
    controls: np.ndarray = None

    def __len__(self):
        return self.states.shape[0]


@dataclass(eq=False)
class NetModel:
    """网络预测头的参数快照。"""
    head: str
    params: dict
    net: NetworkConfig

    def __post_init__(self):
        require(self.head in NET_HEADS, f"网络预测头必须是 {NET_HEADS}，当前 '{self.head}'")

    @classmethod
    def initialize(cls, head, net, seed=None):
        return cls(head, init_params(net, head, seed), net)

    def save(self, path, meta=None, optimizer_state=None):
        info = {'head': self.head, 'network': {
            'hidden_size': self.net.hidden_size, 'mlp_widths': list(self.net.mlp_widths),
            'obs_len': self.net.obs_len, 'horizon': self.net.horizon,
            'context_size': self.net.context_size, 'init_seed': self.net.init_seed}}
        info.update(meta or {})
        return save_checkpoint(path, self.params, info, optimizer_state)

    @classmethod
    def load(cls, path):
        params, meta, optimizer = load_checkpoint(path)
        model = cls(meta['head'], params, NetworkConfig.from_dict(meta['network']))
        return model, meta, optimizer


def localize(obs, context):
    """
    把观测变换到最后观测位姿的局部坐标系，并在每一步拼接上下文。

    :param obs: (B, l, 4)
    :param context: (B, c)
    :return: (features (B, l, 4+c), LocalFrame)
    """
    obs = np.asarray(obs, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    if obs.ndim != 3 or obs.shape[-1] != 4:
        raise ShapeError(f"观测必须是 (B, l, 4)，实际 {obs.shape}")
    if context.ndim != 2 or context.shape[0] != obs.shape[0]:
        raise ShapeError(f"上下文必须是 (B, c)，实际 {context.shape}")
    frame = LocalFrame.from_state(obs[:, -1])
    local = to_local(obs, frame)
    ctx = np.broadcast_to(context[:, None, :], (obs.shape[0], obs.shape[1], context.shape[1]))
    return np.concatenate([local, ctx], axis=-1), frame


def _origin(obs):
    """局部坐标系中的起始状态 (0, 0, 0, v_t)。"""
    v = np.asarray(obs, dtype=np.float64)[:, -1, 3]
    zeros = np.zeros_like(v)
    return zeros, zeros, zeros, v


def pcmp_forward(params, net, obs, context, dyn):
    """
    PCMP 前向：LSTM 编码 → MLP 解码 2n 维 → 有界激活得到控制序列 → 在局部
    坐标系中积分。

    :return: (局部轨迹 (B, n, 4), 控制量 (B, n, 2))，参数为 Var 时两者都是 Var
    """
    features, _ = localize(obs, context)
    h, _ = lstm_forward(params, features)
    raw = mlp_forward(params, h)
    batch, n = features.shape[0], net.horizon
    raw = T.reshape(raw, (batch, n, 2))
    u = bound_controls(raw, BoundedActivation(dyn.bounds.omega))
    controls = [(T.getitem(u, (slice(None), k, 0)), T.getitem(u, (slice(None), k, 1))) for k in range(n)]
    states = rollout_traced(_origin(obs), controls, dyn.model, dyn.integrator)
    traj = T.stack([T.stack(list(p), axis=-1) for p in states], axis=1)
    return traj, u


def lstm_forward_head(params, net, obs, context):
    """
    LSTM 基线：MLP 解码 4n 维逐步状态增量，累加到局部起始状态上。

    :return: 局部轨迹 (B, n, 4)
    """
    features, _ = localize(obs, context)
    h, _ = lstm_forward(params, features)
    raw = mlp_forward(params, h)
    batch, n = features.shape[0], net.horizon
    deltas = T.reshape(raw, (batch, n, 4))
    cumulative = np.tril(np.ones((n, n))) @ deltas
    origin = np.stack(_origin(obs), axis=-1)[:, None, :]
    return cumulative + origin


def forward_local(model, obs, context, dyn, params=None):
    """按预测头分派；返回 (局部轨迹, 控制量或 None)。"""
    params = model.params if params is None else params
    if model.head == 'pcmp':
        return pcmp_forward(params, model.net, obs, context, dyn)
    return lstm_forward_head(params, model.net, obs, context), None


def _to_world(traj_local, obs):
    frame = LocalFrame.from_state(np.asarray(obs, dtype=np.float64)[:, -1])
    return from_local(T.value_of(traj_local), frame)


def _single(obs):
    return obs.states[None], obs.context[None]


def pcmp_predict(obs, model, dyn):
    """
    单个观测窗口的 PCMP 预测。

    :param obs: ObservationWindow
    :param model: NetModel（head='pcmp'）
    :param dyn: DynamicsConfig
    :return: PredictedTrajectory，带控制序列
    """
    require(model.head == 'pcmp', f"pcmp_predict 需要 pcmp 参数，当前 '{model.head}'")
    states, context = _single(obs)
    traj, u = pcmp_forward(model.params, model.net, states, context, dyn)
    return PredictedTrajectory(_to_world(traj, states)[0], 'pcmp', np.asarray(T.value_of(u))[0])


def lstm_predict(obs, model):
    require(model.head == 'lstm', f"lstm_predict 需要 lstm 参数，当前 '{model.head}'")
    states, context = _single(obs)
    traj = lstm_forward_head(model.params, model.net, states, context)
    return PredictedTrajectory(_to_world(traj, states)[0], 'lstm')


def ctrv_predict(obs, dyn, horizon=60):
    """
    CTRV 基线：在观测窗口上估计 ω、v，再积分 horizon 步。

    :param obs: ObservationWindow，至少 2 个状态
    """
    params = estimate_ctrv(obs.states, dyn.integrator.ts)
    start = obs.last.copy()
    start[3] = params.v
    states = rollout(start, np.zeros((horizon, 2)), CtrvModel(params), dyn.integrator)
    return PredictedTrajectory(states, 'ctrv')


def predict_batch(head, obs, context, dyn, model=None, horizon=None, jobs=1, chunk=256):
    """
    批量预测。

    :param head: pcmp / lstm / ctrv
    :param obs: (B, l, 4)
    :param context: (B, c)
    :param model: NetModel，ctrv 不需要
    :param jobs: 并行分块数上限
    :return: (世界坐标轨迹 (B, n, 4), 控制量 (B, n, 2) 或 None)
    """
    require(head in HEADS, f"未知预测头 '{head}'，可选 {HEADS}")
    obs = np.asarray(obs, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    if head == 'ctrv':
        n = horizon or (model.net.horizon if model else 60)
        states = [ctrv_predict(ObservationWindow(o, c), dyn, n).states for o, c in zip(obs, context)]
        return (np.stack(states) if states else np.empty((0, n, 4))), None
    require(model is not None and model.head == head, f"预测头 {head} 需要对应的模型参数")

    def run(bounds):
        lo, hi = bounds
        traj, u = forward_local(model, obs[lo:hi], context[lo:hi], dyn)
        return _to_world(traj, obs[lo:hi]), (None if u is None else np.asarray(T.value_of(u)))

    ranges = [(lo, min(lo + chunk, len(obs))) for lo in range(0, len(obs), chunk)]
    if not ranges:
        n = model.net.horizon
        return np.empty((0, n, 4)), (np.empty((0, n, 2)) if head == 'pcmp' else None)
    if jobs > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, ranges))
    else:
        parts = [run(r) for r in ranges]
    states = np.concatenate([p[0] for p in parts])
    controls = None if head != 'pcmp' else np.concatenate([p[1] for p in parts])
    return states, controls


def describe_intent(controls, threshold=1e-3):
    """
    用文字概括预测的控制序列。按约定负转向角为左转；加速度符号区分加速与制动。

    转向标签只沿用上述符号约定，与自行车模型的航向变化无关：模型中 δ>0 使 θ 增大（逆时针）。

    :param controls: (n, 2) [δ, a]
    :return: {'turn': ..., 'speed': ...}
    """
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim != 2 or controls.shape[1] != 2:
        raise ShapeError(f"控制序列必须是 (n, 2)，实际 {controls.shape}")
    delta, acc = controls[:, 0], controls[:, 1]
    return {'turn': _label(delta, threshold, 'left turn', 'right turn', 'straight'),
            'speed': _label(acc, threshold, 'braking', 'accelerating', 'steady')}


def _label(values, threshold, negative, positive, neutral):
    if np.all(np.abs(values) <= threshold):
        return neutral
    if np.all(values <= threshold):
        return negative
    if np.all(values >= -threshold):
        return positive
    return 'mixed'
