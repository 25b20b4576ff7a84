"""
神经网络组件：LSTM 单元、MLP 解码器和有界输出激活。

参数统一保存在 {名称: 数组} 字典里，训练时把每个数组登记为 Tape 变量，
推理时直接传数组，前向代码相同。
"""
from dataclasses import dataclass, field

import numpy as np

from config import require
from errors import ShapeError
from ShenJing import tape as T

GATES = ('i', 'f', 'g', 'o')


@dataclass(frozen=True)
class NetworkConfig:
    hidden_size: int = 16
    mlp_widths: tuple = (64,)
    obs_len: int = 10
    horizon: int = 60
    context_size: int = 1
    init_seed: int = 0
    state_size: int = 4

    def __post_init__(self):
        require(self.hidden_size > 0, "hidden_size 必须为正")
        require(self.horizon > 0 and self.obs_len > 0, "horizon 与 obs_len 必须为正")
        require(self.context_size >= 0, "context_size 不能为负")

    @classmethod
    def from_dict(cls, section):
        return cls(hidden_size=int(section['hidden_size']),
                   mlp_widths=tuple(int(w) for w in section['mlp_widths']),
                   obs_len=int(section['obs_len']),
                   horizon=int(section['horizon']),
                   context_size=int(section['context_size']),
                   init_seed=int(section['init_seed']))

    @property
    def input_size(self):
        return self.state_size + self.context_size

    def output_size(self, head):
        # PCMP 每步输出 (δ, a)，LSTM 基线每步输出四维状态增量
        per_step = 2 if head == 'pcmp' else self.state_size
        return per_step * self.horizon


@dataclass(frozen=True)
class BoundedActivation:
    """φ_ω(a) = ω·tanh(a)，按通道缩放。"""
    omega: np.ndarray = field(default_factory=lambda: np.array([7 * np.pi / 16, 20.0]))

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.float64)
        require(np.all(omega > 0), "ω 必须逐元素为正")
        object.__setattr__(self, 'omega', omega)


def bound_controls(raw, act):
    """
    把网络原始输出映射为严格位于 (−ω, ω) 内的控制量。

    :param raw: 形状 (..., k) 的原始输出，k 与 ω 的长度一致
    :param act: BoundedActivation
    :return: ω∘tanh(raw)
    """
    return T.mul(T.tanh(raw), act.omega)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg, head, seed=None):
    """
    按 uniform(−1/√fan_in, 1/√fan_in) 初始化 LSTM 编码器和 MLP 解码器。

    :param cfg: NetworkConfig
    :param head: 'pcmp' 或 'lstm'，决定解码器输出宽度
    :param seed: 随机种子，默认取 cfg.init_seed
    :return: {参数名: float64 数组}
    """
    rng = np.random.default_rng(cfg.init_seed if seed is None else seed)
    H, F = cfg.hidden_size, cfg.input_size
    params = {}
    for gate in GATES:
        params[f'lstm.Wx_{gate}'] = _uniform(rng, H, (F, H))
        params[f'lstm.Wh_{gate}'] = _uniform(rng, H, (H, H))
        params[f'lstm.b_{gate}'] = _uniform(rng, H, (H,))
    widths = [H, *cfg.mlp_widths, cfg.output_size(head)]
    for k in range(len(widths) - 1):
        params[f'mlp.W{k}'] = _uniform(rng, widths[k], (widths[k], widths[k + 1]))
        params[f'mlp.b{k}'] = _uniform(rng, widths[k], (widths[k + 1],))
    return params


def lstm_forward(params, inputs):
    """
    标准 LSTM 递推。

    :param params: 含 lstm.* 的参数字典（数组或 Var）
    :param inputs: (B, T, F) 输入序列
    :return: (最后一步隐状态 (B, H), 每一步隐状态列表)
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ShapeError(f"LSTM 输入必须是 (B, T, F)，实际 {inputs.shape}")
    H = T.value_of(params['lstm.b_i']).shape[0]
    F = T.value_of(params['lstm.Wx_i']).shape[0]
    if inputs.shape[2] != F:
        raise ShapeError(f"LSTM 输入宽度 {inputs.shape[2]} 与参数宽度 {F} 不符")
    batch = inputs.shape[0]
    h = np.zeros((batch, H))
    c = np.zeros((batch, H))
    hidden = []
    for t in range(inputs.shape[1]):
        x = inputs[:, t, :]
        pre = {g: x @ params[f'lstm.Wx_{g}'] + h @ params[f'lstm.Wh_{g}'] + params[f'lstm.b_{g}']
               for g in GATES}
        i = T.sigmoid(pre['i'])
        f = T.sigmoid(pre['f'])
        g = T.tanh(pre['g'])
        o = T.sigmoid(pre['o'])
        c = f * c + i * g
        h = o * T.tanh(c)
        hidden.append(h)
    return h, hidden


def mlp_forward(params, x, prefix='mlp'):
    """仿射层之间用 tanh，最后一层线性输出。"""
    k = 0
    while f'{prefix}.W{k}' in params:
        fan_in = T.value_of(params[f'{prefix}.W{k}']).shape[0]
        if np.shape(T.value_of(x))[-1] != fan_in:
            raise ShapeError(f"{prefix} 第 {k} 层输入宽度 {np.shape(T.value_of(x))[-1]} 与权重 {fan_in} 不符")
        x = x @ params[f'{prefix}.W{k}'] + params[f'{prefix}.b{k}']
        if f'{prefix}.W{k + 1}' in params:
            x = T.tanh(x)
        k += 1
    if k == 0:
        raise ShapeError(f"参数中没有 {prefix}.W0")
    return x
