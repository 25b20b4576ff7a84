"""
批量预测的文件读写。

输入与数据集 CSV 同格式（目标列可以缺省）；输出为长表，每行一个
(样本, 步)：sample,step,x,y,theta,v，PCMP 另有 delta,a。
"""
import numpy as np
import pandas as pd

from DongLi.models import STATE_NAMES
from errors import DataError, ShapeError

PREDICTION_COLUMNS = ['sample', 'step', *STATE_NAMES]


def load_windows(path):
    """
    :return: (obs (B, l, 4), context (B, c))
    """
    try:
        df = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f"观测文件不存在: {path}")
    obs_len = sum(1 for c in df.columns if c.startswith('o') and c.endswith('_x'))
    if obs_len == 0:
        raise DataError(f"{path} 中没有观测列 (o0_x, ...)")
    obs_cols = [f'o{i}_{c}' for i in range(obs_len) for c in STATE_NAMES]
    ctx_cols = sorted((c for c in df.columns if c.startswith('c') and c[1:].isdigit()), key=lambda c: int(c[1:]))
    missing = [c for c in obs_cols if c not in df.columns]
    if missing:
        raise DataError(f"{path} 缺少观测列 {missing[:5]}")
    obs = df[obs_cols].to_numpy(dtype=np.float64).reshape(len(df), obs_len, 4)
    context = df[ctx_cols].to_numpy(dtype=np.float64) if ctx_cols else np.zeros((len(df), 0))
    return obs, context


def write_predictions(path, states, controls=None):
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 3 or states.shape[-1] != 4:
        raise ShapeError(f"预测必须是 (B, n, 4)，实际 {states.shape}")
    batch, n = states.shape[:2]
    df = pd.DataFrame(states.reshape(-1, 4), columns=list(STATE_NAMES))
    df.insert(0, 'step', np.tile(np.arange(n), batch))
    df.insert(0, 'sample', np.repeat(np.arange(batch), n))
    if controls is not None:
        controls = np.asarray(controls, dtype=np.float64).reshape(-1, 2)
        df['delta'] = controls[:, 0]
        df['a'] = controls[:, 1]
    df.to_csv(path, index=False)
    return path


def read_predictions(path):
    """:return: (states (B, n, 4), controls 或 None)"""
    try:
        df = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f"预测文件不存在: {path}")
    missing = [c for c in PREDICTION_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path} 缺少列 {missing}")
    batch = int(df['sample'].max()) + 1 if len(df) else 0
    n = int(df['step'].max()) + 1 if len(df) else 0
    df = df.sort_values(['sample', 'step'])
    states = df[list(STATE_NAMES)].to_numpy(dtype=np.float64).reshape(batch, n, 4)
    controls = None
    if {'delta', 'a'} <= set(df.columns):
        controls = df[['delta', 'a']].to_numpy(dtype=np.float64).reshape(batch, n, 2)
    return states, controls
