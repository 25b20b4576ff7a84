"""
样本提取：从仿真轨迹切出不重叠的 (观测, 上下文, 未来) 窗口，
按 (路线, 控制器, 速度) 分层划分训练/验证/测试集，并读写数据集文件。
"""
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from config import require
from DongLi.models import STATE_NAMES
from errors import DataError, EmptyDatasetError, ShapeError

logger = logging.getLogger(__name__)

STRATUM_KEYS = ('raceline', 'controller', 'speed')
SPLITS = ('train', 'val', 'test')
# 观测噪声只加在 x、y、v 上
NOISY_CHANNELS = [0, 1, 3]


@dataclass(eq=False)
class Sample:
    obs: np.ndarray
    context: np.ndarray
    target: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class Dataset:
    obs: np.ndarray
    context: np.ndarray
    target: np.ndarray
    strata: pd.DataFrame

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float64)
        self.context = np.asarray(self.context, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        count = self.obs.shape[0]
        if self.obs.ndim != 3 or self.target.ndim != 3 or self.context.ndim != 2:
            raise ShapeError(f"数据集形状不合法: obs {self.obs.shape}, context {self.context.shape}, "
                             f"target {self.target.shape}")
        if self.context.shape[0] != count or self.target.shape[0] != count or len(self.strata) != count:
            raise ShapeError("数据集各部分样本数不一致")
        self.strata = self.strata.reset_index(drop=True)

    def __len__(self):
        return self.obs.shape[0]

    @property
    def obs_len(self):
        return self.obs.shape[1]

    @property
    def horizon(self):
        return self.target.shape[1]

    @property
    def last_state(self):
        return self.obs[:, -1, :]

    @classmethod
    def from_samples(cls, samples, obs_len, horizon, context_size):
        if not samples:
            return cls.empty(obs_len, horizon, context_size)
        strata = pd.DataFrame([{k: s.meta.get(k) for k in (*STRATUM_KEYS, 'trace')} for s in samples])
        return cls(np.stack([s.obs for s in samples]), np.stack([s.context for s in samples]),
                   np.stack([s.target for s in samples]), strata)

    @classmethod
    def empty(cls, obs_len, horizon, context_size):
        return cls(np.empty((0, obs_len, 4)), np.empty((0, context_size)), np.empty((0, horizon, 4)),
                   pd.DataFrame(columns=[*STRATUM_KEYS, 'trace']))

    @classmethod
    def concat(cls, datasets):
        datasets = list(datasets)
        if not datasets:
            raise EmptyDatasetError("没有可合并的数据集")
        return cls(np.concatenate([d.obs for d in datasets]), np.concatenate([d.context for d in datasets]),
                   np.concatenate([d.target for d in datasets]),
                   pd.concat([d.strata for d in datasets], ignore_index=True))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.obs[indices], self.context[indices], self.target[indices],
                       self.strata.iloc[indices])

    def filter(self, **conditions):
        """按分层字段筛选，例如 filter(raceline='race') 或 filter(raceline=['center', 'left'])。"""
        mask = np.ones(len(self), dtype=bool)
        for key, value in conditions.items():
            if key not in self.strata.columns:
                raise DataError(f"未知筛选字段 '{key}'，可选 {list(self.strata.columns)}")
            values = value if isinstance(value, (list, tuple, set)) else [value]
            column = self.strata[key]
            if key == 'speed':
                mask &= column.astype(float).isin([float(v) for v in values]).to_numpy()
            else:
                mask &= column.astype(str).isin([str(v) for v in values]).to_numpy()
        return self.subset(np.flatnonzero(mask))

    def stratum_counts(self):
        if len(self) == 0:
            return {}
        counts = self.strata.groupby(list(STRATUM_KEYS), sort=True).size()
        return {'/'.join(str(k) for k in key): int(v) for key, v in counts.items()}


def window(trace, l=10, n=60, noise_sigma=0.1, rng=None, track=None, context_lookahead=(1.0,)):
    """
    把轨迹切成不重叠的窗口，步长 l+n。

    观测的 x、y、v 加上 N(0, σ²) 噪声，θ 与目标保持无噪声。上下文 C 是
    最后一个观测位置（无噪声）前方 context_lookahead 米处的赛道曲率。

    :param trace: Trace
    :param rng: numpy Generator，噪声来源
    :param track: Track，为 None 时上下文全部为 0
    :return: Sample 列表；轨迹短于 l+n 时为空
    """
    require(l >= 1 and n >= 1, f"窗口长度必须为正 (l={l}, n={n})")
    require(noise_sigma >= 0, "噪声标准差不能为负")
    rng = rng if rng is not None else np.random.default_rng(0)
    stride = l + n
    count = len(trace) // stride
    if count == 0:
        logger.warning(f"轨迹长度 {len(trace)} 小于窗口长度 {stride}，没有生成样本 ({trace.meta})")
        return []
    lookahead = list(context_lookahead)
    samples = []
    for k in range(count):
        seg = trace.states[k * stride:(k + 1) * stride]
        obs = seg[:l].copy()
        if noise_sigma > 0:
            obs[:, NOISY_CHANNELS] += rng.normal(0.0, noise_sigma, size=(l, len(NOISY_CHANNELS)))
        if track is not None and lookahead:
            context = np.atleast_1d(track.forward_curvature(seg[l - 1, :2], lookahead)).astype(np.float64)
        else:
            context = np.zeros(len(lookahead))
        meta = {**trace.meta, 'trace': trace.meta.get('trace', 0), 'window': k}
        samples.append(Sample(obs=obs, context=context, target=seg[l:].copy(), meta=meta))
    return samples


def split(dataset, ratios=(0.8, 0.1, 0.1), seed=0, keys=STRATUM_KEYS):
    """
    分层划分。每个分层内部独立打乱，验证集和测试集各取四舍五入后的份额，
    其余进入训练集。

    :return: (train, val, test)
    """
    ratios = [float(r) for r in ratios]
    require(len(ratios) == 3 and min(ratios) >= 0 and abs(sum(ratios) - 1.0) < 1e-9,
            f"划分比例必须是三个非负数且和为 1，当前 {ratios}")
    if len(dataset) == 0:
        raise EmptyDatasetError("数据集为空，无法划分")
    parts = {name: [] for name in SPLITS}
    groups = dataset.strata.groupby(list(keys), sort=True).indices
    for gid, key in enumerate(sorted(groups, key=str)):
        members = np.asarray(groups[key])
        perm = np.random.default_rng([seed, gid]).permutation(members)
        m = perm.size
        n_val = int(round(m * ratios[1]))
        n_test = int(round(m * ratios[2]))
        n_train = max(m - n_val - n_test, 0)
        parts['train'].extend(perm[:n_train])
        parts['val'].extend(perm[n_train:n_train + n_val])
        parts['test'].extend(perm[n_train + n_val:])
    return tuple(dataset.subset(np.sort(np.asarray(parts[name], dtype=int))) for name in SPLITS)


def _columns(obs_len, context_size, horizon):
    obs = [f'o{i}_{c}' for i in range(obs_len) for c in STATE_NAMES]
    ctx = [f'c{j}' for j in range(context_size)]
    fut = [f'f{k}_{c}' for k in range(horizon) for c in STATE_NAMES]
    return obs, ctx, fut


def save_dataset(dataset, path):
    """每行一个样本：分层字段 + 展平的 O‖C‖F。"""
    obs_cols, ctx_cols, fut_cols = _columns(dataset.obs_len, dataset.context.shape[1], dataset.horizon)
    values = np.concatenate([dataset.obs.reshape(len(dataset), -1), dataset.context,
                             dataset.target.reshape(len(dataset), -1)], axis=1)
    keys = [c for c in (*STRATUM_KEYS, 'trace') if c in dataset.strata.columns]
    df = pd.concat([dataset.strata[keys].reset_index(drop=True),
                    pd.DataFrame(values, columns=obs_cols + ctx_cols + fut_cols)], axis=1)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def load_dataset(path):
    try:
        df = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f"数据集文件不存在: {path}")
    obs_len = sum(1 for c in df.columns if c.startswith('o') and c.endswith('_x'))
    horizon = sum(1 for c in df.columns if c.startswith('f') and c.endswith('_x'))
    context_size = sum(1 for c in df.columns if c.startswith('c') and c[1:].isdigit())
    if obs_len == 0 or horizon == 0:
        raise DataError(f"{path} 不是数据集文件（缺少观测或目标列）")
    obs_cols, ctx_cols, fut_cols = _columns(obs_len, context_size, horizon)
    missing = [c for c in [*STRATUM_KEYS, *obs_cols, *ctx_cols, *fut_cols] if c not in df.columns]
    if missing:
        raise DataError(f"{path} 缺少列 {missing[:5]}")
    count = len(df)
    strata = df[[*STRATUM_KEYS, 'trace']].copy() if 'trace' in df.columns else df[list(STRATUM_KEYS)].copy()
    return Dataset(df[obs_cols].to_numpy(dtype=np.float64).reshape(count, obs_len, 4),
                   df[ctx_cols].to_numpy(dtype=np.float64).reshape(count, context_size),
                   df[fut_cols].to_numpy(dtype=np.float64).reshape(count, horizon, 4), strata)


def write_dataset_manifest(directory, splits, seed, noise_sigma, extra=None):
    """数据集清单：每个划分的样本数与分层计数、种子、噪声标准差。"""
    manifest = {
        'seed': seed,
        'noise_sigma': noise_sigma,
        'splits': {name: {'count': len(ds), 'strata': ds.stratum_counts()} for name, ds in splits.items()},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(directory, 'dataset.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
    return path
