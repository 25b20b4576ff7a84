"""
参数检查点：带版本号的 JSON 文件，按名称保存参数数组及其形状。

浮点数以 repr 写出，读回后逐位一致。
"""
import json
import os

import numpy as np

from errors import CheckpointError

FORMAT = 'pcmp-checkpoint'
VERSION = 1


def save_checkpoint(path, params, meta=None, optimizer_state=None):
    """
    保存参数检查点。

    :param path: 输出文件路径
    :param params: {参数名: 数组}
    :param meta: 可 JSON 序列化的元信息（head、配置快照、轮次等）
    :param optimizer_state: {参数名: 数组}，例如动量缓冲
    :return: 写入的文件路径
    """
    payload = {
        'format': FORMAT,
        'version': VERSION,
        'meta': meta or {},
        'params': _encode(params),
        'optimizer': _encode(optimizer_state or {}),
    }
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, sort_keys=True)
    return path


def load_checkpoint(path):
    """
    读取检查点。

    :return: (params, meta, optimizer_state)
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise CheckpointError(f"检查点文件不存在: {path}")
    except json.JSONDecodeError as e:
        raise CheckpointError(f"检查点文件不是合法 JSON: {path} ({e})")
    if payload.get('format') != FORMAT:
        raise CheckpointError(f"{path} 不是参数检查点文件")
    if payload.get('version') != VERSION:
        raise CheckpointError(f"不支持的检查点版本 {payload.get('version')}，当前版本 {VERSION}")
    return _decode(payload['params']), payload.get('meta', {}), _decode(payload.get('optimizer', {}))


def _encode(arrays):
    return {name: {'shape': list(np.shape(a)), 'data': np.asarray(a, dtype=np.float64).ravel().tolist()}
            for name, a in sorted(arrays.items())}


def _decode(entries):
    arrays = {}
    for name, entry in entries.items():
        data = np.asarray(entry['data'], dtype=np.float64)
        shape = tuple(entry['shape'])
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"参数 {name} 的数据长度 {data.size} 与形状 {shape} 不符")
        arrays[name] = data.reshape(shape)
    return arrays
