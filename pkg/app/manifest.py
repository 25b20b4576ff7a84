"""
运行清单：记录命令、配置快照、种子、输入输出路径及产物的 git 风格内容哈希。
"""
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

MANIFEST_NAME = 'manifest.json'


def git_hash(path):
    """与 `git hash-object` 相同：sha1(b'blob <长度>\\0' + 内容)。"""
    with open(path, 'rb') as f:
        data = f.read()
    digest = hashlib.sha1()
    digest.update(b'blob %d\0' % len(data))
    digest.update(data)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    def add_input(self, path):
        self.inputs[os.path.basename(path)] = git_hash(path) if os.path.isfile(path) else None

    def add_output(self, path, root=None):
        key = os.path.relpath(path, root) if root else os.path.basename(path)
        self.outputs[key.replace(os.sep, '/')] = git_hash(path)

    def add_outputs(self, paths, root=None):
        for path in paths:
            self.add_output(path, root)

    def timing(self, name, seconds):
        self.timings[name] = round(float(seconds), 3)

    def to_dict(self):
        return {
            'command': self.command,
            'seed': self.seed,
            'config': self.config,
            'inputs': dict(sorted(self.inputs.items())),
            'outputs': dict(sorted(self.outputs.items())),
            'timings': {**self.timings, 'total': round(time.time() - self.started, 3)},
        }

    def write(self, directory, name=MANIFEST_NAME):
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, ensure_ascii=False, default=_jsonable)
        return path


def load_manifest(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def _jsonable(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    if isinstance(value, (set, tuple)):
        return list(value)
    return str(value)
