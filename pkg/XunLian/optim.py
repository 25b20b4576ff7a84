"""
随机梯度下降优化器。step() 返回新的参数字典，原字典不被修改。
"""
import numpy as np

from config import require

OPTIMIZERS = ('sgd', 'momentum')


class SGD:
    def __init__(self, lr):
        require(lr >= 0, f"学习率不能为负，当前 {lr}")
        self.lr = lr

    def step(self, params, grads):
        return {name: value - self.lr * grads[name] for name, value in params.items()}

    def state(self):
        return {}

    def load_state(self, state):
        pass


class Momentum(SGD):
    """v ← μ·v + g，θ ← θ − lr·v。"""

    def __init__(self, lr, momentum=0.9):
        super().__init__(lr)
        require(0 <= momentum < 1, f"动量系数必须位于 [0, 1)，当前 {momentum}")
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        updated = {}
        for name, value in params.items():
            v = self.velocity.get(name)
            v = grads[name] if v is None else self.momentum * v + grads[name]
            self.velocity[name] = v
            updated[name] = value - self.lr * v
        return updated

    def state(self):
        return {f'velocity.{name}': v for name, v in self.velocity.items()}

    def load_state(self, state):
        self.velocity = {name[len('velocity.'):]: np.asarray(v, dtype=np.float64)
                         for name, v in state.items() if name.startswith('velocity.')}


def make_optimizer(name, lr, momentum=0.9):
    require(name in OPTIMIZERS, f"未知优化器 '{name}'，可选 {OPTIMIZERS}")
    if name == 'sgd':
        return SGD(lr)
    return Momentum(lr, momentum)
