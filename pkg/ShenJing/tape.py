"""
反向模式自动微分。

Tape 是只追加的操作记录：每个节点保存运算名、父节点下标和对应的
向量-雅可比积函数。节点按创建顺序追加，天然就是拓扑序，反向传播时
逆序遍历一次即可。

所有运算函数同时接受 numpy 数组和 Var：操作数中没有 Var 时直接返回
numpy 结果，不记录任何节点。这样动力学模型、LSTM 等代码只写一份，
推理时走纯 numpy，训练时走 Tape。
"""
import numpy as np

from errors import NonFiniteGradientError, SingularityError

# |cos δ| 小于该值时拒绝计算 tan
TAN_GUARD = 1e-6


class _Node:
    __slots__ = ('op', 'parents', 'vjps')

    def __init__(self, op, parents, vjps):
        self.op = op
        self.parents = parents
        self.vjps = vjps


class Tape:
    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def variable(self, value, name=None):
        """在 Tape 上登记一个叶子变量（参数或需要求导的输入）。"""
        value = np.array(value, dtype=np.float64)
        self.nodes.append(_Node(name or 'leaf', (), ()))
        return Var(self, len(self.nodes) - 1, value)

    def record(self, op, value, parents, vjps):
        self.nodes.append(_Node(op, tuple(p.index for p in parents), tuple(vjps)))
        return Var(self, len(self.nodes) - 1, value)

    def backward(self, loss):
        """
        从标量 loss 出发做一次反向传播。

        :param loss: Tape 上的标量 Var
        :return: Gradients，按变量查询梯度
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValueError("loss 必须是当前 Tape 上的变量")
        if np.size(loss.value) != 1:
            raise ValueError(f"loss 必须是标量，实际形状 {np.shape(loss.value)}")
        grads = [None] * (loss.index + 1)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            for parent, vjp in zip(node.parents, node.vjps):
                contrib = vjp(g)
                if not np.all(np.isfinite(contrib)):
                    raise NonFiniteGradientError(node.op, i)
                if grads[parent] is None:
                    grads[parent] = contrib
                else:
                    grads[parent] = grads[parent] + contrib
        return Gradients(grads)


class Gradients:
    def __init__(self, grads):
        self._grads = grads

    def wrt(self, var):
        """变量的梯度；与 loss 无关的变量返回全零。"""
        g = self._grads[var.index] if var.index < len(self._grads) else None
        if g is None:
            return np.zeros_like(var.value)
        return np.broadcast_to(g, var.value.shape).copy()

    def named(self, variables):
        return {name: self.wrt(var) for name, var in variables.items()}


class Var:
    __slots__ = ('tape', 'index', 'value')
    # numpy 数组与 Var 混合运算时交给 Var 的反射运算符处理
    __array_ufunc__ = None

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return mul(self, reciprocal(other))

    def __rtruediv__(self, other):
        return mul(other, reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g, shape):
    """把广播后的梯度累加回原始形状。"""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(op, a, b, fn, da, db):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = fn(av, bv)
    if tape is None:
        return out
    parents, vjps = [], []
    if isinstance(a, Var):
        shape = np.shape(av)
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(da(g, av, bv), shape))
    if isinstance(b, Var):
        shape_b = np.shape(bv)
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(db(g, av, bv), shape_b))
    return tape.record(op, out, parents, vjps)


def _unary(op, x, fn, dx):
    if not isinstance(x, Var):
        return fn(x)
    xv = x.value
    out = fn(xv)
    return x.tape.record(op, out, [x], [lambda g: dx(g, xv, out)])


# --- 基本运算 ---

def add(a, b):
    return _binary('add', a, b, np.add,
                   lambda g, a, b: g,
                   lambda g, a, b: g)


def sub(a, b):
    return _binary('sub', a, b, np.subtract,
                   lambda g, a, b: g,
                   lambda g, a, b: -g)


def mul(a, b):
    return _binary('mul', a, b, np.multiply,
                   lambda g, a, b: g * b,
                   lambda g, a, b: g * a)


def neg(x):
    return _unary('neg', x, np.negative, lambda g, x, y: -g)


def reciprocal(x):
    return _unary('reciprocal', x, lambda v: 1.0 / v, lambda g, x, y: -g * y * y)


def div(a, b):
    return mul(a, reciprocal(b))


def matmul(a, b):
    def grad_a(g, a, b):
        if np.ndim(b) == 1:
            return np.multiply.outer(g, b)
        return np.matmul(g, np.swapaxes(b, -1, -2))

    def grad_b(g, a, b):
        if np.ndim(a) == 1:
            return np.multiply.outer(a, g)
        if np.ndim(b) == 1:
            return np.einsum('...i,...->i', a, g)
        return np.matmul(np.swapaxes(a, -1, -2), g)

    return _binary('matmul', a, b, np.matmul, grad_a, grad_b)


def tanh(x):
    return _unary('tanh', x, np.tanh, lambda g, x, y: g * (1.0 - y * y))


def sigmoid(x):
    def fn(v):
        return 0.5 * (np.tanh(0.5 * v) + 1.0)
    return _unary('sigmoid', x, fn, lambda g, x, y: g * y * (1.0 - y))


def cos(x):
    return _unary('cos', x, np.cos, lambda g, x, y: -g * np.sin(x))


def sin(x):
    return _unary('sin', x, np.sin, lambda g, x, y: g * np.cos(x))


def tan(x):
    """tan = sin / cos，|cos| < TAN_GUARD 时拒绝。"""
    c = cos(x)
    cv = value_of(c)
    if np.any(np.abs(cv) < TAN_GUARD):
        raise SingularityError(f"tan 的自变量过于接近 ±π/2 (|cos|={np.min(np.abs(cv)):.3g})")
    return mul(sin(x), reciprocal(c))


def absolute(x):
    # |x| 在 0 处取次梯度 0
    return _unary('abs', x, np.abs, lambda g, x, y: g * np.sign(x))


def select(cond, a, b):
    """按布尔掩码 cond 从 a、b 中逐元素选取。"""
    cond = np.asarray(cond, dtype=bool)
    return _binary('select', a, b, lambda av, bv: np.where(cond, av, bv),
                   lambda g, av, bv: np.where(cond, g, 0.0),
                   lambda g, av, bv: np.where(cond, 0.0, g))


def square(x):
    return mul(x, x)


# --- 形状运算 ---

def getitem(x, key):
    if not isinstance(x, Var):
        return x[key]
    xv = x.value
    out = xv[key]

    basic = all(k is Ellipsis or k is None or isinstance(k, (int, slice))
                for k in (key if isinstance(key, tuple) else (key,)))

    def vjp(g):
        grad = np.zeros_like(xv)
        if basic:
            grad[key] = g
        else:
            np.add.at(grad, key, g)
        return grad

    return x.tape.record('getitem', out, [x], [vjp])


def stack(items, axis=0):
    tape = _tape_of(*items)
    values = [value_of(v) for v in items]
    out = np.stack(values, axis=axis)
    if tape is None:
        return out
    parents, vjps = [], []
    for i, item in enumerate(items):
        if isinstance(item, Var):
            shape = np.shape(values[i])
            parents.append(item)
            vjps.append(lambda g, i=i, shape=shape: np.broadcast_to(np.take(g, i, axis=axis), shape))
    return tape.record('stack', out, parents, vjps)


def concat(items, axis=-1):
    tape = _tape_of(*items)
    values = [value_of(v) for v in items]
    out = np.concatenate(values, axis=axis)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [np.shape(v)[axis] for v in values])
    parents, vjps = [], []
    for i, item in enumerate(items):
        if isinstance(item, Var):
            lo, hi = bounds[i], bounds[i + 1]
            parents.append(item)
            vjps.append(lambda g, lo=lo, hi=hi: np.take(g, np.arange(lo, hi), axis=axis))
    return tape.record('concat', out, parents, vjps)


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.reshape(x, shape)
    original = x.value.shape
    return x.tape.record('reshape', x.value.reshape(shape), [x],
                         [lambda g: np.reshape(g, original)])


def reduce_sum(x, axis=None):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    xv = x.value
    out = np.sum(xv, axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, xv.shape).copy()

    return x.tape.record('sum', np.asarray(out), [x], [vjp])


def reduce_mean(x, axis=None):
    xv = value_of(x)
    count = xv.size if axis is None else np.prod([xv.shape[a] for a in np.atleast_1d(axis)])
    return mul(reduce_sum(x, axis), 1.0 / count)
