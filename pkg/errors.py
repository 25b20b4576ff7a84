"""
项目统一的异常类型。

命令行根据异常所属的大类决定退出码：配置错误 2，数据错误 3，数值错误 4。
"""


class PcmpError(Exception):
    """所有业务异常的基类。"""
    exit_code = 1


class ConfigError(PcmpError, ValueError):
    exit_code = 2


class DataError(PcmpError, ValueError):
    exit_code = 3


class NumericalError(PcmpError, ArithmeticError):
    exit_code = 4


# --- 数值类 ---

class SingularityError(NumericalError):
    """tan 在 ±π/2 附近的奇异点。"""


class NonFiniteError(NumericalError):
    """计算结果出现 NaN 或 ∞。"""


class NonFiniteGradientError(NonFiniteError):
    def __init__(self, op, index):
        super().__init__(f"反向传播在节点 #{index} ({op}) 处得到非有限梯度")
        self.op = op
        self.index = index


class IntegrationError(NumericalError):
    def __init__(self, index, cause):
        super().__init__(f"积分第 {index} 步失败: {cause}")
        self.index = index
        self.cause = cause


class DivergenceError(NumericalError):
    """训练损失发散；last_good 保存最后一次有效的参数。"""

    def __init__(self, epoch, last_good=None):
        super().__init__(f"第 {epoch} 轮训练损失变为非有限值，训练中止")
        self.epoch = epoch
        self.last_good = last_good


# --- 数据类 ---

class ShapeError(DataError):
    pass


class InsufficientSamplesError(DataError):
    def __init__(self, available, minimum, delta_bar):
        super().__init__(
            f"校准样本不足: 当前 {available} 个, δ̄={delta_bar:.6g} 至少需要 {minimum} 个")
        self.available = available
        self.minimum = minimum
        self.delta_bar = delta_bar


class EmptyDatasetError(DataError):
    pass


class OffTrackError(DataError):
    def __init__(self, index, offset, limit):
        super().__init__(f"车辆在第 {index} 步驶出赛道: 横向偏移 {offset:.3f} m 超过上限 {limit:.3f} m")
        self.index = index


class CheckpointError(DataError):
    pass
