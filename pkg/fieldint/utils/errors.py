"""
异常类型 - 数值模块抛出，CLI 层按类型映射退出码
"""


class FieldIntError(Exception):
    """所有 fieldint 异常的基类"""


class ConfigError(FieldIntError):
    """配置无效（网格尺寸、样本数、参数范围等），CLI 退出码 2"""


class DimensionError(FieldIntError):
    """向量/矩阵维度或网格不匹配"""


class DomainError(FieldIntError):
    """参数超出定义域，例如 t_b <= t_a"""


class DegeneracyError(FieldIntError):
    """二次型退化或矩阵奇异"""


class LocalizationError(FieldIntError):
    """局域化行向量线性相关，或 Wm 的实部非正定"""


class UnsupportedError(FieldIntError):
    """积分器类型不支持该操作"""


class SamplingError(FieldIntError):
    """蒙特卡洛采样得到非有限值"""


class DevelopmentError(FieldIntError):
    """路径展开失败：向量场求值出错、不动点迭代不收敛或范数爆炸"""


class QuadratureError(FieldIntError):
    """求积阶数不足或维度过高"""


class ResolutionError(QuadratureError):
    """求积尾部误差超出容差"""


class LegendreError(FieldIntError):
    """平均场不可逆，Legendre 变换无法进行"""
