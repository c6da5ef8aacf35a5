"""
fieldint - 离散化函数积分（CDM 积分器）的数值引擎
"""

__version__ = "1.0.0"

# 便于直接从包导入核心类
from .core.integrators import IntegratorSpec, integrate_analytic, integrate_mc
from .core.measures import DiracComb, IntegrableFunctional
from .core.quadforms import QuadFormPair, from_action_density, localize
from .core.spaces import Boundary, GridSpec, build_grid
