"""
fieldint 实验模块 - d+1 维格点上的边界条件空间、两点函数与 Hermite 期望值
"""
