"""
fieldint 数值核心 - 离散函数空间、二次型、测度、积分器、参数化与有效作用量
"""
