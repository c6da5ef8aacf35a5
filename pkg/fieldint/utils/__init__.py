"""
fieldint 工具模块 - 日志、异常、文件暂存与确定性并行
"""
