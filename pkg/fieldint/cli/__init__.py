"""
fieldint CLI 模块 - 校验子命令
"""
