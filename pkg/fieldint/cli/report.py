"""
产物写出 - CSV 表格（UTF-8，带表头，复数拆成 re/im 两列）与 JSON 清单
"""
import csv
import json

import numpy as np

from fieldint.utils.logger import get_logger

logger = get_logger("report")


def format_value(value):
    """浮点数用 17 位有效数字写出，保证可逐位复现"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def complex_columns(z):
    z = complex(z)
    return [z.real, z.imag]


def write_csv(path, header, rows):
    """
    写出 CSV

    Args:
        path: 文件路径（应位于暂存目录中）
        header: 列名列表
        rows: 行的可迭代对象
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.debug(f"已写出 {count} 行: {path}")
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def write_manifest(path, manifest):
    """写出 JSON 清单（键排序，便于比较）"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(manifest), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path
