"""
确定性并行蒙特卡洛工具

样本按固定大小分块，每块使用由 (seed, block_index) 决定的 Philox 计数器随机流；
块统计量按块序号做固定二叉树归约，因此结果与工作线程数无关（逐位一致）。
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

from .errors import ConfigError
from .logger import get_logger

logger = get_logger("parallel")

T = TypeVar("T")

DEFAULT_BLOCK_SIZE = 4096


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """返回第 block_index 块的随机数发生器，只依赖 (seed, block_index)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block_index)])))


def block_ranges(count: int, block_size: int = DEFAULT_BLOCK_SIZE) -> list[tuple[int, int]]:
    """把 [0, count) 切成固定的块，块划分与工作线程数无关"""
    if count < 1:
        raise ConfigError(f"样本数必须为正整数: {count}")
    if block_size < 1:
        raise ConfigError(f"块大小必须为正整数: {block_size}")
    return [(start, min(start + block_size, count)) for start in range(0, count, block_size)]


def map_blocks(fn: Callable[[int], T], n_blocks: int, workers: int = 1) -> list[T]:
    """按块序号有序地执行 fn；workers > 1 时使用线程池（numpy 运算会释放 GIL）"""
    if workers is None or workers <= 1 or n_blocks <= 1:
        return [fn(i) for i in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


@dataclass(frozen=True)
class MomentAccumulator:
    """样本数、均值与离差平方和 M2（复数分量取模平方），可按 Chan 公式合并"""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray) -> "MomentAccumulator":
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None]
        mean = values.mean(axis=0)
        dev = values - mean
        m2 = np.sum((dev * dev.conj()).real, axis=0)
        return cls(values.shape[0], mean, m2)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + (delta * delta.conj()).real * (self.count * other.count / n)
        return MomentAccumulator(n, mean, m2)

    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.m2)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def pairwise_reduce(items: Sequence[MomentAccumulator]) -> MomentAccumulator:
    """按块序号做固定二叉树归约"""
    level = list(items)
    if not level:
        raise ValueError("没有可归约的块")
    while len(level) > 1:
        nxt = [level[i].merge(level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]
