"""
Gauss-Hermite 张量积求积与 Hermite 多项式（物理学家约定 H0=1, H1=2x, H2=4x^2-2）
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite as npherm

from fieldint.utils.errors import QuadratureError

MAX_TENSOR_NODES = 2_000_000


@lru_cache(maxsize=64)
def _hermgauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = npherm.hermgauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=32)
def tensor_hermgauss(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """
    多维 Gauss-Hermite 节点与权重，近似 int exp(-|x|^2) f(x) dx ~ sum_k w_k f(x_k)

    Returns:
        nodes: (order^dim, dim)，weights: (order^dim,)
    """
    if order < 1 or dim < 1:
        raise QuadratureError(f"求积阶数与维度必须为正: order={order}, dim={dim}")
    if order ** dim > MAX_TENSOR_NODES:
        raise QuadratureError(f"张量积节点数 {order}^{dim} 过多")
    x, w = _hermgauss(order)
    nodes = np.array(list(itertools.product(*(x,) * dim)))
    weights = np.prod(np.array(list(itertools.product(*(w,) * dim))), axis=1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def hermite(n: int, x):
    """物理学家 Hermite 多项式 H_n(x)，x 可为复数数组"""
    if n < 0:
        raise ValueError(f"Hermite 阶数必须非负: {n}")
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    return npherm.hermval(x, coef)


def hermite_multi(alpha, x):
    """多指标乘积 H_alpha(x) = prod_i H_{alpha_i}(x_i)，x 的最后一维为 len(alpha)"""
    x = np.asarray(x)
    result = np.ones(x.shape[:-1], dtype=np.result_type(x, float))
    for i, a in enumerate(alpha):
        if a:
            result = result * hermite(int(a), x[..., i])
    return result
