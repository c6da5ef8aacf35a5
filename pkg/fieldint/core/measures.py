"""
有限 Dirac 梳测度 mu 及其诱导的可积泛函 F_mu

mu = sum_k c_k delta_{b'_k}，于是 F_mu(b) = sum_k c_k Theta(b, b'_k)，
定义 3 的右端 sum_k c_k Z(b'_k) 可以精确计算，成为所有数值积分的基准。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from fieldint.core.quadforms import QuadFormPair
from fieldint.core.quadrature import hermite
from fieldint.core.spaces import DomainGrid, DualVector, FieldVector, as_dual_rows
from fieldint.utils.errors import ConfigError, DimensionError

TWO_PI_I = 2j * np.pi


@dataclass(frozen=True, eq=False)
class DiracComb:
    points: tuple[DualVector, ...]
    weights: np.ndarray = field(repr=False)
    grid: Optional[DomainGrid] = None

    def __post_init__(self):
        points = tuple(self.points)
        weights = np.array(self.weights, dtype=complex).reshape(-1)
        if len(points) != weights.shape[0]:
            raise DimensionError(f"点数 {len(points)} 与权重数 {weights.shape[0]} 不一致")
        grid = self.grid if self.grid is not None else (points[0].grid if points else None)
        for p in points:
            if not isinstance(p, DualVector):
                raise DimensionError("Dirac 梳的支撑点必须是 DualVector")
            if grid is not None and not grid.compatible(p.grid):
                raise DimensionError("Dirac 梳的支撑点不在同一网格上")
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "grid", grid)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def dirac(cls, point: DualVector, weight: complex = 1.0) -> "DiracComb":
        return cls((point,), np.array([weight]))

    @classmethod
    def zero(cls, grid: Optional[DomainGrid] = None) -> "DiracComb":
        return cls((), np.zeros(0, dtype=complex), grid)

    @classmethod
    def random(cls, grid: DomainGrid, count: int, rng: np.random.Generator,
               rank: Optional[int] = None, scale: float = 1.0) -> "DiracComb":
        """
        随机梳：count 个点、复权重；rank 给定时所有点落在 rank 维子空间中
        （定义 3 的局域化校验需要 m <= 3）
        """
        if count < 1:
            raise ConfigError(f"梳的点数必须为正: {count}")
        if rank is None:
            coords = rng.standard_normal((count, grid.size))
        else:
            basis = rng.standard_normal((rank, grid.size))
            coords = rng.standard_normal((count, rank)) @ basis
        coords *= scale / np.sqrt(grid.size)
        points = tuple(DualVector(grid, row) for row in coords)
        weights = rng.standard_normal(count) + 1j * rng.standard_normal(count)
        return cls(points, weights, grid)

    def point_matrix(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, self.grid.size if self.grid else 0), dtype=complex)
        return as_dual_rows(list(self.points))

    def scaled(self, factor: complex) -> "DiracComb":
        return DiracComb(self.points, complex(factor) * self.weights, self.grid)

    def combine(self, other: "DiracComb", a: complex = 1.0, b: complex = 1.0) -> "DiracComb":
        """a * mu + b * nu（支撑点拼接）"""
        grid = self.grid or other.grid
        if self.grid is not None and other.grid is not None and not self.grid.compatible(other.grid):
            raise DimensionError("两个梳不在同一网格上")
        return DiracComb(
            self.points + other.points,
            np.concatenate([complex(a) * self.weights, complex(b) * other.weights]),
            grid,
        )

    def pushforward(self, R, grid: Optional[DomainGrid] = None) -> "DiracComb":
        """nu = mu o R^{-1}：支撑点 y'_k 映到 R y'_k"""
        R = np.asarray(R)
        target = grid or self.grid
        points = tuple(DualVector(target, R @ p.values) for p in self.points)
        return DiracComb(points, self.weights, target)


def total_variation(comb: DiracComb) -> float:
    """全变差 sum_k |c_k|"""
    return float(np.sum(np.abs(comb.weights)))


def convolve(a: DiracComb, b: DiracComb) -> DiracComb:
    """乘积空间上的卷积：支撑点 (a_j, b_k)，权重 c_j d_k"""
    points, weights = [], []
    for pj, cj in zip(a.points, a.weights):
        for pk, dk in zip(b.points, b.weights):
            points.append(pj.concat(pk))
            weights.append(cj * dk)
    return DiracComb(tuple(points), np.array(weights, dtype=complex))


class ThetaKind(str, Enum):
    PHASE_ONLY = "phase"
    GAUSSIAN_WEIGHTED = "gaussian"
    HERMITE_WEIGHTED = "hermite"


@dataclass(frozen=True, eq=False)
class IntegrableFunctional:
    """
    F_mu(b) = sum_k c_k Theta(b, b'_k)

    Hermite 情形省略无限维前因子 (Det pi W / 2)^{n/2}，只在局域化公式中恢复。
    """

    comb: DiracComb
    kind: ThetaKind
    qf: QuadFormPair
    s: complex = 1.0
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ThetaKind(self.kind))
        if self.kind is ThetaKind.HERMITE_WEIGHTED and self.n < 0:
            raise ConfigError(f"Hermite 阶数必须非负: {self.n}")
        if self.kind is ThetaKind.GAUSSIAN_WEIGHTED and not complex(self.s).real > 0:
            raise ConfigError(f"高斯参数 s 需满足 Re(s) > 0: {self.s}")
        if self.comb.grid is not None and not self.comb.grid.compatible(self.qf.grid):
            raise DimensionError("梳与二次型不在同一网格上")

    def phase_part(self, samples) -> np.ndarray:
        """F mu(b) = sum_k c_k exp(-2 pi i <b'_k, b>)，samples 形状 (count, N)"""
        samples = np.atleast_2d(np.asarray(samples))
        if samples.shape[-1] != self.qf.size:
            raise DimensionError(f"样本维度 {samples.shape[-1]} 与网格格点数 {self.qf.size} 不一致")
        if not len(self.comb):
            return np.zeros(samples.shape[0], dtype=complex)
        P = self.comb.point_matrix()
        return np.exp(-TWO_PI_I * (samples @ P.T)) @ self.comb.weights

    def theta_prefactor(self, samples) -> np.ndarray:
        samples = np.atleast_2d(np.asarray(samples))
        if self.kind is ThetaKind.PHASE_ONLY:
            return np.ones(samples.shape[0], dtype=complex)
        Q = np.einsum("ki,ij,kj->k", samples, self.qf.A, samples)
        if self.kind is ThetaKind.GAUSSIAN_WEIGHTED:
            return np.exp(-(np.pi / complex(self.s)) * Q)
        return hermite(self.n, np.sqrt(np.pi * Q.astype(complex))) * np.exp(-np.pi * Q)

    def batch_eval(self, samples) -> np.ndarray:
        return self.theta_prefactor(samples) * self.phase_part(samples)


def f_mu_eval(F: IntegrableFunctional, b: FieldVector) -> complex:
    """在单个场向量上求 F_mu(b)"""
    if not isinstance(b, FieldVector):
        raise DimensionError("f_mu_eval 需要 FieldVector")
    if not b.grid.compatible(F.qf.grid):
        raise DimensionError("场向量与泛函不在同一网格上")
    return complex(F.batch_eval(b.values[None, :])[0])


def comb_to_json(comb: DiracComb) -> list[dict]:
    """[{point: [[re, im], ...], weight: [re, im]}, ...]"""
    return [
        {
            "point": [[float(v.real), float(v.imag)] for v in p.values],
            "weight": [float(c.real), float(c.imag)],
        }
        for p, c in zip(comb.points, comb.weights)
    ]


def _parse_complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"复数应写成 [re, im]: {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def comb_from_json(grid: DomainGrid, data: Sequence[dict]) -> DiracComb:
    """读取 comb_to_json 的格式；point 也可以是实数列表"""
    points, weights = [], []
    try:
        for entry in data:
            values = np.array([_parse_complex(v) for v in entry["point"]], dtype=complex)
            points.append(DualVector(grid, values))
            weights.append(_parse_complex(entry.get("weight", [1.0, 0.0])))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"无法解析 Dirac 梳 JSON: {e}") from e
    return DiracComb(tuple(points), np.array(weights, dtype=complex), grid)
