"""
离散函数空间 - 网格、场向量、对偶向量、对偶配对与区间缩放

约定：场向量与对偶向量都存储“权重折叠”坐标 folded = sqrt(tau_i) * raw，
于是 <b', b> = sum_i tau_i b'_raw,i b_raw,i 就是普通点积，二次型就是普通矩阵。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

from fieldint.utils.errors import ConfigError, DimensionError, DomainError
from fieldint.utils.logger import get_logger

logger = get_logger("spaces")


class Boundary(str, Enum):
    FREE = "free"
    DIRICHLET = "dirichlet"
    # 只在轴的第一个格点上取零（带基点的路径 b(t0) = 0）
    POINTED = "pointed"

    @classmethod
    def parse(cls, value: Union[str, "Boundary"]) -> "Boundary":
        if isinstance(value, Boundary):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"未知的边界条件: {value!r}（可选 free / dirichlet / pointed）") from None


# 每种边界在一条轴上去掉的格点数（首端, 末端）
_REMOVED_SITES = {
    Boundary.FREE: (0, 0),
    Boundary.DIRICHLET: (1, 1),
    Boundary.POINTED: (1, 0),
}


def removed_sites(boundary: Boundary) -> tuple[int, int]:
    """该边界在一条轴上去掉的 (首端, 末端) 格点数"""
    return _REMOVED_SITES[Boundary.parse(boundary)]


@dataclass(frozen=True)
class GridSpec:
    """网格描述（来自配置文件），extent 为每轴格点数（含边界格点）"""

    extent: tuple[int, ...]
    spacing: Union[float, tuple[float, ...]] = 1.0
    boundary: Union[Boundary, str, tuple] = Boundary.FREE


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """
    离散区域。dims 为向量空间中每轴的格点数（Dirichlet 边界格点已移除），
    weights 为每个格点的体积元 tau_i。
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    boundary: tuple[Boundary, ...]
    extent: tuple[int, ...]
    weights: np.ndarray = field(repr=False)
    factors: tuple["DomainGrid", ...] = ()

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def key(self) -> tuple:
        return (
            self.dims,
            self.extent,
            tuple(float(h) for h in self.spacing),
            tuple(b.value for b in self.boundary),
            tuple(f.key for f in self.factors),
        )

    def compatible(self, other: "DomainGrid") -> bool:
        return self is other or self.key == other.key

    def axis_coordinates(self, axis: int) -> np.ndarray:
        """第 axis 轴上保留格点的坐标（以轴起点为 0）"""
        if self.factors:
            raise DimensionError("直和网格没有坐标轴")
        first, _ = _REMOVED_SITES[self.boundary[axis]]
        return (np.arange(self.dims[axis]) + first) * self.spacing[axis]

    def __repr__(self) -> str:
        if self.factors:
            return f"DomainGrid(direct_sum of {len(self.factors)} factors, size={self.size})"
        bnd = ",".join(b.value for b in self.boundary)
        return f"DomainGrid(dims={self.dims}, spacing={self.spacing}, boundary={bnd})"


def build_grid(spec: GridSpec) -> DomainGrid:
    """
    根据网格描述构造 DomainGrid

    Dirichlet 轴只保留内部格点，Pointed 轴去掉首个格点；所有权重为格距之积。
    """
    extent = tuple(int(d) for d in np.atleast_1d(spec.extent))
    if not extent:
        raise ConfigError("网格至少需要一个轴")
    spacing = tuple(float(h) for h in np.broadcast_to(np.asarray(spec.spacing, dtype=float), (len(extent),)))

    if isinstance(spec.boundary, (str, Boundary)):
        boundary = (Boundary.parse(spec.boundary),) * len(extent)
    else:
        boundary = tuple(Boundary.parse(b) for b in spec.boundary)
        if len(boundary) == 1:
            boundary = boundary * len(extent)
    if len(boundary) != len(extent):
        raise ConfigError(f"边界条件个数 {len(boundary)} 与轴数 {len(extent)} 不一致")

    if any(d <= 0 for d in extent):
        raise ConfigError(f"格点数必须为正: {extent}")
    if any(not (h > 0) or not math.isfinite(h) for h in spacing):
        raise ConfigError(f"格距必须为正的有限数: {spacing}")

    dims = []
    for d, b in zip(extent, boundary):
        first, last = _REMOVED_SITES[b]
        interior = d - first - last
        if interior <= 0:
            raise ConfigError(f"{b.value} 边界下 {d} 个格点没有剩余的内部格点")
        dims.append(interior)
    dims = tuple(dims)

    n_sites = int(np.prod(dims))
    tau = float(np.prod(spacing))
    weights = np.full(n_sites, tau)
    weights.setflags(write=False)
    grid = DomainGrid(dims=dims, spacing=spacing, boundary=boundary, extent=extent, weights=weights)
    logger.debug(f"构造网格: {grid}, 格点数 {n_sites}")
    return grid


def direct_sum(first: DomainGrid, second: DomainGrid) -> DomainGrid:
    """乘积空间 B1 (x) B2 的网格：坐标直接拼接，保留因子网格以便拆分"""
    weights = np.concatenate([first.weights, second.weights])
    weights.setflags(write=False)
    return DomainGrid(
        dims=(first.size + second.size,),
        spacing=(),
        boundary=(),
        extent=(first.size + second.size,),
        weights=weights,
        factors=(first, second),
    )


@dataclass(frozen=True, eq=False)
class _GridVector:
    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=complex).reshape(-1)
        if values.shape[0] != self.grid.size:
            raise DimensionError(
                f"{type(self).__name__} 长度 {values.shape[0]} 与网格格点数 {self.grid.size} 不一致"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: DomainGrid):
        return cls(grid, np.zeros(grid.size, dtype=complex))

    @classmethod
    def from_raw(cls, grid: DomainGrid, raw):
        """由未折叠坐标构造"""
        raw = np.asarray(raw, dtype=complex).reshape(-1)
        if raw.shape[0] != grid.size:
            raise DimensionError(f"原始坐标长度 {raw.shape[0]} 与网格格点数 {grid.size} 不一致")
        return cls(grid, np.sqrt(grid.weights) * raw)

    def to_raw(self) -> np.ndarray:
        return self.values / np.sqrt(self.grid.weights)

    def _check(self, other):
        if type(other) is not type(self):
            raise DimensionError(f"不能把 {type(other).__name__} 与 {type(self).__name__} 相加")
        if not self.grid.compatible(other.grid):
            raise DimensionError("网格不一致")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return type(self)(self.grid, complex(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.grid, -self.values)

    def concat(self, other):
        """拼接为乘积空间上的向量"""
        if type(other) is not type(self):
            raise DimensionError("只能拼接同类向量")
        grid = direct_sum(self.grid, other.grid)
        return type(self)(grid, np.concatenate([self.values, other.values]))

    def split(self):
        """按直和网格的因子拆分"""
        if not self.grid.factors:
            raise DimensionError("不是直和网格上的向量")
        parts, start = [], 0
        for factor in self.grid.factors:
            parts.append(type(self)(factor, self.values[start:start + factor.size]))
            start += factor.size
        return tuple(parts)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


class FieldVector(_GridVector):
    """B 中的离散场（折叠坐标）"""


class DualVector(_GridVector):
    """B' 中的离散对偶向量（折叠坐标）"""


def pairing(bp: DualVector, b: FieldVector) -> complex:
    """对偶配对 <b', b>，双线性（不取共轭）"""
    if not isinstance(bp, DualVector) or not isinstance(b, FieldVector):
        raise DimensionError("pairing 需要 (DualVector, FieldVector)")
    if not bp.grid.compatible(b.grid):
        raise DimensionError(f"网格不一致: {bp.grid} vs {b.grid}")
    return complex(np.dot(bp.values, b.values))


def rescale_interval(b: FieldVector, bp: DualVector, t_a: float, t_b: float) -> tuple[FieldVector, DualVector]:
    """
    把区间 [t_a, t_b] 仿射变换到单位区间：b -> b / sqrt(L)，b' -> sqrt(L) b'，
    其中 L = t_b - t_a；对偶配对保持不变。
    """
    length = float(t_b) - float(t_a)
    if not length > 0:
        raise DomainError(f"区间端点需满足 t_b > t_a，收到 t_a={t_a}, t_b={t_b}")
    root = math.sqrt(length)
    return FieldVector(b.grid, b.values / root), DualVector(bp.grid, root * bp.values)


def random_field(grid: DomainGrid, rng: np.random.Generator, complex_values: bool = False) -> FieldVector:
    return FieldVector(grid, _random_values(grid.size, rng, complex_values))


def random_dual(grid: DomainGrid, rng: np.random.Generator, complex_values: bool = False) -> DualVector:
    return DualVector(grid, _random_values(grid.size, rng, complex_values))


def _random_values(n: int, rng: np.random.Generator, complex_values: bool) -> np.ndarray:
    values = rng.standard_normal(n).astype(complex)
    if complex_values:
        values = values + 1j * rng.standard_normal(n)
    return values


def as_dual_rows(rows: Sequence[DualVector]) -> np.ndarray:
    """把若干对偶向量堆成 m x N 矩阵，检查网格一致"""
    if not rows:
        raise DimensionError("至少需要一个对偶向量")
    grid = rows[0].grid
    for row in rows[1:]:
        if not grid.compatible(row.grid):
            raise DimensionError("对偶向量所在网格不一致")
    return np.vstack([row.values for row in rows])
