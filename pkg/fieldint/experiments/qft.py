"""
1+1 维叶状格点上的自由场实验

时间方向在单位区间上取 Dirichlet 边界（涨落空间 B~_{0,1}，端点为零），
区间长度 s = t_b - t_a 只通过高斯积分器的参数进入。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from fieldint.core.integrators import (
    IntegratorSpec,
    McEstimate,
    integrate_analytic,
    integrate_localized_hermite,
    integrate_mc,
    integrate_mc_multi,
)
from fieldint.core.measures import DiracComb, IntegrableFunctional, ThetaKind
from fieldint.core.parametrize import develop_paths, field_parametrize, vector_field_catalog
from fieldint.core.quadforms import Localization, QuadFormPair, from_action_density, localize
from fieldint.core.spaces import Boundary, DomainGrid, DualVector, FieldVector, GridSpec, build_grid
from fieldint.utils.errors import ConfigError, DimensionError, UnsupportedError
from fieldint.utils.logger import get_logger
from fieldint.utils.parallel import DEFAULT_BLOCK_SIZE

logger = get_logger("qft")

Pair = tuple[int, int]


@dataclass(frozen=True)
class FoliatedLattice:
    """空间格点 x 时间步；time_steps 为单位区间上的时间间隔数"""

    spatial_sites: int
    time_steps: int
    spatial_spacing: float = 1.0
    s: float = 1.0
    spatial_boundary: Boundary = Boundary.DIRICHLET
    t_a: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spatial_boundary", Boundary.parse(self.spatial_boundary))
        if not float(self.s) > 0:
            raise ConfigError(f"区间长度 s 必须为正: {self.s}")
        if self.time_steps < 2:
            raise ConfigError(f"时间步数至少为 2（才有内部时间片）: {self.time_steps}")

    @property
    def t_b(self) -> float:
        return self.t_a + self.s

    @cached_property
    def grid(self) -> DomainGrid:
        return build_grid(GridSpec(
            extent=(self.spatial_sites, self.time_steps + 1),
            spacing=(self.spatial_spacing, 1.0 / self.time_steps),
            boundary=(self.spatial_boundary, Boundary.DIRICHLET),
        ))

    @property
    def spatial_count(self) -> int:
        return self.grid.dims[0]

    @property
    def time_count(self) -> int:
        return self.grid.dims[1]

    def site_index(self, z: int, t: int) -> int:
        """(空间格点, 内部时间片) -> 展平下标"""
        if not (0 <= z < self.spatial_count and 0 <= t < self.time_count):
            raise DimensionError(f"格点 ({z}, {t}) 超出 {self.grid.dims}")
        return z * self.time_count + t

    def quadform(self, mass: float) -> QuadFormPair:
        """A = -Delta_{d+1} + mass^2"""
        return from_action_density(self.grid, mass, 1.0)

    def gaussian(self, mass: float) -> IntegratorSpec:
        return IntegratorSpec.gaussian(self.quadform(mass), self.s)


@dataclass(frozen=True)
class TwoPointResult:
    pairs: tuple[Pair, ...]
    mc: tuple[McEstimate, ...]
    exact: np.ndarray = field(repr=False)

    def deviations(self) -> np.ndarray:
        """|mc - exact| / stderr"""
        out = []
        for est, ref in zip(self.mc, self.exact):
            diff = abs(est.mean - ref)
            out.append(diff / est.stderr if est.stderr > 0 else (0.0 if diff == 0 else np.inf))
        return np.array(out)

    def coverage(self, k: float = 3.0) -> float:
        return float(np.mean(self.deviations() <= k))


def _unit_row(grid: DomainGrid, index: int) -> DualVector:
    row = np.zeros(grid.size)
    row[index] = 1.0
    return DualVector(grid, row)


def vacuum_overlap(lattice: FoliatedLattice, mass: float, n: int = 0) -> complex:
    """<0|0>_P := int D rho_n，n = 0 时为 1；在第一个格点上局域化"""
    qf = lattice.quadform(mass)
    loc = localize(qf, [_unit_row(lattice.grid, 0)]).scaled(lattice.s)
    value = integrate_localized_hermite(n, lambda u: np.ones(u.shape[0]), loc)
    logger.info(
        f"真空重叠: 格点 {lattice.grid.dims}, n={n}, 值 {value.real:.15g}, "
        f"log det A = {qf.logdetA.real:.10g}"
    )
    return value


def exact_twopoint_table(lattice: FoliatedLattice, mass: float, pairs: Sequence[Pair]) -> np.ndarray:
    """(s / 2 pi) (A^{-1})_ij"""
    G = lattice.quadform(mass).G.real
    return np.array([lattice.s / (2.0 * np.pi) * G[i, j] for i, j in pairs])


def free_field_twopoint(lattice: FoliatedLattice, mass: float, pairs: Sequence[Pair], count: int,
                        seed: int, workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> TwoPointResult:
    """一次采样估计所有格点对的 E[b_i b_j]，并与精确协方差比较"""
    pairs = tuple((int(i), int(j)) for i, j in pairs)
    size = lattice.grid.size
    for i, j in pairs:
        if not (0 <= i < size and 0 <= j < size):
            raise DimensionError(f"格点对 ({i}, {j}) 超出格点数 {size}")
    left = np.array([i for i, _ in pairs])
    right = np.array([j for _, j in pairs])
    spec = lattice.gaussian(mass)
    estimates = integrate_mc_multi(spec, lambda X: X[:, left] * X[:, right], count, seed, workers, block_size)
    result = TwoPointResult(pairs, tuple(estimates), exact_twopoint_table(lattice, mass, pairs))
    logger.info(f"两点函数: {len(pairs)} 对, 3 倍标准误覆盖率 {result.coverage():.2%}")
    return result


def vev_hermite(lattice: FoliatedLattice, n: int, F: Callable[[np.ndarray], np.ndarray],
                loc: Localization) -> complex:
    """<F_n>_{a,b} = int F D rho_n，F 已限制到一维局域化上"""
    if loc.m != 1:
        raise UnsupportedError(f"vev_hermite 需要一维局域化，收到 m={loc.m}")
    if loc.rows and not loc.rows[0].grid.compatible(lattice.grid):
        raise DimensionError("局域化行向量不在格点空间上")
    return integrate_localized_hermite(n, F, loc)


def _boundary_profile(lattice: FoliatedLattice, values, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(values, dtype=float), (lattice.spatial_count,))
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"边界场 {name} 含非有限值")
    return np.array(arr)


def _time_profile(lattice: FoliatedLattice) -> np.ndarray:
    """完整时间片 t_k = k / time_steps，k = 0..time_steps"""
    return np.linspace(0.0, 1.0, lattice.time_steps + 1)


def boundary_conditioned_field(lattice: FoliatedLattice, f_a, f_b, b: FieldVector) -> np.ndarray:
    """
    f = f_a + b + t (f_b - f_a)：涨落 b 以 X = 恒等展开，再加经典插值

    Returns:
        (空间格点数, time_steps + 1)，首末时间片分别等于 f_a 与 f_b
    """
    if not b.grid.compatible(lattice.grid):
        raise DimensionError("涨落场不在格点空间上")
    f_a = _boundary_profile(lattice, f_a, "f_a")
    f_b = _boundary_profile(lattice, f_b, "f_b")
    interior = field_parametrize(vector_field_catalog("flat"), f_a, b)
    full = np.empty((lattice.spatial_count, lattice.time_steps + 1))
    full[:, 0] = f_a
    full[:, -1] = f_a
    full[:, 1:-1] = interior
    return full + np.outer(f_b - f_a, _time_profile(lattice))


def _conditioned_batch(lattice: FoliatedLattice, folded: np.ndarray, f_a: np.ndarray,
                       f_b: np.ndarray) -> np.ndarray:
    """批量版本：(B, N) 折叠样本 -> (B, 空间格点数, time_steps + 1)"""
    B, S, T = folded.shape[0], lattice.spatial_count, lattice.time_count
    raw = (folded / np.sqrt(lattice.grid.weights)).real.reshape(B * S, T)
    drivers = np.pad(raw, [(0, 0), (1, 1)])
    sol = develop_paths(vector_field_catalog("flat"), drivers, steps=T + 1,
                        start=np.tile(f_a, B).reshape(B * S, 1))
    fields = sol.points[:, :, 0].reshape(B, S, T + 2)
    return fields + np.outer(f_b - f_a, _time_profile(lattice))[None, :, :]


def expectation_ab(lattice: FoliatedLattice, mass: float, F: Callable[[np.ndarray], np.ndarray],
                   f_a, f_b, count: int, seed: int, workers: int = 1) -> McEstimate:
    """
    <F>_{a,b}：对边界条件化的场 f = f_a + b + t (f_b - f_a) 做蒙特卡洛平均

    F 接收 (B, 空间格点数, time_steps + 1) 的场，返回 (B,)。
    """
    f_a = _boundary_profile(lattice, f_a, "f_a")
    f_b = _boundary_profile(lattice, f_b, "f_b")
    spec = lattice.gaussian(mass)
    return integrate_mc(spec, lambda X: F(_conditioned_batch(lattice, X, f_a, f_b)), count, seed, workers)


def vacuum_transition(spec: IntegratorSpec, comb: DiracComb) -> complex:
    """<1_P | f | 1_P> = int F mu D omega，f 为 mu 的 Fourier 变换"""
    return integrate_analytic(spec, comb)


def vacuum_transition_mc(spec: IntegratorSpec, comb: DiracComb, count: int, seed: int,
                         workers: int = 1) -> McEstimate:
    F = IntegrableFunctional(comb, ThetaKind.PHASE_ONLY, spec.qf, spec.s)
    return integrate_mc(spec, F.phase_part, count, seed, workers)
