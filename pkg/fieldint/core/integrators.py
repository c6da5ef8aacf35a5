"""
积分器族 (Theta, Z)：高斯 D omega_s、Hermite D rho_n 与有限维平直积分器

三条求值路径：
- 解析：int F_mu D = sum_k c_k Z(b'_k)
- 蒙特卡洛：按高斯律采样，确定性分块并行
- 局域化求积：Cholesky 换元后做 Gauss-Hermite 张量积求积
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from fieldint.core.measures import DiracComb, IntegrableFunctional
from fieldint.core.quadforms import Localization, QuadFormPair, localize
from fieldint.core.quadrature import hermite, hermite_multi, tensor_hermgauss
from fieldint.core.spaces import DualVector, FieldVector
from fieldint.utils.errors import (
    ConfigError,
    DegeneracyError,
    DimensionError,
    SamplingError,
    UnsupportedError,
)
from fieldint.utils.logger import get_logger
from fieldint.utils.parallel import (
    DEFAULT_BLOCK_SIZE,
    MomentAccumulator,
    block_ranges,
    block_rng,
    map_blocks,
    pairwise_reduce,
)

logger = get_logger("integrators")

DEFAULT_MAX_ORDER = 12
MAX_LOCALIZED_DIM = 4
# 局域化维度 m -> 默认 Gauss-Hermite 阶数（张量积节点数保持在十万量级）
DEFAULT_ORDERS = {1: 64, 2: 48, 3: 40, 4: 20}

BatchFunctional = Callable[[np.ndarray], np.ndarray]


class IntegratorKind(str, Enum):
    GAUSSIAN = "gaussian"
    HERMITE = "hermite"
    FLAT = "flat"


@dataclass(frozen=True, eq=False)
class IntegratorSpec:
    """积分器的 (Theta, Z) 刻画；Flat 只携带局域化形式 Wm，不引用二次型对"""

    kind: IntegratorKind
    qf: Optional[QuadFormPair] = None
    s: complex = 1.0
    n: int = 0
    loc: Optional[Localization] = None
    max_order: int = DEFAULT_MAX_ORDER

    def __post_init__(self):
        object.__setattr__(self, "kind", IntegratorKind(self.kind))
        object.__setattr__(self, "s", complex(self.s))
        if self.kind is IntegratorKind.FLAT:
            if self.loc is None:
                raise ConfigError("Flat 积分器需要 m x m 形式 Wm")
            return
        if self.qf is None:
            raise ConfigError(f"{self.kind.value} 积分器需要二次型对")
        if self.kind is IntegratorKind.GAUSSIAN:
            if not self.s.real > 0:
                raise ConfigError(f"高斯参数需满足 Re(s) > 0，收到 s={self.s}")
            eig = np.linalg.eigvalsh((self.qf.A / self.s).real)
            if eig[0] <= 0:
                raise DegeneracyError(f"Re(Q/s) 不是正定的（最小特征值 {eig[0]:.3e}），s={self.s}")
        else:
            if self.n < 0 or self.n > self.max_order:
                raise ConfigError(f"Hermite 阶数 n={self.n} 超出范围 [0, {self.max_order}]")

    @classmethod
    def gaussian(cls, qf: QuadFormPair, s: complex = 1.0) -> "IntegratorSpec":
        return cls(IntegratorKind.GAUSSIAN, qf=qf, s=s)

    @classmethod
    def hermite(cls, qf: QuadFormPair, n: int, max_order: int = DEFAULT_MAX_ORDER) -> "IntegratorSpec":
        return cls(IntegratorKind.HERMITE, qf=qf, n=int(n), max_order=int(max_order))

    @classmethod
    def flat(cls, Wm) -> "IntegratorSpec":
        loc = Wm if isinstance(Wm, Localization) else Localization.from_form(Wm)
        return cls(IntegratorKind.FLAT, loc=loc)

    @property
    def is_real_s(self) -> bool:
        return self.s.imag == 0.0 and self.s.real > 0


@dataclass(frozen=True)
class McEstimate:
    mean: complex
    stderr: float
    samples: int
    seed: int
    failures: int = 0

    def to_json(self) -> dict:
        return {
            "mean": [float(self.mean.real), float(self.mean.imag)],
            "stderr": float(self.stderr),
            "samples": int(self.samples),
            "seed": int(self.seed),
            "failures": int(self.failures),
        }


def _require_gaussian(spec: IntegratorSpec, what: str) -> None:
    if spec.kind is not IntegratorKind.GAUSSIAN:
        raise UnsupportedError(f"{what} 只支持高斯积分器，收到 {spec.kind.value}")


def _w_values(spec: IntegratorSpec, comb: DiracComb) -> np.ndarray:
    if comb.grid is not None and not comb.grid.compatible(spec.qf.grid):
        raise DimensionError("Dirac 梳与积分器不在同一网格上")
    P = comb.point_matrix()
    return np.einsum("ki,ij,kj->k", P, spec.qf.G, P)


def z_eval(spec: IntegratorSpec, bp: DualVector) -> complex:
    """Z(b') = exp(-pi s W(b'))，即 D omega_s 的 Fourier-Stieltjes 变换"""
    _require_gaussian(spec, "z_eval")
    if not bp.grid.compatible(spec.qf.grid):
        raise DimensionError(f"对偶向量的网格 {bp.grid} 与积分器网格 {spec.qf.grid} 不一致")
    return complex(np.exp(-np.pi * spec.s * (bp.values @ spec.qf.G @ bp.values)))


def integrate_analytic(spec: IntegratorSpec, comb: DiracComb) -> complex:
    """int F_mu D omega_s := sum_k c_k Z(b'_k)"""
    _require_gaussian(spec, "integrate_analytic")
    if not len(comb):
        return 0j
    return complex(np.exp(-np.pi * spec.s * _w_values(spec, comb)) @ comb.weights)


def gaussian_mean(spec: IntegratorSpec) -> FieldVector:
    """<b> = int b D omega_s，高斯族为零向量"""
    _require_gaussian(spec, "gaussian_mean")
    return FieldVector.zeros(spec.qf.grid)


def theta_tilde(spec: IntegratorSpec, mean: FieldVector, bp: DualVector) -> complex:
    """以均值为基点的 Theta~(<b>, b') = exp(-2 pi i <b', <b>>) Z(b')"""
    return complex(np.exp(-2j * np.pi * (bp.values @ mean.values))) * z_eval(spec, bp)


def mean_value_integrate(spec: IntegratorSpec, comb: DiracComb) -> complex:
    """均值路径：sum_k c_k Theta~(<b>, b'_k)"""
    mean = gaussian_mean(spec)
    return complex(sum(c * theta_tilde(spec, mean, p) for p, c in zip(comb.points, comb.weights)))


# ---------------------------------------------------------------------------
# 蒙特卡洛
# ---------------------------------------------------------------------------

def sampling_factor(spec: IntegratorSpec) -> np.ndarray:
    """协方差 C = (s / 2 pi) G 的下三角 Cholesky 因子"""
    _require_gaussian(spec, "采样")
    if not spec.is_real_s:
        raise UnsupportedError(f"复参数 s={spec.s} 只能解析求值，不能采样")
    if not spec.qf.is_real:
        raise UnsupportedError("复二次型不能采样")
    cov = (spec.s.real / (2.0 * np.pi)) * spec.qf.G.real
    try:
        return scipy.linalg.cholesky(cov, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise DegeneracyError(f"协方差矩阵不是正定的: {e}") from e


def draw_block(chol: np.ndarray, seed: int, block: int, n: int, components: int = 1) -> np.ndarray:
    """第 block 块的 n 个样本；components > 1 时返回 (n, components, N) 的独立样本"""
    rng = block_rng(seed, block)
    draws = rng.standard_normal((n * components, chol.shape[0])) @ chol.T
    return draws if components == 1 else draws.reshape(n, components, chol.shape[0])


def sample_gaussian(spec: IntegratorSpec, count: int, seed: int,
                    block_size: int = DEFAULT_BLOCK_SIZE) -> Iterator[FieldVector]:
    """按 D omega_s 采样，E[<p,b><q,b>] = (s / 2 pi) p^T G q；结果只依赖 (seed, count, block_size)"""
    chol = sampling_factor(spec)
    grid = spec.qf.grid
    for block, (start, stop) in enumerate(block_ranges(count, block_size)):
        for row in draw_block(chol, seed, block, stop - start):
            yield FieldVector(grid, row)


def _as_batch(F, spec: IntegratorSpec, batched: bool) -> BatchFunctional:
    if isinstance(F, IntegrableFunctional):
        return F.batch_eval
    if batched:
        return F
    grid = spec.qf.grid
    return lambda X: np.array([F(FieldVector(grid, x)) for x in X])


def _mc_moments(spec: IntegratorSpec, fn: BatchFunctional, count: int, seed: int,
                workers: int, block_size: int) -> MomentAccumulator:
    chol = sampling_factor(spec)
    ranges = block_ranges(count, block_size)

    def run_block(block: int) -> MomentAccumulator:
        start, stop = ranges[block]
        values = np.asarray(fn(draw_block(chol, seed, block, stop - start)), dtype=complex)
        if values.shape[0] != stop - start:
            raise SamplingError(f"泛函返回 {values.shape[0]} 个值，期望 {stop - start} 个")
        bad = ~np.isfinite(values)
        if np.any(bad):
            raise SamplingError(
                f"第 {block} 块出现 {int(np.count_nonzero(bad))} 个非有限泛函值"
                f"（样本 {start}..{stop - 1}，seed={seed}）"
            )
        logger.debug(f"MC 块 {block}: 样本 {start}..{stop - 1}")
        return MomentAccumulator.from_values(values)

    return pairwise_reduce(map_blocks(run_block, len(ranges), workers))


def integrate_mc(spec: IntegratorSpec, F, count: int, seed: int, workers: int = 1,
                 block_size: int = DEFAULT_BLOCK_SIZE, batched: bool = True) -> McEstimate:
    """
    按高斯律做蒙特卡洛积分

    Args:
        F: IntegrableFunctional，或作用于 (count, N) 折叠样本数组、返回 (count,) 的函数；
           batched=False 时 F 逐个接收 FieldVector
        count: 样本数
        seed: 随机种子
        workers: 线程数，不影响结果
    """
    acc = _mc_moments(spec, _as_batch(F, spec, batched), count, seed, workers, block_size)
    estimate = McEstimate(complex(acc.mean[0]), float(acc.stderr()[0]), int(count), int(seed))
    logger.info(
        f"MC 积分完成: 样本 {count}, 均值 {estimate.mean.real:.6g}{estimate.mean.imag:+.6g}j, "
        f"标准误 {estimate.stderr:.3g}"
    )
    return estimate


def integrate_mc_multi(spec: IntegratorSpec, F: BatchFunctional, count: int, seed: int,
                       workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> list[McEstimate]:
    """向量值版本：F 返回 (count, k)，一次采样得到 k 个估计"""
    acc = _mc_moments(spec, F, count, seed, workers, block_size)
    stderr = acc.stderr()
    return [
        McEstimate(complex(acc.mean[i]), float(stderr[i]), int(count), int(seed))
        for i in range(acc.mean.shape[0])
    ]


def functional_scalar_product(spec: IntegratorSpec, f: BatchFunctional, g: BatchFunctional,
                              count: int, seed: int, workers: int = 1) -> McEstimate:
    """<f_P | g_P> := int conj(f) g D omega"""
    return integrate_mc(spec, lambda X: np.conj(f(X)) * g(X), count, seed, workers)


# ---------------------------------------------------------------------------
# 局域化求积
# ---------------------------------------------------------------------------

def _real_cholesky(loc: Localization) -> np.ndarray:
    if loc.m > MAX_LOCALIZED_DIM:
        raise UnsupportedError(f"局域化维度 m={loc.m} 超过张量积求积上限 {MAX_LOCALIZED_DIM}")
    if not loc.is_real:
        raise UnsupportedError("求积只支持实的 Wm，复参数请使用解析路径")
    return scipy.linalg.cholesky(loc.Wm.real, lower=True)


def _default_order(m: int) -> int:
    return DEFAULT_ORDERS.get(m, 16)


def _quadrature_points(loc: Localization, order: Optional[int]):
    """节点 u = L x / sqrt(pi)，使 pi u^T Wm^{-1} u = |x|^2"""
    chol = _real_cholesky(loc)
    order = order or _default_order(loc.m)
    x, w = tensor_hermgauss(order, loc.m)
    return x, w, x @ chol.T / np.sqrt(np.pi)


def integrate_localized_hermite(n: int, f: Callable[[np.ndarray], np.ndarray], loc: Localization,
                                alpha: Optional[Sequence[int]] = None,
                                order: Optional[int] = None) -> complex:
    """
    (det pi Wm / 2)^{n/2} (det Wm)^{-1/2} int f(u) H_alpha(x(u)) exp(-pi u^T Wm^{-1} u) du

    Args:
        n: Hermite 阶数 |alpha|
        f: 作用于 (K, m) 节点数组的函数
        loc: 实局域化
        alpha: 多指标，默认 (n, 0, ..., 0)
        order: 每轴 Gauss-Hermite 阶数，需不少于 (n + deg f) / 2 + 1
    """
    if n < 0:
        raise ConfigError(f"Hermite 阶数必须非负: {n}")
    alpha = tuple(int(a) for a in alpha) if alpha is not None else (n,) + (0,) * (loc.m - 1)
    if len(alpha) != loc.m or sum(alpha) != n or min(alpha) < 0:
        raise ConfigError(f"多指标 {alpha} 与 n={n}, m={loc.m} 不匹配")
    x, w, u = _quadrature_points(loc, order)
    total = np.sum(w * np.asarray(f(u)) * hermite_multi(alpha, x))
    prefactor = np.exp(0.5 * n * (loc.m * np.log(np.pi / 2.0) + loc.logdetWm.real))
    return complex(prefactor * np.pi ** (-0.5 * loc.m) * total)


def hermite_functional(m_order: int, W: float) -> Callable[[np.ndarray], np.ndarray]:
    """f_m(u) = (pi W / 2)^{m/2} H_m(sqrt(pi / W) u)，作用于 (K, 1) 节点"""
    W = float(W)
    if not W > 0:
        raise ConfigError(f"W 必须为正: {W}")
    scale = (np.pi * W / 2.0) ** (m_order / 2.0)
    root = np.sqrt(np.pi / W)
    return lambda u: scale * hermite(m_order, root * np.asarray(u)[..., 0])


def _require_1d(loc: Localization) -> float:
    if loc.m != 1:
        raise UnsupportedError(f"需要一维局域化，收到 m={loc.m}")
    return float(loc.Wm[0, 0].real)


def hermite_orthogonality(n: int, m_order: int, loc: Localization,
                          order: Optional[int] = None) -> complex:
    """int f_m D rho_n = (pi W)^m n! delta_nm"""
    W = _require_1d(loc)
    return integrate_localized_hermite(n, hermite_functional(m_order, W), loc, order=order)


def scalar_product_nm(n: int, m_order: int, loc: Localization,
                      order: Optional[int] = None) -> complex:
    """波泛函内积 <n|m> = int H^_n D rho_m（局域化坐标）"""
    W = _require_1d(loc)
    return integrate_localized_hermite(m_order, hermite_functional(n, W), loc, order=order)


def flat_integrate(Wm: Union[Localization, np.ndarray], f: Callable[[np.ndarray], np.ndarray],
                   order: Optional[int] = None) -> complex:
    """归一化平直高斯积分 |det Wm|^{-1/2} int f(u) exp(-pi Wm^{-1}(u)) du"""
    loc = Wm if isinstance(Wm, Localization) else Localization.from_form(Wm)
    _, w, u = _quadrature_points(loc, order)
    return complex(np.pi ** (-0.5 * loc.m) * np.sum(w * np.asarray(f(u))))


def comb_basis(comb: DiracComb, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """
    梳支撑点张成空间的基：P = C @ B，B 的行是基向量，C 是各点的坐标

    Returns:
        (C, B)，形状 (K, r) 与 (r, N)
    """
    P = comb.point_matrix()
    if not np.any(P.imag):
        P = P.real
    U, S, Vt = np.linalg.svd(P, full_matrices=False)
    rank = int(np.count_nonzero(S > tol * S[0])) if S.size and S[0] > 0 else 0
    return U[:, :rank] * S[:rank], Vt[:rank]


def localize_comb(spec: IntegratorSpec, comb: DiracComb, order: Optional[int] = None) -> complex:
    """
    局域化求 int F_mu D omega_s：在梳支撑点张成的 R^m 上做平直积分（Wm 乘以 s）
    """
    _require_gaussian(spec, "localize_comb")
    if not len(comb):
        return 0j
    C, B = comb_basis(comb)
    if B.shape[0] == 0:
        return complex(np.sum(comb.weights))
    if B.shape[0] > 3:
        raise UnsupportedError(f"梳支撑点张成 {B.shape[0]} 维空间，局域化求积只支持 m <= 3")
    rows = [DualVector(spec.qf.grid, row) for row in B]
    loc = localize(spec.qf, rows).scaled(spec.s)
    weights = np.asarray(comb.weights)
    value = flat_integrate(loc, lambda u: np.exp(-2j * np.pi * (u @ C.T)) @ weights, order)
    logger.debug(f"局域化求积: m={loc.m}, 结果 {value:.12g}")
    return value
