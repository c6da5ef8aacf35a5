"""
二次型对 (Q, W) - Riesz 映射 D / G、由作用量密度构造 Q、以及 W 向 R^m 的局域化

Q(b) = b^T A b，W(b') = b'^T G b'，A G = I；全部使用稠密矩阵与直接分解。
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from fieldint.core.spaces import (
    Boundary,
    DomainGrid,
    DualVector,
    FieldVector,
    as_dual_rows,
    direct_sum,
)
from fieldint.utils.errors import ConfigError, DegeneracyError, DimensionError, LocalizationError
from fieldint.utils.logger import get_logger

logger = get_logger("quadforms")

SYMMETRY_TOL = 1e-12
INVERSE_TOL = 1e-10
# 最小特征值与谱半径之比低于该值视为退化
DEGENERACY_TOL = 1e-12


def _complex_logdet(matrix: np.ndarray) -> complex:
    sign, logabs = np.linalg.slogdet(matrix)
    return complex(logabs) + cmath.log(sign) if sign != 0 else complex(-np.inf)


def _check_symmetric(matrix: np.ndarray, what: str, error=DegeneracyError) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    asym = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise error(f"{what} 不对称: max|M - M^T| = {asym:.3e}")
    return 0.5 * (matrix + matrix.T)


def _check_real_part_pd(matrix: np.ndarray, what: str, error=DegeneracyError) -> float:
    eig = np.linalg.eigvalsh(matrix.real)
    top = max(float(np.max(np.abs(eig))), 1e-300)
    if eig[0] <= DEGENERACY_TOL * top:
        raise error(
            f"{what} 的实部不是正定的（最小特征值 {eig[0]:.3e}），需要非退化二次型"
        )
    return float(eig[0])


@dataclass(frozen=True, eq=False)
class QuadFormPair:
    """二次型 Q（矩阵 A）与其逆形式 W（矩阵 G），A G = I"""

    grid: DomainGrid
    A: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    logdetA: complex

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def is_real(self) -> bool:
        return not np.any(self.A.imag)

    @classmethod
    def from_matrix(cls, grid: DomainGrid, A) -> "QuadFormPair":
        """校验对称性与实部正定性，稠密求解 G = A^{-1}"""
        A = np.array(A, dtype=complex)
        if A.shape != (grid.size, grid.size):
            raise DimensionError(f"矩阵形状 {A.shape} 与网格格点数 {grid.size} 不一致")
        A = _check_symmetric(A, "A")
        _check_real_part_pd(A, "A")

        identity = np.eye(grid.size)
        try:
            G = scipy.linalg.solve(A, identity)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise DegeneracyError(f"A 奇异，无法求逆: {e}") from e
        G = 0.5 * (G + G.T)
        residual = float(np.max(np.abs(A @ G - identity)))
        if residual >= INVERSE_TOL:
            raise DegeneracyError(f"A G = I 的残差 {residual:.3e} 超出容差 {INVERSE_TOL:g}")

        A.setflags(write=False)
        G.setflags(write=False)
        return cls(grid=grid, A=A, G=G, logdetA=_complex_logdet(A))

    def scaled(self, factor: complex) -> "QuadFormPair":
        """factor * Q 对应的二次型对"""
        factor = complex(factor)
        if factor == 0:
            raise DegeneracyError("缩放因子不能为 0")
        return QuadFormPair.from_matrix(self.grid, factor * self.A)

    def direct_sum(self, other: "QuadFormPair") -> "QuadFormPair":
        """块对角 A1 (+) A2"""
        grid = direct_sum(self.grid, other.grid)
        return QuadFormPair.from_matrix(grid, scipy.linalg.block_diag(self.A, other.A))

    def pushforward(self, M) -> "QuadFormPair":
        """y = M x 诱导的二次型对：A_Y = M^{-T} A M^{-1}"""
        M = np.asarray(M, dtype=complex)
        if M.shape != self.A.shape:
            raise DimensionError(f"线性映射形状 {M.shape} 与二次型 {self.A.shape} 不一致")
        try:
            m_inv = scipy.linalg.inv(M)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise DegeneracyError(f"线性映射奇异: {e}") from e
        return QuadFormPair.from_matrix(self.grid, m_inv.T @ self.A @ m_inv)


def _laplacian_1d(n: int, boundary: Boundary) -> np.ndarray:
    """一维离散 -Delta（未除以格距平方）"""
    K = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    if boundary is Boundary.FREE:
        K[0, 0] -= 1.0
        K[-1, -1] -= 1.0
    elif boundary is Boundary.POINTED:
        K[-1, -1] -= 1.0
    return K


def discrete_laplacian(grid: DomainGrid) -> np.ndarray:
    """
    折叠坐标下的 -Delta：各轴一维算子 K_a / h_a^2 的 Kronecker 和

    权重均匀时 sum_i tau_i |grad f|^2 = f_folded^T L f_folded。
    """
    if grid.factors:
        raise ConfigError("直和网格没有拉普拉斯算子，请分别在因子网格上构造")
    total = np.zeros((grid.size, grid.size))
    for axis, (n, h, bnd) in enumerate(zip(grid.dims, grid.spacing, grid.boundary)):
        term = np.ones((1, 1))
        for other, n_other in enumerate(grid.dims):
            block = _laplacian_1d(n, bnd) / h ** 2 if other == axis else np.eye(n_other)
            term = np.kron(term, block)
        total += term
    return total


def from_action_density(grid: DomainGrid, mass: float, stiffness: float) -> QuadFormPair:
    """
    由作用量密度 q(f) = stiffness |grad f|^2 + mass^2 f^2 构造二次型对

    A = stiffness * (-Delta) + mass^2 * I（折叠坐标）。自由边界且 mass = 0 时 A 退化。
    """
    mass = float(mass)
    stiffness = float(stiffness)
    A = stiffness * discrete_laplacian(grid) + mass ** 2 * np.eye(grid.size)
    try:
        qf = QuadFormPair.from_matrix(grid, A)
    except DegeneracyError as e:
        raise DegeneracyError(
            f"mass={mass}, stiffness={stiffness} 在 {grid} 上给出退化的二次型: {e}"
        ) from e
    logger.debug(f"由作用量密度构造二次型: N={grid.size}, log det A = {qf.logdetA.real:.6f}")
    return qf


def _check_field(qf: QuadFormPair, vec, kind) -> None:
    if not isinstance(vec, kind):
        raise DimensionError(f"需要 {kind.__name__}，收到 {type(vec).__name__}")
    if not vec.grid.compatible(qf.grid):
        raise DimensionError(f"向量网格 {vec.grid} 与二次型网格 {qf.grid} 不一致")


def q_eval(qf: QuadFormPair, b: FieldVector) -> complex:
    _check_field(qf, b, FieldVector)
    return complex(b.values @ qf.A @ b.values)


def w_eval(qf: QuadFormPair, bp: DualVector) -> complex:
    _check_field(qf, bp, DualVector)
    return complex(bp.values @ qf.G @ bp.values)


def riesz_D(qf: QuadFormPair, b: FieldVector) -> DualVector:
    _check_field(qf, b, FieldVector)
    return DualVector(qf.grid, qf.A @ b.values)


def riesz_G(qf: QuadFormPair, bp: DualVector) -> FieldVector:
    _check_field(qf, bp, DualVector)
    return FieldVector(qf.grid, qf.G @ bp.values)


@dataclass(frozen=True, eq=False)
class Localization:
    """
    局域化 L: B -> R^m，u^i = <b'_i, b>；Wm_ij = W(b'_i, b'_j)，Q_{R^m}(u) = u^T Wm^{-1} u
    """

    rows: tuple[DualVector, ...]
    Wm: np.ndarray = field(repr=False)
    Wm_inv: np.ndarray = field(repr=False)
    logdetWm: complex

    @property
    def m(self) -> int:
        return int(self.Wm.shape[0])

    @property
    def is_real(self) -> bool:
        return not np.any(self.Wm.imag)

    @classmethod
    def from_form(cls, Wm, rows: Sequence[DualVector] = ()) -> "Localization":
        """直接由 m x m 形式构造（有限维平直积分器不需要底层行向量）"""
        Wm = np.atleast_2d(np.array(Wm, dtype=complex))
        if Wm.shape[0] != Wm.shape[1]:
            raise LocalizationError(f"Wm 必须是方阵，收到 {Wm.shape}")
        Wm = _check_symmetric(Wm, "Wm", LocalizationError)
        _check_real_part_pd(Wm, "Wm", LocalizationError)
        Wm_inv = np.linalg.inv(Wm)
        Wm_inv = 0.5 * (Wm_inv + Wm_inv.T)
        Wm.setflags(write=False)
        Wm_inv.setflags(write=False)
        return cls(rows=tuple(rows), Wm=Wm, Wm_inv=Wm_inv, logdetWm=_complex_logdet(Wm))

    def scaled(self, factor: complex) -> "Localization":
        """Wm -> factor * Wm（参数 s 的高斯积分器）"""
        return Localization.from_form(complex(factor) * self.Wm, self.rows)

    def coordinates(self, b: FieldVector) -> np.ndarray:
        if not self.rows:
            raise LocalizationError("该局域化没有行向量")
        if not self.rows[0].grid.compatible(b.grid):
            raise DimensionError("场向量与局域化行向量不在同一网格上")
        return as_dual_rows(list(self.rows)) @ b.values

    def q_eval(self, u) -> np.ndarray:
        """Q_{R^m}(u)，u 的最后一维为 m，可带批量维"""
        u = np.asarray(u)
        return np.einsum("...i,ij,...j->...", u, self.Wm_inv, u)

    def w_eval(self, up) -> np.ndarray:
        up = np.asarray(up)
        return np.einsum("...i,ij,...j->...", up, self.Wm, up)


def localize(qf: QuadFormPair, rows: Sequence[DualVector]) -> Localization:
    """把 W 局域化到由 rows 张成的 R^m 上"""
    rows = list(rows)
    R = as_dual_rows(rows)
    if not rows[0].grid.compatible(qf.grid):
        raise DimensionError("局域化行向量与二次型不在同一网格上")
    m = R.shape[0]
    rank = int(np.linalg.matrix_rank(R))
    if rank < m:
        raise LocalizationError(f"局域化行向量秩亏: rank {rank} < m = {m}")
    Wm = R @ qf.G @ R.T
    logger.debug(f"局域化到 R^{m}")
    return Localization.from_form(Wm, rows)
