"""
非二次作用量的生成泛函：W_S、平均场 <b> 与 <b'>、有效作用量 Gamma、
量子运动方程与 Schwinger-Dyson 残差

数值上使用欧氏约定（权重 e^{-pi S}，实源倾斜 e^{-2 pi <u', u>}）：
    Z~(u')   = int e^{-pi S(u) - 2 pi <u', u>} du / int e^{-pi Q(u)} du
    W_S(u')  = (1 / pi) log Z~(u')
    <b>(u')  = -1/2 grad W_S(u')，等于倾斜平均
    Gamma(v) = -W_S(u'(v)) - 2 <u'(v), v>
    <b'>(v)  = -1/2 grad Gamma(v) = u'(v)
    N = Z~(0)，W_S(0) = (1 / pi) log N
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import numpy.polynomial.polynomial as P
import scipy.linalg
from scipy.interpolate import PchipInterpolator

from fieldint.core.quadforms import Localization, QuadFormPair
from fieldint.core.quadrature import tensor_hermgauss
from fieldint.core.spaces import FieldVector
from fieldint.utils.errors import (
    ConfigError,
    DimensionError,
    DomainError,
    LegendreError,
    QuadratureError,
    ResolutionError,
    UnsupportedError,
)
from fieldint.utils.logger import get_logger
from fieldint.utils.parallel import map_blocks

logger = get_logger("effective")

MAX_EFFECTIVE_DIM = 3
DEFAULT_EFFECTIVE_ORDERS = {1: 96, 2: 48, 3: 32}
FD_STEP = 1e-4
RESOLUTION_TOL = 1e-9
NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 30
MAX_SD_DEGREE = 6


@dataclass(frozen=True, eq=False)
class ActionFunctional:
    """S(b) = Q(b) + lambda sum_i b_i^4（折叠坐标，单位权重）"""

    quadratic: QuadFormPair
    quartic_coupling: float = 0.0

    def __post_init__(self):
        lam = float(self.quartic_coupling)
        if not lam >= 0:
            raise ConfigError(f"四次耦合必须非负: {self.quartic_coupling}")
        if not self.quadratic.is_real:
            raise ConfigError("作用量需要实二次型")
        object.__setattr__(self, "quartic_coupling", lam)

    def evaluate(self, b: FieldVector) -> float:
        if not b.grid.compatible(self.quadratic.grid):
            raise DimensionError("场向量与作用量不在同一网格上")
        v = b.values.real
        return float(v @ self.quadratic.A.real @ v + self.quartic_coupling * np.sum(v ** 4))

    def localize(self, loc: Localization, order: Optional[int] = None) -> "LocalizedAction":
        if loc.rows and not loc.rows[0].grid.compatible(self.quadratic.grid):
            raise DimensionError("局域化行向量与作用量不在同一网格上")
        return LocalizedAction(loc, self.quartic_coupling, order)


@dataclass(frozen=True)
class TiltedMoments:
    log_z: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True, eq=False)
class LocalizedAction:
    """
    局域化作用量 S(u) = u^T Wm^{-1} u + lambda sum u_i^4 与其倾斜积分

    配方后 Z~(u') = e^{pi Wm(u')} E[e^{-pi lambda sum u^4}]，期望取在中心 -Wm u'、
    形式为 Wm 的归一化高斯上，用 Gauss-Hermite 张量积求积。
    """

    loc: Localization
    lam: float
    order: Optional[int] = None
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = self.loc.m
        if m > MAX_EFFECTIVE_DIM:
            raise UnsupportedError(f"有效作用量只支持 m <= {MAX_EFFECTIVE_DIM}，收到 m={m}")
        if not self.loc.is_real:
            raise UnsupportedError("有效作用量需要实的局域化形式")
        object.__setattr__(self, "order", int(self.order or DEFAULT_EFFECTIVE_ORDERS[m]))
        object.__setattr__(self, "chol", scipy.linalg.cholesky(self.loc.Wm.real, lower=True))

    @property
    def m(self) -> int:
        return self.loc.m

    def evaluate(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.loc.q_eval(u).real + self.lam * np.sum(u ** 4, axis=-1)

    def tilted(self, up, order: Optional[int] = None) -> TiltedMoments:
        up = np.asarray(up, dtype=float).reshape(self.m)
        x, w = tensor_hermgauss(order or self.order, self.m)
        Wm = self.loc.Wm.real
        u = -(Wm @ up) + x @ self.chol.T / np.sqrt(np.pi)
        weight = w * np.exp(-np.pi * self.lam * np.sum(u ** 4, axis=1))
        total = float(np.sum(weight))
        if not total > 0 or not np.isfinite(total):
            raise ResolutionError(f"倾斜积分在 u'={up} 处下溢，请缩小源的范围")
        mean = weight @ u / total
        dev = u - mean
        cov = (dev.T * weight) @ dev / total
        log_z = np.pi * float(up @ Wm @ up) + np.log(total * np.pi ** (-0.5 * self.m))
        return TiltedMoments(float(log_z), mean, cov)

    def w_s(self, up, order: Optional[int] = None) -> float:
        return self.tilted(up, order).log_z / np.pi


@dataclass(frozen=True, eq=False)
class EffectiveState:
    """
    沿第 axis 轴的源切片 u' = g e_axis 上的表格：
    W_S(g_k)、倾斜平均 <b>(g_k)（向量）与 Gamma(v_k)，v_k 为平均场的 axis 分量
    """

    action: LocalizedAction
    axis: int
    uprime_grid: np.ndarray
    w_s_values: np.ndarray
    mean_values: np.ndarray
    gamma_values: np.ndarray
    log_N: float

    @property
    def N(self) -> float:
        return float(np.exp(self.log_N))

    @property
    def v_values(self) -> np.ndarray:
        return self.mean_values[:, self.axis]

    def source(self, g: float) -> np.ndarray:
        up = np.zeros(self.action.m)
        up[self.axis] = g
        return up


def w_s_compute(S: ActionFunctional, loc: Localization, uprime_grid, axis: int = 0,
                order: Optional[int] = None, workers: int = 1) -> EffectiveState:
    """
    在源网格上计算 W_S 与倾斜平均，并按定义填入 Gamma 表

    最大 |u'| 处用 order 与 order + 8 两个阶数比较，不一致时抛出 ResolutionError。
    """
    action = S.localize(loc, order)
    grid = np.asarray(uprime_grid, dtype=float).reshape(-1)
    if grid.size < 3 or not np.all(np.isfinite(grid)):
        raise ConfigError("源网格至少需要 3 个有限点")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError("源网格必须严格递增")
    if not 0 <= axis < action.m:
        raise ConfigError(f"切片轴 {axis} 超出 m={action.m}")

    def source(g: float) -> np.ndarray:
        up = np.zeros(action.m)
        up[axis] = g
        return up

    edge = source(grid[np.argmax(np.abs(grid))])
    coarse, fine = action.w_s(edge), action.w_s(edge, action.order + 8)
    if abs(coarse - fine) > RESOLUTION_TOL * max(1.0, abs(fine)):
        raise ResolutionError(
            f"求积阶数 {action.order} 不足：W_S 在 u'={edge} 处两个阶数相差 {abs(coarse - fine):.3e}"
        )

    moments = map_blocks(lambda k: action.tilted(source(grid[k])), grid.size, workers)
    w_s_values = np.array([mo.log_z / np.pi for mo in moments])
    mean_values = np.array([mo.mean for mo in moments])
    gamma_values = -w_s_values - 2.0 * grid * mean_values[:, axis]
    log_N = action.tilted(np.zeros(action.m)).log_z

    logger.info(
        f"W_S 计算完成: m={action.m}, lambda={S.quartic_coupling:g}, 源点 {grid.size} 个, "
        f"log N = {log_N:.10g}"
    )
    return EffectiveState(action, axis, grid, w_s_values, mean_values, gamma_values, float(log_N))


def _check_interior(state: EffectiveState, g: float) -> None:
    lo, hi = state.uprime_grid[0], state.uprime_grid[-1]
    if not lo <= g <= hi:
        raise DomainError(f"u'={g} 超出源网格 [{lo}, {hi}]，拒绝外推")


def mean_field(state: EffectiveState, uprime) -> np.ndarray:
    """<b>(u') = -1/2 grad W_S(u')，中心差分，每个点重新求积"""
    up = np.asarray(uprime, dtype=float)
    up = state.source(float(up)) if up.ndim == 0 else up.reshape(state.action.m)
    _check_interior(state, float(up[state.axis]))
    grad = np.empty(state.action.m)
    for i in range(state.action.m):
        step = np.zeros(state.action.m)
        step[i] = FD_STEP
        grad[i] = (state.action.w_s(up + step) - state.action.w_s(up - step)) / (2 * FD_STEP)
    return -0.5 * grad


def tilted_mean(state: EffectiveState, uprime) -> np.ndarray:
    """直接倾斜平均 int u e^{-pi S - 2 pi <u', u>} du / int e^{-pi S - 2 pi <u', u>} du"""
    up = np.asarray(uprime, dtype=float)
    up = state.source(float(up)) if up.ndim == 0 else up
    return state.action.tilted(up).mean


@dataclass(frozen=True)
class GammaTable:
    v: np.ndarray
    gamma: np.ndarray
    uprime: np.ndarray


def gamma_legendre(state: EffectiveState) -> GammaTable:
    """按 v 升序返回 Gamma 表；平均场在网格上必须严格单调"""
    v = state.v_values
    dv = np.diff(v)
    if not (np.all(dv < 0) or np.all(dv > 0)):
        raise LegendreError("平均场在源网格上不单调，无法做 Legendre 变换")
    order = np.argsort(v)
    return GammaTable(v[order], state.gamma_values[order], state.uprime_grid[order])


def invert_mean_field(state: EffectiveState, v: float) -> float:
    """
    求 u'(v)：单调插值给初值，再对倾斜平均做 Newton 迭代（Jacobian -2 pi Cov）
    """
    table = gamma_legendre(state)
    v = float(v)
    if not table.v[0] <= v <= table.v[-1]:
        raise DomainError(f"v={v} 超出平均场范围 [{table.v[0]:.6g}, {table.v[-1]:.6g}]")
    g = float(PchipInterpolator(table.v, table.uprime)(v))
    axis = state.axis
    for _ in range(NEWTON_MAX_ITER):
        mo = state.action.tilted(state.source(g))
        residual = mo.mean[axis] - v
        slope = -2.0 * np.pi * mo.cov[axis, axis]
        if slope == 0:
            raise LegendreError(f"u'={g} 处倾斜方差为零")
        g -= residual / slope
        if abs(residual) <= NEWTON_TOL * max(1.0, abs(v)):
            break
    else:
        logger.warning(f"平均场反演在 v={v} 处未在 {NEWTON_MAX_ITER} 步内收敛")
    return g


def gamma_at(state: EffectiveState, v: float) -> float:
    g = invert_mean_field(state, v)
    return -state.action.w_s(state.source(g)) - 2.0 * g * float(v)


def dual_mean_field(state: EffectiveState, v: float) -> float:
    """<b'>(v) = -1/2 grad Gamma(v) = u'(v)"""
    return invert_mean_field(state, v)


def quantum_eom_residual(state: EffectiveState) -> float:
    """|grad Gamma| 在零源平均场 v0 = <b>(0) 处的值，即 2 |u'(v0)|"""
    _check_interior(state, 0.0)
    v0 = float(state.action.tilted(np.zeros(state.action.m)).mean[state.axis])
    residual = 2.0 * abs(invert_mean_field(state, v0))
    logger.info(f"量子运动方程残差: {residual:.3e}")
    return residual


def legendre_roundtrip(state: EffectiveState) -> float:
    """max_k |W_S(u'_k) - (-2 u'_k v_k - Gamma(v_k))|，Gamma 经反演重新计算"""
    errors = []
    for g, v, w in zip(state.uprime_grid, state.v_values, state.w_s_values):
        errors.append(abs(w - (-2.0 * g * v - gamma_at(state, v))))
    return float(max(errors))


def gamma_convexity(state: EffectiveState) -> float:
    """Gamma 表（按 v 排序）离散二阶差商的最小值"""
    table = gamma_legendre(state)
    slopes = np.diff(table.gamma) / np.diff(table.v)
    second = np.diff(slopes) / (0.5 * (table.v[2:] - table.v[:-2]))
    return float(np.min(second))


# ---------------------------------------------------------------------------
# Schwinger-Dyson
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Polynomial:
    """
    多元多项式，系数按 numpy.polynomial 约定存成稠密数组：coef[e_1, ..., e_m] 为 u_1^e_1 ... u_m^e_m 的系数
    """

    coef: np.ndarray

    def __post_init__(self):
        coef = np.atleast_1d(np.asarray(self.coef, dtype=complex))
        object.__setattr__(self, "coef", coef)

    @property
    def m(self) -> int:
        return self.coef.ndim

    @classmethod
    def from_terms(cls, terms: Mapping[tuple[int, ...], complex], m: int) -> "Polynomial":
        """稀疏表示 {指数元组: 系数} -> 稠密系数数组"""
        keys = [tuple(int(e) for e in exps) for exps in terms]
        for exps in keys:
            if len(exps) != m or min(exps, default=0) < 0:
                raise ConfigError(f"指数 {exps} 与变量数 m={m} 不匹配")
        shape = tuple(max((k[i] for k in keys), default=0) + 1 for i in range(m))
        coef = np.zeros(shape, dtype=complex)
        for exps, value in zip(keys, terms.values()):
            coef[exps] += complex(value)
        return cls(coef)

    @classmethod
    def monomial(cls, exps: Sequence[int], coef: complex = 1.0) -> "Polynomial":
        return cls.from_terms({tuple(exps): coef}, len(exps))

    @classmethod
    def constant(cls, m: int, value: complex = 1.0) -> "Polynomial":
        return cls(np.full((1,) * m, value, dtype=complex))

    @classmethod
    def from_json(cls, text: str, m: int) -> "Polynomial":
        """[[coef, [e_1, ..., e_m]], ...]，coef 可为 [re, im]"""
        try:
            entries = json.loads(text)
            terms: dict = {}
            for coef, exps in entries:
                coef = complex(*coef) if isinstance(coef, list) else complex(coef)
                terms[tuple(exps)] = terms.get(tuple(exps), 0) + coef
        except (ValueError, TypeError) as e:
            raise ConfigError(f"无法解析多项式: {e}") from e
        return cls.from_terms(terms, m)

    @property
    def degree(self) -> int:
        nonzero = np.argwhere(self.coef != 0)
        return int(nonzero.sum(axis=1).max()) if nonzero.size else 0

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if other.m != self.m:
            raise DimensionError(f"变量数不一致: {self.m} vs {other.m}")
        shape = np.maximum(self.coef.shape, other.coef.shape)
        total = np.zeros(tuple(shape), dtype=complex)
        total[tuple(slice(n) for n in self.coef.shape)] += self.coef
        total[tuple(slice(n) for n in other.coef.shape)] += other.coef
        return Polynomial(total)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u)
        if u.shape[-1] != self.m:
            raise DimensionError(f"输入最后一维 {u.shape[-1]} 与 m={self.m} 不一致")
        # 逐轴 Horner：第一轴展开成点的批量维，其余轴逐一收缩
        values = P.polyval(u[..., 0], self.coef)
        for i in range(1, self.m):
            values = P.polyval(u[..., i], values, tensor=False)
        return np.asarray(values, dtype=complex)

    def derivative(self, i: int) -> "Polynomial":
        if self.coef.shape[i] == 1:
            return Polynomial(np.zeros((1,) * self.m, dtype=complex))
        return Polynomial(P.polyder(self.coef, axis=i))


def schwinger_dyson_residual(qf: Optional[QuadFormPair], loc: Localization, F: Polynomial,
                             order: int = 24) -> float:
    """
    sum_i |<d_i F> - pi <F d_i Q>|，期望取在归一化权重 e^{-pi u^T Wm^{-1} u} 下，d_i Q = 2 (Wm^{-1} u)_i
    """
    if qf is not None and loc.rows and not loc.rows[0].grid.compatible(qf.grid):
        raise DimensionError("局域化行向量与二次型不在同一网格上")
    if loc.m > MAX_EFFECTIVE_DIM:
        raise UnsupportedError(f"Schwinger-Dyson 检验只支持 m <= {MAX_EFFECTIVE_DIM}")
    if F.m != loc.m:
        raise DimensionError(f"多项式变量数 {F.m} 与局域化维度 {loc.m} 不一致")
    if F.degree > MAX_SD_DEGREE or F.degree + 1 > 2 * order - 1:
        raise QuadratureError(f"多项式次数 {F.degree} 超出求积阶数 {order} 的精确范围")
    if not loc.is_real:
        raise UnsupportedError("Schwinger-Dyson 检验需要实的 Wm")

    chol = scipy.linalg.cholesky(loc.Wm.real, lower=True)
    x, w = tensor_hermgauss(order, loc.m)
    u = x @ chol.T / np.sqrt(np.pi)
    norm = np.pi ** (-0.5 * loc.m)
    f_values = F(u)
    dq = 2.0 * u @ loc.Wm_inv.real
    total = 0.0
    for i in range(loc.m):
        lhs = norm * np.sum(w * F.derivative(i)(u))
        rhs = np.pi * norm * np.sum(w * f_values * dq[:, i])
        total += abs(lhs - rhs)
    logger.debug(f"Schwinger-Dyson 残差 {total:.3e}（deg F = {F.degree}, m = {loc.m}）")
    return float(total)
