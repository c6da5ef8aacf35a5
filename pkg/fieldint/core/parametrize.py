"""
微分系统参数化 P: B -> F(M)

- 路径展开：dp - Y dt = X_(alpha) db^alpha，p(t_a) = m0（隐式中点法，Stratonovich 相容）
- 场的逐点参数化：沿时间轴对每个空间格点展开
- 积分的拉回、线性变量替换与区间吸收
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from fieldint.core.integrators import (
    IntegratorSpec,
    McEstimate,
    draw_block,
    flat_integrate,
    integrate_analytic,
    sampling_factor,
)
from fieldint.core.measures import DiracComb
from fieldint.core.quadforms import Localization, QuadFormPair
from fieldint.core.spaces import DomainGrid, FieldVector, removed_sites
from fieldint.utils.errors import (
    ConfigError,
    DegeneracyError,
    DevelopmentError,
    DimensionError,
    DomainError,
    SamplingError,
    UnsupportedError,
)
from fieldint.utils.logger import get_logger
from fieldint.utils.parallel import (
    DEFAULT_BLOCK_SIZE,
    MomentAccumulator,
    block_ranges,
    map_blocks,
    pairwise_reduce,
)

logger = get_logger("parametrize")

FIXED_POINT_TOL = 1e-14
FIXED_POINT_MAX_ITER = 50
DEFAULT_BOUND = 1e6

FieldFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class VectorFieldSet:
    """
    R^M 上的向量场组

    X: (B, M) -> (B, M, n)，第 alpha 列是 X_(alpha)
    Y: (B, M) -> (B, M) 漂移，可省略
    """

    X: FieldFn
    m0: np.ndarray
    n: int
    Y: Optional[FieldFn] = None
    name: str = "custom"
    bound: float = DEFAULT_BOUND

    def __post_init__(self):
        m0 = np.array(self.m0, dtype=float).reshape(-1)
        m0.setflags(write=False)
        object.__setattr__(self, "m0", m0)
        if self.n < 1:
            raise ConfigError(f"驱动分量数必须为正: {self.n}")
        cols = self.columns(m0[None, :])
        if cols.shape != (1, m0.shape[0], self.n):
            raise DimensionError(f"X(m0) 的形状 {cols.shape} 与 (1, {m0.shape[0]}, {self.n}) 不符")

    @property
    def M(self) -> int:
        return int(self.m0.shape[0])

    @classmethod
    def from_fields(cls, fields: Sequence[FieldFn], m0, Y: Optional[FieldFn] = None,
                    name: str = "custom") -> "VectorFieldSet":
        """由若干个 (B, M) -> (B, M) 的单个向量场组装"""
        fields = list(fields)
        return cls(X=lambda p: np.stack([f(p) for f in fields], axis=-1),
                   m0=m0, n=len(fields), Y=Y, name=name)

    def columns(self, p: np.ndarray) -> np.ndarray:
        try:
            return np.asarray(self.X(p), dtype=float)
        except Exception as e:
            raise DevelopmentError(f"向量场 {self.name} 求值失败: {e}") from e

    def increment(self, p: np.ndarray, db: np.ndarray, dt: float) -> np.ndarray:
        step = np.einsum("bmn,bn->bm", self.columns(p), db)
        if self.Y is not None:
            try:
                step = step + dt * np.asarray(self.Y(p), dtype=float)
            except Exception as e:
                raise DevelopmentError(f"漂移场 {self.name} 求值失败: {e}") from e
        return step

    def rank_at(self, points: np.ndarray) -> np.ndarray:
        """各点处 X 的秩"""
        return np.linalg.matrix_rank(self.columns(np.atleast_2d(points)))


def vector_field_catalog(name: str, params: Sequence[float] = (), M: Optional[int] = None,
                         m0=None, drift=None) -> VectorFieldSet:
    """
    内置向量场：
        flat             X = I_M（n = M）
        rotation         X(p) = (-p2, p1)，m0 = (1, 0)
        scaled-rotation  X(p) = omega (-p2, p1)，params = [omega]
        affine           X(p) = a p + c，params = [a, c_1, ..., c_M]
    drift 给定时附加常漂移 Y = drift
    """
    params = [float(v) for v in params]
    key = name.strip().lower()
    if key == "flat":
        dim = int(M or (len(m0) if m0 is not None else 1))
        eye = np.eye(dim)
        X = lambda p: np.broadcast_to(eye, (p.shape[0], dim, dim))
        start, n = np.zeros(dim), dim
    elif key in ("rotation", "scaled-rotation"):
        omega = params[0] if key == "scaled-rotation" and params else 1.0
        X = lambda p: omega * np.stack([-p[:, 1], p[:, 0]], axis=-1)[:, :, None]
        start, n = np.array([1.0, 0.0]), 1
    elif key == "affine":
        if not params:
            raise ConfigError("affine 向量场需要参数 [a, c_1, ..., c_M]")
        a = params[0]
        dim = int(M or max(len(params) - 1, 1))
        c = np.zeros(dim)
        k = min(dim, len(params) - 1)
        c[:k] = params[1:1 + k]
        X = lambda p: (a * p + c)[:, :, None]
        start, n = np.zeros(dim), 1
    else:
        raise ConfigError(f"未知的向量场: {name!r}（可选 flat / rotation / scaled-rotation / affine）")

    start = start if m0 is None else np.asarray(m0, dtype=float)
    Y = None
    if drift is not None:
        drift = np.asarray(drift, dtype=float).reshape(-1)
        Y = lambda p: np.broadcast_to(drift, p.shape)
    return VectorFieldSet(X=X, m0=start, n=n, Y=Y, name=key)


def lipschitz_estimate(vfs: VectorFieldSet, radius: float = 1.0, samples: int = 64, seed: int = 0) -> float:
    """在 m0 附近随机取点对估计 X 的 Lipschitz 常数"""
    rng = np.random.default_rng(seed)
    p = vfs.m0 + radius * rng.standard_normal((samples, vfs.M))
    q = p + 1e-3 * radius * rng.standard_normal((samples, vfs.M))
    num = np.linalg.norm(vfs.columns(p) - vfs.columns(q), axis=(1, 2))
    den = np.linalg.norm(p - q, axis=1)
    return float(np.max(num / den))


@dataclass(frozen=True, eq=False)
class ParamSolution:
    """
    展开结果。times: (steps+1,)；points: (B, steps+1, M)；driver: (B, steps+1, n)；
    failed: (B,) 被爆破保护或不动点迭代剔除的样本
    """

    times: np.ndarray
    points: np.ndarray = field(repr=False)
    driver: np.ndarray = field(repr=False)
    failed: np.ndarray = field(repr=False)

    @property
    def batch(self) -> int:
        return int(self.points.shape[0])

    @property
    def final(self) -> np.ndarray:
        return self.points[:, -1, :]


def _as_driver_batch(drivers, n: int) -> np.ndarray:
    drivers = np.asarray(drivers, dtype=float)
    if drivers.ndim == 1:
        drivers = drivers[None, :, None]
    elif drivers.ndim == 2:
        drivers = drivers[:, :, None] if n == 1 else drivers[None, :, :]
    if drivers.ndim != 3 or drivers.shape[2] != n:
        raise DimensionError(f"驱动形状 {drivers.shape} 与 {n} 个分量不符")
    if drivers.shape[1] < 2:
        raise DimensionError("驱动路径至少需要两个采样点")
    return drivers


def _resample(drivers: np.ndarray, steps: int) -> np.ndarray:
    """分段线性细化到 steps + 1 个等距采样点"""
    samples = drivers.shape[1] - 1
    if steps == samples:
        return drivers
    coarse = np.linspace(0.0, 1.0, samples + 1)
    fine = np.linspace(0.0, 1.0, steps + 1)
    out = np.empty((drivers.shape[0], steps + 1, drivers.shape[2]))
    for b in range(drivers.shape[0]):
        for k in range(drivers.shape[2]):
            out[b, :, k] = np.interp(fine, coarse, drivers[b, :, k])
    return out


def _midpoint_step(vfs: VectorFieldSet, p: np.ndarray, db: np.ndarray, dt: float):
    """隐式中点 p1 = p + X((p + p1) / 2) db + Y((p + p1) / 2) dt，不动点迭代求解"""
    guess = p + vfs.increment(p, db, dt)
    converged = np.zeros(p.shape[0], dtype=bool)
    for _ in range(FIXED_POINT_MAX_ITER):
        new = p + vfs.increment(0.5 * (p + guess), db, dt)
        change = np.max(np.abs(new - guess), axis=1)
        guess = new
        converged = change <= FIXED_POINT_TOL * (1.0 + np.max(np.abs(new), axis=1))
        if np.all(converged | ~np.isfinite(change)):
            break
    return guess, converged


def develop_paths(vfs: VectorFieldSet, drivers, t_a: float = 0.0, t_b: float = 1.0,
                  steps: Optional[int] = None, start: Optional[np.ndarray] = None) -> ParamSolution:
    """
    批量展开 dp = X(p) db + Y(p) dt

    Args:
        drivers: (B, K+1, n) 在 [t_a, t_b] 上等距采样的驱动路径（n = 1 时可为 (B, K+1)）
        steps: 积分步数，不少于 K；大于 K 时驱动分段线性细化
        start: (B, M) 各样本的初始点，默认 m0
    """
    if not t_b > t_a:
        raise DomainError(f"区间端点需满足 t_b > t_a，收到 t_a={t_a}, t_b={t_b}")
    drivers = _as_driver_batch(drivers, vfs.n)
    samples = drivers.shape[1] - 1
    steps = samples if steps is None else int(steps)
    if steps < samples:
        raise ConfigError(f"步数 {steps} 少于驱动采样区间数 {samples}")
    drivers = _resample(drivers, steps)

    B = drivers.shape[0]
    times = np.linspace(t_a, t_b, steps + 1)
    dt = (t_b - t_a) / steps
    points = np.empty((B, steps + 1, vfs.M))
    points[:, 0] = vfs.m0 if start is None else np.asarray(start, dtype=float).reshape(B, vfs.M)
    failed = np.zeros(B, dtype=bool)
    unconverged = 0

    for k in range(steps):
        active = ~failed
        if not np.any(active):
            points[:, k + 1:] = np.nan
            break
        p = points[active, k]
        nxt, ok = _midpoint_step(vfs, p, drivers[active, k + 1] - drivers[active, k], dt)
        bad = ~ok | ~np.all(np.isfinite(nxt), axis=1) | (np.linalg.norm(nxt, axis=1) > vfs.bound)
        unconverged += int(np.count_nonzero(~ok))
        idx = np.flatnonzero(active)
        failed[idx[bad]] = True
        points[idx, k + 1] = nxt
        points[failed, k + 1] = np.nan

    ranks = vfs.rank_at(points[~failed, -1]) if np.any(~failed) else np.array([])
    if int(vfs.rank_at(vfs.m0)[0]) < vfs.n or np.any(ranks < vfs.n):
        logger.warning(f"向量场 {vfs.name} 的秩低于驱动分量数 {vfs.n}，参数化不是常秩的")
    if np.any(failed):
        logger.warning(
            f"{int(failed.sum())}/{B} 条路径展开失败（超出界限 {vfs.bound:g}、非有限值，"
            f"或 {unconverged} 次不动点迭代未收敛）"
        )
    return ParamSolution(times=times, points=points, driver=drivers, failed=failed)


def develop_path(vfs: VectorFieldSet, b, steps: Optional[int] = None,
                 t_a: float = 0.0, t_b: float = 1.0) -> ParamSolution:
    """单条驱动路径的展开；失败时抛出 DevelopmentError"""
    b = np.asarray(b, dtype=float)
    sol = develop_paths(vfs, b[None, ...] if b.ndim == 2 or vfs.n == 1 else b, t_a, t_b, steps)
    if sol.failed[0]:
        raise DevelopmentError(f"路径展开失败：|p| 超过 {vfs.bound:g} 或迭代不收敛")
    return sol


def driver_series(grid: DomainGrid, raw: np.ndarray) -> np.ndarray:
    """
    把路径网格上的原始值补成从 0 出发的驱动序列：首端补 0，Dirichlet 末端补 0

    raw 的最后一维是时间轴格点。
    """
    if grid.ndim != 1 or grid.factors:
        raise DimensionError("驱动路径需要一维网格")
    _, last = removed_sites(grid.boundary[0])
    pad = [(0, 0)] * (raw.ndim - 1) + [(1, last)]
    return np.pad(raw, pad)


def _real_raw(b: FieldVector) -> np.ndarray:
    raw = b.to_raw()
    if np.any(raw.imag):
        raise DomainError("参数化只接受实值场")
    return raw.real


def field_parametrize(vfs: VectorFieldSet, f_a, b: FieldVector) -> np.ndarray:
    """
    逐点参数化：对每个空间格点 z，以 f_a(z) 为初值、t -> b(z, t) 为驱动沿最后一条轴（时间）展开

    Returns:
        形状 dims 的场值（M = 1）或 dims + (M,)
    """
    grid = b.grid
    if grid.ndim < 2:
        raise DimensionError("场的参数化需要 (d+1) 维网格，最后一轴为时间")
    if vfs.n != 1:
        raise DimensionError("逐点参数化要求标量驱动 (n = 1)")
    spatial = int(np.prod(grid.dims[:-1]))
    series = _real_raw(b).reshape(spatial, grid.dims[-1])
    _, last = removed_sites(grid.boundary[-1])
    driver = np.pad(series, [(0, 0), (1, last)])

    f_a = np.asarray(f_a.to_raw().real if isinstance(f_a, FieldVector) else f_a, dtype=float)
    start = f_a.reshape(spatial, vfs.M)
    sol = develop_paths(vfs, driver, steps=driver.shape[1] - 1, start=start)
    if np.any(sol.failed):
        raise DevelopmentError(f"{int(sol.failed.sum())} 个空间格点的展开失败")
    values = sol.points[:, 1:1 + grid.dims[-1], :]
    shape = tuple(grid.dims) + ((vfs.M,) if vfs.M > 1 else ())
    return values.reshape(shape)


def pullback_integrate(vfs: VectorFieldSet, spec: IntegratorSpec, F: Callable[[ParamSolution], np.ndarray],
                       count: int, seed: int, t_a: float = 0.0, t_b: float = 1.0,
                       steps: Optional[int] = None, workers: int = 1,
                       block_size: int = DEFAULT_BLOCK_SIZE) -> McEstimate:
    """
    int_{P M} F Dp := int F(m0 . Sigma(b)) D b：按积分器采样驱动路径、展开、对 F 求平均

    每个驱动分量是积分器的一次独立抽样；F 接收批量 ParamSolution，返回 (B,) 数组。
    展开失败的样本不计入平均，数目记在 failures 中。
    """
    chol = sampling_factor(spec)
    grid = spec.qf.grid
    ranges = block_ranges(count, block_size)

    def run_block(block: int) -> tuple[MomentAccumulator, int]:
        start, stop = ranges[block]
        folded = draw_block(chol, seed, block, stop - start, components=vfs.n)
        if vfs.n == 1:
            folded = folded[:, None, :]
        raw = folded / np.sqrt(grid.weights)
        drivers = np.swapaxes(driver_series(grid, raw), 1, 2)
        sol = develop_paths(vfs, drivers, t_a, t_b, steps)
        values = np.asarray(F(sol), dtype=complex)
        ok = ~sol.failed
        values = values[ok]
        if not np.all(np.isfinite(values)):
            raise SamplingError(f"第 {block} 块出现非有限的拉回泛函值（seed={seed}）")
        failures = int(np.count_nonzero(~ok))
        if not values.size:
            return MomentAccumulator(0, np.zeros(1, dtype=complex), np.zeros(1)), failures
        return MomentAccumulator.from_values(values), failures

    results = map_blocks(run_block, len(ranges), workers)
    failures = sum(f for _, f in results)
    acc = pairwise_reduce([a for a, _ in results])
    if acc.count == 0:
        raise SamplingError(f"全部 {count} 条路径展开失败")
    estimate = McEstimate(complex(acc.mean[0]), float(acc.stderr()[0]), int(count), int(seed), failures)
    logger.info(f"拉回积分完成: 向量场 {vfs.name}, 样本 {count}, 失败 {failures}, 均值 {estimate.mean:.6g}")
    return estimate


# ---------------------------------------------------------------------------
# 线性变量替换
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearMapPair:
    """
    y = M x 与对偶映射 R = M^T：<R y', x> = <y', M x>

    线性映射的导数处处为 M，Det M' = Det R' = det M（不取绝对值）。
    """

    M: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    logdetM: complex

    @property
    def is_real(self) -> bool:
        return not np.any(self.M.imag)

    @property
    def det(self) -> complex:
        return complex(np.exp(self.logdetM))

    @classmethod
    def from_matrix(cls, M) -> "LinearMapPair":
        M = np.array(M, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"线性映射必须是方阵，收到 {M.shape}")
        sign, logabs = np.linalg.slogdet(M)
        if sign == 0 or not np.isfinite(logabs):
            raise DegeneracyError("线性映射奇异")
        R = M.T.copy()
        M.setflags(write=False)
        R.setflags(write=False)
        return cls(M=M, R=R, logdetM=complex(logabs) + cmath.log(sign))

    def transpose_residual(self, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        n = self.M.shape[0]
        yp, x = rng.standard_normal(n), rng.standard_normal(n)
        return float(abs((self.R @ yp) @ x - yp @ (self.M @ x)))


@dataclass(frozen=True)
class ChangeOfVariableResult:
    lhs: complex
    rhs: complex
    lhs_volume: complex
    rhs_volume: complex
    residual_pullback: float
    residual_determinant: float

    @property
    def residual(self) -> float:
        return max(self.residual_pullback, self.residual_determinant)


def _log_volume(qf: QuadFormPair, s: complex) -> complex:
    """未归一化高斯体积元 e^{-pi Q/s} d^N b 的总质量取对数：-1/2 log det(A / s)"""
    return -0.5 * (qf.logdetA - qf.size * cmath.log(s))


def change_of_variable_check(pair: LinearMapPair, spec: IntegratorSpec, comb: DiracComb) -> ChangeOfVariableResult:
    """
    线性变量替换 y = M x 的两种形式

    拉回形式：Z-(y') = Z(R y')，由推前二次型 A_Y = M^{-T} A M^{-1} 实现，
        int_Y F_mu D_{Theta-, Z-} y = int_X F_mu(M x) D_{Theta, Z} x。
    体积元形式：不归一化的积分器 Z_vol(b') = det(A/s)^{-1/2} e^{-pi s W(b')}，
        左端在 Y 上用 A_Y 自己的行列式求值（像 M(B) 带诱导定向），
        右端乘 Det M'：Det M * sum_k c_k Z_vol(R y'_k)。
    两端的行列式分别计算，det M 的符号由定向吸收。
    """
    if pair.M.shape != spec.qf.A.shape:
        raise DimensionError(f"线性映射形状 {pair.M.shape} 与二次型 {spec.qf.A.shape} 不一致")
    if not pair.is_real:
        raise UnsupportedError("体积元形式的变量替换只对实线性映射定义定向")
    target = IntegratorSpec.gaussian(spec.qf.pushforward(pair.M), spec.s)
    pulled = comb.pushforward(pair.R, grid=spec.qf.grid)
    lhs = integrate_analytic(target, comb)
    rhs = integrate_analytic(spec, pulled)

    orientation = 1.0 if pair.det.real > 0 else -1.0
    lhs_volume = orientation * cmath.exp(_log_volume(target.qf, spec.s)) * lhs
    rhs_scale = cmath.exp(pair.logdetM + _log_volume(spec.qf, spec.s))
    rhs_volume = rhs_scale * rhs
    result = ChangeOfVariableResult(
        lhs=lhs,
        rhs=rhs,
        lhs_volume=lhs_volume,
        rhs_volume=rhs_volume,
        residual_pullback=float(abs(lhs - rhs)),
        residual_determinant=float(abs(lhs_volume - rhs_volume) / abs(rhs_scale)),
    )
    logger.debug(f"变量替换检验: det M = {pair.det:.6g}, 残差 {result.residual:.3e}")
    return result


def translation_check(loc: Localization, comb_points, weights, shift, order: Optional[int] = None) -> float:
    """
    平移 u -> u + u0 下的平直积分：求积 F_mu(u + u0) 与平移后梳的解析值
    sum_k c_k exp(-2 pi i <u'_k, u0>) exp(-pi Wm(u'_k)) 之差
    """
    P = np.atleast_2d(np.asarray(comb_points, dtype=float))
    c = np.asarray(weights, dtype=complex).reshape(-1)
    u0 = np.asarray(shift, dtype=float).reshape(-1)
    if P.shape[1] != loc.m or u0.shape[0] != loc.m or P.shape[0] != c.shape[0]:
        raise DimensionError("梳支撑点、权重与平移向量的维度不一致")
    numeric = flat_integrate(loc, lambda u: np.exp(-2j * np.pi * ((u + u0) @ P.T)) @ c, order)
    shifted = c * np.exp(-2j * np.pi * (P @ u0))
    exact = complex(np.sum(shifted * np.exp(-np.pi * loc.w_eval(P))))
    return float(abs(numeric - exact))


def absorb_interval(qf: QuadFormPair, s: complex, t_a: float, t_b: float) -> tuple[IntegratorSpec, IntegratorSpec]:
    """区间长度 L 被 s 吸收：Gaussian(Q, s L) 与 Gaussian(Q / L, s) 等价"""
    length = float(t_b) - float(t_a)
    if not length > 0:
        raise DomainError(f"区间端点需满足 t_b > t_a，收到 t_a={t_a}, t_b={t_b}")
    return (
        IntegratorSpec.gaussian(qf, complex(s) * length),
        IntegratorSpec.gaussian(qf.scaled(1.0 / length), s),
    )


@dataclass(frozen=True)
class ConvergenceRow:
    steps: int
    error: float
    ratio: float


def convergence_table(vfs: VectorFieldSet, driver_fn: Callable[[np.ndarray], np.ndarray],
                      exact_fn: Callable[[float], np.ndarray], steps_list: Sequence[int],
                      t_a: float = 0.0, t_b: float = 1.0) -> list[ConvergenceRow]:
    """各步数下终点误差，以及相邻两行误差之比（二阶方法每次加倍约为 4）"""
    rows, previous = [], None
    exact = np.asarray(exact_fn(t_b), dtype=float)
    for steps in steps_list:
        times = np.linspace(t_a, t_b, int(steps) + 1)
        sol = develop_path(vfs, driver_fn(times), t_a=t_a, t_b=t_b)
        error = float(np.linalg.norm(sol.final[0] - exact))
        ratio = previous / error if previous is not None and error > 0 else float("nan")
        rows.append(ConvergenceRow(int(steps), error, ratio))
        logger.info(f"展开收敛: steps={steps}, 误差 {error:.3e}, 比值 {ratio:.3f}")
        previous = error
    return rows
