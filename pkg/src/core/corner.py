"""
角点奇异指数模块

求解超越方程 sin²(αω) = α²sin²ω 在竖直带 Re α ∈ strip 内的根，
并用辐角原理（绕数）核对根的个数。

f(α) = sin²(αω) - α²sin²ω 分解为 g₊·g₋，g± = sin(αω) ± α·sinω。
对两个因子分别做阻尼 Newton 迭代（二者的根一般是单根），合并去重后
在 f 上计算残差与重数。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-12
DEDUP_TOL = 1e-8
DOUBLE_ROOT_TOL = 1e-8
STEP_TOL = 1e-13
# 带边界与绕数围道之间的间隔（α = 0, 1 恒为根）
EDGE_MARGIN = 1e-4
IM_CUTOFF = 10.0
TALL_IM_CUTOFF = 20.0

CORNER_FIELDS = ['omega', 're_alpha', 'im_alpha', 'residual', 'multiplicity']


@dataclass(frozen=True)
class CornerRoot:
    """超越方程的一个根"""
    omega: float
    alpha: complex
    residual: float
    double: bool = False
    final_step: float = 0.0

    @property
    def multiplicity(self) -> int:
        return 2 if self.double else 1

    def to_row(self) -> List[float]:
        return [self.omega, self.alpha.real, self.alpha.imag, self.residual, self.multiplicity]


@dataclass
class CornerReport:
    """一个角度上的根枚举结果"""
    omega: float
    strip: Tuple[float, float]
    include_upper: bool
    roots: List[CornerRoot] = field(default_factory=list)
    enumerated_count: int = 0
    winding_count: int = 0
    tall_winding_count: int = 0

    @property
    def complete(self) -> bool:
        """Newton 枚举与两个围道上的绕数一致"""
        return self.enumerated_count == self.winding_count == self.tall_winding_count

    @property
    def min_real_part(self) -> float:
        return min((r.alpha.real for r in self.roots), default=math.inf)


@dataclass
class StripVerification:
    """Re α ∈ (0, 1/2] 无根的核验结果"""
    omega: float
    half_strip: CornerReport
    unit_strip: CornerReport

    @property
    def passed(self) -> bool:
        return (not self.half_strip.roots and self.half_strip.winding_count == 0
                and self.half_strip.complete and self.unit_strip.complete)

    @property
    def min_real_part(self) -> float:
        """单位带内根的最小实部"""
        return self.unit_strip.min_real_part


def transcendental(alpha: np.ndarray, omega: float) -> np.ndarray:
    """f(α) = sin²(αω) - α²sin²ω"""
    return np.sin(alpha * omega) ** 2 - alpha ** 2 * math.sin(omega) ** 2


def transcendental_derivative(alpha: np.ndarray, omega: float) -> np.ndarray:
    """f'(α) = ω·sin(2αω) - 2α·sin²ω"""
    return omega * np.sin(2.0 * alpha * omega) - 2.0 * alpha * math.sin(omega) ** 2


def _factor(omega: float, sign: float) -> Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    s = math.sin(omega)

    def g(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.sin(z * omega) + sign * z * s, omega * np.cos(z * omega) + sign * s

    return g


def _damped_newton(func, seeds: np.ndarray, max_iter: int = 80,
                   max_backtracks: int = 30) -> Tuple[np.ndarray, np.ndarray]:
    """
    向量化的阻尼 Newton 迭代

    Returns:
        (收敛点, 最后一步的步长)；未收敛的种子为 nan
    """
    z = seeds.astype(complex).copy()
    last_step = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)

    with np.errstate(all='ignore'):
        for _ in range(max_iter):
            if not np.any(active):
                break
            za = z[active]
            g, dg = func(za)
            step = g / dg
            t = np.ones(za.shape)
            trial = za - step
            g_abs = np.abs(g)
            for _ in range(max_backtracks):
                g_trial, _ = func(trial)
                bad = ~(np.abs(g_trial) <= g_abs) & (t > 1e-9)
                if not np.any(bad):
                    break
                t[bad] *= 0.5
                trial[bad] = za[bad] - t[bad] * step[bad]
            moved = np.abs(trial - za)
            z[active] = trial
            last_step[active] = moved
            finished = (moved < STEP_TOL * np.maximum(1.0, np.abs(trial))) | ~np.isfinite(trial)
            idx = np.flatnonzero(active)
            active[idx[finished]] = False

        # 两步无阻尼精修
        for _ in range(2):
            g, dg = func(z)
            step = g / dg
            ok = np.isfinite(step)
            z[ok] = z[ok] - step[ok]
            last_step[ok] = np.abs(step[ok])

    z[~np.isfinite(z)] = np.nan
    return z, last_step


def _dedupe(candidates: np.ndarray, steps: np.ndarray) -> List[Tuple[complex, float]]:
    order = np.lexsort((candidates.imag, candidates.real))
    unique: List[Tuple[complex, float]] = []
    for i in order:
        z = complex(candidates[i])
        if any(abs(z - u) < DEDUP_TOL for u, _ in unique):
            continue
        unique.append((z, float(steps[i])))
    return unique


def _snap_real(z: complex, omega: float) -> complex:
    """虚部在舍入误差以内的根放回实轴上再精修"""
    if abs(z.imag) > 1e-9:
        return z
    x = z.real
    s = math.sin(omega)
    for _ in range(3):
        for sign in (1.0, -1.0):
            g = math.sin(x * omega) + sign * x * s
            dg = omega * math.cos(x * omega) + sign * s
            if abs(g) < 1e-6 and dg != 0.0:
                x -= g / dg
                break
    return complex(x, 0.0)


def _vertical_samples(im_max: float, count: int) -> np.ndarray:
    """[-im_max, im_max] 上在 Im = 0 附近加密的采样（实轴上 α = 0, 1 恒为零点）"""
    u = np.linspace(-1.0, 1.0, count)
    a = 14.0
    return im_max * np.sinh(a * u) / math.sinh(a)


def winding_count(omega: float, re_lo: float, re_hi: float, im_max: float, max_points: int = 1 << 14) -> int:
    """
    矩形 [re_lo, re_hi] × [-im_max, im_max] 内 f 的零点个数（计重数）

    沿逆时针围道累加 arg f 的增量；逐次加密直到相邻采样点的辐角跳变小于 π/4。
    """
    n = 256
    with np.errstate(all='ignore'):
        while True:
            horizontal = np.linspace(re_lo, re_hi, n)
            vertical = _vertical_samples(im_max, n)
            path = np.concatenate([
                horizontal - 1j * im_max,
                re_hi + 1j * vertical[1:],
                horizontal[::-1][1:] + 1j * im_max,
                re_lo + 1j * vertical[::-1][1:],
            ])
            values = transcendental(path, omega)
            jumps = np.angle(values[1:] / values[:-1])
            if (np.all(np.isfinite(jumps)) and np.max(np.abs(jumps)) < math.pi / 4) or n >= max_points:
                break
            n *= 2
    if n >= max_points:
        logger.warning(f"绕数计算达到最大采样点数: ω={omega:.6g}")
    return int(round(float(np.sum(jumps)) / (2.0 * math.pi)))


def corner_roots(omega: float, strip: Tuple[float, float] = (0.0, 1.0), include_upper: bool = False,
                 im_max: float = IM_CUTOFF, seeds_per_unit: int = 20) -> CornerReport:
    """
    枚举 sin²(αω) = α²sin²ω 在 Re α ∈ strip、|Im α| ≤ im_max 内的根

    Args:
        omega: 角度 ω（弧度），ω ∈ (0, 2π]
        strip: 实部区间 (a, b)，左端开
        include_upper: 右端是否闭合
        im_max: 虚部截断
        seeds_per_unit: 每单位长度的种子数

    Returns:
        CornerReport: 根列表与绕数核对结果；不一致时 complete 为 False

    Raises:
        ValueError: ω 不在 (0, 2π] 内
    """
    if not 0.0 < omega <= 2.0 * math.pi + 1e-12:
        raise ValueError(f"角度必须在 (0, 2π] 内: {omega}")
    lo, hi = strip
    re_lo = lo + EDGE_MARGIN
    re_hi = hi + EDGE_MARGIN if include_upper else hi - EDGE_MARGIN

    n_re = max(8, int(math.ceil(seeds_per_unit * (hi - lo))) + 1)
    n_im = int(math.ceil(seeds_per_unit * im_max / 2)) * 2 + 1
    re_seeds = np.linspace(lo - 0.05, hi + 0.05, n_re)
    im_seeds = np.linspace(-im_max, im_max, n_im)
    seeds = (re_seeds[:, None] + 1j * im_seeds[None, :]).ravel()

    found = []
    steps = []
    for sign in (1.0, -1.0):
        z, step = _damped_newton(_factor(omega, sign), seeds)
        found.append(z)
        steps.append(step)
    z = np.concatenate(found)
    step = np.concatenate(steps)

    with np.errstate(all='ignore'):
        residual = np.abs(transcendental(z, omega))
    inside = (np.isfinite(z) & (z.real > re_lo) & (z.real < re_hi) & (np.abs(z.imag) <= im_max)
              & (residual <= 1e-8))

    roots: List[CornerRoot] = []
    for alpha, last in _dedupe(z[inside], step[inside]):
        alpha = _snap_real(alpha, omega)
        res = float(abs(transcendental(np.array(alpha), omega)))
        if res > RESIDUAL_TOL:
            logger.warning(f"根的残差超过容差: ω={omega:.6g}, α={alpha}, 残差={res:.3e}")
        double = abs(complex(transcendental_derivative(np.array(alpha), omega))) < DOUBLE_ROOT_TOL
        roots.append(CornerRoot(omega=omega, alpha=alpha, residual=res, double=double, final_step=last))

    roots = _close_under_conjugation(roots, omega)

    report = CornerReport(omega=omega, strip=(lo, hi), include_upper=include_upper, roots=roots,
                          enumerated_count=sum(r.multiplicity for r in roots),
                          winding_count=winding_count(omega, re_lo, re_hi, im_max),
                          tall_winding_count=winding_count(omega, re_lo, re_hi, TALL_IM_CUTOFF))
    if not report.complete:
        logger.warning(f"根枚举不完整: ω={omega:.6g}, 枚举 {report.enumerated_count}, "
                       f"绕数 {report.winding_count}, 高围道绕数 {report.tall_winding_count}")
    else:
        logger.debug(f"ω={omega:.6g}: 带 {strip} 内 {len(roots)} 个根")
    return report


def _close_under_conjugation(roots: List[CornerRoot], omega: float) -> List[CornerRoot]:
    """共轭对称：α 为根则 ᾱ 为根"""
    closed = list(roots)
    for r in roots:
        if r.alpha.imag == 0.0:
            continue
        conj = r.alpha.conjugate()
        if not any(abs(conj - other.alpha) < DEDUP_TOL for other in closed):
            logger.debug(f"补充共轭根: {conj}")
            closed.append(CornerRoot(omega=omega, alpha=conj, residual=r.residual, double=r.double,
                                     final_step=r.final_step))
    closed.sort(key=lambda r: (r.alpha.real, r.alpha.imag))
    return closed


def verify_strip_free(omegas: Sequence[float], max_threads: int = 4) -> List[StripVerification]:
    """
    核验每个 ω ∈ (0, 2π) 在 Re α ∈ (0, 1/2] 内无根

    Args:
        omegas: 角度列表（弧度）
        max_threads: 并行线程数

    Returns:
        List[StripVerification]: 按输入顺序的核验结果
    """
    for omega in omegas:
        if not 0.0 < omega < 2.0 * math.pi:
            raise ValueError(f"角度必须在 (0, 2π) 内: {omega}")

    def _verify(omega: float) -> StripVerification:
        half = corner_roots(omega, (0.0, 0.5), include_upper=True)
        unit = corner_roots(omega, (0.0, 1.0))
        result = StripVerification(omega=omega, half_strip=half, unit_strip=unit)
        if not result.passed:
            logger.error(f"带 (0, 1/2] 内发现根或计数不一致（求解器错误）: ω={omega:.6g}")
        return result

    with ThreadPoolExecutor(max_workers=max(1, max_threads)) as executor:
        results = list(executor.map(_verify, omegas))

    logger.info(f"无根带核验完成: {sum(r.passed for r in results)}/{len(results)} 通过")
    return results


def corner_table(reports: Sequence[CornerReport]) -> List[List[float]]:
    """按 (ω, Re α, Im α) 排序的表格行"""
    rows = [root.to_row() for report in reports for root in report.roots]
    rows.sort(key=lambda row: (row[0], row[1], row[2]))
    return rows
