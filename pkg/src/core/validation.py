"""
校验模块

独立于被测求解器的参照计算：平坦膜闭式解、交叉项恒等式、旋度残差收敛阶、
小规模穷举极小化、有限差分一致性、形核阈值与体积罚阈值实验。
每个检查产生一条 OracleReport，汇总顺序与调用顺序一致。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .config import ModelParams, ScheduleParams, default_lattice
from .dislocations import BurgersLattice, DislocationEntry, DislocationMeasure
from .elasticity import assemble_total, curl_residual, solve_mismatch
from .geometry import Profile
from .optimizer import (Configuration, DiscreteSearchSpace, alternate_minimize, evaluate_configuration,
                        evaluate_point, nucleation_sweep)

logger = logging.getLogger(__name__)

REPORT_FIELDS = ['name', 'computed', 'oracle', 'abs_error', 'rel_error', 'tolerance', 'passed']
MAX_SPACE_SIZE = 10 ** 6
# 能量求值的相对舍入水平
ENERGY_ROUNDOFF = 1e-9


class SpaceTooLargeError(ValueError):
    """穷举空间超过上限"""

    def __init__(self, size: int, limit: int = MAX_SPACE_SIZE):
        self.size = size
        self.limit = limit
        super().__init__(f"搜索空间过大，无法穷举 | 大小: {size} | 上限: {limit}")


@dataclass(frozen=True)
class OracleReport:
    """单项参照检查结果"""
    name: str
    computed: float
    oracle: float
    abs_error: float
    rel_error: float
    tolerance: float
    passed: bool
    relative: bool = True

    @classmethod
    def compare(cls, name: str, computed: float, oracle: float, tolerance: float,
                relative: bool = True) -> 'OracleReport':
        """按相对（oracle 为 0 时退化为绝对）或绝对误差比较"""
        abs_error = abs(computed - oracle)
        rel_error = abs_error / abs(oracle) if oracle != 0 else abs_error
        error = rel_error if relative else abs_error
        report = cls(name=name, computed=float(computed), oracle=float(oracle), abs_error=float(abs_error),
                     rel_error=float(rel_error), tolerance=float(tolerance), passed=bool(error <= tolerance),
                     relative=relative)
        level = logging.INFO if report.passed else logging.WARNING
        logger.log(level, f"[{'通过' if report.passed else '失败'}] {name}: 计算 {computed:.12g}, "
                          f"参照 {oracle:.12g}, 误差 {error:.3e} (容差 {tolerance:.1e})")
        return report

    @classmethod
    def check(cls, name: str, computed: float, passed: bool, oracle: float = 0.0,
              tolerance: float = 0.0) -> 'OracleReport':
        """结论已知的检查（例如单调性），数值仅作记录"""
        abs_error = abs(computed - oracle)
        report = cls(name=name, computed=float(computed), oracle=float(oracle), abs_error=float(abs_error),
                     rel_error=float(abs_error / abs(oracle)) if oracle != 0 else float(abs_error),
                     tolerance=float(tolerance), passed=bool(passed), relative=False)
        level = logging.INFO if report.passed else logging.WARNING
        logger.log(level, f"[{'通过' if passed else '失败'}] {name}: {computed:.12g}")
        return report

    def to_row(self) -> List:
        return [self.name, self.computed, self.oracle, self.abs_error, self.rel_error, self.tolerance,
                int(self.passed)]

    def to_dict(self) -> Dict:
        return asdict(self)


def all_passed(reports: Sequence[OracleReport]) -> bool:
    return all(r.passed for r in reports)


# ----------------------------------------------------------------------
# 平坦膜
# ----------------------------------------------------------------------

def flat_profile(params: ModelParams, n_nodes: int = 16) -> Profile:
    return Profile.flat(params.period, params.d / params.period, n_nodes)


def single_dislocation(params: ModelParams, center: Tuple[float, float],
                       coeffs: Tuple[int, ...] = (1, 0),
                       lattice: Optional[BurgersLattice] = None) -> DislocationMeasure:
    lattice = lattice or default_lattice()
    return DislocationMeasure(lattice=lattice, r0=params.r0, entries=(DislocationEntry(center, coeffs),),
                              period=params.period)


def analytic_cross_term(params: ModelParams, b1: float, y0: float) -> float:
    """平坦膜上的交叉项 -2e0·W0·b₁(h̄ - y₀)"""
    hbar = params.d / params.period
    return -2.0 * params.mismatch * params.W0 * b1 * (hbar - y0)


def analytic_sinking_slope(params: ModelParams, b1: float) -> float:
    """交叉项对 y₀ 的导数 2e0·W0·b₁（向上移动使能量升高）"""
    return 2.0 * params.mismatch * params.W0 * b1


def flat_film_oracle(params: ModelParams, refinement: int = 64, cross_refinement: Optional[int] = 128,
                     y0_values: Sequence[float] = (0.3, 0.6)) -> List[OracleReport]:
    """
    平坦膜闭式解检查

    (a) 节点位移 u_h 与 v0 = (x, -λy/(2μ+λ)) 之差 ≤ 1e-10；
    (b) 弹性能与 e0²·W0·d 的相对误差 ≤ 1e-8；
    (c) 位于 (ℓ/2, y₀) 的 b = (1,0) 位错的交叉项与 -2e0W0b₁(h̄-y₀) 的相对误差 ≤ 1%。

    Args:
        params: 模型参数
        refinement: (a)(b) 使用的网格细分
        cross_refinement: (c) 使用的网格细分，None 表示跳过 (c)
        y0_values: (c) 的位错高度

    Returns:
        List[OracleReport]: 检查结果
    """
    C = params.lame
    e0 = params.mismatch
    p = flat_profile(params)
    reports = []

    u = solve_mismatch(p, C, refinement, params.h_min)
    nodes = u.mesh.nodes
    v0 = np.column_stack([nodes[:, 0], C.flat_strain[1, 1] * nodes[:, 1]])
    reports.append(OracleReport.compare(f"flat_displacement[n={refinement}]",
                                        float(np.max(np.abs(u.values - v0))), 0.0, 1e-10, relative=False))

    empty = DislocationMeasure.empty(default_lattice(), params.r0, params.period)
    state = assemble_total(p, empty, e0, C, refinement, params.h_min)
    expected = e0 ** 2 * params.W0 * params.d
    reports.append(OracleReport.compare(f"flat_energy[e0={e0:g},n={refinement}]", state.elastic_energy,
                                        expected, 1e-8, relative=expected != 0.0))

    if cross_refinement is not None and e0 != 0.0:
        for y0 in y0_values:
            sigma = single_dislocation(params, (0.5 * params.period, y0))
            cross = assemble_total(p, sigma, e0, C, cross_refinement, params.h_min).energy.cross
            reports.append(OracleReport.compare(f"cross_term[e0={e0:g},y0={y0:g},n={cross_refinement}]",
                                                cross, analytic_cross_term(params, 1.0, y0), 1e-2))
    return reports


def curl_convergence(params: ModelParams, refinements: Sequence[int] = (32, 64, 128),
                     center: Optional[Tuple[float, float]] = None, min_order: float = 0.9
                     ) -> Tuple[List[float], List[OracleReport]]:
    """
    单个位错的 L² 旋度残差随细分的收敛：单调下降且经验阶 ≥ min_order

    Returns:
        (各细分上的残差, 检查结果)
    """
    p = flat_profile(params)
    center = center or (0.5 * params.period, 0.5 * params.d / params.period)
    sigma = single_dislocation(params, center)
    residuals = [curl_residual(assemble_total(p, sigma, params.mismatch, params.lame, n, params.h_min))
                 for n in refinements]
    reports = []
    monotone = all(b < a for a, b in zip(residuals[:-1], residuals[1:]))
    reports.append(OracleReport.check("curl_residual_monotone", residuals[-1], monotone))
    for (n1, r1), (n2, r2) in zip(zip(refinements, residuals), zip(refinements[1:], residuals[1:])):
        order = math.log(r1 / r2) / math.log(n2 / n1) if r1 > 0 and r2 > 0 else 0.0
        reports.append(OracleReport.check(f"curl_order[{n1}->{n2}]", order, order >= min_order,
                                          oracle=min_order))
    return residuals, reports


# ----------------------------------------------------------------------
# 穷举
# ----------------------------------------------------------------------

@dataclass
class TinyInstance:
    """可穷举的小规模实例"""
    space: DiscreteSearchSpace
    template: DislocationMeasure
    params: ModelParams
    schedule: ScheduleParams
    refinement: int


def tiny_instance(params: ModelParams, refinement: int = 16, n_nodes: int = 8, n_levels: int = 5,
                  grid: int = 5, coeffs: Optional[Tuple[int, ...]] = (1, 0), n_free: int = 3) -> TinyInstance:
    """
    n_free 个等距自由节点 × n_levels 个高度（h̄ 的 ±10%）× grid² 个位错中心

    默认 5³ × 25 = 3125 个点。

    中心网格 x 取单元中点，y 在 [r0, 0.8h̄ - r0] 上均匀分布；目标泛函为体积罚能量，
    使不同高度下的体积差异计入能量。
    """
    hbar = params.d / params.period
    base = Profile.flat(params.period, hbar, n_nodes)
    levels = tuple(float(v) for v in hbar * np.linspace(0.9, 1.1, n_levels))
    centers: Tuple[Tuple[float, float], ...] = ()
    if coeffs is not None:
        xs = (np.arange(grid) + 0.5) * params.period / grid
        ys = np.linspace(params.r0, 0.8 * hbar - params.r0, grid)
        centers = tuple((float(x), float(y)) for y in ys for x in xs)
    free_nodes = tuple((j + 1) * n_nodes // (n_free + 1) for j in range(n_free))
    space = DiscreteSearchSpace(base=base, free_nodes=free_nodes, levels=levels, centers=centers, coeffs=coeffs)
    template = DislocationMeasure.empty(default_lattice(), params.r0, params.period)
    schedule = ScheduleParams(objective='penalized', lattice=space, max_sweeps=20, energy_tol=1e-12)
    return TinyInstance(space=space, template=template, params=params, schedule=schedule, refinement=refinement)


@dataclass
class BruteForceResult:
    """穷举结果"""
    config: Configuration
    point: tuple
    evaluated: int
    admissible: int


def brute_force_minimize(instance: TinyInstance) -> BruteForceResult:
    """
    穷举离散空间上的全局极小（与优化器使用同一能量代码路径）

    并列时取字典序最小的点。

    Raises:
        SpaceTooLargeError: 空间大小超过 10⁶
        RuntimeError: 没有可容许点
    """
    space = instance.space
    if space.size > MAX_SPACE_SIZE:
        raise SpaceTooLargeError(space.size)

    points = list(space.points())
    logger.info(f"开始穷举: {len(points)} 个点")

    def evaluate(point):
        return evaluate_point(space, point, instance.template, instance.params, instance.schedule,
                              instance.refinement)

    max_threads = instance.schedule.max_threads
    if max_threads > 1:
        with ThreadPoolExecutor(max_workers=max_threads) as executor:
            results = list(executor.map(evaluate, points))
    else:
        results = [evaluate(point) for point in points]

    energies = np.array([r.energy if r is not None else np.inf for r in results])
    admissible = int(np.sum(np.isfinite(energies)))
    if admissible == 0:
        raise RuntimeError("穷举空间中没有可容许点")
    best = int(np.argmin(energies))
    logger.info(f"穷举完成: 最优点 {points[best]}, 能量 {energies[best]:.12g}")
    return BruteForceResult(config=results[best], point=points[best], evaluated=len(points),
                            admissible=admissible)


def lattice_start(instance: TinyInstance, point: Optional[tuple] = None) -> Configuration:
    """交替极小化的起点，默认取中间高度与最上一行的中间中心"""
    space = instance.space
    if point is None:
        center = None
        if space.has_dislocation:
            g = math.isqrt(len(space.centers))
            center = (g - 1) * g + g // 2
        point = ((len(space.levels) // 2,) * len(space.free_nodes), center)
    cfg = evaluate_point(space, point, instance.template, instance.params, instance.schedule, instance.refinement)
    if cfg is None:
        raise RuntimeError(f"起点不可容许: {point}")
    return cfg


def oracle_equivalence(instance: TinyInstance, tolerance: float = 1e-6) -> OracleReport:
    """交替极小化与穷举的最小能量之差 ≤ tolerance"""
    brute = brute_force_minimize(instance)
    result = alternate_minimize(lattice_start(instance), instance.params, instance.schedule)
    return OracleReport.compare("brute_force_equivalence", result.config.energy, brute.config.energy, tolerance,
                                relative=False)


def continuous_node_minimize(instance: TinyInstance, xatol: float = 1e-6) -> float:
    """
    无位错时第一个自由节点高度的一维连续极小（有界 Brent 搜索），作为量化结果的参照

    其余自由节点保持基准高度，因此只对 n_free = 1 的实例与穷举结果直接可比。

    Returns:
        float: 最优高度
    """
    space = instance.space
    node = space.free_nodes[0]

    def energy(height: float) -> float:
        heights = space.base.node_h.copy()
        heights[node] = height
        cfg = evaluate_configuration(space.base.with_heights(heights), instance.template, instance.params,
                                     instance.schedule, instance.refinement)
        return cfg.energy

    result = minimize_scalar(energy, bounds=(space.levels[0], space.levels[-1]), method='bounded',
                             options={'xatol': xatol})
    return float(result.x)


# ----------------------------------------------------------------------
# 有限差分一致性
# ----------------------------------------------------------------------

def _directional_slope(cfg: Configuration, index: int, direction: np.ndarray, step: float,
                       params: ModelParams, schedule: ScheduleParams) -> float:
    center = np.asarray(cfg.sigma.entries[index].center)

    def energy_at(offset: float) -> float:
        moved = cfg.sigma.move(index, tuple(center + offset * direction))
        return evaluate_configuration(cfg.profile, moved, params, schedule, cfg.refinement, cfg.anchor).energy

    return (energy_at(step) - energy_at(-step)) / (2.0 * step)


def richardson_report(label: str, slopes: Tuple[float, float, float], energy: float, step: float,
                      ratio_tol: float = 0.5) -> OracleReport:
    """
    步长 s, s/2, s/4 的中心差分斜率的 Richardson 比检查

    |D(s) - D(s/4)| 不超过 ENERGY_ROUNDOFF·|F| / (s/4) 时比值只剩舍入噪声，记为通过；
    否则要求 (D(s) - D(s/2)) / (D(s/2) - D(s/4)) ∈ 4 ± ratio_tol。
    """
    d1, d2, d4 = slopes
    name = f"richardson_ratio[{label}]"
    floor = ENERGY_ROUNDOFF * abs(energy) / (0.25 * step)
    if abs(d1 - d4) <= floor:
        return OracleReport.check(name, d1 - d4, True, tolerance=floor)
    denominator = d2 - d4
    ratio = (d1 - d2) / denominator if denominator != 0.0 else math.inf
    return OracleReport.compare(name, ratio, 4.0, ratio_tol, relative=False)


def fd_consistency(cfg: Configuration, directions: Sequence[str], params: ModelParams, schedule: ScheduleParams,
                   step: Optional[float] = None, ratio_tol: float = 0.5, analytic_tol: float = 0.1
                   ) -> List[OracleReport]:
    """
    位错位置上的中心差分一致性

    对每个位错与方向（'x' 或 'y'）：
    - 平坦膜的 x 方向：以两列网格间距为步长，斜率 ≤ 1e-6·|F|（平移不变性）；
    - 其余：步长 s, s/2, s/4 的差分满足 Richardson 比 (D(s)-D(s/2))/(D(s/2)-D(s/4)) ∈ 4 ± ratio_tol；
      三个差分之差不超过能量舍入在最小步长上引起的误差时直接视为通过；
    - 平坦膜的 y 方向另与 2e0W0b₁ 比较（相对容差 analytic_tol）。

    σ = 0 时没有任何检查。

    Args:
        cfg: 已求解构型
        directions: 方向列表
        params: 模型参数
        schedule: 优化计划（决定能量泛函）
        step: 基准步长 s，默认 0.2·r0

    Returns:
        List[OracleReport]: 检查结果
    """
    s = step if step is not None else 0.2 * params.r0
    unit = {'x': np.array([1.0, 0.0]), 'y': np.array([0.0, 1.0])}
    flat = cfg.profile.is_continuous and np.ptp(cfg.profile.node_h) == 0.0
    reports = []
    for index in range(len(cfg.sigma)):
        b = cfg.sigma.burgers_vectors()[index]
        for name in directions:
            direction = unit[name]
            label = f"dislocation{index}.{name}"
            if flat and name == 'x':
                # 结构网格只在平移偶数列时不变
                shift = 2.0 * cfg.profile.period / cfg.state.mesh.n_columns
                slope = _directional_slope(cfg, index, direction, shift, params, schedule)
                reports.append(OracleReport.check(f"translation_invariance[{label}]", slope,
                                                  abs(slope) <= 1e-6 * abs(cfg.energy),
                                                  tolerance=1e-6 * abs(cfg.energy)))
                continue
            d1, d2, d4 = (_directional_slope(cfg, index, direction, s / k, params, schedule) for k in (1, 2, 4))
            reports.append(richardson_report(label, (d1, d2, d4), cfg.energy, s, ratio_tol))
            if flat and name == 'y':
                reports.append(OracleReport.compare(f"sinking_slope[{label}]", d4,
                                                    analytic_sinking_slope(params, float(b[0])), analytic_tol))
    return reports


# ----------------------------------------------------------------------
# 形核阈值
# ----------------------------------------------------------------------

@dataclass
class ThresholdScan:
    """e0 扫描结果"""
    rows: List[Tuple[float, int, float]] = field(default_factory=list)
    empirical: Optional[float] = None
    estimate: Optional[float] = None
    self_energy: float = 0.0
    report: Optional[OracleReport] = None


def bottom_self_energy(params: ModelParams, refinement: int, coeffs: Tuple[int, ...] = (1, 0)) -> float:
    """平坦膜底部 (ℓ/2, r0) 处单个位错的自能"""
    sigma = single_dislocation(params, (0.5 * params.period, params.r0), coeffs)
    state = assemble_total(flat_profile(params), sigma, params.mismatch, params.lame, refinement, params.h_min)
    return state.energy.self_energy


def threshold_estimate(params: ModelParams, self_energy: float, b: Sequence[float] = (1.0, 0.0)) -> float:
    """ē* = (E_self + c_o|b|²) / (2W0·b₁(h̄ - r0))"""
    hbar = params.d / params.period
    b = np.asarray(b, dtype=float)
    return (self_energy + params.c_o * float(b @ b)) / (2.0 * params.W0 * b[0] * (hbar - params.r0))


def _nucleates(params: ModelParams, schedule: ScheduleParams, refinement: int, e0: float) -> bool:
    local = params.with_changes(e0=e0)
    p = flat_profile(local)
    empty = DislocationMeasure.empty(default_lattice(), local.r0, local.period)
    cfg = evaluate_configuration(p, empty, local, schedule, refinement)
    return not nucleation_sweep(cfg, local, schedule, max_accept=1).sigma.is_empty


def nucleation_threshold_scan(params: ModelParams, schedule: ScheduleParams, refinement: int,
                              e0_grid: Sequence[float], tol: float = 1e-3, estimate_tol: float = 0.1
                              ) -> ThresholdScan:
    """
    在 e0 网格上执行形核扫描，首次接受形核的区间再二分到 tol

    Args:
        params: 模型参数（e0 被逐点替换）
        schedule: 优化计划（通常只用底行候选）
        refinement: 网格细分
        e0_grid: 升序的 e0 网格
        tol: 二分精度
        estimate_tol: 与推导估计的相对容差

    Returns:
        ThresholdScan: 扫描表、经验阈值与估计值
    """
    schedule = schedule.with_changes(nucleation=True)
    scan = ThresholdScan()
    scan.self_energy = bottom_self_energy(params, refinement)
    scan.estimate = threshold_estimate(params, scan.self_energy)

    previous = None
    for e0 in sorted(e0_grid):
        accepted = _nucleates(params, schedule, refinement, e0)
        scan.rows.append((float(e0), int(accepted), scan.estimate))
        logger.info(f"e0 = {e0:g}: {'形核' if accepted else '不形核'}")
        if accepted:
            if previous is None:
                scan.empirical = float(e0)
            else:
                lo, hi = previous, float(e0)
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    if _nucleates(params, schedule, refinement, mid):
                        hi = mid
                    else:
                        lo = mid
                scan.empirical = hi
            break
        previous = float(e0)

    if scan.empirical is None:
        logger.warning("扫描范围内没有发生形核")
        scan.report = OracleReport.check("nucleation_threshold", math.nan, False, scan.estimate, estimate_tol)
    else:
        scan.report = OracleReport.compare("nucleation_threshold", scan.empirical, scan.estimate, estimate_tol)
    return scan


# ----------------------------------------------------------------------
# 体积罚阈值
# ----------------------------------------------------------------------

def penalization_check(params: ModelParams, schedule: ScheduleParams, refinement: int, factor: float,
                       deficit: float = 0.1, n_nodes: int = 32) -> Tuple[float, OracleReport]:
    """
    从体积不足 deficit·d 的平坦膜出发做体积罚极小化

    Λ = factor·e0²W0：factor > 1 时应恢复 |Ω_h| = d（误差 ≤ 1e-3·d），factor < 1 时不应恢复。

    Returns:
        (最终体积, 检查结果)
    """
    weight = factor * params.mismatch ** 2 * params.W0
    local = params.with_changes(penalty=weight)
    penalized = schedule.with_changes(objective='penalized', nucleation=False, dislocation_steps=0)
    start = Profile.flat(local.period, (1.0 - deficit) * local.d / local.period, n_nodes)
    empty = DislocationMeasure.empty(default_lattice(), local.r0, local.period)
    cfg = evaluate_configuration(start, empty, local, penalized, refinement)
    final = alternate_minimize(cfg, local, penalized).config
    volume = final.profile.volume()
    restored = abs(volume - local.d) <= 1e-3 * local.d
    expected = factor > 1.0
    report = OracleReport.check(f"penalization[Λ={factor:g}·e0²W0]", volume, restored == expected,
                                oracle=local.d, tolerance=1e-3 * local.d)
    return volume, report
