"""
优化模块

对轮廓、位错位置与位错形核做交替极小化：
- 位错步：中心差分能量梯度 + 回溯线搜索，圆盘越界时回退，底部钳制 y = r0
- 轮廓步：以 γκ + W - Λ 为下降方向的预条件步，核心圆盘作为障碍，体积由乘子投影保持
- 形核扫描：在候选网格上尝试 σ + (±b°)δ_z，接受总能量下降最多的一个
- 量化模式：在离散搜索空间上做分块坐标下降，与穷举搜索使用同一空间

候选求解相互独立，由线程池并发执行，结果按下标顺序提交。
"""

import itertools
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .config import ModelParams, ScheduleParams
from .dislocations import DislocationEntry, DislocationMeasure, nucleation_energy
from .elasticity import ElasticState, assemble_total
from .energy import (EnergyBreakdown, ELResidual, VolumeConstraintError, core_contact_mask,
                     euler_lagrange_residual, graph_energy_density, penalized_energy, total_energy)
from .geometry import PlacementError, Profile, ball_fits
from .mesh import MeshError

logger = logging.getLogger(__name__)

TRACE_FIELDS = ['sweep', 'step', 'elastic', 'surface', 'cuts', 'nucleation', 'penalty', 'total', 'volume',
                'n_dislocations']


class Objective(str, Enum):
    """被极小化的能量泛函"""
    CONSTRAINED = 'constrained'
    PENALIZED = 'penalized'
    ONE_SIDED = 'one_sided'


@dataclass(frozen=True, eq=False)
class Configuration:
    """可容许三元组 (h, σ, H) 及其能量"""
    profile: Profile
    sigma: DislocationMeasure
    state: ElasticState
    breakdown: EnergyBreakdown
    refinement: int
    anchor: Optional[Profile] = None
    iteration: int = 0

    @property
    def energy(self) -> float:
        return self.breakdown.total


@dataclass
class TraceRow:
    """能量轨迹的一行"""
    sweep: int
    step: str
    breakdown: EnergyBreakdown
    volume: float
    n_dislocations: int

    def to_row(self) -> List:
        b = self.breakdown
        return [self.sweep, self.step, b.elastic, b.surface, b.cuts, b.nucleation,
                b.volume_penalty + b.anchoring_penalty, b.total, self.volume, self.n_dislocations]


@dataclass
class MinimizationResult:
    """交替极小化结果"""
    config: Configuration
    trace: List[TraceRow]
    converged: bool
    sweeps: int
    max_sweeps_reached: bool
    el_residual: Optional[ELResidual] = None
    elapsed: float = 0.0


# ----------------------------------------------------------------------
# 能量求值
# ----------------------------------------------------------------------

def objective_energy(p: Profile, sigma: DislocationMeasure, state: ElasticState, params: ModelParams,
                     schedule: ScheduleParams, anchor: Optional[Profile] = None) -> EnergyBreakdown:
    """按计划选择的目标泛函（可叠加形核能）"""
    objective = Objective(schedule.objective)
    if objective is Objective.CONSTRAINED and anchor is None:
        breakdown = total_energy(p, sigma, state, params)
    else:
        breakdown = penalized_energy(p, sigma, state, params, anchor=anchor,
                                     one_sided=objective is Objective.ONE_SIDED)
        if objective is Objective.CONSTRAINED:
            breakdown = replace(breakdown, volume_penalty=0.0)
    if schedule.nucleation:
        breakdown = replace(breakdown, nucleation=nucleation_energy(sigma, params.c_o))
    return breakdown


def is_admissible(p: Profile, sigma: DislocationMeasure, params: ModelParams) -> bool:
    """所有核心圆盘位于 Ω_h^# 内且 h ≥ h_min"""
    if p.min_height() < params.h_min:
        return False
    try:
        return all(ball_fits(p, e.center, sigma.r0) for e in sigma.entries)
    except PlacementError:
        return False


def evaluate_configuration(p: Profile, sigma: DislocationMeasure, params: ModelParams, schedule: ScheduleParams,
                           refinement: int, anchor: Optional[Profile] = None, iteration: int = 0) -> Configuration:
    """
    求解弹性状态并计算目标能量

    Raises:
        MeshError: 网格生成失败
        SolverError: 线性求解失败
        VolumeConstraintError: 单侧罚下体积超出 d
    """
    state = assemble_total(p, sigma, params.mismatch, params.lame, refinement, params.h_min)
    breakdown = objective_energy(p, sigma, state, params, schedule, anchor)
    return Configuration(profile=p, sigma=sigma, state=state, breakdown=breakdown, refinement=refinement,
                         anchor=anchor, iteration=iteration)


def _try_configuration(base: Configuration, p: Profile, sigma: DislocationMeasure, params: ModelParams,
                       schedule: ScheduleParams) -> Optional[Configuration]:
    """求值候选构型；不可容许或求解失败时返回 None"""
    if not is_admissible(p, sigma, params):
        return None
    try:
        return evaluate_configuration(p, sigma, params, schedule, base.refinement, base.anchor, base.iteration + 1)
    except (MeshError, VolumeConstraintError) as e:
        logger.debug(f"候选构型被拒绝: {e}")
        return None


def _energy_or_inf(cfg: Optional[Configuration]) -> float:
    return cfg.energy if cfg is not None else float('inf')


def _map_ordered(func: Callable, items: Sequence, max_threads: int) -> List:
    """并发求值，结果按输入顺序返回"""
    if max_threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_threads) as executor:
        return list(executor.map(func, items))


# ----------------------------------------------------------------------
# 位错步
# ----------------------------------------------------------------------

def fd_gradient(cfg: Configuration, index: int, params: ModelParams, schedule: ScheduleParams,
                step: Optional[float] = None) -> np.ndarray:
    """
    第 index 个位错中心处能量的中心差分梯度（越界一侧退化为单侧差分）

    Returns:
        np.ndarray: (∂F/∂x, ∂F/∂y)
    """
    s = step if step is not None else schedule.fd_step_for(params.r0)
    cx, cy = cfg.sigma.entries[index].center
    offsets = [(s, 0.0), (-s, 0.0), (0.0, s), (0.0, -s)]

    def energy_at(offset):
        moved = cfg.sigma.move(index, (cx + offset[0], cy + offset[1]))
        return _energy_or_inf(_try_configuration(cfg, cfg.profile, moved, params, schedule))

    ex_p, ex_m, ey_p, ey_m = _map_ordered(energy_at, offsets, schedule.max_threads)
    e0 = cfg.energy

    def derivative(plus, minus):
        if np.isfinite(plus) and np.isfinite(minus):
            return (plus - minus) / (2.0 * s)
        if np.isfinite(plus):
            return (plus - e0) / s
        if np.isfinite(minus):
            return (e0 - minus) / s
        return 0.0

    return np.array([derivative(ex_p, ex_m), derivative(ey_p, ey_m)])


def dislocation_step(cfg: Configuration, params: ModelParams, schedule: ScheduleParams) -> Configuration:
    """
    每个位错沿负能量梯度移动一次

    移动长度从 schedule.dislocation_move 开始按 shrink 回溯，直到总能量严格下降；
    中心 y 钳制在 r0，x 按周期折回，圆盘越界的候选被拒绝（等价于向原中心二分回退）。

    Args:
        cfg: 已求解的构型
        params: 模型参数
        schedule: 优化计划

    Returns:
        Configuration: 新构型；没有下降时原样返回
    """
    current = cfg
    r0 = params.r0
    for index in range(len(current.sigma)):
        grad = fd_gradient(current, index, params, schedule)
        norm = float(np.linalg.norm(grad))
        if norm == 0.0 or not np.isfinite(norm):
            continue
        direction = -grad / norm
        cx, cy = current.sigma.entries[index].center
        move = schedule.dislocation_move_for(r0)
        accepted = False
        for k in range(schedule.max_backtracks):
            length = move * schedule.shrink ** k
            target = (cx + length * direction[0], max(cy + length * direction[1], r0))
            if np.hypot(target[0] - cx, target[1] - cy) == 0.0:
                break
            trial = _try_configuration(current, current.profile, current.sigma.move(index, target), params, schedule)
            if trial is not None and trial.energy < current.energy:
                logger.debug(f"位错 {index} 移动到 ({target[0]:.6g}, {target[1]:.6g}), "
                             f"能量 {current.energy:.12g} -> {trial.energy:.12g}")
                current = trial
                accepted = True
                break
        if not accepted:
            logger.debug(f"位错 {index} 没有找到下降方向上的可接受步")
    return current


# ----------------------------------------------------------------------
# 轮廓步
# ----------------------------------------------------------------------

def obstacle_heights(p: Profile, sigma: DislocationMeasure) -> np.ndarray:
    """
    核心圆盘障碍 f_j(x) = y_j + √(r0² - (x - x_j)²) 在各节点上的最大值（无障碍处为 -inf）

    半径略微放大，使相邻节点间的弦不切入圆盘。
    """
    xs = p.node_x
    spacing = float(np.max(np.diff(np.append(xs, xs[0] + p.period))))
    radius = sigma.r0 + max(0.01 * sigma.r0, spacing ** 2 / sigma.r0)
    bound = np.full(len(xs), -np.inf)
    for (cx, cy) in sigma.centers():
        dx = np.mod(xs - cx + 0.5 * p.period, p.period) - 0.5 * p.period
        inside = np.abs(dx) < radius
        bound[inside] = np.maximum(bound[inside], cy + np.sqrt(radius ** 2 - dx[inside] ** 2))
    return bound


def _node_slopes(p: Profile) -> np.ndarray:
    slopes = p.slopes()
    return 0.5 * (slopes + np.roll(slopes, 1))


def _surface_operator(p: Profile) -> sparse.csr_matrix:
    """周期一维刚度矩阵 ∫ φ'ψ'/(1+h'²)^{3/2}，曲率项的线性化"""
    segs = p.segments
    dx = segs[:, 2] - segs[:, 0]
    slope = (segs[:, 3] - segs[:, 1]) / dx
    weight = 1.0 / ((1.0 + slope ** 2) ** 1.5 * dx)
    n = len(dx)
    idx = np.arange(n)
    nxt = (idx + 1) % n
    rows = np.concatenate([idx, nxt, idx, nxt])
    cols = np.concatenate([idx, nxt, nxt, idx])
    vals = np.concatenate([weight, weight, -weight, -weight])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _project_volume(heights: np.ndarray, widths: np.ndarray, target: float, floor: np.ndarray,
                    max_iter: int = 50) -> np.ndarray:
    """常数平移未被钳制的节点，使 Σ h_k w_k = target"""
    h = heights.copy()
    for _ in range(max_iter):
        deficit = target - float(np.dot(h, widths))
        if abs(deficit) <= 1e-13 * max(target, 1.0):
            break
        free = h > floor + 1e-15 if deficit < 0 else np.ones(len(h), dtype=bool)
        if not np.any(free):
            break
        h[free] += deficit / float(np.sum(widths[free]))
        h = np.maximum(h, floor)
    return h


def profile_gradient(cfg: Configuration, params: ModelParams, schedule: ScheduleParams) -> np.ndarray:
    """
    节点上的 L² 梯度 (γκ + W - Λ)·√(1+h'²)

    Λ 在约束模式下取弧长平均（乘子估计），罚模式下取体积罚的次梯度。
    """
    p = cfg.profile
    kappa = p.curvature()
    W = graph_energy_density(p, cfg.state)
    field_values = params.gamma * kappa + W
    objective = Objective(schedule.objective)
    if objective is Objective.CONSTRAINED:
        weights = p.arc_length_weights()
        active = ~core_contact_mask(p, cfg.sigma)
        if not np.any(active):
            active = np.ones(len(field_values), dtype=bool)
        multiplier = float(np.sum(weights[active] * field_values[active]) / np.sum(weights[active]))
    else:
        gap = params.d - p.volume()
        sign = 1.0 if gap > 0 else (-1.0 if gap < 0 and objective is Objective.PENALIZED else 0.0)
        multiplier = params.penalty_weight * sign
    grad = field_values - multiplier
    if cfg.anchor is not None and params.beta > 0:
        grad = grad + 2.0 * params.beta * (p.node_h - cfg.anchor.evaluate(p.node_x))
    return grad * np.sqrt(1.0 + _node_slopes(p) ** 2)


def profile_step(cfg: Configuration, params: ModelParams, schedule: ScheduleParams) -> Configuration:
    """
    轮廓沿 -(γκ + W - Λ) 的预条件下降步

    方向由 (M/τ + γA)δ = -M g 给出（M 为对偶宽度质量矩阵，A 为曲率项的线性化），
    步长 τ 回溯直到总能量严格下降；与核心圆盘接触的节点不向下移动，
    所有节点钳制在障碍 max_j f_j 之上；约束模式下体积投影回 d。

    Args:
        cfg: 已求解的构型（轮廓须连续）
        params: 模型参数
        schedule: 优化计划

    Returns:
        Configuration: 新构型；没有下降时原样返回
    """
    p = cfg.profile
    if not p.is_continuous:
        logger.warning("含跳跃的轮廓不做轮廓步")
        return cfg

    heights = p.node_h
    widths = p.dual_widths()
    grad = profile_gradient(cfg, params, schedule)
    obstacle = obstacle_heights(p, cfg.sigma)
    floor = np.maximum(obstacle, params.h_min * (1.0 + 1e-9))
    contact = heights <= obstacle + 1e-12
    M = sparse.diags(widths)
    A = _surface_operator(p)
    objective = Objective(schedule.objective)
    volume = p.volume()

    for k in range(schedule.max_backtracks):
        tau = schedule.profile_step * schedule.shrink ** k
        delta = splinalg.spsolve((M / tau + params.gamma * A).tocsc(), -(widths * grad))
        delta = np.where(contact, np.maximum(delta, 0.0), delta)
        biggest = float(np.max(np.abs(delta)))
        if biggest == 0.0:
            return cfg
        if biggest > schedule.profile_max_move:
            delta *= schedule.profile_max_move / biggest
        trial_h = np.maximum(heights + delta, floor)

        trial_volume = float(np.dot(trial_h, widths))
        if objective is Objective.CONSTRAINED:
            trial_h = _project_volume(trial_h, widths, params.d, floor)
        elif objective is Objective.ONE_SIDED and trial_volume > params.d:
            trial_h = _project_volume(trial_h, widths, params.d, floor)
        elif objective is Objective.PENALIZED and (trial_volume - params.d) * (volume - params.d) < 0:
            trial_h = _project_volume(trial_h, widths, params.d, floor)

        trial_profile = p.with_heights(trial_h)
        trial = _try_configuration(cfg, trial_profile, cfg.sigma, params, schedule)
        if trial is not None and trial.energy < cfg.energy:
            logger.debug(f"轮廓步接受: τ={tau:.3g}, 能量 {cfg.energy:.12g} -> {trial.energy:.12g}")
            return trial
    logger.debug("轮廓步没有找到可接受的步长")
    return cfg


# ----------------------------------------------------------------------
# 形核
# ----------------------------------------------------------------------

def nucleation_candidates(p: Profile, params: ModelParams, schedule: ScheduleParams) -> List[Tuple[float, float]]:
    """
    形核候选中心：x 方向均匀网格 × 从 y = r0 开始的行，仅保留圆盘可容纳者

    按行（y 升序）再按 x 升序编号。
    """
    spacing = schedule.nucleation_spacing
    r0 = params.r0
    xs = np.arange(0.0, p.period - 1e-12, spacing)
    top = p.max_height()
    ys = [r0] if schedule.nucleation_bottom_only else list(np.arange(r0, top - r0 + 1e-12, spacing))
    candidates = []
    for y in ys:
        for x in xs:
            if ball_fits(p, (float(x), float(y)), r0):
                candidates.append((float(x), float(y)))
    return candidates


def nucleation_sweep(cfg: Configuration, params: ModelParams, schedule: ScheduleParams,
                     max_accept: Optional[int] = None) -> Configuration:
    """
    贪心形核：每轮评估所有 (候选中心, ±b°_i) 试探，接受总变化 ΔF + c_o‖b‖² 最负的一个，
    直到没有严格下降的试探

    Args:
        cfg: 已求解的构型
        params: 模型参数
        schedule: 优化计划
        max_accept: 最多接受的形核次数（默认 schedule.max_nucleations）

    Returns:
        Configuration: 新构型（能量含形核项）
    """
    lattice = cfg.sigma.lattice
    if lattice.is_empty:
        return cfg

    with_nucleation = schedule.with_changes(nucleation=True)
    current = replace(cfg, breakdown=objective_energy(cfg.profile, cfg.sigma, cfg.state, params,
                                                      with_nucleation, cfg.anchor))
    limit = schedule.max_nucleations if max_accept is None else max_accept
    unit_coeffs = lattice.unit_coeffs()

    accepted = 0
    while accepted < limit:
        centers = nucleation_candidates(current.profile, params, schedule)
        trials = [(c, coeffs) for c in centers for coeffs in unit_coeffs]
        if not trials:
            break

        def evaluate(trial):
            center, coeffs = trial
            sigma = current.sigma.add(center, coeffs)
            return _try_configuration(current, current.profile, sigma, params, with_nucleation)

        results = _map_ordered(evaluate, trials, schedule.max_threads)
        energies = np.array([_energy_or_inf(r) for r in results])
        best = int(np.argmin(energies))
        change = energies[best] - current.energy
        logger.debug(f"形核扫描: {len(trials)} 个试探，最佳 ΔF = {change:.6g}")
        if not change < 0:
            break
        center, coeffs = trials[best]
        logger.info(f"接受形核: 中心 ({center[0]:.4g}, {center[1]:.4g}), 系数 {coeffs}, ΔF = {change:.6g}")
        current = results[best]
        accepted += 1
    return current


def orientation_gain(cfg: Configuration, indices: Sequence[int], params: ModelParams) -> float:
    """
    固定中心反转所选位错的 Burgers 向量后弹性能的变化（负值表示反转有利）
    """
    flipped = cfg.sigma.flip(indices)
    state = assemble_total(cfg.profile, flipped, params.mismatch, params.lame, cfg.refinement, params.h_min)
    return state.elastic_energy - cfg.state.elastic_energy


# ----------------------------------------------------------------------
# 量化搜索空间
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteSearchSpace:
    """
    量化搜索空间：若干自由节点取离散高度，至多一个固定 Burgers 向量的位错取网格中心
    """
    base: Profile
    free_nodes: Tuple[int, ...]
    levels: Tuple[float, ...]
    centers: Tuple[Tuple[float, float], ...] = ()
    coeffs: Optional[Tuple[int, ...]] = None

    @property
    def has_dislocation(self) -> bool:
        return self.coeffs is not None and bool(self.centers)

    @property
    def size(self) -> int:
        return len(self.levels) ** len(self.free_nodes) * (len(self.centers) if self.has_dislocation else 1)

    def points(self):
        """按字典序枚举 (各自由节点的高度下标..., 中心下标)"""
        center_range = range(len(self.centers)) if self.has_dislocation else [None]
        for levels in itertools.product(range(len(self.levels)), repeat=len(self.free_nodes)):
            for c in center_range:
                yield tuple(levels), c

    def profile_for(self, level_indices: Sequence[int]) -> Profile:
        heights = self.base.node_h.copy()
        for node, li in zip(self.free_nodes, level_indices):
            heights[node] = self.levels[li]
        return self.base.with_heights(heights)

    def sigma_for(self, template: DislocationMeasure, center_index: Optional[int]) -> DislocationMeasure:
        if center_index is None:
            return template.with_entries(())
        return template.with_entries((DislocationEntry(self.centers[center_index], self.coeffs),))

    def nearest_point(self, cfg: Configuration) -> Tuple[Tuple[int, ...], Optional[int]]:
        """与构型最接近的空间点"""
        levels = np.asarray(self.levels)
        heights = cfg.profile.node_h
        level_indices = tuple(int(np.argmin(np.abs(levels - heights[n]))) for n in self.free_nodes)
        center = None
        if self.has_dislocation:
            if cfg.sigma.is_empty:
                center = 0
            else:
                z = np.asarray(cfg.sigma.entries[0].center)
                center = int(np.argmin(np.linalg.norm(np.asarray(self.centers) - z, axis=1)))
        return level_indices, center


def evaluate_point(space: DiscreteSearchSpace, point, template: DislocationMeasure, params: ModelParams,
                   schedule: ScheduleParams, refinement: int, anchor: Optional[Profile] = None
                   ) -> Optional[Configuration]:
    """在搜索空间的一点上求值；不可容许时返回 None"""
    level_indices, center_index = point
    p = space.profile_for(level_indices)
    sigma = space.sigma_for(template, center_index)
    if not is_admissible(p, sigma, params):
        return None
    try:
        return evaluate_configuration(p, sigma, params, schedule, refinement, anchor)
    except (MeshError, VolumeConstraintError) as e:
        logger.debug(f"搜索空间点被拒绝 {point}: {e}")
        return None


def lattice_sweep(cfg: Configuration, params: ModelParams, schedule: ScheduleParams) -> Configuration:
    """
    量化空间上的一轮分块坐标下降：逐个自由节点扫描全部高度，再扫描全部中心

    并列时取下标最小者。
    """
    space: DiscreteSearchSpace = schedule.lattice
    point = space.nearest_point(cfg)
    current = cfg

    def best_of(candidates):
        results = _map_ordered(
            lambda pt: evaluate_point(space, pt, cfg.sigma, params, schedule, cfg.refinement, cfg.anchor),
            candidates, schedule.max_threads)
        energies = [_energy_or_inf(r) for r in results]
        best = int(np.argmin(energies))
        return candidates[best], results[best]

    blocks = list(range(len(space.free_nodes))) + (['center'] if space.has_dislocation else [])
    for block in blocks:
        levels, center = point
        if block == 'center':
            candidates = [(levels, c) for c in range(len(space.centers))]
        else:
            candidates = [(levels[:block] + (li,) + levels[block + 1:], center) for li in range(len(space.levels))]
        best_point, best_cfg = best_of(candidates)
        if best_cfg is not None and best_cfg.energy < current.energy:
            point, current = best_point, best_cfg
    return current


# ----------------------------------------------------------------------
# 交替极小化
# ----------------------------------------------------------------------

class AlternatingMinimizer:
    """交替极小化驱动器"""

    def __init__(self, params: ModelParams, schedule: ScheduleParams):
        """
        初始化驱动器

        Args:
            params: 模型参数
            schedule: 优化计划
        """
        self.params = params
        self.schedule = schedule
        self.progress_callback: Optional[Callable[[int, int, str], None]] = None
        self._stop_event = threading.Event()

    def set_progress_callback(self, callback: Callable[[int, int, str], None]) -> None:
        """
        设置进度回调函数

        Args:
            callback: 回调函数，参数为(当前轮次, 最大轮次, 描述)
        """
        self.progress_callback = callback

    def stop(self) -> None:
        """请求在当前轮结束后停止"""
        self._stop_event.set()
        logger.info("优化停止请求已发送")

    def reset(self) -> None:
        self._stop_event.clear()

    def _record(self, trace: List[TraceRow], sweep: int, kind: str, cfg: Configuration) -> None:
        trace.append(TraceRow(sweep=sweep, step=kind, breakdown=cfg.breakdown, volume=cfg.profile.volume(),
                              n_dislocations=len(cfg.sigma)))

    def _check_monotone(self, before: Configuration, after: Configuration, kind: str) -> None:
        if after.energy > before.energy + 1e-12 * max(1.0, abs(before.energy)):
            logger.error(f"{kind} 之后能量上升: {before.energy:.15g} -> {after.energy:.15g}")
            raise RuntimeError(f"能量单调性被破坏: {kind}")

    def _prepare(self, cfg: Configuration) -> Configuration:
        """约束模式下先把初始轮廓投影到 |Ω_h| = d"""
        params, schedule = self.params, self.schedule
        p = cfg.profile
        if (Objective(schedule.objective) is not Objective.CONSTRAINED or not p.is_continuous
                or schedule.lattice is not None or abs(p.volume() - params.d) <= 1e-12 * params.d):
            return cfg
        floor = np.maximum(obstacle_heights(p, cfg.sigma), params.h_min * (1.0 + 1e-9))
        projected = p.with_heights(_project_volume(p.node_h, p.dual_widths(), params.d, floor))
        logger.info(f"初始体积 {p.volume():.10g} 投影到 d = {params.d:.10g}")
        return evaluate_configuration(projected, cfg.sigma, params, schedule, cfg.refinement, cfg.anchor)

    def run(self, cfg0: Configuration) -> MinimizationResult:
        """
        重复 [轮廓步 × n_p, 位错步 × n_d, 形核扫描] 直到单轮能量下降小于容差

        Args:
            cfg0: 可容许的初始构型

        Returns:
            MinimizationResult: 最终构型与逐步能量轨迹
        """
        params, schedule = self.params, self.schedule
        start = time.time()
        cfg = self._prepare(cfg0)
        trace: List[TraceRow] = []
        self._record(trace, 0, 'initial', cfg)
        converged = False
        sweep = 0

        logger.info(f"开始交替极小化: 目标 {schedule.objective}, 初始能量 {cfg.energy:.12g}")
        for sweep in range(1, schedule.max_sweeps + 1):
            if self._stop_event.is_set():
                logger.info("优化已按请求停止")
                break
            energy_before = cfg.energy

            if schedule.lattice is not None:
                new = lattice_sweep(cfg, params, schedule)
                self._check_monotone(cfg, new, 'lattice')
                cfg = new
                self._record(trace, sweep, 'lattice', cfg)
            else:
                for _ in range(schedule.profile_steps):
                    new = profile_step(cfg, params, schedule)
                    self._check_monotone(cfg, new, 'profile')
                    if new is not cfg:
                        cfg = new
                        self._record(trace, sweep, 'profile', cfg)
                for _ in range(schedule.dislocation_steps):
                    new = dislocation_step(cfg, params, schedule)
                    self._check_monotone(cfg, new, 'dislocation')
                    if new is not cfg:
                        cfg = new
                        self._record(trace, sweep, 'dislocation', cfg)
                if schedule.nucleation:
                    new = nucleation_sweep(cfg, params, schedule)
                    self._check_monotone(cfg, new, 'nucleation')
                    if new is not cfg:
                        cfg = new
                        self._record(trace, sweep, 'nucleation', cfg)

            cfg = replace(cfg, iteration=sweep)
            decrease = energy_before - cfg.energy
            if self.progress_callback:
                self.progress_callback(sweep, schedule.max_sweeps, f"能量 {cfg.energy:.10g}")
            logger.debug(f"第 {sweep} 轮: 能量 {cfg.energy:.12g}, 下降 {decrease:.3e}")
            if decrease < schedule.energy_tol:
                converged = True
                break

        max_reached = not converged and sweep >= schedule.max_sweeps
        if max_reached:
            logger.warning(f"达到最大轮数 {schedule.max_sweeps}，返回当前最优构型")

        residual = None
        if cfg.profile.is_continuous:
            residual = euler_lagrange_residual(cfg.profile, cfg.state, params)

        elapsed = time.time() - start
        logger.info(f"交替极小化结束: {sweep} 轮, 能量 {cfg.energy:.12g}, 耗时 {elapsed:.2f} 秒")
        return MinimizationResult(config=cfg, trace=trace, converged=converged, sweeps=sweep,
                                  max_sweeps_reached=max_reached, el_residual=residual, elapsed=elapsed)


def alternate_minimize(cfg0: Configuration, params: ModelParams, schedule: ScheduleParams,
                       progress_callback: Optional[Callable[[int, int, str], None]] = None) -> MinimizationResult:
    """交替极小化的便捷函数"""
    minimizer = AlternatingMinimizer(params, schedule)
    if progress_callback:
        minimizer.set_progress_callback(progress_callback)
    return minimizer.run(cfg0)
