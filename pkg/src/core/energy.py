"""
能量模块

总能量、体积罚能量与含形核能的能量泛函；优化器唯一的能量来源。
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from .config import ModelParams
from .dislocations import DislocationMeasure, nucleation_energy
from .elasticity import ElasticState
from .geometry import Profile
from .mesh import profile_node_columns

logger = logging.getLogger(__name__)

BREAKDOWN_FIELDS = ['elastic', 'surface', 'cuts', 'nucleation', 'volume_penalty', 'anchoring_penalty', 'total']


class StateMismatchError(ValueError):
    """弹性状态不是在给定的轮廓/位错上求解的"""

    def __init__(self, message: str, what: str = ""):
        self.message = message
        self.what = what
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts = [self.message]
        if self.what:
            parts.append(f"不一致: {self.what}")
        return " | ".join(parts)


class VolumeConstraintError(ValueError):
    """单侧罚能量要求 |Ω_h| ≤ d"""

    def __init__(self, volume: float, target: float):
        self.volume = volume
        self.target = target
        super().__init__(f"单侧体积罚要求 |Ω_h| ≤ d | |Ω_h|={volume:.10g}, d={target:.10g}")


@dataclass(frozen=True)
class EnergyBreakdown:
    """能量分解"""
    elastic: float
    surface: float
    cuts: float
    nucleation: float = 0.0
    volume_penalty: float = 0.0
    anchoring_penalty: float = 0.0

    @property
    def total(self) -> float:
        return (self.elastic + self.surface + self.cuts + self.nucleation
                + self.volume_penalty + self.anchoring_penalty)

    def to_dict(self) -> Dict[str, float]:
        data = asdict(self)
        data['total'] = self.total
        return data


def _check_state(p: Profile, sigma: DislocationMeasure, state: ElasticState) -> None:
    if state.profile != p:
        raise StateMismatchError("弹性状态与轮廓不一致", "profile")
    if state.sigma.merged().entries != sigma.merged().entries:
        raise StateMismatchError("弹性状态与位错测度不一致", "sigma")


def surface_terms(p: Profile, params: ModelParams) -> Dict[str, float]:
    """γH¹(Γ_h) 与 2γH¹(Σ_h)"""
    measure = p.surface_measure()
    return {'surface': params.gamma * measure.graph_length, 'cuts': 2.0 * params.gamma * measure.cut_length}


def total_energy(p: Profile, sigma: DislocationMeasure, state: ElasticState, params: ModelParams,
                 check_state: bool = True) -> EnergyBreakdown:
    """
    F = ∫W(H_sym) + γH¹(Γ_h) + 2γH¹(Σ_h)

    Args:
        p: 轮廓
        sigma: 位错测度
        state: 在 (p, σ) 上求解的弹性状态
        params: 模型参数
        check_state: 为 False 时允许沿用其它轮廓上的弹性状态（仅用于含切口轮廓的表面项实验）

    Returns:
        EnergyBreakdown: 能量分解

    Raises:
        StateMismatchError: 状态与 (p, σ) 不一致
    """
    if check_state:
        _check_state(p, sigma, state)
    else:
        logger.warning("沿用外部给定的弹性状态，弹性项不对应当前轮廓")
    terms = surface_terms(p, params)
    return EnergyBreakdown(elastic=state.elastic_energy, surface=terms['surface'], cuts=terms['cuts'])


def volume_penalty(volume: float, params: ModelParams, one_sided: bool = False) -> float:
    """Λ||Ω_h| - d| 或单侧 Λ(d - |Ω_h|)"""
    weight = params.penalty_weight
    if one_sided:
        if volume > params.d * (1.0 + 1e-12):
            raise VolumeConstraintError(volume, params.d)
        return weight * max(params.d - volume, 0.0)
    return weight * abs(volume - params.d)


def penalized_energy(p: Profile, sigma: DislocationMeasure, state: ElasticState, params: ModelParams,
                     anchor: Optional[Profile] = None, one_sided: bool = False) -> EnergyBreakdown:
    """
    体积罚能量：F + β∫|h - h̄|² + Λ||Ω_h| - d|；单侧变体为 F + Λ(d - |Ω_h|)

    Args:
        p: 轮廓
        sigma: 位错测度
        state: 弹性状态
        params: 模型参数
        anchor: 锚定轮廓 h̄（当且仅当 β > 0 时给出）
        one_sided: 是否使用单侧罚

    Returns:
        EnergyBreakdown: 能量分解

    Raises:
        VolumeConstraintError: 单侧变体中 |Ω_h| > d
        ValueError: β 与锚定轮廓不匹配
    """
    if (params.beta > 0) != (anchor is not None):
        raise ValueError(f"锚定轮廓须在且仅在 β > 0 时给出: β={params.beta}")
    base = total_energy(p, sigma, state, params)
    penalty = volume_penalty(p.volume(), params, one_sided)
    anchoring = params.beta * p.anchoring_integral(anchor) if anchor is not None else 0.0
    return EnergyBreakdown(elastic=base.elastic, surface=base.surface, cuts=base.cuts,
                           volume_penalty=penalty, anchoring_penalty=anchoring)


def nucleation_total(p: Profile, sigma: DislocationMeasure, state: ElasticState,
                     params: ModelParams) -> EnergyBreakdown:
    """F + N(σ)"""
    base = total_energy(p, sigma, state, params)
    return EnergyBreakdown(elastic=base.elastic, surface=base.surface, cuts=base.cuts,
                           nucleation=nucleation_energy(sigma, params.c_o))


@dataclass(frozen=True)
class ELResidual:
    """Γ_h 上的 Euler-Lagrange 残差"""
    x: np.ndarray
    values: np.ndarray
    multiplier: float
    excluded: np.ndarray
    sup_norm: float
    l2_norm: float


def graph_energy_density(p: Profile, state: ElasticState) -> np.ndarray:
    """轮廓节点处的 W(H_sym)"""
    return state.graph_density()[profile_node_columns(state.mesh)]


def core_contact_mask(p: Profile, sigma: DislocationMeasure, tolerance: float = 0.05) -> np.ndarray:
    """图像点落在某个核心圆盘（放大 1+tolerance 倍）内的节点"""
    xs, hs = p.node_x, p.node_h
    mask = np.zeros(len(xs), dtype=bool)
    for (cx, cy) in sigma.centers():
        dx = np.mod(xs - cx + 0.5 * p.period, p.period) - 0.5 * p.period
        mask |= np.hypot(dx, hs - cy) <= sigma.r0 * (1.0 + tolerance)
    return mask


def euler_lagrange_residual(p: Profile, state: ElasticState, params: ModelParams) -> ELResidual:
    """
    γκ + W(H_sym) - Λ_vol，Λ_vol 取 Γ_h 上（去掉核心接触弧）的弧长平均

    Args:
        p: 连续轮廓
        state: 弹性状态
        params: 模型参数

    Returns:
        ELResidual: 残差及其上确界、L² 范数
    """
    kappa = p.curvature()
    W = graph_energy_density(p, state)
    weights = p.arc_length_weights()
    excluded = core_contact_mask(p, state.sigma)
    active = ~excluded
    field_values = params.gamma * kappa + W
    if np.any(active):
        multiplier = float(np.sum(weights[active] * field_values[active]) / np.sum(weights[active]))
    else:
        multiplier = float(np.mean(field_values))
    residual = field_values - multiplier
    if np.any(active):
        sup_norm = float(np.max(np.abs(residual[active])))
        l2_norm = float(np.sqrt(np.sum(weights[active] * residual[active] ** 2)))
    else:
        sup_norm = l2_norm = 0.0
    return ELResidual(x=p.node_x, values=residual, multiplier=multiplier, excluded=excluded,
                      sup_norm=sup_norm, l2_norm=l2_norm)
