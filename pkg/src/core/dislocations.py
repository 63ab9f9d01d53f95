"""
位错模块

Burgers 向量格、位错测度、磨光核与形核能。

位错以 (中心, 整数系数) 的形式存储，Burgers 向量由基本向量组合得到。
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy import integrate

logger = logging.getLogger(__name__)

# 整数无关性校验的系数搜索范围
_INDEPENDENCE_BOUND = 6
# 列积分的自适应求积容差
_COLUMN_TOL = 1e-10
# 列积分缓存键的舍入位数（单位鼓包坐标）
_OFFSET_DIGITS = 12


class LatticeError(ValueError):
    """Burgers 格或位错系数不合法"""

    def __init__(self, message: str, coeffs: Any = None):
        self.message = message
        self.coeffs = coeffs
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts = [self.message]
        if self.coeffs is not None:
            parts.append(f"系数: {self.coeffs}")
        return " | ".join(parts)


@dataclass(frozen=True)
class BurgersLattice:
    """基本 Burgers 向量集合 B°"""
    fundamentals: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'fundamentals', tuple((float(b[0]), float(b[1])) for b in self.fundamentals))
        self._check_independence()

    def _check_independence(self) -> None:
        """有界整数搜索：不存在非零 m 使 Σ m_i b°_i = 0"""
        n = len(self.fundamentals)
        if n == 0:
            return
        if n > 3:
            logger.warning(f"基本向量数 {n} > 3，跳过整数无关性校验")
            return
        vectors = np.array(self.fundamentals)
        scale = max(1.0, float(np.max(np.abs(vectors))))
        rng = range(-_INDEPENDENCE_BOUND, _INDEPENDENCE_BOUND + 1)
        for coeffs in itertools.product(rng, repeat=n):
            if not any(coeffs):
                continue
            if np.linalg.norm(np.asarray(coeffs) @ vectors) < 1e-12 * scale:
                raise LatticeError("基本向量不满足整数线性无关", coeffs)

    @property
    def size(self) -> int:
        return len(self.fundamentals)

    @property
    def is_empty(self) -> bool:
        return not self.fundamentals

    def _check_coeffs(self, coeffs: Sequence[int]) -> None:
        if len(coeffs) != self.size:
            raise LatticeError(f"系数长度 {len(coeffs)} 与基本向量数 {self.size} 不一致", tuple(coeffs))

    def burgers(self, coeffs: Sequence[int]) -> np.ndarray:
        """b = Σ m_j b°_j"""
        self._check_coeffs(coeffs)
        if self.is_empty:
            return np.zeros(2)
        return np.asarray(coeffs, dtype=float) @ np.array(self.fundamentals)

    def norm_sq(self, coeffs: Sequence[int]) -> float:
        """‖b‖²_{B°} = Σ|m_i||b°_i|²"""
        self._check_coeffs(coeffs)
        return float(sum(abs(m) * (bx * bx + by * by) for m, (bx, by) in zip(coeffs, self.fundamentals)))

    def unit_coeffs(self) -> List[Tuple[int, ...]]:
        """±b°_i 的系数，按 (i, +1), (i, -1) 排序"""
        result = []
        for i in range(self.size):
            for sign in (1, -1):
                coeffs = [0] * self.size
                coeffs[i] = sign
                result.append(tuple(coeffs))
        return result


@dataclass(frozen=True)
class DislocationEntry:
    """单个位错：中心与整数系数"""
    center: Tuple[float, float]
    coeffs: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'center', (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, 'coeffs', tuple(int(m) for m in self.coeffs))


@dataclass(frozen=True)
class DislocationMeasure:
    """周期位错测度 σ = Σ b_i δ^#_{z_i}"""
    lattice: BurgersLattice
    r0: float
    entries: Tuple[DislocationEntry, ...] = field(default_factory=tuple)
    period: float = 1.0

    def __post_init__(self):
        if not self.r0 > 0:
            raise LatticeError(f"核心半径必须为正: {self.r0}")
        entries = tuple(e if isinstance(e, DislocationEntry) else DislocationEntry(*e) for e in self.entries)
        for e in entries:
            self.lattice._check_coeffs(e.coeffs)
        object.__setattr__(self, 'entries', entries)

    @classmethod
    def empty(cls, lattice: BurgersLattice, r0: float, period: float = 1.0) -> 'DislocationMeasure':
        return cls(lattice=lattice, r0=r0, entries=(), period=period)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def centers(self) -> np.ndarray:
        return np.array([e.center for e in self.entries], dtype=float).reshape(-1, 2)

    def burgers_vectors(self) -> np.ndarray:
        return np.array([self.lattice.burgers(e.coeffs) for e in self.entries], dtype=float).reshape(-1, 2)

    def with_entries(self, entries: Sequence[DislocationEntry]) -> 'DislocationMeasure':
        return DislocationMeasure(lattice=self.lattice, r0=self.r0, entries=tuple(entries), period=self.period)

    def add(self, center: Tuple[float, float], coeffs: Sequence[int]) -> 'DislocationMeasure':
        """σ + bδ_z"""
        return self.with_entries(self.entries + (DislocationEntry(center, tuple(coeffs)),))

    def move(self, index: int, center: Tuple[float, float]) -> 'DislocationMeasure':
        """替换第 index 个位错的中心（x 按周期折回）"""
        entries = list(self.entries)
        entries[index] = DislocationEntry((center[0] % self.period, center[1]), entries[index].coeffs)
        return self.with_entries(entries)

    def flip(self, indices: Sequence[int]) -> 'DislocationMeasure':
        """反转指定位错的 Burgers 向量"""
        chosen = set(indices)
        return self.with_entries([DislocationEntry(e.center, tuple(-m for m in e.coeffs)) if i in chosen else e
                                  for i, e in enumerate(self.entries)])

    def scaled(self, factor: int) -> 'DislocationMeasure':
        return self.with_entries([DislocationEntry(e.center, tuple(factor * m for m in e.coeffs))
                                  for e in self.entries])

    def translate(self, dx: float) -> 'DislocationMeasure':
        return self.with_entries([DislocationEntry(((e.center[0] + dx) % self.period, e.center[1]), e.coeffs)
                                  for e in self.entries])

    def merged(self) -> 'DislocationMeasure':
        """合并重合中心（系数相加），去掉系数全为零的项；保持首次出现的顺序"""
        order: List[Tuple[float, float]] = []
        sums: Dict[Tuple[float, float], List[int]] = {}
        for e in self.entries:
            key = (e.center[0] % self.period, e.center[1])
            if key not in sums:
                order.append(key)
                sums[key] = [0] * self.lattice.size
            sums[key] = [a + b for a, b in zip(sums[key], e.coeffs)]
        entries = [DislocationEntry(key, tuple(sums[key])) for key in order if any(sums[key])]
        return self.with_entries(entries)

    def to_dict(self) -> Dict[str, Any]:
        return {'r0': self.r0, 'period': self.period,
                'fundamentals': [list(b) for b in self.lattice.fundamentals],
                'entries': [{'center': list(e.center), 'coeffs': list(e.coeffs)} for e in self.entries]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DislocationMeasure':
        try:
            lattice = BurgersLattice(tuple(tuple(b) for b in data.get('fundamentals', [])))
            entries = tuple(DislocationEntry(tuple(e['center']), tuple(e['coeffs'])) for e in data.get('entries', []))
            return cls(lattice=lattice, r0=float(data['r0']), entries=entries,
                       period=float(data.get('period', 1.0)))
        except (KeyError, TypeError) as e:
            raise LatticeError(f"位错 JSON 结构错误: {e}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> 'DislocationMeasure':
        return cls.from_dict(json.loads(text))


def _bump(r2: np.ndarray) -> np.ndarray:
    """exp(-1/(1-|z|²))，单位圆外为 0"""
    r2 = np.asarray(r2, dtype=float)
    inside = r2 < 1.0
    safe = np.where(inside, 1.0 - r2, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


@lru_cache(maxsize=1)
def bump_normalization() -> float:
    """单位圆上标准鼓包的归一化常数 c，使 ∫ c·exp(-1/(1-|z|²)) dz = 1"""
    radial, _ = integrate.quad(lambda r: 2.0 * math.pi * r * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
                               epsabs=1e-14, epsrel=1e-12, limit=200)
    return 1.0 / radial


@dataclass(frozen=True)
class Mollifier:
    """径向对称磨光核 ρ_{r0}(z) = r0⁻² ρ(z/r0)"""
    r0: float

    @property
    def normalization(self) -> float:
        return bump_normalization()

    def density(self, dx, dy) -> np.ndarray:
        """ρ_{r0}(dx, dy)"""
        r2 = (np.asarray(dx, dtype=float) ** 2 + np.asarray(dy, dtype=float) ** 2) / self.r0 ** 2
        return self.normalization * _bump(r2) / self.r0 ** 2

    def periodic_density(self, dx, dy, period: float) -> np.ndarray:
        """ρ^#_{r0}：对三个周期像求和"""
        dx = np.asarray(dx, dtype=float)
        return sum(self.density(dx + k * period, dy) for k in (-1, 0, 1))

    def column_integral(self, dx, dy) -> np.ndarray:
        """
        ∫_{-∞}^{dy} ρ_{r0}(dx, t) dt

        在单位鼓包坐标中逐点做自适应求积（容差 1e-10），结果按舍入后的偏移缓存，再按 r0 缩放。
        竖直偏移超过圆盘上沿的点共用边缘密度的缓存项。

        Args:
            dx: 相对中心的水平偏移（已折回到最近周期像）
            dy: 相对中心的竖直偏移

        Returns:
            np.ndarray: 列积分值，dy ≥ r0 时等于边缘密度 ψ(dx)
        """
        s = np.asarray(dx, dtype=float) / self.r0
        t = np.asarray(dy, dtype=float) / self.r0
        s, t = np.broadcast_arrays(s, t)
        shape = s.shape
        s, t = s.ravel(), t.ravel()
        result = np.zeros(s.shape)
        active = (np.abs(s) < 1.0) & (t > -1.0)
        if not np.any(active):
            return result.reshape(shape)
        keys = zip(np.round(s[active], _OFFSET_DIGITS), np.round(np.minimum(t[active], 1.0), _OFFSET_DIGITS))
        integral = np.fromiter((unit_column_integral(float(sa), float(ta)) for sa, ta in keys), dtype=float,
                               count=int(np.count_nonzero(active)))
        result[active] = self.normalization * integral / self.r0
        return result.reshape(shape)

    def marginal(self, dx) -> np.ndarray:
        """ψ(dx) = ∫ ρ_{r0}(dx, t) dt"""
        return self.column_integral(dx, np.full(np.shape(dx), 2.0 * self.r0))


@lru_cache(maxsize=1 << 18)
def unit_column_integral(s: float, t: float) -> float:
    """未归一化单位鼓包沿竖线 x = s 从 -∞ 到 t 的积分"""
    if abs(s) >= 1.0:
        return 0.0
    half = math.sqrt(1.0 - s * s)
    upper = min(t, half)
    if upper <= -half:
        return 0.0

    def integrand(tau: float) -> float:
        gap = 1.0 - s * s - tau * tau
        return math.exp(-1.0 / gap) if gap > 0.0 else 0.0

    value, _ = integrate.quad(integrand, -half, upper, epsabs=_COLUMN_TOL, epsrel=_COLUMN_TOL, limit=200)
    return value


def wrap_offset(dx, period: float) -> np.ndarray:
    """折回到 [-ℓ/2, ℓ/2) 的最近周期像偏移"""
    return np.mod(np.asarray(dx, dtype=float) + 0.5 * period, period) - 0.5 * period


def regularized_measure(sigma: DislocationMeasure, z: Tuple[float, float]) -> np.ndarray:
    """
    (σ*ρ_{r0})^#(z) = Σ_i b_i ρ^#_{r0}(z - z_i)

    Args:
        sigma: 位错测度
        z: 求值点，也可为形如 (xs, ys) 的数组对

    Returns:
        np.ndarray: 形状 (..., 2) 的向量值
    """
    x = np.asarray(z[0], dtype=float)
    y = np.asarray(z[1], dtype=float)
    out = np.zeros(np.broadcast(x, y).shape + (2,))
    if sigma.is_empty:
        return out
    moll = Mollifier(sigma.r0)
    for e, b in zip(sigma.entries, sigma.burgers_vectors()):
        rho = moll.periodic_density(wrap_offset(x - e.center[0], sigma.period), y - e.center[1], sigma.period)
        out += rho[..., None] * b
    return out


def nucleation_energy(sigma: DislocationMeasure, c_o: float) -> float:
    """N(σ) = c_o Σ ‖b_i‖²_{B°}，重合中心先合并"""
    merged = sigma.merged()
    return float(c_o * sum(merged.lattice.norm_sq(e.coeffs) for e in merged.entries))


def total_variation(sigma: DislocationMeasure) -> float:
    """|σ|(一个周期) = Σ|b_i|，重合中心先合并"""
    merged = sigma.merged()
    if merged.is_empty:
        return 0.0
    return float(np.sum(np.linalg.norm(merged.burgers_vectors(), axis=1)))
