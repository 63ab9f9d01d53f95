"""
几何模块

表示周期薄膜轮廓 h 与参考区域 Ω_h，计算体积、表面测度（图像长度与竖直切口长度），
以及核心圆盘可容纳性等几何判定。

轮廓在 [0, ℓ) 上由节点分段线性给出，跳跃与凹陷以显式记录表示：
每条记录给出左极限、右极限与该点的取值（下半连续性要求取值 ≤ 两侧极限的最小值）。
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_NODE_COUNT = 128

# 轮廓比较所用的绝对容差
_GEOM_TOL = 1e-12


class ProfileError(ValueError):
    """轮廓数据不合法"""

    def __init__(self, message: str, field_name: str = "", value: Any = None):
        self.message = message
        self.field_name = field_name
        self.value = value
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts = [self.message]
        if self.field_name:
            parts.append(f"字段: {self.field_name}")
        if self.value is not None:
            parts.append(f"值: {self.value}")
        return " | ".join(parts)


class PlacementError(ValueError):
    """位错核心圆盘越过基底线 y = 0"""

    def __init__(self, center: Tuple[float, float], radius: float):
        self.center = center
        self.radius = radius
        super().__init__(f"圆心 y={center[1]:.6g} 小于半径 r={radius:.6g}，圆盘穿过基底 | 圆心: {center}")


@dataclass(frozen=True)
class JumpRecord:
    """跳跃/凹陷记录"""
    x: float
    left: float
    right: float
    value: float

    @property
    def wall_length(self) -> float:
        """竖直墙长度 |h⁻ - h⁺|"""
        return abs(self.left - self.right)

    @property
    def cut_length(self) -> float:
        """竖直切口长度 min(h⁻, h⁺) - h(x)"""
        return min(self.left, self.right) - self.value

    @property
    def lower_limit(self) -> float:
        return min(self.left, self.right)


@dataclass(frozen=True)
class SurfaceMeasure:
    """表面测度"""
    graph_length: float
    cut_length: float

    @property
    def relaxed_total(self) -> float:
        """松弛表面测度：切口计两次"""
        return self.graph_length + 2.0 * self.cut_length


@dataclass(frozen=True)
class Knot:
    """分段线性图像的断点（节点或跳跃）"""
    x: float
    left: float
    right: float
    value: float
    is_jump: bool


@dataclass(frozen=True)
class Profile:
    """周期下半连续轮廓"""
    period: float
    nodes: Tuple[Tuple[float, float], ...]
    jumps: Tuple[JumpRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'nodes', tuple((float(x), float(h)) for x, h in self.nodes))
        object.__setattr__(self, 'jumps', tuple(
            j if isinstance(j, JumpRecord) else JumpRecord(*(float(v) for v in j)) for j in self.jumps))
        errors = self.validate()
        if errors:
            raise ProfileError("; ".join(errors))

    # ------------------------------------------------------------------
    # 构造
    # ------------------------------------------------------------------

    @classmethod
    def flat(cls, period: float, height: float, n_nodes: int = DEFAULT_NODE_COUNT) -> 'Profile':
        """平坦轮廓 h ≡ height"""
        xs = np.arange(n_nodes) * (period / n_nodes)
        return cls(period=period, nodes=tuple((x, height) for x in xs))

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], period: float,
                      n_nodes: int = DEFAULT_NODE_COUNT) -> 'Profile':
        """在均匀节点上采样连续函数"""
        xs = np.arange(n_nodes) * (period / n_nodes)
        hs = np.asarray(func(xs), dtype=float)
        return cls(period=period, nodes=tuple(zip(xs.tolist(), hs.tolist())))

    @classmethod
    def sinusoid(cls, period: float, mean: float, amplitude: float, modes: int = 1,
                 n_nodes: int = DEFAULT_NODE_COUNT) -> 'Profile':
        """正弦扰动轮廓 h = mean + amplitude·sin(2π·modes·x/ℓ)"""
        return cls.from_function(lambda x: mean + amplitude * np.sin(2.0 * np.pi * modes * x / period),
                                 period, n_nodes)

    def with_heights(self, heights: Sequence[float]) -> 'Profile':
        """替换节点高度（节点横坐标与跳跃记录不变）"""
        if len(heights) != len(self.nodes):
            raise ProfileError("节点高度数量不匹配", "nodes", len(heights))
        return Profile(period=self.period, nodes=tuple((x, float(h)) for (x, _), h in zip(self.nodes, heights)),
                       jumps=self.jumps)

    def translate(self, shift: float) -> 'Profile':
        """周期平移 x ↦ x + shift"""
        ell = self.period
        nodes = sorted(((x + shift) % ell, h) for x, h in self.nodes)
        jumps = sorted((JumpRecord((j.x + shift) % ell, j.left, j.right, j.value) for j in self.jumps),
                       key=lambda j: j.x)
        return Profile(period=ell, nodes=tuple(nodes), jumps=tuple(jumps))

    # ------------------------------------------------------------------
    # 校验
    # ------------------------------------------------------------------

    def validate(self) -> List[str]:
        """
        校验轮廓不变量

        Returns:
            List[str]: 错误信息列表，空列表表示通过
        """
        errors = []

        if not self.period > 0:
            errors.append(f"周期必须为正: {self.period}")
            return errors

        if not self.nodes and not self.jumps:
            errors.append("轮廓至少需要一个节点或跳跃记录")
            return errors

        xs = [x for x, _ in self.nodes]
        for x, h in self.nodes:
            if not (0.0 <= x < self.period):
                errors.append(f"节点横坐标超出 [0, ℓ): {x}")
            if not math.isfinite(h) or h < 0:
                errors.append(f"节点高度必须非负: {h}")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            errors.append("节点横坐标必须严格递增")

        node_set = set(xs)
        jump_xs = [j.x for j in self.jumps]
        if any(b <= a for a, b in zip(jump_xs, jump_xs[1:])):
            errors.append("跳跃记录横坐标必须严格递增")
        for j in self.jumps:
            if not (0.0 <= j.x < self.period):
                errors.append(f"跳跃横坐标超出 [0, ℓ): {j.x}")
            if j.x in node_set:
                errors.append(f"跳跃记录与节点重合: {j.x}")
            if min(j.left, j.right, j.value) < 0:
                errors.append(f"跳跃记录高度必须非负: {j}")
            if j.value > j.lower_limit + _GEOM_TOL:
                errors.append(f"违反下半连续性: 取值 {j.value} > min(左极限, 右极限) {j.lower_limit}")

        if errors:
            return errors

        # ‖h‖∞ ≤ |Ω_h|/ℓ + H¹(Γ_h)
        measure = self.surface_measure()
        if self.max_height() > self.volume() / self.period + measure.graph_length + 1e-9:
            errors.append("违反上确界估计 ‖h‖∞ ≤ |Ω_h|/ℓ + H¹(Γ_h)")
        return errors

    # ------------------------------------------------------------------
    # 基本结构
    # ------------------------------------------------------------------

    @cached_property
    def knots(self) -> Tuple[Knot, ...]:
        """按横坐标排序的断点序列"""
        items = [Knot(x, h, h, h, False) for x, h in self.nodes]
        items.extend(Knot(j.x, j.left, j.right, j.value, True) for j in self.jumps)
        return tuple(sorted(items, key=lambda k: k.x))

    @cached_property
    def segments(self) -> np.ndarray:
        """
        一个周期内的线性段 (x0, y0, x1, y1)，最后一段跨越 x = ℓ
        """
        knots = self.knots
        segs = []
        for i, k in enumerate(knots):
            nxt = knots[(i + 1) % len(knots)]
            x1 = nxt.x if i + 1 < len(knots) else nxt.x + self.period
            segs.append((k.x, k.right, x1, nxt.left))
        return np.array(segs, dtype=float)

    @property
    def is_continuous(self) -> bool:
        """没有跳跃记录"""
        return not self.jumps

    @property
    def node_x(self) -> np.ndarray:
        return np.array([x for x, _ in self.nodes], dtype=float)

    @property
    def node_h(self) -> np.ndarray:
        return np.array([h for _, h in self.nodes], dtype=float)

    def max_height(self) -> float:
        return max(max(k.left, k.right, k.value) for k in self.knots)

    def min_height(self) -> float:
        """下确界（包含跳跃点的取值）"""
        return min(min(k.left, k.right, k.value) for k in self.knots)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        """
        逐点求值（跳跃点处返回记录的取值）

        Args:
            x: 标量或数组，自动按周期折回

        Returns:
            np.ndarray: 轮廓高度
        """
        xq = np.mod(np.asarray(x, dtype=float), self.period)
        segs = self.segments
        starts = segs[:, 0]
        idx = np.searchsorted(starts, xq, side='right') - 1
        # 落在第一个断点之前的点属于跨越 x = ℓ 的最后一段
        wrap = idx < 0
        idx = np.where(wrap, len(starts) - 1, idx)
        xs = np.where(wrap, xq + self.period, xq)
        x0, y0, x1, y1 = segs[idx, 0], segs[idx, 1], segs[idx, 2], segs[idx, 3]
        t = np.clip((xs - x0) / (x1 - x0), 0.0, 1.0)
        values = y0 + t * (y1 - y0)

        knot_x = np.array([k.x for k in self.knots])
        knot_v = np.array([k.value for k in self.knots])
        hit = np.isclose(xq[..., None], knot_x, rtol=0.0, atol=_GEOM_TOL)
        if np.any(hit):
            values = np.where(hit.any(axis=-1), knot_v[np.argmax(hit, axis=-1)], values)
        return values

    def lower_limit(self, x) -> np.ndarray:
        """h⁻(x) = min(h(x-), h(x+))，在连续点处等于 h(x)"""
        values = np.array(self.evaluate(x), dtype=float)
        xq = np.mod(np.asarray(x, dtype=float), self.period)
        for j in self.jumps:
            values = np.where(np.isclose(xq, j.x, rtol=0.0, atol=_GEOM_TOL), j.lower_limit, values)
        return values

    # ------------------------------------------------------------------
    # 测度
    # ------------------------------------------------------------------

    def volume(self) -> float:
        """|Ω_h| = ∫₀^ℓ h dx（分段线性精确积分）"""
        segs = self.segments
        return float(np.sum((segs[:, 2] - segs[:, 0]) * (segs[:, 1] + segs[:, 3]) * 0.5))

    def surface_measure(self) -> SurfaceMeasure:
        """图像长度（含竖直墙）与切口长度"""
        segs = self.segments
        graph = float(np.sum(np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1])))
        graph += sum(j.wall_length for j in self.jumps)
        cut = sum(j.cut_length for j in self.jumps)
        return SurfaceMeasure(graph_length=graph, cut_length=float(cut))

    def anchoring_integral(self, anchor: 'Profile', n_samples: int = 4096) -> float:
        """∫₀^ℓ |h - anchor|² dx，在两者断点的并集上做精确分段积分"""
        xs = np.unique(np.concatenate([self.segments[:, 0], anchor.segments[:, 0],
                                       np.linspace(0.0, self.period, n_samples, endpoint=False)]))
        xs = np.append(xs, self.period)
        total = 0.0
        for a, b in zip(xs[:-1], xs[1:]):
            if b - a <= 0:
                continue
            # 每个子区间上两者都是线性的，用 Simpson 公式精确积分二次函数
            eps = (b - a) * 1e-12
            fa = self.evaluate(a + eps) - anchor.evaluate(a + eps)
            fb = self.evaluate(b - eps) - anchor.evaluate(b - eps)
            fm = self.evaluate(0.5 * (a + b)) - anchor.evaluate(0.5 * (a + b))
            total += (b - a) / 6.0 * (fa ** 2 + 4.0 * fm ** 2 + fb ** 2)
        return float(total)

    def sup_distance_to_flat(self) -> float:
        """到同体积平坦轮廓的上确界距离"""
        mean = self.volume() / self.period
        return max(max(abs(k.left - mean), abs(k.right - mean), abs(k.value - mean)) for k in self.knots)

    def slopes(self) -> np.ndarray:
        """各线性段的斜率"""
        segs = self.segments
        return (segs[:, 3] - segs[:, 1]) / (segs[:, 2] - segs[:, 0])

    def curvature(self) -> np.ndarray:
        """
        节点处离散曲率 κ = -(h'/√(1+h'²))'

        仅对连续轮廓定义；每个节点使用相邻两段的斜率。
        """
        if not self.is_continuous:
            raise ProfileError("含跳跃的轮廓没有逐点曲率", "jumps", len(self.jumps))
        segs = self.segments
        dx = segs[:, 2] - segs[:, 0]
        slope = (segs[:, 3] - segs[:, 1]) / dx
        tangent = slope / np.sqrt(1.0 + slope ** 2)
        # 节点 k 位于段 k-1 与段 k 之间
        prev_tangent = np.roll(tangent, 1)
        prev_dx = np.roll(dx, 1)
        return -(tangent - prev_tangent) / (0.5 * (dx + prev_dx))

    def arc_length_weights(self) -> np.ndarray:
        """节点的对偶弧长（相邻两段长度之半的和）"""
        segs = self.segments
        lengths = np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1])
        return 0.5 * (lengths + np.roll(lengths, 1))

    def dual_widths(self) -> np.ndarray:
        """节点的对偶水平宽度；体积对节点高度的导数"""
        segs = self.segments
        dx = segs[:, 2] - segs[:, 0]
        return 0.5 * (dx + np.roll(dx, 1))

    # ------------------------------------------------------------------
    # 边界曲线
    # ------------------------------------------------------------------

    def boundary_pieces(self, shifts: Sequence[int] = (-1, 0, 1)) -> Tuple[np.ndarray, np.ndarray]:
        """
        周期延拓后的边界曲线 Γ_h ∪ Σ_h

        Returns:
            Tuple[np.ndarray, np.ndarray]: (线段数组 (n, 4)，线段类型数组：0 图像，1 竖直墙，2 切口)
        """
        base = [self.segments]
        kinds = [np.zeros(len(self.segments), dtype=int)]
        walls = [(j.x, j.left, j.x, j.right) for j in self.jumps if j.wall_length > 0]
        cuts = [(j.x, j.value, j.x, j.lower_limit) for j in self.jumps if j.cut_length > 0]
        if walls:
            base.append(np.array(walls, dtype=float))
            kinds.append(np.ones(len(walls), dtype=int))
        if cuts:
            base.append(np.array(cuts, dtype=float))
            kinds.append(np.full(len(cuts), 2, dtype=int))
        segs = np.vstack(base)
        kind = np.concatenate(kinds)
        shifted = []
        for s in shifts:
            offset = np.array([s * self.period, 0.0, s * self.period, 0.0])
            shifted.append(segs + offset)
        return np.vstack(shifted), np.tile(kind, len(shifts))

    # ------------------------------------------------------------------
    # 序列化
    # ------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {'period': self.period, 'nodes': [[x, h] for x, h in self.nodes],
                'jumps': [[j.x, j.left, j.right, j.value] for j in self.jumps]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Profile':
        try:
            return cls(period=float(data['period']), nodes=tuple(tuple(n) for n in data.get('nodes', [])),
                       jumps=tuple(JumpRecord(*j) for j in data.get('jumps', [])))
        except (KeyError, TypeError) as e:
            raise ProfileError(f"轮廓 JSON 结构错误: {e}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> 'Profile':
        return cls.from_dict(json.loads(text))


def volume(p: Profile) -> float:
    """∫₀^ℓ h dx"""
    return p.volume()


def surface_measure(p: Profile) -> SurfaceMeasure:
    """H¹(Γ_h)、H¹(Σ_h) 与松弛总量"""
    return p.surface_measure()


def point_segment_distance(px: np.ndarray, py: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """
    点到线段的欧氏距离（广播：点 (...,) × 线段 (n, 4) → (..., n)）
    """
    px = np.asarray(px, dtype=float)[..., None]
    py = np.asarray(py, dtype=float)[..., None]
    x0, y0, x1, y1 = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    dx, dy = x1 - x0, y1 - y0
    length2 = dx * dx + dy * dy
    safe = np.where(length2 > 0, length2, 1.0)
    t = np.clip(((px - x0) * dx + (py - y0) * dy) / safe, 0.0, 1.0)
    t = np.where(length2 > 0, t, 0.0)
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def ball_fits(p: Profile, center: Tuple[float, float], r: float) -> bool:
    """
    判断闭圆盘 B_r(center) 是否位于周期延拓的亚图 Ω_h^# 内

    使用精确的点-线段距离，不做采样。

    Args:
        p: 轮廓
        center: 圆心 (x, y)
        r: 半径

    Returns:
        bool: 是否容纳

    Raises:
        PlacementError: 圆心 y < r（圆盘越过基底）
    """
    if r <= 0:
        raise ValueError(f"半径必须为正: {r}")
    cx, cy = float(center[0]), float(center[1])
    if cy < r - _GEOM_TOL:
        raise PlacementError((cx, cy), r)

    # 圆心必须在图像之下
    if not cy < float(p.evaluate(cx)):
        return False

    segs, _ = p.boundary_pieces()
    # 只保留可能与圆盘相交的线段
    near = (np.maximum(segs[:, 0], segs[:, 2]) >= cx - r) & (np.minimum(segs[:, 0], segs[:, 2]) <= cx + r)
    if not np.any(near):
        return True
    dist = point_segment_distance(cx, cy, segs[near])
    return bool(np.min(dist) >= r - 1e-12)


@dataclass
class InteriorBallReport:
    """内切球诊断报告"""
    radius: float
    points: np.ndarray
    passed: np.ndarray

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def failures(self) -> np.ndarray:
        return self.points[~self.passed]

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.passed)) if len(self.passed) else 1.0


def _sample_pieces(segs: np.ndarray, kinds: np.ndarray, spacing: float) -> Tuple[np.ndarray, np.ndarray]:
    """沿线段按弧长均匀采样，返回 (点, 所属线段下标)"""
    points, owners = [], []
    for i, (x0, y0, x1, y1) in enumerate(segs):
        length = math.hypot(x1 - x0, y1 - y0)
        n = max(1, int(math.ceil(length / spacing)))
        t = np.linspace(0.0, 1.0, n + 1)
        points.append(np.column_stack([x0 + t * (x1 - x0), y0 + t * (y1 - y0)]))
        owners.append(np.full(n + 1, i))
    return np.vstack(points), np.concatenate(owners)


def _piece_normals(segs: np.ndarray, kinds: np.ndarray) -> List[List[np.ndarray]]:
    """每条线段的候选内法向（图像段一个，竖直段两侧各一个）"""
    normals = []
    for (x0, y0, x1, y1), kind in zip(segs, kinds):
        if kind == 0:
            dx, dy = x1 - x0, y1 - y0
            n = np.array([dy, -dx]) / math.hypot(dx, dy)
            normals.append([n])
        else:
            normals.append([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
    return normals


def interior_ball_diagnostic(p: Profile, rho: float, samples: int = 200, rel_tol: float = 1e-3) -> InteriorBallReport:
    """
    内切球条件的离散诊断

    对 Γ_h ∪ Σ_h 上的采样点，检查是否存在半径 ϱ、位于 Ω_h^# ∪ (ℝ×(-∞,0]) 内、
    仅在该点与边界相切的圆盘：候选圆心沿与该点相邻的各边界段内法向及其角平分线，
    圆盘内（按相对容差）不得包含其它参考采样点。

    Args:
        p: 轮廓
        rho: 圆盘半径 ϱ
        samples: 被检测点的数量
        rel_tol: 判定“在圆盘内”的相对容差

    Returns:
        InteriorBallReport: 诊断报告
    """
    if rho <= 0:
        raise ValueError(f"半径必须为正: {rho}")
    segs0, kinds0 = p.boundary_pieces(shifts=(0,))
    total = float(np.sum(np.hypot(segs0[:, 2] - segs0[:, 0], segs0[:, 3] - segs0[:, 1])))
    test_spacing = total / max(samples, 1)
    test_points, _ = _sample_pieces(segs0, kinds0, test_spacing)
    test_points = np.unique(np.round(test_points, 14), axis=0)

    segs, kinds = p.boundary_pieces()
    ref_spacing = min(test_spacing / 4.0, rho / 4.0)
    ref_points, _ = _sample_pieces(segs, kinds, ref_spacing)
    piece_normals = _piece_normals(segs, kinds)

    passed = np.zeros(len(test_points), dtype=bool)
    for i, (px, py) in enumerate(test_points):
        incident = np.flatnonzero(point_segment_distance(px, py, segs) < 1e-10)
        candidates: List[np.ndarray] = []
        for k in incident:
            candidates.extend(piece_normals[k])
        for a in range(len(candidates)):
            for b in range(a + 1, len(candidates)):
                bis = candidates[a] + candidates[b]
                norm = np.linalg.norm(bis)
                if norm > 1e-12:
                    candidates.append(bis / norm)
        for n in candidates:
            cx, cy = px + rho * n[0], py + rho * n[1]
            # 圆心须在 Ω_h^# ∪ 下半平面内
            if cy >= float(p.evaluate(cx)) and cy > 0:
                continue
            dist = np.hypot(ref_points[:, 0] - cx, ref_points[:, 1] - cy)
            if np.all(dist >= rho * (1.0 - rel_tol)):
                passed[i] = True
                break

    report = InteriorBallReport(radius=rho, points=test_points, passed=passed)
    logger.debug(f"内切球诊断: ϱ={rho:.4g}, 通过 {int(passed.sum())}/{len(passed)} 个采样点")
    return report
