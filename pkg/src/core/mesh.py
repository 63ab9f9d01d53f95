"""
网格模块

在 Ω_h 上生成贴合边界的周期结构化三角网格（一阶协调单元）。

列由均匀细分网格与轮廓节点横坐标的并集给出，每列按 y = η·h(x) 均匀分层；
第 ncol 列与第 0 列等同（强周期）。四边形按 (列+层) 的奇偶交替对角剖分，
使网格关于每条列线镜像对称。
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from .geometry import Profile

logger = logging.getLogger(__name__)

# 三点内部求积：重心坐标 (2/3, 1/6, 1/6) 的轮换，权重各 1/3
QUAD_BARY = np.array([[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                      [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                      [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]])
QUAD_WEIGHTS = np.full(3, 1.0 / 3.0)


class MeshError(Exception):
    """网格生成失败"""

    def __init__(self, message: str, detail: str = ""):
        self.message = message
        self.detail = detail
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts = [self.message]
        if self.detail:
            parts.append(self.detail)
        return " | ".join(parts)


@dataclass(frozen=True, eq=False)
class Mesh:
    """周期结构化三角网格"""
    profile: Profile
    refinement: int
    columns: np.ndarray
    n_layers: int
    nodes: np.ndarray
    elements: np.ndarray
    element_xy: np.ndarray
    top_elements: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def node_index(self, column: int, layer: int) -> int:
        return (column % self.n_columns) * (self.n_layers + 1) + layer

    @cached_property
    def substrate_nodes(self) -> np.ndarray:
        """y = 0 上的节点"""
        return np.array([self.node_index(j, 0) for j in range(self.n_columns)])

    @cached_property
    def graph_nodes(self) -> np.ndarray:
        """Γ_h 上的节点（按列排序）"""
        return np.array([self.node_index(j, self.n_layers) for j in range(self.n_columns)])

    @cached_property
    def areas(self) -> np.ndarray:
        xy = self.element_xy
        return 0.5 * ((xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1])
                      - (xy[:, 2, 0] - xy[:, 0, 0]) * (xy[:, 1, 1] - xy[:, 0, 1]))

    @cached_property
    def gradients(self) -> np.ndarray:
        """
        P1 基函数梯度，形状 (ne, 3, 2)
        """
        xy = self.element_xy
        x, y = xy[:, :, 0], xy[:, :, 1]
        two_area = 2.0 * self.areas
        grads = np.empty((self.n_elements, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            grads[:, a, 0] = (y[:, b] - y[:, c]) / two_area
            grads[:, a, 1] = (x[:, c] - x[:, b]) / two_area
        return grads

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        """求积点（未折回的坐标），形状 (ne, 3, 2)"""
        return np.einsum('qa,ead->eqd', QUAD_BARY, self.element_xy)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.element_xy.mean(axis=1)

    def max_edge_length(self) -> float:
        xy = self.element_xy
        edges = [np.linalg.norm(xy[:, (a + 1) % 3] - xy[:, a], axis=1) for a in range(3)]
        return float(np.max(edges))

    def element_gradient(self, nodal: np.ndarray) -> np.ndarray:
        """
        逐单元常数梯度 D f

        Args:
            nodal: 节点值，形状 (N, 2)

        Returns:
            np.ndarray: 形状 (ne, 2, 2)，[e, i, j] = ∂f_i/∂x_j
        """
        vals = nodal[self.elements]
        return np.einsum('eai,eaj->eij', vals, self.gradients)


def _column_positions(profile: Profile, refinement: int) -> np.ndarray:
    ell = profile.period
    uniform = np.arange(refinement) * (ell / refinement)
    merged = np.sort(np.concatenate([uniform, profile.node_x]))
    tol = 1e-9 * ell
    keep = np.concatenate([[True], np.diff(merged) > tol])
    return merged[keep]


def build_mesh(profile: Profile, refinement: int, h_min: float = 0.0) -> Mesh:
    """
    生成 Ω_h 的周期结构化网格

    Args:
        profile: 连续轮廓
        refinement: 细分参数 n（最大边长 ≤ C/n）
        h_min: 允许的最小膜厚

    Returns:
        Mesh: 网格

    Raises:
        MeshError: 轮廓含跳跃/切口、厚度低于 h_min 或出现退化单元
    """
    if refinement < 2:
        raise MeshError(f"细分参数过小: {refinement}")
    if not profile.is_continuous:
        raise MeshError("含跳跃或切口的轮廓不在数值弹性范围内", f"跳跃数: {len(profile.jumps)}")

    columns = _column_positions(profile, refinement)
    heights = profile.evaluate(columns)
    floor = max(h_min, 1e-12)
    if np.min(heights) < floor:
        raise MeshError(f"膜厚低于下限 h_min={h_min:.4g}", f"最小厚度: {float(np.min(heights)):.6g}")

    ell = profile.period
    ncol = len(columns)
    n_layers = max(2, int(math.ceil(refinement * float(np.max(heights)) / ell)))

    eta = np.linspace(0.0, 1.0, n_layers + 1)
    nodes = np.empty((ncol * (n_layers + 1), 2))
    nodes[:, 0] = np.repeat(columns, n_layers + 1)
    nodes[:, 1] = (heights[:, None] * eta[None, :]).ravel()

    def nid(j, k):
        return (j % ncol) * (n_layers + 1) + k

    elements = []
    element_xy = []
    top_elements = np.empty((ncol, 2), dtype=int)
    for j in range(ncol):
        x0 = columns[j]
        x1 = columns[j + 1] if j + 1 < ncol else columns[0] + ell
        h0, h1 = heights[j], heights[(j + 1) % ncol]
        for k in range(n_layers):
            ll = (nid(j, k), x0, eta[k] * h0)
            lr = (nid(j + 1, k), x1, eta[k] * h1)
            ur = (nid(j + 1, k + 1), x1, eta[k + 1] * h1)
            ul = (nid(j, k + 1), x0, eta[k + 1] * h0)
            if (j + k) % 2 == 0:
                tris = [(ll, lr, ur), (ll, ur, ul)]
            else:
                tris = [(ll, lr, ul), (lr, ur, ul)]
            for t in tris:
                elements.append([v[0] for v in t])
                element_xy.append([[v[1], v[2]] for v in t])
            if k == n_layers - 1:
                # 顶层两个单元都与 Γ_h 相邻
                top_elements[j] = (len(elements) - 2, len(elements) - 1)

    mesh = Mesh(profile=profile, refinement=refinement, columns=columns, n_layers=n_layers,
                nodes=nodes, elements=np.array(elements, dtype=int),
                element_xy=np.array(element_xy, dtype=float), top_elements=top_elements)

    if np.min(mesh.areas) <= 0:
        raise MeshError("出现退化单元", f"最小面积: {float(np.min(mesh.areas)):.3e}")

    logger.debug(f"网格生成完成: {ncol} 列 × {n_layers} 层, {mesh.n_elements} 个单元")
    return mesh


def column_of(mesh: Mesh, x: float) -> int:
    """返回横坐标为 x 的列号"""
    idx = int(np.argmin(np.abs(mesh.columns - (x % mesh.profile.period))))
    return idx


def profile_node_columns(mesh: Mesh) -> np.ndarray:
    """轮廓节点对应的网格列号"""
    return np.array([column_of(mesh, x) for x in mesh.profile.node_x], dtype=int)


def mesh_summary(mesh: Mesh) -> Tuple[int, int, float]:
    """(节点数, 单元数, 最大边长)"""
    return mesh.n_nodes, mesh.n_elements, mesh.max_edge_length()
