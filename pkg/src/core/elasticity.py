"""
弹性模块

在 Ω_h 上求解旋度约束的线弹性问题：失配平衡 u_h、奇异场 K、修正位移 v，
并通过典范分解 H = e0·Du_h + Dv + K 组装总应变。

旋度约束由 K 的解析构造精确满足，离散层面只需两次标准 Lamé 求解，
两者共用同一个稀疏 LU 分解。
"""

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .dislocations import DislocationMeasure, Mollifier, regularized_measure, wrap_offset
from .geometry import Profile
from .mesh import QUAD_WEIGHTS, Mesh, build_mesh

logger = logging.getLogger(__name__)

SOLVER_TOLERANCE = 1e-10
_PROBLEM_CACHE_SIZE = 16


class SolverError(Exception):
    """线性求解失败"""

    def __init__(self, message: str, residual: Optional[float] = None):
        self.message = message
        self.residual = residual
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts = [self.message]
        if self.residual is not None:
            parts.append(f"相对残差: {self.residual:.3e}")
        return " | ".join(parts)


@dataclass(frozen=True)
class LameTensor:
    """各向同性弹性张量 ℂ"""
    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.mu + self.lam > 0):
            raise ValueError(f"Lamé 系数不满足椭圆性: μ={self.mu}, λ={self.lam}")

    @property
    def W0(self) -> float:
        """平坦膜能量密度 W0 = 2μ(μ+λ)/(2μ+λ)"""
        return 2.0 * self.mu * (self.mu + self.lam) / (2.0 * self.mu + self.lam)

    @property
    def flat_strain(self) -> np.ndarray:
        """E(v0) = diag(1, -λ/(2μ+λ))"""
        return np.diag([1.0, -self.lam / (2.0 * self.mu + self.lam)])

    def voigt(self) -> np.ndarray:
        """平面应变 Voigt 矩阵，作用于 (E11, E22, 2E12)"""
        mu, lam = self.mu, self.lam
        return np.array([[2.0 * mu + lam, lam, 0.0],
                         [lam, 2.0 * mu + lam, 0.0],
                         [0.0, 0.0, mu]])

    def stress(self, E: np.ndarray) -> np.ndarray:
        """ℂE = 2μE + λ tr(E) I，E 形状 (..., 2, 2)"""
        E = np.asarray(E, dtype=float)
        trace = E[..., 0, 0] + E[..., 1, 1]
        return 2.0 * self.mu * E + self.lam * trace[..., None, None] * np.eye(2)


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def energy_density(E: np.ndarray, C: LameTensor) -> np.ndarray:
    """
    W(E) = μ|E|² + (λ/2)(tr E)²

    Args:
        E: 对称应变，形状 (..., 2, 2)
        C: 弹性张量

    Returns:
        np.ndarray: 能量密度
    """
    E = np.asarray(E, dtype=float)
    trace = E[..., 0, 0] + E[..., 1, 1]
    return C.mu * np.sum(E * E, axis=(-2, -1)) + 0.5 * C.lam * trace ** 2


class ElasticProblem:
    """
    固定网格与弹性张量上的 Lamé 问题

    自由度为非基底节点的两个位移分量；刚度矩阵的 LU 分解在首次求解时建立并复用。
    """

    def __init__(self, mesh: Mesh, lame: LameTensor):
        self.mesh = mesh
        self.lame = lame
        self._lock = threading.Lock()
        self._lu = None

        substrate = np.zeros(mesh.n_nodes, dtype=bool)
        substrate[mesh.substrate_nodes] = True
        free_nodes = np.flatnonzero(~substrate)
        self.free_dofs = np.sort(np.concatenate([2 * free_nodes, 2 * free_nodes + 1]))

    @cached_property
    def strain_operator(self) -> np.ndarray:
        """单元 B 矩阵，形状 (ne, 3, 6)，把单元位移映为 (E11, E22, 2E12)"""
        g = self.mesh.gradients
        ne = self.mesh.n_elements
        B = np.zeros((ne, 3, 6))
        B[:, 0, 0::2] = g[:, :, 0]
        B[:, 1, 1::2] = g[:, :, 1]
        B[:, 2, 0::2] = g[:, :, 1]
        B[:, 2, 1::2] = g[:, :, 0]
        return B

    @cached_property
    def element_dofs(self) -> np.ndarray:
        el = self.mesh.elements
        dofs = np.empty((len(el), 6), dtype=int)
        dofs[:, 0::2] = 2 * el
        dofs[:, 1::2] = 2 * el + 1
        return dofs

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """全局刚度矩阵 ∫ ε(φ)ᵀ D ε(ψ)"""
        B = self.strain_operator
        D = self.lame.voigt()
        ke = np.einsum('e,eki,kl,elj->eij', self.mesh.areas, B, D, B)
        dofs = self.element_dofs
        rows = np.repeat(dofs, 6, axis=1).ravel()
        cols = np.tile(dofs, (1, 6)).ravel()
        n = 2 * self.mesh.n_nodes
        return sparse.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def reduced_stiffness(self) -> sparse.csc_matrix:
        free = self.free_dofs
        return self.stiffness[free][:, free].tocsc()

    def assemble_load(self, voigt_strain: np.ndarray) -> np.ndarray:
        """
        载荷 -∫ ℂS : E(φ)，S 以 Voigt 形式给出

        Args:
            voigt_strain: 单元常数 (ne, 3) 或逐求积点 (ne, nq, 3) 的 (S11, S22, S12+S21)

        Returns:
            np.ndarray: 全局载荷向量
        """
        B = self.strain_operator
        D = self.lame.voigt()
        if voigt_strain.ndim == 2:
            mean_strain = voigt_strain
        else:
            mean_strain = np.einsum('q,eqk->ek', QUAD_WEIGHTS, voigt_strain)
        local = -np.einsum('e,eki,kl,el->ei', self.mesh.areas, B, D, mean_strain)
        load = np.zeros(2 * self.mesh.n_nodes)
        np.add.at(load, self.element_dofs.ravel(), local.ravel())
        return load

    def solve(self, load: np.ndarray) -> np.ndarray:
        """
        在自由度上求解 K_ff x = f_f，基底自由度为零

        Raises:
            SolverError: 相对残差超过 SOLVER_TOLERANCE
        """
        free = self.free_dofs
        rhs = load[free]
        solution = np.zeros(2 * self.mesh.n_nodes)
        norm = np.linalg.norm(rhs)
        if norm == 0.0:
            return solution.reshape(-1, 2)

        A = self.reduced_stiffness
        with self._lock:
            if self._lu is None:
                try:
                    self._lu = splinalg.splu(A)
                except RuntimeError as e:
                    raise SolverError(f"刚度矩阵分解失败: {e}")
            x = self._lu.solve(rhs)

        residual = float(np.linalg.norm(A @ x - rhs) / norm)
        if not np.isfinite(residual) or residual > SOLVER_TOLERANCE:
            logger.error(f"线性求解残差过大: {residual:.3e}")
            raise SolverError("线性求解未达到精度", residual)
        logger.debug(f"线性求解完成: 相对残差 {residual:.3e}")
        solution[free] = x
        return solution.reshape(-1, 2)

    @cached_property
    def mismatch_field(self) -> 'DisplacementField':
        """失配平衡解（同一问题上只求解一次）"""
        mesh = self.mesh
        unit = np.tile([1.0, 0.0, 0.0], (mesh.n_elements, 1))
        w = self.solve(self.assemble_load(unit))
        values = w.copy()
        values[:, 0] += mesh.nodes[:, 0]
        gradient = mesh.element_gradient(w)
        gradient[:, 0, 0] += 1.0
        return DisplacementField(mesh=mesh, values=values, gradient=gradient)


_problem_cache: "OrderedDict[Tuple, ElasticProblem]" = OrderedDict()
_cache_lock = threading.Lock()


def get_problem(profile: Profile, lame: LameTensor, refinement: int, h_min: float = 0.0) -> ElasticProblem:
    """
    按 (轮廓, 弹性张量, 细分) 缓存的 ElasticProblem

    Raises:
        MeshError: 网格生成失败
    """
    key = (profile, lame, refinement, h_min)
    with _cache_lock:
        problem = _problem_cache.get(key)
        if problem is not None:
            _problem_cache.move_to_end(key)
            return problem
    problem = ElasticProblem(build_mesh(profile, refinement, h_min), lame)
    with _cache_lock:
        _problem_cache[key] = problem
        while len(_problem_cache) > _PROBLEM_CACHE_SIZE:
            _problem_cache.popitem(last=False)
    return problem


def clear_problem_cache() -> None:
    with _cache_lock:
        _problem_cache.clear()


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """节点位移场及其逐单元梯度"""
    mesh: Mesh
    values: np.ndarray
    gradient: np.ndarray


def solve_mismatch(p: Profile, C: LameTensor, refinement: int = 32, h_min: float = 0.0) -> DisplacementField:
    """
    失配平衡 u_h：div ℂE(u) = 0，Γ_h 上零应力，u(x,0) = (x,0)，u - (x,0) 周期

    离散形式为 u_h = (x, 0) + w，w 在基底上为零且满足 a(w, φ) = -a((x,0), φ)。

    Args:
        p: 连续轮廓
        C: 弹性张量
        refinement: 网格细分
        h_min: 最小膜厚

    Returns:
        DisplacementField: u_h 的节点值（第一分量含 x）与梯度
    """
    return get_problem(p, C, refinement, h_min).mismatch_field


def singular_field(sigma: DislocationMeasure, points: np.ndarray) -> np.ndarray:
    """
    奇异场 K，列为 (k_l, 0)：k_l(x,y) = -Σ_i (b_i·e_l) ∫₀^y ρ^#_{r0}(x - x_i, t - y_i) dt

    Args:
        sigma: 位错测度
        points: 求值点，形状 (..., 2)

    Returns:
        np.ndarray: 形状 (..., 2, 2)
    """
    points = np.asarray(points, dtype=float)
    K = np.zeros(points.shape[:-1] + (2, 2))
    if sigma.is_empty:
        return K
    moll = Mollifier(sigma.r0)
    x, y = points[..., 0], points[..., 1]
    for entry, b in zip(sigma.entries, sigma.burgers_vectors()):
        xi, yi = entry.center
        dx = wrap_offset(x - xi, sigma.period)
        column = moll.column_integral(dx, y - yi) - moll.column_integral(dx, np.full_like(y, -yi))
        K[..., 0, 0] -= b[0] * column
        K[..., 1, 0] -= b[1] * column
    return K


def _voigt_of(A: np.ndarray) -> np.ndarray:
    """(A_sym11, A_sym22, A12 + A21)"""
    return np.stack([A[..., 0, 0], A[..., 1, 1], A[..., 0, 1] + A[..., 1, 0]], axis=-1)


def solve_corrector(p: Profile, sigma: DislocationMeasure, C: LameTensor, refinement: int = 32,
                    h_min: float = 0.0, K: Optional[np.ndarray] = None) -> DisplacementField:
    """
    修正位移 v：a(v, φ) = -∫ ℂK_sym : E(φ)，v 在基底上为零、周期

    Args:
        p: 连续轮廓
        sigma: 位错测度
        C: 弹性张量
        refinement: 网格细分
        h_min: 最小膜厚
        K: 已在求积点上算好的奇异场（可选）

    Returns:
        DisplacementField: v 的节点值与梯度
    """
    problem = get_problem(p, C, refinement, h_min)
    mesh = problem.mesh
    if sigma.is_empty:
        zeros = np.zeros((mesh.n_nodes, 2))
        return DisplacementField(mesh=mesh, values=zeros, gradient=np.zeros((mesh.n_elements, 2, 2)))
    if K is None:
        K = singular_field(sigma, mesh.quadrature_points)
    v = problem.solve(problem.assemble_load(_voigt_of(K)))
    return DisplacementField(mesh=mesh, values=v, gradient=mesh.element_gradient(v))


@dataclass(frozen=True)
class ElasticEnergy:
    """弹性能分解"""
    mismatch: float
    cross: float
    self_energy: float

    @property
    def total(self) -> float:
        return self.mismatch + self.cross + self.self_energy


@dataclass(frozen=True, eq=False)
class ElasticState:
    """求解完成的弹性状态（不可变）"""
    profile: Profile
    sigma: DislocationMeasure
    e0: float
    lame: LameTensor
    mesh: Mesh
    mismatch_field: DisplacementField
    corrector: DisplacementField
    K: np.ndarray
    energy: ElasticEnergy

    @cached_property
    def H(self) -> np.ndarray:
        """求积点上的总应变 H = e0·Du_h + Dv + K，形状 (ne, 3, 2, 2)"""
        grad = self.e0 * self.mismatch_field.gradient + self.corrector.gradient
        return grad[:, None, :, :] + self.K

    @cached_property
    def element_density(self) -> np.ndarray:
        """逐单元平均能量密度 W(H_sym)"""
        W = energy_density(sym(self.H), self.lame)
        return W @ QUAD_WEIGHTS

    def graph_density(self) -> np.ndarray:
        """Γ_h 各列节点处的 W(H_sym)（相邻顶层单元的平均）"""
        per_column = self.element_density[self.mesh.top_elements].mean(axis=1)
        # 节点 j 处于列单元 j-1 与 j 之间
        return 0.5 * (per_column + np.roll(per_column, 1))

    @property
    def elastic_energy(self) -> float:
        return self.energy.total


def assemble_total(p: Profile, sigma: DislocationMeasure, e0: float, C: LameTensor, refinement: int = 32,
                   h_min: float = 0.0) -> ElasticState:
    """
    组装 H_{h,σ} 与能量分解

    mismatch = e0²∫W(E(u_h))，cross = e0∫ℂE(u_h):(Dv+K)_sym，self = ∫W((Dv+K)_sym)

    Args:
        p: 连续轮廓
        sigma: 位错测度
        e0: 失配应变
        C: 弹性张量
        refinement: 网格细分
        h_min: 最小膜厚

    Returns:
        ElasticState: 弹性状态

    Raises:
        MeshError: 网格生成失败
        SolverError: 线性求解失败
    """
    u = solve_mismatch(p, C, refinement, h_min)
    mesh = u.mesh
    K = singular_field(sigma, mesh.quadrature_points)
    v = solve_corrector(p, sigma, C, refinement, h_min, K=K)

    areas = mesh.areas
    Eu = sym(u.gradient)
    mismatch = e0 ** 2 * float(np.sum(areas * energy_density(Eu, C)))

    defect = sym(v.gradient[:, None, :, :] + K)
    stress_u = C.stress(Eu)
    cross_q = np.einsum('eij,eqij->eq', stress_u, defect)
    cross = e0 * float(np.sum(areas * (cross_q @ QUAD_WEIGHTS)))
    self_energy = float(np.sum(areas * (energy_density(defect, C) @ QUAD_WEIGHTS)))

    energy = ElasticEnergy(mismatch=mismatch, cross=cross, self_energy=self_energy)
    logger.debug(f"弹性组装完成: mismatch={mismatch:.10g}, cross={cross:.10g}, self={self_energy:.10g}")
    return ElasticState(profile=p, sigma=sigma, e0=e0, lame=C, mesh=mesh, mismatch_field=u, corrector=v,
                        K=K, energy=energy)


def first_variation(state: ElasticState, w: np.ndarray) -> float:
    """
    ∫ ℂH_sym : E(w)，w 为在基底上为零的周期节点场

    离散 Euler-Lagrange 方程要求该值在求解精度内为零。
    """
    mesh = state.mesh
    Ew = sym(mesh.element_gradient(w))
    stress = state.lame.stress(sym(state.H))
    integrand = np.einsum('eqij,eij->eq', stress, Ew) @ QUAD_WEIGHTS
    return float(np.sum(mesh.areas * integrand))


def curl_residual(state: ElasticState) -> float:
    """
    ‖curl_h H - (σ*ρ_{r0})^#‖_{L²}

    K 以节点插值后取逐单元旋度，梯度部分的离散旋度为零；
    curl H = (∂x H12 - ∂y H11, ∂x H22 - ∂y H21)。
    """
    mesh = state.mesh
    sigma = state.sigma
    nodal_K = singular_field(sigma, mesh.nodes)
    k_nodal = nodal_K[:, :, 0]
    grad_k = mesh.element_gradient(k_nodal)
    curl = -grad_k[:, :, 1]
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    target = regularized_measure(sigma, (cx, cy))
    diff = curl - target
    return float(np.sqrt(np.sum(mesh.areas * np.sum(diff * diff, axis=1))))


def field_table(state: ElasticState) -> np.ndarray:
    """
    逐单元导出表：(x, y, ux, uy, H11, H12, H21, H22, W)，位置与位移取单元重心
    """
    mesh = state.mesh
    # 周期部分在节点上平均，(x, 0) 部分直接取重心横坐标
    periodic = state.e0 * state.mismatch_field.values + state.corrector.values
    periodic[:, 0] -= state.e0 * mesh.nodes[:, 0]
    u_centroid = periodic[mesh.elements].mean(axis=1)
    u_centroid[:, 0] += state.e0 * mesh.centroids[:, 0]
    H_centroid = np.einsum('q,eqij->eij', QUAD_WEIGHTS, state.H)
    return np.column_stack([mesh.centroids, u_centroid, H_centroid.reshape(-1, 4), state.element_density])
