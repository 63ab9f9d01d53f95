"""
epifilm 核心模块

包含外延应变薄膜模型的核心功能模块：
- 周期轮廓与薄膜区域 (geometry)
- Burgers 格与位错测度 (dislocations)
- 三角网格 (mesh)
- 弹性求解 (elasticity)
- 能量泛函 (energy)
- 交替极小化 (optimizer)
- 角点奇异指数 (corner)
- 数值校验 (validation)
- 配置管理 (config)
- 结果写出 (reporter)
- 实验运行 (runner)
"""

from .config import ConfigError, ConfigManager, ExperimentSpec, ModelParams, ScheduleParams
from .geometry import Profile, ProfileError, PlacementError
from .dislocations import BurgersLattice, DislocationMeasure, LatticeError
from .mesh import MeshError, build_mesh
from .elasticity import LameTensor, SolverError, assemble_total
from .energy import EnergyBreakdown, total_energy
from .optimizer import Configuration, MinimizationResult, alternate_minimize
from .corner import CornerReport, corner_roots, verify_strip_free
from .reporter import ReportGenerator
from .runner import ExperimentRunner, RunOutcome, run_experiment

__all__ = [
    'ConfigError', 'ConfigManager', 'ExperimentSpec', 'ModelParams', 'ScheduleParams',
    'Profile', 'ProfileError', 'PlacementError',
    'BurgersLattice', 'DislocationMeasure', 'LatticeError',
    'MeshError', 'build_mesh',
    'LameTensor', 'SolverError', 'assemble_total',
    'EnergyBreakdown', 'total_energy',
    'Configuration', 'MinimizationResult', 'alternate_minimize',
    'CornerReport', 'corner_roots', 'verify_strip_free',
    'ReportGenerator',
    'ExperimentRunner', 'RunOutcome', 'run_experiment',
]
