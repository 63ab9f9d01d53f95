"""
配置管理模块

提供模型参数、优化计划、网格参数与实验描述的数据结构，
以及配置文件读写、配置验证等功能。
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence

from .dislocations import BurgersLattice, DislocationEntry, DislocationMeasure
from .elasticity import LameTensor
from .geometry import DEFAULT_NODE_COUNT, Profile
from ..parsers.base import ParseError
from ..parsers.factory import ParserFactory
from ..utils.file_utils import read_file_safe

logger = logging.getLogger(__name__)

VALID_MODES = ['solve', 'minimize', 'nucleate', 'sink-study', 'gamma-sweep', 'corner', 'validate']
VALID_OBJECTIVES = ['constrained', 'penalized', 'one_sided']
PROFILE_KINDS = ['flat', 'sinusoid', 'nodes']


class ConfigError(Exception):
    """配置语义校验失败"""

    def __init__(self, messages: Sequence[str], fields: Sequence[str] = ()):
        self.messages = list(messages)
        self.fields = list(fields)
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts = list(self.messages)
        if self.fields:
            parts.append(f"字段: {', '.join(self.fields)}")
        return " | ".join(parts)


@dataclass
class ModelParams:
    """模型参数"""
    # 弹性
    mu: float = 1.0
    lam: float = 1.0
    # 表面张力
    gamma: float = 1.0
    # 失配应变（必填）
    e0: Optional[float] = None
    # 位错核心半径
    r0: float = 0.1
    period: float = 1.0
    # 目标体积
    d: float = 1.0
    # 形核常数
    c_o: float = 1.0
    # 体积罚参数 Λ，None 表示 1.1·e0²W0
    penalty: Optional[float] = None
    # 锚定罚参数 β
    beta: float = 0.0

    @property
    def lame(self) -> LameTensor:
        return LameTensor(self.mu, self.lam)

    @property
    def W0(self) -> float:
        return 2.0 * self.mu * (self.mu + self.lam) / (2.0 * self.mu + self.lam)

    @property
    def mismatch(self) -> float:
        return 0.0 if self.e0 is None else float(self.e0)

    @property
    def penalty_weight(self) -> float:
        """Λ；未给出时取 1.1·e0²W0"""
        if self.penalty is not None:
            return float(self.penalty)
        return 1.1 * self.mismatch ** 2 * self.W0

    @property
    def h_min(self) -> float:
        """网格允许的最小膜厚 r0/4"""
        return 0.25 * self.r0

    def with_changes(self, **changes) -> 'ModelParams':
        return replace(self, **changes)

    def validate(self) -> List[str]:
        """
        验证参数不变量

        Returns:
            List[str]: 验证错误信息列表，空列表表示验证通过
        """
        errors = []
        if self.e0 is None:
            errors.append("缺少必填参数 model.e0")
        elif not math.isfinite(self.e0):
            errors.append(f"model.e0 必须是有限数: {self.e0}")
        if not (self.mu > 0 and self.mu + self.lam > 0):
            errors.append(f"Lamé 系数不满足椭圆性 μ>0, μ+λ>0: μ={self.mu}, λ={self.lam}")
        if not self.gamma > 0:
            errors.append(f"model.gamma 必须为正: {self.gamma}")
        if not self.period > 0:
            errors.append(f"model.period 必须为正: {self.period}")
        elif not 0 < self.r0 < self.period / 2:
            errors.append(f"model.r0 必须在 (0, ℓ/2) 内: {self.r0}")
        if not self.d > 0:
            errors.append(f"model.d 必须为正: {self.d}")
        if self.c_o < 0:
            errors.append(f"model.c_o 不能为负: {self.c_o}")
        if self.penalty is not None and not self.penalty > 0:
            errors.append(f"model.penalty 必须为正: {self.penalty}")
        if self.beta < 0:
            errors.append(f"model.beta 不能为负: {self.beta}")
        return errors


@dataclass
class ScheduleParams:
    """优化计划"""
    # 目标泛函：constrained | penalized | one_sided
    objective: str = "constrained"
    nucleation: bool = False

    # 每轮的步数
    profile_steps: int = 1
    dislocation_steps: int = 1

    # 轮廓步：预条件步长与单步最大法向位移
    profile_step: float = 1.0
    profile_max_move: float = 0.05

    # 位错步：有限差分步长（默认 r0/100）与初始移动距离（默认 r0）
    fd_step: Optional[float] = None
    dislocation_move: Optional[float] = None

    # 线搜索
    shrink: float = 0.5
    max_backtracks: int = 12

    # 形核候选网格
    nucleation_spacing: float = 0.1
    nucleation_bottom_only: bool = False
    max_nucleations: int = 8

    # 停止条件
    energy_tol: float = 1e-9
    el_tol: float = 1e-2
    max_sweeps: int = 50

    max_threads: int = 4

    # 量化搜索空间（见 optimizer.DiscreteSearchSpace），None 表示连续下降
    lattice: Optional[Any] = None

    def fd_step_for(self, r0: float) -> float:
        return self.fd_step if self.fd_step is not None else r0 / 100.0

    def dislocation_move_for(self, r0: float) -> float:
        return self.dislocation_move if self.dislocation_move is not None else r0

    def with_changes(self, **changes) -> 'ScheduleParams':
        return replace(self, **changes)

    def validate(self, r0: float) -> List[str]:
        errors = []
        if self.objective not in VALID_OBJECTIVES:
            errors.append(f"不支持的目标泛函: {self.objective}, 支持的类型: {VALID_OBJECTIVES}")
        for name in ('profile_step', 'profile_max_move', 'nucleation_spacing', 'energy_tol', 'el_tol'):
            if not getattr(self, name) > 0:
                errors.append(f"schedule.{name} 必须为正: {getattr(self, name)}")
        if not 0 < self.shrink < 1:
            errors.append(f"schedule.shrink 必须在 (0, 1) 内: {self.shrink}")
        for name in ('profile_steps', 'dislocation_steps', 'max_nucleations'):
            if getattr(self, name) < 0:
                errors.append(f"schedule.{name} 不能为负: {getattr(self, name)}")
        for name in ('max_backtracks', 'max_sweeps'):
            if getattr(self, name) < 1:
                errors.append(f"schedule.{name} 必须大于0: {getattr(self, name)}")
        if self.max_threads < 1:
            errors.append("最大线程数必须大于0")
        fd = self.fd_step_for(r0)
        if not 0 < fd < r0 / 10:
            errors.append(f"有限差分步长必须在 (0, r0/10) 内: {fd}")
        if not self.dislocation_move_for(r0) > 0:
            errors.append("schedule.dislocation_move 必须为正")
        return errors


@dataclass
class MeshParams:
    """网格参数"""
    refinement: int = 32
    node_count: int = DEFAULT_NODE_COUNT

    def validate(self) -> List[str]:
        errors = []
        if self.refinement < 2:
            errors.append(f"mesh.refinement 必须至少为 2: {self.refinement}")
        if self.node_count < 3:
            errors.append(f"mesh.node_count 必须至少为 3: {self.node_count}")
        return errors


@dataclass
class ExperimentOptions:
    """各运行模式的附加参数"""
    # nucleate：e0 扫描网格与阈值二分精度
    e0_grid: List[float] = field(default_factory=lambda: [float(k) for k in range(11)])
    threshold_tol: float = 1e-3
    # gamma-sweep
    gamma_values: List[float] = field(default_factory=lambda: [1.0, 10.0, 100.0])
    # sink-study：最多迭代步数
    sink_steps: int = 100
    # corner：角度（以 π 为单位）
    omegas: List[float] = field(default_factory=lambda: [2.0, 1.1, 1.3, 1.5, 1.7, 1.9])
    # validate：平坦膜与交叉项校验所用细分
    validate_refinement: int = 64
    cross_refinement: int = 128


@dataclass
class ExperimentSpec:
    """完整的实验描述"""
    mode: str = "solve"
    model: ModelParams = field(default_factory=ModelParams)
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    mesh: MeshParams = field(default_factory=MeshParams)
    profile: Optional[Profile] = None
    sigma: Optional[DislocationMeasure] = None
    output_dir: str = "./epifilm-output"
    options: ExperimentOptions = field(default_factory=ExperimentOptions)

    def __post_init__(self):
        self.output_dir = os.path.abspath(self.output_dir)

    def initial_profile(self) -> Profile:
        if self.profile is not None:
            return self.profile
        return Profile.flat(self.model.period, self.model.d / self.model.period, self.mesh.node_count)

    def initial_sigma(self) -> DislocationMeasure:
        if self.sigma is not None:
            return self.sigma
        return DislocationMeasure.empty(default_lattice(), self.model.r0, self.model.period)

    def parameter_echo(self) -> Dict[str, Any]:
        """完整参数回显（写入 manifest）"""
        schedule = asdict(self.schedule)
        schedule['lattice'] = None if self.schedule.lattice is None else repr(self.schedule.lattice)
        return {'mode': self.mode, 'model': asdict(self.model), 'schedule': schedule, 'mesh': asdict(self.mesh),
                'options': asdict(self.options), 'output_dir': self.output_dir,
                'profile': self.initial_profile().to_dict(), 'dislocations': self.initial_sigma().to_dict()}


def default_lattice() -> BurgersLattice:
    return BurgersLattice(((1.0, 0.0), (0.0, 1.0)))


# ----------------------------------------------------------------------
# 值转换
# ----------------------------------------------------------------------

def _as_float(value: Any) -> float:
    return float(value)


def _as_int(value: Any) -> int:
    return int(float(value))


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"无法解析为布尔值: {value}")


def _as_optional_float(value: Any) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ('', 'none', 'null')):
        return None
    return float(value)


def _as_float_list(value: Any) -> List[float]:
    """'1, 2, 3' 或 [1, 2, 3]"""
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if not text:
        return []
    return [float(v) for v in text.replace(';', ',').split(',') if v.strip()]


def _as_rows(value: Any) -> List[List[float]]:
    """'1,0; 0,1' 或 [[1, 0], [0, 1]]"""
    if isinstance(value, (list, tuple)):
        return [[float(v) for v in row] for row in value]
    text = str(value).strip()
    if not text:
        return []
    return [[float(v) for v in row.split(',') if v.strip()] for row in text.split(';') if row.strip()]


_MODEL_KEYS = {f.name: (_as_optional_float if f.name in ('e0', 'penalty') else _as_float)
               for f in fields(ModelParams)}
_SCHEDULE_KEYS = {
    'objective': str, 'nucleation': _as_bool, 'profile_steps': _as_int, 'dislocation_steps': _as_int,
    'profile_step': _as_float, 'profile_max_move': _as_float, 'fd_step': _as_optional_float,
    'dislocation_move': _as_optional_float, 'shrink': _as_float, 'max_backtracks': _as_int,
    'nucleation_spacing': _as_float, 'nucleation_bottom_only': _as_bool, 'max_nucleations': _as_int,
    'energy_tol': _as_float, 'el_tol': _as_float, 'max_sweeps': _as_int, 'max_threads': _as_int,
}
_MESH_KEYS = {'refinement': _as_int, 'node_count': _as_int}
_OPTION_KEYS = {
    'e0_grid': _as_float_list, 'threshold_tol': _as_float, 'gamma_values': _as_float_list,
    'sink_steps': _as_int, 'omegas': _as_float_list, 'validate_refinement': _as_int,
    'cross_refinement': _as_int,
}
_PROFILE_KEYS = {'kind': str, 'height': _as_float, 'amplitude': _as_float, 'modes': _as_int,
                 'nodes': _as_rows, 'file': str}
_DISLOCATION_KEYS = {'fundamentals': _as_rows, 'centers': _as_rows, 'coeffs': _as_rows, 'file': str}


class ConfigManager:
    """配置管理器"""

    DEFAULT_CONFIG_FILE = "epifilm.cfg"

    def __init__(self, config_file: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_file: 配置文件路径，默认为 DEFAULT_CONFIG_FILE
        """
        self.config_file = config_file or self.DEFAULT_CONFIG_FILE
        self.reset_to_default()

    def reset_to_default(self) -> None:
        """重置为默认配置"""
        self.mode = "solve"
        self.output_dir = "./epifilm-output"
        self.model = ModelParams()
        self.schedule = ScheduleParams()
        self.mesh = MeshParams()
        self.options = ExperimentOptions()
        self.profile_section: Dict[str, Any] = {}
        self.dislocation_section: Dict[str, Any] = {}
        self._base_dir = os.getcwd()

    def load_config(self, config_file: Optional[str] = None) -> ExperimentSpec:
        """
        加载配置文件

        Args:
            config_file: 配置文件路径

        Returns:
            ExperimentSpec: 实验描述

        Raises:
            ParseError: 文件不存在、类型不支持或内容格式错误
            ConfigError: 语义校验失败
        """
        self.load_config_data(config_file)
        return self.get_config()

    def load_config_data(self, config_file: Optional[str] = None) -> None:
        """
        读取配置文件并合并，不做语义校验（便于随后应用覆盖项）

        Raises:
            ParseError: 文件不存在、类型不支持或内容格式错误
            ConfigError: 取值无法转换
        """
        if config_file:
            self.config_file = config_file

        if not os.path.exists(self.config_file):
            logger.error(f"配置文件不存在: {self.config_file}")
            raise ParseError("配置文件不存在", self.config_file)

        parser = ParserFactory.get_parser_by_file(self.config_file)
        if parser is None:
            raise ParseError("不支持的配置文件类型", self.config_file)

        flat = parser.parse(self.config_file)
        self._base_dir = os.path.dirname(os.path.abspath(self.config_file))
        self._merge_config(flat)
        logger.info(f"成功加载配置文件: {self.config_file}")

    def save_config(self, config_file: Optional[str] = None) -> bool:
        """
        保存配置到文件（格式由扩展名决定）

        Args:
            config_file: 配置文件路径

        Returns:
            bool: 保存是否成功
        """
        if config_file:
            self.config_file = config_file

        parser = ParserFactory.get_parser(os.path.splitext(self.config_file)[1] or '.cfg')
        if parser is None:
            logger.error(f"不支持的配置文件类型: {self.config_file}")
            return False

        try:
            config_dir = os.path.dirname(self.config_file)
            if config_dir and not os.path.exists(config_dir):
                os.makedirs(config_dir)

            with open(self.config_file, 'w', encoding='utf-8') as f:
                f.write(parser.dump(self._config_to_dict()))

            logger.info(f"配置已保存到: {self.config_file}")
            return True

        except OSError as e:
            logger.error(f"保存配置文件失败: {e}")
            return False

    def validate_config(self) -> List[str]:
        """
        验证配置有效性

        Returns:
            List[str]: 验证错误信息列表，空列表表示验证通过
        """
        errors = []

        if self.mode not in VALID_MODES:
            errors.append(f"不支持的运行模式: {self.mode}, 支持的模式: {VALID_MODES}")

        model_errors = self.model.validate()
        if self.mode == 'corner':
            # 角点指数与弹性参数无关
            model_errors = [e for e in model_errors if 'model.e0' not in e]
        errors.extend(model_errors)
        errors.extend(self.schedule.validate(self.model.r0) if self.model.r0 > 0 else [])
        errors.extend(self.mesh.validate())

        kind = self.profile_section.get('kind', 'flat')
        if kind not in PROFILE_KINDS:
            errors.append(f"不支持的轮廓类型: {kind}, 支持的类型: {PROFILE_KINDS}")
        if kind == 'nodes' and 'nodes' not in self.profile_section and 'file' not in self.profile_section:
            errors.append("profile.kind = nodes 需要 profile.nodes 或 profile.file")

        centers = self.dislocation_section.get('centers', [])
        coeffs = self.dislocation_section.get('coeffs', [])
        if len(centers) != len(coeffs):
            errors.append(f"dislocations.centers 与 dislocations.coeffs 数量不一致: {len(centers)} != {len(coeffs)}")
        if any(len(c) != 2 for c in centers):
            errors.append("dislocations.centers 的每一项必须是 x,y")

        if self.options.threshold_tol <= 0:
            errors.append("experiment.threshold_tol 必须为正")
        if any(not 0 < w <= 2 for w in self.options.omegas):
            errors.append("experiment.omegas 必须在 (0, 2] 内（以 π 为单位）")

        return errors

    def get_config(self) -> ExperimentSpec:
        """
        构造实验描述

        Raises:
            ConfigError: 校验失败或轮廓/位错数据无法构造
        """
        errors = self.validate_config()
        if errors:
            for message in errors:
                logger.error(f"配置错误: {message}")
            raise ConfigError(errors, [e.split()[1] for e in errors if e.startswith('缺少必填参数')])

        try:
            profile = self._build_profile()
            sigma = self._build_sigma()
        except (ValueError, KeyError) as e:
            raise ConfigError([f"轮廓或位错数据无效: {e}"])

        return ExperimentSpec(mode=self.mode, model=replace(self.model), schedule=replace(self.schedule),
                              mesh=replace(self.mesh), profile=profile, sigma=sigma, output_dir=self.output_dir,
                              options=replace(self.options))

    def update_config(self, **kwargs) -> None:
        """
        更新配置

        Args:
            **kwargs: 点分隔键到值的映射，例如 **{'model.e0': 4.0}
        """
        self._merge_config(kwargs)

    def _merge_config(self, config_data: Dict[str, Any]) -> None:
        """
        将扁平配置数据合并到当前配置

        Args:
            config_data: 点分隔键的配置字典
        """
        sections = {
            'model': (self.model, _MODEL_KEYS),
            'schedule': (self.schedule, _SCHEDULE_KEYS),
            'mesh': (self.mesh, _MESH_KEYS),
            'experiment': (self.options, _OPTION_KEYS),
        }
        for key, value in config_data.items():
            section, _, name = key.partition('.')
            try:
                if key == 'experiment.mode':
                    self.mode = str(value).strip()
                elif key == 'experiment.output':
                    self.output_dir = str(value).strip()
                elif section in sections and name in sections[section][1]:
                    target, converters = sections[section]
                    setattr(target, name, converters[name](value))
                elif section == 'profile' and name in _PROFILE_KEYS:
                    self.profile_section[name] = _PROFILE_KEYS[name](value)
                elif section == 'dislocations' and name in _DISLOCATION_KEYS:
                    self.dislocation_section[name] = _DISLOCATION_KEYS[name](value)
                else:
                    logger.warning(f"忽略未知配置项: {key}")
            except (TypeError, ValueError) as e:
                raise ConfigError([f"配置项取值无效: {key} = {value!r} ({e})"], [key])

    def _resolve_path(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self._base_dir, path)

    def _read_json_file(self, path: str) -> str:
        content, _ = read_file_safe(self._resolve_path(path))
        if content is None:
            raise ConfigError([f"无法读取文件: {path}"])
        return content

    def _build_profile(self) -> Profile:
        section = self.profile_section
        ell = self.model.period
        if 'file' in section:
            return Profile.from_json(self._read_json_file(section['file']))
        kind = section.get('kind', 'flat')
        height = section.get('height', self.model.d / ell)
        n = self.mesh.node_count
        if kind == 'sinusoid':
            return Profile.sinusoid(ell, height, section.get('amplitude', 0.0), section.get('modes', 1), n)
        if kind == 'nodes':
            return Profile(period=ell, nodes=tuple(tuple(row) for row in section['nodes']))
        return Profile.flat(ell, height, n)

    def _build_sigma(self) -> DislocationMeasure:
        section = self.dislocation_section
        if 'file' in section:
            return DislocationMeasure.from_json(self._read_json_file(section['file']))
        fundamentals = section.get('fundamentals')
        lattice = BurgersLattice(tuple(tuple(b) for b in fundamentals)) if fundamentals else default_lattice()
        entries = tuple(DislocationEntry((c[0], c[1]), tuple(int(m) for m in coeffs))
                        for c, coeffs in zip(section.get('centers', []), section.get('coeffs', [])))
        return DislocationMeasure(lattice=lattice, r0=self.model.r0, entries=entries, period=self.model.period)

    def _config_to_dict(self) -> Dict[str, Any]:
        """
        将配置转换为点分隔键的扁平字典

        Returns:
            Dict[str, Any]: 配置字典
        """
        data: Dict[str, Any] = {'experiment.mode': self.mode, 'experiment.output': self.output_dir}
        for prefix, obj in (('model', self.model), ('mesh', self.mesh), ('experiment', self.options)):
            for key, value in asdict(obj).items():
                if value is not None:
                    data[f"{prefix}.{key}"] = value
        for key, value in asdict(self.schedule).items():
            if value is not None and key != 'lattice':
                data[f"schedule.{key}"] = value
        for key, value in self.profile_section.items():
            data[f"profile.{key}"] = value
        for key, value in self.dislocation_section.items():
            data[f"dislocations.{key}"] = value
        return data


# 全局配置管理器实例
config_manager = ConfigManager()


def get_config() -> ExperimentSpec:
    """获取全局配置"""
    return config_manager.get_config()


def load_config(config_file: Optional[str] = None) -> ExperimentSpec:
    """加载配置文件"""
    return config_manager.load_config(config_file)


def save_config(config_file: Optional[str] = None) -> bool:
    """保存配置文件"""
    return config_manager.save_config(config_file)

