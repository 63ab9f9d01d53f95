"""
epifilm 命令行入口

用法: epifilm <mode> --config <path> [--out <dir>] [--refine <n>] [--set key=value ...]

退出码: 0 成功, 1 数值失败, 2 配置错误, 3 校验失败
"""

import os
import sys
import logging
import argparse
from typing import Dict, List, Optional

import numpy as np

# 添加src目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.core.config import VALID_MODES, ConfigError, ConfigManager
from src.core.dislocations import LatticeError
from src.core.elasticity import SolverError
from src.core.energy import StateMismatchError, VolumeConstraintError
from src.core.geometry import PlacementError, ProfileError
from src.core.mesh import MeshError
from src.core.runner import EXIT_CONFIG_ERROR, EXIT_NUMERIC_FAILURE, ExperimentRunner
from src.core.validation import SpaceTooLargeError
from src.parsers.base import ParseError

logger = logging.getLogger(__name__)

NUMERIC_ERRORS = (MeshError, SolverError, ProfileError, PlacementError, LatticeError, StateMismatchError,
                  VolumeConstraintError, SpaceTooLargeError, FloatingPointError, np.linalg.LinAlgError,
                  RuntimeError, OSError)


def setup_logging(level: str = "INFO") -> None:
    """设置日志"""
    log_level = getattr(logging, level.upper(), logging.INFO)

    formatter = logging.Formatter(
        fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(formatter)

    logging.basicConfig(
        level=log_level,
        handlers=[handler],
        force=True
    )


def parse_overrides(items: List[str]) -> Dict[str, str]:
    """
    解析 --set key=value 覆盖项

    Raises:
        ConfigError: 覆盖项缺少 '='
    """
    overrides = {}
    for item in items:
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise ConfigError([f"覆盖项格式应为 key=value: {item!r}"], [item])
        overrides[key.strip()] = value.strip()
    return overrides


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epifilm",
        description="epifilm - 外延应变薄膜与位错数值实验",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="退出码: 0 成功, 1 数值失败, 2 配置错误, 3 校验失败"
    )

    parser.add_argument(
        "mode",
        choices=VALID_MODES,
        help="运行模式"
    )

    parser.add_argument(
        "--config",
        required=True,
        help="配置文件路径 (.cfg/.ini/.json/.yaml)"
    )

    parser.add_argument(
        "--out",
        help="输出目录（覆盖 experiment.output）"
    )

    parser.add_argument(
        "--refine",
        type=int,
        help="网格细分（覆盖 mesh.refinement）"
    )

    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="覆盖任意配置项，例如 --set model.e0=4"
    )

    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="日志级别",
        default="INFO"
    )

    return parser


def _print_progress(current: int, total: int, message: str) -> None:
    print(f"\r进度: {current}/{total} - {message}", end="", flush=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    主函数

    Args:
        argv: 命令行参数，默认取 sys.argv[1:]

    Returns:
        int: 退出码
    """
    args = build_arg_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        manager = ConfigManager(args.config)
        overrides = parse_overrides(args.set)
        # 先读取文件再应用覆盖项，模式以命令行为准
        manager.load_config_data(args.config)
        overrides['experiment.mode'] = args.mode
        if args.out:
            overrides['experiment.output'] = args.out
        if args.refine is not None:
            overrides['mesh.refinement'] = str(args.refine)
        manager.update_config(**overrides)
        spec = manager.get_config()
    except ParseError as e:
        logger.error(f"配置文件解析失败: {e}")
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ConfigError as e:
        logger.error(f"配置无效: {e}")
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    runner = ExperimentRunner(spec)
    if args.log_level in ("DEBUG", "INFO"):
        runner.set_progress_callback(_print_progress)

    try:
        outcome = runner.run()
    except KeyboardInterrupt:
        print("\n\n用户中断操作", file=sys.stderr)
        return EXIT_NUMERIC_FAILURE
    except NUMERIC_ERRORS as e:
        logger.error(f"数值计算失败: {type(e).__name__}: {e}")
        print(f"\n数值失败: {e}", file=sys.stderr)
        if args.log_level == "DEBUG":
            import traceback
            traceback.print_exc()
        return EXIT_NUMERIC_FAILURE

    print(f"\n模式 {outcome.mode} 完成, 退出码 {outcome.exit_code}, 耗时 {outcome.elapsed:.2f} 秒")
    for name in outcome.artifacts:
        print(f"  - {os.path.join(spec.output_dir, name)}")
    return outcome.exit_code


def cli_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
