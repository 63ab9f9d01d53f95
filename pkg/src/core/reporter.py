"""
报告生成模块 - 写出 CSV 表格、构型 JSON、摘要与清单

所有浮点数以 17 位有效数字输出，重复运行得到逐字节相同的表格；
只有 manifest.json 带时间戳。
"""

import csv
import io
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .elasticity import ElasticState, field_table
from .optimizer import Configuration
from ..utils.file_utils import ensure_dir, file_sha256, write_file_safe

logger = logging.getLogger(__name__)

FIELD_COLUMNS = ['x', 'y', 'ux', 'uy', 'H11', 'H12', 'H21', 'H22', 'W']


def format_value(value: Any) -> str:
    """浮点数 %.17g，整数与字符串原样"""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return '%.17g' % float(value)
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON 没有 inf/nan
        return value if np.isfinite(value) else str(value)
    return value


class ReportGenerator:
    """结果文件生成器"""

    def __init__(self, output_dir: str):
        self.output_path = Path(output_dir)
        if not ensure_dir(output_dir):
            raise OSError(f"无法创建输出目录: {output_dir}")
        self.artifacts: List[str] = []

    def _write(self, name: str, content: str) -> str:
        path = self.output_path / name
        if not write_file_safe(str(path), content):
            raise OSError(f"写入结果文件失败: {path}")
        if name not in self.artifacts:
            self.artifacts.append(name)
        logger.info(f"已写出: {path}")
        return str(path)

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
        """
        写出 CSV 表格

        Args:
            name: 文件名（相对输出目录）
            header: 列名
            rows: 数据行

        Returns:
            str: 文件路径
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        return self._write(name, buffer.getvalue())

    def write_json(self, name: str, data: Dict[str, Any]) -> str:
        content = json.dumps(_jsonable(data), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        return self._write(name, content)

    def write_configuration(self, cfg: Configuration, prefix: str = "final") -> List[str]:
        """构型的轮廓与位错 JSON，以及能量分解 CSV"""
        paths = [
            self._write(f"{prefix}_profile.json", cfg.profile.to_json() + "\n"),
            self._write(f"{prefix}_dislocations.json", cfg.sigma.to_json() + "\n"),
        ]
        breakdown = cfg.breakdown.to_dict()
        paths.append(self.write_csv(f"{prefix}_energy.csv", list(breakdown.keys()), [list(breakdown.values())]))
        return paths

    def write_field_table(self, state: ElasticState, name: str = "fields.csv") -> str:
        return self.write_csv(name, FIELD_COLUMNS, field_table(state).tolist())

    def write_text_summary(self, title: str, sections: Dict[str, List[str]], name: str = "summary.txt") -> str:
        """
        文本摘要（不含时间戳）

        Args:
            title: 标题
            sections: 段名到行列表的映射（保持插入顺序）
            name: 文件名
        """
        lines = ["=" * 60, title, "=" * 60, ""]
        for index, (section, body) in enumerate(sections.items(), start=1):
            lines.extend(["=" * 60, f"{index}. {section}", "=" * 60])
            lines.extend(body)
            lines.append("")
        return self._write(name, "\n".join(lines))

    def write_manifest(self, parameters: Dict[str, Any], status: Optional[Dict[str, Any]] = None) -> str:
        """
        清单：所有已写出文件的 SHA-256 与完整参数回显

        Returns:
            str: manifest.json 路径
        """
        files = []
        for name in self.artifacts:
            path = self.output_path / name
            files.append({'path': name, 'sha256': file_sha256(str(path)), 'bytes': path.stat().st_size})
        manifest = {'generated_at': datetime.now().isoformat(timespec='seconds'), 'files': files,
                    'parameters': parameters, 'status': status or {}}
        path = self.output_path / "manifest.json"
        content = json.dumps(_jsonable(manifest), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        if not write_file_safe(str(path), content):
            raise OSError(f"写入清单失败: {path}")
        logger.info(f"清单已写出: {path} ({len(files)} 个文件)")
        return str(path)


def verify_manifest(manifest_path: str) -> List[str]:
    """
    核对清单中的每个文件存在且哈希一致

    Returns:
        List[str]: 不一致的文件列表，空列表表示全部一致
    """
    path = Path(manifest_path)
    manifest = json.loads(path.read_text(encoding='utf-8'))
    problems = []
    for entry in manifest.get('files', []):
        target = path.parent / entry['path']
        if not target.exists():
            problems.append(f"缺失: {entry['path']}")
        elif file_sha256(str(target)) != entry['sha256']:
            problems.append(f"哈希不一致: {entry['path']}")
    return problems
