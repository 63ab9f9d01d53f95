"""
键值对解析器

解析 ``key = value`` 形式的纯文本配置：

    # 注释
    experiment.mode = solve
    [model]
    e0 = 4
    gamma = 1

``[section]`` 之后的键自动加上 ``section.`` 前缀；以 ``#`` 或 ``;`` 开头的行为注释。
值一律作为字符串返回，类型转换由配置管理器完成。
"""

import logging
import re
from typing import Any, Dict, List

from .base import BaseParser, ParseError

logger = logging.getLogger(__name__)

SECTION_PATTERN = re.compile(r'^\[\s*([A-Za-z_][\w\-]*)\s*\]$')
KEY_PATTERN = re.compile(r'^[A-Za-z_][\w\-]*(\.[A-Za-z_][\w\-]*)*$')


class KeyValueConfigParser(BaseParser):
    """键值对配置解析器"""

    def parse(self, file_path: str) -> Dict[str, Any]:
        """
        解析键值对配置文件

        Args:
            file_path: 文件路径

        Returns:
            Dict[str, Any]: 点分隔键到字符串值的字典

        Raises:
            ParseError: 行格式错误（带行号）
        """
        content = self._read_file(file_path)
        return self.parse_text(content, file_path)

    def parse_text(self, content: str, file_path: str = "") -> Dict[str, Any]:
        flat: Dict[str, Any] = {}
        section = ""

        for line_number, raw in enumerate(content.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('#') or line.startswith(';'):
                continue

            match = SECTION_PATTERN.match(line)
            if match:
                section = match.group(1)
                continue

            if '=' not in line:
                raise ParseError(f"缺少 '=': {line}", file_path, line_number)

            key, _, value = line.partition('=')
            key = key.strip()
            # 行内注释须以空白加 # 开头
            value = re.split(r'\s+#', value, maxsplit=1)[0].strip()

            if not KEY_PATTERN.match(key):
                raise ParseError(f"非法的键: {key!r}", file_path, line_number)

            full_key = f"{section}.{key}" if section else key
            if full_key in flat:
                logger.warning(f"重复的配置项将覆盖前值: {full_key} (行 {line_number})")
            flat[full_key] = value

        logger.debug(f"成功解析配置: {file_path or '<text>'} ({len(flat)} 项)")
        return flat

    def dump(self, data: Dict[str, Any]) -> str:
        """按段输出，列表写成逗号分隔，二维列表以分号分行"""
        grouped: Dict[str, Dict[str, str]] = {}
        for key, value in data.items():
            section, _, name = key.partition('.')
            if not name:
                section, name = "", key
            grouped.setdefault(section, {})[name] = self._format_value(value)

        lines: List[str] = []
        for section in sorted(grouped):
            if section:
                if lines:
                    lines.append("")
                lines.append(f"[{section}]")
            for name in sorted(grouped[section]):
                lines.append(f"{name} = {grouped[section][name]}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def _format_value(value: Any) -> str:
        if isinstance(value, bool):
            return 'true' if value else 'false'
        if isinstance(value, (list, tuple)):
            if value and isinstance(value[0], (list, tuple)):
                return "; ".join(", ".join(repr(float(v)) for v in row) for row in value)
            return ", ".join(repr(float(v)) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def get_supported_extensions(self) -> List[str]:
        return ['.cfg', '.conf', '.ini', '.txt']
