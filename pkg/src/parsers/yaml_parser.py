"""
YAML解析器
"""

import logging
from typing import Any, Dict, List

import yaml

from .base import BaseParser, ParseError

logger = logging.getLogger(__name__)


class YamlConfigParser(BaseParser):
    """YAML 配置解析器（结构与 JSON 配置相同）"""

    def parse(self, file_path: str) -> Dict[str, Any]:
        content = self._read_file(file_path)
        try:
            data = yaml.safe_load(content)
        except yaml.YAMLError as e:
            mark = getattr(e, 'problem_mark', None)
            line = mark.line + 1 if mark is not None else 0
            raise ParseError(f"YAML解析错误: {getattr(e, 'problem', e)}", file_path, line)

        if data is None:
            raise ParseError("文件内容为空", file_path)

        flat = self.flatten(self._require_mapping(data, file_path))
        logger.debug(f"成功解析YAML配置: {file_path} ({len(flat)} 项)")
        return flat

    def dump(self, data: Dict[str, Any]) -> str:
        return yaml.safe_dump(self.nest(data), allow_unicode=True, sort_keys=True, default_flow_style=None)

    def get_supported_extensions(self) -> List[str]:
        return ['.yaml', '.yml']
