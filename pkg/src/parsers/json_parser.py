"""
JSON解析器

解析嵌套 JSON 格式的实验配置，例如 {"model": {"e0": 4}}。
"""

import json
import logging
from typing import Any, Dict, List

from .base import BaseParser, ParseError

logger = logging.getLogger(__name__)


class JsonConfigParser(BaseParser):
    """JSON 配置解析器"""

    def parse(self, file_path: str) -> Dict[str, Any]:
        """
        解析 JSON 配置文件

        Args:
            file_path: 文件路径

        Returns:
            Dict[str, Any]: 点分隔键的扁平字典

        Raises:
            ParseError: 内容为空或 JSON 语法错误
        """
        content = self._read_file(file_path)
        if not content.strip():
            raise ParseError("文件内容为空", file_path)

        try:
            data = json.loads(content)
        except json.JSONDecodeError as e:
            raise ParseError(f"JSON解析错误: {e.msg}", file_path, e.lineno)

        flat = self.flatten(self._require_mapping(data, file_path))
        logger.debug(f"成功解析JSON配置: {file_path} ({len(flat)} 项)")
        return flat

    def dump(self, data: Dict[str, Any], indent: int = 2) -> str:
        return json.dumps(self.nest(data), indent=indent, ensure_ascii=False, sort_keys=True) + "\n"

    def get_supported_extensions(self) -> List[str]:
        return ['.json']
