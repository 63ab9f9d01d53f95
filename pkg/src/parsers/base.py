"""
解析器基类

定义实验配置文件解析器的通用接口。所有解析器都把配置解析为
点分隔键的扁平字典（例如 ``model.e0``），由配置管理器统一做类型转换。
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List

logger = logging.getLogger(__name__)


class ConfigParserInterface(ABC):
    """配置文件解析器接口"""

    @abstractmethod
    def parse(self, file_path: str) -> Dict[str, Any]:
        """
        解析配置文件

        Args:
            file_path: 文件路径

        Returns:
            Dict[str, Any]: 点分隔键的扁平字典

        Raises:
            ParseError: 解析失败时抛出
        """
        pass

    @abstractmethod
    def dump(self, data: Dict[str, Any]) -> str:
        """
        将扁平字典序列化为文件内容

        Args:
            data: 点分隔键的扁平字典

        Returns:
            str: 文件内容
        """
        pass

    @abstractmethod
    def get_supported_extensions(self) -> List[str]:
        """
        返回支持的文件扩展名

        Returns:
            List[str]: 支持的文件扩展名列表
        """
        pass


class ParseError(Exception):
    """解析错误异常"""

    def __init__(self, message: str, file_path: str = "", line_number: int = 0):
        """
        初始化解析错误

        Args:
            message: 错误信息
            file_path: 文件路径
            line_number: 出错的行号
        """
        self.message = message
        self.file_path = file_path
        self.line_number = line_number

        super().__init__(self._format_message())

    def _format_message(self) -> str:
        """格式化错误信息"""
        parts = [self.message]

        if self.file_path:
            parts.append(f"文件: {self.file_path}")

        if self.line_number > 0:
            parts.append(f"行号: {self.line_number}")

        return " | ".join(parts)


class BaseParser(ConfigParserInterface):
    """解析器基类，提供嵌套/扁平结构之间的转换"""

    def __init__(self):
        self.encoding = None

    def flatten(self, data: Dict[str, Any], prefix: str = '') -> Dict[str, Any]:
        """
        将嵌套字典扁平化为点分隔键

        Args:
            data: 嵌套字典
            prefix: 键前缀

        Returns:
            Dict[str, Any]: 扁平字典，叶子值保持原样（列表不展开）
        """
        flat: Dict[str, Any] = {}
        for key, value in data.items():
            full_key = f"{prefix}.{key}" if prefix else str(key)
            if isinstance(value, dict):
                flat.update(self.flatten(value, full_key))
            else:
                flat[full_key] = value
        return flat

    def nest(self, flat: Dict[str, Any]) -> Dict[str, Any]:
        """
        flatten 的逆操作

        Args:
            flat: 点分隔键的扁平字典

        Returns:
            Dict[str, Any]: 嵌套字典
        """
        data: Dict[str, Any] = {}
        for key, value in flat.items():
            parts = key.split('.')
            current = data
            for part in parts[:-1]:
                if not isinstance(current.get(part), dict):
                    current[part] = {}
                current = current[part]
            current[parts[-1]] = value
        return data

    def _read_file(self, file_path: str) -> str:
        """
        读取文件内容

        Raises:
            ParseError: 读取失败时抛出
        """
        from ..utils.file_utils import read_file_safe

        content, _ = read_file_safe(file_path, self.encoding)

        if content is None:
            raise ParseError("无法读取文件", file_path)

        return content

    def _require_mapping(self, data: Any, file_path: str) -> Dict[str, Any]:
        if not isinstance(data, dict):
            raise ParseError("根对象必须是字典类型", file_path)
        if not data:
            logger.warning(f"配置文件为空: {file_path}")
        return data
