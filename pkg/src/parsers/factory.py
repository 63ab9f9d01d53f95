"""
配置解析器注册表

实验配置可以写成 .cfg/.ini 键值对、JSON 或 YAML；ConfigManager 通过这里按扩展名取得解析器。
"""

import logging
import os
from typing import Dict, List, Optional, Type

from .base import ConfigParserInterface
from .json_parser import JsonConfigParser
from .kv_parser import KeyValueConfigParser
from .yaml_parser import YamlConfigParser

logger = logging.getLogger(__name__)


class ParserFactory:
    """按格式名或扩展名分发的解析器注册表（类级共享）"""

    _parsers: Dict[str, Type[ConfigParserInterface]] = {}
    # '.yml' -> 'yaml'
    _extension_mapping: Dict[str, str] = {}

    @classmethod
    def register(cls, parser_class: Type[ConfigParserInterface], parser_name: Optional[str] = None) -> None:
        """
        登记一种配置格式

        未给出名称时取解析器声明的第一个扩展名（去掉点号）。同名登记会覆盖旧的解析器。

        Raises:
            ValueError: parser_class 不是 ConfigParserInterface 的子类
        """
        if not (isinstance(parser_class, type) and issubclass(parser_class, ConfigParserInterface)):
            raise ValueError(f"不是配置解析器: {parser_class}")

        extensions = [ext.lower() for ext in parser_class().get_supported_extensions()]
        name = (parser_name or extensions[0].lstrip('.')).lower()
        cls._parsers[name] = parser_class
        cls._extension_mapping.update({ext: name for ext in extensions})
        logger.debug(f"配置格式 {name}: {', '.join(extensions)}")

    @classmethod
    def get_parser(cls, parser_type: str) -> Optional[ConfigParserInterface]:
        """parser_type 可以是格式名（'kv'）或带点的扩展名（'.yml'）；未知时返回 None"""
        key = parser_type.lower()
        if key.startswith('.'):
            key = cls._extension_mapping.get(key, '')
        parser_class = cls._parsers.get(key)
        if parser_class is None:
            logger.warning(f"没有对应的配置解析器: {parser_type}")
            return None
        return parser_class()

    @classmethod
    def get_parser_by_file(cls, file_path: str) -> Optional[ConfigParserInterface]:
        """文件不存在或扩展名未登记时返回 None"""
        if not os.path.exists(file_path):
            logger.warning(f"配置文件不存在: {file_path}")
            return None
        if not cls.is_supported_file(file_path):
            logger.warning(f"无法识别的配置文件格式: {file_path}")
            return None
        return cls.get_parser(os.path.splitext(file_path)[1])

    @classmethod
    def get_supported_extensions(cls) -> List[str]:
        return list(cls._extension_mapping)

    @classmethod
    def is_supported_file(cls, file_path: str) -> bool:
        return os.path.splitext(file_path)[1].lower() in cls._extension_mapping

    @classmethod
    def unregister(cls, parser_type: str) -> bool:
        """撤销一种格式及其全部扩展名，未登记时返回 False"""
        name = parser_type.lower()
        if cls._parsers.pop(name, None) is None:
            return False
        cls._extension_mapping = {ext: n for ext, n in cls._extension_mapping.items() if n != name}
        logger.debug(f"已撤销配置格式: {name}")
        return True


ParserFactory.register(KeyValueConfigParser, 'kv')
ParserFactory.register(JsonConfigParser, 'json')
ParserFactory.register(YamlConfigParser, 'yaml')


def get_parser(parser_type: str) -> Optional[ConfigParserInterface]:
    return ParserFactory.get_parser(parser_type)


def get_parser_by_file(file_path: str) -> Optional[ConfigParserInterface]:
    return ParserFactory.get_parser_by_file(file_path)
