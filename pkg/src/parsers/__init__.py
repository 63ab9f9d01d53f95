"""
解析器模块包

提供实验配置文件解析功能：
- 解析器基类 (base)
- 键值对解析器 (kv_parser)
- JSON解析器 (json_parser)
- YAML解析器 (yaml_parser)
- 解析器工厂 (factory)
"""

from .base import ConfigParserInterface, ParseError
from .factory import ParserFactory, get_parser, get_parser_by_file
from .json_parser import JsonConfigParser
from .kv_parser import KeyValueConfigParser
from .yaml_parser import YamlConfigParser

__all__ = [
    'ConfigParserInterface',
    'ParseError',
    'JsonConfigParser',
    'KeyValueConfigParser',
    'YamlConfigParser',
    'ParserFactory',
    'get_parser',
    'get_parser_by_file',
]
