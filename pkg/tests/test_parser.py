"""
配置解析器测试
"""

import json
import os
import shutil
import tempfile
from typing import Any, Dict, List

import pytest

from src.parsers.base import BaseParser, ParseError
from src.parsers.factory import ParserFactory, get_parser, get_parser_by_file
from src.parsers.json_parser import JsonConfigParser
from src.parsers.kv_parser import KeyValueConfigParser
from src.parsers.yaml_parser import YamlConfigParser


class TestParseError:
    """解析错误格式测试"""

    def test_message_parts(self):
        error = ParseError("缺少 '='", "run.cfg", 3)
        assert str(error) == "缺少 '=' | 文件: run.cfg | 行号: 3"

    def test_message_without_location(self):
        assert str(ParseError("文件内容为空")) == "文件内容为空"


class TestKeyValueConfigParser:
    """键值对解析器测试"""

    def setup_method(self):
        self.parser = KeyValueConfigParser()

    def test_sections_and_comments(self):
        text = "\n".join([
            "# 注释",
            "; 另一种注释",
            "experiment.mode = solve",
            "",
            "[model]",
            "e0 = 4",
            "gamma = 1.5   # 行内注释",
            "[dislocations]",
            "centers = 0.5, 0.3; 0.25, 0.6",
        ])
        flat = self.parser.parse_text(text)
        assert flat == {
            'experiment.mode': 'solve',
            'model.e0': '4',
            'model.gamma': '1.5',
            'dislocations.centers': '0.5, 0.3; 0.25, 0.6',
        }

    def test_hash_without_space_is_kept(self):
        flat = self.parser.parse_text("profile.file = run#1.json")
        assert flat['profile.file'] == 'run#1.json'

    def test_missing_equals_reports_line(self):
        with pytest.raises(ParseError) as exc_info:
            self.parser.parse_text("[model]\ne0 = 1\ngamma 2\n", "run.cfg")
        assert exc_info.value.line_number == 3
        assert exc_info.value.file_path == "run.cfg"

    def test_illegal_key(self):
        with pytest.raises(ParseError) as exc_info:
            self.parser.parse_text("model.e0 = 1\n1bad = 2\n")
        assert exc_info.value.line_number == 2

    def test_duplicate_key_overrides(self, caplog):
        flat = self.parser.parse_text("model.e0 = 1\n[model]\ne0 = 2\n")
        assert flat['model.e0'] == '2'
        assert "重复的配置项" in caplog.text

    def test_dump_layout(self):
        text = self.parser.dump({
            'model.e0': 4.0,
            'model.gamma': 1.0,
            'schedule.nucleation': True,
            'experiment.omegas': [2.0, 1.5],
            'dislocations.centers': [[0.5, 0.3], [0.25, 0.6]],
        })
        assert text == "\n".join([
            "[dislocations]",
            "centers = 0.5, 0.3; 0.25, 0.6",
            "",
            "[experiment]",
            "omegas = 2.0, 1.5",
            "",
            "[model]",
            "e0 = 4.0",
            "gamma = 1.0",
            "",
            "[schedule]",
            "nucleation = true",
        ]) + "\n"

    def test_dump_then_parse(self):
        data = {'model.e0': 0.1, 'mesh.refinement': 32, 'dislocations.coeffs': [[1, 0], [0, -1]]}
        flat = self.parser.parse_text(self.parser.dump(data))
        assert flat == {'model.e0': '0.1', 'mesh.refinement': '32', 'dislocations.coeffs': '1.0, 0.0; 0.0, -1.0'}

    def test_supported_extensions(self):
        assert '.cfg' in self.parser.get_supported_extensions()
        assert '.ini' in self.parser.get_supported_extensions()


class TestStructuredParsers:
    """JSON/YAML 解析器测试"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name: str, content: str) -> str:
        path = os.path.join(self.temp_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(content)
        return path

    def test_json_flattens_nested_sections(self):
        path = self._write("run.json", json.dumps({"model": {"e0": 4, "gamma": 1.5},
                                                   "experiment": {"omegas": [2.0, 1.5]}}))
        flat = JsonConfigParser().parse(path)
        assert flat == {'model.e0': 4, 'model.gamma': 1.5, 'experiment.omegas': [2.0, 1.5]}

    def test_json_syntax_error(self):
        path = self._write("bad.json", '{"model": {"e0": 4,}}')
        with pytest.raises(ParseError) as exc_info:
            JsonConfigParser().parse(path)
        assert exc_info.value.line_number == 1

    def test_json_root_must_be_mapping(self):
        path = self._write("list.json", "[1, 2]")
        with pytest.raises(ParseError):
            JsonConfigParser().parse(path)

    def test_json_empty_file(self):
        path = self._write("empty.json", "  \n")
        with pytest.raises(ParseError):
            JsonConfigParser().parse(path)

    def test_json_dump_is_nested_and_sorted(self):
        text = JsonConfigParser().dump({'model.gamma': 1.0, 'model.e0': 2.0})
        assert json.loads(text) == {'model': {'e0': 2.0, 'gamma': 1.0}}
        assert text.index('"e0"') < text.index('"gamma"')

    def test_yaml_parse(self):
        path = self._write("run.yaml", "model:\n  e0: 4\nmesh:\n  refinement: 16\n")
        assert YamlConfigParser().parse(path) == {'model.e0': 4, 'mesh.refinement': 16}

    def test_yaml_syntax_error(self):
        path = self._write("bad.yaml", "model:\n  e0: [1, 2\n")
        with pytest.raises(ParseError):
            YamlConfigParser().parse(path)

    def test_yaml_empty_file(self):
        path = self._write("empty.yaml", "")
        with pytest.raises(ParseError):
            YamlConfigParser().parse(path)

    def test_flatten_and_nest_are_inverse(self):
        parser = JsonConfigParser()
        nested = {'model': {'e0': 1.0}, 'profile': {'nodes': [[0.0, 1.0]]}, 'mode': 'solve'}
        assert parser.nest(parser.flatten(nested)) == nested


class _DummyParser(BaseParser):
    def parse(self, file_path: str) -> Dict[str, Any]:
        return {}

    def dump(self, data: Dict[str, Any]) -> str:
        return ""

    def get_supported_extensions(self) -> List[str]:
        return ['.dummy']


class TestParserFactory:
    """解析器工厂测试"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        ParserFactory.unregister('dummy')
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_get_parser_by_name_and_extension(self):
        assert isinstance(get_parser('kv'), KeyValueConfigParser)
        assert isinstance(get_parser('.json'), JsonConfigParser)
        assert isinstance(get_parser('.YML'), YamlConfigParser)
        assert get_parser('.toml') is None

    def test_get_parser_by_file(self):
        path = os.path.join(self.temp_dir, "run.conf")
        with open(path, 'w', encoding='utf-8') as f:
            f.write("model.e0 = 1\n")
        assert isinstance(get_parser_by_file(path), KeyValueConfigParser)
        assert get_parser_by_file(os.path.join(self.temp_dir, "missing.cfg")) is None

    def test_supported_extensions(self):
        extensions = ParserFactory.get_supported_extensions()
        for ext in ('.cfg', '.json', '.yaml', '.yml'):
            assert ext in extensions
        assert ParserFactory.is_supported_file("a/b/run.JSON")
        assert not ParserFactory.is_supported_file("run.toml")

    def test_register_and_unregister(self):
        ParserFactory.register(_DummyParser, 'dummy')
        assert isinstance(ParserFactory.get_parser('.dummy'), _DummyParser)
        assert ParserFactory.unregister('dummy')
        assert not ParserFactory.is_supported_file("x.dummy")
        assert not ParserFactory.unregister('dummy')

    def test_default_name_from_extension(self):
        """未给名称时以第一个扩展名登记"""
        ParserFactory.register(_DummyParser)
        assert isinstance(get_parser('dummy'), _DummyParser)
        assert ParserFactory.is_supported_file("x.DUMMY")

    def test_register_rejects_foreign_class(self):
        with pytest.raises(ValueError):
            ParserFactory.register(dict)
