"""
配置管理模块测试
"""

import json
import os
import shutil
import tempfile

import pytest

from src.core.config import (VALID_MODES, ConfigError, ConfigManager, ExperimentSpec, MeshParams, ModelParams,
                             ScheduleParams)
from src.parsers.base import ParseError


class TestModelParams:
    """模型参数测试"""

    def test_defaults(self):
        params = ModelParams()
        assert params.mu == 1.0
        assert params.lam == 1.0
        assert params.gamma == 1.0
        assert params.e0 is None
        assert params.r0 == 0.1
        assert params.penalty is None
        assert params.beta == 0.0

    def test_derived_quantities(self):
        params = ModelParams(e0=2.0)
        assert params.W0 == pytest.approx(4.0 / 3.0)
        assert params.mismatch == 2.0
        assert params.penalty_weight == pytest.approx(1.1 * 4.0 * 4.0 / 3.0)
        assert params.h_min == pytest.approx(0.025)
        assert params.with_changes(penalty=3.0).penalty_weight == 3.0

    def test_missing_mismatch(self):
        assert "缺少必填参数 model.e0" in ModelParams().validate()
        assert ModelParams(e0=0.0).validate() == []

    def test_invalid_values(self):
        errors = ModelParams(e0=1.0, mu=-1.0, gamma=0.0, r0=0.6, c_o=-1.0, beta=-1.0).validate()
        assert len(errors) == 5
        assert any('Lamé' in e for e in errors)
        assert any('model.r0' in e for e in errors)

    def test_non_finite_mismatch(self):
        errors = ModelParams(e0=float('nan')).validate()
        assert any('有限数' in e for e in errors)


class TestScheduleParams:
    """优化计划测试"""

    def test_defaults_are_valid(self):
        schedule = ScheduleParams()
        assert schedule.objective == "constrained"
        assert schedule.max_threads == 4
        assert schedule.validate(0.1) == []

    def test_step_defaults_follow_core_radius(self):
        schedule = ScheduleParams()
        assert schedule.fd_step_for(0.1) == pytest.approx(1e-3)
        assert schedule.dislocation_move_for(0.1) == pytest.approx(0.1)

    def test_fd_step_upper_bound(self):
        """有限差分步长必须小于 r0/10"""
        errors = ScheduleParams(fd_step=0.02).validate(0.1)
        assert len(errors) == 1
        assert '有限差分步长' in errors[0]

    def test_invalid_schedule(self):
        errors = ScheduleParams(objective='unknown', shrink=1.5, max_threads=0, max_sweeps=0).validate(0.1)
        assert len(errors) == 4


class TestConfigManager:
    """配置管理器测试"""

    def setup_method(self):
        self.config_manager = ConfigManager()
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name: str, content: str) -> str:
        path = os.path.join(self.temp_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(content)
        return path

    def test_missing_mismatch_rejected(self):
        errors = self.config_manager.validate_config()
        assert errors == ["缺少必填参数 model.e0"]
        with pytest.raises(ConfigError) as exc_info:
            self.config_manager.get_config()
        assert exc_info.value.fields == ['model.e0']
        assert "缺少必填参数 model.e0" in str(exc_info.value)

    def test_corner_mode_needs_no_mismatch(self):
        self.config_manager.update_config(**{'experiment.mode': 'corner'})
        assert self.config_manager.validate_config() == []

    def test_load_key_value_config(self):
        path = self._write("run.cfg", "\n".join([
            "# 平坦膜",
            "[experiment]",
            "mode = minimize",
            "output = out",
            "[model]",
            "e0 = 4",
            "gamma = 2.5  # 表面张力",
            "[mesh]",
            "refinement = 16",
            "[schedule]",
            "nucleation = yes",
            "max_sweeps = 7",
        ]))
        spec = self.config_manager.load_config(path)
        assert isinstance(spec, ExperimentSpec)
        assert spec.mode == 'minimize'
        assert spec.model.e0 == 4.0
        assert spec.model.gamma == 2.5
        assert spec.mesh.refinement == 16
        assert spec.schedule.nucleation is True
        assert spec.schedule.max_sweeps == 7
        assert os.path.isabs(spec.output_dir)

    def test_load_json_config(self):
        path = self._write("run.json", json.dumps({
            "model": {"e0": 1.5, "r0": 0.05},
            "profile": {"kind": "sinusoid", "height": 1.0, "amplitude": 0.1, "modes": 2},
            "dislocations": {"centers": [[0.5, 0.3]], "coeffs": [[1, 0]]},
        }))
        spec = self.config_manager.load_config(path)
        assert spec.model.e0 == 1.5
        assert spec.profile.volume() == pytest.approx(1.0, rel=1e-6)
        assert spec.profile.max_height() > 1.0
        assert len(spec.sigma) == 1
        assert spec.sigma.entries[0].coeffs == (1, 0)
        assert spec.sigma.r0 == 0.05

    def test_load_yaml_config(self):
        path = self._write("run.yaml", "\n".join([
            "experiment:",
            "  mode: corner",
            "  omegas: [2.0, 1.5]",
        ]))
        spec = self.config_manager.load_config(path)
        assert spec.mode == 'corner'
        assert spec.options.omegas == [2.0, 1.5]

    def test_missing_file(self):
        with pytest.raises(ParseError):
            self.config_manager.load_config(os.path.join(self.temp_dir, "missing.cfg"))

    def test_unsupported_extension(self):
        path = self._write("run.toml", "e0 = 1")
        with pytest.raises(ParseError):
            self.config_manager.load_config(path)

    def test_unconvertible_value(self):
        with pytest.raises(ConfigError) as exc_info:
            self.config_manager.update_config(**{'model.gamma': 'abc'})
        assert exc_info.value.fields == ['model.gamma']

    def test_unknown_key_ignored(self, caplog):
        self.config_manager.update_config(**{'model.e0': 1.0, 'model.unknown': 3})
        assert self.config_manager.model.e0 == 1.0
        assert "忽略未知配置项: model.unknown" in caplog.text

    def test_invalid_mode_and_profile(self):
        self.config_manager.update_config(**{'model.e0': 1.0, 'experiment.mode': 'train',
                                             'profile.kind': 'nodes'})
        errors = self.config_manager.validate_config()
        assert len(errors) == 2
        assert any(e.startswith("不支持的运行模式") for e in errors)

    def test_dislocation_count_mismatch(self):
        self.config_manager.update_config(**{'model.e0': 1.0, 'dislocations.centers': '0.5,0.5; 0.2,0.2',
                                             'dislocations.coeffs': '1,0'})
        errors = self.config_manager.validate_config()
        assert len(errors) == 1
        assert 'dislocations.centers' in errors[0]

    def test_omega_range(self):
        self.config_manager.update_config(**{'experiment.mode': 'corner', 'experiment.omegas': '2.5'})
        assert len(self.config_manager.validate_config()) == 1

    def test_default_profile_uses_target_volume(self):
        self.config_manager.update_config(**{'model.e0': 1.0, 'model.d': 0.5, 'mesh.node_count': 12})
        spec = self.config_manager.get_config()
        assert spec.initial_profile().volume() == pytest.approx(0.5)
        assert len(spec.initial_profile().nodes) == 12
        assert spec.initial_sigma().is_empty

    def test_profile_from_file(self):
        from src.core.geometry import Profile
        self._write("profile.json", Profile.flat(1.0, 0.8, 8).to_json())
        path = self._write("run.cfg", "model.e0 = 1\nprofile.file = profile.json\n")
        spec = self.config_manager.load_config(path)
        assert spec.profile.volume() == pytest.approx(0.8)

    def test_save_and_load_round_trip(self):
        for name in ("saved.cfg", "saved.json", "saved.yaml"):
            manager = ConfigManager()
            manager.update_config(**{'model.e0': 2.5, 'experiment.mode': 'gamma-sweep',
                                     'experiment.gamma_values': '1, 3', 'schedule.nucleation': True,
                                     'dislocations.centers': '0.5,0.4', 'dislocations.coeffs': '0,1'})
            path = os.path.join(self.temp_dir, "nested", name)
            assert manager.save_config(path)

            loaded = ConfigManager(path).load_config()
            assert loaded.mode == 'gamma-sweep'
            assert loaded.model.e0 == 2.5
            assert loaded.options.gamma_values == [1.0, 3.0]
            assert loaded.schedule.nucleation is True
            assert loaded.sigma.entries[0].center == (0.5, 0.4)
            assert loaded.sigma.entries[0].coeffs == (0, 1)

    def test_reset_to_default(self):
        self.config_manager.update_config(**{'mesh.refinement': 64})
        self.config_manager.reset_to_default()
        assert self.config_manager.mesh == MeshParams()

    def test_parameter_echo(self):
        self.config_manager.update_config(**{'model.e0': 1.0})
        echo = self.config_manager.get_config().parameter_echo()
        assert echo['mode'] == 'solve'
        assert echo['model']['e0'] == 1.0
        assert echo['schedule']['lattice'] is None
        assert 'profile' in echo and 'dislocations' in echo

    def test_all_modes_accepted(self):
        for mode in VALID_MODES:
            manager = ConfigManager()
            manager.update_config(**{'model.e0': 1.0, 'experiment.mode': mode})
            assert manager.validate_config() == []
