"""
集成测试 - 通过命令行入口运行完整实验
"""

import json
import os
import shutil
import tempfile

import pytest

from src.core.config import ConfigManager
from src.core.reporter import verify_manifest
from src.core.runner import (EXIT_CONFIG_ERROR, EXIT_OK, EXIT_VALIDATION_FAILURE, ExperimentRunner,
                             run_experiment)
from src.main import main, parse_overrides


class TestCommandLine:
    """命令行入口测试"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name: str, content: str) -> str:
        path = os.path.join(self.temp_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(content)
        return path

    def _out(self, name: str) -> str:
        return os.path.join(self.temp_dir, name)

    def _read(self, out: str, name: str) -> bytes:
        with open(os.path.join(out, name), 'rb') as f:
            return f.read()

    def _small_config(self, extra: str = "") -> str:
        return self._write("run.cfg", "\n".join([
            "[model]",
            "e0 = 1",
            "[mesh]",
            "refinement = 8",
            "node_count = 8",
            "[schedule]",
            "max_threads = 1",
        ]) + "\n" + extra)

    def test_solve_flat_film(self):
        out = self._out("solve")
        code = main(["solve", "--config", self._small_config(), "--out", out, "--log-level", "WARNING"])
        assert code == EXIT_OK

        for name in ("energy.csv", "solved_profile.json", "solved_dislocations.json", "solved_energy.csv",
                     "fields.csv", "el_residual.csv", "summary.json", "manifest.json"):
            assert os.path.exists(os.path.join(out, name)), name

        summary = json.loads(self._read(out, "summary.json"))
        assert summary['mode'] == 'solve'
        assert summary['exit_code'] == 0
        assert summary['energy']['total'] == pytest.approx(7.0 / 3.0, rel=1e-10)
        assert summary['volume'] == pytest.approx(1.0)
        assert verify_manifest(os.path.join(out, "manifest.json")) == []

    def test_set_override(self):
        out = self._out("override")
        code = main(["solve", "--config", self._small_config(), "--out", out, "--set", "model.e0=2",
                     "--log-level", "WARNING"])
        assert code == EXIT_OK
        summary = json.loads(self._read(out, "summary.json"))
        assert summary['energy']['elastic'] == pytest.approx(4.0 * 4.0 / 3.0, rel=1e-10)

        manifest = json.loads(self._read(out, "manifest.json"))
        assert manifest['parameters']['model']['e0'] == 2.0
        assert manifest['parameters']['mesh']['refinement'] == 8

    def test_refine_override(self):
        out = self._out("refine")
        code = main(["solve", "--config", self._small_config(), "--out", out, "--refine", "4",
                     "--log-level", "WARNING"])
        assert code == EXIT_OK
        manifest = json.loads(self._read(out, "manifest.json"))
        assert manifest['parameters']['mesh']['refinement'] == 4

    def test_missing_mismatch_is_config_error(self):
        path = self._write("bad.cfg", "[mesh]\nrefinement = 8\n")
        code = main(["solve", "--config", path, "--out", self._out("bad"), "--log-level", "ERROR"])
        assert code == EXIT_CONFIG_ERROR
        assert not os.path.exists(self._out("bad"))

    def test_parse_error_is_config_error(self):
        path = self._write("broken.cfg", "[model]\ne0 4\n")
        assert main(["solve", "--config", path, "--log-level", "ERROR"]) == EXIT_CONFIG_ERROR

    def test_missing_file_is_config_error(self):
        assert main(["solve", "--config", self._out("nothing.cfg"), "--log-level", "ERROR"]) == EXIT_CONFIG_ERROR

    def test_malformed_override(self):
        code = main(["solve", "--config", self._small_config(), "--set", "model.e0", "--log-level", "ERROR"])
        assert code == EXIT_CONFIG_ERROR

    def test_unknown_mode_rejected_by_argparse(self):
        with pytest.raises(SystemExit):
            main(["train", "--config", self._small_config()])

    def test_corner_crack(self):
        out = self._out("corner")
        path = self._write("corner.yaml", "experiment:\n  omegas: [2.0]\n")
        code = main(["corner", "--config", path, "--out", out, "--log-level", "WARNING"])
        assert code == EXIT_OK

        lines = self._read(out, "corner_roots.csv").decode('utf-8').splitlines()
        assert lines[0] == "omega,re_alpha,im_alpha,residual,multiplicity"
        assert len(lines) == 2
        assert float(lines[1].split(',')[1]) == pytest.approx(0.5, abs=1e-10)

    def test_minimize_is_reproducible(self):
        config = self._small_config("[profile]\nkind = sinusoid\namplitude = 0.05\n"
                                    "[schedule]\nmax_sweeps = 3\n")
        first, second = self._out("first"), self._out("second")
        assert main(["minimize", "--config", config, "--out", first, "--log-level", "WARNING"]) == EXIT_OK
        assert main(["minimize", "--config", config, "--out", second, "--log-level", "WARNING"]) == EXIT_OK

        for name in ("trace.csv", "final_profile.json", "final_energy.csv"):
            assert self._read(first, name) == self._read(second, name)

        trace = self._read(first, "trace.csv").decode('utf-8').splitlines()
        assert trace[0].startswith("sweep,step,elastic")
        totals = [float(line.split(',')[7]) for line in trace[1:]]
        assert all(b <= a + 1e-12 for a, b in zip(totals[:-1], totals[1:]))

    def test_parse_overrides(self):
        assert parse_overrides(["model.e0 = 4", "mesh.refinement=8"]) == {'model.e0': '4',
                                                                          'mesh.refinement': '8'}


class TestExperimentRunner:
    """运行器直接调用测试"""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _spec(self, **overrides):
        manager = ConfigManager()
        data = {'model.e0': 1.0, 'mesh.refinement': 8, 'mesh.node_count': 8, 'schedule.max_threads': 1,
                'experiment.output': os.path.join(self.temp_dir, "out")}
        data.update(overrides)
        manager.update_config(**data)
        return manager.get_config()

    def test_artifacts_listed_in_order(self):
        outcome = run_experiment(self._spec())
        assert outcome.mode == 'solve'
        assert outcome.artifacts[0] == "energy.csv"
        assert outcome.artifacts[-2:] == ["summary.json", "manifest.json"]
        assert outcome.elapsed >= 0.0

    def test_sink_study_moves_dislocation_down(self):
        spec = self._spec(**{'experiment.mode': 'sink-study', 'experiment.sink_steps': 3, 'model.e0': 10.0,
                             'dislocations.centers': '0.5, 0.5', 'dislocations.coeffs': '1, 0',
                             'mesh.refinement': 16})
        outcome = ExperimentRunner(spec).run()
        assert outcome.exit_code == EXIT_OK
        assert outcome.summary['strictly_decreasing']
        assert outcome.summary['centers'][0][1] < 0.5

    def test_progress_callback(self):
        spec = self._spec(**{'experiment.mode': 'sink-study', 'experiment.sink_steps': 2, 'model.e0': 10.0,
                             'dislocations.centers': '0.5, 0.5', 'dislocations.coeffs': '1, 0',
                             'mesh.refinement': 16})
        calls = []
        runner = ExperimentRunner(spec)
        runner.set_progress_callback(lambda current, total, message: calls.append((current, total)))
        runner.run()
        assert calls and all(total == 2 for _, total in calls)

    def test_corner_failure_exit_code(self, monkeypatch):
        """枚举不完整时返回校验失败退出码"""
        from src.core import runner as runner_module

        spec = self._spec(**{'experiment.mode': 'corner', 'experiment.omegas': '1.5'})
        original = runner_module.corner_roots

        def incomplete(omega):
            report = original(omega)
            report.enumerated_count += 1
            return report

        monkeypatch.setattr(runner_module, 'corner_roots', incomplete)
        outcome = ExperimentRunner(spec).run()
        assert outcome.exit_code == EXIT_VALIDATION_FAILURE
        assert outcome.summary['passed'] is False

    def test_nucleate_failure_exit_code(self, monkeypatch):
        """阈值偏差超出容差时返回校验失败退出码"""
        from src.core import runner as runner_module
        from src.core.validation import OracleReport, ThresholdScan

        def off_by_double(*args, **kwargs):
            report = OracleReport.compare("nucleation_threshold", 2.0, 1.0, 0.1)
            return ThresholdScan(rows=[(1.0, 0, 1.0), (2.0, 1, 1.0)], empirical=2.0, estimate=1.0,
                                 self_energy=0.5, report=report)

        monkeypatch.setattr(runner_module, 'nucleation_threshold_scan', off_by_double)
        outcome = ExperimentRunner(self._spec(**{'experiment.mode': 'nucleate'})).run()
        assert outcome.exit_code == EXIT_VALIDATION_FAILURE
        assert outcome.summary['within_tolerance'] is False
        assert os.path.exists(os.path.join(self.temp_dir, "out", "validation.csv"))
