"""
实验运行模块

按运行模式调度求解、极小化与校验，并通过 ReportGenerator 写出全部结果。
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from .config import ExperimentSpec, ModelParams
from .corner import CORNER_FIELDS, corner_roots, corner_table, verify_strip_free
from .elasticity import LameTensor, curl_residual
from .energy import euler_lagrange_residual
from .optimizer import (TRACE_FIELDS, Configuration, alternate_minimize, dislocation_step, evaluate_configuration,
                        orientation_gain)
from .reporter import ReportGenerator
from .validation import (REPORT_FIELDS, OracleReport, all_passed, curl_convergence, fd_consistency,
                         flat_film_oracle, nucleation_threshold_scan, oracle_equivalence, penalization_check,
                         single_dislocation, flat_profile, tiny_instance)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERIC_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_VALIDATION_FAILURE = 3


@dataclass
class RunOutcome:
    """一次运行的结果"""
    mode: str
    exit_code: int
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    elapsed: float = 0.0


class ExperimentRunner:
    """实验运行器"""

    def __init__(self, spec: ExperimentSpec):
        """
        初始化运行器

        Args:
            spec: 已校验的实验描述
        """
        self.spec = spec
        self.reporter = ReportGenerator(spec.output_dir)
        self.progress_callback: Optional[Callable[[int, int, str], None]] = None
        self._handlers = {
            'solve': self._run_solve,
            'minimize': self._run_minimize,
            'nucleate': self._run_nucleate,
            'sink-study': self._run_sink_study,
            'gamma-sweep': self._run_gamma_sweep,
            'corner': self._run_corner,
            'validate': self._run_validate,
        }

    def set_progress_callback(self, callback: Callable[[int, int, str], None]) -> None:
        self.progress_callback = callback

    @property
    def refinement(self) -> int:
        return self.spec.mesh.refinement

    def run(self) -> RunOutcome:
        """
        执行实验并写出清单

        Returns:
            RunOutcome: 退出码与摘要

        Raises:
            MeshError, SolverError: 数值失败（由命令行转换为退出码 1）
        """
        mode = self.spec.mode
        logger.info(f"开始运行: 模式 {mode}, 输出目录 {self.spec.output_dir}")
        start = time.time()
        summary, exit_code = self._handlers[mode]()
        summary = dict(summary, mode=mode, exit_code=exit_code)
        self.reporter.write_json("summary.json", summary)
        elapsed = time.time() - start
        self.reporter.write_manifest(self.spec.parameter_echo(), {'exit_code': exit_code, 'elapsed': elapsed})
        logger.info(f"运行结束: 模式 {mode}, 退出码 {exit_code}, 耗时 {elapsed:.2f} 秒")
        return RunOutcome(mode=mode, exit_code=exit_code, summary=summary,
                          artifacts=list(self.reporter.artifacts) + ['manifest.json'], elapsed=elapsed)

    # ------------------------------------------------------------------
    # 各模式
    # ------------------------------------------------------------------

    def _initial_configuration(self, params: Optional[ModelParams] = None) -> Configuration:
        spec = self.spec
        params = params or spec.model
        return evaluate_configuration(spec.initial_profile(), spec.initial_sigma(), params, spec.schedule,
                                      self.refinement)

    def _energy_rows(self, cfg: Configuration):
        b = cfg.breakdown
        e = cfg.state.energy
        header = ['elastic', 'mismatch', 'cross', 'self', 'surface', 'cuts', 'nucleation', 'volume_penalty',
                  'anchoring_penalty', 'total']
        row = [b.elastic, e.mismatch, e.cross, e.self_energy, b.surface, b.cuts, b.nucleation, b.volume_penalty,
               b.anchoring_penalty, b.total]
        return header, [row]

    def _el_rows(self, cfg: Configuration):
        residual = euler_lagrange_residual(cfg.profile, cfg.state, self.spec.model)
        rows = [[x, v, int(ex)] for x, v, ex in zip(residual.x, residual.values, residual.excluded)]
        return residual, rows

    def _run_solve(self):
        cfg = self._initial_configuration()
        header, rows = self._energy_rows(cfg)
        self.reporter.write_csv("energy.csv", header, rows)
        self.reporter.write_configuration(cfg, prefix="solved")
        self.reporter.write_field_table(cfg.state)
        summary = {'energy': cfg.breakdown.to_dict(), 'volume': cfg.profile.volume(),
                   'curl_residual': curl_residual(cfg.state), 'n_dislocations': len(cfg.sigma)}
        if cfg.profile.is_continuous:
            residual, el_rows = self._el_rows(cfg)
            self.reporter.write_csv("el_residual.csv", ['x', 'residual', 'excluded'], el_rows)
            summary['el_residual'] = {'sup': residual.sup_norm, 'l2': residual.l2_norm,
                                      'multiplier': residual.multiplier}
        return summary, EXIT_OK

    def _run_minimize(self):
        spec = self.spec
        result = alternate_minimize(self._initial_configuration(), spec.model, spec.schedule, self.progress_callback)
        self.reporter.write_csv("trace.csv", TRACE_FIELDS, [row.to_row() for row in result.trace])
        self.reporter.write_configuration(result.config)
        summary = {'energy': result.config.breakdown.to_dict(), 'converged': result.converged,
                   'sweeps': result.sweeps, 'max_sweeps_reached': result.max_sweeps_reached,
                   'volume': result.config.profile.volume(), 'n_dislocations': len(result.config.sigma),
                   'sup_distance_to_flat': result.config.profile.sup_distance_to_flat()}
        if result.el_residual is not None:
            _, el_rows = self._el_rows(result.config)
            self.reporter.write_csv("el_residual.csv", ['x', 'residual', 'excluded'], el_rows)
            summary['el_residual'] = {'sup': result.el_residual.sup_norm, 'l2': result.el_residual.l2_norm,
                                      'multiplier': result.el_residual.multiplier,
                                      'within_tolerance': result.el_residual.sup_norm <= spec.schedule.el_tol}
        return summary, EXIT_OK

    def _run_nucleate(self):
        spec = self.spec
        scan = nucleation_threshold_scan(spec.model, spec.schedule, self.refinement, spec.options.e0_grid,
                                         spec.options.threshold_tol)
        self.reporter.write_csv("nucleation_scan.csv", ['e0', 'nucleated', 'estimate'], scan.rows)
        self.reporter.write_csv("validation.csv", REPORT_FIELDS, [scan.report.to_row()])
        summary = {'empirical_threshold': scan.empirical, 'estimated_threshold': scan.estimate,
                   'self_energy': scan.self_energy, 'within_tolerance': scan.report.passed}
        return summary, EXIT_OK if scan.report.passed else EXIT_VALIDATION_FAILURE

    def _run_sink_study(self):
        spec = self.spec
        params, schedule = spec.model, spec.schedule
        cfg = self._initial_configuration()
        if cfg.sigma.is_empty:
            logger.warning("sink-study 需要至少一个位错，初始测度为空")

        rows = [self._sink_row(0, cfg)]
        monotone = True
        for step in range(1, spec.options.sink_steps + 1):
            new = dislocation_step(cfg, params, schedule)
            if new is cfg:
                logger.info(f"位错在第 {step} 步停止移动")
                break
            monotone &= new.energy < cfg.energy
            cfg = new
            rows.append(self._sink_row(step, cfg))
            if self.progress_callback:
                self.progress_callback(step, spec.options.sink_steps, f"能量 {cfg.energy:.10g}")

        self.reporter.write_csv("sink.csv", ['step', 'index', 'x', 'y', 'energy', 'elastic'],
                                [r for block in rows for r in block])
        self.reporter.write_configuration(cfg)
        summary: Dict[str, Any] = {'steps': len(rows) - 1, 'strictly_decreasing': monotone,
                                   'energy': cfg.breakdown.to_dict(), 'centers': cfg.sigma.centers().tolist()}
        if not cfg.sigma.is_empty:
            gain = orientation_gain(cfg, list(range(len(cfg.sigma))), params)
            summary['orientation_gain'] = gain
            summary['bottom_reached'] = bool(abs(cfg.sigma.centers()[:, 1] - params.r0).max()
                                             <= spec.schedule.fd_step_for(params.r0))
        return summary, EXIT_OK

    @staticmethod
    def _sink_row(step: int, cfg: Configuration) -> List[List[Any]]:
        return [[step, i, x, y, cfg.energy, cfg.breakdown.elastic]
                for i, (x, y) in enumerate(cfg.sigma.centers())]

    def _run_gamma_sweep(self):
        spec = self.spec
        rows = []
        distances = []
        for gamma in spec.options.gamma_values:
            params = spec.model.with_changes(gamma=gamma)
            result = alternate_minimize(self._initial_configuration(params), params, spec.schedule)
            distance = result.config.profile.sup_distance_to_flat()
            distances.append(distance)
            rows.append([gamma, distance, result.config.energy, result.sweeps, int(result.converged)])
            logger.info(f"γ = {gamma:g}: 与平坦轮廓的距离 {distance:.6g}")
        self.reporter.write_csv("gamma_sweep.csv", ['gamma', 'sup_distance', 'energy', 'sweeps', 'converged'], rows)
        monotone = all(b < a for a, b in zip(distances[:-1], distances[1:]))
        return {'distances': distances, 'monotone_decreasing': monotone}, EXIT_OK

    def _corner_reports(self):
        omegas = [w * math.pi for w in self.spec.options.omegas]
        unit = [corner_roots(w) for w in omegas]
        interior = [w for w in omegas if w < 2.0 * math.pi]
        strip = verify_strip_free(interior, self.spec.schedule.max_threads) if interior else []
        return unit, strip

    def _write_corner(self, unit, strip) -> List[OracleReport]:
        self.reporter.write_csv("corner_roots.csv", CORNER_FIELDS, corner_table(unit))
        self.reporter.write_csv(
            "corner_counts.csv", ['omega', 'enumerated', 'winding', 'tall_winding', 'complete'],
            [[r.omega, r.enumerated_count, r.winding_count, r.tall_winding_count, int(r.complete)] for r in unit])
        reports = [OracleReport.check(f"corner_count[ω={r.omega:.6g}]", r.enumerated_count, r.complete,
                                      oracle=r.winding_count) for r in unit]
        for r in unit:
            if abs(r.omega - 2.0 * math.pi) < 1e-12:
                alpha = r.roots[0].alpha.real if r.roots else math.nan
                reports.append(OracleReport.compare("crack_exponent", alpha, 0.5, 1e-10, relative=False))
        for v in strip:
            reports.append(OracleReport.check(f"strip_free[ω={v.omega:.6g}]", v.min_real_part, v.passed,
                                              oracle=0.5))
        return reports

    def _run_corner(self):
        unit, strip = self._corner_reports()
        reports = self._write_corner(unit, strip)
        passed = all_passed(reports)
        summary = {'omegas': [r.omega for r in unit], 'roots': {f"{r.omega:.17g}": len(r.roots) for r in unit},
                   'min_real_part': {f"{v.omega:.17g}": v.min_real_part for v in strip}, 'passed': passed}
        return summary, EXIT_OK if passed else EXIT_VALIDATION_FAILURE

    def _run_validate(self):
        spec = self.spec
        params = spec.model
        options = spec.options
        reports: List[OracleReport] = []

        # 闭式 W0
        reports.append(OracleReport.compare("W0[μ=1,λ=1]", LameTensor(1.0, 1.0).W0, 4.0 / 3.0, 1e-15))
        reports.append(OracleReport.compare("W0[μ=1,λ=0]", LameTensor(1.0, 0.0).W0, 1.0, 1e-15))

        # 平坦膜与交叉项
        for e0 in sorted({params.mismatch, 1.0, 4.0}):
            cross = options.cross_refinement if e0 in (1.0, 4.0) else None
            reports.extend(flat_film_oracle(params.with_changes(e0=e0), options.validate_refinement, cross))

        # 旋度残差
        _, curl_reports = curl_convergence(params)
        reports.extend(curl_reports)

        # 有限差分一致性：平坦膜、e0 = 10、位错在 (ℓ/2, 0.6h̄)
        strong = params.with_changes(e0=10.0)
        p = flat_profile(strong)
        sigma = single_dislocation(strong, (0.5 * strong.period, 0.6 * strong.d / strong.period))
        cfg = evaluate_configuration(p, sigma, strong, spec.schedule.with_changes(nucleation=False), self.refinement)
        reports.extend(fd_consistency(cfg, ['x', 'y'], strong, spec.schedule.with_changes(nucleation=False)))

        # 体积罚阈值两侧
        for factor in (1.1, 0.5):
            _, report = penalization_check(params.with_changes(e0=1.0), spec.schedule,
                                           min(self.refinement, 16), factor)
            reports.append(report)

        # 穷举与交替极小化
        reports.append(oracle_equivalence(tiny_instance(strong)))

        # 角点
        unit, strip = self._corner_reports()
        reports.extend(self._write_corner(unit, strip))

        self.reporter.write_csv("validation.csv", REPORT_FIELDS, [r.to_row() for r in reports])
        passed = all_passed(reports)
        failed = [r.name for r in reports if not r.passed]
        if failed:
            logger.error(f"校验失败: {', '.join(failed)}")
        self.reporter.write_text_summary("校验报告", {
            "概览": [f"检查数: {len(reports)}", f"通过: {len(reports) - len(failed)}", f"失败: {len(failed)}"],
            "失败项": failed or ["无"],
        })
        summary = {'checks': len(reports), 'failed': failed, 'passed': passed}
        return summary, EXIT_OK if passed else EXIT_VALIDATION_FAILURE


def run_experiment(spec: ExperimentSpec) -> RunOutcome:
    """运行实验的便捷函数"""
    return ExperimentRunner(spec).run()

