"""
性能测试模块

缓存命中、并行求值的确定性与若干耗时上限。
"""

import math
import time

import numpy as np
import pytest

from src.core import elasticity
from src.core.config import ModelParams, ScheduleParams
from src.core.corner import corner_roots
from src.core.dislocations import BurgersLattice, DislocationMeasure
from src.core.elasticity import get_problem
from src.core.geometry import Profile
from src.core.optimizer import evaluate_configuration, fd_gradient, nucleation_sweep

UNIT = BurgersLattice(((1.0, 0.0), (0.0, 1.0)))


class TestProblemCache:
    """弹性问题缓存测试"""

    def setup_method(self):
        self.params = ModelParams(e0=1.0)

    def test_same_profile_reuses_problem(self, mocker):
        spy = mocker.spy(elasticity, 'build_mesh')
        p = Profile.flat(1.0, 1.0, 8)
        first = get_problem(p, self.params.lame, 8)
        second = get_problem(Profile.flat(1.0, 1.0, 8), self.params.lame, 8)
        assert first is second
        assert spy.call_count == 1

    def test_refinement_is_part_of_key(self):
        p = Profile.flat(1.0, 1.0, 8)
        assert get_problem(p, self.params.lame, 8) is not get_problem(p, self.params.lame, 16)

    def test_least_recent_entry_evicted(self):
        profiles = [Profile.flat(1.0, 1.0 + 0.01 * k, 8) for k in range(17)]
        first = get_problem(profiles[0], self.params.lame, 4)
        for p in profiles[1:]:
            get_problem(p, self.params.lame, 4)
        assert get_problem(profiles[0], self.params.lame, 4) is not first

    def test_dislocation_moves_share_mesh(self, mocker):
        """只移动位错时不重新生成网格"""
        sigma = DislocationMeasure.empty(UNIT, self.params.r0).add((0.5, 0.5), (1, 0))
        p = Profile.flat(1.0, 1.0, 8)
        schedule = ScheduleParams(max_threads=1)
        evaluate_configuration(p, sigma, self.params, schedule, 8)
        spy = mocker.spy(elasticity, 'build_mesh')
        evaluate_configuration(p, sigma.move(0, (0.45, 0.5)), self.params, schedule, 8)
        assert spy.call_count == 0


class TestParallelEvaluation:
    """线程池求值测试"""

    def setup_method(self):
        self.params = ModelParams(e0=4.0)
        self.p = Profile.flat(1.0, 1.0, 16)

    def test_fd_gradient_independent_of_threads(self):
        sigma = DislocationMeasure.empty(UNIT, self.params.r0).add((0.5, 0.5), (1, 0))
        serial = ScheduleParams(max_threads=1)
        parallel = ScheduleParams(max_threads=4)
        cfg = evaluate_configuration(self.p, sigma, self.params, serial, 8)
        g1 = fd_gradient(cfg, 0, self.params, serial)
        g4 = fd_gradient(cfg, 0, self.params, parallel)
        assert np.array_equal(g1, g4)

    def test_nucleation_sweep_independent_of_threads(self):
        sigma = DislocationMeasure.empty(UNIT, self.params.r0)
        results = []
        for threads in (1, 4):
            schedule = ScheduleParams(max_threads=threads, nucleation=True, nucleation_spacing=0.25,
                                      nucleation_bottom_only=True, max_nucleations=1)
            cfg = evaluate_configuration(self.p, sigma, self.params, schedule, 8)
            results.append(nucleation_sweep(cfg, self.params, schedule))
        assert results[0].energy == results[1].energy
        assert results[0].sigma == results[1].sigma


class TestRuntimeBounds:
    """耗时上限"""

    def test_corner_enumeration_time(self):
        start = time.time()
        for fraction in (1.1, 1.5, 1.9):
            assert corner_roots(fraction * math.pi).complete
        assert time.time() - start < 60.0

    @pytest.mark.slow
    def test_fine_solve_time(self):
        params = ModelParams(e0=1.0)
        sigma = DislocationMeasure.empty(UNIT, params.r0).add((0.5, 0.5), (1, 0))
        start = time.time()
        cfg = evaluate_configuration(Profile.flat(1.0, 1.0, 16), sigma, params, ScheduleParams(), 64)
        elapsed = time.time() - start
        print(f"细分 64 求解耗时: {elapsed:.2f} 秒")
        assert math.isfinite(cfg.energy)
        assert elapsed < 120.0
