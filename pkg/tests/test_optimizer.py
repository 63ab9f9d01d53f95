"""
测试交替极小化优化器
"""

import numpy as np
import pytest

from src.core.config import ModelParams, ScheduleParams
from src.core.dislocations import BurgersLattice, DislocationMeasure
from src.core.geometry import Profile
from src.core.optimizer import (TRACE_FIELDS, AlternatingMinimizer, DiscreteSearchSpace, Objective,
                                alternate_minimize, dislocation_step, evaluate_configuration, fd_gradient,
                                is_admissible, lattice_sweep, nucleation_candidates, nucleation_sweep,
                                objective_energy, obstacle_heights, orientation_gain, profile_step)

UNIT = BurgersLattice(((1.0, 0.0), (0.0, 1.0)))
REFINEMENT = 8


@pytest.fixture
def params():
    """e0 = 1 的默认模型参数"""
    return ModelParams(e0=1.0)


@pytest.fixture
def schedule():
    """单线程计划"""
    return ScheduleParams(max_threads=1, max_sweeps=3)


def empty_sigma(r0: float = 0.1) -> DislocationMeasure:
    return DislocationMeasure.empty(UNIT, r0)


class TestObjective:
    """目标泛函选择测试"""

    def test_constrained_has_no_penalty(self, params, schedule):
        p = Profile.flat(1.0, 0.95, 16)
        cfg = evaluate_configuration(p, empty_sigma(), params, schedule, REFINEMENT)
        assert cfg.breakdown.volume_penalty == 0.0
        assert cfg.energy == pytest.approx(0.95 * params.W0 + 1.0, rel=1e-10)

    def test_penalized_adds_volume_term(self, params, schedule):
        p = Profile.flat(1.0, 0.95, 16)
        penalized = schedule.with_changes(objective=Objective.PENALIZED.value)
        cfg = evaluate_configuration(p, empty_sigma(), params, penalized, REFINEMENT)
        assert cfg.breakdown.volume_penalty == pytest.approx(0.05 * params.penalty_weight, rel=1e-10)

    def test_nucleation_term(self, params, schedule):
        p = Profile.flat(1.0, 1.0, 16)
        sigma = empty_sigma().add((0.5, 0.5), (1, 0))
        cfg = evaluate_configuration(p, sigma, params, schedule, REFINEMENT)
        with_nucleation = objective_energy(p, sigma, cfg.state, params, schedule.with_changes(nucleation=True))
        assert with_nucleation.total - cfg.energy == pytest.approx(params.c_o)

    def test_admissibility(self, params):
        p = Profile.flat(1.0, 1.0, 16)
        assert is_admissible(p, empty_sigma().add((0.5, 0.5), (1, 0)), params)
        # 圆盘伸出图像
        assert not is_admissible(p, empty_sigma().add((0.5, 0.95), (1, 0)), params)
        # 圆盘穿过基底
        assert not is_admissible(p, empty_sigma().add((0.5, 0.05), (1, 0)), params)
        # 膜厚低于 h_min
        assert not is_admissible(Profile.flat(1.0, 0.01, 16), empty_sigma(), params)


class TestDislocationStep:
    """位错步测试"""

    def setup_method(self):
        self.params = ModelParams(e0=1.0)
        self.schedule = ScheduleParams(max_threads=1)
        self.flat = Profile.flat(1.0, 1.0, 16)

    def test_gradient_points_upward(self):
        """e0 > 0、b = (1,0) 时能量随 y₀ 增加（位错倾向下沉）"""
        sigma = empty_sigma().add((0.5, 0.5), (1, 0))
        cfg = evaluate_configuration(self.flat, sigma, self.params, self.schedule, 16)
        grad = fd_gradient(cfg, 0, self.params, self.schedule)
        assert grad[1] > 0.0

    def test_step_decreases_energy_and_sinks(self):
        sigma = empty_sigma().add((0.5, 0.5), (1, 0))
        cfg = evaluate_configuration(self.flat, sigma, self.params, self.schedule, 16)
        new = dislocation_step(cfg, self.params, self.schedule)
        assert new.energy < cfg.energy
        assert new.sigma.entries[0].center[1] < 0.5
        assert new.sigma.entries[0].center[1] >= self.params.r0

    def test_bottom_clamp(self):
        """已在底部的位错不会穿过基底"""
        sigma = empty_sigma().add((0.5, 0.1), (1, 0))
        cfg = evaluate_configuration(self.flat, sigma, self.params, self.schedule, 16)
        new = dislocation_step(cfg, self.params, self.schedule)
        assert new.energy <= cfg.energy
        assert new.sigma.entries[0].center[1] >= self.params.r0 - 1e-15

    def test_orientation_gain(self):
        """把有利取向的位错反转会抬高能量"""
        sigma = empty_sigma().add((0.5, 0.5), (1, 0))
        cfg = evaluate_configuration(self.flat, sigma, self.params, self.schedule, 16)
        assert orientation_gain(cfg, [0], self.params) > 0.0


class TestProfileStep:
    """轮廓步测试"""

    def setup_method(self):
        self.params = ModelParams(e0=1.0)
        self.schedule = ScheduleParams(max_threads=1)
        self.wavy = Profile.sinusoid(1.0, 1.0, 0.05, 1, 32)

    def test_step_decreases_energy_and_keeps_volume(self):
        cfg = evaluate_configuration(self.wavy, empty_sigma(), self.params, self.schedule, 16)
        new = profile_step(cfg, self.params, self.schedule)
        assert new.energy < cfg.energy
        assert new.profile.volume() == pytest.approx(self.params.d, abs=1e-10)
        assert new.profile.min_height() >= self.params.h_min

    def test_obstacle_without_dislocations(self):
        assert np.all(np.isneginf(obstacle_heights(self.wavy, empty_sigma())))

    def test_obstacle_above_core(self):
        sigma = empty_sigma().add((0.5, 0.8), (1, 0))
        bound = obstacle_heights(self.wavy, sigma)
        node = int(np.argmin(np.abs(self.wavy.node_x - 0.5)))
        assert bound[node] >= 0.8 + self.params.r0
        assert np.isneginf(bound[0])


class TestNucleation:
    """形核测试"""

    def setup_method(self):
        self.params = ModelParams(e0=0.0)
        self.schedule = ScheduleParams(max_threads=1, nucleation_bottom_only=True, nucleation_spacing=0.25)
        self.flat = Profile.flat(1.0, 1.0, 16)

    def test_bottom_candidates(self):
        candidates = nucleation_candidates(self.flat, self.params, self.schedule)
        assert candidates == [(0.0, 0.1), (0.25, 0.1), (0.5, 0.1), (0.75, 0.1)]

    def test_full_candidate_grid_fits(self):
        grid = nucleation_candidates(self.flat, self.params, self.schedule.with_changes(nucleation_bottom_only=False))
        assert len(grid) > 4
        assert all(0.1 <= y <= 0.9 + 1e-12 for _, y in grid)

    def test_no_nucleation_without_mismatch(self):
        """e0 = 0 时任何形核都会抬高能量"""
        cfg = evaluate_configuration(self.flat, empty_sigma(), self.params, self.schedule, REFINEMENT)
        new = nucleation_sweep(cfg, self.params, self.schedule)
        assert new.sigma.is_empty
        assert new.energy == pytest.approx(cfg.energy)

    def test_empty_lattice_skips(self):
        sigma = DislocationMeasure.empty(BurgersLattice(()), 0.1)
        cfg = evaluate_configuration(self.flat, sigma, self.params, self.schedule, REFINEMENT)
        assert nucleation_sweep(cfg, self.params, self.schedule) is cfg


class TestDiscreteSearchSpace:
    """量化搜索空间测试"""

    def setup_method(self):
        self.base = Profile.flat(1.0, 1.0, 8)
        self.space = DiscreteSearchSpace(base=self.base, free_nodes=(4,), levels=(0.9, 1.0, 1.1),
                                         centers=((0.5, 0.3), (0.5, 0.5)), coeffs=(1, 0))

    def test_size_and_order(self):
        points = list(self.space.points())
        assert self.space.size == 6
        assert len(points) == 6
        assert points[0] == ((0,), 0)
        assert points[1] == ((0,), 1)
        assert points[-1] == ((2,), 1)

    def test_profile_and_sigma(self):
        p = self.space.profile_for((2,))
        assert p.node_h[4] == pytest.approx(1.1)
        assert p.node_h[0] == pytest.approx(1.0)
        sigma = self.space.sigma_for(empty_sigma(), 1)
        assert sigma.entries[0].center == (0.5, 0.5)
        assert self.space.sigma_for(empty_sigma(), None).is_empty

    def test_without_dislocation(self):
        space = DiscreteSearchSpace(base=self.base, free_nodes=(4,), levels=(0.9, 1.0))
        assert not space.has_dislocation
        assert list(space.points()) == [((0,), None), ((1,), None)]

    def test_lattice_sweep_is_monotone(self):
        params = ModelParams(e0=1.0)
        schedule = ScheduleParams(objective='penalized', lattice=self.space, max_threads=1)
        start = evaluate_configuration(self.space.profile_for((0,)), self.space.sigma_for(empty_sigma(), 1),
                                       params, schedule, REFINEMENT)
        new = lattice_sweep(start, params, schedule)
        assert new.energy <= start.energy


class TestAlternatingMinimizer:
    """交替极小化驱动测试"""

    def setup_method(self):
        self.params = ModelParams(e0=1.0)
        self.schedule = ScheduleParams(max_threads=1, max_sweeps=3, dislocation_steps=0)

    def test_trace_is_monotone_and_volume_preserved(self):
        p = Profile.sinusoid(1.0, 1.0, 0.05, 1, 32)
        cfg = evaluate_configuration(p, empty_sigma(), self.params, self.schedule, 16)
        result = alternate_minimize(cfg, self.params, self.schedule)
        totals = [row.breakdown.total for row in result.trace]
        assert all(b <= a + 1e-12 for a, b in zip(totals, totals[1:]))
        assert all(abs(row.volume - self.params.d) < 1e-10 for row in result.trace)
        assert result.config.energy < cfg.energy
        assert result.el_residual is not None

    def test_initial_volume_projected(self):
        p = Profile.sinusoid(1.0, 1.1, 0.05, 1, 32)
        cfg = evaluate_configuration(p, empty_sigma(), self.params, self.schedule, 16)
        result = alternate_minimize(cfg, self.params, self.schedule.with_changes(max_sweeps=1))
        assert result.trace[0].volume == pytest.approx(self.params.d, abs=1e-10)

    def test_flat_film_converges_immediately(self):
        p = Profile.flat(1.0, 1.0, 16)
        cfg = evaluate_configuration(p, empty_sigma(), self.params, self.schedule, REFINEMENT)
        result = alternate_minimize(cfg, self.params, self.schedule)
        assert result.converged
        assert result.sweeps == 1
        assert not result.max_sweeps_reached
        assert result.config.energy == pytest.approx(cfg.energy)

    def test_stop_before_run(self):
        p = Profile.flat(1.0, 1.0, 16)
        cfg = evaluate_configuration(p, empty_sigma(), self.params, self.schedule, REFINEMENT)
        minimizer = AlternatingMinimizer(self.params, self.schedule)
        minimizer.stop()
        result = minimizer.run(cfg)
        assert not result.converged
        assert len(result.trace) == 1

    def test_progress_callback(self):
        calls = []
        p = Profile.flat(1.0, 1.0, 16)
        cfg = evaluate_configuration(p, empty_sigma(), self.params, self.schedule, REFINEMENT)
        alternate_minimize(cfg, self.params, self.schedule,
                           progress_callback=lambda current, total, message: calls.append((current, total)))
        assert calls == [(1, 3)]

    def test_trace_row_layout(self):
        p = Profile.flat(1.0, 1.0, 16)
        cfg = evaluate_configuration(p, empty_sigma(), self.params, self.schedule, REFINEMENT)
        result = alternate_minimize(cfg, self.params, self.schedule)
        row = result.trace[0].to_row()
        assert len(row) == len(TRACE_FIELDS)
        assert row[1] == 'initial'

    def test_lattice_mode(self):
        base = Profile.flat(1.0, 1.0, 8)
        space = DiscreteSearchSpace(base=base, free_nodes=(4,), levels=(0.9, 1.0, 1.1))
        schedule = ScheduleParams(objective='penalized', lattice=space, max_threads=1, max_sweeps=5)
        cfg = evaluate_configuration(space.profile_for((0,)), empty_sigma(), self.params, schedule, REFINEMENT)
        result = alternate_minimize(cfg, self.params, schedule)
        assert result.converged
        assert result.config.energy <= cfg.energy
        assert all(row.step in ('initial', 'lattice') for row in result.trace)
