"""
弹性求解模块测试
"""

import numpy as np
import pytest

from src.core.config import ModelParams
from src.core.dislocations import BurgersLattice, DislocationEntry, DislocationMeasure, Mollifier
from src.core.elasticity import (LameTensor, assemble_total, curl_residual, energy_density, field_table,
                                 first_variation, get_problem, singular_field, solve_corrector, solve_mismatch)
from src.core.geometry import Profile
from src.core.validation import analytic_cross_term

UNIT = BurgersLattice(((1.0, 0.0), (0.0, 1.0)))
C = LameTensor(1.0, 1.0)


def single(center, coeffs=(1, 0), r0=0.1):
    return DislocationMeasure(lattice=UNIT, r0=r0, entries=(DislocationEntry(center, coeffs),))


class TestLameTensor:
    """弹性张量测试"""

    def test_w0(self):
        assert C.W0 == pytest.approx(4.0 / 3.0)
        assert LameTensor(2.0, 0.0).W0 == pytest.approx(4.0)

    def test_flat_strain(self):
        assert np.allclose(C.flat_strain, np.diag([1.0, -1.0 / 3.0]))

    def test_flat_stress_is_uniaxial(self):
        """ℂE(v0) = diag(2W0, 0)"""
        stress = C.stress(C.flat_strain)
        assert np.allclose(stress, np.diag([2.0 * C.W0, 0.0]))

    def test_non_elliptic_rejected(self):
        with pytest.raises(ValueError):
            LameTensor(1.0, -1.5)
        with pytest.raises(ValueError):
            LameTensor(0.0, 1.0)


class TestEnergyDensity:
    """能量密度测试"""

    def test_zero_strain(self):
        assert float(energy_density(np.zeros((2, 2)), C)) == 0.0

    def test_flat_strain_density(self):
        """W(diag(1, -1/3)) = 4/3 = W0"""
        assert float(energy_density(np.diag([1.0, -1.0 / 3.0]), C)) == pytest.approx(4.0 / 3.0)

    def test_pure_shear(self):
        shear = np.array([[0.0, 0.5], [0.5, 0.0]])
        assert float(energy_density(shear, C)) == pytest.approx(0.5)

    def test_batched(self):
        E = np.stack([np.zeros((2, 2)), np.diag([1.0, -1.0 / 3.0])])
        assert np.allclose(energy_density(E, C), [0.0, 4.0 / 3.0])


class TestMismatchSolve:
    """失配平衡测试"""

    def setup_method(self):
        self.flat = Profile.flat(1.0, 1.0, 8)

    def test_flat_solution_is_v0(self):
        """平坦膜的离散解与 v0 = (x, -λy/(2μ+λ)) 一致"""
        u = solve_mismatch(self.flat, C, refinement=8)
        nodes = u.mesh.nodes
        assert np.allclose(u.values[:, 0], nodes[:, 0], atol=1e-10)
        assert np.allclose(u.values[:, 1], -nodes[:, 1] / 3.0, atol=1e-10)
        assert np.allclose(u.gradient, C.flat_strain, atol=1e-10)

    def test_flat_energy(self):
        """e0 = 1 时平坦膜弹性能为 W0·d"""
        state = assemble_total(self.flat, DislocationMeasure.empty(UNIT, 0.1), 1.0, C, refinement=8)
        assert state.energy.mismatch == pytest.approx(4.0 / 3.0, rel=1e-10)
        assert state.energy.cross == 0.0
        assert state.energy.self_energy == 0.0

    def test_flat_energy_thicker(self):
        state = assemble_total(Profile.flat(1.0, 2.0, 8), DislocationMeasure.empty(UNIT, 0.1), 1.0, C,
                               refinement=8)
        assert state.elastic_energy == pytest.approx(8.0 / 3.0, rel=1e-10)

    def test_zero_mismatch(self):
        state = assemble_total(self.flat, DislocationMeasure.empty(UNIT, 0.1), 0.0, C, refinement=8)
        assert state.elastic_energy == 0.0

    def test_quadratic_scaling_in_e0(self):
        empty = DislocationMeasure.empty(UNIT, 0.1)
        base = assemble_total(self.flat, empty, 1.0, C, refinement=8).elastic_energy
        scaled = assemble_total(self.flat, empty, 2.5, C, refinement=8).elastic_energy
        assert scaled == pytest.approx(6.25 * base, rel=1e-12)

    def test_problem_cache_reused(self):
        first = get_problem(self.flat, C, 8)
        second = get_problem(self.flat, C, 8)
        assert first is second
        assert get_problem(self.flat, C, 16) is not first


class TestSingularField:
    """奇异场测试"""

    def setup_method(self):
        self.sigma = single((0.5, 0.5), (1, 0))
        self.moll = Mollifier(0.1)

    def test_below_core_vanishes(self):
        K = singular_field(self.sigma, np.array([[0.5, 0.3], [0.2, 0.9]]))
        assert np.allclose(K, 0.0)

    def test_above_core_equals_marginal(self):
        K = singular_field(self.sigma, np.array([0.52, 0.7]))
        assert float(K[0, 0]) == pytest.approx(-float(self.moll.marginal(np.array(0.02))), rel=1e-10)
        assert float(K[1, 0]) == 0.0
        assert np.all(K[:, 1] == 0.0)

    def test_second_component(self):
        K = singular_field(single((0.5, 0.5), (0, -2)), np.array([0.5, 0.8]))
        assert float(K[0, 0]) == 0.0
        assert float(K[1, 0]) == pytest.approx(2.0 * float(self.moll.marginal(np.array(0.0))), rel=1e-10)

    def test_vanishes_on_substrate(self):
        xs = np.linspace(0.0, 1.0, 21)
        points = np.column_stack([xs, np.zeros_like(xs)])
        assert np.allclose(singular_field(single((0.5, 0.1)), points), 0.0)

    def test_empty_measure(self):
        K = singular_field(DislocationMeasure.empty(UNIT, 0.1), np.zeros((4, 3, 2)))
        assert K.shape == (4, 3, 2, 2)
        assert np.all(K == 0.0)


class TestCorrector:
    """修正场测试"""

    def setup_method(self):
        self.flat = Profile.flat(1.0, 1.0, 16)

    def test_linear_in_sigma(self):
        sigma = single((0.5, 0.5), (1, 0))
        once = solve_corrector(self.flat, sigma, C, refinement=16)
        twice = solve_corrector(self.flat, sigma.scaled(2), C, refinement=16)
        scale = float(np.max(np.abs(once.values)))
        assert scale > 0.0
        assert np.allclose(twice.values, 2.0 * once.values, atol=1e-9 * scale)

    def test_energy_split_scaling(self):
        """σ 加倍：交叉项加倍，自能四倍"""
        sigma = single((0.5, 0.5), (1, 0))
        once = assemble_total(self.flat, sigma, 1.0, C, refinement=16).energy
        twice = assemble_total(self.flat, sigma.scaled(2), 1.0, C, refinement=16).energy
        assert twice.mismatch == pytest.approx(once.mismatch, rel=1e-12)
        assert twice.cross == pytest.approx(2.0 * once.cross, rel=1e-8)
        assert twice.self_energy == pytest.approx(4.0 * once.self_energy, rel=1e-8)

    def test_opposite_pair_cancels(self):
        pair = DislocationMeasure(lattice=UNIT, r0=0.1, entries=(DislocationEntry((0.5, 0.5), (1, 0)),
                                                                DislocationEntry((0.5, 0.5), (-1, 0))))
        state = assemble_total(self.flat, pair, 1.0, C, refinement=16)
        assert state.energy.cross == 0.0
        assert state.energy.self_energy == 0.0

    def test_translation_equivariance(self):
        """平坦膜上平移两列（0.125），能量不变"""
        sigma = single((0.3, 0.5), (1, 0))
        base = assemble_total(self.flat, sigma, 1.0, C, refinement=16).elastic_energy
        shifted = assemble_total(self.flat, sigma.translate(0.125), 1.0, C, refinement=16).elastic_energy
        assert shifted == pytest.approx(base, rel=1e-8)

    def test_first_variation_vanishes(self):
        """离散平衡：对任意在基底上为零的周期试探场，一阶变分为零"""
        sigma = single((0.4, 0.5), (1, 1))
        state = assemble_total(self.flat, sigma, 1.0, C, refinement=16)
        x, y = state.mesh.nodes[:, 0], state.mesh.nodes[:, 1]
        w = np.column_stack([np.sin(2.0 * np.pi * x) * y, y ** 2])
        assert abs(first_variation(state, w)) < 1e-8

    def test_field_table_shape(self):
        state = assemble_total(self.flat, single((0.5, 0.5)), 1.0, C, refinement=8)
        table = field_table(state)
        assert table.shape == (state.mesh.n_elements, 9)
        assert np.all(table[:, 8] >= 0.0)


class TestCurlAndCrossTerm:
    """旋度残差与交叉项测试"""

    def test_curl_residual_decreases(self):
        flat = Profile.flat(1.0, 1.0, 16)
        sigma = single((0.5, 0.5), (1, 0), r0=0.2)
        coarse = curl_residual(assemble_total(flat, sigma, 1.0, C, refinement=16))
        fine = curl_residual(assemble_total(flat, sigma, 1.0, C, refinement=32))
        assert fine < coarse

    def test_curl_residual_zero_without_dislocations(self):
        state = assemble_total(Profile.flat(1.0, 1.0, 8), DislocationMeasure.empty(UNIT, 0.1), 1.0, C,
                               refinement=8)
        assert curl_residual(state) == 0.0

    def test_cross_term_matches_flat_formula(self):
        """-2e0W0b1(h̄ - y0)，粗网格上 5% 以内"""
        params = ModelParams(e0=1.0)
        flat = Profile.flat(1.0, 1.0, 16)
        for y0 in (0.3, 0.6):
            cross = assemble_total(flat, single((0.5, y0)), 1.0, C, refinement=32).energy.cross
            assert cross == pytest.approx(analytic_cross_term(params, 1.0, y0), rel=0.05)

    def test_cross_term_favors_deeper_dislocation(self):
        flat = Profile.flat(1.0, 1.0, 16)
        deep = assemble_total(flat, single((0.5, 0.3)), 1.0, C, refinement=32).energy.cross
        shallow = assemble_total(flat, single((0.5, 0.6)), 1.0, C, refinement=32).energy.cross
        assert deep < shallow
