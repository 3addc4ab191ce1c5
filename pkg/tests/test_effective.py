"""
Effective Model Tests
Coarse solves for arbitrary stiffness matrices, the misfit functional and
the dist_f diagnostic
"""
import numpy as np
import pytest

import assembly
from effective import (EffectiveModel, EffectiveOperator, MeasurementSet, build_effective_matrix,
                       dist_f_diagnostic, functional_JH, misfit, solve_effective)
from errors import DimensionMismatch, InvalidMeasurements, NotPositiveDefinite


def make_measurements(S, mesh, U0, load):
    return MeasurementSet(mesh=mesh, boundary=U0, observed=EffectiveModel(S, mesh).predict(U0, load), load=load)


class TestSolveEffective:
    """Tests for L_{S_H}(u0, f)"""

    def test_linear_boundary_data_is_reproduced(self, mesh_2d, unit_stiffness):
        x1 = mesh_2d.coordinates[:, 0]
        u = EffectiveModel(unit_stiffness, mesh_2d).solve(x1[mesh_2d.boundary_nodes])
        assert np.allclose(u, x1, atol=1e-13)

    def test_constant_boundary_data(self, nesting_2d, coefficient_2d):
        S = assembly.galerkin_stiffness(coefficient_2d, nesting_2d)
        u0 = np.full(nesting_2d.coarse.boundary_count, -1.5)
        u = solve_effective(S, u0, np.zeros(nesting_2d.fine.node_count), nesting_2d)
        assert np.allclose(u, -1.5)

    def test_boundary_values_kept(self, nesting_2d, unit_stiffness, rng):
        u0 = rng.normal(size=nesting_2d.coarse.boundary_count)
        u = solve_effective(unit_stiffness, u0, np.ones(nesting_2d.fine.node_count), nesting_2d)
        assert np.array_equal(u[nesting_2d.coarse.boundary_nodes], u0)

    def test_operator_columns(self, nesting_2d, unit_stiffness):
        f = np.ones(nesting_2d.fine.node_count)
        op = build_effective_matrix(unit_stiffness, f, nesting_2d)
        n = nesting_2d.coarse.boundary_count
        assert op.matrix.shape == (nesting_2d.coarse.node_count, n)
        e = np.zeros(n)
        e[3] = 1.0
        assert np.allclose(op.matrix[:, 3], solve_effective(unit_stiffness, e, f, nesting_2d))

    def test_apply_matches_solve(self, nesting_2d, unit_stiffness, rng):
        f = np.ones(nesting_2d.fine.node_count)
        op = build_effective_matrix(unit_stiffness, f, nesting_2d)
        u0 = rng.normal(size=nesting_2d.coarse.boundary_count)
        assert np.allclose(op.apply(u0), solve_effective(unit_stiffness, u0, f, nesting_2d))

    def test_wrong_shape(self, mesh_2d):
        with pytest.raises(DimensionMismatch):
            EffectiveModel(np.eye(4), mesh_2d)

    def test_indefinite_interior(self, mesh_2d, unit_stiffness):
        with pytest.raises(NotPositiveDefinite):
            EffectiveModel(-unit_stiffness, mesh_2d)


class TestMisfit:
    """Tests for the functional J_H"""

    def test_exact_model_gives_zero(self, mesh_2d, unit_stiffness, rng):
        U0 = rng.uniform(-1, 1, size=(mesh_2d.boundary_count, 3))
        data = make_measurements(unit_stiffness, mesh_2d, U0, np.ones(mesh_2d.node_count))
        assert functional_JH(unit_stiffness, data) == pytest.approx(0.0, abs=1e-28)

    def test_doubled_target(self):
        target = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert misfit(2 * target, target) == pytest.approx(0.125)
        assert misfit(target, 2 * target) == pytest.approx(0.5)

    def test_zero_target(self):
        with pytest.raises(InvalidMeasurements):
            misfit(np.zeros((2, 2)), np.ones((2, 2)))

    def test_operator_target(self, nesting_2d, unit_stiffness):
        f = np.ones(nesting_2d.fine.node_count)
        op = build_effective_matrix(unit_stiffness, f, nesting_2d)
        assert functional_JH(unit_stiffness, op) == pytest.approx(0.0, abs=1e-26)
        assert functional_JH(2.0 * unit_stiffness, op) > 0


class TestMeasurementSet:
    """Tests for measurement validation"""

    def test_vector_inputs_become_columns(self, mesh_2d):
        data = MeasurementSet(mesh_2d, np.ones(mesh_2d.boundary_count), np.ones(mesh_2d.node_count),
                              np.zeros(mesh_2d.node_count))
        assert data.q == 1
        assert data.norm_squared == mesh_2d.node_count

    def test_zero_observations(self, mesh_2d):
        data = MeasurementSet(mesh_2d, np.ones((mesh_2d.boundary_count, 2)), np.zeros((mesh_2d.node_count, 2)),
                              np.zeros(mesh_2d.node_count))
        with pytest.raises(InvalidMeasurements):
            data.norm_squared

    def test_mismatched_q(self, mesh_2d):
        with pytest.raises(InvalidMeasurements):
            MeasurementSet(mesh_2d, np.ones((mesh_2d.boundary_count, 2)), np.ones((mesh_2d.node_count, 3)),
                           np.zeros(mesh_2d.node_count))

    def test_wrong_node_count(self, mesh_2d):
        with pytest.raises(DimensionMismatch):
            MeasurementSet(mesh_2d, np.ones((mesh_2d.boundary_count, 2)), np.ones((7, 2)),
                           np.zeros(mesh_2d.node_count))

    def test_subset(self, mesh_2d, rng):
        data = MeasurementSet(mesh_2d, rng.normal(size=(mesh_2d.boundary_count, 4)),
                              rng.normal(size=(mesh_2d.node_count, 4)), np.zeros(mesh_2d.node_count))
        part = data.subset([1, 3])
        assert part.q == 2
        assert np.array_equal(part.observed, data.observed[:, [1, 3]])
        assert part.metadata['subset'] == [1, 3]


class TestDistF:
    """Tests for the operator distance diagnostic"""

    def test_identical_operators(self, nesting_2d, unit_stiffness):
        op = build_effective_matrix(unit_stiffness, np.ones(nesting_2d.fine.node_count), nesting_2d)
        assert dist_f_diagnostic(op, op) == 0.0

    def test_homogeneity(self, nesting_2d, unit_stiffness):
        mesh = nesting_2d.coarse
        op = build_effective_matrix(unit_stiffness, np.ones(nesting_2d.fine.node_count), nesting_2d)
        zero = EffectiveOperator(mesh, np.zeros_like(op.boundary_part), np.zeros_like(op.source_response), op.load)
        doubled = EffectiveOperator(mesh, 2 * op.boundary_part, 2 * op.source_response, op.load)
        assert dist_f_diagnostic(doubled, op) == pytest.approx(dist_f_diagnostic(op, zero))
        assert dist_f_diagnostic(doubled, zero) == pytest.approx(2 * dist_f_diagnostic(op, zero))

    def test_source_part_only(self, mesh_2d):
        n, m = mesh_2d.boundary_count, mesh_2d.node_count
        a = EffectiveOperator(mesh_2d, np.zeros((m, n)), np.ones(m), np.zeros(m))
        b = EffectiveOperator(mesh_2d, np.zeros((m, n)), np.zeros(m), np.zeros(m))
        assert dist_f_diagnostic(a, b) == pytest.approx(1.0)

    def test_meshes_must_agree(self, mesh_2d):
        small = EffectiveOperator(mesh_2d, np.zeros((4, 2)), np.zeros(4), np.zeros(4))
        big = EffectiveOperator(mesh_2d, np.zeros((6, 2)), np.zeros(6), np.zeros(6))
        with pytest.raises(DimensionMismatch):
            dist_f_diagnostic(small, big)
