"""
Synthetic Data Tests
Coefficients, sources, fine reference solves, noise and measurement generation
"""
import logging

import numpy as np
import pytest

import assembly
import synth
from errors import ConfigError, DimensionMismatch, MeshError
from mesh import build_mesh, build_nesting


class TestCoefficients:
    """Tests for ground-truth coefficients"""

    def test_random_range_and_seed(self):
        mesh = build_mesh(2, 8)
        a = synth.random_coefficient(mesh, 1.0, 50.0, seed=3)
        b = synth.random_coefficient(mesh, 1.0, 50.0, seed=3)
        assert np.array_equal(a.values, b.values)
        assert a.alpha >= 1.0 and a.beta <= 50.0

    def test_bad_range(self):
        with pytest.raises(ConfigError):
            synth.random_coefficient(build_mesh(1, 4), 5.0, 1.0, seed=0)

    def test_sine_coefficient(self):
        coefficient = synth.sine_coefficient_1d(build_mesh(1, 512))
        assert coefficient.alpha >= 1.0 / 3.0 - 1e-12
        assert coefficient.beta <= 1.0 + 1e-12

    def test_sine_needs_resolution(self):
        with pytest.raises(MeshError):
            synth.sine_coefficient_1d(build_mesh(1, 64))


class TestSources:
    """Tests for the experiment right-hand sides"""

    def test_unit(self, mesh_2d):
        assert np.all(synth.experiment_rhs('unit', mesh_2d) == 1.0)

    def test_tent_peak(self, mesh_2d):
        g1 = synth.experiment_rhs('g1', mesh_2d)
        center = mesh_2d.node_index([2, 2])
        assert g1[center] == pytest.approx(5.0)
        assert np.all(g1[mesh_2d.boundary_nodes] == 0.0)

    def test_step(self, mesh_2d):
        g2 = synth.experiment_rhs('g2', mesh_2d)
        x1 = mesh_2d.coordinates[:, 0]
        assert np.all(g2[x1 >= 0.5] == 10.0)
        assert np.all(g2[x1 < 0.5] == 0.0)

    def test_unknown_name(self, mesh_2d):
        with pytest.raises(ConfigError):
            synth.experiment_rhs('g3', mesh_2d)

    def test_two_dimensional_only(self, mesh_1d):
        with pytest.raises(MeshError):
            synth.experiment_rhs('g1', mesh_1d)


class TestNoise:
    """Tests for multiplicative noise"""

    def test_zero_noise_is_identity(self, rng):
        v = rng.normal(size=(5, 3))
        assert np.array_equal(synth.apply_noise(v, synth.NoiseModel(0.0)), v)

    def test_relative_bound(self, rng):
        v = rng.normal(size=(50, 4))
        noisy = synth.apply_noise(v, synth.NoiseModel(0.05, seed=2))
        assert np.all(np.abs(noisy - v) <= 0.05 * np.abs(v) + 1e-15)
        assert not np.array_equal(noisy, v)

    def test_reproducible(self, rng):
        v = rng.normal(size=10)
        model = synth.NoiseModel(0.03, seed=9)
        assert np.array_equal(synth.apply_noise(v, model), synth.apply_noise(v, model))

    def test_row_selection(self, rng):
        v = rng.normal(size=(6, 3))
        model = synth.NoiseModel(0.05, seed=2)
        full = synth.apply_noise(v, model)
        part = synth.apply_noise(v, model, rows=[1, 4])
        assert np.array_equal(part[[1, 4]], full[[1, 4]])
        assert np.array_equal(part[[0, 2, 3, 5]], v[[0, 2, 3, 5]])

    def test_warns_above_range(self, caplog):
        with caplog.at_level(logging.WARNING, logger='synth'):
            model = synth.NoiseModel(0.2)
        assert not model.in_experiment_range
        assert 'exceeds' in caplog.text

    def test_negative(self):
        with pytest.raises(ConfigError):
            synth.NoiseModel(-0.1)


class TestFineSolve:
    """Tests for fine reference solutions and coarse sampling"""

    def test_constant_boundary_data(self, nesting_2d, coefficient_2d):
        u0 = np.full(nesting_2d.coarse.boundary_count, 4.0)
        u = synth.fine_reference_solve(coefficient_2d, nesting_2d, u0, np.zeros(nesting_2d.fine.node_count))
        assert np.allclose(u, 4.0)

    def test_boundary_prolongation_is_linear_along_edges(self, nesting_2d):
        coarse = nesting_2d.coarse
        u0 = coarse.coordinates[coarse.boundary_nodes, 0]
        fine_boundary = synth.prolongate_boundary(u0, nesting_2d)
        fine = nesting_2d.fine
        assert np.allclose(fine_boundary, fine.coordinates[fine.boundary_nodes, 0])

    def test_coarsen(self, nesting_1d):
        fine = np.arange(nesting_1d.fine.node_count, dtype=float)
        assert synth.coarsen(fine, nesting_1d).tolist() == [0.0, 4.0, 8.0, 12.0, 16.0]
        with pytest.raises(DimensionMismatch):
            synth.coarsen(np.ones(3), nesting_1d)

    def test_solver_reuse(self, nesting_2d, coefficient_2d, rng):
        solver = synth.FineSolver(coefficient_2d, nesting_2d.fine)
        G = rng.normal(size=(nesting_2d.fine.boundary_count, 3))
        f = np.ones(nesting_2d.fine.node_count)
        block = solver.solve(G, f)
        assert np.allclose(block[:, 1], solver.solve(G[:, 1], f))


class TestGenerateMeasurements:
    """Tests for synthetic measurement sets"""

    def test_full_boundary_data(self, nesting_2d, coefficient_2d):
        f = np.ones(nesting_2d.fine.node_count)
        data = synth.generate_measurements(coefficient_2d, nesting_2d, f, boundary='full')
        n = nesting_2d.coarse.boundary_count
        assert data.q == n
        assert np.array_equal(data.boundary, np.eye(n))
        assert np.allclose(data.observed[nesting_2d.coarse.boundary_nodes], np.eye(n))

    def test_random_boundary_data(self, nesting_2d, coefficient_2d):
        f = np.ones(nesting_2d.fine.node_count)
        data = synth.generate_measurements(coefficient_2d, nesting_2d, f, boundary='random', q=5, seed=4)
        assert data.q == 5
        assert np.all(np.abs(data.boundary) <= 1.0)
        assert data.metadata['boundary_mode'] == 'random'

    def test_threads_do_not_change_data(self, nesting_2d, coefficient_2d):
        f = np.ones(nesting_2d.fine.node_count)
        noise = synth.NoiseModel(0.05, seed=1)
        serial = synth.generate_measurements(coefficient_2d, nesting_2d, f, 'random', q=6, noise=noise, threads=1)
        threaded = synth.generate_measurements(coefficient_2d, nesting_2d, f, 'random', q=6, noise=noise, threads=3)
        assert np.allclose(serial.observed, threaded.observed, rtol=1e-12, atol=1e-14)

    def test_observations_match_fine_solves(self, nesting_1d, coefficient_1d):
        f = np.ones(nesting_1d.fine.node_count)
        data = synth.generate_measurements(coefficient_1d, nesting_1d, f, 'full')
        column = synth.fine_reference_solve(coefficient_1d, nesting_1d, np.array([0.0, 1.0]), f)
        assert np.allclose(data.observed[:, 1], synth.coarsen(column, nesting_1d))
        assert np.allclose(data.load, assembly.load_vector(f, nesting_1d))

    def test_boundary_rows_stay_exact(self, nesting_2d, coefficient_2d):
        f = np.ones(nesting_2d.fine.node_count)
        clean = synth.generate_measurements(coefficient_2d, nesting_2d, f, 'full')
        noisy = synth.generate_measurements(coefficient_2d, nesting_2d, f, 'full', noise=synth.NoiseModel(0.05, seed=2))
        boundary, interior = nesting_2d.coarse.boundary_nodes, nesting_2d.coarse.interior_nodes
        assert np.array_equal(noisy.observed[boundary], clean.observed[boundary])
        change = np.abs(noisy.observed[interior] - clean.observed[interior])
        assert np.all(change <= 0.05 * np.abs(clean.observed[interior]) + 1e-15)
        assert change.max() > 0

    def test_bad_mode(self, nesting_1d, coefficient_1d):
        f = np.ones(nesting_1d.fine.node_count)
        with pytest.raises(ConfigError):
            synth.generate_measurements(coefficient_1d, nesting_1d, f, boundary='partial')
        with pytest.raises(ConfigError):
            synth.generate_measurements(coefficient_1d, nesting_1d, f, boundary='random', q=0)


class TestLargeNesting:
    def test_ratio(self):
        assert build_nesting(build_mesh(2, 32), build_mesh(2, 512)).ratio == 16
