"""
Test configuration and fixtures for pytest
"""
import numpy as np
import pytest

import assembly
import storage
from mesh import build_mesh, build_nesting
from synth import random_coefficient


@pytest.fixture
def rng():
    """Seeded generator so every test is reproducible"""
    return np.random.default_rng(1234)


@pytest.fixture
def mesh_1d():
    return build_mesh(1, 8)


@pytest.fixture
def mesh_2d():
    return build_mesh(2, 4)


@pytest.fixture
def nesting_1d():
    """Coarse 4 cells inside fine 16 cells"""
    return build_nesting(build_mesh(1, 4), build_mesh(1, 16))


@pytest.fixture
def nesting_2d():
    """Coarse 4x4 inside fine 16x16"""
    return build_nesting(build_mesh(2, 4), build_mesh(2, 16))


@pytest.fixture
def coefficient_1d():
    return random_coefficient(build_mesh(1, 8), 1.0, 10.0, seed=7)


@pytest.fixture
def coefficient_2d():
    return random_coefficient(build_mesh(2, 8), 1.0, 10.0, seed=7)


@pytest.fixture
def unit_stiffness(mesh_2d):
    """FEM stiffness of the constant coefficient on the 4x4 mesh"""
    return assembly.assemble_stiffness(mesh_2d, assembly.constant_coefficient(mesh_2d))


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Route run directories to a temporary folder"""
    monkeypatch.setattr(storage, 'OUTPUT_DIR', str(tmp_path / 'runs'))
    return tmp_path / 'runs'
