"""Shared fixtures for pytest tests."""

from pathlib import Path

import numpy as np
import pytest

from plap_kacanov.fem import SourceTerm
from plap_kacanov.mesh import (
    Mesh,
    make_lshape_mesh,
    make_unit_disk_mesh,
    refine_uniformly,
)
from plap_kacanov.relaxation import Exponents, RelaxInterval

# Define the root directory of the project
PROJECT_ROOT = Path(__file__).parent.parent
EXAMPLES_DIR = PROJECT_ROOT / "tests" / "schemas" / "examples"


@pytest.fixture(scope="session")
def examples_dir():
    return EXAMPLES_DIR


@pytest.fixture
def unit_square_mesh():
    """Unit square split along its diagonal (no free vertices)."""
    points = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    return Mesh.from_arrays(points, [(0, 1, 2), (0, 2, 3)])


@pytest.fixture
def square_with_center():
    """Unit square with one interior vertex (a single free degree of freedom)."""
    points = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]
    cells = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    return Mesh.from_arrays(points, cells, refinement_edge=np.full(4, 2))


@pytest.fixture
def lshape_mesh():
    return make_lshape_mesh()


@pytest.fixture
def lshape_fine():
    """L-shape after four uniform passes (192 triangles)."""
    return refine_uniformly(make_lshape_mesh(), 4)


@pytest.fixture
def disk_fine():
    """Disk fan of 16 boundary vertices after four uniform passes."""
    return refine_uniformly(make_unit_disk_mesh(16), 4)


@pytest.fixture
def exps10():
    return Exponents(10.0)


@pytest.fixture
def exps2():
    return Exponents(2.0)


@pytest.fixture
def eps_unit():
    return RelaxInterval(0.5, 2.0)


@pytest.fixture
def source_one():
    def make(mesh, value=1.0):
        return SourceTerm.constant(mesh, value)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def write_config(tmp_path):
    """Write config text to a file and return its path."""

    def write(text, name="run.conf"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
