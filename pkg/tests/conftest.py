"""Shared fixtures; the meshes, grids, and dense operators are expensive, so
they are built once per session."""

import numpy as np
import pytest

from potdeg.bie import assemble_neumann_system
from potdeg.geometry import make_unit_sphere, volume_grid_from_mesh
from potdeg.solver import Workspace


@pytest.fixture(scope="session")
def mesh3():
    return make_unit_sphere(3)


@pytest.fixture(scope="session")
def mesh4():
    return make_unit_sphere(4)


@pytest.fixture(scope="session")
def neumann3(mesh3):
    return assemble_neumann_system(mesh3)


@pytest.fixture(scope="session")
def grid16(mesh3):
    return volume_grid_from_mesh(mesh3, (16, 16, 16), [-1, -1, -1], [1, 1, 1])


@pytest.fixture(scope="session")
def grid24(mesh3):
    return volume_grid_from_mesh(mesh3, (24, 24, 24), [-1, -1, -1], [1, 1, 1])


@pytest.fixture(scope="session")
def workspace16(mesh3, grid16):
    return Workspace.build(mesh3, grid16)


def harmonic_polynomials():
    """(name, trace callable, gradient callable) for every degree <= 2 harmonic."""
    return [
        ("1", lambda P: np.ones(len(P)), lambda P: np.zeros((len(P), 3))),
        ("x", lambda P: P[:, 0], lambda P: np.tile([1.0, 0, 0], (len(P), 1))),
        ("y", lambda P: P[:, 1], lambda P: np.tile([0, 1.0, 0], (len(P), 1))),
        ("z", lambda P: P[:, 2], lambda P: np.tile([0, 0, 1.0], (len(P), 1))),
        ("xy", lambda P: P[:, 0] * P[:, 1],
         lambda P: np.stack([P[:, 1], P[:, 0], np.zeros(len(P))], axis=1)),
        ("xz", lambda P: P[:, 0] * P[:, 2],
         lambda P: np.stack([P[:, 2], np.zeros(len(P)), P[:, 0]], axis=1)),
        ("yz", lambda P: P[:, 1] * P[:, 2],
         lambda P: np.stack([np.zeros(len(P)), P[:, 2], P[:, 1]], axis=1)),
        ("x2-y2", lambda P: P[:, 0] ** 2 - P[:, 1] ** 2,
         lambda P: np.stack([2 * P[:, 0], -2 * P[:, 1], np.zeros(len(P))], axis=1)),
        ("2z2-x2-y2", lambda P: 2 * P[:, 2] ** 2 - P[:, 0] ** 2 - P[:, 1] ** 2,
         lambda P: np.stack([-2 * P[:, 0], -2 * P[:, 1], 4 * P[:, 2]], axis=1)),
    ]


def interior_probes(rng, n, r_max=0.6):
    pts = []
    while len(pts) < n:
        x = rng.normal(size=3)
        x = x / np.linalg.norm(x) * rng.uniform(0.1, r_max)
        pts.append(x)
    return np.asarray(pts)
