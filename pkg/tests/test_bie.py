import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import harmonic_polynomials, interior_probes
from potdeg.bie import (
    assemble_neumann_system,
    evaluate_representation,
    load_boundary_field,
    save_boundary_field,
    solve_neumann_data,
    tangential_complete,
)
from potdeg.errors import SingularEvaluation
from potdeg.geometry import make_unit_sphere


def test_condition_estimate_small(neumann3):
    assert neumann3.condition_estimate < 100.0


def test_diagonal_entries_in_band(neumann3):
    d = np.diag(neumann3.matrix)
    assert np.all(d > 0.25) and np.all(d < 0.75)


def test_homogeneous_solution_is_zero(neumann3):
    a5 = neumann3.solve(np.zeros(neumann3.mesh.n_nodes))
    assert np.max(np.abs(a5)) <= 1e-10


def test_assembly_permutation_equivalence():
    mesh = make_unit_sphere(1)
    sys_a = assemble_neumann_system(mesh)
    rng = np.random.default_rng(0)
    perm = rng.permutation(mesh.n_nodes)
    inv = np.argsort(perm)
    from potdeg.geometry import mesh_from_arrays
    permuted = mesh_from_arrays(mesh.nodes[perm], inv[mesh.triangles])
    sys_b = assemble_neumann_system(permuted)
    assert np.allclose(sys_b.matrix, sys_a.matrix[np.ix_(perm, perm)], atol=1e-12)


def test_dtn_constant(neumann3):
    a5 = solve_neumann_data(neumann3, np.ones(neumann3.mesh.n_nodes))
    assert np.max(np.abs(a5)) <= 2e-2


def test_dtn_degree_one(neumann3):
    z = neumann3.mesh.nodes[:, 2]
    a5 = solve_neumann_data(neumann3, z)
    assert np.linalg.norm(a5 - z) / np.linalg.norm(z) <= 0.02


def test_dtn_degree_two(neumann3):
    P = neumann3.mesh.nodes
    q = P[:, 2] ** 2 - (P[:, 0] ** 2 + P[:, 1] ** 2) / 2
    a5 = solve_neumann_data(neumann3, q)
    assert np.linalg.norm(a5 - 2 * q) / np.linalg.norm(2 * q) <= 0.03


def test_dtn_linearity(neumann3):
    mesh = neumann3.mesh
    rng = np.random.default_rng(1)
    f = rng.normal(size=mesh.n_nodes)
    g = rng.normal(size=mesh.n_nodes)
    a = solve_neumann_data(neumann3, f)
    b = solve_neumann_data(neumann3, g)
    c = solve_neumann_data(neumann3, 2.0 * f - 0.5 * g)
    assert np.max(np.abs(c - (2.0 * a - 0.5 * b))) <= 1e-10 * max(1.0, np.max(np.abs(c)))


def test_tangential_complete_examples(mesh3):
    n1 = mesh3.normals[:, 0]
    px = mesh3.nodes[:, 0]
    # u = x: gradient (1, 0, 0), A5 = n1
    data = tangential_complete(mesh3, np.tile([1.0, 0, 0], (mesh3.n_nodes, 1)), n1)
    assert np.allclose(data.A2, 1.0, atol=1e-12)
    assert np.allclose(data.A3, 0.0, atol=1e-12)
    assert np.allclose(data.A4, 0.0, atol=1e-12)
    assert np.allclose(data.lam, 0.0, atol=1e-12)
    # u constant
    data = tangential_complete(mesh3, np.zeros((mesh3.n_nodes, 3)), np.zeros(mesh3.n_nodes))
    assert np.allclose(data.A2, 0) and np.allclose(data.A3, 0) and np.allclose(data.A4, 0)
    # u = x^2: gradient (2x, 0, 0), A5 = 2 x n1
    grad = np.stack([2 * px, np.zeros_like(px), np.zeros_like(px)], axis=1)
    data = tangential_complete(mesh3, grad, 2 * px * n1)
    assert np.allclose(data.A2, 2 * px, atol=1e-12)
    assert np.allclose(data.lam, 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_gradient_identity_exact(seed):
    mesh = make_unit_sphere(1)
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(mesh.n_nodes, 3))
    A5 = rng.normal(size=mesh.n_nodes)
    data = tangential_complete(mesh, G, A5)
    recomposed = (data.A2 * mesh.normals[:, 0] + data.A3 * mesh.normals[:, 1]
                  + data.A4 * mesh.normals[:, 2])
    assert np.max(np.abs(recomposed - A5)) <= 1e-10


def test_representation_constant(mesh3, neumann3):
    ones = np.ones(mesh3.n_nodes)
    a5 = solve_neumann_data(neumann3, ones)
    val = evaluate_representation(mesh3, None, ones, a5, None, [0.1, 0.2, 0.0])
    assert val == pytest.approx(1.0, rel=0.02)


def test_representation_linear(mesh3, neumann3):
    z = mesh3.nodes[:, 2]
    a5 = solve_neumann_data(neumann3, z)
    val = evaluate_representation(mesh3, None, z, a5, None, [0.0, 0.0, 0.5])
    assert val == pytest.approx(0.5, rel=0.02)


def test_representation_poisson_ball(mesh3, neumann3, grid24):
    ones = np.ones(grid24.n_cells)
    a5 = solve_neumann_data(neumann3, np.zeros(mesh3.n_nodes),
                            volume_source=ones, grid=grid24)
    u0 = evaluate_representation(mesh3, grid24, np.zeros(mesh3.n_nodes), a5, ones,
                                 [0.0, 0.0, 0.0])
    assert u0 == pytest.approx(1.0 / 6.0, rel=0.03)


def test_representation_poisson_given_analytic_neumann(mesh3, grid24):
    # A5 = -1/3 exactly (du/dn of (1-r^2)/6 on the sphere)
    ones = np.ones(grid24.n_cells)
    a5 = np.full(mesh3.n_nodes, -1.0 / 3.0)
    u0 = evaluate_representation(mesh3, grid24, np.zeros(mesh3.n_nodes), a5, ones,
                                 [0.0, 0.0, 0.0])
    assert u0 == pytest.approx(1.0 / 6.0, rel=0.03)


def test_harmonic_reproduction_all_degree_two(mesh3, neumann3):
    rng = np.random.default_rng(9)
    probes = interior_probes(rng, 10)
    for name, trace, grad in harmonic_polynomials():
        a1 = trace(mesh3.nodes)
        a5 = solve_neumann_data(neumann3, a1)
        scale = max(np.max(np.abs(a1)), 1e-9)
        for x in probes:
            val = evaluate_representation(mesh3, None, a1, a5, None, x)
            want = trace(x[None, :])[0]
            assert abs(val - want) <= 0.03 * scale, (name, x)


def test_representation_rejects_near_surface(mesh3):
    z = mesh3.nodes[:, 2]
    with pytest.raises(SingularEvaluation):
        evaluate_representation(mesh3, None, z, z, None, [0.0, 0.0, 0.999])


def test_boundary_field_roundtrip(tmp_path, mesh3):
    rng = np.random.default_rng(2)
    v = rng.normal(size=mesh3.n_nodes)
    path = tmp_path / "field.json"
    save_boundary_field(v, path)
    w = load_boundary_field(path, mesh3)
    assert np.array_equal(v, w)
    with pytest.raises(ValueError):
        load_boundary_field(path, make_unit_sphere(1))
