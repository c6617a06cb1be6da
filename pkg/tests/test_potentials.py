import numpy as np
import pytest

from potdeg.errors import SingularEvaluation
from potdeg.geometry import make_unit_sphere
from potdeg.potentials import (
    KernelConvention,
    absolute_solid_angle,
    double_layer,
    grad_newton_potential,
    mean_curvature,
    newton_potential,
    single_layer,
    solid_angle,
)

UN = KernelConvention.UNNORMALIZED
NT = KernelConvention.NEWTON
FOUR_PI = 4.0 * np.pi


def test_solid_angle_interior(mesh3):
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(size=3)
        x = x / np.linalg.norm(x) * rng.uniform(0.0, 0.7)
        assert solid_angle(mesh3, x) == pytest.approx(-FOUR_PI, rel=0.01)


def test_solid_angle_exterior(mesh3):
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.normal(size=3)
        x = x / np.linalg.norm(x) * rng.uniform(1.5, 5.0)
        assert abs(solid_angle(mesh3, x)) <= 0.05


def test_solid_angle_principal_value(mesh3):
    rng = np.random.default_rng(2)
    for i in rng.choice(mesh3.n_nodes, 8, replace=False):
        pv = solid_angle(mesh3, mesh3.nodes[i], principal_value=True)
        assert pv == pytest.approx(-2.0 * np.pi, rel=0.03)


def test_solid_angle_at_node_requires_pv_mode(mesh3):
    with pytest.raises(SingularEvaluation):
        solid_angle(mesh3, mesh3.nodes[5])


def test_solid_angle_refinement_order():
    # deep interior points so the plain quadrature (no near patch) is measured
    # at every level; order is taken over the max error of the batch
    rng = np.random.default_rng(0)
    pts = []
    for _ in range(15):
        v = rng.normal(size=3)
        pts.append(v / np.linalg.norm(v) * rng.uniform(0.05, 0.35))
    errs = []
    for level in (2, 3, 4):
        mesh = make_unit_sphere(level)
        errs.append(max(abs(solid_angle(mesh, p) + FOUR_PI) for p in pts))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.0


def test_absolute_solid_angle_center(mesh3):
    assert absolute_solid_angle(mesh3, [0, 0, 0]) == pytest.approx(FOUR_PI, rel=0.01)


def test_absolute_solid_angle_far_bound(mesh3):
    val = absolute_solid_angle(mesh3, [5.0, 0.0, 0.0])
    assert val <= FOUR_PI / 24.0 * 1.05


def test_absolute_solid_angle_finite_on_grid(mesh3):
    for x in np.array([[0.3, 0.3, 0.3], [1.5, 0, 0], [0, 0, 0.99], [2, 2, 2]]):
        assert np.isfinite(absolute_solid_angle(mesh3, x))


def test_single_layer_constant_density(mesh3):
    ones = np.ones(mesh3.n_nodes)
    assert single_layer(mesh3, ones, [0, 0, 0], UN) == pytest.approx(FOUR_PI, rel=0.01)
    assert single_layer(mesh3, ones, [0, 0, 2.0], UN) == pytest.approx(2 * np.pi, rel=0.01)
    assert single_layer(mesh3, np.zeros(mesh3.n_nodes), [0.3, 0, 0], UN) == 0.0


def test_single_layer_shell_theorem_against_fine_quadrature(mesh3):
    # independent oracle: much finer mesh for the same integral
    fine = make_unit_sphere(4)
    x = np.array([0.0, 0.0, 2.0])
    coarse = single_layer(mesh3, np.ones(mesh3.n_nodes), x, UN)
    oracle = single_layer(fine, np.ones(fine.n_nodes), x, UN)
    assert coarse == pytest.approx(oracle, rel=0.005)
    assert oracle == pytest.approx(FOUR_PI / 2.0, rel=0.005)


def test_convention_factor_single_layer_exact(mesh3):
    rng = np.random.default_rng(3)
    v = rng.normal(size=mesh3.n_nodes)
    x = [0.2, -0.4, 0.1]
    a = single_layer(mesh3, v, x, UN)
    b = single_layer(mesh3, v, x, NT)
    assert a == pytest.approx(b * FOUR_PI, rel=1e-14)


def test_convention_factor_double_layer_magnitude_and_sign(mesh3):
    # the two double-layer conventions differ by 4 pi and the recorded sign flip
    rng = np.random.default_rng(4)
    v = rng.normal(size=mesh3.n_nodes)
    x = [0.1, 0.2, -0.3]
    a = double_layer(mesh3, v, x, UN)
    b = double_layer(mesh3, v, x, NT)
    assert a == pytest.approx(-b * FOUR_PI, rel=1e-14)


def test_double_layer_gauss_cases(mesh3):
    ones = np.ones(mesh3.n_nodes)
    assert double_layer(mesh3, ones, [0.1, 0.2, 0.0], UN) == pytest.approx(-FOUR_PI, rel=0.01)
    assert abs(double_layer(mesh3, ones, [0, 0, 2.0], NT)) <= 0.01


def test_double_layer_jump_newton(mesh3):
    # interior limit = PV + v/2 as the probe distance shrinks to a spacing
    v = 1.0 + 0.5 * mesh3.nodes[:, 2]
    rng = np.random.default_rng(5)
    for i in rng.choice(mesh3.n_nodes, 5, replace=False):
        P0, n0, h = mesh3.nodes[i], mesh3.normals[i], mesh3.node_spacing[i]
        pv = double_layer(mesh3, v, P0, NT, principal_value=True)
        inner = 2.0 * double_layer(mesh3, v, P0 - h / 4 * n0, NT) \
            - double_layer(mesh3, v, P0 - h / 2 * n0, NT)
        assert inner == pytest.approx(pv + 0.5 * v[i], rel=0.05)


def test_jump_difference_both_conventions(mesh3):
    # interior minus exterior: +v in Newton, -4 pi v unnormalized (level >= 3, 5%)
    v = 1.0 + 0.5 * mesh3.nodes[:, 2]
    rng = np.random.default_rng(6)
    for i in rng.choice(mesh3.n_nodes, 5, replace=False):
        P0, n0, h = mesh3.nodes[i], mesh3.normals[i], mesh3.node_spacing[i]

        def diff(conv, d):
            return (double_layer(mesh3, v, P0 - d * n0, conv)
                    - double_layer(mesh3, v, P0 + d * n0, conv))

        newton = 2.0 * diff(NT, h / 4) - diff(NT, h / 2)
        unnorm = 2.0 * diff(UN, h / 4) - diff(UN, h / 2)
        assert newton == pytest.approx(v[i], rel=0.05)
        assert unnorm == pytest.approx(-FOUR_PI * v[i], rel=0.05)


def test_layer_potentials_harmonic_off_surface(mesh3):
    # 7-point discrete Laplacian of the fields vanishes relative to field size
    v = 1.0 + 0.5 * mesh3.nodes[:, 2]
    hstep = 1e-2
    for field, conv in ((single_layer, UN), (double_layer, NT)):
        for x0 in (np.array([0.2, 0.1, -0.3]), np.array([0.0, 0.0, 1.8])):
            vals = []
            center = field(mesh3, v, x0, conv)
            for axis in range(3):
                e = np.zeros(3)
                e[axis] = hstep
                vals.append(field(mesh3, v, x0 + e, conv))
                vals.append(field(mesh3, v, x0 - e, conv))
            lap = (sum(vals) - 6.0 * center) / hstep ** 2
            assert abs(lap) <= 1e-2 * max(abs(center), 1.0)


def test_newton_potential_zero_source(grid16):
    assert newton_potential(grid16, np.zeros(grid16.n_cells), [0, 0, 0]) == 0.0


def test_newton_potential_unit_ball(grid16):
    ones = np.ones(grid16.n_cells)
    assert newton_potential(grid16, ones, [0, 0, 0]) == pytest.approx(0.5, rel=0.02)


def test_newton_potential_linearity_exact(grid16):
    rng = np.random.default_rng(7)
    f = rng.normal(size=grid16.n_cells)
    x = [0.2, -0.1, 0.3]
    a = newton_potential(grid16, 3.5 * f, x)
    b = 3.5 * newton_potential(grid16, f, x)
    assert a == pytest.approx(b, rel=1e-13)


def test_grad_newton_potential_ball(grid16):
    # u = 1/2 - r^2/6 so grad u = -x/3
    ones = np.ones(grid16.n_cells)
    x = np.array([0.4, -0.2, 0.1])
    g = grad_newton_potential(grid16, ones, x)
    assert np.max(np.abs(g + x / 3.0)) <= 0.01


def test_mean_curvature_unit_sphere(mesh3):
    kappa = mean_curvature(mesh3)
    assert np.max(np.abs(kappa - 1.0)) <= 0.05
