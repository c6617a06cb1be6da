from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potdeg.errors import ConditionFailed, InvalidSpec, NotInvertible
from potdeg.polymat import (
    Poly,
    PolyInterpolator,
    PolyMatrix,
    fmat_det_inv,
    fmat_inv,
    monomials_upto,
)
from potdeg.symbols import (
    ParameterSet,
    ResolutionSpec,
    SobolevBudget,
    alpha0_matrix,
    build_symbol_matrices,
    check_conditions,
    derive_parameters,
    reduction_determinant,
    row_slot_order,
    stack_permutation,
    symbolic_det_and_inverse_factor,
)


# ---------------------------------------------------------------------------
# polynomial / exact linear algebra plumbing
# ---------------------------------------------------------------------------

def test_poly_arithmetic_and_eval():
    s1 = Poly.var(0)
    p = (1 + s1) * (1 + s1)
    assert p.degree() == 2
    assert p.eval_xi([2.0, 0, 0]) == pytest.approx((1 + 2j) ** 2)
    q = p - Poly({(2, 0, 0): 1, (1, 0, 0): 2, (0, 0, 0): 1})
    assert q.is_zero()
    assert Poly.zero().degree() == -1


def test_poly_exact_cancellation():
    s1, s2 = Poly.var(0), Poly.var(1)
    third = Poly.const(Fraction(1, 3))
    p = (s1 * third + s2) * 3 - s1 - s2 * 3
    assert p.is_zero()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_fraction_inverse_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(-5, 6, size=(4, 4))
    if abs(np.linalg.det(m.astype(float))) < 0.5:
        return
    inv = fmat_inv([[Fraction(int(x)) for x in row] for row in m])
    assert np.allclose(np.array(inv, dtype=float), np.linalg.inv(m.astype(float)))


def test_fraction_det_singular():
    det, inv = fmat_det_inv([[Fraction(1), Fraction(2)], [Fraction(2), Fraction(4)]])
    assert det == 0 and inv is None


def test_interpolator_reconstructs_exactly():
    rng = np.random.default_rng(1)
    monos = monomials_upto(3)
    coeffs = {e: Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 4)))
              for e in monos}
    p = Poly(coeffs)
    interp = PolyInterpolator(3)
    vals = [p.eval_fraction(pt) for pt in interp.points]
    assert interp.fit(vals) == p


# ---------------------------------------------------------------------------
# worked resolution cases
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def laplacian_case():
    spec = ResolutionSpec.parse(1, ["u_xx"])
    params = ParameterSet.from_dense(1, C7=[[-1]], C9=[[-1]])
    B1, B2 = build_symbol_matrices(spec, params)
    det, a1, a1inv = symbolic_det_and_inverse_factor(B1)
    return spec, params, B1, B2, det, a1, a1inv


@pytest.fixture(scope="module")
def u_resolved_case():
    spec = ResolutionSpec.parse(1, ["u"])
    params = ParameterSet.from_dense(1, C1=[[-1]])
    B1, B2 = build_symbol_matrices(spec, params)
    det, a1, a1inv = symbolic_det_and_inverse_factor(B1)
    return spec, params, B1, B2, det, a1, a1inv


def test_u_resolved_structure_is_rank_one_update(u_resolved_case):
    # B1 = alpha0 beta0 - E with beta0 = (C1..C9)
    spec, params, B1, B2, det, a1, a1inv = u_resolved_case
    alpha0 = alpha0_matrix(1)
    beta0 = PolyMatrix([[Poly.const(params.C[k][0][0]) for k in range(9)]])
    expected = alpha0 @ beta0 - PolyMatrix.identity(9)
    for i in range(9):
        for j in range(9):
            assert B1[i, j] == expected[i, j]


def test_u_resolved_determinant(u_resolved_case):
    *_, det, a1, a1inv = u_resolved_case
    # det = -(1 + s1): value -1 - i xi_1
    assert det.eval_xi([0, 0, 0]) == pytest.approx(-1.0)
    assert det.eval_xi([2, 0, 0]) == pytest.approx(-1 - 2j)


def test_laplacian_determinant(laplacian_case):
    *_, det, a1, a1inv = laplacian_case
    rng = np.random.default_rng(0)
    for _ in range(50):
        xi = rng.normal(size=3) * 3
        assert det.eval_xi(xi) == pytest.approx(-float(xi @ xi), rel=1e-10)


def test_ux_resolved_reduced_block():
    spec = ResolutionSpec.parse(1, ["u_x"])
    params = ParameterSet.from_dense(1, C1=[[-1]])
    B1, _ = build_symbol_matrices(spec, params)
    det, *_ = symbolic_det_and_inverse_factor(B1)
    s1 = Poly.var(0)
    assert det == s1 + 1


def test_reduction_matches_direct_numeric_m1(u_resolved_case):
    spec, params, B1, *_ = u_resolved_case
    det = reduction_determinant(B1)
    rng = np.random.default_rng(2)
    for _ in range(50):
        xi = rng.normal(size=3) * 2
        direct = np.linalg.det(B1.eval_xi(xi))
        assert abs(det.eval_xi(xi) - direct) <= 1e-8 * max(abs(direct), 1e-6)


def test_reduction_matches_direct_numeric_m2():
    spec = ResolutionSpec(2, [("u", 0), ("u", 1)])
    params = ParameterSet.from_dense(2, C1=[[-1, 0.5], [0.25, -2]], C5=[[0, 1], [0, 0]])
    B1, _ = build_symbol_matrices(spec, params)
    det = reduction_determinant(B1)
    rng = np.random.default_rng(3)
    for _ in range(50):
        xi = rng.normal(size=3) * 2
        direct = np.linalg.det(B1.eval_xi(xi))
        assert abs(det.eval_xi(xi) - direct) <= 1e-8 * max(abs(direct), 1e-6)


def test_inverse_factor_residual(laplacian_case):
    _, _, B1, _, det, a1, a1inv = laplacian_case
    rng = np.random.default_rng(4)
    for _ in range(20):
        xi = rng.normal(size=3) * 2
        lhs = a1inv.eval_xi(xi) @ B1.eval_xi(xi)
        rhs = complex(a1.eval_xi(xi)) * np.eye(9)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_degree_bounds(laplacian_case, u_resolved_case):
    for case in (laplacian_case, u_resolved_case):
        _, _, B1, B2, det, a1, a1inv = case
        assert B1.degree() <= 2
        assert B2.degree() <= 2
        assert a1inv.degree() <= a1.degree() + 2 * (9 - 1)


def test_a1_leading_coefficient_normalized(laplacian_case):
    *_, a1, _ = laplacian_case[4:6] + (None,)
    _, lead = laplacian_case[5].leading()
    assert abs(lead) == 1


def test_mixed_m2_interpolation_path():
    # partially resolved m = 2 with a singular numeric part exercises interpolation
    spec = ResolutionSpec(2, [("u_xx", 0), ("u", 1)])
    params = ParameterSet.from_dense(2, C7=[[-1, 0], [0, -1]], C9=[[-1, 0], [0, -1]])
    B1, B2 = build_symbol_matrices(spec, params)
    det, a1, a1inv = symbolic_det_and_inverse_factor(B1)
    rng = np.random.default_rng(5)
    for _ in range(20):
        xi = rng.normal(size=3)
        direct = np.linalg.det(B1.eval_xi(xi))
        assert abs(det.eval_xi(xi) - direct) <= 1e-8 * max(abs(direct), 1e-6)


# ---------------------------------------------------------------------------
# parameter derivation and the permutation stack
# ---------------------------------------------------------------------------

def test_derive_parameters_m1_example():
    spec = ResolutionSpec.parse(1, ["u"])
    Cp = [[[-1]]] + [[[0]]] * 8
    params = derive_parameters(spec, Cp)
    assert params.C[0][0][0] == Fraction(-1)
    assert all(params.C[k][0][0] == 0 for k in range(1, 9))


def test_derive_parameters_not_invertible():
    spec = ResolutionSpec.parse(1, ["u"])
    # choose C' so that C''_1 = E - ... becomes 0 x ... the 1x1 block is E = 1,
    # which is never singular for u-resolved; use u_x-resolved where C''_1 = -C'_1
    spec_x = ResolutionSpec.parse(1, ["u_x"])
    with pytest.raises(NotInvertible):
        derive_parameters(spec_x, [[[0]]] * 9)


def test_derive_parameters_roundtrip_det_nonzero():
    spec = ResolutionSpec.parse(1, ["u_x"])
    Cp = [[[2]], [[0.5]], [[0]], [[1]], [[0]], [[0]], [[0]], [[0]], [[0]]]
    params = derive_parameters(spec, Cp)
    B1, _ = build_symbol_matrices(spec, params)
    det, *_ = symbolic_det_and_inverse_factor(B1)
    rng = np.random.default_rng(6)
    nonzero = sum(abs(det.eval_xi(rng.normal(size=3))) > 1e-12 for _ in range(50))
    assert nonzero >= 49


def test_stack_permutation_reproduces_block_layout():
    for names in (["u"], ["u_x"], ["u_xx"]):
        spec = ResolutionSpec.parse(1, names)
        params = ParameterSet.from_dense(1, C1=[[-1]], C7=[[2]])
        order = stack_permutation(spec)
        assert sorted(order) == list(range(10))
        # rebuild the stacked rows and check P sends them to [(C1..C9); E]
        from potdeg.symbols import _slot_matrix
        A_u = _slot_matrix(spec, params, "u")
        rows = [A_u.entries[0][:9]]
        for slot in row_slot_order(spec):
            rows.append(_slot_matrix(spec, params, slot).entries[0][:9])
        target_first = [Poly.const(params.C[k][0][0]) for k in range(9)]
        stacked = [rows[src] for src in order]
        assert stacked[0] == target_first
        for t in range(1, 10):
            expected = [Poly.const(1 if j == t - 1 else 0) for j in range(9)]
            assert stacked[t] == expected


# ---------------------------------------------------------------------------
# integrability conditions
# ---------------------------------------------------------------------------

def test_conditions_pass_for_worked_cases(laplacian_case, u_resolved_case):
    for case in (laplacian_case, u_resolved_case):
        _, _, _, B2, det, a1, a1inv = case
        budget, report = check_conditions(a1, a1inv, a1inv @ B2)
        assert report["conditions"] == {"c316": True, "c317": True}
        assert budget.m1 == 6 + 2 * budget.a


def test_laplacian_budget_values(laplacian_case):
    _, _, _, B2, det, a1, a1inv = laplacian_case
    budget, _ = check_conditions(a1, a1inv, a1inv @ B2)
    assert budget.a == 2
    assert budget.m1 == 10


def test_conditions_fail_for_pure_power_determinant():
    # u_x resolved with every coupling zero: det = s1, zero set is a plane
    spec = ResolutionSpec.parse(1, ["u_x"])
    params = ParameterSet.from_dense(1)
    B1, B2 = build_symbol_matrices(spec, params)
    det, a1, a1inv = symbolic_det_and_inverse_factor(B1)
    assert det.degree() == 1
    with pytest.raises(ConditionFailed):
        check_conditions(a1, a1inv, a1inv @ B2)


def test_singular_structure_detected():
    # identically rank-deficient matrix: no inverse factor exists
    from potdeg.errors import SingularStructure
    s1 = Poly.var(0)
    rows = [[s1 if i == j else Poly.zero() for j in range(9)] for i in range(9)]
    rows[1] = list(rows[0])
    with pytest.raises(SingularStructure):
        symbolic_det_and_inverse_factor(PolyMatrix(rows))


def test_sobolev_budget_invariant():
    assert SobolevBudget(a=0).m1 == 6
    assert SobolevBudget(a=3).m1 == 12
    with pytest.raises(ValueError):
        SobolevBudget(a=-1)


# ---------------------------------------------------------------------------
# resolution specification validation
# ---------------------------------------------------------------------------

def test_spec_rejects_duplicates():
    with pytest.raises(InvalidSpec):
        ResolutionSpec(2, [("u", 0), ("u", 0)])


def test_spec_rejects_unknown_slot():
    with pytest.raises(InvalidSpec):
        ResolutionSpec.parse(1, ["u_ww"])


def test_spec_json_roundtrip():
    spec = ResolutionSpec(2, [("u_xx", 0), ("u", 1)])
    again = ResolutionSpec.from_json(spec.to_json())
    assert again.resolved == spec.resolved


def test_z1_components_cover_everything():
    spec = ResolutionSpec.parse(1, ["u_yz"])
    z1 = spec.z1_components()
    assert len(z1) == 9
    assert ("u_yz", 0) not in z1
