import numpy as np
import pytest

from pairsrg.ops import (
    A_LIN,
    AffineDiodeForm,
    Domain,
    FunctionOp,
    LinearOp,
    NPNTransistor,
    OperatorSpecError,
    PiecewiseAffineOp,
    build_operator,
    compose,
    diode_bank,
    graph_inverse,
    ideal_diode,
    identity,
    preconditioner,
    quartic_gradient,
    scale,
    shockley_diode,
    translate,
)


def test_ideal_diode_branches():
    d = ideal_diode(u_max=2.0, m=5)
    assert [u[0] for u in d.eval([-1.0])] == [0.0]
    assert [u[0] for u in d.eval([0.0])] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert d.eval([0.5]) == []
    with pytest.raises(ValueError, match="outside domain"):
        d([0.5])
    with pytest.raises(ValueError, match="multivalued"):
        d([0.0])


def test_ideal_diode_rejects_bad_discretization():
    with pytest.raises(ValueError):
        ideal_diode(u_max=0.0)
    with pytest.raises(ValueError):
        ideal_diode(m=1)


def test_shockley_diode_current_and_overflow():
    d = shockley_diode(1e-12, 0.025)
    assert d([0.0])[0] == 0.0
    assert d([0.5])[0] == pytest.approx(1e-12 * np.expm1(20.0))
    with pytest.raises(OverflowError):
        d([100.0])
    J = d.jacobian([0.1])
    assert J[0, 0] == pytest.approx(1e-12 / 0.025 * np.exp(4.0))


def test_npn_transistor_matrices():
    t = NPNTransistor(0.98, 0.5)
    R = t.R.matrix
    assert np.allclose(R, [[1, -0.5], [-0.98, 1]])
    partner = np.linalg.det(R) * np.linalg.inv(R).T
    assert np.allclose(t.B.matrix, partner)
    with pytest.raises(ValueError):
        NPNTransistor(1.0, 0.5)


def test_npn_outputs_at_the_kink():
    t = NPNTransistor()
    assert len(t.eval([0.0, 0.0])) == 25
    assert len(t.eval([-1.0, 0.0])) == 5
    assert np.allclose(t([-1.0, -2.0]), 0.0)


def test_diode_bank_domain():
    bank = diode_bank(3)
    assert bank.domain.contains([-1, 0, -2])
    assert not bank.domain.contains([-1, 0.1, -2])


def test_domain_sampling_is_deterministic_and_hits_the_kink():
    dom = Domain(2, (True, False))
    X1 = dom.sample(400, 3)
    X2 = dom.sample(400, 3)
    assert np.array_equal(X1, X2)
    assert np.all(X1[:, 0] <= 0)
    assert np.any(X1[:, 0] == 0)
    assert np.any(X1[:, 1] > 0)


def test_domain_intersection_and_empty():
    a = Domain(1, (True,))
    b = Domain(1, predicate=lambda x: x[0] > 5)
    with pytest.raises(ValueError, match="empty domain"):
        a.intersect(b).sample(10, 0, max_rounds=3)


def test_quartic_gradient_and_preconditioners():
    q = quartic_gradient(2)
    assert np.allclose(q([2.0, -1.0]), [8.0, -1.0])
    assert np.allclose(q.jacobian([2.0, -1.0]), np.diag([12.0, 3.0]))
    assert np.allclose(preconditioner("clip")([3.0, -0.5]), [1.0, -0.5])
    assert np.allclose(preconditioner("arcsinh")([0.0, 1.0]), [0.0, np.arcsinh(1.0)])
    with pytest.raises(ValueError, match="unknown preconditioner"):
        preconditioner("tanh")


def test_combinators():
    A = LinearOp(A_LIN, "A")
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose((2.0 * A)(x), 2 * A_LIN @ x)
    assert np.allclose((A + identity(3))(x), A_LIN @ x + x)
    assert np.allclose((A - identity(3))(x), A_LIN @ x - x)
    assert np.allclose(compose(A, A)(x), A_LIN @ A_LIN @ x)
    assert np.allclose(translate(A, [1, 2, 3])(x), A_LIN @ x + [1, 2, 3])
    with pytest.raises(ValueError, match="dimension mismatch"):
        A + identity(2)


def test_sum_of_multivalued_enumerates_all_outputs():
    S = diode_bank(1) + ideal_diode(m=3)
    assert len(S.eval([0.0])) == 15


def test_affine_forms():
    t = NPNTransistor()
    f = (2.0 * t + identity(2)).affine_form()
    assert f is not None
    assert np.allclose(f.G, 2 * t.M)
    assert np.allclose(f.L, np.eye(2))
    assert np.all(f.mask)
    assert FunctionOp(lambda x: x, 2).affine_form() is None


def test_piecewise_affine_op_matches_its_form():
    form = AffineDiodeForm(np.eye(2), np.array([[1.0, 0.5], [0.0, 2.0]]), np.array([0.1, -0.1]), np.array([True, False]))
    op = PiecewiseAffineOp(form)
    x = np.array([-1.0, 3.0])
    assert np.allclose(op(x), form.L @ x + form.c)
    assert len(op.eval([0.0, 1.0])) == 5
    assert op.eval([1.0, 0.0]) == []


def test_graph_inverse_swaps_inputs_and_outputs():
    d = ideal_diode(m=3)
    X = np.array([[-1.0], [-0.5], [0.0]])
    inv = graph_inverse(d, X)
    assert {float(x[0]) for x in inv.eval([0.0])} == {-1.0, -0.5, 0.0}
    assert [float(x[0]) for x in inv.eval([1.0])] == [0.0]
    assert inv.eval([0.3]) == []


def test_build_operator_specs():
    op = build_operator({"kind": "compose", "params": {"outer": {"kind": "a_lin"}, "inner": {"kind": "identity", "params": {"dim": 3}}}})
    assert np.allclose(op([1.0, 0.0, 0.0]), A_LIN[:, 0])
    partner = build_operator({"kind": "inv_transpose", "params": {"matrix": A_LIN.tolist(), "c": 2}})
    assert np.allclose(partner.matrix, 2 * np.linalg.inv(A_LIN).T)


@pytest.mark.parametrize(
    "spec, field",
    [
        ({"kind": "linear", "params": {}}, "A.params.matrix"),
        ({"kind": "linear", "params": {"matrix": [[1, 2]]}}, "A.params.matrix"),
        ({"kind": "warp"}, "A.kind"),
        ({"kind": "scale", "params": {"c": "x", "op": {"kind": "a_lin"}}}, "A.params.c"),
        ({"kind": "add", "params": {"ops": [{"kind": "a_lin"}]}}, "A.params.ops"),
        ({"kind": "add", "params": {"ops": [{"kind": "a_lin"}, {"kind": "bogus"}]}}, "A.params.ops[1].kind"),
    ],
)
def test_build_operator_names_the_bad_field(spec, field):
    with pytest.raises(OperatorSpecError) as exc:
        build_operator(spec, "A")
    assert exc.value.field == field


def test_linear_op_validation():
    with pytest.raises(ValueError, match="square"):
        LinearOp(np.ones((2, 3)))
    with pytest.raises(ValueError, match="finite"):
        LinearOp([[np.inf]])
    assert np.allclose(LinearOp([[2.0]]).inverse, [[0.5]])


def test_scale_keeps_structure():
    A = scale(-1.5, diode_bank(2))
    assert not A.single_valued
    assert len(A.eval([0.0, -1.0])) == 5
