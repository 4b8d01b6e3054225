import warnings

import numpy as np
import pytest

from pairsrg.ops import (
    AffineDiodeForm,
    LinearOp,
    NPNTransistor,
    PiecewiseAffineOp,
    compose,
    diode_bank,
    ideal_diode,
    identity,
    quartic_gradient,
    shockley_diode,
    translate,
)
from pairsrg.regions import check_semimonotone_pair, cloud_margin
from pairsrg.resolve import (
    ActiveSetSolver,
    AmbiguousActiveSetWarning,
    InfeasibleInclusionError,
    apply_batch,
    congruence_transform,
    solve_inclusion,
    solve_inclusion_batch,
    transformed_resolvent,
    warped_resolvent,
)
from pairsrg.srg import sample_pair_srg

NPN = NPNTransistor()
Y = np.random.default_rng(0).uniform(-3, 3, (500, 2))


def _residual_ok(A, F, gamma, X, Y, U=None):
    form = A.affine_form()
    LF = F.affine_form().L
    r = Y - gamma * (U @ form.G.T + X @ form.L.T + form.c) - X @ LF.T
    return np.all(np.linalg.norm(r, axis=1) <= 1e-10 * np.maximum(1, np.linalg.norm(Y, axis=1)))


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_active_set_solves_the_npn_inclusion(gamma):
    X, U = solve_inclusion_batch(NPN, NPN.B, gamma, Y, return_currents=True)
    assert _residual_ok(NPN, NPN.B, gamma, X, Y, U)
    assert np.all(X <= 1e-12) and np.all(U >= -1e-12)
    assert np.all(np.abs(X * U) <= 1e-12)


def test_diode_closed_form_matches_active_set():
    y = np.linspace(-2, 2, 41)[:, None]
    a = solve_inclusion_batch(ideal_diode(), LinearOp([[2.0]]), 0.5, y, method="closed_form")
    b = solve_inclusion_batch(ideal_diode(), LinearOp([[2.0]]), 0.5, y, method="active_set")
    assert np.allclose(a, b, atol=1e-14)
    assert np.allclose(a[:, 0], np.minimum(y[:, 0], 0) / 2)


def test_single_rhs_wrapper():
    x = solve_inclusion(NPN, NPN.B, 1.0, [0.3, -0.7])
    assert np.allclose(x, solve_inclusion_batch(NPN, NPN.B, 1.0, [[0.3, -0.7]])[0])


def test_newton_path_for_smooth_operators():
    A = quartic_gradient(2)
    Ys = np.random.default_rng(1).uniform(-5, 5, (30, 2))
    X = solve_inclusion_batch(A, identity(2), 0.7, Ys)
    assert np.allclose(0.7 * X**3 + X, Ys, atol=1e-9)


def test_newton_with_shockley_diodes():
    A = diode_bank(2, shockley_diode())
    Ys = np.array([[0.5, -0.5], [-2.0, 3.0], [1e-3, 0.0]])
    X = solve_inclusion_batch(A, identity(2), 1.0, Ys)
    back = np.array([A(x) for x in X]) + X
    assert np.allclose(back, Ys, atol=1e-9)


def test_newton_matches_active_set_for_linear():
    M = LinearOp([[2.0, 1.0], [-1.0, 1.0]])
    a = solve_inclusion_batch(M, identity(2), 1.5, Y[:20], method="newton")
    b = solve_inclusion_batch(M, identity(2), 1.5, Y[:20], method="active_set")
    assert np.allclose(a, b, atol=1e-10)


def test_solver_errors():
    with pytest.raises(ValueError, match="gamma"):
        solve_inclusion_batch(NPN, NPN.B, 0.0, Y)
    with pytest.raises(ValueError, match="dimension mismatch"):
        solve_inclusion_batch(NPN, identity(3), 1.0, Y)
    with pytest.raises(ValueError, match="newton path"):
        solve_inclusion_batch(NPN, NPN.B, 1.0, Y, method="newton")
    with pytest.raises(ValueError, match="unknown solver"):
        solve_inclusion_batch(NPN, NPN.B, 1.0, Y, method="lcp")


def test_infeasible_inclusion():
    # A has no diode current term, so y = -x with x <= 0 forces y >= 0
    form = AffineDiodeForm(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), np.array([True]))
    solver = ActiveSetSolver(form, -np.eye(1), np.zeros(1), 1.0)
    with pytest.raises(InfeasibleInclusionError):
        solver.solve(np.array([[-1.0]]))


def test_ambiguous_state_warns():
    # y = u - x: for y > 0 both x = -y (blocking) and u = y (conducting) are consistent
    form = AffineDiodeForm(np.eye(1), np.zeros((1, 1)), np.zeros(1), np.array([True]))
    solver = ActiveSetSolver(form, -np.eye(1), np.zeros(1), 1.0)
    with pytest.warns(AmbiguousActiveSetWarning):
        solver.solve(np.array([[1.0]]), check_ties=True)


def test_no_warning_for_regular_inputs():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_inclusion_batch(NPN, NPN.B, 1.0, Y)


def test_resolvent_caches_solver_and_is_single_valued():
    T = transformed_resolvent(NPN, NPN.B, 1.0)
    out = T.apply(Y)
    assert out.shape == Y.shape
    assert np.allclose(T(Y[0]), out[0])
    assert T._solver is not None
    with pytest.raises(ValueError, match="single-valued"):
        transformed_resolvent(identity(1), ideal_diode(), 1.0)
    with pytest.raises(ValueError, match="kind"):
        from pairsrg.resolve import Resolvent

        Resolvent(NPN, NPN.B, 1.0, "other")


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_firm_nonexpansiveness(gamma):
    T = transformed_resolvent(NPN, NPN.B, gamma)
    rng = np.random.default_rng(5)
    X1 = rng.uniform(-3, 3, (1000, 2))
    X2 = rng.uniform(-3, 3, (1000, 2))
    D = T.apply(X1) - T.apply(X2)
    lhs = np.einsum("ij,ij->i", D, X1 - X2)
    assert np.all(lhs >= np.einsum("ij,ij->i", D, D) - 1e-9)


@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_contraction_for_strongly_monotone_pairs(gamma):
    alpha = 0.5
    A = NPN + alpha * NPN.B
    T = transformed_resolvent(A, NPN.B, gamma)
    rng = np.random.default_rng(6)
    X1 = rng.uniform(-3, 3, (1000, 2))
    X2 = rng.uniform(-3, 3, (1000, 2))
    d = np.linalg.norm(T.apply(X1) - T.apply(X2), axis=1)
    assert np.all(d <= np.linalg.norm(X1 - X2, axis=1) / (1 + alpha * gamma) + 1e-9)


def test_fixed_points_are_zeros_mapped_by_F():
    A = translate(NPN, [-0.3, 0.2])
    T = transformed_resolvent(A, NPN.B, 1.0)
    x = np.zeros(2)
    for _ in range(2000):
        xn = T(x)
        if np.linalg.norm(xn - x) < 1e-14:
            break
        x = xn
    v = np.linalg.solve(NPN.B.matrix, x)
    # 0 in A(v) means v <= 0, u >= 0, u v = 0 and R u = (0.3, -0.2)
    u = np.linalg.solve(NPN.M, [0.3, -0.2])
    assert np.all(v <= 1e-10)
    assert np.all(u >= -1e-10)
    assert np.all(np.abs(u * v) <= 1e-8)


def test_containment_disks():
    T = transformed_resolvent(NPN, NPN.B, 2.0)
    d = T.containment_disk(0.5)
    assert d.center == pytest.approx(1 / 4) and d.radius == pytest.approx(1 / 4)
    c = sample_pair_srg(T, identity(2), 120, 0)
    assert cloud_margin(T.containment_disk(0.0), c)[0] >= -1e-9
    with pytest.raises(ValueError):
        T.containment_disk(-1)
    with pytest.raises(ValueError, match="warped"):
        T.lipschitz_disk()


def test_warped_resolvent_containment_and_lipschitz():
    F = NPN.B
    J = warped_resolvent(NPN, F, 1.0)
    c = sample_pair_srg(compose(F, J), F, 120, 0)
    assert cloud_margin(J.containment_disk(0.0), c)[0] >= -1e-9
    lip = J.lipschitz_disk(0.0)
    assert lip.radius == pytest.approx(np.linalg.norm(F.matrix, 2) * np.linalg.norm(np.linalg.inv(F.matrix), 2))
    c2 = sample_pair_srg(J, identity(2), 120, 0)
    assert cloud_margin(lip, c2)[0] >= -1e-9


def test_warped_lipschitz_needs_invertible_or_constants():
    J = warped_resolvent(quartic_gradient(2), quartic_gradient(2) + identity(2), 1.0)
    with pytest.raises(ValueError, match="Lipschitz constants"):
        J.lipschitz_disk()
    assert J.lipschitz_disk(0.0, l=1.0, L=2.0).radius == 2.0


def test_congruence_transform_keeps_monotonicity():
    M = np.diag([2.0, 1.0])
    A2, F2 = congruence_transform(NPN, NPN.B, M)
    rep = check_semimonotone_pair(A2, F2, 0, 0, 80)
    assert rep.ok
    A3, F3 = congruence_transform(NPN, NPN.B, np.eye(2))
    x = np.array([-0.4, -1.2])
    assert np.allclose(A3(x), NPN(x))
    assert np.allclose(F3(x), NPN.B(x))
    with pytest.raises(ValueError, match="invertible"):
        congruence_transform(NPN, NPN.B, np.ones((2, 2)))


def test_apply_batch_linear_and_general():
    X = Y[:5]
    assert np.allclose(apply_batch(NPN.B, X), X @ NPN.B.matrix.T)
    assert np.allclose(apply_batch(quartic_gradient(2), X), X**3)


def test_piecewise_affine_resolvent_uses_the_form():
    form = AffineDiodeForm(np.eye(2), np.array([[1.0, 0.0], [0.0, 0.5]]), np.zeros(2), np.array([True, False]))
    A = PiecewiseAffineOp(form)
    X = solve_inclusion_batch(A, identity(2), 1.0, Y[:50])
    assert np.all(X[:, 0] <= 1e-12)
