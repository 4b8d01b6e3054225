import numpy as np
import pytest

from pairsrg.circuits import (
    PRIOR_STEP_BOUND_FACTOR,
    AmplifierProblem,
    LeakyTransistorProblem,
    amplifier_inclusion_residual,
    amplifier_oracle,
    leaky_inclusion_residual,
    leaky_transistor_oracle,
    solve_amplifier,
    solve_leaky_transistor,
    sweep,
)
from pairsrg.iterate import PreconditionError


def _source(n, amp=1e-3):
    t = np.linspace(0, 1, n, endpoint=False)
    return t, amp * np.column_stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)])


def _leaky(n=32, gamma=1.0, **kw):
    t, i = _source(n, kw.pop("amp", 1e-3))
    return LeakyTransistorProblem(r=10.0, i_src=i, gamma=gamma, t=t, **kw)


def test_problem_validation():
    with pytest.raises(ValueError, match="r must be positive"):
        LeakyTransistorProblem(r=0.0, i_src=np.zeros((1, 2)))
    with pytest.raises(ValueError, match="two columns"):
        LeakyTransistorProblem(r=1.0, i_src=np.zeros((3, 3)))
    with pytest.raises(ValueError, match="diode"):
        LeakyTransistorProblem(r=1.0, i_src=np.zeros((1, 2)), diode="zener")
    with pytest.raises(ValueError, match="R_E"):
        AmplifierProblem(R_E=-1.0, R_C=1.0, v_plus=1.0, v_in=[0.0])


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_leaky_matches_oracle(gamma):
    sol = solve_leaky_transistor(_leaky(32, gamma))
    assert sol.ok and sol.n_ok == 32
    assert np.all(sol.residuals <= 1e-8)
    assert np.all(sol.oracle_error <= 1e-8)
    assert np.allclose(sol.fixed_points, sol.v @ _leaky().B.T)


def test_leaky_below_the_prior_step_bound():
    gamma = 0.05 * 10.0 * PRIOR_STEP_BOUND_FACTOR
    sol = solve_leaky_transistor(_leaky(16, gamma, amp=5.0))
    assert sol.ok
    assert np.all(sol.oracle_error <= 1e-8)


def test_leaky_warm_mode_agrees_with_batch():
    p = _leaky(16, 1.0, amp=2.0)
    a = solve_leaky_transistor(p, mode="batch")
    b = solve_leaky_transistor(p, mode="warm")
    assert b.ok and len(b.traces) == 16
    assert np.allclose(a.v, b.v, atol=1e-10)
    with pytest.raises(ValueError, match="mode"):
        solve_leaky_transistor(p, mode="parallel")


def test_leaky_oracle_and_residual():
    p = _leaky(8, amp=3.0)
    V, U = leaky_transistor_oracle(p)
    res, U2 = leaky_inclusion_residual(p, V)
    assert np.all(res <= 1e-12)
    assert np.allclose(U, U2, atol=1e-12)
    res_bad, _ = leaky_inclusion_residual(p, V + 0.1)
    assert np.all(res_bad > 1e-3)


def test_leaky_shockley_diodes():
    p = _leaky(6, 1.0, amp=1e-2, diode="shockley")
    sol = solve_leaky_transistor(p)
    assert sol.ok
    assert sol.oracle_error is None
    assert np.all(sol.residuals <= 1e-8)


def test_leaky_partial_result_on_failure():
    sol = solve_leaky_transistor(_leaky(16, 0.01, amp=3.0), max_iters=5)
    assert not sol.ok
    assert "sample" in sol.failure
    assert sol.n_ok < 16
    csv = sol.to_csv(sol.n_ok)
    assert len(csv.splitlines()) == sol.n_ok + 1


def test_leaky_traces_csv():
    sol = solve_leaky_transistor(_leaky(4, amp=2.0), record_history=True)
    lines = sol.traces_csv().splitlines()
    assert lines[0] == "sample,k,residual,fejer_distance"
    assert len(lines) == 1 + int(sol.iterations.sum())


def _amp(n=32, **kw):
    t = np.linspace(0, 1, n, endpoint=False)
    return AmplifierProblem(R_E=30.0, R_C=300.0, v_plus=5.0, v_in=np.cos(2 * np.pi * t), t=t, **kw)


def test_amplifier_converges_and_is_fejer_monotone():
    sol = solve_amplifier(_amp())
    assert sol.ok
    assert sol.preconditions.ok
    assert np.all(sol.residuals <= 1e-8)
    assert np.all(sol.oracle_error <= 1e-8)
    assert np.all(sol.fejer_max_increase <= 1e-10)


def test_amplifier_oracle_satisfies_the_circuit():
    p = _amp(8)
    I, V, U = amplifier_oracle(p)
    res, _ = amplifier_inclusion_residual(p, I, V)
    assert np.all(res <= 1e-10)
    # KVL: v = -A i - s_v
    assert np.allclose(V, -(I @ p.A.T) - p.s_v)


def test_amplifier_warm_mode():
    p = _amp(8)
    a = solve_amplifier(p)
    b = solve_amplifier(p, mode="warm")
    assert b.ok
    assert np.allclose(a.v, b.v, atol=1e-8)
    assert np.all(b.fejer_max_increase <= 1e-10)


def test_amplifier_rejects_bad_steps():
    with pytest.raises(PreconditionError) as exc:
        solve_amplifier(_amp(4, gamma=1e-2))
    assert exc.value.name == "step_size_product"
    assert not _amp(4, gamma=1e-2).preconditions().ok


def test_amplifier_traces():
    sol = solve_amplifier(_amp(4), record_history=True)
    lines = sol.traces_csv().splitlines()
    assert len(lines) == 1 + int(sol.iterations.sum())
    assert lines[1].split(",")[3] != ""


def test_sweep_dispatch_and_csv():
    sol = sweep(_leaky(4))
    text = sol.to_csv()
    assert text.splitlines()[0] == "t,v1,v2,i1,i2,iterations,residual"
    assert len(text.splitlines()) == 5
    with pytest.raises(TypeError):
        sweep(object())
