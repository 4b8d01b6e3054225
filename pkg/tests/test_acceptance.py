"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (shown even
under output capture). Run ``python tests/test_acceptance.py`` for the
lines alone.
"""

import sys
import time

import numpy as np

from pairsrg.calculus import run_calculus_suite
from pairsrg.circuits import solve_amplifier, solve_leaky_transistor
from pairsrg.config import bundled_config, load_circuit_config, load_pair
from pairsrg.iterate import cp_block_preconditioner, cp_block_problem, primal_dual_iterate, transformed_ppa
from pairsrg.ops import LinearOp, NPNTransistor, compose, diode_bank, identity, quartic_gradient
from pairsrg.regions import (
    Semimonotone,
    check_semimonotone_pair,
    cloud_margin,
    contains,
    contains_direct,
    pair_partner_rank_deficient,
)
from pairsrg.resolve import transformed_resolvent, warped_resolvent
from pairsrg.srg import sample_pair_srg


def _report(request, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    capman = request.config.pluginmanager.getplugin("capturemanager") if request is not None else None
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line)
    else:
        print(line)
    assert ok, line


def test_criterion_1_calculus_suite(request):
    t0 = time.perf_counter()
    results = run_calculus_suite(seed=0, dims=(1, 2, 3), n_inputs=200, tol=1e-10)
    elapsed = time.perf_counter() - t0
    failed = [f"{r.rule}/dim{r.dim}" for r in results if not r.ok]
    ok = not failed and elapsed < 10.0
    _report(request, 1, ok, f"{len(results)} rule checks, failed={failed or 'none'}, {elapsed:.2f} s (< 10 s)")


SEMI_PAIRS = [(0.0, 0.0), (0.3, 0.2), (-0.5, 0.4), (0.2, -0.1)]


def test_criterion_2_semimonotone_forms(request):
    rng = np.random.default_rng(2)
    mismatches = 0
    for mu, rho in SEMI_PAIRS:
        reg = Semimonotone(mu, rho)
        Z = rng.uniform(-3, 3, 1000) + 1j * rng.uniform(-3, 3, 1000)
        for z in Z:
            mismatches += contains(reg, z, tol=0.0) != contains_direct(z, mu, rho)
    _report(request, 2, mismatches == 0, f"4 x 1000 points, mismatches={mismatches}")


MONOTONE_VERDICTS = [("lin-id", False), ("lin-shift", True), ("npn-partner", True), ("npn-shift", False)]


def test_criterion_3_monotone_pair_certificates(request):
    parts, ok = [], True
    for name, expected in MONOTONE_VERDICTS:
        spec = load_pair(name)
        rep = check_semimonotone_pair(spec.A, spec.B, 0.0, 0.0, 200, 0, tol=1e-9, box=spec.box)
        ok &= rep.ok == expected and rep.agree
        parts.append(f"{name}={'pass' if rep.ok else 'fail'}({rep.worst_inequality_margin:.2e}/{rep.worst_srg_margin:.2e})")
    _report(request, 3, ok, " ".join(parts))


def _m_alpha_pairs():
    npn = NPNTransistor()
    return [
        ("npn", npn, npn.B),
        ("diodes-id", diode_bank(2), identity(2)),
        ("mono-id", quartic_gradient(2), identity(2)),
    ]


def test_criterion_4_resolvent_containment(request):
    worst, bad = np.inf, []
    for alpha in (0.0, 0.5):
        for name, A0, F in _m_alpha_pairs():
            A = A0 + alpha * F if alpha else A0
            for gamma in (0.5, 1.0, 2.0):
                T = transformed_resolvent(A, F, gamma)
                m, _ = cloud_margin(T.containment_disk(alpha), sample_pair_srg(T, identity(2), 150, 4))
                checks = [("T", m)]
                if isinstance(F, LinearOp):
                    J = warped_resolvent(A, F, gamma)
                    mw, _ = cloud_margin(J.containment_disk(alpha), sample_pair_srg(compose(F, J), F, 150, 4))
                    ml, _ = cloud_margin(J.lipschitz_disk(alpha), sample_pair_srg(J, identity(2), 150, 4))
                    checks += [("J", mw), ("Jlip", ml)]
                for tag, v in checks:
                    worst = min(worst, v)
                    if v < -1e-9:
                        bad.append(f"{name}/{tag}/a={alpha}/g={gamma}")
    _report(request, 4, not bad, f"worst margin {worst:.2e}, failures={bad or 'none'}")


def test_criterion_5_preconditioned_forward_step(request):
    mins = {}
    for kind in ("identity", "clip", "arcsinh"):
        spec = load_pair(f"aniso-{kind}")
        c = sample_pair_srg(spec.A, spec.B, 200, 0, box=(-2.0, 2.0))
        mins[kind] = float(c.points.real.min())
    ok = mins["identity"] < 0 and mins["clip"] >= -1e-9 and mins["arcsinh"] >= -1e-9
    _report(request, 5, ok, "min Re: " + ", ".join(f"{k}={v:.3g}" for k, v in mins.items()))


def test_criterion_6_leaky_transistor(request):
    t0 = time.perf_counter()
    parts, ok = [], True
    for gamma in (0.01, 0.1, 1.0, 10.0, 100.0):
        cfg = bundled_config("leaky")
        cfg["params"]["gamma"] = gamma
        problem = load_circuit_config(cfg).problem()
        sol = solve_leaky_transistor(problem)
        good = (
            sol.ok
            and bool(np.all(sol.converged))
            and len(sol.residuals) == 256
            and float(sol.residuals.max()) <= 1e-8
            and float(sol.oracle_error.max()) <= 1e-8
        )
        ok &= good
        parts.append(f"g={gamma:g}:{'ok' if good else 'FAIL'}(max it {int(sol.iterations.max())})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    _report(request, 6, ok, " ".join(parts) + f", {elapsed:.1f} s (< 30 s)")


def test_criterion_7_amplifier(request):
    problem = load_circuit_config(bundled_config("amplifier")).problem()
    pre = problem.preconditions()
    sol = solve_amplifier(problem)
    good = (
        pre.ok
        and sol.ok
        and bool(np.all(sol.converged))
        and len(sol.residuals) == 256
        and float(sol.residuals.max()) <= 1e-8
        and float(sol.fejer_max_increase.max()) <= 1e-10
    )

    k = 17

    class One:
        A, R = problem.A, problem.R
        s_v, s_i = problem.s_v[k], problem.s_i[k]

    ref = primal_dual_iterate(One, problem.gamma, problem.tau, tol=1e-12)
    op, F = cp_block_problem(problem.A, problem.R, problem.s_v[k], problem.s_i[k])
    P = cp_block_preconditioner(problem.R, problem.gamma, problem.tau)
    tr = transformed_ppa(op, F, P, np.zeros(4), tol=1e-12)
    diff = max(float(np.abs(a - b).max()) for a, b in zip(tr.iterates, ref.iterates))
    diff = max(diff, float(np.abs(tr.final - ref.final).max()))
    ok = good and diff <= 1e-9
    _report(
        request,
        7,
        ok,
        f"preconditions={'pass' if pre.ok else 'FAIL'}, max residual {sol.residuals.max():.2e}, "
        f"max Fejer increase {sol.fejer_max_increase.max():.1e}, ppa vs cp {diff:.1e}",
    )


def test_criterion_8_rank_deficient_partner(request):
    rng = np.random.default_rng(8)
    worst, failures = np.inf, 0
    for k in range(20):
        U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        a, b = rng.uniform(0.5, 2.0, 2)
        M = U @ np.diag([a, b, 0.0]) @ V.T
        G = rng.standard_normal((3, 3))
        B = LinearOp(G @ G.T + 0.1 * np.eye(3) + (G - G.T), "B")
        partner = pair_partner_rank_deficient(M)
        rep = check_semimonotone_pair(compose(LinearOp(M, "M"), B), partner, 0.0, 0.0, 200, k, tol=1e-9)
        worst = min(worst, rep.worst_inequality_margin, rep.worst_srg_margin)
        failures += not rep.ok
    _report(request, 8, failures == 0, f"20 matrices, failures={failures}, worst margin {worst:.2e}")


if __name__ == "__main__":
    fails = 0
    for name, fn in sorted((n, f) for n, f in globals().items() if n.startswith("test_criterion_")):
        try:
            fn(None)
        except AssertionError:
            fails += 1
    sys.exit(1 if fails else 0)
