"""The leaky-transistor and common-emitter amplifier problems, their solvers and oracles.

Units are SI throughout: currents in amperes, voltages in volts, resistances
in ohms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .iterate import (
    BatchTrace,
    IterationTrace,
    PreconditionReport,
    km_iterate,
    km_iterate_batch,
    primal_dual_iterate,
    primal_dual_iterate_batch,
    primal_dual_preconditions,
)
from .ops import (
    DEFAULT_ALPHA_F,
    DEFAULT_ALPHA_R,
    LinearOp,
    NPNTransistor,
    ShockleyDiode,
    identity,
    translate,
)
from .resolve import ActiveSetSolver, transformed_resolvent

__all__ = [
    "LeakyTransistorProblem",
    "AmplifierProblem",
    "CircuitSolution",
    "SampleFailure",
    "leaky_transistor_oracle",
    "amplifier_oracle",
    "leaky_inclusion_residual",
    "amplifier_inclusion_residual",
    "solve_leaky_transistor",
    "solve_amplifier",
    "sweep",
    "PRIOR_STEP_BOUND_FACTOR",
]

CIRCUIT_TOL = 1e-13
CIRCUIT_MAX_ITERS = 1_000_000
INCLUSION_TOL = 1e-8
# the earlier splitting for the leaky transistor needs gamma > r * (sqrt(2) - 1)
PRIOR_STEP_BOUND_FACTOR = math.sqrt(2.0) - 1.0


class SampleFailure(RuntimeError):
    """A time sample did not converge or failed verification."""

    def __init__(self, index: int, message: str):
        super().__init__(f"sample {index}: {message}")
        self.index = index


def _npn_matrix(alpha_f, alpha_r):
    return np.array([[1.0, -alpha_r], [-alpha_f, 1.0]])


@dataclass
class LeakyTransistorProblem:
    """Find ``v`` with ``i ∈ A_NPN(v) + v / r`` for each source sample ``i``.

    ``i_src`` has one row per time sample.
    """

    r: float
    i_src: np.ndarray
    gamma: float = 1.0
    alpha_f: float = DEFAULT_ALPHA_F
    alpha_r: float = DEFAULT_ALPHA_R
    diode: str = "ideal"
    t: Optional[np.ndarray] = None
    shockley: tuple = (1e-12, 0.025)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.diode not in ("ideal", "shockley"):
            raise ValueError("diode must be 'ideal' or 'shockley'")
        self.i_src = np.array(self.i_src, dtype=float, ndmin=2)
        if self.i_src.shape[1] != 2:
            raise ValueError("i_src must have two columns")
        if self.t is None:
            self.t = np.arange(len(self.i_src), dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if len(self.t) != len(self.i_src):
            raise ValueError("t and i_src must have the same length")

    @property
    def transistor(self) -> NPNTransistor:
        d = ShockleyDiode(*self.shockley) if self.diode == "shockley" else None
        return NPNTransistor(self.alpha_f, self.alpha_r, d)

    @property
    def R(self):
        return _npn_matrix(self.alpha_f, self.alpha_r)

    @property
    def B(self):
        return np.array([[1.0, self.alpha_f], [self.alpha_r, 1.0]])

    def operator(self, i=None):
        """``A_NPN + id/r``, shifted by ``-i`` when a source sample is given."""
        op = self.transistor + (1.0 / self.r) * identity(2)
        return op if i is None else translate(op, -np.asarray(i, dtype=float))


@dataclass
class AmplifierProblem:
    """Common-emitter amplifier: ``0 ∈ [A i + v + s_v; A_NPN(v) - i + s_i]``.

    ``A = diag(R_C, R_E)`` and ``s_v = (v_plus - v_in, -v_in)`` with one
    ``v_in`` per time sample; ``s_i = 0``.
    """

    R_E: float
    R_C: float
    v_plus: float
    v_in: np.ndarray
    gamma: float = 1e-3
    tau: float = 100.0
    alpha_f: float = DEFAULT_ALPHA_F
    alpha_r: float = DEFAULT_ALPHA_R
    t: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("R_E", "R_C", "gamma", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        self.v_in = np.atleast_1d(np.asarray(self.v_in, dtype=float))
        if self.t is None:
            self.t = np.arange(len(self.v_in), dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if len(self.t) != len(self.v_in):
            raise ValueError("t and v_in must have the same length")

    @property
    def A(self):
        return np.diag([self.R_C, self.R_E])

    @property
    def R(self):
        return _npn_matrix(self.alpha_f, self.alpha_r)

    @property
    def s_v(self):
        return np.column_stack([self.v_plus - self.v_in, -self.v_in])

    @property
    def s_i(self):
        return np.zeros((len(self.v_in), 2))

    def preconditions(self) -> PreconditionReport:
        return primal_dual_preconditions(self.A, self.R, self.gamma, self.tau)


@dataclass
class CircuitSolution:
    """Per-sample results of a circuit sweep.

    ``i`` and ``v`` hold the physical currents and voltages. For the leaky
    transistor ``i`` is the source current and ``fixed_points`` holds the
    iteration limits ``B v``. ``residuals`` are inclusion residuals, and
    ``oracle_error`` is the distance to the enumeration oracle.
    """

    t: np.ndarray
    i: np.ndarray
    v: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    fixed_points: np.ndarray
    diode_currents: np.ndarray
    oracle_error: Optional[np.ndarray] = None
    fejer_max_increase: Optional[np.ndarray] = None
    preconditions: Optional[PreconditionReport] = None
    traces: list = field(default_factory=list, repr=False)
    batch: Optional[BatchTrace] = field(default=None, repr=False)
    failure: Optional[str] = None

    @property
    def ok(self):
        return self.failure is None

    @property
    def n_ok(self):
        """Number of leading samples that converged and verified."""
        good = self.converged & (self.residuals <= INCLUSION_TOL)
        bad = np.flatnonzero(~good)
        return len(good) if len(bad) == 0 else int(bad[0])

    def to_csv(self, limit: Optional[int] = None) -> str:
        n = len(self.t) if limit is None else limit
        lines = ["t,v1,v2,i1,i2,iterations,residual"]
        for k in range(n):
            vals = (self.t[k], self.v[k, 0], self.v[k, 1], self.i[k, 0], self.i[k, 1])
            row = ",".join(repr(float(x) + 0.0) for x in vals)
            lines.append(f"{row},{int(self.iterations[k])},{float(self.residuals[k])!r}")
        return "\n".join(lines) + "\n"

    def traces_csv(self, limit: Optional[int] = None) -> str:
        """Long-format iteration traces ``sample,k,residual,fejer_distance``.

        Batch runs need ``record_history=True``; otherwise only per-sample
        traces from warm or Newton runs are available.
        """
        n = len(self.t) if limit is None else limit
        lines = ["sample,k,residual,fejer_distance"]
        fmt = lambda x: "" if x is None or not np.isfinite(x) else repr(float(x))  # noqa: E731
        if self.batch is not None and self.batch.residual_history is not None:
            rh = np.array(self.batch.residual_history).reshape(-1, len(self.t))
            fh = None if self.batch.fejer_history is None else np.array(self.batch.fejer_history)
            for s in range(n):
                for k in range(int(self.iterations[s])):
                    f = None if fh is None else fh[k, s]
                    lines.append(f"{s},{k + 1},{fmt(rh[k, s])},{fmt(f)}")
        else:
            for s, tr in enumerate(self.traces[:n]):
                fej = tr.fejer_distances
                for k, r in enumerate(tr.residuals):
                    f = fej[k + 1] if fej is not None and k + 1 < len(fej) else None
                    lines.append(f"{s},{k + 1},{fmt(r)},{fmt(f)}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Oracles: direct enumeration of the 4 diode states of the full system
# ---------------------------------------------------------------------------


def _enumerate(K_of_state, rhs, check):
    """Try all four diode states; return the first (smallest active set) consistent solution."""
    sols = []
    for S in ((), (0,), (1,), (0, 1)):
        K, assemble = K_of_state(S)
        try:
            z = np.linalg.solve(K, rhs(S))
        except np.linalg.LinAlgError:
            continue
        sol = assemble(z)
        if check(S, sol):
            sols.append(sol)
    return sols


def leaky_transistor_oracle(problem: LeakyTransistorProblem, tol: float = 1e-12):
    """Solve ``i = R u + v / r`` with ``u_j ≥ 0, v_j ≤ 0, u_j v_j = 0`` by enumeration.

    Returns ``(v, u)`` arrays with one row per sample.
    """
    if problem.diode != "ideal":
        raise ValueError("the enumeration oracle needs ideal diodes")
    R, r = problem.R, problem.r
    V = np.empty_like(problem.i_src)
    U = np.empty_like(problem.i_src)
    for k, i in enumerate(problem.i_src):
        scale = max(1.0, float(np.abs(i).max()))

        def K_of_state(S):
            # unknowns: v_j for j not in S, u_j for j in S
            cols = [R[:, j] if j in S else np.eye(2)[:, j] / r for j in range(2)]

            def assemble(z):
                u = np.array([z[j] if j in S else 0.0 for j in range(2)])
                v = np.array([0.0 if j in S else z[j] for j in range(2)])
                return v, u

            return np.column_stack(cols), assemble

        def check(S, sol):
            v, u = sol
            return bool(np.all(v <= tol * scale) and np.all(u >= -tol * scale))

        sols = _enumerate(K_of_state, lambda S: i, check)
        if not sols:
            raise SampleFailure(k, "oracle found no consistent diode state")
        V[k], U[k] = sols[0]
    return V, U


def amplifier_oracle(problem: AmplifierProblem, tol: float = 1e-12):
    """Solve ``v = -A i - s_v``, ``i = R u`` with diode complementarity by enumeration.

    Returns ``(i, v, u)`` arrays with one row per sample.
    """
    A, R = problem.A, problem.R
    AR = A @ R
    N = len(problem.v_in)
    I, V, U = np.empty((N, 2)), np.empty((N, 2)), np.empty((N, 2))
    for k, s in enumerate(problem.s_v):
        scale = max(1.0, float(np.abs(s).max()))

        def K_of_state(S):
            # v_j = 0 for j in S; u_j = 0 otherwise; unknown u_S and v_off
            # v = -A R u - s  =>  A R u + v = -s
            cols = [AR[:, j] if j in S else np.eye(2)[:, j] for j in range(2)]

            def assemble(z):
                u = np.array([z[j] if j in S else 0.0 for j in range(2)])
                v = np.array([0.0 if j in S else z[j] for j in range(2)])
                return R @ u, v, u

            return np.column_stack(cols), assemble

        def check(S, sol):
            _, v, u = sol
            return bool(np.all(v <= tol * scale) and np.all(u >= -tol * scale))

        sols = _enumerate(K_of_state, lambda S: -s, check)
        if not sols:
            raise SampleFailure(k, "oracle found no consistent diode state")
        I[k], V[k], U[k] = sols[0]
    return I, V, U


# ---------------------------------------------------------------------------
# Solver-agnostic verification
# ---------------------------------------------------------------------------


def _complementarity(u, v):
    """Largest violation of ``u ≥ 0, v ≤ 0, u v = 0`` per row."""
    return np.max(np.stack([np.maximum(-u, 0), np.maximum(v, 0), np.abs(u * v)]), axis=(0, 2))


def leaky_inclusion_residual(problem: LeakyTransistorProblem, V):
    """Residual of ``i ∈ A_NPN(v) + v/r`` and the reconstructed diode currents."""
    V = np.asarray(V, dtype=float).reshape(-1, 2)
    rhs = problem.i_src - V / problem.r
    if problem.diode == "shockley":
        t = problem.transistor
        cur = np.array([[t.diode.current(x) for x in v] for v in V])
        return np.abs(rhs - cur @ problem.R.T).max(axis=1), cur
    U = np.linalg.solve(problem.R, rhs.T).T
    return _complementarity(U, V), U


def amplifier_inclusion_residual(problem: AmplifierProblem, I, V):
    """Residual of the amplifier inclusion at physical ``(i, v)`` and the diode currents."""
    I = np.asarray(I, dtype=float).reshape(-1, 2)
    V = np.asarray(V, dtype=float).reshape(-1, 2)
    kvl = np.abs(I @ problem.A.T + V + problem.s_v).max(axis=1)
    U = np.linalg.solve(problem.R, I.T).T
    return np.maximum(kvl, _complementarity(U, V)), U


# ---------------------------------------------------------------------------
# Leaky transistor
# ---------------------------------------------------------------------------


def _first_failure(converged, residuals):
    bad = np.flatnonzero(~(converged & (residuals <= INCLUSION_TOL)))
    if len(bad) == 0:
        return None
    k = int(bad[0])
    why = "did not converge" if not converged[k] else f"inclusion residual {residuals[k]:.3g} exceeds {INCLUSION_TOL:g}"
    return f"sample {k}: {why}"


def solve_leaky_transistor(
    problem: LeakyTransistorProblem,
    tol: float = CIRCUIT_TOL,
    max_iters: int = CIRCUIT_MAX_ITERS,
    mode: str = "batch",
    x0=None,
    with_oracle: bool = True,
    record_history: bool = False,
) -> CircuitSolution:
    """Iterate ``x ↦ T(x)`` with ``T`` the transformed resolvent of ``γ(A_NPN + id/r - i)`` w.r.t. ``B``.

    The limit is ``x* = B v*``; ``v* = B^{-1} x*`` is returned and checked
    against the inclusion. ``mode="batch"`` advances all samples together from
    ``x0`` (zero by default); ``mode="warm"`` runs them in order, each starting
    from the previous limit.
    """
    p = problem
    g = p.gamma
    N = len(p.i_src)
    B = p.B
    start = np.zeros(2) if x0 is None else np.asarray(x0, dtype=float).reshape(2)
    traces = []
    batch = None
    if p.diode == "ideal":
        # T_{γ(A - i)}(x) = T_{γA}(x + γ i) for the unshifted A = A_NPN + id/r
        form = p.operator().affine_form()
        solver = ActiveSetSolver(form, B, np.zeros(2), g)

        def T(X, idx):
            Y = X + g * p.i_src[idx]
            Z, U = solver.solve(Y)
            solver.verify(Y, Z, U)
            return Z @ B.T

        if mode == "batch":
            batch = km_iterate_batch(T, np.tile(start, (N, 1)), tol, max_iters, record_history=record_history)
            X, iters, conv = batch.final, batch.iterations, batch.status == "converged"
        elif mode == "warm":
            X = np.empty((N, 2))
            iters = np.zeros(N, dtype=int)
            conv = np.zeros(N, dtype=bool)
            x = start
            for k in range(N):
                tr = km_iterate(lambda z, k=k: T(z[None, :], [k])[0], x, tol, max_iters)
                traces.append(tr)
                X[k], iters[k], conv[k] = tr.final, tr.iterations_used, tr.converged
                if not tr.converged:
                    break
                x = tr.final
        else:
            raise ValueError("mode must be 'batch' or 'warm'")
    else:
        if mode not in ("batch", "warm"):
            raise ValueError("mode must be 'batch' or 'warm'")
        # smooth diodes: per-sample Newton inner solves, warm started
        X = np.empty((N, 2))
        iters = np.zeros(N, dtype=int)
        conv = np.zeros(N, dtype=bool)
        x = start
        Bop = LinearOp(B, "B")
        for k in range(N):
            Tk = transformed_resolvent(p.operator(p.i_src[k]), Bop, g, method="newton")
            tr = km_iterate(Tk, x, tol, max_iters)
            traces.append(tr)
            X[k], iters[k], conv[k] = tr.final, tr.iterations_used, tr.converged
            if not tr.converged:
                break
            x = tr.final if mode == "warm" else start
    V = np.linalg.solve(B, X.T).T
    res, U = leaky_inclusion_residual(p, V)
    res = np.where(conv, res, np.inf)
    oracle_err = None
    if with_oracle and p.diode == "ideal":
        Vo, _ = leaky_transistor_oracle(p)
        oracle_err = np.abs(V - Vo).max(axis=1)
    return CircuitSolution(
        t=p.t,
        i=p.i_src,
        v=V,
        iterations=iters,
        residuals=res,
        converged=conv,
        fixed_points=X,
        diode_currents=U,
        oracle_error=oracle_err,
        traces=traces,
        batch=batch,
        failure=_first_failure(conv, res),
    )


# ---------------------------------------------------------------------------
# Amplifier
# ---------------------------------------------------------------------------


def solve_amplifier(
    problem: AmplifierProblem,
    tol: float = CIRCUIT_TOL,
    max_iters: int = CIRCUIT_MAX_ITERS,
    mode: str = "batch",
    x0=None,
    with_oracle: bool = True,
    record_history: bool = False,
) -> CircuitSolution:
    """Run the primal-dual recursion for every ``v_in`` sample.

    The state is ``(i, v)`` and the physical solution is ``(R i, R^T v)``.
    When the oracle is used, Fejér distances are measured to the oracle
    solution mapped back to state coordinates.
    """
    p = problem
    report = p.preconditions()
    R = p.R
    N = len(p.v_in)
    start = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float).reshape(4)
    ref = None
    Io = Vo = None
    if with_oracle:
        Io, Vo, _ = amplifier_oracle(p)
        ref = np.concatenate([np.linalg.solve(R, Io.T).T, np.linalg.solve(R.T, Vo.T).T], axis=1)
    traces = []
    batch = None
    fej = None
    if mode == "batch":
        batch = primal_dual_iterate_batch(p, p.gamma, p.tau, np.tile(start, (N, 1)), tol, max_iters, ref, record_history)
        X, iters, conv = batch.final, batch.iterations, batch.status == "converged"
        fej = batch.fejer_max_increase
    elif mode == "warm":
        X = np.empty((N, 4))
        iters = np.zeros(N, dtype=int)
        conv = np.zeros(N, dtype=bool)
        fej = np.zeros(N)
        x = start

        class _One:
            pass

        for k in range(N):
            one = _One()
            one.A, one.R, one.s_v, one.s_i = p.A, R, p.s_v[k], p.s_i[k]
            tr = primal_dual_iterate(one, p.gamma, p.tau, x, tol, max_iters, None if ref is None else ref[k])
            traces.append(tr)
            X[k], iters[k], conv[k] = tr.final, tr.iterations_used, tr.converged
            fej[k] = tr.fejer_max_increase()
            if not tr.converged:
                break
            x = tr.final
    else:
        raise ValueError("mode must be 'batch' or 'warm'")
    I = X[:, :2] @ R.T
    V = X[:, 2:] @ R
    res, U = amplifier_inclusion_residual(p, I, V)
    res = np.where(conv, res, np.inf)
    oracle_err = None
    if with_oracle:
        oracle_err = np.maximum(np.abs(I - Io).max(axis=1), np.abs(V - Vo).max(axis=1))
    return CircuitSolution(
        t=p.t,
        i=I,
        v=V,
        iterations=iters,
        residuals=res,
        converged=conv,
        fixed_points=X,
        diode_currents=U,
        oracle_error=oracle_err,
        fejer_max_increase=fej,
        preconditions=report,
        traces=traces,
        batch=batch,
        failure=_first_failure(conv, res),
    )


def sweep(problem, **kwargs) -> CircuitSolution:
    """Solve every time sample of a circuit problem.

    On failure the returned solution has ``failure`` set and ``n_ok`` gives
    the number of leading samples that are valid.
    """
    if isinstance(problem, LeakyTransistorProblem):
        return solve_leaky_transistor(problem, **kwargs)
    if isinstance(problem, AmplifierProblem):
        return solve_amplifier(problem, **kwargs)
    raise TypeError(f"unknown circuit problem {type(problem).__name__}")
