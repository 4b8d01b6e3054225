"""Fixed-point drivers: Krasnosel'skii-Mann, transformed proximal point, primal-dual.

Single runs return an :class:`IterationTrace` with every iterate. Batched
runs advance many independent problems (one per row) in lockstep. They keep
only summary data per row, because long sweeps would not fit in memory
otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .ops import LinearOp, PiecewiseAffineOp, SetValuedOp, AffineDiodeForm, compose
from .resolve import ActiveSetSolver, apply_batch, solve_inclusion_batch

__all__ = [
    "IterationTrace",
    "BatchTrace",
    "PreconditionError",
    "PreconditionReport",
    "km_iterate",
    "km_iterate_batch",
    "check_spd",
    "p_norm",
    "transformed_ppa",
    "transformed_ppa_map",
    "cp_block_preconditioner",
    "cp_block_problem",
    "primal_dual_preconditions",
    "primal_dual_iterate",
    "primal_dual_iterate_batch",
    "primal_dual_step",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
FEJER_SLACK = 1e-10


@dataclass
class IterationTrace:
    """Record of one fixed-point run.

    ``residuals[k] = |x^{k+1} - x^k|``, so there is one fewer residual than
    iterates. ``fejer_distances[k]`` is the P-norm distance from ``x^k`` to
    the reference point.
    """

    iterates: list
    residuals: list
    status: str
    iterations_used: int
    fejer_distances: Optional[list] = None
    reference: Optional[np.ndarray] = None
    tol: float = DEFAULT_TOL

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def fejer_max_increase(self) -> float:
        d = self.fejer_distances
        if not d or len(d) < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(d))))

    def to_csv(self) -> str:
        lines = ["k,residual,fejer_distance"]
        d = self.fejer_distances
        for k, r in enumerate(self.residuals):
            fd = "" if d is None else repr(float(d[k]))
            lines.append(f"{k},{float(r)!r},{fd}")
        return "\n".join(lines) + "\n"


@dataclass
class BatchTrace:
    """Per-row summary of a batched run.

    ``fejer_max_increase`` is the largest step-to-step increase of the
    P-norm distance to ``reference`` seen along each row; ``residual_history``
    is kept only when requested.
    """

    x0: np.ndarray
    final: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    fejer_max_increase: Optional[np.ndarray] = None
    residual_history: Optional[list] = field(default=None, repr=False)
    fejer_history: Optional[list] = field(default=None, repr=False)
    tol: float = DEFAULT_TOL

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.status == "converged"))

    def row_trace(self, k) -> IterationTrace:
        """A trace holding the first and last iterate of row ``k`` (plus histories if recorded)."""
        res = [] if self.residual_history is None else [h[k] for h in self.residual_history]
        fej = None if self.fejer_history is None else [h[k] for h in self.fejer_history]
        return IterationTrace(
            iterates=[self.x0[k], self.final[k]],
            residuals=res,
            status=str(self.status[k]),
            iterations_used=int(self.iterations[k]),
            fejer_distances=fej,
            tol=self.tol,
        )


def p_norm(d, P=None):
    """``sqrt(d^T P d)`` row-wise; Euclidean when ``P`` is ``None``."""
    d = np.asarray(d, dtype=float)
    if P is None:
        return np.sqrt(np.einsum("...i,...i->...", d, d))
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", d, P, d), 0.0))


def km_iterate(
    T,
    x0,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    relaxation: float = 1.0,
    fejer_metric=None,
    reference=None,
) -> IterationTrace:
    """Run ``x^{k+1} = (1 - λ) x^k + λ T(x^k)`` until ``|x^{k+1} - x^k| <= tol``.

    Parameters
    ----------
    T : callable or SetValuedOp
        Single-valued map.
    relaxation : float
        ``λ ∈ (0, 1]``; 1 gives the plain iteration.
    fejer_metric : array, optional
        Matrix ``P`` for the Fejér distances (identity if omitted).
    reference : array, optional
        Reference point for the Fejér distances; the final iterate if omitted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    f = lambda v: np.asarray(T(v), dtype=float)  # noqa: E731
    x = np.array(x0, dtype=float).reshape(-1)
    iterates = [x.copy()]
    residuals = []
    status = "max_iters"
    for _ in range(int(max_iters)):
        tx = f(x)
        xn = x + relaxation * (tx - x) if relaxation != 1.0 else tx
        if not np.all(np.isfinite(xn)):
            status = "diverged"
            break
        r = float(np.linalg.norm(xn - x))
        iterates.append(xn)
        residuals.append(r)
        x = xn
        if r <= tol:
            status = "converged"
            break
    ref = iterates[-1] if reference is None else np.asarray(reference, dtype=float).reshape(-1)
    P = None if fejer_metric is None else np.asarray(fejer_metric, dtype=float)
    fejer = list(p_norm(np.array(iterates) - ref, P)) if status != "diverged" else None
    return IterationTrace(iterates, residuals, status, len(residuals), fejer, ref, tol)


def km_iterate_batch(
    T: Callable,
    X0,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    relaxation: float = 1.0,
    fejer_metric=None,
    reference=None,
    record_history: bool = False,
) -> BatchTrace:
    """Iterate a row-wise map on many starting points at once.

    ``T(X, idx)`` maps the ``(m, n)`` array of still-active rows, whose
    original row numbers are ``idx``, to their images. Rows stop moving
    once converged, so each row reproduces its own single run exactly.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    X0 = np.array(X0, dtype=float, ndmin=2)
    X = X0.copy()
    N = len(X)
    iters = np.zeros(N, dtype=int)
    res = np.full(N, math.inf)
    status = np.array(["max_iters"] * N, dtype=object)
    active = np.ones(N, dtype=bool)
    P = None if fejer_metric is None else np.asarray(fejer_metric, dtype=float)
    ref = None if reference is None else np.array(reference, dtype=float, ndmin=2)
    fej_inc = None
    if ref is not None:
        dist = p_norm(X - ref, P)
        fej_inc = np.zeros(N)
    rh = [] if record_history else None
    fh = [] if (record_history and ref is not None) else None
    for _ in range(int(max_iters)):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        Xa = X[idx]
        TX = np.asarray(T(Xa, idx), dtype=float)
        Xn = Xa + relaxation * (TX - Xa) if relaxation != 1.0 else TX
        finite = np.all(np.isfinite(Xn), axis=1)
        r = np.sqrt(np.einsum("ij,ij->i", Xn - Xa, Xn - Xa))
        bad = idx[~finite]
        status[bad] = "diverged"
        active[bad] = False
        good = idx[finite]
        X[good] = Xn[finite]
        res[good] = r[finite]
        iters[good] += 1
        if ref is not None:
            dn = p_norm(X[good] - ref[good] if len(ref) == N else X[good] - ref, P)
            fej_inc[good] = np.maximum(fej_inc[good], dn - dist[good])
            dist[good] = dn
        if record_history:
            row = np.full(N, np.nan)
            row[good] = r[finite]
            rh.append(row)
            if fh is not None:
                fh.append(dist.copy())
        done = good[r[finite] <= tol]
        status[done] = "converged"
        active[done] = False
    return BatchTrace(X0, X, res, iters, status, fej_inc, rh, fh, tol)


# ---------------------------------------------------------------------------
# Transformed proximal point with a linear preconditioner
# ---------------------------------------------------------------------------


def check_spd(P, name="P"):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(P, P.T, rtol=0, atol=1e-12 * max(1.0, np.abs(P).max())):
        raise ValueError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite (Cholesky failed)") from None
    return P


def transformed_ppa_map(A: SetValuedOp, F: SetValuedOp, P):
    """The row-wise map ``x̄ -> F((A + P F)^{-1} P x̄)``."""
    P = check_spd(P)
    PF = compose(LinearOp(P, "P"), F)
    form = A.affine_form()
    lin = PF.affine_form()
    if form is not None and lin is not None and not lin.has_diodes:
        solver = ActiveSetSolver(form, lin.L, lin.c, 1.0)

        def inner(Y):
            X, U = solver.solve(Y)
            solver.verify(Y, X, U)
            return X

    else:

        def inner(Y):
            return solve_inclusion_batch(A, PF, 1.0, Y)

    def T(Xbar, idx=None):
        Xbar = np.asarray(Xbar, dtype=float).reshape(-1, A.dim)
        return apply_batch(F, inner(Xbar @ P.T))

    return T


def transformed_ppa(
    A: SetValuedOp,
    F: SetValuedOp,
    P,
    x0,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    reference=None,
) -> IterationTrace:
    """Run ``x̄^{k+1} = F((A + P F)^{-1} P x̄^k)`` with Fejér distances in the P-norm."""
    T = transformed_ppa_map(A, F, P)
    return km_iterate(lambda x: T(x[None, :])[0], x0, tol, max_iters, 1.0, np.asarray(P, float), reference)


# ---------------------------------------------------------------------------
# Primal-dual recursion for the amplifier structure
# ---------------------------------------------------------------------------


class PreconditionError(ValueError):
    """A convergence precondition fails; ``name`` says which one and ``value`` by how much."""

    def __init__(self, name: str, value: float, message: str):
        super().__init__(message)
        self.name = name
        self.value = value


@dataclass
class PreconditionReport:
    step_product: float
    step_product_ok: bool
    sym_eigenvalues: tuple
    monotone_ok: bool

    @property
    def ok(self):
        return self.step_product_ok and self.monotone_ok

    def lines(self):
        e = ", ".join(f"{v:.6g}" for v in self.sym_eigenvalues)
        return [
            f"step-size product gamma*tau*|R|^2 = {self.step_product:.6g} (< 1): {'pass' if self.step_product_ok else 'FAIL'}",
            f"eig(A^T R^-1 + R^-T A) = [{e}] (>= 0): {'pass' if self.monotone_ok else 'FAIL'}",
        ]

    def as_dict(self):
        return {
            "step_product": self.step_product,
            "step_product_ok": self.step_product_ok,
            "sym_eigenvalues": list(self.sym_eigenvalues),
            "monotone_ok": self.monotone_ok,
        }


def primal_dual_preconditions(A, R, gamma, tau) -> PreconditionReport:
    """Check ``γτ|R|^2 < 1`` (spectral norm) and ``A^T R^{-1} + R^{-T} A ⪰ 0``."""
    A = np.asarray(A, dtype=float)
    R = np.asarray(R, dtype=float)
    if gamma <= 0 or tau <= 0:
        raise ValueError("gamma and tau must be positive")
    prod = float(gamma * tau * np.linalg.norm(R, 2) ** 2)
    Rinv = np.linalg.inv(R)
    S = A.T @ Rinv + Rinv.T @ A
    eig = np.linalg.eigvalsh(0.5 * (S + S.T))
    tol = 1e-12 * max(1.0, np.abs(eig).max())
    return PreconditionReport(prod, prod < 1.0, tuple(float(v) for v in eig), bool(eig.min() >= -tol))


def _require(report: PreconditionReport):
    if not report.step_product_ok:
        raise PreconditionError(
            "step_size_product",
            report.step_product,
            f"step-size product gamma*tau*|R|^2 = {report.step_product:.6g} must be < 1",
        )
    if not report.monotone_ok:
        lo = min(report.sym_eigenvalues)
        raise PreconditionError(
            "monotonicity_of_A",
            lo,
            f"A^T R^-1 + R^-T A is not positive semidefinite (smallest eigenvalue {lo:.6g})",
        )


def cp_block_preconditioner(R, gamma, tau):
    """``P = [[I/γ, -R^T], [-R, I/τ]]``."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    return np.block([[np.eye(n) / gamma, -R.T], [-R, np.eye(n) / tau]])


def cp_block_problem(A, R, s_v, s_i=None):
    """The operator ``(i, v) -> (A i + v + s_v, A_NPN(v) - i + s_i)`` and ``F = R^{-1} ⊕ R^{-T}``.

    ``A_NPN(v) = {R u : u_j ∈ A_D(v_j)}`` with ideal diodes.
    """
    A = np.asarray(A, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]
    s_v = np.asarray(s_v, dtype=float)
    s_i = np.zeros(n) if s_i is None else np.asarray(s_i, dtype=float)
    Z = np.zeros((n, n))
    G = np.block([[Z, Z], [Z, R]])
    L = np.block([[A, np.eye(n)], [-np.eye(n), Z]])
    c = np.concatenate([s_v, s_i])
    mask = np.concatenate([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)])
    op = PiecewiseAffineOp(AffineDiodeForm(G, L, c, mask), "amplifier")
    Rinv = np.linalg.inv(R)
    F = LinearOp(np.block([[Rinv, Z], [Z, Rinv.T]]), "R^-1⊕R^-T")
    return op, F


def primal_dual_step(A, R, gamma, tau):
    """Row-wise map ``(i, v, s_v, s_i) -> (i^+, v^+)`` of the primal-dual recursion.

    Returns ``step(X, S_v, S_i)`` for state rows ``X = [i, v]``.
    """
    A = np.asarray(A, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]
    Rinv = np.linalg.inv(R)
    M1 = np.linalg.inv(A + Rinv / gamma)
    npn_form = AffineDiodeForm(R, np.zeros((n, n)), np.zeros(n), np.ones(n, dtype=bool))
    solver = ActiveSetSolver(npn_form, Rinv.T / tau, np.zeros(n), 1.0)

    def step(X, S_v, S_i):
        i, v = X[:, :n], X[:, n:]
        ibar = (i / gamma - v @ R - S_v) @ M1.T
        Y = -i @ R.T + v / tau + 2.0 * ibar - S_i
        vbar, U = solver.solve(Y)
        solver.verify(Y, vbar, U)
        return np.concatenate([ibar @ Rinv.T, vbar @ Rinv], axis=1)

    return step


def _problem_data(problem):
    A = np.asarray(problem.A, dtype=float)
    R = np.asarray(problem.R, dtype=float)
    n = A.shape[0]
    s_v = np.array(problem.s_v, dtype=float, ndmin=2)
    s_i = getattr(problem, "s_i", None)
    s_i = np.zeros_like(s_v) if s_i is None else np.array(s_i, dtype=float, ndmin=2)
    if s_v.shape[1] != n or s_i.shape[1] != n:
        raise ValueError("source vectors must match the dimension of A")
    return A, R, s_v, s_i


def primal_dual_iterate(
    problem,
    gamma: float,
    tau: float,
    x0=None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    reference=None,
) -> IterationTrace:
    """Run the primal-dual recursion on one sample.

    ``problem`` provides ``A`` (matrix), ``R`` (transistor coupling matrix),
    ``s_v`` and optionally ``s_i`` (vectors). The state is ``x = (i, v)``; the
    circuit solution candidate is ``(R i, R^T v)``. Fejér distances use the
    block preconditioner ``P``.
    """
    A, R, s_v, s_i = _problem_data(problem)
    if len(s_v) != 1:
        raise ValueError("primal_dual_iterate runs one sample; use primal_dual_iterate_batch")
    _require(primal_dual_preconditions(A, R, gamma, tau))
    step = primal_dual_step(A, R, gamma, tau)
    n = A.shape[0]
    x0 = np.zeros(2 * n) if x0 is None else np.asarray(x0, dtype=float)
    P = cp_block_preconditioner(R, gamma, tau)
    return km_iterate(lambda x: step(x[None, :], s_v, s_i)[0], x0, tol, max_iters, 1.0, P, reference)


def primal_dual_iterate_batch(
    problem,
    gamma: float,
    tau: float,
    X0=None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    reference=None,
    record_history: bool = False,
) -> BatchTrace:
    """Primal-dual recursion for many source samples at once (one row of ``s_v`` each)."""
    A, R, s_v, s_i = _problem_data(problem)
    _require(primal_dual_preconditions(A, R, gamma, tau))
    step = primal_dual_step(A, R, gamma, tau)
    N, n = s_v.shape
    if len(s_i) == 1 and N > 1:
        s_i = np.repeat(s_i, N, axis=0)
    X0 = np.zeros((N, 2 * n)) if X0 is None else np.array(X0, dtype=float, ndmin=2)
    P = cp_block_preconditioner(R, gamma, tau)
    return km_iterate_batch(
        lambda X, idx: step(X, s_v[idx], s_i[idx]),
        X0,
        tol,
        max_iters,
        1.0,
        P,
        reference,
        record_history,
    )
