"""Inclusion solvers and the transformed and warped resolvents.

Both resolvents need ``x`` with ``y ∈ γA(x) + F(x)``. Piecewise-affine
operators built from ideal diodes are handled exactly by enumerating diode
states. Smooth single-valued operators go through a damped Newton method.
"""

from __future__ import annotations

import itertools
import warnings
from typing import Optional

import numpy as np

from .ops import (
    AffineDiodeForm,
    IdealDiode,
    LinearOp,
    SetValuedOp,
    compose,
)
from .regions import Disk

__all__ = [
    "InfeasibleInclusionError",
    "ConvergenceError",
    "AmbiguousActiveSetWarning",
    "solve_inclusion",
    "solve_inclusion_batch",
    "ActiveSetSolver",
    "apply_batch",
    "Resolvent",
    "transformed_resolvent",
    "warped_resolvent",
    "congruence_transform",
]

RESIDUAL_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAX_ITERS = 200
STALL_STEPS = 5


class InfeasibleInclusionError(ValueError):
    """No diode state yields a consistent solution."""


class ConvergenceError(RuntimeError):
    """The Newton path failed to reach the residual tolerance."""


class AmbiguousActiveSetWarning(UserWarning):
    """Several diode states are consistent and give different solutions."""


def _linear_part(F: SetValuedOp):
    """``(L, c)`` if ``F`` is affine without diodes, else ``None``."""
    f = F.affine_form()
    if f is None or f.has_diodes:
        return None
    return f.L, f.c


def apply_batch(op: SetValuedOp, X) -> np.ndarray:
    """Evaluate a single-valued operator on the rows of ``X``."""
    X = np.asarray(X, dtype=float).reshape(-1, op.dim)
    lin = _linear_part(op)
    if lin is not None:
        L, c = lin
        return X @ L.T + c
    return np.array([op(x) for x in X]).reshape(-1, op.dim)


# ---------------------------------------------------------------------------
# Active-set enumeration
# ---------------------------------------------------------------------------


def _states(mask):
    """Diode index sets ordered by size, then lexicographically."""
    idx = np.flatnonzero(mask)
    for k in range(len(idx) + 1):
        for S in itertools.combinations(idx, k):
            yield S


class ActiveSetSolver:
    """Exact solver for ``y = γ(G u + L x + c) + LF x + cF`` with ideal-diode complementarity.

    Each diode state fixes ``x_j = 0`` (conducting, ``u_j >= 0``) or
    ``u_j = 0`` (blocking, ``x_j <= 0``) and leaves a square linear system.
    The systems are inverted once here; :meth:`solve` then only does
    matrix products, so it can sit inside long fixed-point loops.
    """

    def __init__(self, form: AffineDiodeForm, LF, cF, gamma):
        self.form = form
        self.LF = np.asarray(LF, dtype=float)
        self.cF = np.asarray(cF, dtype=float)
        self.gamma = float(gamma)
        n = form.dim
        K0 = self.gamma * form.L + self.LF
        self.shift = self.gamma * form.c + self.cF
        self.mask = np.asarray(form.mask, dtype=bool)
        self.states = []
        for S in _states(self.mask):
            S = list(S)
            free = [j for j in range(n) if j not in S]
            K = np.concatenate([K0[:, free], self.gamma * form.G[:, S]], axis=1)
            if np.linalg.cond(K) > 1e12:
                continue
            Kinv = np.linalg.inv(K)
            # rows of Kinv mapped back to (x, u) coordinates
            Px = np.zeros((n, n))
            Pu = np.zeros((n, n))
            Px[free] = Kinv[: len(free)]
            Pu[S] = Kinv[len(free):]
            off = [j for j in free if self.mask[j]]
            self.states.append((len(S), S, off, Px, Pu))
        if not self.states:
            raise InfeasibleInclusionError("every diode state gives a singular linear system")

    def solve(self, Y, tol=RESIDUAL_TOL, check_ties=False):
        Y = np.asarray(Y, dtype=float)
        rhs = Y - self.shift
        N, n = Y.shape
        X = np.full((N, n), np.nan)
        U = np.zeros((N, n))
        found = np.zeros(N, dtype=bool)
        scale = np.maximum(1.0, np.sqrt(np.einsum("ij,ij->i", Y, Y)))
        thr = tol * scale
        for _, S, off, Px, Pu in self.states:
            if found.all() and not check_ties:
                break
            x = rhs @ Px.T
            u = rhs @ Pu.T
            ok = np.ones(N, dtype=bool)
            if off:
                ok &= (x[:, off] <= thr[:, None]).all(axis=1)
            if S:
                ok &= (u[:, S] >= -thr[:, None]).all(axis=1)
            new = ok & ~found
            X[new] = x[new]
            U[new] = u[new]
            if check_ties:
                tie = ok & found
                if tie.any() and (np.linalg.norm(x[tie] - X[tie], axis=1) > 1e-9 * scale[tie]).any():
                    warnings.warn(
                        "some inputs admit several consistent diode states with different solutions; "
                        "keeping the smallest active set",
                        AmbiguousActiveSetWarning,
                        stacklevel=2,
                    )
            found |= ok
        if not found.all():
            k = int(np.flatnonzero(~found)[0])
            raise InfeasibleInclusionError(f"no consistent diode state for y = {Y[k].tolist()}")
        return X, U

    def verify(self, Y, X, U, tol=RESIDUAL_TOL):
        _verify_affine(self.form, self.LF, self.cF, self.gamma, Y, X, U, tol)


def _verify_affine(form, LF, cF, gamma, Y, X, U, tol):
    r = Y - (gamma * (U @ form.G.T + X @ form.L.T + form.c) + X @ LF.T + cF)
    scale = np.maximum(1.0, np.linalg.norm(Y, axis=1))
    bad = np.linalg.norm(r, axis=1) > tol * scale
    m = np.asarray(form.mask, dtype=bool)
    if m.any():
        xs, us = X[:, m], U[:, m]
        bad |= np.any(xs > tol * scale[:, None], axis=1)
        bad |= np.any(us < -tol * scale[:, None], axis=1)
        bad |= np.any(np.abs(xs * us) > tol * scale[:, None], axis=1)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise InfeasibleInclusionError(
            f"active-set solution fails verification at y = {Y[k].tolist()} (residual {np.linalg.norm(r[k]):.3g})"
        )


# ---------------------------------------------------------------------------
# Newton path
# ---------------------------------------------------------------------------


def _fd_jacobian(func, x, fx):
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        h = 1e-7 * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (func(x + e) - fx) / h
    return J


def _safe(func, x):
    try:
        v = func(x)
    except (OverflowError, FloatingPointError):
        return None
    return v if np.all(np.isfinite(v)) else None


def _newton(A, F, gamma, y, tol, max_iters, x0=None):
    n = A.dim

    def g(x):
        return gamma * A(x) + F(x) - y

    def jac(x, gx):
        ja, jf = A.jacobian(x), F.jacobian(x)
        if ja is None or jf is None:
            return _fd_jacobian(g, x, gx)
        return gamma * ja + jf

    if n == 1:
        return _newton_scalar(g, jac, y, tol, max_iters, x0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    gx = _safe(g, x)
    if gx is None:
        raise ConvergenceError("residual is not finite at the starting point")
    for _ in range(max_iters):
        if np.linalg.norm(gx) <= tol:
            return x
        try:
            d = np.linalg.solve(jac(x, gx), -gx)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in Newton path") from None
        t = 1.0
        while t > 1e-12:
            xn = x + t * d
            gn = _safe(g, xn)
            if gn is not None and np.linalg.norm(gn) < np.linalg.norm(gx):
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"Newton line search failed, residual {np.linalg.norm(gx):.3g}")
        x, gx = xn, gn
    if np.linalg.norm(gx) <= tol:
        return x
    raise ConvergenceError(f"Newton did not converge in {max_iters} steps, residual {np.linalg.norm(gx):.3g}")


def _newton_scalar(g, jac, y, tol, max_iters, x0):
    """Safeguarded Newton for an increasing scalar residual ``g``."""

    def gs(x):
        v = _safe(g, np.array([x]))
        return None if v is None else float(v[0])

    # bracket the root by expansion
    x = 0.0 if x0 is None else float(np.ravel(x0)[0])
    gx = gs(x)
    if gx is None:
        x, gx = 0.0, gs(0.0)
    step = max(1.0, abs(float(y[0])))
    lo = hi = None
    if gx <= 0:
        lo = x
        h = x + step
        while True:
            gh = gs(h)
            if gh is None or gh >= 0:
                # an overflowing point lies to the right of the root
                hi = h
                break
            lo, h, step = h, h + 2 * step, 2 * step
            if step > 1e300:
                raise ConvergenceError("could not bracket the root")
    else:
        hi = x
        l = x - step
        while True:
            gl = gs(l)
            if gl is not None and gl <= 0:
                lo = l
                break
            hi, l, step = l, l - 2 * step, 2 * step
            if step > 1e300:
                raise ConvergenceError("could not bracket the root")
    x = lo if x0 is None else min(max(x, lo), hi)
    gx = gs(x)
    best = abs(gx)
    stall = 0
    for _ in range(max_iters):
        if abs(gx) <= tol:
            return np.array([x])
        if gx < 0:
            lo = x
        else:
            hi = x
        J = float(jac(np.array([x]), np.array([gx]))[0, 0])
        xn = x - gx / J if J > 0 else None
        if xn is None or not lo < xn < hi or stall >= STALL_STEPS:
            xn = 0.5 * (lo + hi)
            stall = 0
        gn = gs(xn)
        if gn is None:
            hi = xn
            xn = 0.5 * (lo + hi)
            gn = gs(xn)
        if abs(gn) < best * 0.5:
            best = abs(gn)
            stall = 0
        else:
            stall += 1
        x, gx = xn, gn
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            break
    if abs(gx) <= tol:
        return np.array([x])
    raise ConvergenceError(f"safeguarded Newton stalled with residual {abs(gx):.3g}")


# ---------------------------------------------------------------------------
# Public solver
# ---------------------------------------------------------------------------


def _method(A, F, method):
    if method != "auto":
        return method
    if isinstance(A, IdealDiode) and _linear_part(F) is not None and F.dim == 1:
        return "closed_form"
    fa = A.affine_form()
    if fa is not None and _linear_part(F) is not None:
        return "active_set"
    return "newton"


def solve_inclusion_batch(
    A: SetValuedOp,
    F: SetValuedOp,
    gamma: float,
    Y,
    *,
    method: str = "auto",
    tol: float = RESIDUAL_TOL,
    x0=None,
    return_currents: bool = False,
):
    """Solve ``y ∈ γA(x) + F(x)`` for every row ``y`` of ``Y``.

    Parameters
    ----------
    method : {"auto", "closed_form", "active_set", "newton"}
        ``closed_form`` handles a scalar ideal diode with linear ``F``;
        ``active_set`` needs an affine diode form for ``A`` and an affine ``F``;
        ``newton`` needs single-valued smooth ``A`` and ``F``.
    tol : float
        Residual tolerance, relative to ``max(1, |y|)``.
    x0 : array, optional
        Starting points for the Newton path.
    return_currents : bool
        Also return the diode currents ``u`` (active-set paths only).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if A.dim != F.dim:
        raise ValueError(f"dimension mismatch: {A.tag} has dim {A.dim}, {F.tag} has dim {F.dim}")
    Y = np.asarray(Y, dtype=float).reshape(-1, A.dim)
    method = _method(A, F, method)
    if method == "closed_form":
        if not isinstance(A, IdealDiode) or _linear_part(F) is None:
            raise ValueError("closed_form needs an ideal diode and a linear F")
        LF, cF = _linear_part(F)
        a = float(LF[0, 0])
        if a <= 0:
            raise InfeasibleInclusionError("closed form needs F = a*id + b with a > 0")
        z = Y - cF
        X = np.minimum(z, 0.0) / a
        U = np.maximum(z, 0.0) / gamma
        return (X, U) if return_currents else X
    if method == "active_set":
        form = A.affine_form()
        lin = _linear_part(F)
        if form is None or lin is None:
            raise ValueError("active_set needs a piecewise-affine A and an affine F")
        solver = ActiveSetSolver(form, lin[0], lin[1], gamma)
        X, U = solver.solve(Y, tol, check_ties=True)
        solver.verify(Y, X, U, tol)
        return (X, U) if return_currents else X
    if method == "newton":
        if not (A.single_valued and F.single_valued):
            raise ValueError("newton path needs single-valued A and F")
        starts = [None] * len(Y) if x0 is None else np.asarray(x0, dtype=float).reshape(-1, A.dim)
        X = np.array([_newton(A, F, gamma, y, NEWTON_TOL, NEWTON_MAX_ITERS, s) for y, s in zip(Y, starts)])
        X = X.reshape(-1, A.dim)
        r = gamma * apply_batch(A, X) + apply_batch(F, X) - Y
        bad = np.linalg.norm(r, axis=1) > tol * np.maximum(1.0, np.linalg.norm(Y, axis=1))
        if bad.any():
            raise ConvergenceError(f"Newton solution residual {np.linalg.norm(r, axis=1).max():.3g} exceeds tolerance")
        return (X, None) if return_currents else X
    raise ValueError(f"unknown solver method {method!r}")


def solve_inclusion(A, F, gamma, y, *, method="auto", tol=RESIDUAL_TOL, x0=None):
    """Single right-hand side version of :func:`solve_inclusion_batch`."""
    y = np.asarray(y, dtype=float).reshape(-1)
    X = solve_inclusion_batch(A, F, gamma, y[None, :], method=method, tol=tol, x0=None if x0 is None else [x0])
    return X[0]


# ---------------------------------------------------------------------------
# Resolvents
# ---------------------------------------------------------------------------


class Resolvent(SetValuedOp):
    """Transformed ``F∘(γA + F)^{-1}`` or warped ``(γA + F)^{-1}∘F`` resolvent.

    ``apply`` works on a batch of row vectors; calling the object evaluates
    one point.
    """

    def __init__(self, A, F, gamma, kind, method="auto"):
        if kind not in ("transformed", "warped"):
            raise ValueError("kind must be 'transformed' or 'warped'")
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if not F.single_valued:
            raise ValueError(f"F must be single-valued, got {F.tag}")
        if A.dim != F.dim:
            raise ValueError(f"dimension mismatch: {A.tag} has dim {A.dim}, {F.tag} has dim {F.dim}")
        sym = "T" if kind == "transformed" else "J"
        super().__init__(A.dim, f"{sym}[{gamma:g}*{A.tag}; {F.tag}]")
        self.A, self.F, self.gamma, self.kind, self.method = A, F, float(gamma), kind, method
        self._solver = None

    def _inner(self, Y):
        if _method(self.A, self.F, self.method) == "active_set":
            if self._solver is None:
                lin = _linear_part(self.F)
                self._solver = ActiveSetSolver(self.A.affine_form(), lin[0], lin[1], self.gamma)
            X, U = self._solver.solve(Y)
            self._solver.verify(Y, X, U)
            return X
        return solve_inclusion_batch(self.A, self.F, self.gamma, Y, method=self.method)

    def apply(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.kind == "transformed":
            return apply_batch(self.F, self._inner(X))
        return self._inner(apply_batch(self.F, X))

    def _eval(self, x):
        return [self.apply(x[None, :])[0]]

    def containment_disk(self, alpha: float = 0.0) -> Disk:
        """``D(1/(2+2γα), 1/(2+2γα))`` for ``(A, F) ∈ M_α``.

        It bounds ``G(T, id)`` for the transformed resolvent and
        ``G(F∘J, F)`` for the warped one.
        """
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        c = 1.0 / (2.0 + 2.0 * self.gamma * alpha)
        return Disk(c, c)

    def lipschitz_disk(self, alpha: float = 0.0, l: Optional[float] = None, L: Optional[float] = None) -> Disk:
        """``D(0, lL/(1+γα))`` bounding ``G(J, id)`` for the warped resolvent.

        ``l`` bounds the Lipschitz constant of ``F^{-1}`` and ``L`` that of
        ``F``. Both default to spectral norms when ``F`` is linear.
        """
        if self.kind != "warped":
            raise ValueError("the Lipschitz disk applies to the warped resolvent")
        if l is None or L is None:
            lin = _linear_part(self.F)
            if lin is None:
                raise ValueError("Lipschitz constants must be supplied for a nonlinear F")
            M = lin[0]
            if abs(np.linalg.det(M)) <= 1e-12:
                raise ValueError("F is not invertible")
            l = np.linalg.norm(np.linalg.inv(M), 2) if l is None else l
            L = np.linalg.norm(M, 2) if L is None else L
        return Disk(0.0, l * L / (1.0 + self.gamma * alpha))


def transformed_resolvent(A, F, gamma, method="auto") -> Resolvent:
    """``x -> F((γA + F)^{-1}(x))``."""
    return Resolvent(A, F, gamma, "transformed", method)


def warped_resolvent(A, F, gamma, method="auto") -> Resolvent:
    """``x -> (γA + F)^{-1}(F(x))``."""
    return Resolvent(A, F, gamma, "warped", method)


def congruence_transform(A: SetValuedOp, F: SetValuedOp, M):
    """The pair ``(M^{-T}∘A∘M^{-1}, M∘F∘M^{-1})``, which stays in ``M_0`` with ``(A, F)``."""
    M = np.array(M.matrix if isinstance(M, LinearOp) else M, dtype=float, ndmin=2)
    if M.shape != (A.dim, A.dim):
        raise ValueError(f"dimension mismatch: M has shape {M.shape}, operators have dim {A.dim}")
    if abs(np.linalg.det(M)) <= 1e-12:
        raise ValueError("congruence transform needs an invertible M")
    Minv = LinearOp(np.linalg.inv(M), "M^-1")
    MinvT = LinearOp(np.linalg.inv(M).T, "M^-T")
    Mop = LinearOp(M, "M")
    return compose(MinvT, compose(A, Minv)), compose(Mop, compose(F, Minv))
