"""Set-valued operators on R^n and the concrete operators used by the examples.

An operator returns a finite list of representative outputs for each input.
An empty list means the input is outside the domain. Multivalued outputs,
such as the ideal diode's ray at ``v = 0``, are discretized, so any SRG built
from them under-approximates the true set.

Operators that are piecewise affine in ideal diodes also expose an
:class:`AffineDiodeForm`, which the active-set inclusion solver in
:mod:`pairsrg.resolve` consumes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "A_LIN",
    "DEFAULT_ALPHA_F",
    "DEFAULT_ALPHA_R",
    "Domain",
    "AffineDiodeForm",
    "SetValuedOp",
    "LinearOp",
    "IdealDiode",
    "ShockleyDiode",
    "DiodeNetwork",
    "NPNTransistor",
    "QuarticGradient",
    "Preconditioner",
    "FunctionOp",
    "TabulatedOp",
    "PiecewiseAffineOp",
    "ideal_diode",
    "shockley_diode",
    "diode_bank",
    "npn_transistor",
    "quartic_gradient",
    "preconditioner",
    "linear",
    "identity",
    "scale",
    "add",
    "translate",
    "compose",
    "sum_with_linear",
    "graph_inverse",
    "build_operator",
    "OperatorSpecError",
]

A_LIN = np.array([[0.5, 2.0, 0.0], [-0.5, 0.5, 0.0], [0.0, 0.0, 2.0]])

# Not given numerically in the source material; any 0 <= alpha < 1 is admissible.
DEFAULT_ALPHA_F = 0.98
DEFAULT_ALPHA_R = 0.5

DEFAULT_BOX = (-2.0, 2.0)


class OperatorSpecError(ValueError):
    """Raised when a JSON operator description is malformed.

    ``field`` holds a dotted path to the offending entry.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _vec(x, dim):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim} entries, got {x.size}")
    return x


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Admissible inputs: R^n, optionally restricted to ``x_j <= 0`` on some coordinates.

    Coordinates in ``nonpos`` are where an ideal diode lives. The sampler puts
    a fraction ``kink_prob`` of those draws exactly on the kink ``x_j = 0``,
    where the diode is multivalued. ``predicate`` adds a membership test
    that the sampler enforces by rejection.
    """

    dim: int
    nonpos: tuple = ()
    predicate: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.nonpos:
            object.__setattr__(self, "nonpos", (False,) * self.dim)
        if len(self.nonpos) != self.dim:
            raise ValueError("nonpos mask length must equal dim")

    @classmethod
    def full(cls, dim):
        return cls(dim)

    @property
    def restricted(self):
        return any(self.nonpos) or self.predicate is not None

    def contains(self, x) -> bool:
        x = _vec(x, self.dim)
        mask = np.asarray(self.nonpos, dtype=bool)
        if np.any(x[mask] > 0.0):
            return False
        if self.predicate is not None:
            return bool(self.predicate(x))
        return True

    def intersect(self, other: "Domain") -> "Domain":
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        nonpos = tuple(a or b for a, b in zip(self.nonpos, other.nonpos))
        preds = [p for p in (self.predicate, other.predicate) if p is not None]
        if not preds:
            pred = None
        elif len(preds) == 1:
            pred = preds[0]
        else:
            p1, p2 = preds
            pred = lambda x: p1(x) and p2(x)  # noqa: E731
        return Domain(self.dim, nonpos, pred)

    def sample(self, count, seed, box=DEFAULT_BOX, kink_prob=0.5, max_rounds=200):
        """Draw ``count`` points of ``domain ∩ box``, deterministic in ``seed``."""
        lo, hi = map(float, box)
        rng = np.random.default_rng(seed)
        mask = np.asarray(self.nonpos, dtype=bool)
        out = []
        have = 0
        for _ in range(max_rounds):
            u = rng.random((count, self.dim))
            k = rng.random((count, self.dim))
            x = lo + (hi - lo) * u
            if mask.any():
                top = min(hi, 0.0)
                xr = lo + (top - lo) * u
                xr = np.where(k < kink_prob, 0.0, xr)
                x[:, mask] = xr[:, mask]
                keep = np.all(x[:, mask] <= 0.0, axis=1) & np.all(x[:, mask] >= lo, axis=1)
                x = x[keep]
            if self.predicate is not None:
                x = x[[bool(self.predicate(row)) for row in x]]
            out.append(x)
            have += len(x)
            if have >= count:
                break
        pts = np.concatenate(out, axis=0)[:count] if out else np.empty((0, self.dim))
        if len(pts) == 0:
            raise ValueError("empty domain: sampling produced no admissible inputs")
        return pts


# ---------------------------------------------------------------------------
# Structure for the active-set solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineDiodeForm:
    """``A(x) = {G u + L x + c : u_j in A_D(x_j) for mask[j], u_j = 0 otherwise}``.

    ``A_D`` is the ideal diode (exact ray at the kink, not the discretization).
    """

    G: np.ndarray
    L: np.ndarray
    c: np.ndarray
    mask: np.ndarray

    @classmethod
    def linear(cls, L, c=None):
        L = np.asarray(L, dtype=float)
        n = L.shape[0]
        c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
        return cls(np.zeros((n, n)), L, c, np.zeros(n, dtype=bool))

    @property
    def dim(self):
        return self.L.shape[0]

    @property
    def has_diodes(self):
        return bool(self.mask.any())

    def scaled(self, a):
        return AffineDiodeForm(a * self.G, a * self.L, a * self.c, self.mask)

    def shifted(self, t):
        return AffineDiodeForm(self.G, self.L, self.c + t, self.mask)

    def premultiplied(self, M, c=None):
        c0 = M @ self.c if c is None else M @ self.c + c
        return AffineDiodeForm(M @ self.G, M @ self.L, c0, self.mask)


# ---------------------------------------------------------------------------
# Base class
# ---------------------------------------------------------------------------


class SetValuedOp:
    """A set-valued operator on R^dim.

    Subclasses implement :meth:`_eval` on a validated input vector. The public
    :meth:`eval` returns a list of outputs (empty outside the domain), and
    ``op(x)`` returns the unique output of a single-valued operator.
    """

    single_valued = True

    def __init__(self, dim, tag, domain=None):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        self.tag = tag
        self.domain = domain if domain is not None else Domain.full(self.dim)

    def __repr__(self):
        return f"<{type(self).__name__} {self.tag} dim={self.dim}>"

    def eval(self, x):
        x = _vec(x, self.dim)
        if not self.domain.contains(x):
            return []
        return self._eval(x)

    def _eval(self, x):
        raise NotImplementedError

    def __call__(self, x):
        outs = self.eval(x)
        if not outs:
            raise ValueError(f"{self.tag}: input outside domain")
        if len(outs) > 1:
            raise ValueError(f"{self.tag}: operator is multivalued at this input")
        return outs[0]

    def sample_domain(self, count, seed, box=DEFAULT_BOX):
        return self.domain.sample(count, seed, box)

    def affine_form(self) -> Optional[AffineDiodeForm]:
        return None

    def jacobian(self, x):
        """Jacobian of a single-valued smooth operator, or ``None`` if unknown."""
        return None

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __rmul__(self, c):
        return scale(c, self)

    def __neg__(self):
        return scale(-1.0, self)

    def __sub__(self, other):
        return add(self, scale(-1.0, other))


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------


class LinearOp(SetValuedOp):
    def __init__(self, matrix, tag=None):
        m = np.array(matrix, dtype=float, ndmin=2)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"linear operator needs a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("linear operator matrix must have finite entries")
        m.setflags(write=False)
        super().__init__(m.shape[0], tag or "linear")
        self.matrix = m
        self._inv = None

    @property
    def inverse(self):
        if self._inv is None:
            inv = np.linalg.inv(self.matrix)
            inv.setflags(write=False)
            self._inv = inv
        return self._inv

    @property
    def adjoint(self):
        return self.matrix.T

    def _eval(self, x):
        return [self.matrix @ x]

    def affine_form(self):
        return AffineDiodeForm.linear(self.matrix)

    def jacobian(self, x):
        return np.array(self.matrix)


def linear(M, tag=None) -> LinearOp:
    return LinearOp(M, tag)


def identity(dim=1) -> LinearOp:
    return LinearOp(np.eye(dim), "id")


# ---------------------------------------------------------------------------
# Diodes and transistors
# ---------------------------------------------------------------------------


class IdealDiode(SetValuedOp):
    """``v < 0 -> {0}``; ``v = 0 -> [0, inf)`` sampled as ``linspace(0, u_max, m)``; ``v > 0 -> {}``."""

    single_valued = False

    def __init__(self, u_max=2.0, m=5):
        if u_max <= 0 or m < 2:
            raise ValueError("ideal diode discretization needs u_max > 0 and m >= 2")
        super().__init__(1, "ideal_diode", Domain(1, (True,)))
        self.u_max = float(u_max)
        self.m = int(m)

    def outputs(self, v: float):
        if v < 0:
            return [0.0]
        if v == 0:
            return list(np.linspace(0.0, self.u_max, self.m))
        return []

    def _eval(self, x):
        return [np.array([u]) for u in self.outputs(x[0])]

    def affine_form(self):
        return AffineDiodeForm(np.eye(1), np.zeros((1, 1)), np.zeros(1), np.ones(1, dtype=bool))


class ShockleyDiode(SetValuedOp):
    """Smooth diode ``v -> i_s (exp(v / v_t) - 1)``."""

    EXP_LIMIT = 700.0

    def __init__(self, i_s=1e-12, v_t=0.025):
        if i_s <= 0 or v_t <= 0:
            raise ValueError("shockley diode needs i_s > 0 and v_t > 0")
        super().__init__(1, "shockley_diode")
        self.i_s = float(i_s)
        self.v_t = float(v_t)

    def current(self, v: float) -> float:
        a = v / self.v_t
        if a > self.EXP_LIMIT:
            raise OverflowError(f"shockley diode: v/v_t = {a:g} exceeds {self.EXP_LIMIT:g}")
        return self.i_s * np.expm1(a)

    def outputs(self, v: float):
        return [self.current(v)]

    def slope(self, v: float) -> float:
        a = v / self.v_t
        if a > self.EXP_LIMIT:
            raise OverflowError(f"shockley diode: v/v_t = {a:g} exceeds {self.EXP_LIMIT:g}")
        return self.i_s / self.v_t * np.exp(a)

    def _eval(self, x):
        return [np.array([self.current(x[0])])]

    def jacobian(self, x):
        x = _vec(x, 1)
        return np.array([[self.slope(x[0])]])


class DiodeNetwork(SetValuedOp):
    """``x -> {M u : u_j in D(x_j)}`` for a bank of identical scalar diodes ``D``."""

    def __init__(self, M, diode=None, tag="diode_network"):
        M = np.array(M, dtype=float, ndmin=2)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("diode network needs a square coupling matrix")
        diode = IdealDiode() if diode is None else diode
        if diode.dim != 1:
            raise ValueError("diode network needs a scalar (dim 1) diode")
        n = M.shape[0]
        super().__init__(n, tag, Domain(n, tuple(diode.domain.nonpos) * n))
        self.M = M
        self.diode = diode
        self.single_valued = diode.single_valued

    def currents(self, x):
        """All diode current vectors ``u`` compatible with voltages ``x``."""
        per = [self.diode.outputs(v) for v in x]
        return [np.array(u, dtype=float) for u in itertools.product(*per)]

    def _eval(self, x):
        return [self.M @ u for u in self.currents(x)]

    def affine_form(self):
        if not isinstance(self.diode, IdealDiode):
            return None
        n = self.dim
        return AffineDiodeForm(np.array(self.M), np.zeros((n, n)), np.zeros(n), np.ones(n, dtype=bool))

    def jacobian(self, x):
        if not isinstance(self.diode, ShockleyDiode):
            return None
        x = _vec(x, self.dim)
        return self.M @ np.diag([self.diode.slope(v) for v in x])


class NPNTransistor(DiodeNetwork):
    """Ebers-Moll NPN transistor: ``R`` applied to two diode currents."""

    def __init__(self, alpha_f=DEFAULT_ALPHA_F, alpha_r=DEFAULT_ALPHA_R, diode=None):
        for name, a in (("alpha_f", alpha_f), ("alpha_r", alpha_r)):
            if not 0.0 <= a < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {a}")
        self.alpha_f = float(alpha_f)
        self.alpha_r = float(alpha_r)
        R = np.array([[1.0, -self.alpha_r], [-self.alpha_f, 1.0]])
        super().__init__(R, diode, tag="npn")

    @property
    def R(self) -> LinearOp:
        return LinearOp(self.M, "R")

    @property
    def B(self) -> LinearOp:
        """The monotone partner ``det(R) R^{-T} = [[1, alpha_f], [alpha_r, 1]]``."""
        return LinearOp([[1.0, self.alpha_f], [self.alpha_r, 1.0]], "det(R)R^-T")


def ideal_diode(u_max=2.0, m=5) -> IdealDiode:
    return IdealDiode(u_max, m)


def shockley_diode(i_s=1e-12, v_t=0.025) -> ShockleyDiode:
    return ShockleyDiode(i_s, v_t)


def diode_bank(n, diode=None) -> DiodeNetwork:
    return DiodeNetwork(np.eye(n), diode, tag=f"diode_bank{n}")


def npn_transistor(alpha_f=DEFAULT_ALPHA_F, alpha_r=DEFAULT_ALPHA_R, diode=None) -> NPNTransistor:
    return NPNTransistor(alpha_f, alpha_r, diode)


# ---------------------------------------------------------------------------
# Smooth single-valued maps
# ---------------------------------------------------------------------------


class QuarticGradient(SetValuedOp):
    """Gradient of ``x -> sum(x_i^4) / 4``, i.e. the componentwise cube."""

    def __init__(self, dim=2):
        super().__init__(dim, "quartic_gradient")

    def _eval(self, x):
        return [x**3]

    def jacobian(self, x):
        x = _vec(x, self.dim)
        return np.diag(3.0 * x**2)


_H_PRIME = {
    "identity": (lambda y: y, lambda y: np.ones_like(y)),
    "clip": (lambda y: np.clip(y, -1.0, 1.0), lambda y: (np.abs(y) < 1.0).astype(float)),
    "arcsinh": (np.arcsinh, lambda y: 1.0 / np.sqrt(1.0 + y * y)),
}


class Preconditioner(SetValuedOp):
    """Separable preconditioner ``y -> (h'(y_1), ..., h'(y_n))``."""

    def __init__(self, kind="identity", dim=2):
        if kind not in _H_PRIME:
            raise ValueError(f"unknown preconditioner kind {kind!r}; choose from {sorted(_H_PRIME)}")
        super().__init__(dim, f"precond[{kind}]")
        self.kind = kind
        self._h, self._dh = _H_PRIME[kind]

    def _eval(self, x):
        return [self._h(x)]

    def jacobian(self, x):
        return np.diag(self._dh(_vec(x, self.dim)))


def quartic_gradient(dim=2) -> QuarticGradient:
    return QuarticGradient(dim)


def preconditioner(kind="identity", dim=2) -> Preconditioner:
    return Preconditioner(kind, dim)


class FunctionOp(SetValuedOp):
    """Single-valued operator from a plain function (optionally with a Jacobian)."""

    def __init__(self, func, dim, tag="function", jac=None, domain=None):
        super().__init__(dim, tag, domain)
        self._func = func
        self._jac = jac

    def _eval(self, x):
        return [np.asarray(self._func(x), dtype=float).reshape(self.dim)]

    def jacobian(self, x):
        if self._jac is None:
            return None
        return np.asarray(self._jac(_vec(x, self.dim)), dtype=float)


class TabulatedOp(SetValuedOp):
    """Operator known only on a finite set of inputs (a finite graph)."""

    def __init__(self, inputs, outputs, tag="tabulated"):
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2 or len(inputs) != len(outputs):
            raise ValueError("tabulated operator needs an (N, n) input array and N output lists")
        dim = inputs.shape[1]
        self._table = {}
        for x, outs in zip(inputs, outputs):
            key = x.tobytes()
            self._table.setdefault(key, [])
            for u in outs:
                self._table[key].append(_vec(u, dim))
        table = self._table
        super().__init__(dim, tag, Domain(dim, predicate=lambda x: x.tobytes() in table))
        self.inputs = inputs
        self.single_valued = all(len(v) <= 1 for v in table.values())

    def _eval(self, x):
        return [u.copy() for u in self._table[x.tobytes()]]


class PiecewiseAffineOp(SetValuedOp):
    """Operator given directly by an :class:`AffineDiodeForm`.

    Diode coordinates use the discretized ideal diode of ``diode`` for
    evaluation; the active-set solver sees the exact form.
    """

    def __init__(self, form: AffineDiodeForm, tag="piecewise_affine", diode=None):
        n = form.dim
        mask = np.asarray(form.mask, dtype=bool)
        super().__init__(n, tag, Domain(n, tuple(bool(m) for m in mask)))
        self.form = AffineDiodeForm(
            np.array(form.G, dtype=float), np.array(form.L, dtype=float), np.array(form.c, dtype=float), mask
        )
        self.diode = IdealDiode() if diode is None else diode
        self.single_valued = not mask.any()

    def _eval(self, x):
        f = self.form
        base = f.L @ x + f.c
        per = [self.diode.outputs(v) if m else [0.0] for v, m in zip(x, f.mask)]
        return [base + f.G @ np.array(u, dtype=float) for u in itertools.product(*per)]

    def affine_form(self):
        return self.form

    def jacobian(self, x):
        return None if self.form.has_diodes else np.array(self.form.L)


def graph_inverse(A: SetValuedOp, inputs) -> TabulatedOp:
    """Tabulated ``A^{-1}`` built from the evaluations of ``A`` at ``inputs``.

    Every output ``u`` becomes an input of the inverse, mapped to all sampled
    ``x`` with ``u in A(x)`` (bitwise equal outputs are merged).
    """
    groups = {}
    order = []
    for x in np.asarray(inputs, dtype=float):
        for u in A.eval(x):
            key = u.tobytes()
            if key not in groups:
                groups[key] = (u, [])
                order.append(key)
            xs = groups[key][1]
            if not any(np.array_equal(x, y) for y in xs):
                xs.append(np.array(x))
    us = np.array([groups[k][0] for k in order])
    return TabulatedOp(us, [groups[k][1] for k in order], tag=f"inv({A.tag})")


# ---------------------------------------------------------------------------
# Combinators
# ---------------------------------------------------------------------------


class _Scaled(SetValuedOp):
    def __init__(self, c, A):
        super().__init__(A.dim, f"{c:g}*{A.tag}", A.domain)
        self.c = float(c)
        self.A = A
        self.single_valued = A.single_valued

    def _eval(self, x):
        return [self.c * u for u in self.A._eval(x)]

    def affine_form(self):
        f = self.A.affine_form()
        return None if f is None else f.scaled(self.c)

    def jacobian(self, x):
        J = self.A.jacobian(x)
        return None if J is None else self.c * J


class _Sum(SetValuedOp):
    def __init__(self, A, B):
        if A.dim != B.dim:
            raise ValueError(f"dimension mismatch: {A.tag} has dim {A.dim}, {B.tag} has dim {B.dim}")
        super().__init__(A.dim, f"({A.tag}+{B.tag})", A.domain.intersect(B.domain))
        self.A, self.B = A, B
        self.single_valued = A.single_valued and B.single_valued

    def _eval(self, x):
        ua = self.A._eval(x)
        ub = self.B._eval(x)
        return [a + b for a in ua for b in ub]

    def affine_form(self):
        fa, fb = self.A.affine_form(), self.B.affine_form()
        if fa is None or fb is None:
            return None
        if np.any(fa.mask & fb.mask):
            # two independent diode currents on one coordinate
            return None
        return AffineDiodeForm(fa.G + fb.G, fa.L + fb.L, fa.c + fb.c, fa.mask | fb.mask)

    def jacobian(self, x):
        ja, jb = self.A.jacobian(x), self.B.jacobian(x)
        if ja is None or jb is None:
            return None
        return ja + jb


class _Translated(SetValuedOp):
    def __init__(self, A, t):
        t = _vec(t, A.dim)
        super().__init__(A.dim, f"({A.tag}+const)", A.domain)
        self.A, self.t = A, t
        self.single_valued = A.single_valued

    def _eval(self, x):
        return [u + self.t for u in self.A._eval(x)]

    def affine_form(self):
        f = self.A.affine_form()
        return None if f is None else f.shifted(self.t)

    def jacobian(self, x):
        return self.A.jacobian(x)


class _Composed(SetValuedOp):
    """``outer o inner``."""

    def __init__(self, outer, inner):
        if outer.dim != inner.dim:
            raise ValueError(f"dimension mismatch: {outer.tag} has dim {outer.dim}, {inner.tag} has dim {inner.dim}")
        if not inner.single_valued and not outer.single_valued:
            raise ValueError(
                f"compose: inner operator {inner.tag} is multivalued and outer {outer.tag} is not single-valued"
            )
        if outer.domain.restricted:
            od = outer.domain
            pred = lambda x: any(od.contains(v) for v in inner._eval(x))  # noqa: E731
            domain = inner.domain.intersect(Domain(inner.dim, predicate=pred))
        else:
            domain = inner.domain
        super().__init__(inner.dim, f"{outer.tag}∘{inner.tag}", domain)
        self.outer, self.inner = outer, inner
        self.single_valued = outer.single_valued and inner.single_valued

    def _eval(self, x):
        out = []
        for v in self.inner._eval(x):
            out.extend(self.outer.eval(v))
        return out

    def affine_form(self):
        fo, fi = self.outer.affine_form(), self.inner.affine_form()
        if fo is None or fi is None:
            return None
        if not fo.has_diodes:
            return fi.premultiplied(fo.L, fo.c)
        if not fi.has_diodes and np.array_equal(fi.L, np.eye(fi.dim)) and not np.any(fi.c):
            return fo
        return None

    def jacobian(self, x):
        x = _vec(x, self.dim)
        ji = self.inner.jacobian(x)
        if ji is None:
            return None
        jo = self.outer.jacobian(self.inner(x))
        return None if jo is None else jo @ ji


def scale(c, A: SetValuedOp) -> SetValuedOp:
    return _Scaled(c, A)


def add(A: SetValuedOp, B: SetValuedOp) -> SetValuedOp:
    return _Sum(A, B)


def translate(A: SetValuedOp, c) -> SetValuedOp:
    return _Translated(A, c)


def compose(outer: SetValuedOp, inner: SetValuedOp) -> SetValuedOp:
    return _Composed(outer, inner)


def sum_with_linear(A: SetValuedOp, M) -> SetValuedOp:
    """``A + M`` for a matrix ``M``."""
    return _Sum(A, M if isinstance(M, LinearOp) else LinearOp(M))


# ---------------------------------------------------------------------------
# JSON construction
# ---------------------------------------------------------------------------


def _matrix(params, key, path):
    if key not in params:
        raise OperatorSpecError(f"{path}.{key}", "missing")
    try:
        m = np.array(params[key], dtype=float, ndmin=2)
    except (TypeError, ValueError) as exc:
        raise OperatorSpecError(f"{path}.{key}", f"not a numeric matrix ({exc})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise OperatorSpecError(f"{path}.{key}", f"expected a square matrix, got shape {m.shape}")
    return m


def _number(params, key, path, default=None):
    if key not in params:
        if default is None:
            raise OperatorSpecError(f"{path}.{key}", "missing")
        return default
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise OperatorSpecError(f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def build_operator(spec, path="op") -> SetValuedOp:
    """Build an operator from ``{"kind": ..., "params": {...}}``.

    Kinds: ``linear`` (matrix), ``inv_transpose`` (matrix, c: gives c*M^{-T}),
    ``identity`` (dim), ``a_lin``, ``ideal_diode`` (u_max, m),
    ``shockley_diode`` (i_s, v_t), ``npn`` (alpha_f, alpha_r, diode),
    ``npn_partner`` (alpha_f, alpha_r), ``quartic_gradient`` (dim),
    ``preconditioner`` (h, dim), ``scale`` (c, op), ``add`` (ops),
    ``translate`` (op, c), ``compose`` (outer, inner).
    """
    if not isinstance(spec, dict):
        raise OperatorSpecError(path, "operator spec must be a JSON object")
    kind = spec.get("kind")
    if not isinstance(kind, str):
        raise OperatorSpecError(f"{path}.kind", "missing or not a string")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise OperatorSpecError(f"{path}.params", "must be a JSON object")
    p = f"{path}.params"
    try:
        if kind == "linear":
            return LinearOp(_matrix(params, "matrix", p))
        if kind == "inv_transpose":
            m = _matrix(params, "matrix", p)
            c = _number(params, "c", p, 1.0)
            return LinearOp(c * np.linalg.inv(m).T, f"{c:g}*M^-T")
        if kind == "identity":
            return identity(int(_number(params, "dim", p, 1.0)))
        if kind == "a_lin":
            return LinearOp(A_LIN, "A_lin")
        if kind == "ideal_diode":
            return IdealDiode(_number(params, "u_max", p, 2.0), int(_number(params, "m", p, 5.0)))
        if kind == "shockley_diode":
            return ShockleyDiode(_number(params, "i_s", p, 1e-12), _number(params, "v_t", p, 0.025))
        if kind in ("npn", "npn_partner"):
            af = _number(params, "alpha_f", p, DEFAULT_ALPHA_F)
            ar = _number(params, "alpha_r", p, DEFAULT_ALPHA_R)
            diode = build_operator(params["diode"], f"{p}.diode") if "diode" in params else None
            t = NPNTransistor(af, ar, diode)
            return t if kind == "npn" else t.B
        if kind == "quartic_gradient":
            return QuarticGradient(int(_number(params, "dim", p, 2.0)))
        if kind == "preconditioner":
            return Preconditioner(params.get("h", "identity"), int(_number(params, "dim", p, 2.0)))
        if kind == "scale":
            return scale(_number(params, "c", p), build_operator(params.get("op"), f"{p}.op"))
        if kind == "add":
            ops = params.get("ops")
            if not isinstance(ops, list) or len(ops) < 2:
                raise OperatorSpecError(f"{p}.ops", "expected a list of at least two operators")
            built = [build_operator(o, f"{p}.ops[{k}]") for k, o in enumerate(ops)]
            acc = built[0]
            for o in built[1:]:
                acc = add(acc, o)
            return acc
        if kind == "translate":
            op = build_operator(params.get("op"), f"{p}.op")
            if "c" not in params:
                raise OperatorSpecError(f"{p}.c", "missing")
            return translate(op, params["c"])
        if kind == "compose":
            return compose(
                build_operator(params.get("outer"), f"{p}.outer"),
                build_operator(params.get("inner"), f"{p}.inner"),
            )
    except OperatorSpecError:
        raise
    except (ValueError, TypeError, np.linalg.LinAlgError) as exc:
        raise OperatorSpecError(path, str(exc)) from None
    raise OperatorSpecError(f"{path}.kind", f"unknown operator kind {kind!r}")
