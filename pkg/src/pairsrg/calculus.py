"""Matched-seed property suite for the SRG calculus rules.

Each rule samples both sides with the same inputs and compares them record by
record (via provenance) or, when the two sides are parametrized by different
inputs, as point sets in both directions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .ops import (
    LinearOp,
    compose,
    diode_bank,
    graph_inverse,
    identity,
    quartic_gradient,
    scale,
)
from .srg import apply_calculus, cloud_subset_check, sample_pair_srg

__all__ = ["RuleResult", "RULES", "run_calculus_suite", "timed_suite", "format_matrix"]

DEFAULT_TOL = 1e-10
# selections kept per multivalued input; matched seeds make any cap exact
SUITE_SELECTIONS = 3


@dataclass
class RuleResult:
    rule: str
    statement: str
    dim: int
    ok: bool
    worst: float
    n_records: int
    detail: str = ""


RULES = {
    "scale": "G(aA, bB) = (a/b) G(A, B)",
    "invert": "G(B, A) = G(A, B)^-1",
    "identity": "G(id, A) = G(A, id)^-1 = G(A^-1, id)",
    "self": "G(F, F) = {1}",
    "sum": "G(A + F, F) = 1 + G(A, F)",
    "resolvent": "G(F o (A + F)^-1, id) = G(F, A + F)",
    "precompose": "G(A o F, B o F) ⊆ G(A, B)",
    "congruence": "G(A, B) ⊆ C>=0  =>  G(M^-T o A, M o B) ⊆ C>=0",
}


def _pointwise(lhs, rhs, tol):
    """Compare two clouds record by record through their provenance keys."""
    KL, VL = lhs.provenance_table()
    KR, VR = rhs.provenance_table()
    if KL.shape != KR.shape or np.any(KL != KR):
        if KL.shape == KR.shape:
            missing = int(np.any(KL != KR, axis=1).sum())
        else:
            missing = abs(len(KL) - len(KR))
        return False, math.inf, len(KL), f"{missing} provenance keys differ"
    inf_l, inf_r = np.isnan(VL), np.isnan(VR)
    if np.any(inf_l != inf_r):
        k = int(np.argmax(inf_l != inf_r))
        return False, math.inf, len(KL), f"infinity mismatch at {tuple(KL[k])}"
    fin = ~inf_l
    d = np.abs(VL[fin] - VR[fin])
    scale_ = np.maximum(1.0, np.maximum(np.abs(VL[fin]), np.abs(VR[fin])))
    worst = float(d.max()) if len(d) else 0.0
    bad = d > tol * scale_
    if bad.any():
        k = int(np.flatnonzero(fin)[np.argmax(bad)])
        return False, worst, len(KL), f"mismatch at {tuple(KL[k])}: {VL[k]} vs {VR[k]}"
    return True, worst, len(KL), ""


def _setwise(a, b, tol):
    ra = cloud_subset_check(a, b, tol)
    rb = cloud_subset_check(b, a, tol)
    worst = max(ra.worst_distance, rb.worst_distance)
    ok = ra.ok and rb.ok
    return ok, worst, len(a.points) + len(b.points), "" if ok else f"worst distance {worst:.3g}"


def _operators(dim, rng):
    """A spread of test operators on R^dim."""
    G = rng.standard_normal((dim, dim))
    mono = LinearOp(G @ G.T + 0.5 * np.eye(dim) + (G - G.T), "mono")
    gen = LinearOp(rng.standard_normal((dim, dim)) + 2 * np.eye(dim), "gen")
    return {
        "linear": gen,
        "monotone": mono,
        "quartic": quartic_gradient(dim),
        "diodes": diode_bank(dim),
    }


def run_calculus_suite(seed=0, dims=(1, 2, 3), n_inputs=200, tol=DEFAULT_TOL, max_selections=SUITE_SELECTIONS):
    """Run every rule on every dimension; returns a list of :class:`RuleResult`."""
    results = []
    for dim in dims:
        rng = np.random.default_rng([seed, dim])
        ops = _operators(dim, rng)
        s = int(rng.integers(2**31))
        idn = identity(dim)

        def cloud(A, B, **kw):
            return sample_pair_srg(A, B, n_inputs, s, max_selections=max_selections, **kw)

        def record(rule, out):
            ok, worst, n, detail = out
            results.append(RuleResult(rule, RULES[rule], dim, bool(ok), float(worst), n, detail))

        # scaling, including negative factors
        outs = []
        for A, B in ((ops["diodes"], ops["linear"]), (ops["quartic"], ops["monotone"])):
            base = cloud(A, B)
            for a, b in ((2.5, 0.5), (-1.5, 3.0), (0.3, -2.0)):
                lhs = cloud(scale(a, A), scale(b, B))
                outs.append(_pointwise(lhs, apply_calculus(base, "scale", alpha=a, beta=b), tol))
        record("scale", _merge(outs))

        outs = []
        for A, B in ((ops["diodes"], ops["linear"]), (ops["quartic"], ops["monotone"]), (ops["diodes"], idn)):
            outs.append(_pointwise(cloud(B, A), apply_calculus(cloud(A, B), "invert"), tol))
        record("invert", _merge(outs))

        outs = []
        for A in (ops["linear"], ops["quartic"], ops["diodes"]):
            outs.append(_pointwise(cloud(idn, A), apply_calculus(cloud(A, idn), "invert"), tol))
        for A in (ops["linear"], ops["quartic"]):
            X = A.domain.sample(n_inputs, s)
            inv = graph_inverse(A, X)
            outs.append(_setwise(cloud(idn, A, inputs=X), cloud(inv, idn, inputs=inv.inputs), tol))
        record("identity", _merge(outs))

        outs = []
        for F in (ops["linear"], ops["quartic"], ops["monotone"]):
            c = cloud(F, F)
            worst = float(np.abs(c.points - 1.0).max()) if len(c.points) else 0.0
            ok = len(c.points) > 0 and worst <= tol and not c.has_infinity
            outs.append((ok, worst, len(c.points), "" if ok else f"max |z - 1| = {worst:.3g}"))
        record("self", _merge(outs))

        outs = []
        for A, F in ((ops["diodes"], ops["monotone"]), (ops["linear"], ops["quartic"]), (ops["quartic"], ops["linear"])):
            outs.append(_pointwise(cloud(A + F, F), apply_calculus(cloud(A, F), "shift", c=1.0), tol))
        record("sum", _merge(outs))

        outs = []
        for A, F in ((ops["monotone"], idn), (ops["quartic"], ops["linear"]), (ops["linear"], ops["quartic"])):
            AF = A + F
            X = AF.domain.sample(n_inputs, s)
            inv = graph_inverse(AF, X)
            lhs = cloud(compose(F, inv), idn, inputs=inv.inputs)
            outs.append(_setwise(lhs, cloud(F, AF, inputs=X), tol))
        record("resolvent", _merge(outs))

        outs = []
        for A, B, F in (
            (ops["diodes"], ops["linear"], ops["monotone"]),
            (ops["quartic"], ops["monotone"], ops["linear"]),
            (ops["linear"], idn, ops["quartic"]),
        ):
            Y = F.domain.sample(n_inputs, s)
            X = np.array([F(y) for y in Y])
            lhs = cloud(compose(A, F), compose(B, F), inputs=Y)
            rhs = cloud(A, B, inputs=X)
            if lhs.n_inputs == rhs.n_inputs:
                outs.append(_pointwise(lhs, rhs, tol))
            else:
                outs.append(_setwise_subset(lhs, rhs, tol))
        record("precompose", _merge(outs))

        outs = []
        for A, B in ((ops["diodes"], idn), (ops["monotone"], idn), (ops["quartic"], idn)):
            M = rng.standard_normal((dim, dim)) + 2 * np.eye(dim)
            Minv_T = LinearOp(np.linalg.inv(M).T, "M^-T")
            base = cloud(A, B)
            c = cloud(compose(Minv_T, A), compose(LinearOp(M, "M"), B))
            # relative to max(1, |z|): rounding in Re z grows with |z|
            worst = max(_rel_neg_real(base), _rel_neg_real(c))
            ok = worst <= tol
            outs.append((ok, worst, len(c.points), "" if ok else f"relative min Re = {-worst:.3g}"))
        record("congruence", _merge(outs))
    return results


def _rel_neg_real(cloud):
    z = cloud.points
    if not len(z):
        return 0.0
    return float(max(0.0, np.max(-z.real / np.maximum(1.0, np.abs(z)))))


def _setwise_subset(lhs, rhs, tol):
    r = cloud_subset_check(lhs, rhs, tol)
    return r.ok, r.worst_distance, r.n_checked, "" if r.ok else f"worst distance {r.worst_distance:.3g}"


def _merge(outs):
    ok = all(o[0] for o in outs)
    worst = max(o[1] for o in outs)
    n = sum(o[2] for o in outs)
    detail = "; ".join(o[3] for o in outs if o[3])
    return ok, worst, n, detail


def format_matrix(results, elapsed=None):
    """Pass/fail matrix: one row per rule, one column per dimension."""
    dims = sorted({r.dim for r in results})
    rules = list(dict.fromkeys(r.rule for r in results))
    lines = [f"{'rule':<12}" + "".join(f"{'dim ' + str(d):>9}" for d in dims) + "  statement"]
    for rule in rules:
        row = f"{rule:<12}"
        for d in dims:
            r = next((x for x in results if x.rule == rule and x.dim == d), None)
            row += f"{'-' if r is None else ('pass' if r.ok else 'FAIL'):>9}"
        lines.append(row + "  " + RULES[rule])
    for r in results:
        if not r.ok:
            lines.append(f"  {r.rule} dim {r.dim}: {r.detail}")
    if elapsed is not None:
        lines.append(f"elapsed {elapsed:.2f} s")
    return "\n".join(lines)


def timed_suite(seed=0, **kw):
    t0 = time.perf_counter()
    res = run_calculus_suite(seed, **kw)
    return res, time.perf_counter() - t0
