"""Sampled scaled relative graphs of operator pairs.

For a pair ``(A, B)`` every pair of sampled inputs and every selection of
outputs ``u_A, ū_A, u_B, ū_B`` contributes the conjugate pair
``z±(u_A - ū_A, u_B - ū_B)``. When ``u_B = ū_B`` but ``u_A != ū_A`` the
cloud gains the point at infinity instead.

Each finite record carries a provenance row ``(i, j, a_i, a_j, b_i, b_j)``:
input indices and selection indices into the stored output tables. This lets
property tests compare two clouds record by record ("matched seeds").
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .extc import INF
from .ops import DEFAULT_BOX, SetValuedOp

__all__ = [
    "PairSrgCloud",
    "SubsetReport",
    "sample_pair_srg",
    "apply_calculus",
    "cloud_subset_check",
    "export_csv",
    "export_svg",
    "pair_differences",
]

DEFAULT_EPS_DEN = 1e-9
MAX_SELECTIONS = 5
MAX_PAIRS = 5_000_000


@dataclass
class PairSrgCloud:
    """A sampled SRG: finite points, an infinity flag and per-point provenance."""

    points: np.ndarray
    has_infinity: bool = False
    prov: Optional[np.ndarray] = None
    inf_prov: Optional[np.ndarray] = None
    seed: Optional[int] = None
    n_inputs: int = 0
    n_pairs: int = 0
    dropped: int = 0
    truncated: bool = False
    inputs: Optional[np.ndarray] = field(default=None, repr=False)
    outputs_a: Optional[np.ndarray] = field(default=None, repr=False)
    outputs_b: Optional[np.ndarray] = field(default=None, repr=False)
    tags: tuple = ("A", "B")
    history: tuple = ()

    @classmethod
    def from_points(cls, points, has_infinity=False):
        pts = [complex(p) for p in points if p is not INF]
        has_infinity = has_infinity or any(p is INF for p in points)
        return cls(np.array(pts, dtype=complex), has_infinity)

    @property
    def counts(self):
        return self.n_inputs, self.n_pairs

    def __len__(self):
        return len(self.points)

    def min_real(self):
        return float(self.points.real.min()) if len(self.points) else math.inf

    def max_modulus(self):
        if self.has_infinity:
            return math.inf
        return float(np.abs(self.points).max()) if len(self.points) else 0.0

    def is_conjugate_symmetric(self):
        """Exact check that the multiset of points is closed under conjugation."""
        pts = self.points
        key = lambda z: (z.real, abs(z.imag))  # noqa: E731
        upper = sorted(key(z) for z in pts if z.imag > 0)
        lower = sorted(key(z) for z in pts if z.imag < 0)
        return upper == lower

    def by_provenance(self):
        """Map provenance tuples to the upper-half representative (or ``INF``).

        Same-input records are keyed with their two selections in sorted
        order, so the key does not depend on which side was called ``x``.
        """
        if self.prov is None:
            raise ValueError("cloud has no provenance")
        out = {}
        for z, row in zip(self.points, self.prov):
            out[_canonical(row)] = complex(z.real, abs(z.imag))
        if self.inf_prov is not None:
            for row in self.inf_prov:
                out[_canonical(row)] = INF
        return out

    def provenance_table(self):
        """Sorted unique canonical keys with their upper-half values (``nan`` marks infinity)."""
        if self.prov is None:
            raise ValueError("cloud has no provenance")
        # each record is stored as z and (if non-real) its conjugate; keep one
        up = self.points.imag >= 0
        keys = [canonical_rows(self.prov[up])]
        vals = [self.points[up]]
        if self.inf_prov is not None and len(self.inf_prov):
            keys.append(canonical_rows(self.inf_prov))
            vals.append(np.full(len(self.inf_prov), complex(np.nan, np.nan)))
        K = np.concatenate(keys)
        V = np.concatenate(vals)
        # pack each row into one int64 with a mixed radix, then sort once
        radix = K.max(axis=0) + 1 if len(K) else np.ones(6, dtype=np.int64)
        if np.sum(np.log2(np.maximum(radix, 1))) < 62:
            code = np.zeros(len(K), dtype=np.int64)
            for c in range(6):
                code = code * radix[c] + K[:, c]
            _, first = np.unique(code, return_index=True)
        else:
            _, first = np.unique(K, axis=0, return_index=True)
        return K[first], V[first]

    def provenance(self, k):
        """Vectors ``(x, x̄, u_A, ū_A, u_B, ū_B)`` behind point ``k``."""
        if self.prov is None or self.outputs_a is None:
            raise ValueError("cloud has no provenance")
        i, j, ai, aj, bi, bj = (int(v) for v in self.prov[k])
        X, UA, UB = self.inputs, self.outputs_a, self.outputs_b
        return X[i], X[j], UA[i, ai], UA[j, aj], UB[i, bi], UB[j, bj]


@dataclass
class SubsetReport:
    ok: bool
    worst_distance: float
    offender: Optional[complex]
    infinity_ok: bool
    n_checked: int


def _canonical(row):
    i, j, ai, aj, bi, bj = (int(v) for v in row)
    if i == j and (ai, bi) > (aj, bj):
        ai, aj, bi, bj = aj, ai, bj, bi
    return i, j, ai, aj, bi, bj


def canonical_rows(P):
    """Vectorized :func:`_canonical` for an ``(N, 6)`` provenance array."""
    P = np.array(P, dtype=np.int64).reshape(-1, 6)
    swap = (P[:, 0] == P[:, 1]) & ((P[:, 2] > P[:, 3]) | ((P[:, 2] == P[:, 3]) & (P[:, 4] > P[:, 5])))
    P[swap] = P[swap][:, [0, 1, 3, 2, 5, 4]]
    return P


def _threads():
    try:
        return max(1, int(os.environ.get("SRG_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate(op, X, seed, which, max_selections):
    # the subsample depends on (seed, input, output count) only, so swapping
    # the roles of A and B keeps the same selections
    outs = []
    for i, x in enumerate(X):
        us = op.eval(x)
        if len(us) > max_selections:
            rng = np.random.default_rng([seed, i, len(us)])
            keep = np.sort(rng.choice(len(us), size=max_selections, replace=False))
            us = [us[k] for k in keep]
        outs.append(us)
    return outs


def _pad(outs, dim):
    m = max(len(u) for u in outs)
    arr = np.full((len(outs), m, dim), np.nan)
    counts = np.zeros(len(outs), dtype=np.int64)
    for i, us in enumerate(outs):
        counts[i] = len(us)
        for k, u in enumerate(us):
            arr[i, k] = u
    return arr, counts


def _rownorm(D):
    return np.sqrt(np.einsum("ij,ij->i", D, D))


def _zplus(dA, dB, na=None, nb=None):
    """Vectorized upper branch of z± for row-wise differences (``dB`` rows nonzero)."""
    na = _rownorm(dA) if na is None else na
    nb = _rownorm(dB) if nb is None else nb
    z = np.zeros(len(dA), dtype=complex)
    nz = na > 0
    if np.any(nz):
        ea = dA[nz] / na[nz, None]
        eb = dB[nz] / nb[nz, None]
        ang = 2.0 * np.arctan2(_rownorm(ea - eb), _rownorm(ea + eb))
        r = na[nz] / nb[nz]
        z[nz] = r * np.exp(1j * ang)
    return z


def _combo_records(args):
    (ai, aj, bi, bj), UA, UB, mA, mB, I, J, S, eps = args
    rows = []
    # cross pairs i < j
    ok = (ai < mA[I]) & (aj < mA[J]) & (bi < mB[I]) & (bj < mB[J])
    if np.any(ok):
        Ii, Jj = I[ok], J[ok]
        rows.append((Ii, Jj, UA[Ii, ai] - UA[Jj, aj], UB[Ii, bi] - UB[Jj, bj]))
    # same input, distinct selections (unordered)
    if (ai, bi) < (aj, bj):
        ok = (max(ai, aj) < mA[S]) & (max(bi, bj) < mB[S])
        if np.any(ok):
            Ss = S[ok]
            rows.append((Ss, Ss, UA[Ss, ai] - UA[Ss, aj], UB[Ss, bi] - UB[Ss, bj]))
    fin_z, fin_p, inf_p = [], [], []
    dropped = 0
    total = 0
    for Ii, Jj, dA, dB in rows:
        na = _rownorm(dA)
        nb = _rownorm(dB)
        small_b = nb <= eps * np.maximum(1.0, na)
        is_inf = small_b & (na > eps)
        is_drop = small_b & ~is_inf
        fin = ~small_b
        total += len(Ii)
        dropped += int(is_drop.sum())
        sel = lambda m: np.column_stack(  # noqa: E731
            [Ii[m], Jj[m]] + [np.full(int(m.sum()), v) for v in (ai, aj, bi, bj)]
        ).astype(np.int32)
        if np.any(is_inf):
            inf_p.append(sel(is_inf))
        if np.any(fin):
            fin_z.append(_zplus(dA[fin], dB[fin], na[fin], nb[fin]))
            fin_p.append(sel(fin))
    return fin_z, fin_p, inf_p, dropped, total


def sample_pair_srg(
    A: SetValuedOp,
    B: SetValuedOp,
    n_inputs: int = 200,
    seed: int = 0,
    eps_den: float = DEFAULT_EPS_DEN,
    *,
    inputs=None,
    box=DEFAULT_BOX,
    max_selections: int = MAX_SELECTIONS,
    max_pairs: int = MAX_PAIRS,
    threads: Optional[int] = None,
) -> PairSrgCloud:
    """Sample the SRG of the pair ``(A, B)``.

    Parameters
    ----------
    A, B : SetValuedOp
        Operators of equal dimension.
    n_inputs : int
        Number of inputs drawn from ``dom A ∩ dom B ∩ box`` (ignored when
        ``inputs`` is given).
    seed : int
        Seed for the input draw and for subsampling outputs of operators
        with more than ``max_selections`` outputs at a point.
    eps_den : float
        A pair with ``|Δu_B| <= eps_den * max(1, |Δu_A|)`` counts as a
        division by zero: infinity if ``|Δu_A| > eps_den``, otherwise dropped.
    inputs : array, optional
        Explicit ``(N, n)`` inputs; inputs outside the common domain are skipped.
    max_pairs : int
        Hard cap on the number of evaluated (pair, selection) records; the
        enumeration is truncated past it and ``truncated`` is set.

    Returns
    -------
    PairSrgCloud
    """
    if A.dim != B.dim:
        raise ValueError(f"dimension mismatch: {A.tag} has dim {A.dim}, {B.tag} has dim {B.dim}")
    if eps_den <= 0:
        raise ValueError("eps_den must be positive")
    seed = 0 if seed is None else int(seed)
    if inputs is None:
        if n_inputs < 2:
            raise ValueError("n_inputs must be at least 2")
        X = A.domain.intersect(B.domain).sample(n_inputs, seed, box)
    else:
        X = np.asarray(inputs, dtype=float).reshape(-1, A.dim)
    outs_a = _evaluate(A, X, seed, 0, max_selections)
    outs_b = _evaluate(B, X, seed, 1, max_selections)
    keep = [k for k in range(len(X)) if outs_a[k] and outs_b[k]]
    if not keep:
        raise ValueError("empty common domain: no sampled input lies in dom A ∩ dom B")
    X = X[keep]
    UA, mA = _pad([outs_a[k] for k in keep], A.dim)
    UB, mB = _pad([outs_b[k] for k in keep], B.dim)
    N = len(X)
    I, J = np.triu_indices(N, k=1)
    S = np.arange(N)
    combos = list(itertools.product(range(UA.shape[1]), range(UA.shape[1]), range(UB.shape[1]), range(UB.shape[1])))
    jobs = [(c, UA, UB, mA, mB, I, J, S, eps_den) for c in combos]
    nthreads = threads or _threads()
    if nthreads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            results = list(pool.map(_combo_records, jobs))
    else:
        results = [_combo_records(j) for j in jobs]

    fin_z, fin_p, inf_p = [], [], []
    dropped = total = 0
    truncated = False
    for fz, fp, ip, d, t in results:
        if total + t > max_pairs:
            truncated = True
            break
        fin_z += fz
        fin_p += fp
        inf_p += ip
        dropped += d
        total += t

    zp = np.concatenate(fin_z) if fin_z else np.zeros(0, dtype=complex)
    prov = np.concatenate(fin_p) if fin_p else np.zeros((0, 6), dtype=np.int32)
    iprov = np.concatenate(inf_p) if inf_p else np.zeros((0, 6), dtype=np.int32)
    points, prov = _emit_conjugates(zp, prov)
    return PairSrgCloud(
        points=points,
        has_infinity=len(iprov) > 0,
        prov=prov,
        inf_prov=iprov,
        seed=seed,
        n_inputs=N,
        n_pairs=total,
        dropped=dropped,
        truncated=truncated,
        inputs=X,
        outputs_a=UA,
        outputs_b=UB,
        tags=(A.tag, B.tag),
    )


def _emit_conjugates(zp, prov):
    """Interleave ``z+`` with ``z-`` for every record with a nonzero imaginary part."""
    counts = 1 + (zp.imag != 0).astype(np.int64)
    idx = np.repeat(np.arange(len(zp)), counts)
    pts = zp[idx]
    first = np.zeros(len(idx), dtype=bool)
    first[np.cumsum(counts) - counts] = True
    pts[~first] = np.conj(pts[~first])
    pts.imag[pts.imag == 0] = 0.0  # drop negative zeros
    return pts, prov[idx]


def pair_differences(cloud: PairSrgCloud, which="finite"):
    """Output differences ``(Δu_A, Δu_B)`` for finite records or infinity records."""
    P = cloud.prov if which == "finite" else cloud.inf_prov
    if P is None or cloud.outputs_a is None:
        raise ValueError("cloud has no provenance")
    UA, UB = cloud.outputs_a, cloud.outputs_b
    i, j, ai, aj, bi, bj = (P[:, k] for k in range(6))
    return UA[i, ai] - UA[j, aj], UB[i, bi] - UB[j, bj]


def apply_calculus(cloud: PairSrgCloud, rule: str, **params) -> PairSrgCloud:
    """Apply a calculus rule pointwise.

    ``rule`` is ``"scale"`` (``alpha``, ``beta``; multiplies by ``alpha/beta``),
    ``"invert"`` (``z -> conj(1/z)``, exchanging 0 and infinity) or
    ``"shift"`` (``c``; adds ``c``).
    """
    prov = cloud.prov
    if rule == "scale":
        alpha, beta = float(params["alpha"]), float(params["beta"])
        if alpha == 0 or beta == 0:
            raise ValueError("scale rule needs nonzero alpha and beta")
        out = replace(cloud, points=cloud.points * (alpha / beta))
    elif rule == "shift":
        out = replace(cloud, points=cloud.points + float(params["c"]))
    elif rule == "invert":
        pts = cloud.points
        zero = pts == 0
        new = np.zeros(len(pts), dtype=complex)
        nz = ~zero
        new[nz] = np.conj(1.0 / pts[nz])
        new_prov = None if prov is None else prov[nz]
        new_inf = None if cloud.inf_prov is None else cloud.inf_prov
        pts_out = new[nz]
        if cloud.has_infinity:
            k = 1 if new_inf is None or len(new_inf) == 0 else len(new_inf)
            pts_out = np.concatenate([pts_out, np.zeros(k, dtype=complex)])
            if new_prov is not None:
                extra = new_inf if new_inf is not None and len(new_inf) else np.full((1, 6), -1, dtype=np.int32)
                new_prov = np.concatenate([new_prov, extra])
        zero_prov = None if prov is None else prov[zero]
        out = replace(
            cloud,
            points=pts_out,
            prov=new_prov,
            inf_prov=zero_prov if zero_prov is not None else None,
            has_infinity=bool(zero.any()),
            outputs_a=cloud.outputs_b,
            outputs_b=cloud.outputs_a,
            tags=cloud.tags[::-1],
        )
        if out.prov is not None:
            out.prov = out.prov[:, [0, 1, 4, 5, 2, 3]]
        if out.inf_prov is not None:
            out.inf_prov = out.inf_prov[:, [0, 1, 4, 5, 2, 3]]
    else:
        raise ValueError(f"unknown calculus rule {rule!r}")
    out.history = cloud.history + ((rule, tuple(sorted(params.items()))),)
    return out


def cloud_subset_check(lhs: PairSrgCloud, rhs: PairSrgCloud, tol: float = 1e-9) -> SubsetReport:
    """Check that every finite point of ``lhs`` lies within ``tol`` of a point of ``rhs``.

    Both clouds are folded into the closed upper half plane, which is exact
    for conjugation-symmetric clouds such as sampled SRGs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    from scipy.spatial import cKDTree

    inf_ok = (not lhs.has_infinity) or rhs.has_infinity
    if len(lhs.points) == 0:
        return SubsetReport(inf_ok, 0.0, None, inf_ok, 0)
    if len(rhs.points) == 0:
        return SubsetReport(False, math.inf, complex(lhs.points[0]), inf_ok, len(lhs.points))
    # duplicates (common for 1-d operators) degrade the tree, so fold and dedupe first
    fold = lambda z: np.unique(z.real + 1j * np.abs(z.imag))  # noqa: E731
    ref, qz = fold(rhs.points), fold(lhs.points)
    ref = np.column_stack([ref.real, ref.imag])
    q = np.column_stack([qz.real, qz.imag])
    tree = cKDTree(ref)
    # a bounded query prunes fast; only the misses need their exact distance
    d, _ = tree.query(q, distance_upper_bound=tol, workers=_threads())
    miss = ~np.isfinite(d)
    if miss.any():
        d[miss], _ = tree.query(q[miss], workers=_threads())
    k = int(np.argmax(d))
    worst = float(d[k])
    return SubsetReport(
        ok=bool(worst <= tol and inf_ok),
        worst_distance=worst,
        offender=complex(qz[k]) if worst > 0 else None,
        infinity_ok=inf_ok,
        n_checked=len(lhs.points),
    )


def export_csv(cloud: PairSrgCloud) -> bytes:
    """CSV with columns ``re,im,is_infinity``; infinity is one ``,,1`` row."""
    lines = ["re,im,is_infinity"]
    for z in cloud.points:
        lines.append(f"{float(z.real) + 0.0!r},{float(z.imag) + 0.0!r},0")
    if cloud.has_infinity:
        lines.append(",,1")
    return ("\n".join(lines) + "\n").encode()


def export_svg(cloud: PairSrgCloud, region=None, title=None) -> bytes:
    from .render import render_svg

    return render_svg(cloud, region, title)
