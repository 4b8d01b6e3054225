"""Closed-form SRG regions, their exact transforms, and membership checks for pairs.

Regions live in the extended complex plane. Half-planes ``Re z >= alpha`` and
disk complements include the point at infinity; disks do not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .extc import INF
from .ops import LinearOp, SetValuedOp
from .srg import PairSrgCloud, pair_differences, sample_pair_srg

__all__ = [
    "HalfPlane",
    "Disk",
    "DiskComplement",
    "Semimonotone",
    "FullPlane",
    "RegionUnion",
    "RegionIntersection",
    "Region",
    "UnsupportedTransformError",
    "margin",
    "margins",
    "contains",
    "contains_direct",
    "cloud_margin",
    "transform",
    "region_to_json",
    "region_from_json",
    "SemimonotoneReport",
    "check_semimonotone_pair",
    "adjugate",
    "adjugate_factors",
    "pair_partner_nonsingular",
    "pair_partner_rank_deficient",
]

DEFAULT_TOL = 1e-9
RANK_RTOL = 1e-10


class UnsupportedTransformError(ValueError):
    """The requested transform has no closed form implemented for this region."""


@dataclass(frozen=True)
class HalfPlane:
    """``{Re z >= alpha} ∪ {∞}``."""

    alpha: float


@dataclass(frozen=True)
class Disk:
    """Closed disk ``|z - center| <= radius``."""

    center: complex
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("disk radius must be nonnegative")
        object.__setattr__(self, "center", complex(self.center))


@dataclass(frozen=True)
class DiskComplement:
    """``{|z - center| >= radius} ∪ {∞}``."""

    center: complex
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("disk radius must be nonnegative")
        object.__setattr__(self, "center", complex(self.center))


@dataclass(frozen=True)
class Semimonotone:
    """SRG of the (mu, rho)-semimonotone pairs: ``Re z >= mu + rho |z|^2`` (∪ ∞ if rho <= 0)."""

    mu: float
    rho: float

    @property
    def empty(self):
        return self.rho > 0 and 1.0 - 4.0 * self.mu * self.rho < 0

    def disk_form(self):
        """Center and radius of the boundary circle, or ``None`` when ``rho == 0``."""
        if self.rho == 0:
            return None
        c = 1.0 / (2.0 * self.rho)
        r2 = (1.0 - 4.0 * self.mu * self.rho) / (4.0 * self.rho**2)
        return c, r2


@dataclass(frozen=True)
class FullPlane:
    pass


@dataclass(frozen=True)
class RegionUnion:
    parts: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class RegionIntersection:
    parts: tuple = field(default_factory=tuple)


Region = Union[HalfPlane, Disk, DiskComplement, Semimonotone, FullPlane, RegionUnion, RegionIntersection]


# ---------------------------------------------------------------------------
# Membership
# ---------------------------------------------------------------------------


def margin(region: Region, z) -> float:
    """Signed distance-like margin: ``>= 0`` inside, ``< 0`` outside, ``±inf`` at ∞."""
    inf = z is INF
    if isinstance(region, HalfPlane):
        return math.inf if inf else complex(z).real - region.alpha
    if isinstance(region, Disk):
        return -math.inf if inf else region.radius - abs(complex(z) - region.center)
    if isinstance(region, DiskComplement):
        return math.inf if inf else abs(complex(z) - region.center) - region.radius
    if isinstance(region, Semimonotone):
        return _semimonotone_margin(region, z)
    if isinstance(region, FullPlane):
        return math.inf
    if isinstance(region, RegionUnion):
        return max((margin(p, z) for p in region.parts), default=-math.inf)
    if isinstance(region, RegionIntersection):
        return min((margin(p, z) for p in region.parts), default=math.inf)
    raise TypeError(f"not a region: {region!r}")


def margins(region: Region, Z) -> np.ndarray:
    """Vectorized :func:`margin` for an array of finite points."""
    Z = np.asarray(Z, dtype=complex)
    if isinstance(region, HalfPlane):
        return Z.real - region.alpha
    if isinstance(region, Disk):
        return region.radius - np.abs(Z - region.center)
    if isinstance(region, DiskComplement):
        return np.abs(Z - region.center) - region.radius
    if isinstance(region, Semimonotone):
        if region.rho == 0:
            return Z.real - region.mu
        c, r2 = region.disk_form()
        if r2 < 0:
            return np.full(Z.shape, -math.inf if region.rho > 0 else math.inf)
        d = np.abs(Z - c)
        return math.sqrt(r2) - d if region.rho > 0 else d - math.sqrt(r2)
    if isinstance(region, FullPlane):
        return np.full(Z.shape, math.inf)
    if isinstance(region, RegionUnion):
        if not region.parts:
            return np.full(Z.shape, -math.inf)
        return np.max([margins(p, Z) for p in region.parts], axis=0)
    if isinstance(region, RegionIntersection):
        if not region.parts:
            return np.full(Z.shape, math.inf)
        return np.min([margins(p, Z) for p in region.parts], axis=0)
    raise TypeError(f"not a region: {region!r}")


def _semimonotone_margin(reg: Semimonotone, z):
    mu, rho = reg.mu, reg.rho
    if rho == 0:
        return math.inf if z is INF else complex(z).real - mu
    c, r2 = reg.disk_form()
    if rho > 0:
        if r2 < 0 or z is INF:
            return -math.inf
        return math.sqrt(r2) - abs(complex(z) - c)
    if r2 < 0 or z is INF:
        return math.inf
    return abs(complex(z) - c) - math.sqrt(r2)


def contains(region: Region, z, tol: float = DEFAULT_TOL) -> bool:
    """Membership with every defining inequality relaxed additively by ``tol``.

    With ``tol == 0`` a semimonotone region is tested in squared disk form,
    ``(x - 1/(2 rho))^2 + y^2 <= (1 - 4 mu rho) / (4 rho^2)``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if tol == 0 and isinstance(region, Semimonotone) and region.rho != 0 and z is not INF:
        c, r2 = region.disk_form()
        z = complex(z)
        d2 = (z.real - c) ** 2 + z.imag**2
        return d2 <= r2 if region.rho > 0 else d2 >= r2
    return margin(region, z) >= -tol


def contains_direct(z, mu: float, rho: float) -> bool:
    """``Re z >= mu + rho |z|^2`` evaluated literally (∞ included iff ``rho <= 0``)."""
    if z is INF:
        return rho <= 0
    z = complex(z)
    return z.real >= mu + rho * (z.real**2 + z.imag**2)


def cloud_margin(region: Region, cloud: PairSrgCloud, relative: bool = False):
    """Worst margin over a cloud and the point attaining it.

    With ``relative=True`` each margin is divided by ``max(1, |z|)``: the
    rounding error of a computed ``z`` grows with ``|z|``.
    """
    worst, witness = math.inf, None
    if len(cloud.points):
        m = margins(region, cloud.points)
        if relative:
            m = m / np.maximum(1.0, np.abs(cloud.points))
        k = int(np.argmin(m))
        worst, witness = float(m[k]), complex(cloud.points[k])
    if cloud.has_infinity:
        m = margin(region, INF)
        if m < worst:
            worst, witness = m, INF
    return worst, witness


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def _basic(region):
    if isinstance(region, Semimonotone):
        if region.rho == 0:
            return HalfPlane(region.mu)
        if region.empty:
            raise UnsupportedTransformError("empty semimonotone region")
        c, r2 = region.disk_form()
        if region.rho > 0:
            return Disk(c, math.sqrt(r2))
        if r2 < 0:
            return FullPlane()
        return DiskComplement(c, math.sqrt(r2))
    return region


def _real_center(region):
    if region.center.imag != 0:
        raise UnsupportedTransformError(f"conj_invert needs a real center, got {region!r}")
    return region.center.real


def transform(region: Region, op: str, arg=None) -> Region:
    """Exact image of ``region`` under ``scale``, ``shift``, ``conj_invert`` or ``minkowski_add``."""
    reg = _basic(region)
    if op == "shift":
        c = float(arg)
        if isinstance(reg, HalfPlane):
            return HalfPlane(reg.alpha + c)
        if isinstance(reg, (Disk, DiskComplement)):
            return type(reg)(reg.center + c, reg.radius)
        if isinstance(reg, FullPlane):
            return reg
    elif op == "scale":
        c = float(arg)
        if c == 0:
            raise UnsupportedTransformError("scale by zero")
        if isinstance(reg, HalfPlane) and c > 0:
            return HalfPlane(c * reg.alpha)
        if isinstance(reg, (Disk, DiskComplement)):
            return type(reg)(c * reg.center, abs(c) * reg.radius)
        if isinstance(reg, FullPlane):
            return reg
    elif op == "conj_invert":
        if isinstance(reg, HalfPlane):
            a = reg.alpha
            if a > 0:
                return Disk(1.0 / (2 * a), 1.0 / (2 * a))
            if a == 0:
                return HalfPlane(0.0)
            return DiskComplement(1.0 / (2 * a), 1.0 / (2 * abs(a)))
        if isinstance(reg, Disk):
            c, r = _real_center(reg), reg.radius
            if r == 0 and c != 0:
                return Disk(1.0 / c, 0.0)
            if abs(c) > r > 0:
                d = c * c - r * r
                return Disk(c / d, r / d)
            if c > 0 and c == r:
                return HalfPlane(1.0 / (2 * c))
        if isinstance(reg, DiskComplement):
            c, r = _real_center(reg), reg.radius
            if c < 0 and -c == r:
                return HalfPlane(1.0 / (2 * c))
    elif op == "minkowski_add":
        other = _basic(arg)
        if isinstance(reg, HalfPlane) and isinstance(other, HalfPlane):
            return HalfPlane(reg.alpha + other.alpha)
        if isinstance(reg, Disk) and isinstance(other, Disk):
            return Disk(reg.center + other.center, reg.radius + other.radius)
    else:
        raise ValueError(f"unknown region transform {op!r}")
    raise UnsupportedTransformError(f"no closed form for {op} of {region!r}")


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def region_to_json(region: Region) -> dict:
    if isinstance(region, HalfPlane):
        return {"kind": "half_plane", "params": {"alpha": region.alpha}}
    if isinstance(region, (Disk, DiskComplement)):
        kind = "disk" if isinstance(region, Disk) else "disk_complement"
        c = region.center
        return {"kind": kind, "params": {"center": [c.real, c.imag], "radius": region.radius}}
    if isinstance(region, Semimonotone):
        return {"kind": "semimonotone", "params": {"mu": region.mu, "rho": region.rho}}
    if isinstance(region, FullPlane):
        return {"kind": "full_plane", "params": {}}
    if isinstance(region, (RegionUnion, RegionIntersection)):
        kind = "union" if isinstance(region, RegionUnion) else "intersection"
        return {"kind": kind, "params": {"parts": [region_to_json(p) for p in region.parts]}}
    raise TypeError(f"not a region: {region!r}")


def region_from_json(obj: dict) -> Region:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("region must be a JSON object with a 'kind' field")
    kind = obj["kind"]
    p = obj.get("params", {})
    try:
        if kind == "half_plane":
            return HalfPlane(float(p["alpha"]))
        if kind in ("disk", "disk_complement"):
            c = p["center"]
            center = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(float(c))
            cls = Disk if kind == "disk" else DiskComplement
            return cls(center, float(p["radius"]))
        if kind == "semimonotone":
            return Semimonotone(float(p["mu"]), float(p["rho"]))
        if kind == "full_plane":
            return FullPlane()
        if kind in ("union", "intersection"):
            parts = tuple(region_from_json(q) for q in p["parts"])
            return RegionUnion(parts) if kind == "union" else RegionIntersection(parts)
    except KeyError as exc:
        raise ValueError(f"region {kind!r}: missing parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# Pair class membership
# ---------------------------------------------------------------------------


@dataclass
class SemimonotoneReport:
    """Outcome of testing ``<ΔA, ΔB> >= mu |ΔB|^2 + rho |ΔA|^2`` on samples.

    ``inequality_ok`` evaluates the inequality on the output differences;
    ``srg_ok`` tests the sampled SRG against :class:`Semimonotone`, with
    margins scaled by ``1 / max(1, |z|)``. The two should always agree.
    """

    mu: float
    rho: float
    tol: float
    inequality_ok: bool
    srg_ok: bool
    worst_inequality_margin: float
    worst_srg_margin: float
    witness: object
    n_records: int
    has_infinity: bool
    cloud: PairSrgCloud = field(repr=False)

    @property
    def agree(self):
        return self.inequality_ok == self.srg_ok

    @property
    def ok(self):
        return self.inequality_ok and self.srg_ok

    def summary(self):
        return {
            "mu": self.mu,
            "rho": self.rho,
            "inequality_ok": self.inequality_ok,
            "srg_ok": self.srg_ok,
            "agree": self.agree,
            "worst_inequality_margin": self.worst_inequality_margin,
            "worst_srg_margin": self.worst_srg_margin,
            "witness": "inf" if self.witness is INF else (None if self.witness is None else [self.witness.real, self.witness.imag]),
            "n_records": self.n_records,
            "has_infinity": self.has_infinity,
        }


def check_semimonotone_pair(
    A: SetValuedOp,
    B: SetValuedOp,
    mu: float = 0.0,
    rho: float = 0.0,
    n_inputs: int = 200,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    **sample_kwargs,
) -> SemimonotoneReport:
    """Certify ``(A, B)`` in the (mu, rho)-semimonotone class on sampled pairs."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    cloud = sample_pair_srg(A, B, n_inputs, seed, **sample_kwargs)
    n_records = len(cloud.prov) + len(cloud.inf_prov)
    if n_records == 0:
        raise ValueError("sampling produced no valid pairs")
    margins = []
    for which in ("finite", "infinity"):
        P = cloud.prov if which == "finite" else cloud.inf_prov
        if len(P):
            dA, dB = pair_differences(cloud, which)
            m = np.einsum("ij,ij->i", dA, dB) - mu * np.einsum("ij,ij->i", dB, dB) - rho * np.einsum("ij,ij->i", dA, dA)
            margins.append(m)
    direct = float(np.concatenate(margins).min())
    region = Semimonotone(mu, rho)
    srg_worst, witness = cloud_margin(region, cloud, relative=True)
    return SemimonotoneReport(
        mu=mu,
        rho=rho,
        tol=tol,
        inequality_ok=direct >= -tol,
        srg_ok=srg_worst >= -tol,
        worst_inequality_margin=direct,
        worst_srg_margin=srg_worst,
        witness=witness,
        n_records=n_records,
        has_infinity=cloud.has_infinity,
        cloud=cloud,
    )


def _matrix(M):
    if isinstance(M, LinearOp):
        return np.array(M.matrix)
    M = np.array(M, dtype=float, ndmin=2)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    return M


def pair_partner_nonsingular(M, c: float = 1.0) -> LinearOp:
    """``c M^{-T}``: for monotone ``B``, ``(M∘B, c M^{-T})`` is a monotone pair."""
    M = _matrix(M)
    if c <= 0:
        raise ValueError("c must be positive")
    if abs(np.linalg.det(M)) <= 1e-12:
        raise ValueError("matrix is singular (|det M| <= 1e-12)")
    return LinearOp(c * np.linalg.inv(M).T, f"{c:g}*M^-T")


def adjugate(M) -> np.ndarray:
    """Transpose of the cofactor matrix, by cofactor expansion."""
    M = _matrix(M)
    n = M.shape[0]
    if n == 1:
        return np.ones((1, 1))
    adj = np.empty_like(M)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def numerical_rank(M, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(_matrix(M), compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0


def adjugate_factors(M):
    """``(x, y)`` with ``adj M = x y^T`` for a matrix of rank ``n - 1``."""
    M = _matrix(M)
    n = M.shape[0]
    r = numerical_rank(M)
    if r != n - 1:
        raise ValueError(f"rank-deficient partner needs rank n-1 = {n - 1}, got numerical rank {r}")
    adj = adjugate(M)
    U, s, Vt = np.linalg.svd(adj)
    return s[0] * U[:, 0], Vt[0]


def pair_partner_rank_deficient(M) -> LinearOp:
    """``y x^T = (adj M)^T`` for ``adj M = x y^T``; pairs monotonically with ``M∘B``.

    Since ``(adj M) M = det(M) I = 0``, the partner annihilates the range of ``M``.
    """
    M = _matrix(M)
    x, y = adjugate_factors(M)
    partner = np.outer(y, x)
    resid = np.linalg.norm(partner.T @ M)
    if resid > 1e-8 * max(1.0, np.linalg.norm(partner) * np.linalg.norm(M)):
        raise ValueError(f"adjugate reconstruction failed: |partner^T M| = {resid:g}")
    return LinearOp(partner, "yx^T")
