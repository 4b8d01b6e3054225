"""Extended complex numbers and the two kernels behind every SRG computation.

Finite points are plain Python ``complex`` values. The point at infinity is
the singleton :data:`INF`, which is never encoded as a large finite number.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

__all__ = [
    "INF",
    "Infinity",
    "ExtendedComplex",
    "is_inf",
    "as_extended",
    "z_pair",
    "z_pair_projected",
    "conj_invert",
]


class Infinity:
    """The point at infinity of the extended complex plane."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (Infinity, ())

    def conjugate(self):
        return self


INF = Infinity()

ExtendedComplex = Union[complex, Infinity]


def is_inf(z) -> bool:
    return z is INF


def as_extended(z) -> ExtendedComplex:
    """Coerce a number (or ``INF``) to an extended complex value."""
    if z is INF:
        return INF
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"finite extended complex must have finite parts, got {z!r}")
    return z


def _check_dims(delta_out, delta_in):
    a = np.asarray(delta_out, dtype=float).ravel()
    b = np.asarray(delta_in, dtype=float).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError(
            f"dimension mismatch: delta_out has {a.size} entries, delta_in has {b.size}"
        )
    return a, b


def z_pair(delta_out, delta_in):
    """Conjugate pair ``(z+, z-)`` for an output difference over an input difference.

    The modulus is ``|delta_out| / |delta_in|`` and the argument of ``z+`` is the
    angle between the two vectors in ``[0, pi]``. A zero ``delta_in`` with a
    nonzero ``delta_out`` gives ``(INF, INF)``; two zero vectors give ``(0, 0)``.

    The angle is evaluated as ``2*atan2(|a/|a| - b/|b||, |a/|a| + b/|b||)``,
    which equals the arccos of the normalised inner product but keeps full
    precision for nearly parallel vectors.
    """
    a, b = _check_dims(delta_out, delta_in)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        if na == 0.0:
            return 0j, 0j
        return INF, INF
    if na == 0.0:
        return 0j, 0j
    ea = a / na
    eb = b / nb
    angle = 2.0 * math.atan2(float(np.linalg.norm(ea - eb)), float(np.linalg.norm(ea + eb)))
    r = na / nb
    zp = complex(r * math.cos(angle), r * math.sin(angle))
    return zp, zp.conjugate()


def z_pair_projected(delta_out, delta_in):
    """Same contract as :func:`z_pair`, via projection onto ``delta_in`` and its complement.

    Real part ``<u, x>/|x|^2``, imaginary part ``|P_{x-perp} u| / |x|``. Kept as an
    independent cross-check of :func:`z_pair`.
    """
    u, x = _check_dims(delta_out, delta_in)
    nx2 = float(x @ x)
    if nx2 == 0.0:
        if not np.any(u):
            return 0j, 0j
        return INF, INF
    if not np.any(u):
        return 0j, 0j
    coef = float(u @ x) / nx2
    perp = u - coef * x
    zp = complex(coef, float(np.linalg.norm(perp)) / math.sqrt(nx2))
    return zp, zp.conjugate()


def conj_invert(z: ExtendedComplex) -> ExtendedComplex:
    """Map ``z`` to ``conj(1/z)``, swapping ``0`` and ``INF``."""
    if z is INF:
        return 0j
    z = complex(z)
    if z == 0:
        return INF
    return (1.0 / z).conjugate()
