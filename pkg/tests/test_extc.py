import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pairsrg.extc import INF, as_extended, conj_invert, is_inf, z_pair, z_pair_projected


def test_parallel_vectors_give_positive_real():
    zp, zm = z_pair([2.0, 0.0], [1.0, 0.0])
    assert zp == pytest.approx(2.0)
    assert zm == pytest.approx(2.0)


def test_antiparallel_vectors_give_negative_real():
    zp, _ = z_pair([-3.0, 0.0], [1.0, 0.0])
    assert zp.real == pytest.approx(-3.0)
    assert abs(zp.imag) < 1e-15


def test_orthogonal_vectors_give_imaginary_pair():
    zp, zm = z_pair([0.0, 1.0], [1.0, 0.0])
    assert zp == pytest.approx(1j)
    assert zm == pytest.approx(-1j)


def test_zero_input_difference_is_infinity():
    assert z_pair([1.0, 0.0], [0.0, 0.0]) == (INF, INF)
    assert z_pair_projected([1.0, 0.0], [0.0, 0.0]) == (INF, INF)


def test_both_zero_gives_zero():
    assert z_pair([0.0], [0.0]) == (0j, 0j)


def test_zero_output_gives_zero():
    assert z_pair([0.0, 0.0], [1.0, 2.0]) == (0j, 0j)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        z_pair([1.0, 2.0], [1.0])


def test_conj_invert_swaps_zero_and_infinity():
    assert conj_invert(INF) == 0
    assert conj_invert(0j) is INF
    assert conj_invert(2 + 2j) == pytest.approx(0.25 + 0.25j)


def test_infinity_is_a_singleton():
    assert pickle.loads(pickle.dumps(INF)) is INF
    assert is_inf(INF) and not is_inf(1.0)
    assert INF.conjugate() is INF


def test_as_extended_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_extended(complex(math.nan, 0))


def test_nearly_parallel_vectors_keep_precision():
    a = np.array([1.0, 1e-9])
    b = np.array([1.0, 0.0])
    zp, _ = z_pair(a, b)
    assert zp.imag == pytest.approx(1e-9, rel=1e-6)


vec = arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False, width=64))


@settings(max_examples=200, deadline=None)
@given(vec, vec)
def test_two_constructions_agree(a, b):
    if np.linalg.norm(b) < 1e-6 or np.linalg.norm(a) < 1e-6:
        return
    z1, _ = z_pair(a, b)
    z2, _ = z_pair_projected(a, b)
    assert abs(z1 - z2) <= 1e-9 * max(1.0, abs(z1))


@settings(max_examples=200, deadline=None)
@given(vec, vec)
def test_modulus_and_conjugation(a, b):
    if np.linalg.norm(b) == 0 or np.linalg.norm(a) == 0:
        return
    zp, zm = z_pair(a, b)
    assert zm == zp.conjugate()
    assert zp.imag >= 0
    assert abs(zp) == pytest.approx(np.linalg.norm(a) / np.linalg.norm(b), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(vec, vec)
def test_swapping_roles_inverts(a, b):
    if np.linalg.norm(b) < 1e-6 or np.linalg.norm(a) < 1e-6:
        return
    z, _ = z_pair(a, b)
    w, _ = z_pair(b, a)
    inv = conj_invert(z)
    assert abs(w - inv) <= 1e-9 * max(1.0, abs(w))
