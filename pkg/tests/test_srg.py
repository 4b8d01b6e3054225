import numpy as np
import pytest

from pairsrg.extc import INF, z_pair
from pairsrg.ops import A_LIN, LinearOp, diode_bank, ideal_diode, identity, quartic_gradient, scale
from pairsrg.regions import HalfPlane
from pairsrg.srg import (
    PairSrgCloud,
    apply_calculus,
    cloud_subset_check,
    export_csv,
    export_svg,
    pair_differences,
    sample_pair_srg,
)


def test_linear_cloud_points_match_z_pair():
    A = LinearOp(A_LIN)
    c = sample_pair_srg(A, identity(3), 30, 1)
    assert c.n_inputs == 30
    assert c.n_pairs == 30 * 29 // 2
    for k in range(0, len(c.points), 37):
        x, xb, ua, uab, ub, ubb = c.provenance(k)
        zp, zm = z_pair(ua - uab, ub - ubb)
        assert min(abs(c.points[k] - zp), abs(c.points[k] - zm)) < 1e-12


def test_cloud_is_conjugate_symmetric():
    c = sample_pair_srg(quartic_gradient(2), identity(2), 40, 0)
    assert c.is_conjugate_symmetric()


def test_identity_pair_is_the_point_one():
    c = sample_pair_srg(identity(2), identity(2), 20, 0)
    assert np.allclose(c.points, 1.0)
    assert not c.has_infinity


def test_multivalued_at_the_same_input_gives_infinity():
    c = sample_pair_srg(ideal_diode(), identity(1), 50, 0)
    assert c.has_infinity
    dA, dB = pair_differences(c, "infinity")
    assert np.all(np.linalg.norm(dB, axis=1) == 0)
    assert np.all(np.linalg.norm(dA, axis=1) > 0)
    assert c.min_real() >= 0
    assert c.max_modulus() == np.inf


def test_sampling_is_deterministic():
    a = sample_pair_srg(diode_bank(2), LinearOp([[2.0, 1.0], [0.0, 1.0]]), 60, 7)
    b = sample_pair_srg(diode_bank(2), LinearOp([[2.0, 1.0], [0.0, 1.0]]), 60, 7)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.prov, b.prov)
    assert export_csv(a) == export_csv(b)


def test_threads_do_not_change_the_result():
    args = (diode_bank(2), LinearOp([[2.0, 1.0], [0.0, 1.0]]), 60, 7)
    a = sample_pair_srg(*args, threads=1)
    b = sample_pair_srg(*args, threads=4)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.prov, b.prov)


def test_selection_cap_bounds_outputs():
    c = sample_pair_srg(diode_bank(3), identity(3), 30, 0, max_selections=2)
    assert c.outputs_a.shape[1] <= 2


def test_max_pairs_truncates():
    c = sample_pair_srg(LinearOp(A_LIN), identity(3), 100, 0, max_pairs=10)
    assert c.truncated
    assert c.n_pairs <= 10


def test_errors():
    with pytest.raises(ValueError, match="dimension mismatch"):
        sample_pair_srg(identity(2), identity(3), 10, 0)
    with pytest.raises(ValueError, match="at least 2"):
        sample_pair_srg(identity(2), identity(2), 1, 0)
    with pytest.raises(ValueError, match="empty common domain"):
        sample_pair_srg(ideal_diode(), identity(1), inputs=np.array([[1.0], [2.0]]))


def test_scale_rule_pointwise():
    A, B = diode_bank(2), LinearOp([[2.0, 1.0], [-1.0, 1.0]])
    base = sample_pair_srg(A, B, 50, 3)
    for a, b in ((2.0, 0.5), (-1.0, 3.0)):
        lhs = sample_pair_srg(scale(a, A), scale(b, B), 50, 3)
        rhs = apply_calculus(base, "scale", alpha=a, beta=b)
        KL, VL = lhs.provenance_table()
        KR, VR = rhs.provenance_table()
        assert np.array_equal(KL, KR)
        fin = ~np.isnan(VL)
        assert np.allclose(VL[fin], VR[fin], rtol=1e-10, atol=1e-10)


def test_invert_rule_swaps_zero_and_infinity():
    c = sample_pair_srg(ideal_diode(), identity(1), 30, 0)
    inv = apply_calculus(c, "invert")
    assert np.any(inv.points == 0)
    direct = sample_pair_srg(identity(1), ideal_diode(), 30, 0)
    assert direct.has_infinity == inv.has_infinity
    K1, V1 = direct.provenance_table()
    K2, V2 = inv.provenance_table()
    assert np.array_equal(K1, K2)
    fin = ~np.isnan(V1)
    assert np.array_equal(np.isnan(V1), np.isnan(V2))
    assert np.allclose(V1[fin], V2[fin], atol=1e-12)


def test_shift_rule_and_history():
    c = sample_pair_srg(identity(1), identity(1), 5, 0)
    s = apply_calculus(c, "shift", c=2.0)
    assert np.allclose(s.points, 3.0)
    assert s.history == (("shift", (("c", 2.0),)),)
    with pytest.raises(ValueError):
        apply_calculus(c, "rotate")
    with pytest.raises(ValueError):
        apply_calculus(c, "scale", alpha=0.0, beta=1.0)


def test_subset_check():
    a = PairSrgCloud.from_points([1 + 1j, 1 - 1j, 2.0])
    b = PairSrgCloud.from_points([1 + 1j, 1 - 1j, 2.0, 3.0])
    assert cloud_subset_check(a, b, 1e-12).ok
    r = cloud_subset_check(b, a, 1e-12)
    assert not r.ok
    assert r.offender == 3.0
    assert r.worst_distance == pytest.approx(1.0)
    withinf = PairSrgCloud.from_points([1.0, INF])
    assert not cloud_subset_check(withinf, a, 1e-9).ok
    with pytest.raises(ValueError):
        cloud_subset_check(a, b, 0.0)


def test_csv_export_format():
    c = sample_pair_srg(ideal_diode(), identity(1), 10, 0)
    text = export_csv(c).decode()
    lines = text.splitlines()
    assert lines[0] == "re,im,is_infinity"
    assert lines[-1] == ",,1"
    assert len(lines) == len(c.points) + 2


def test_svg_export():
    c = sample_pair_srg(ideal_diode(), identity(1), 10, 0)
    svg = export_svg(c, HalfPlane(0.0), title="diode")
    assert svg.startswith(b"<svg") or svg.startswith(b"<?xml")
    assert b"&#8734;" in svg
    assert svg == export_svg(c, HalfPlane(0.0), title="diode")
