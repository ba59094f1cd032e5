"""Chamfer distance, segmentation metrics, capsule spread."""
import numpy as np
import pytest

from pointcaps.autodiff import ShapeError, Tensor, no_grad, ops
from pointcaps.data.cloud import PointCloud
from pointcaps.metrics import (
    ChamferResult,
    SegMetrics,
    batch_chamfer_loss,
    capsule_spread,
    chamfer,
    chamfer_fast,
    chamfer_loss,
    seg_accuracy,
    seg_metrics,
)
from pointcaps.nn.decoder import Reconstruction


# ----- chamfer fixtures ------------------------------------------------------


def test_single_point_pair_fixture():
    x = np.array([[0.0, 0.0, 0.0]])
    y = np.array([[1.0, 0.0, 0.0]])
    for fn in (chamfer, chamfer_fast):
        res = fn(x, y)
        assert res.value == 2.0
        assert res.term_x_to_y == 1.0 and res.term_y_to_x == 1.0


def test_two_versus_one_point_fixture():
    x = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    y = np.array([[0.0, 0.0, 0.0]])
    for fn in (chamfer, chamfer_fast):
        res = fn(x, y)
        assert res.value == 0.5
        assert res.term_x_to_y == 0.5 and res.term_y_to_x == 0.0


def test_self_distance_is_zero(rng):
    x = rng.uniform(-1, 1, (40, 3))
    assert chamfer(x, x).value == 0.0
    assert chamfer_fast(x, x).value == 0.0


def test_symmetry(rng):
    x = rng.uniform(-1, 1, (20, 3))
    y = rng.uniform(-1, 1, (30, 3))
    a, b = chamfer(x, y), chamfer(y, x)
    assert a.value == b.value
    assert a.term_x_to_y == b.term_y_to_x


def test_value_is_sum_of_terms(rng):
    x = rng.uniform(-1, 1, (15, 3))
    y = rng.uniform(-1, 1, (25, 3))
    res = chamfer(x, y)
    assert res.value == res.term_x_to_y + res.term_y_to_x
    assert res.value >= 0.0


def test_fast_matches_brute_force_on_random_pairs():
    rng = np.random.default_rng(77)
    for _ in range(60):
        n, m = rng.integers(1, 257, size=2)
        x = rng.uniform(-3, 3, (int(n), 3))
        y = rng.uniform(-3, 3, (int(m), 3))
        a, b = chamfer(x, y), chamfer_fast(x, y)
        assert abs(a.value - b.value) < 1e-9
        assert abs(a.term_x_to_y - b.term_x_to_y) < 1e-9


def test_squared_flag():
    x = np.array([[0.0, 0.0, 0.0]])
    y = np.array([[2.0, 0.0, 0.0]])
    assert chamfer(x, y).value == 4.0
    assert chamfer(x, y, squared=True).value == 8.0
    assert chamfer_fast(x, y, squared=True).value == 8.0


def test_accepts_point_clouds():
    a = PointCloud(points=np.array([[0.0, 0.0, 0.0]]))
    b = PointCloud(points=np.array([[1.0, 0.0, 0.0]]))
    assert chamfer(a, b).value == 2.0


def test_empty_and_mismatched_inputs_rejected():
    good = np.zeros((2, 3))
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 3)), good)
    with pytest.raises(ValueError):
        chamfer_fast(good, np.zeros((0, 3)))
    with pytest.raises(ValueError):
        chamfer(np.zeros((2, 2)), good)


# ----- differentiable chamfer ------------------------------------------------


def test_chamfer_loss_matches_metric(rng):
    x = rng.uniform(-1, 1, (12, 3))
    y = rng.uniform(-1, 1, (18, 3))
    with no_grad():
        loss = chamfer_loss(Tensor(x), Tensor(y))
    np.testing.assert_allclose(float(loss.data), chamfer(x, y).value, atol=1e-12)


def test_chamfer_loss_gradient_direction():
    # one point at distance 1 from target: pulling it toward the target
    # is the negative gradient direction
    x = Tensor(np.array([[1.0, 0.0, 0.0]]), requires_grad=True)
    y = Tensor(np.array([[0.0, 0.0, 0.0]]))
    loss = chamfer_loss(x, y)
    loss.backward()
    np.testing.assert_allclose(x.grad, [[2.0, 0.0, 0.0]], atol=1e-12)


def test_batch_chamfer_loss_averages_per_shape(rng):
    recon = rng.uniform(-1, 1, (2, 10, 3))
    target = rng.uniform(-1, 1, (2, 14, 3))
    with no_grad():
        val = float(batch_chamfer_loss(Tensor(recon), target).data)
    expected = np.mean([chamfer(recon[i], target[i]).value for i in range(2)])
    np.testing.assert_allclose(val, expected, rtol=1e-6)


def test_batch_chamfer_loss_shape_mismatch_rejected(rng):
    recon = Tensor(rng.uniform(-1, 1, (2, 10, 3)))
    with pytest.raises(ValueError):
        batch_chamfer_loss(recon, rng.uniform(-1, 1, (3, 10, 3)))


def test_chamfer_terms_empty_set_rejected():
    with pytest.raises(ShapeError):
        ops.chamfer_terms(Tensor(np.zeros((0, 3))), Tensor(np.zeros((2, 3))))


# ----- segmentation metrics --------------------------------------------------


def test_seg_fixture_from_hand_computation():
    res = seg_metrics([0, 0, 1, 1], [0, 1, 1, 1])
    assert res.accuracy == 0.75
    assert res.per_part_iou[0] == 0.5
    assert res.per_part_iou[1] == 2.0 / 3.0
    np.testing.assert_allclose(res.mean_iou, (0.5 + 2.0 / 3.0) / 2.0, atol=1e-12)


def test_seg_identical_labelings():
    res = seg_metrics([0, 1, 2, 1], [0, 1, 2, 1])
    assert res.accuracy == 1.0
    assert res.mean_iou == 1.0


def test_seg_disjoint_labelings():
    res = seg_metrics([0, 0], [1, 1])
    assert res.accuracy == 0.0
    assert res.mean_iou == 0.0


def test_seg_absent_part_convention():
    # part 2 absent from both labelings: full credit in the table, but
    # excluded from the mean (which runs over parts present in either)
    res = seg_metrics([0, 0, 1], [0, 1, 1], part_count=3)
    assert res.per_part_iou[2] == 1.0
    present = [res.per_part_iou[0], res.per_part_iou[1]]
    np.testing.assert_allclose(res.mean_iou, np.mean(present), atol=1e-12)
    assert res.mean_convention == "parts-present"


def test_seg_errors():
    with pytest.raises(ValueError):
        seg_accuracy([0, 1], [0, 1, 1])
    with pytest.raises(ValueError):
        seg_accuracy([], [])


# ----- capsule spread --------------------------------------------------------


def _recon(points, attribution):
    return Reconstruction(
        points=np.asarray(points, dtype=np.float64),
        attribution=np.asarray(attribution),
    )


def test_spread_coincident_points_is_zero():
    rec = _recon([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], [0, 0])
    assert capsule_spread(rec)[0] == 0.0


def test_spread_two_points_unit_distance():
    rec = _recon([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [0, 0])
    np.testing.assert_allclose(capsule_spread(rec), [1.0], atol=1e-12)


def test_spread_unit_equilateral_triangle():
    h = np.sqrt(3.0) / 2.0
    rec = _recon([[0, 0, 0], [1, 0, 0], [0.5, h, 0]], [0, 0, 0])
    np.testing.assert_allclose(capsule_spread(rec), [1.0], atol=1e-12)


def test_spread_single_point_patch_and_ordering():
    h = np.sqrt(3.0) / 2.0
    rec = _recon(
        [[0, 0, 0], [0, 0, 0], [5, 5, 5], [1, 0, 0], [0.5, h, 0]],
        [1, 0, 0, 1, 1],
    )
    out = capsule_spread(rec)
    # capsule 0: one coincident pair plus a far point; capsule 1: triangle
    assert out.shape == (2,)
    np.testing.assert_allclose(out[1], 1.0, atol=1e-12)


def test_spread_lower_for_localized_patches(rng):
    tight = rng.normal(size=(20, 3)) * 0.01
    loose = rng.normal(size=(20, 3)) * 1.0
    rec = _recon(np.concatenate([tight, loose]), [0] * 20 + [1] * 20)
    out = capsule_spread(rec)
    assert out[0] < out[1]
