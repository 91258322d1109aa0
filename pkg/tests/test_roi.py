import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulsebench import roi, synth


# -- boxes ------------------------------------------------------------------------

def test_box_must_fit_in_unit_square():
    with pytest.raises(ValueError):
        roi.RoiBox(0.05, 0.5, 0.2, 0.1)
    with pytest.raises(ValueError):
        roi.RoiBox(0.5, 0.5, 0.0, 0.1)


@given(st.lists(st.one_of(st.floats(-5, 5), st.just(float("nan")), st.just(float("inf"))), min_size=4, max_size=4))
def test_clamp_always_gives_a_valid_box(raw):
    b = roi.clamp_box(raw)
    assert 0 < b.w <= 1 and 0 < b.h <= 1
    assert b.cx - b.w / 2 >= -1e-12 and b.cx + b.w / 2 <= 1 + 1e-12


def test_clamp_pulls_centre_inward():
    b = roi.clamp_box([0.95, 0.5, 0.2, 0.1])
    assert b.cx == pytest.approx(0.9) and b.cy == 0.5


def test_iou_cases():
    a = roi.RoiBox(0.5, 0.5, 0.2, 0.2)
    assert roi.iou(a, a) == pytest.approx(1.0)
    assert roi.iou(a, roi.RoiBox(0.2, 0.2, 0.1, 0.1)) == 0.0
    half = roi.RoiBox(0.55, 0.5, 0.2, 0.2)
    assert roi.iou(a, half) == pytest.approx(0.15 / 0.25)


@given(st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.2, 0.8))
def test_iou_symmetric_and_bounded(x1, y1, x2, y2):
    a, b = roi.RoiBox(x1, y1, 0.3, 0.3), roi.RoiBox(x2, y2, 0.3, 0.3)
    v = roi.iou(a, b)
    assert 0 <= v <= 1 and v == pytest.approx(roi.iou(b, a))


def test_loss_zero_iff_equal(rng):
    y = rng.uniform(size=(5, 4))
    assert roi.roi_loss(y, y) == 0.0
    assert roi.roi_loss(y + 1e-9, y) > 0


# -- resampling ---------------------------------------------------------------------

def test_uniform_region_gives_uniform_patch():
    frame = np.zeros((480, 800, 3))
    frame[100:300, 200:600] = [0.2, 0.5, 0.7]
    p = roi.crop_resize(frame, roi.RoiBox(0.5, 0.4, 0.3, 0.2))
    assert p.shape == (74, 224, 3)
    assert np.allclose(p, [0.2, 0.5, 0.7], atol=1e-12)


def test_aligned_native_size_crop_is_exact(rng):
    frame = rng.uniform(size=(480, 800, 3))
    box = roi.RoiBox((100 + 112) / 800, (50 + 37) / 480, 224 / 800, 74 / 480)
    assert np.array_equal(roi.crop_resize(frame, box), frame[50:124, 100:324])


def test_uint8_and_float_frames_agree(rng):
    frame = rng.integers(0, 256, size=(96, 160, 3), dtype=np.uint8)
    box = roi.RoiBox(0.47, 0.52, 0.31, 0.27)
    assert np.allclose(roi.crop_resize(frame, box), roi.crop_resize(frame / 255.0, box), atol=1e-12)


def test_patch_mean_matches_smooth_region_mean():
    yy, xx = np.mgrid[0:480, 0:800]
    frame = np.stack([0.5 + 0.2 * np.sin(xx / 90.0) * np.cos(yy / 70.0)] * 3, axis=-1)
    box = roi.RoiBox(0.5, 0.45, 0.3, 0.2)
    x0, y0, x1, y1 = (int(v) for v in box.corners_px(800, 480))
    assert abs(roi.crop_resize(frame, box).mean() - frame[y0:y1, x0:x1].mean()) < 1e-3


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_patch_shape_is_fixed(w, h):
    frame = np.full((48, 80, 3), 0.3)
    p = roi.crop_resize(frame, roi.clamp_box([0.5, 0.5, w, h]))
    assert p.shape == (74, 224, 3) and p.min() >= 0 and p.max() <= 1


def test_degenerate_box_is_rejected():
    with pytest.raises(roi.DegenerateBoxError):
        roi.crop_resize(np.zeros((48, 80, 3)), roi.RoiBox(0.5, 0.5, 0.002, 0.5))


def test_thumbnail_fast_path_matches_general_path(rng):
    frame = rng.integers(0, 256, size=(480, 800, 3), dtype=np.uint8)
    fast = roi.thumbnail(frame)
    slow = (roi.area_resize(frame / 255.0, 48, 80) @ roi.GRAY).reshape(-1)
    assert fast.shape == (3840,) and np.allclose(fast, slow, atol=1e-12)


@given(st.integers(10, 60), st.integers(10, 60))
def test_area_resize_preserves_mean(h, w):
    img = np.random.default_rng(h * 100 + w).uniform(size=(h * 3 + 1, w * 2 + 3, 3))
    out = roi.area_resize(img, h, w)
    assert np.allclose(out.mean(axis=(0, 1)), img.mean(axis=(0, 1)), atol=1e-12)


# -- localiser ------------------------------------------------------------------------

def small_corpus(n, seed=0):
    frames, boxes = zip(*synth.roi_corpus(n, seed, frame_w=160, frame_h=96))
    return np.stack([roi.thumbnail(f) for f in frames]), np.stack(boxes)


def test_single_frame_overfit():
    x, y = small_corpus(1)
    model = roi.train_roi(x, y, roi.RoiHyper(epochs=300, batch_size=1))
    assert np.linalg.norm(model.raw_predict(x)[0] - y[0]) < 1e-3


def test_constant_labels_pull_predictions_to_that_box():
    # batch statistics differ per minibatch, so SGD settles near the constant, not on it
    x, _ = small_corpus(64, seed=2)
    c = [0.45, 0.5, 0.28, 0.154]
    model = roi.train_roi(x, np.tile(c, (64, 1)), roi.RoiHyper(epochs=100))
    pred = model.raw_predict(x)
    assert np.abs(pred.mean(axis=0) - c).max() < 0.02
    assert np.mean([roi.iou(roi.clamp_box(p), roi.RoiBox(*c)) for p in pred]) > 0.6


def test_training_reduces_loss_and_detection_is_clamped():
    x, y = small_corpus(200, seed=3)
    model = roi.train_roi(x, y, roi.RoiHyper(epochs=15))
    assert model.loss_curve[-1] < model.loss_curve[0]
    frame = next(synth.roi_corpus(1, 99, frame_w=160, frame_h=96))[0]
    a, b = roi.detect_roi(model, frame), roi.detect_roi(model, frame)
    assert a == b and isinstance(a, roi.RoiBox)
    model.target_mean = np.array([5.0, -3.0, 2.0, 0.5])
    wild = roi.detect_roi(model, frame)
    assert 0 <= wild.cx - wild.w / 2 and wild.cx + wild.w / 2 <= 1


def test_model_round_trip(tmp_path):
    x, y = small_corpus(30, seed=4)
    model = roi.train_roi(x, y, roi.RoiHyper(epochs=2))
    roi.save_roi_model(model, tmp_path / "r.w")
    loaded = roi.load_roi_model(tmp_path / "r.w")
    assert np.array_equal(model.raw_predict(x), loaded.raw_predict(x))
    assert loaded.hyper.learning_rate == 0.004 and loaded.hyper.momentum == 0.9
    assert loaded.hyper.weight_decay == 0.00005


def test_label_file_round_trip(tmp_path, rng):
    boxes = rng.uniform(0.2, 0.3, size=(4, 4))
    roi.write_labels(tmp_path / "l.json", boxes)
    assert np.array_equal(roi.read_labels(tmp_path / "l.json"), boxes)
