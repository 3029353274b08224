import numpy as np
import pytest

from inkflow import core


def test_to_model_range_endpoints():
    raw = np.array([[[255], [0]]], dtype=np.uint8)
    out = core.to_model_range(raw)
    assert out[0, 0, 0] == pytest.approx(1.0)
    assert out[0, 1, 0] == pytest.approx(-1.0)


def test_to_model_range_midpoint():
    raw = np.full((2, 2, 1), 127, dtype=np.uint8)
    out = core.to_model_range(raw)
    # 127/127.5 - 1
    assert out[0, 0, 0] == pytest.approx(-0.00392156862745097, abs=1e-7)


def test_to_model_range_rejects_bad_channels():
    with pytest.raises(core.InvalidImageError):
        core.to_model_range(np.zeros((4, 4, 2), dtype=np.uint8))
    with pytest.raises(core.InvalidImageError):
        core.to_model_range(np.zeros((4, 4), dtype=np.uint8))


def test_from_model_range_endpoints():
    img = np.array([[[1.0], [-1.0]]], dtype=np.float32)
    out = core.from_model_range(img)
    assert out[0, 0, 0] == 255
    assert out[0, 1, 0] == 0
    assert out.dtype == np.uint8


def test_from_model_range_clamps_drift():
    img = np.array([[[1.3], [-1.3]]], dtype=np.float32)
    out = core.from_model_range(img)
    assert out[0, 0, 0] == 255
    assert out[0, 1, 0] == 0


def test_round_trip_all_grey_levels():
    raw = np.arange(256, dtype=np.uint8).reshape(16, 16, 1)
    back = core.from_model_range(core.to_model_range(raw))
    assert np.array_equal(raw, back)


def test_to_greyscale_equal_channels_identity():
    img = np.full((4, 4, 3), 0.25, dtype=np.float32)
    grey = core.to_greyscale(img)
    assert grey.shape == (4, 4, 1)
    assert np.allclose(grey[:, :, 0], 0.25, atol=1e-6)


def test_to_greyscale_pure_red():
    img = np.full((2, 2, 3), -1.0, dtype=np.float32)
    img[:, :, 0] = 1.0
    grey = core.to_greyscale(img)
    # 0.299*1 + (0.587 + 0.114)*(-1)
    assert grey[0, 0, 0] == pytest.approx(-0.402, abs=1e-6)


def test_to_greyscale_black():
    img = np.full((2, 2, 3), -1.0, dtype=np.float32)
    assert np.allclose(core.to_greyscale(img), -1.0)


def test_to_greyscale_rejects_single_channel():
    with pytest.raises(core.InvalidImageError):
        core.to_greyscale(np.zeros((4, 4, 1), dtype=np.float32))


def test_greyscale_within_channel_bounds():
    rng = np.random.default_rng(7)
    for _ in range(20):
        img = rng.uniform(-1, 1, size=(8, 8, 3)).astype(np.float32)
        grey = core.to_greyscale(img)[:, :, 0]
        lo = img.min(axis=2)
        hi = img.max(axis=2)
        assert np.all(grey >= lo - 1e-6)
        assert np.all(grey <= hi + 1e-6)


def test_sequence_sample_rejects_mismatched_sizes():
    mk = lambda h, w, c: np.zeros((h, w, c), dtype=np.float32)
    with pytest.raises(core.InvalidImageError):
        core.SequenceSample(
            line_prev=mk(8, 8, 1), gt_prev=mk(8, 8, 3),
            line_curr=mk(8, 8, 1), gt_curr=mk(8, 4, 3),
            hint_curr=mk(8, 8, 3), hint_prev=mk(8, 8, 3),
            is_sequence_start=True)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for c in (1, 3):
        raw = rng.integers(0, 256, size=(16, 12, c), dtype=np.uint8)
        p = tmp_path / f"img{c}.png"
        core.save_png(p, raw)
        assert np.array_equal(core.load_png(p), raw)


def test_tensor_container_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.uniform(-1, 1, size=(5, 7, 3)).astype(np.float32)
    p = tmp_path / "img.inkt"
    core.write_tensor(p, img)
    assert np.array_equal(core.read_tensor(p), img)


def test_tensor_container_layout(tmp_path):
    img = np.zeros((2, 3, 1), dtype=np.float32)
    p = tmp_path / "img.inkt"
    core.write_tensor(p, img)
    blob = p.read_bytes()
    assert blob[:4] == b"INKT"
    assert blob[4:16] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little") + (1).to_bytes(4, "little")
    assert len(blob) == 16 + 2 * 3 * 1 * 4


def test_tensor_container_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.inkt"
    p.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(core.InvalidImageError):
        core.read_tensor(p)


def test_blank_image_is_black():
    img = core.blank_image(4, 6)
    assert img.shape == (4, 6, 3)
    assert np.all(img == -1.0)
