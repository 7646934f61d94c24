import numpy as np
import pytest

from shared import IMG_C, IMG_H, IMG_W
from utils.corpus import MAX_OPENING, MIN_OPENING, render_mouth
from utils.visual import (
    MouthImage, VisualError, align_streams, central_frames, denormalize_images, difference_image,
    mouth_opening, normalize_image, normalize_images, read_ppm, visual_activity, visual_context,
    visual_stacks, write_frames, write_pgm, write_ppm, read_frames,
)


def _images(n, seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, (n, IMG_H, IMG_W, IMG_C)).astype(np.float32)


# ============================================================================
# Normalization
# ============================================================================


class TestNormalization:
    def test_single_image(self):
        img = normalize_image(MouthImage(_images(1)[0]))
        assert img.normalized
        assert float(img.pixels.mean()) == pytest.approx(0.0, abs=1e-5)
        assert float(img.pixels.std()) == pytest.approx(1.0, abs=1e-4)

    def test_vectorized_matches_single(self):
        imgs = _images(4)
        batch, _ = normalize_images(imgs)
        one = normalize_image(MouthImage(imgs[2])).pixels
        assert np.allclose(batch[2], one, atol=1e-5)

    def test_denormalize_inverts(self):
        imgs = _images(3)
        norm, stats = normalize_images(imgs)
        assert np.allclose(denormalize_images(norm, stats), imgs, atol=1e-6)

    def test_denormalize_clips(self):
        imgs = _images(2)
        _, stats = normalize_images(imgs)
        wild = np.full((2, IMG_H * IMG_W * IMG_C), 100.0)
        out = denormalize_images(wild, stats)
        assert out.shape == (2, IMG_H, IMG_W, IMG_C)
        assert out.max() == 1.0

    def test_flat_image_stays_finite(self):
        norm, _ = normalize_images(np.full((1, IMG_H, IMG_W, IMG_C), 0.4, np.float32))
        assert np.all(np.isfinite(norm))

    def test_bad_shape(self):
        with pytest.raises(VisualError, match="Mouth image must be"):
            MouthImage(np.zeros((IMG_W, IMG_H, IMG_C)))

    def test_raw_range_checked(self):
        with pytest.raises(VisualError, match=r"\[0, 1\]"):
            MouthImage(np.full((IMG_H, IMG_W, IMG_C), 2.0))


# ============================================================================
# Context stacks / alignment
# ============================================================================


class TestContext:
    def test_stack_shape(self):
        stacks = visual_stacks(_images(6))
        assert stacks.shape == (6, IMG_H, IMG_W, 15)

    def test_frame_major_channels(self):
        imgs = _images(6)
        stacks = visual_stacks(imgs)
        assert np.array_equal(stacks[3][..., 0:3], imgs[1])
        assert np.array_equal(stacks[3][..., 6:9], imgs[3])
        assert np.array_equal(stacks[3][..., 12:15], imgs[5])

    def test_central_frames(self):
        imgs = _images(5)
        assert np.array_equal(central_frames(visual_stacks(imgs)), imgs)

    def test_edge_replication(self):
        imgs = _images(2)
        stack = visual_context(imgs, 0)
        assert np.array_equal(stack[..., 0:3], imgs[0])
        assert np.array_equal(stack[..., 3:6], imgs[0])
        assert np.array_equal(stack[..., 12:15], imgs[1])

    def test_context_matches_stacks(self):
        imgs = _images(7)
        stacks = visual_stacks(imgs)
        for t in (0, 3, 6):
            assert np.array_equal(visual_context(imgs, t), stacks[t])

    def test_empty_sequence(self):
        with pytest.raises(VisualError, match="non-empty"):
            visual_stacks(np.zeros((0, IMG_H, IMG_W, IMG_C), np.float32))

    def test_align_truncates(self):
        assert align_streams(50, 48) == 48
        assert align_streams(10, 12) == 10

    def test_align_empty(self):
        with pytest.raises(VisualError, match="at least one frame"):
            align_streams(0, 5)


# ============================================================================
# Lip activity / difference images
# ============================================================================


class TestLipActivity:
    def test_opening_grows_with_mouth(self):
        shapes = np.stack([render_mouth(h) for h in np.linspace(MIN_OPENING, MAX_OPENING, 5)])
        openings = mouth_opening(shapes)
        assert np.all(np.diff(openings) >= 0)
        assert openings[-1] > openings[0]

    def test_activity_mask(self):
        shapes = np.stack([render_mouth(MIN_OPENING), render_mouth(MAX_OPENING)])
        assert list(visual_activity(shapes)) == [False, True]

    def test_difference_of_identical_is_grey(self):
        imgs = _images(2)
        assert np.allclose(difference_image(imgs, imgs), 0.5)

    def test_difference_is_magnified(self):
        a = np.full((1, IMG_H, IMG_W, IMG_C), 0.52)
        b = np.full((1, IMG_H, IMG_W, IMG_C), 0.50)
        assert np.allclose(difference_image(a, b), 0.7)


# ============================================================================
# Image files
# ============================================================================


class TestImageFiles:
    def test_ppm_round_trip(self, tmp_path):
        img = _images(1)[0]
        back = read_ppm(write_ppm(tmp_path / "a.ppm", img))
        assert back.shape == (IMG_H, IMG_W, IMG_C)
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-6

    def test_ppm_header(self, tmp_path):
        path = write_ppm(tmp_path / "a.ppm", _images(1)[0])
        assert path.read_bytes()[:2] == b'P6'

    def test_pgm_header(self, tmp_path):
        path = write_pgm(tmp_path / "s.pgm", np.linspace(0, 1, 40).reshape(8, 5))
        assert path.read_bytes()[:2] == b'P5'

    def test_wrong_size_rejected(self, tmp_path):
        big = np.zeros((IMG_H * 2, IMG_W * 2, IMG_C))
        path = write_ppm(tmp_path / "big.ppm", big)
        with pytest.raises(VisualError, match="expected"):
            read_ppm(path)

    def test_frames_in_order(self, tmp_path):
        imgs = np.stack([np.full((IMG_H, IMG_W, IMG_C), v) for v in (0.0, 0.5, 1.0)])
        assert write_frames(tmp_path / "f", imgs) == 3
        back = read_frames(tmp_path / "f")
        assert np.allclose(back[:, 0, 0, 0], [0.0, 128 / 255, 1.0])

    def test_no_frames(self, tmp_path):
        with pytest.raises(VisualError, match="No PPM frames"):
            read_frames(tmp_path)
