"""
Visual Features

Mouth-image normalization, +/- 2 frame visual context stacks, audio/video stream
alignment, lip-opening estimation and PPM/PGM image I/O.

A mouth image is 16 (h) x 24 (w) x 3 (RGB). Context stacks put the five frames
along the channel axis, frame-major: channels 0-2 are frame t-2, 6-8 frame t.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from shared import AVSEError, CONTEXT, IMG_C, IMG_H, IMG_W

logger = logging.getLogger('avse')

STD_FLOOR = 1e-8
DIFF_GAIN = 10.0          # difference images are magnified ten times
DARK_LEVEL = 0.3          # mean RGB below this counts as mouth interior

PathLike = Union[str, Path]


@dataclass
class MouthImage:
    """One mouth crop; raw pixels in [0, 1] or a per-image normalized copy."""
    pixels: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.shape != (IMG_H, IMG_W, IMG_C):
            raise VisualError(f"Mouth image must be {IMG_H}x{IMG_W}x{IMG_C}, got {self.pixels.shape}")
        if not self.normalized and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise VisualError("Raw mouth pixels must lie in [0, 1]")


@dataclass
class ImageStats:
    """Per-image mean/std, one entry per frame, kept to undo normalization."""
    mean: np.ndarray
    std: np.ndarray


def _as_stack(seq: Union[np.ndarray, Sequence[MouthImage]]) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        arr = seq.astype(np.float32, copy=False)
    else:
        arr = np.stack([img.pixels for img in seq]) if len(seq) else np.zeros((0, IMG_H, IMG_W, IMG_C), np.float32)
    if arr.ndim != 4 or arr.shape[1:] != (IMG_H, IMG_W, IMG_C):
        raise VisualError(f"Expected N x {IMG_H} x {IMG_W} x {IMG_C} images, got {arr.shape}")
    return arr


# ============================================================================
# NORMALIZATION / CONTEXT
# ============================================================================

def normalize_image(img: MouthImage) -> MouthImage:
    """Mean 0 / std 1 over all 16x24x3 values of one image."""
    if img.normalized:
        return img
    x = img.pixels.astype(np.float64)
    std = max(float(x.std()), STD_FLOOR)
    return MouthImage((x - x.mean()) / std, normalized=True)


def normalize_images(seq) -> Tuple[np.ndarray, ImageStats]:
    """Vectorized normalize_image over a sequence; returns N x 16 x 24 x 3 and the stats."""
    arr = _as_stack(seq).astype(np.float64)
    mean = arr.mean(axis=(1, 2, 3))
    std = np.maximum(arr.std(axis=(1, 2, 3)), STD_FLOOR)
    out = (arr - mean[:, None, None, None]) / std[:, None, None, None]
    return out, ImageStats(mean=mean, std=std)


def denormalize_images(normalized: np.ndarray, stats: ImageStats) -> np.ndarray:
    """Undo normalize_images and clip back to the raw [0, 1] range."""
    normalized = np.asarray(normalized, dtype=np.float64).reshape(-1, IMG_H, IMG_W, IMG_C)
    raw = normalized * stats.std[:, None, None, None] + stats.mean[:, None, None, None]
    return np.clip(raw, 0.0, 1.0)


def visual_context(seq, t: int) -> np.ndarray:
    """16 x 24 x 15 stack of frames t-2..t+2 (edge replicated), frame-major channels."""
    arr = _as_stack(seq)
    if arr.shape[0] == 0:
        raise VisualError("visual_context needs a non-empty sequence")
    idx = np.clip(np.arange(t - CONTEXT, t + CONTEXT + 1), 0, arr.shape[0] - 1)
    return np.concatenate([arr[i] for i in idx], axis=2)


def visual_stacks(seq) -> np.ndarray:
    """visual_context for every t at once: T x 16 x 24 x 15."""
    arr = _as_stack(seq)
    n = arr.shape[0]
    if n == 0:
        raise VisualError("visual_stacks needs a non-empty sequence")
    offsets = np.arange(-CONTEXT, CONTEXT + 1)
    idx = np.clip(np.arange(n)[:, None] + offsets[None, :], 0, n - 1)     # T x 5
    frames = arr[idx]                                                    # T x 5 x H x W x C
    return np.ascontiguousarray(frames.transpose(0, 2, 3, 1, 4).reshape(n, IMG_H, IMG_W, -1))


def central_frames(stacks: np.ndarray) -> np.ndarray:
    """Pull the t-th RGB frame (channels 6-8) out of T x 16 x 24 x 15 stacks."""
    c0 = CONTEXT * IMG_C
    return stacks[..., c0:c0 + IMG_C]


def align_streams(audio_t: int, video_t: int) -> int:
    """Common length of the audio-frame and video-frame streams (truncation)."""
    if audio_t < 1 or video_t < 1:
        raise VisualError(f"Both streams need at least one frame, got audio={audio_t}, video={video_t}")
    return min(audio_t, video_t)


# ============================================================================
# LIP ACTIVITY
# ============================================================================

def mouth_opening(images) -> np.ndarray:
    """Opening height in pixels per frame: dark interior rows in the central columns."""
    arr = _as_stack(images)
    centre = arr[:, :, IMG_W // 2 - 2:IMG_W // 2 + 2, :].mean(axis=3)    # N x H x 4
    dark = (centre < DARK_LEVEL).mean(axis=2)                            # N x H
    return dark.sum(axis=1)


def visual_activity(images, threshold: float = 3.0) -> np.ndarray:
    """Boolean lip-activity mask: the mouth counts as open above threshold pixels."""
    return mouth_opening(images) > threshold


def difference_image(inp: np.ndarray, out: np.ndarray, gain: float = DIFF_GAIN) -> np.ndarray:
    """Input minus output, magnified and centred on mid-grey."""
    return np.clip(0.5 + gain * (np.asarray(inp, np.float64) - np.asarray(out, np.float64)), 0.0, 1.0)


# ============================================================================
# IMAGE FILES
# ============================================================================

def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path: PathLike, pixels: np.ndarray) -> Path:
    """Binary PPM (P6, maxval 255)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(pixels)).save(path, format='PPM')
    return path


def read_ppm(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise VisualError(f"Image not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert('RGB'), dtype=np.float32) / 255.0
    if arr.shape != (IMG_H, IMG_W, IMG_C):
        raise VisualError(f"{path.name}: expected {IMG_W}x{IMG_H} mouth crop, got {arr.shape[1]}x{arr.shape[0]}")
    return arr


def write_pgm(path: PathLike, gray: np.ndarray) -> Path:
    """Binary PGM (P5, maxval 255) from values in [0, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(gray)).save(path, format='PPM')
    return path


def read_frames(frame_dir: PathLike, limit: int = 0) -> np.ndarray:
    """All *.ppm frames of a directory in index order (N x 16 x 24 x 3)."""
    frame_dir = Path(frame_dir)
    files: List[Path] = sorted(frame_dir.glob("*.ppm"))
    if limit:
        files = files[:limit]
    if not files:
        raise VisualError(f"No PPM frames in {frame_dir}")
    return np.stack([read_ppm(f) for f in files])


def write_frames(frame_dir: PathLike, images: np.ndarray, name_fmt: str = "{:05d}.ppm") -> int:
    frame_dir = Path(frame_dir)
    frame_dir.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        write_ppm(frame_dir / name_fmt.format(i), img)
    return len(images)


class VisualError(AVSEError):
    """Raised on malformed mouth images or streams."""
    pass
