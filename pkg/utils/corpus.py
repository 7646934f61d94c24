"""
Synthetic Audio-Visual Corpus

Generates paired speech-like audio and mouth-image sequences that share one
articulation envelope, plus a handful of synthetic noise types for mixing.
Everything is a pure function of a SynthCorpusSpec and its seed.

Audio and video are frame-synchronous: image n covers samples [n*320, (n+1)*320),
i.e. 50 images per second of 16 kHz audio.
"""

import csv
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from shared import (
    CORPUS_MANIFEST, FRAME_NAME, HOP, IMG_C, IMG_H, IMG_W, MIX_MANIFEST, SAMPLE_RATE, VIDEO_FPS,
)
from utils.dsp import Waveform
from utils.config import dataclass_from_mapping
from utils.visual import VisualError, write_frames
from utils.wavio import write_wav

logger = logging.getLogger('avse')

# Rendering
SKIN_RGB = np.array([0.85, 0.65, 0.55])
LIP_RGB = np.array([0.65, 0.25, 0.25])
INTERIOR_RGB = np.array([0.08, 0.03, 0.03])
MOUTH_CX = (IMG_W - 1) / 2.0
MOUTH_CY = (IMG_H - 1) / 2.0
MOUTH_RX = 8.0
LIP_THICKNESS = 2.0
MIN_OPENING = 0.3         # inner half-height of a closed mouth, pixels
MAX_OPENING = 5.5         # inner half-height of a fully open mouth, pixels
SUPERSAMPLE = 4

NOISE_KINDS = ("white", "pink", "brown", "hum", "babble", "siren", "clicks", "engine")
NOISE_RMS = 0.1
MAX_HARMONIC_HZ = 4000.0
EDGE_SILENCE_MAX_FRACTION = 0.2   # edge silence never exceeds this share of the utterance

PathLike = Union[str, Path]


@dataclass
class SynthCorpusSpec:
    """Knobs for the synthetic corpus."""
    n_utterances: int = 60
    duration_s: float = 3.0
    seed: int = 0
    articulation_hz: float = 4.0
    f0_hz: float = 140.0
    silence_prob: float = 0.3
    edge_silence_s: float = 0.3
    prefix: str = "utt"

    def __post_init__(self):
        if self.n_utterances < 1 or self.duration_s <= 0:
            raise CorpusError(f"Need positive counts/durations, got n={self.n_utterances}, duration={self.duration_s}")
        if self.articulation_hz <= 0 or self.f0_hz <= 0:
            raise CorpusError("Articulation rate and carrier fundamental must be positive")
        if not 0.0 <= self.silence_prob <= 1.0:
            raise CorpusError(f"silence_prob must be in [0, 1], got {self.silence_prob}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Dict[str, str]) -> 'SynthCorpusSpec':
        return dataclass_from_mapping(cls, data, strict=False, prefix="synth.")


@dataclass
class SynthUtterance:
    """One generated utterance with its mouth frames."""
    utterance_id: str
    waveform: Waveform
    images: np.ndarray        # N x 16 x 24 x 3, 8-bit quantized, in [0, 1]
    envelope: np.ndarray      # per-sample articulation a(t) in [0, 1]
    openings: np.ndarray      # per-frame inner half-height, pixels

    @property
    def n_frames(self) -> int:
        return int(self.images.shape[0])


@dataclass
class CorpusEntry:
    """One row of corpus.csv with paths resolved against the manifest directory."""
    utterance_id: str
    wav_path: Path
    frame_dir: Path
    n_frames: int


# ============================================================================
# ENVELOPE / AUDIO / IMAGES
# ============================================================================

def articulation_envelope(n_samples: int, rng: np.random.Generator, rate_hz: float,
                          silence_prob: float, edge_silence_s: float = 0.0,
                          sr: int = SAMPLE_RATE) -> np.ndarray:
    """
    Smooth random gate in [0, 1]: raised-cosine interpolation between random knots.
    Edge silence is capped at EDGE_SILENCE_MAX_FRACTION of the duration, and at least
    one knot stays voiced so short utterances are never silent.
    """
    duration = n_samples / sr
    edge = min(edge_silence_s, EDGE_SILENCE_MAX_FRACTION * duration)
    n_knots = int(np.ceil(duration * rate_hz)) + 2
    knots = rng.uniform(0.35, 1.0, n_knots)
    knots[rng.random(n_knots) < silence_prob] = 0.0
    knot_times = np.arange(n_knots) / rate_hz
    active = (knot_times >= edge) & (knot_times <= duration - edge)
    knots[~active] = 0.0
    if not np.any(knots > 0.0):
        candidates = np.flatnonzero(active) if np.any(active) else np.arange(n_knots)
        mid = candidates[np.argmin(np.abs(knot_times[candidates] - duration / 2))]
        knots[mid] = rng.uniform(0.35, 1.0)

    pos = np.arange(n_samples) / sr * rate_hz
    k = np.floor(pos).astype(int)
    frac = pos - k
    s = 0.5 - 0.5 * np.cos(np.pi * frac)
    return knots[k] * (1.0 - s) + knots[k + 1] * s


def harmonic_tone(n_samples: int, rng: np.random.Generator, f0_hz: float, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Voiced-like carrier: 1/k harmonics below 4 kHz with a slow pitch contour."""
    t = np.arange(n_samples) / sr
    f0 = f0_hz * rng.uniform(0.85, 1.15)
    contour = f0 * (1.0 + 0.05 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(contour) / sr
    n_harm = max(1, int(MAX_HARMONIC_HZ // (f0 * 1.05)))
    k = np.arange(1, n_harm + 1)
    tone = (np.sin(np.outer(phase, k)) / k).sum(axis=1)
    return tone / (1.0 / k).sum()


def render_mouth(opening: float, skin_rgb: np.ndarray = SKIN_RGB) -> np.ndarray:
    """16 x 24 x 3 ellipse mouth, inner half-height = opening pixels, 8-bit quantized."""
    ss = SUPERSAMPLE
    yy = (np.arange(IMG_H * ss) + 0.5) / ss - 0.5
    xx = (np.arange(IMG_W * ss) + 0.5) / ss - 0.5
    dy, dx = np.meshgrid(yy - MOUTH_CY, xx - MOUTH_CX, indexing='ij')

    inner = (dx / MOUTH_RX) ** 2 + (dy / opening) ** 2 <= 1.0
    outer = (dx / (MOUTH_RX + LIP_THICKNESS)) ** 2 + (dy / (opening + LIP_THICKNESS)) ** 2 <= 1.0

    def coverage(mask: np.ndarray) -> np.ndarray:
        return mask.reshape(IMG_H, ss, IMG_W, ss).mean(axis=(1, 3))[..., None]

    c_in, c_out = coverage(inner), coverage(outer)
    img = skin_rgb * (1.0 - c_out) + LIP_RGB * (c_out - c_in) + INTERIOR_RGB * c_in
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def frame_openings(envelope: np.ndarray, n_frames: int) -> np.ndarray:
    """Per-video-frame mean articulation mapped to inner half-height in pixels."""
    per_frame = envelope[:n_frames * HOP].reshape(n_frames, HOP).mean(axis=1)
    return MIN_OPENING + (MAX_OPENING - MIN_OPENING) * per_frame


def synth_utterance(spec: SynthCorpusSpec, index: int) -> SynthUtterance:
    """Utterance `index` of the corpus; independent of every other index."""
    rng = np.random.default_rng([spec.seed, index])
    n_frames = max(1, int(round(spec.duration_s * VIDEO_FPS)))
    n_samples = n_frames * HOP

    envelope = articulation_envelope(
        n_samples, rng, spec.articulation_hz, spec.silence_prob, spec.edge_silence_s,
    )
    audio = 0.5 * envelope * harmonic_tone(n_samples, rng, spec.f0_hz)

    skin = np.clip(SKIN_RGB + rng.normal(0.0, 0.03, 3), 0.0, 1.0)
    openings = frame_openings(envelope, n_frames)
    images = np.stack([render_mouth(h, skin) for h in openings]).astype(np.float32)

    return SynthUtterance(
        utterance_id=f"{spec.prefix}{index:04d}",
        waveform=Waveform(audio, SAMPLE_RATE),
        images=images,
        envelope=envelope,
        openings=openings,
    )


def synth_corpus(spec: SynthCorpusSpec) -> List[SynthUtterance]:
    return [synth_utterance(spec, i) for i in range(spec.n_utterances)]


def fake_mouth_shapes(n: int = 8) -> np.ndarray:
    """n constant mouth images from closed to wide open (n x 16 x 24 x 3)."""
    if n < 1:
        raise CorpusError(f"Need at least one fake shape, got {n}")
    return np.stack([render_mouth(h) for h in np.linspace(MIN_OPENING, MAX_OPENING, n)]).astype(np.float32)


# ============================================================================
# NOISE
# ============================================================================

def _shaped_noise(n: int, rng: np.random.Generator, exponent: float) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.shape[0], dtype=np.float64)
    f[0] = 1.0
    return np.fft.irfft(spec / f ** exponent, n=n)


def synth_noise(kind: str, n: int, rng: np.random.Generator, sr: int = SAMPLE_RATE) -> np.ndarray:
    """One of NOISE_KINDS, scaled to RMS 0.1."""
    t = np.arange(n) / sr
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        x = _shaped_noise(n, rng, 0.5)
    elif kind == "brown":
        x = _shaped_noise(n, rng, 1.0)
    elif kind == "hum":
        base = rng.uniform(48.0, 62.0)
        x = sum(np.sin(2 * np.pi * base * h * t + rng.uniform(0, 2 * np.pi)) / h for h in range(1, 8))
        x = x + 0.05 * rng.standard_normal(n)
    elif kind == "babble":
        x = np.zeros(n)
        for _ in range(4):
            env = articulation_envelope(n, rng, rng.uniform(3.0, 5.0), 0.3, 0.0, sr)
            x += env * harmonic_tone(n, rng, rng.uniform(100.0, 240.0), sr)
    elif kind == "siren":
        sweep = 900.0 + 300.0 * np.sin(2 * np.pi * rng.uniform(0.3, 0.6) * t)
        x = np.sin(2 * np.pi * np.cumsum(sweep) / sr)
    elif kind == "clicks":
        x = np.zeros(n)
        pos = rng.integers(0, n, size=max(1, n // 800))
        x[pos] = rng.choice([-1.0, 1.0], size=pos.shape[0])
        x = np.convolve(x, np.exp(-np.arange(40) / 6.0), mode='same')
    elif kind == "engine":
        rpm = rng.uniform(20.0, 40.0)
        x = _shaped_noise(n, rng, 1.0) * (1.0 + 0.8 * np.sin(2 * np.pi * rpm * t))
    else:
        raise CorpusError(f"Unknown noise kind '{kind}', expected one of {NOISE_KINDS}")

    rms = float(np.sqrt(np.mean(x ** 2)))
    if rms <= 0:
        raise CorpusError(f"Noise '{kind}' came out silent")
    return x * (NOISE_RMS / rms)


def write_noises(out_dir: PathLike, kinds=NOISE_KINDS, duration_s: float = 10.0, seed: int = 0) -> List[Path]:
    out_dir = Path(out_dir)
    n = int(duration_s * SAMPLE_RATE)
    paths = []
    for i, kind in enumerate(kinds):
        rng = np.random.default_rng([seed, 7919, i])
        paths.append(write_wav(out_dir / f"{kind}.wav", Waveform(synth_noise(kind, n, rng), SAMPLE_RATE)))
    logger.info(f"SYNTH | wrote {len(paths)} noise files to {out_dir}")
    return paths


# ============================================================================
# MANIFEST
# ============================================================================

MANIFEST_FIELDS = ("utterance_id", "wav_path", "frame_dir", "n_frames")


def write_utterance(out_dir: PathLike, utt: SynthUtterance) -> Dict[str, str]:
    """WAV + PPM frames for one utterance; returns its manifest row (relative paths)."""
    out_dir = Path(out_dir)
    wav_rel = Path("wav") / f"{utt.utterance_id}.wav"
    frames_rel = Path("frames") / utt.utterance_id
    write_wav(out_dir / wav_rel, utt.waveform)
    write_frames(out_dir / frames_rel, utt.images, FRAME_NAME)
    return {
        "utterance_id": utt.utterance_id,
        "wav_path": wav_rel.as_posix(),
        "frame_dir": frames_rel.as_posix(),
        "n_frames": str(utt.n_frames),
    }


def write_corpus_manifest(out_dir: PathLike, rows: List[Dict[str, str]]) -> Path:
    path = Path(out_dir) / CORPUS_MANIFEST
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_corpus(out_dir: PathLike, utterances: Sequence[SynthUtterance]) -> Path:
    """Write every utterance and the corpus.csv listing them."""
    return write_corpus_manifest(out_dir, [write_utterance(out_dir, utt) for utt in utterances])


def read_corpus_manifest(path: PathLike) -> List[CorpusEntry]:
    path = Path(path)
    if path.is_dir():
        path = path / CORPUS_MANIFEST
    if not path.exists():
        raise CorpusError(f"Corpus manifest not found: {path}")
    entries = []
    with open(path, newline='', encoding='utf-8') as f:
        for row in csv.DictReader(f):
            try:
                entries.append(CorpusEntry(
                    utterance_id=row["utterance_id"],
                    wav_path=path.parent / row["wav_path"],
                    frame_dir=path.parent / row["frame_dir"],
                    n_frames=int(row["n_frames"]),
                ))
            except (KeyError, ValueError) as e:
                raise CorpusError(f"{path}: malformed row {row}: {e}") from e
    return entries


@dataclass
class MixEntry:
    """One row of mix.csv; paths are resolved against the manifest directory."""
    mix_id: str
    utterance_id: str
    clean_wav: Path
    frame_dir: Path
    noisy_wav: Path
    noise: str
    ambient: str
    sir_db: float
    sar_db: float
    achieved_sir_db: float = float("nan")
    achieved_sar_db: float = float("nan")

    def to_row(self, base: Path) -> Dict[str, str]:
        return {
            "mix_id": self.mix_id,
            "utterance_id": self.utterance_id,
            "clean_wav": _relative(self.clean_wav, base),
            "frame_dir": _relative(self.frame_dir, base),
            "noisy_wav": _relative(self.noisy_wav, base),
            "noise": self.noise,
            "ambient": self.ambient,
            "sir_db": f"{self.sir_db:g}",
            "sar_db": f"{self.sar_db:g}",
            "achieved_sir_db": f"{self.achieved_sir_db:.4f}",
            "achieved_sar_db": f"{self.achieved_sar_db:.4f}",
        }


MIX_FIELDS = (
    "mix_id", "utterance_id", "clean_wav", "frame_dir", "noisy_wav", "noise", "ambient",
    "sir_db", "sar_db", "achieved_sir_db", "achieved_sar_db",
)


def _relative(path: Path, base: Path) -> str:
    return Path(os.path.relpath(Path(path).resolve(), Path(base).resolve())).as_posix()


def write_mix_manifest(out_dir: PathLike, entries: List[MixEntry]) -> Path:
    out_dir = Path(out_dir)
    path = out_dir / MIX_MANIFEST
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=MIX_FIELDS)
        writer.writeheader()
        writer.writerows(e.to_row(out_dir) for e in entries)
    return path


def read_mix_manifest(path: PathLike) -> List[MixEntry]:
    path = Path(path)
    if path.is_dir():
        path = path / MIX_MANIFEST
    if not path.exists():
        raise CorpusError(f"Mix manifest not found: {path}")
    base = path.parent
    entries = []
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        for row in reader:
            try:
                entries.append(MixEntry(
                    mix_id=row["mix_id"],
                    utterance_id=row["utterance_id"],
                    clean_wav=base / row["clean_wav"],
                    frame_dir=base / row["frame_dir"],
                    noisy_wav=base / row["noisy_wav"],
                    noise=row["noise"],
                    ambient=row["ambient"],
                    sir_db=float(row["sir_db"]),
                    sar_db=float(row["sar_db"]),
                    achieved_sir_db=float(row.get("achieved_sir_db") or "nan"),
                    achieved_sar_db=float(row.get("achieved_sar_db") or "nan"),
                ))
            except (KeyError, ValueError) as e:
                raise CorpusError(f"{path}:{reader.line_num}: malformed row: {e}") from e
    return entries


class CorpusError(VisualError):
    """Raised for invalid corpus specs or manifests."""
    pass
