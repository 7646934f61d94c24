"""
DSP Utility

Audio analysis and synthesis for the enhancement pipeline: STFT log-power features,
per-utterance normalization, context windows, SIR/SAR mixing and noisy-phase
resynthesis by weighted overlap-add.
"""

import logging
from dataclasses import dataclass
from math import gcd
from typing import Optional, Tuple

import numpy as np
from scipy import signal

from shared import (
    AVSEError, CONTEXT, HOP, N_BINS, SAMPLE_RATE, WINDOW_LEN,
)

logger = logging.getLogger('avse')

# Configuration
POWER_FLOOR = 1e-12       # floor inside the log, keeps silence finite
STD_FLOOR = 1e-8          # floor for per-bin standard deviation
RESAMPLE_WINDOW = ('kaiser', 8.0)
WOLA_FLOOR = 1e-10        # summed squared window below this is treated as uncovered

_WINDOW = signal.get_window('hann', WINDOW_LEN, fftbins=True)


# ============================================================================
# TYPES
# ============================================================================

@dataclass
class Waveform:
    """Mono PCM samples at a fixed rate."""
    samples: np.ndarray
    rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.rate <= 0:
            raise DSPError(f"Sample rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DSPError("Waveform contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / self.rate


@dataclass
class SpectroFrames:
    """Per-frame log-power spectra and phase (T x 257 each)."""
    logpow: np.ndarray
    phase: np.ndarray
    window_len: int = WINDOW_LEN
    hop: int = HOP

    def __post_init__(self):
        if self.logpow.shape != self.phase.shape:
            raise DSPError(f"logpow {self.logpow.shape} and phase {self.phase.shape} differ")
        if self.logpow.ndim != 2 or self.logpow.shape[1] != self.window_len // 2 + 1:
            raise DSPError(f"Expected T x {self.window_len // 2 + 1} frames, got {self.logpow.shape}")

    @property
    def n_frames(self) -> int:
        return int(self.logpow.shape[0])

    @property
    def magnitude(self) -> np.ndarray:
        return np.exp(self.logpow / 2.0)


@dataclass
class NormStats:
    """Per-frequency-bin mean and (floored) std of one utterance."""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, n_bins: int = N_BINS) -> 'NormStats':
        return cls(mean=np.zeros(n_bins), std=np.ones(n_bins))


@dataclass
class MixSpec:
    """How one clean utterance is corrupted."""
    sir_db: float
    sar_db: float
    interference_id: str = "interference"
    ambient_id: str = "ambient"
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.sir_db) and np.isfinite(self.sar_db)):
            raise DSPError(f"SIR/SAR must be finite, got {self.sir_db}/{self.sar_db}")


@dataclass
class MixResult:
    """Noisy mixture plus the scaled components that built it."""
    noisy: Waveform
    interference: np.ndarray
    ambient: np.ndarray
    alpha: float
    beta: float
    achieved_sir_db: float
    achieved_sar_db: float


# ============================================================================
# ANALYSIS / SYNTHESIS
# ============================================================================

def analysis_window() -> np.ndarray:
    """Periodic Hann window used for both analysis and synthesis."""
    return _WINDOW.copy()


def n_frames_for(n_samples: int) -> int:
    if n_samples < WINDOW_LEN:
        return 0
    return (n_samples - WINDOW_LEN) // HOP + 1


def stft(w: Waveform) -> SpectroFrames:
    """Short-time Fourier transform into natural-log power and phase."""
    if w.rate != SAMPLE_RATE:
        raise DSPError(f"stft expects {SAMPLE_RATE} Hz audio, got {w.rate} Hz")
    if len(w) < WINDOW_LEN:
        raise DSPError(f"Utterance too short: {len(w)} samples < one {WINDOW_LEN}-sample window")

    x = w.samples.astype(np.float64)
    frames = np.lib.stride_tricks.sliding_window_view(x, WINDOW_LEN)[::HOP]
    spec = np.fft.rfft(frames * _WINDOW, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    logpow = np.log(np.maximum(power, POWER_FLOOR))
    return SpectroFrames(logpow=logpow, phase=np.angle(spec))


def istft(magnitude: np.ndarray, phase: np.ndarray) -> Waveform:
    """
    Weighted overlap-add resynthesis.

    Each frame is inverse-transformed, multiplied by the analysis window, overlap-added,
    and the sum is divided by the overlap-added squared window. The 62.5% hop is not
    constant-overlap-add for Hann, the division makes the interior exact anyway.
    """
    magnitude = np.asarray(magnitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if magnitude.shape != phase.shape:
        raise DSPError(f"Magnitude {magnitude.shape} and phase {phase.shape} shapes differ")
    if magnitude.ndim != 2 or magnitude.shape[1] != N_BINS:
        raise DSPError(f"Expected T x {N_BINS} spectra, got {magnitude.shape}")
    if np.any(magnitude < 0):
        raise DSPError("Magnitude must be non-negative")

    n_frames = magnitude.shape[0]
    length = (n_frames - 1) * HOP + WINDOW_LEN
    frames = np.fft.irfft(magnitude * np.exp(1j * phase), n=WINDOW_LEN, axis=1) * _WINDOW

    out = np.zeros(length)
    wsum = np.zeros(length)
    sq = _WINDOW ** 2
    for t in range(n_frames):
        start = t * HOP
        out[start:start + WINDOW_LEN] += frames[t]
        wsum[start:start + WINDOW_LEN] += sq

    covered = wsum > WOLA_FLOOR
    out[covered] /= wsum[covered]
    out[~covered] = 0.0
    return Waveform(out, SAMPLE_RATE)


# ============================================================================
# NORMALIZATION / CONTEXT
# ============================================================================

def _logpow_of(frames) -> np.ndarray:
    if isinstance(frames, SpectroFrames):
        return frames.logpow
    return np.asarray(frames, dtype=np.float64)


def normalize_utterance(frames) -> Tuple[np.ndarray, NormStats]:
    """Zero-mean, unit-std per frequency bin over all frames of one utterance."""
    logpow = _logpow_of(frames)
    if logpow.ndim != 2 or logpow.shape[0] < 2:
        raise DSPError(f"Insufficient frames for normalization: {logpow.shape[0] if logpow.ndim else 0} < 2")
    mean = logpow.mean(axis=0)
    std = np.maximum(logpow.std(axis=0), STD_FLOOR)
    stats = NormStats(mean=mean, std=std)
    return apply_norm(logpow, stats), stats


def apply_norm(logpow: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(logpow, dtype=np.float64) - stats.mean) / stats.std


def denormalize(logpow: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(logpow, dtype=np.float64) * stats.std + stats.mean


def context_indices(n_frames: int, context: int = CONTEXT) -> np.ndarray:
    """T x (2c+1) frame indices with edge replication."""
    offsets = np.arange(-context, context + 1)
    return np.clip(np.arange(n_frames)[:, None] + offsets[None, :], 0, n_frames - 1)


def context_window(logpow: np.ndarray, context: int = CONTEXT) -> np.ndarray:
    """Stack +/- context frames: returns T x 257 x 5, column j is frame t-2+j."""
    logpow = np.asarray(logpow)
    if logpow.ndim != 2 or logpow.shape[0] < 1:
        raise DSPError(f"context_window needs at least one frame, got {logpow.shape}")
    blocks = logpow[context_indices(logpow.shape[0], context)]   # T x 5 x 257
    return np.ascontiguousarray(blocks.transpose(0, 2, 1))


# ============================================================================
# MIXING
# ============================================================================

def mean_power(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def power_db(x: np.ndarray) -> float:
    return 10.0 * np.log10(max(mean_power(x), POWER_FLOOR))


def achieved_ratio_db(sig: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * np.log10(mean_power(sig) / mean_power(noise))


def fit_noise(noise: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Crop at a seeded random offset when longer than n, loop when shorter."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] == 0:
        raise DSPError("Empty noise signal")
    if noise.shape[0] > n:
        offset = int(rng.integers(0, noise.shape[0] - n + 1))
        return noise[offset:offset + n]
    return np.resize(noise, n)


def _scale_for(p_clean: float, p_noise: float, ratio_db: float) -> float:
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (ratio_db / 10.0))))


def mix_components(clean: Waveform, interf: Waveform, ambient: Waveform, spec: MixSpec) -> MixResult:
    """clean + alpha * interference + beta * ambient at the requested SIR and SAR."""
    if not (clean.rate == interf.rate == ambient.rate):
        raise DSPError(f"Sample rates differ: {clean.rate}/{interf.rate}/{ambient.rate}")

    n = len(clean)
    rng = np.random.default_rng(spec.seed)
    c = clean.samples.astype(np.float64)
    i = fit_noise(interf.samples, n, rng)
    a = fit_noise(ambient.samples, n, rng)

    p_c, p_i, p_a = mean_power(c), mean_power(i), mean_power(a)
    if p_c <= 0:
        raise DSPError("Clean utterance has zero power")
    if p_i <= 0 or p_a <= 0:
        raise DSPError(f"Zero-power noise ({spec.interference_id if p_i <= 0 else spec.ambient_id})")

    alpha = _scale_for(p_c, p_i, spec.sir_db)
    beta = _scale_for(p_c, p_a, spec.sar_db)
    si, sa = alpha * i, beta * a
    noisy = c + si + sa

    result = MixResult(
        noisy=Waveform(noisy, clean.rate),
        interference=si,
        ambient=sa,
        alpha=alpha,
        beta=beta,
        achieved_sir_db=achieved_ratio_db(c, si),
        achieved_sar_db=achieved_ratio_db(c, sa),
    )
    if abs(result.achieved_sir_db - spec.sir_db) > 0.01 or abs(result.achieved_sar_db - spec.sar_db) > 0.01:
        logger.warning(
            f"MIX | requested SIR/SAR {spec.sir_db}/{spec.sar_db} dB, "
            f"achieved {result.achieved_sir_db:.3f}/{result.achieved_sar_db:.3f} dB"
        )
    return result


def mix_sir_sar(clean: Waveform, interf: Waveform, ambient: Waveform, spec: MixSpec) -> Waveform:
    return mix_components(clean, interf, ambient, spec).noisy


# ============================================================================
# RESAMPLING
# ============================================================================

def resample(w: Waveform, rate: int) -> Waveform:
    """Polyphase resampling with a Kaiser (beta 8) anti-aliasing filter."""
    if rate == w.rate:
        return Waveform(w.samples.copy(), w.rate)
    up, down = _ratio(w.rate, rate)
    out = signal.resample_poly(w.samples.astype(np.float64), up, down, window=RESAMPLE_WINDOW)
    return Waveform(out, rate)


def resample_array(x: np.ndarray, src: int, dst: int) -> np.ndarray:
    if src == dst:
        return np.asarray(x, dtype=np.float64)
    up, down = _ratio(src, dst)
    return signal.resample_poly(np.asarray(x, dtype=np.float64), up, down, window=RESAMPLE_WINDOW)


def _ratio(src: int, dst: int) -> Tuple[int, int]:
    g = gcd(int(src), int(dst))
    return int(dst) // g, int(src) // g


def fit_length(x: np.ndarray, n: int, fill: Optional[float] = 0.0) -> np.ndarray:
    """Zero-pad or trim a 1-D array to n samples."""
    x = np.asarray(x)
    if x.shape[0] >= n:
        return x[:n]
    return np.concatenate([x, np.full(n - x.shape[0], fill, dtype=x.dtype)])


def spectrogram_image(w: Waveform, range_db: float = 80.0) -> np.ndarray:
    """
    257 x T grey levels in [0, 1], low frequencies at the bottom. Power in dB is
    clipped to [max - range_db, max]; a signal with no dynamic range maps to 0.
    """
    db = stft(w).logpow * (10.0 / np.log(10.0))
    top = float(db.max())
    if top - float(db.min()) <= 0.0:
        return np.zeros((db.shape[1], db.shape[0]))
    gray = (np.clip(db, top - range_db, top) - (top - range_db)) / range_db
    return gray.T[::-1]


class DSPError(AVSEError):
    """Raised on invalid audio input or inconsistent spectra."""
    pass
