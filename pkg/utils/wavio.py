"""
WAV I/O

16-bit PCM mono reader/writer. Multi-channel input is averaged to mono and any
sample rate other than 16 kHz (typically 48 kHz camera audio) is resampled.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from shared import SAMPLE_RATE
from utils.dsp import DSPError, Waveform, resample

logger = logging.getLogger('avse')

PathLike = Union[str, Path]


def read_wav(path: PathLike, target_rate: int = SAMPLE_RATE) -> Waveform:
    """Read a WAV file as float samples in [-1, 1] at target_rate."""
    path = Path(path)
    if not path.exists():
        raise DSPError(f"WAV file not found: {path}")
    try:
        data, rate = sf.read(str(path), dtype='float32', always_2d=True)
    except RuntimeError as e:
        raise DSPError(f"Could not read {path}: {e}") from e

    mono = data.mean(axis=1) if data.shape[1] > 1 else data[:, 0]
    w = Waveform(mono, int(rate))
    if w.rate != target_rate:
        logger.debug(f"WAV | resampling {path.name} {w.rate} -> {target_rate} Hz")
        w = resample(w, target_rate)
    return w


def write_wav(path: PathLike, w: Waveform) -> Path:
    """Write 16-bit PCM mono, clipping to [-1, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    peak = float(np.max(np.abs(w.samples))) if len(w) else 0.0
    if peak > 1.0:
        logger.warning(f"WAV | clipping {path.name}: peak {peak:.3f}")
    sf.write(str(path), np.clip(w.samples, -1.0, 1.0), w.rate, subtype='PCM_16')
    return path
