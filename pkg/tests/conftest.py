import logging
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared import SAMPLE_RATE  # noqa: E402
from utils.corpus import SynthCorpusSpec, synth_utterance  # noqa: E402
from utils.dsp import Waveform  # noqa: E402
from utils.model import AVDCNNConfig  # noqa: E402


@pytest.fixture(autouse=True)
def reset_avse_logger():
    """CLI tests install handlers and stop propagation; give every test a clean logger."""
    yield
    logger = logging.getLogger('avse')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tone():
    """One second of a 440 Hz sine at 0.5 amplitude."""
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    return Waveform(0.5 * np.sin(2 * np.pi * 440.0 * t), SAMPLE_RATE)


@pytest.fixture
def noise(rng):
    return Waveform(0.1 * rng.standard_normal(SAMPLE_RATE), SAMPLE_RATE)


@pytest.fixture
def small_config():
    """Full topology with a handful of filters and units; well-conditioned init."""
    return AVDCNNConfig(init="scaled").shrunken(filters=3, width=16)


@pytest.fixture
def utterance():
    """0.6 s synthetic utterance: 30 mouth frames, 9600 samples."""
    spec = SynthCorpusSpec(n_utterances=1, duration_s=0.6, seed=3, edge_silence_s=0.1)
    return synth_utterance(spec, 0)


@pytest.fixture
def noisy_utterance(utterance):
    rng = np.random.default_rng(5)
    samples = utterance.waveform.samples + 0.05 * rng.standard_normal(len(utterance.waveform))
    return Waveform(samples, SAMPLE_RATE)
