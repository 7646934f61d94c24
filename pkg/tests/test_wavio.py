import logging

import numpy as np
import pytest
import soundfile as sf

from shared import SAMPLE_RATE
from utils.dsp import DSPError, Waveform
from utils.wavio import read_wav, write_wav


class TestWavIO:
    def test_round_trip_within_quantization(self, tmp_path, tone):
        path = write_wav(tmp_path / "tone.wav", tone)
        back = read_wav(path)
        assert back.rate == SAMPLE_RATE
        assert len(back) == len(tone)
        assert np.max(np.abs(back.samples - tone.samples)) <= 1.0 / 32768 + 1e-7

    def test_written_as_pcm16(self, tmp_path, tone):
        path = write_wav(tmp_path / "tone.wav", tone)
        info = sf.info(str(path))
        assert info.subtype == 'PCM_16'
        assert info.channels == 1

    def test_clipping_warns(self, tmp_path, caplog):
        loud = Waveform(np.array([0.0, 1.5, -2.0, 0.5] * 100))
        with caplog.at_level(logging.WARNING, logger='avse'):
            path = write_wav(tmp_path / "loud.wav", loud)
        assert "clipping" in caplog.text
        back = read_wav(path)
        assert back.samples.max() <= 1.0
        assert back.samples.min() >= -1.0

    def test_stereo_downmix(self, tmp_path):
        left = np.full(1000, 0.5, dtype=np.float32)
        right = np.full(1000, -0.25, dtype=np.float32)
        sf.write(str(tmp_path / "st.wav"), np.stack([left, right], axis=1), SAMPLE_RATE, subtype='PCM_16')
        back = read_wav(tmp_path / "st.wav")
        assert back.samples.mean() == pytest.approx(0.125, abs=1e-3)

    def test_48k_resampled(self, tmp_path):
        t = np.arange(48000) / 48000
        sf.write(str(tmp_path / "hi.wav"), 0.3 * np.sin(2 * np.pi * 200.0 * t), 48000, subtype='PCM_16')
        back = read_wav(tmp_path / "hi.wav")
        assert back.rate == SAMPLE_RATE
        assert len(back) == SAMPLE_RATE

    def test_missing_file(self, tmp_path):
        with pytest.raises(DSPError, match="not found"):
            read_wav(tmp_path / "nope.wav")
