import numpy as np
import pytest

from shared import IMG_C, IMG_H, IMG_W
from utils.dsp import Waveform
from utils.features import IndexRow, build_dataset, load_dataset, read_index, save_dataset, utterance_example
from utils.model import StreamMismatchError


class TestUtteranceExample:
    def test_shapes(self, utterance, noisy_utterance):
        batch = utterance_example(utterance.waveform, noisy_utterance, utterance.images)
        assert len(batch) == 29
        assert batch.X.shape == (29, 257, 5, 1)
        assert batch.Z.shape == (29, IMG_H, IMG_W, 15)
        assert batch.X.dtype == np.float32

    def test_target_uses_noisy_statistics(self, utterance):
        clean = utterance.waveform
        batch = utterance_example(clean, clean, utterance.images)
        assert np.allclose(batch.Y, batch.X[:, :, 2, 0], atol=1e-5)

    def test_central_image_target(self, utterance, noisy_utterance):
        batch = utterance_example(utterance.waveform, noisy_utterance, utterance.images)
        central = batch.Z[:, :, :, 2 * IMG_C:3 * IMG_C]
        assert np.allclose(batch.Zc.reshape(-1, IMG_H, IMG_W, IMG_C), central)

    def test_audio_only_zero_images(self, utterance, noisy_utterance):
        batch = utterance_example(utterance.waveform, noisy_utterance, None)
        assert np.all(batch.Z == 0.0)

    def test_length_mismatch(self, utterance, noisy_utterance):
        short = Waveform(noisy_utterance.samples[:-10], noisy_utterance.rate)
        with pytest.raises(StreamMismatchError, match="lengths differ"):
            utterance_example(utterance.waveform, short, utterance.images)


class TestDataset:
    def _examples(self, utterance, noisy_utterance):
        batch = utterance_example(utterance.waveform, noisy_utterance, utterance.images)
        return [(IndexRow("a", 0, 0, "white", "0", "5"), batch), (IndexRow("b", 0, 0), batch.take(np.arange(10)))]

    def test_offsets(self, utterance, noisy_utterance):
        data, rows = build_dataset(self._examples(utterance, noisy_utterance))
        assert len(data) == 39
        assert [(r.utterance_id, r.start, r.n_frames) for r in rows] == [("a", 0, 29), ("b", 29, 10)]

    def test_save_and_load(self, tmp_path, utterance, noisy_utterance):
        data, rows = build_dataset(self._examples(utterance, noisy_utterance))
        paths = save_dataset(tmp_path, data, rows)
        assert sorted(p.name for p in paths) == ["X.tnsr", "Y.tnsr", "Z.tnsr", "Zc.tnsr", "index.csv"]
        back = load_dataset(tmp_path)
        assert np.array_equal(back.Y, data.Y)
        assert np.array_equal(back.Z, data.Z)
        index = read_index(tmp_path)
        assert index[0].noise == "white"
        assert index[1].start == 29

    def test_missing_index(self, tmp_path):
        assert read_index(tmp_path) == []
