"""Longer training runs on the synthetic corpus. Deselected by default; run with `pytest -m slow`."""

import csv
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
import pytest

from shared import SAMPLE_RATE
from utils.corpus import SynthCorpusSpec, SynthUtterance, fake_mouth_shapes, synth_corpus, synth_noise, synth_utterance
from utils.dsp import MixSpec, Waveform, mix_sir_sar
from utils.features import utterance_example
from utils.metrics import ScoreRecord, aggregate, sdi, stoi, write_table
from utils.model import AVDCNNConfig, Batch, SpeechEnhancer, build_model, enhance_utterance
from utils.train import TrainConfig, fit, mismatched_visual_probe, sweep_mu

pytestmark = pytest.mark.slow

SEEDS = range(5)
N_TRAIN, N_TEST = 50, 10
SIR_DB, SAR_DB = -5.0, 20.0
CONFIG = AVDCNNConfig(init="scaled").shrunken(filters=4, width=32)
RUN_CFG = TrainConfig(lr=1e-3, batch_size=32, max_epochs=25, init="scaled", early_stop=False)


@pytest.fixture(scope="module")
def data():
    spec = SynthCorpusSpec(n_utterances=4, duration_s=0.8, seed=11, edge_silence_s=0.1)
    rng = np.random.default_rng(12)
    examples = []
    for i in range(spec.n_utterances):
        utt = synth_utterance(spec, i)
        noisy = Waveform(utt.waveform.samples + 0.1 * rng.standard_normal(len(utt.waveform)), utt.waveform.rate)
        examples.append(utterance_example(utt.waveform, noisy, utt.images))
    return Batch.concat(examples)


@pytest.fixture
def cfg():
    return TrainConfig(lr=1e-3, batch_size=16, max_epochs=20, init="scaled", seed=7, early_stop=False)


# ============================================================================
# Two-talker corpus: the target's mouth is the only cue to which voice to keep
# ============================================================================


@dataclass
class TalkerCorpus:
    train: Batch
    test: List[Tuple[SynthUtterance, Waveform]]


def talker_corpus(seed: int, n_train: int = N_TRAIN, n_test: int = N_TEST) -> TalkerCorpus:
    spec = SynthCorpusSpec(n_utterances=n_train + n_test, duration_s=1.5, seed=100 + seed, edge_silence_s=0.1)
    targets = synth_corpus(spec)
    others = synth_corpus(replace(spec, seed=200 + seed, prefix="i"))
    hiss = Waveform(synth_noise("white", SAMPLE_RATE, np.random.default_rng(seed)))
    noisy = [mix_sir_sar(t.waveform, o.waveform, hiss, MixSpec(SIR_DB, SAR_DB, seed=k))
             for k, (t, o) in enumerate(zip(targets, others))]
    train = Batch.concat([utterance_example(t.waveform, n, t.images)
                          for t, n in zip(targets[:n_train], noisy[:n_train])])
    return TalkerCorpus(train, list(zip(targets[n_train:], noisy[n_train:])))


def mean_scores(model: SpeechEnhancer, test) -> Tuple[float, float]:
    stois, sdis = [], []
    for utt, noisy in test:
        out = enhance_utterance(model, noisy, utt.images).waveform
        stois.append(stoi(utt.waveform, out))
        sdis.append(sdi(utt.waveform, out))
    return float(np.mean(stois)), float(np.mean(sdis))


@pytest.fixture(scope="module")
def late_run():
    corpus = talker_corpus(0)
    model = build_model("avdcnn", CONFIG, 0)
    result = fit(model, corpus.train, replace(RUN_CFG, seed=0))
    return model, result, corpus


# ============================================================================
# Directional checks
# ============================================================================


class TestDirectional:
    @pytest.mark.parametrize("kind", ["avdcnn", "avdcnn_ef"])
    def test_fusion_models_learn(self, data, cfg, small_config, kind):
        result = fit(build_model(kind, small_config, 1), data, cfg)
        assert result.log.records[-1].total < result.log.records[0].total

    def test_visual_weight_trades_audio_for_visual(self, data, cfg, small_config):
        results = sweep_mu(lambda: build_model("avdcnn", small_config, 1), data, [0.1, 1.0, 10.0], cfg)
        visual = [r.visual_loss for r in results]
        audio = [r.audio_loss for r in results]
        assert visual[0] > visual[1] > visual[2]
        assert audio[0] <= audio[1] <= audio[2]

    def test_multistyle_runs_full_budget(self, data, cfg, small_config):
        result = fit(build_model("avdcnn", small_config, 1), data, replace(cfg, schedule="multistyle", patience=2))
        assert len(result.log) == cfg.max_epochs


class TestTalkerCorpus:
    def test_late_fusion_beats_audio_only(self):
        wins = 0
        for seed in SEEDS:
            corpus = talker_corpus(seed)
            scores = {}
            for kind in ("avdcnn", "adcnn"):
                model = build_model(kind, CONFIG, seed)
                fit(model, corpus.train, replace(RUN_CFG, seed=seed))
                scores[kind] = mean_scores(model, corpus.test)
            (av_stoi, av_sdi), (a_stoi, a_sdi) = scores["avdcnn"], scores["adcnn"]
            wins += av_stoi > a_stoi and av_sdi < a_sdi
        assert wins >= 4

    @pytest.mark.parametrize("policy", ["model1", "model2"])
    def test_visual_segments_have_lower_audio_loss(self, policy):
        wins = 0
        for seed in SEEDS:
            corpus = talker_corpus(seed, n_train=20, n_test=0)
            run_cfg = replace(RUN_CFG, seed=seed, schedule="multistyle", policy=policy, max_epochs=30,
                              segment_epochs=5)
            log = fit(build_model("avdcnn", CONFIG, seed), corpus.train, run_cfg).log
            half = run_cfg.max_epochs // 2
            wins += log.mean_loss("audio-visual", "audio", half) < log.mean_loss("audio-only", "audio", half)
        assert wins >= 3

    def test_fake_mouths_lower_intelligibility(self, late_run):
        model, _, corpus = late_run
        lower = 0
        for shape in fake_mouth_shapes(8):
            runs = [mismatched_visual_probe(model, utt.waveform, noisy, utt.images, shape)
                    for utt, noisy in corpus.test]
            lower += np.mean([r.stoi_fake for r in runs]) < np.mean([r.stoi_true for r in runs])
        assert lower >= 6

    def test_fusion_comparison_table(self, late_run, tmp_path):
        late, late_result, corpus = late_run
        early = build_model("avdcnn_ef", CONFIG, 0)
        early_result = fit(early, corpus.train, replace(RUN_CFG, seed=0))
        for result in (late_result, early_result):
            assert result.log.records[-1].total < result.log.records[0].total

        records = []
        for method, model in (("avdcnn", late), ("avdcnn_ef", early)):
            for utt, noisy in corpus.test:
                out = enhance_utterance(model, noisy, utt.images).waveform
                records.append(ScoreRecord(utt.utterance_id, "talker", SIR_DB, SAR_DB, method, "stoi",
                                           stoi(utt.waveform, out)))
                records.append(ScoreRecord(utt.utterance_id, "talker", SIR_DB, SAR_DB, method, "sdi",
                                           sdi(utt.waveform, out)))
        path = write_table(tmp_path / "fusion.csv", aggregate(records, "noise_type"))

        with open(path, newline='', encoding='utf-8') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["noise_type", "metric", "avdcnn", "avdcnn_ef"]
        assert sorted(r[1] for r in rows[1:]) == ["sdi", "stoi"]
        assert all(r[2] and r[3] for r in rows[1:])
