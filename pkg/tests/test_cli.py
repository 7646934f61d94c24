"""End-to-end runs of the command line on a tiny network and corpus."""

import csv
import json
import shutil

import pytest

from cli import EXIT_DIVERGED, EXIT_ERROR, EXIT_INTERRUPT, EXIT_OK, EXIT_USAGE, AVSECli, main
from shared import RUN_MANIFEST, TRAIN_LOG
from utils.command import Command
from utils.train import TrainingDiverged

TINY_CONFIG = """\
# tiny network for tests
model.conv_a1_filters = 3
model.conv_a2_filters = 3
model.conv_v1_filters = 3
model.conv_v2_filters = 3
model.conv_v3_filters = 3
model.fc1 = 16
model.fc2 = 16
model.fc_a3 = 16
model.fc_v3 = 16
train.init = scaled
train.batch_size = 16
synth.edge_silence_s = 0.1
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    (root / "tiny.cfg").write_text(TINY_CONFIG, encoding='utf-8')
    with pytest.MonkeyPatch.context() as mp:
        mp.chdir(root)
        mp.setenv("AVSE_LOG_FILE", str(root / "avse.log"))
        mp.delenv("AVSE_CONFIG", raising=False)

        def run(*argv, seed=None):
            options = ["--config", str(root / "tiny.cfg"), "--jobs", "1"]
            if seed is not None:
                options += ["--seed", str(seed)]
            return main([*options, *map(str, argv)])

        assert run("synth", root / "corpus", "--n", 2, "--duration", 0.8,
                   "--noises", root / "noises", "--noise-duration", 1) == EXIT_OK
        assert run("mix", root / "corpus", root / "noises", root / "mixed", "--sir", "0", "--sar", "5") == EXIT_OK
        assert run("features", root / "mixed", root / "feats", "--limit", 4) == EXIT_OK
        assert run("train", root / "feats", root / "run", "--epochs", 2, seed=1) == EXIT_OK
        yield root, run


def _rows(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


# ============================================================================
# Pipeline
# ============================================================================


class TestPipeline:
    def test_corpus_and_noises(self, workspace):
        root, _ = workspace
        assert len(_rows(root / "corpus" / "corpus.csv")) == 2
        assert len(list((root / "noises").glob("*.wav"))) == 8
        assert (root / "noises" / RUN_MANIFEST).exists()

    def test_mixtures(self, workspace):
        root, _ = workspace
        rows = _rows(root / "mixed" / "mix.csv")
        assert len(rows) == 2 * 7
        assert {r["ambient"] for r in rows} == {"white"}
        assert all((root / "mixed" / r["noisy_wav"]).exists() for r in rows)

    def test_manifest_checksums(self, workspace):
        root, _ = workspace
        data = json.loads((root / "feats" / RUN_MANIFEST).read_text(encoding='utf-8'))
        assert data["command"] == "features"
        assert set(data["outputs"]) == {"X.tnsr", "Z.tnsr", "Y.tnsr", "Zc.tnsr", "index.csv"}

    def test_training_run_layout(self, workspace):
        root, _ = workspace
        run = root / "run"
        assert (run / "checkpoint" / "manifest.txt").exists()
        assert (run / "state" / "train_state.json").exists()
        log_text = (run / TRAIN_LOG).read_text(encoding='utf-8')
        assert "# seed=1" in log_text
        assert json.loads((run / RUN_MANIFEST).read_text(encoding='utf-8'))["seed"] == 1

    def test_resume(self, workspace, tmp_path):
        root, run = workspace
        resumed = tmp_path / "run"
        shutil.copytree(root / "run", resumed)
        assert run("train", root / "feats", resumed, "--epochs", 3, "--resume", seed=1) == EXIT_OK
        lines = [l for l in (resumed / TRAIN_LOG).read_text(encoding='utf-8').splitlines() if not l.startswith('#')]
        assert len(lines) == 1 + 3

    def test_resume_wrong_kind(self, workspace, tmp_path):
        root, run = workspace
        resumed = tmp_path / "run"
        shutil.copytree(root / "run", resumed)
        assert run("train", root / "feats", resumed, "--kind", "adcnn", "--resume") == EXIT_ERROR

    def test_enhance_eval(self, workspace, tmp_path):
        root, run = workspace
        enhanced = tmp_path / "enhanced"
        assert run("enhance", root / "run", enhanced, "--mix-csv", root / "mixed") == EXIT_OK
        assert len(list(enhanced.glob("*.wav"))) == 14

        scores = tmp_path / "eval"
        assert run("eval", root / "mixed", scores, "--method", f"avdcnn={enhanced}") == EXIT_OK
        rows = _rows(scores / "scores.csv")
        assert {r["method"] for r in rows} == {"noisy", "avdcnn"}
        assert {r["metric"] for r in rows} >= {"sdi"}
        for table in ("by_noise.csv", "by_sir.csv", "by_sar.csv", "by_sir_sar.csv"):
            assert (scores / table).exists()

    def test_enhance_single_with_images(self, workspace, tmp_path):
        root, run = workspace
        entry = _rows(root / "mixed" / "mix.csv")[0]
        out = tmp_path / "single"
        assert run("enhance", root / "run" / "checkpoint", out, "--noisy", root / "mixed" / entry["noisy_wav"],
                   "--frames", root / "mixed" / entry["frame_dir"]) == EXIT_OK
        assert (out / "enhanced.wav").exists()
        assert len(list((out / "mouths").glob("*.ppm"))) == len(list((out / "diff").glob("*.ppm"))) > 0

    def test_enhance_needs_one_source(self, workspace, tmp_path):
        root, run = workspace
        assert run("enhance", root / "run", tmp_path / "e") == EXIT_ERROR

    def test_eval_imports_scores(self, workspace, tmp_path):
        root, run = workspace
        external = tmp_path / "pesq.csv"
        mix_id = _rows(root / "mixed" / "mix.csv")[0]["mix_id"]
        external.write_text("utterance_id,noise_type,sir_db,sar_db,method,metric,value\n"
                            f"{mix_id},hum,0,5,avdcnn,pesq,2.1\n", encoding='utf-8')
        out = tmp_path / "eval"
        assert run("eval", root / "mixed", out, "--scores", external) == EXIT_OK
        assert any(r["metric"] == "pesq" for r in _rows(out / "scores.csv"))

    def test_spectrogram(self, workspace, tmp_path):
        root, run = workspace
        wav = next((root / "noises").glob("*.wav"))
        assert run("spectrogram", tmp_path / "spec", wav) == EXIT_OK
        assert (tmp_path / "spec" / f"{wav.stem}.pgm").read_bytes()[:2] == b"P5"

    def test_sweep_mu(self, workspace, tmp_path):
        root, run = workspace
        assert run("sweep-mu", root / "feats", tmp_path / "sweep", "--mus", "0,1", "--epochs", 1) == EXIT_OK
        rows = _rows(tmp_path / "sweep" / "sweep.csv")
        assert [r["mu"] for r in rows] == ["0", "1"]
        assert (tmp_path / "sweep" / "trainlog_mu0.csv").exists()

    def test_probe_visual(self, workspace, tmp_path):
        root, run = workspace
        assert run("probe-visual", root / "run", root / "mixed", tmp_path / "probe",
                   "--shapes", 2, "--limit", 1) == EXIT_OK
        rows = _rows(tmp_path / "probe" / "probe.csv")
        assert [r["shape"] for r in rows] == ["0", "1"]


# ============================================================================
# Exit codes / options
# ============================================================================


class _Raising(Command):
    name = "boom"
    help = "raise on purpose"

    def __init__(self, cli, exc):
        super().__init__(cli)
        self.exc = exc

    def run(self, args, ctx):
        raise self.exc


class TestExitCodes:
    @pytest.fixture(autouse=True)
    def _isolated(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("AVSE_LOG_FILE", str(tmp_path / "avse.log"))
        monkeypatch.delenv("AVSE_CONFIG", raising=False)

    def _cli(self, exc):
        cli = AVSECli()
        cli.add_command(_Raising(cli, exc))
        return cli

    def test_no_command_is_usage(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_command_is_usage(self):
        assert main(["transcode"]) == EXIT_USAGE

    def test_help(self):
        assert main(["--help"]) == EXIT_OK

    def test_missing_input(self, tmp_path):
        assert main(["mix", str(tmp_path / "none"), str(tmp_path), str(tmp_path / "out")]) == EXIT_ERROR

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("model.fc9 = 3\n", encoding='utf-8')
        assert main(["--config", str(cfg), "synth", str(tmp_path / "c")]) == EXIT_ERROR
        assert "fc9" in (tmp_path / "avse.log").read_text(encoding='utf-8')

    def test_diverged(self):
        assert self._cli(TrainingDiverged(4, 2, "loss nan")).run(["boom"]) == EXIT_DIVERGED

    def test_interrupted(self):
        assert self._cli(KeyboardInterrupt()).run(["boom"]) == EXIT_INTERRUPT

    def test_log_file_option(self, tmp_path):
        log = tmp_path / "custom.log"
        assert main(["--log-file", str(log), "spectrogram", str(tmp_path / "s"), str(tmp_path / "none.wav")]) == EXIT_ERROR
        assert "CMD_ERR" in log.read_text(encoding='utf-8')

    def test_every_command_registered(self):
        cli = AVSECli()
        cli.load_commands()
        assert set(cli.commands) == {"synth", "mix", "features", "train", "enhance", "eval",
                                     "spectrogram", "sweep-mu", "probe-visual"}
