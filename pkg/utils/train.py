"""
Training

RMSprop training over shuffled mini-batches with early stopping, multi-style
modality scheduling (audio-visual / visual-only / audio-only segments), resumable
state, mixing-weight sweeps and the mismatched-visual probe.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shared import AVSEError, TRAIN_LOG
from utils.config import dataclass_from_mapping
from utils.dsp import Waveform
from utils.metrics import MetricError, sdi, silence_residual_db, stoi
from utils.model import Batch, SpeechEnhancer, enhance_utterance, model_meta, read_model, save_model
from utils.nn import INIT_MODES, NonFiniteError, OptimizerState, RMSprop
from utils.tensor_store import load_checkpoint, save_checkpoint

logger = logging.getLogger('avse')

MODALITIES = ("audio-visual", "visual-only", "audio-only")
SCHEDULES = ("off", "multistyle")
POLICIES = ("model1", "model2")
REFERENCE_EPOCHS = 200          # the 45-epoch cadence is defined against this budget
SHUFFLE_STREAM = 1
MODALITY_STREAM = 2
DROPOUT_STREAM = 3
LOG_FIELDS = ("epoch", "modality", "segment", "total", "audio", "visual")

PathLike = Union[str, Path]


# ============================================================================
# CONFIG / LOG
# ============================================================================

@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20                  # early-stop window, epochs
    min_rel_improvement: float = 1e-3   # 0.1 %
    mu: float = 1.0
    seed: int = 0
    init: str = "uniform"
    schedule: str = "off"
    segment_epochs: int = 45
    policy: str = "model2"
    early_stop: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1 or self.segment_epochs < 1:
            raise TrainError("Batch size, epochs, patience and segment length must be positive")
        if self.mu < 0:
            raise TrainError(f"mu must be >= 0, got {self.mu}")
        if self.lr < 0:
            raise TrainError(f"Learning rate must be >= 0, got {self.lr}")
        if self.schedule not in SCHEDULES:
            raise TrainError(f"Unknown schedule '{self.schedule}', expected one of {SCHEDULES}")
        if self.policy not in POLICIES:
            raise TrainError(f"Unknown zero-target policy '{self.policy}', expected one of {POLICIES}")
        if self.init not in INIT_MODES:
            raise TrainError(f"Unknown init mode '{self.init}', expected one of {INIT_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Dict[str, str]) -> 'TrainConfig':
        return dataclass_from_mapping(cls, data, strict=False, prefix="train.")

    def segment_length(self) -> int:
        """Modality segment length, scaled down with the epoch budget below 200 epochs."""
        if self.max_epochs >= REFERENCE_EPOCHS:
            return self.segment_epochs
        return max(1, int(round(self.segment_epochs * self.max_epochs / REFERENCE_EPOCHS)))


@dataclass
class EpochRecord:
    epoch: int
    modality: str
    segment: int
    total: float
    audio: float
    visual: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)
    seed: int = 0
    config_hash: str = ""
    selected_epoch: int = -1

    def append(self, record: EpochRecord):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise TrainError(f"Epoch {record.epoch} logged after epoch {self.records[-1].epoch}")
        if not all(math.isfinite(v) for v in (record.total, record.audio, record.visual)):
            raise TrainError(f"Non-finite loss logged at epoch {record.epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def segment_boundaries(self) -> List[int]:
        """First epoch of every modality segment after the first."""
        return [b.epoch for a, b in zip(self.records, self.records[1:]) if b.segment != a.segment]

    def mean_loss(self, modality: str, column: str = "audio", from_epoch: int = 0) -> float:
        values = [getattr(r, column) for r in self.records if r.modality == modality and r.epoch >= from_epoch]
        return float(np.mean(values)) if values else float('nan')

    def selected(self) -> EpochRecord:
        for r in self.records:
            if r.epoch == self.selected_epoch:
                return r
        return self.records[-1]

    def write_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            f.write(f"# seed={self.seed}\n# config_hash={self.config_hash}\n# selected_epoch={self.selected_epoch}\n")
            writer = csv.writer(f)
            writer.writerow(LOG_FIELDS)
            for r in self.records:
                writer.writerow([r.epoch, r.modality, r.segment, repr(r.total), repr(r.audio), repr(r.visual)])
        return path

    @classmethod
    def read_csv(cls, path: PathLike) -> 'TrainLog':
        path = Path(path)
        meta, body = {}, []
        for line in path.read_text(encoding='utf-8').splitlines():
            if line.startswith('#'):
                key, _, value = line[1:].strip().partition('=')
                meta[key] = value
            elif line.strip():
                body.append(line)
        log = cls(seed=int(meta.get("seed", 0)), config_hash=meta.get("config_hash", ""),
                  selected_epoch=int(meta.get("selected_epoch", -1)))
        for row in csv.DictReader(body):
            log.append(EpochRecord(int(row["epoch"]), row["modality"], int(row["segment"]),
                                   float(row["total"]), float(row["audio"]), float(row["visual"])))
        return log


@dataclass
class TrainState:
    """Everything needed to continue a run where it stopped."""
    next_epoch: int = 0
    best_epoch: int = -1
    best_loss: float = math.inf
    modality: str = MODALITIES[0]
    segment: int = -1
    shuffle_rng: dict = field(default_factory=dict)
    modality_rng: dict = field(default_factory=dict)
    dropout_rngs: List[dict] = field(default_factory=list)
    stopped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'TrainState':
        return cls(**data)

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding='utf-8')
        return path

    @classmethod
    def load(cls, path: PathLike) -> 'TrainState':
        return cls.from_dict(json.loads(Path(path).read_text(encoding='utf-8')))


@dataclass
class Resume:
    """A saved run: loop state, optimizer accumulators, log so far and the best weights."""
    state: TrainState
    optimizer: OptimizerState
    log: TrainLog
    best: Dict[str, np.ndarray]


@dataclass
class FitResult:
    best: Dict[str, np.ndarray]          # state_dict of the selected epoch
    log: TrainLog
    state: TrainState
    optimizer: OptimizerState


# ============================================================================
# TRAINING LOOP
# ============================================================================

def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffled mini-batch indices; a trailing single example joins the previous batch."""
    if n < 1:
        raise TrainError("Empty dataset")
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def apply_modality(batch: Batch, modality: str, policy: str) -> Batch:
    """Zero the missing input stream; model1 also zeroes the matching target."""
    if modality == "audio-visual":
        return batch
    if modality == "visual-only":
        y = np.zeros_like(batch.Y) if policy == "model1" else batch.Y
        return Batch(np.zeros_like(batch.X), batch.Z, y, batch.Zc)
    if modality == "audio-only":
        zc = np.zeros_like(batch.Zc) if policy == "model1" else batch.Zc
        return Batch(batch.X, np.zeros_like(batch.Z), batch.Y, zc)
    raise TrainError(f"Unknown modality '{modality}', expected one of {MODALITIES}")


def _fit(model: SpeechEnhancer, data: Batch, cfg: TrainConfig, multistyle: bool,
         resume: Optional[Resume] = None,
         on_epoch: Optional[Callable[[FitResult], None]] = None) -> FitResult:
    if len(data) < 1:
        raise TrainError("Empty dataset")
    early_stop = cfg.early_stop and not multistyle
    seg_len = cfg.segment_length()

    if resume is None:
        state = TrainState()
        opt_state = OptimizerState(lr=cfg.lr)
        log = TrainLog(seed=cfg.seed)
        shuffle, modality_rng = stream_rng(cfg.seed, SHUFFLE_STREAM), stream_rng(cfg.seed, MODALITY_STREAM)
        model.reseed(int(stream_rng(cfg.seed, DROPOUT_STREAM).integers(2 ** 31)))
        best = model.state_dict()
    else:
        state, opt_state, log = resume.state, resume.optimizer, resume.log
        shuffle, modality_rng = np.random.default_rng(), np.random.default_rng()
        shuffle.bit_generator.state = state.shuffle_rng
        modality_rng.bit_generator.state = state.modality_rng
        model.set_rng_states(state.dropout_rngs)
        best = resume.best or model.state_dict()
        logger.info(f"TRAIN | resuming {model.kind} at epoch {state.next_epoch}")
    optimizer = RMSprop(state=opt_state)
    modality = state.modality

    result = FitResult(best=best, log=log, state=state, optimizer=opt_state)
    for epoch in range(state.next_epoch, cfg.max_epochs):
        if state.stopped:
            break
        if multistyle and epoch % seg_len == 0:
            modality = MODALITIES[int(modality_rng.integers(len(MODALITIES)))]
            state.segment += 1
            logger.info(f"TRAIN | segment {state.segment} from epoch {epoch}: {modality}")
        elif not multistyle:
            state.segment = 0

        sums, seen = np.zeros(3), 0
        for b_idx, idx in enumerate(epoch_batches(len(data), cfg.batch_size, shuffle)):
            batch = data.take(idx)
            if multistyle:
                batch = apply_modality(batch, modality, cfg.policy)
            try:
                parts, grads = model.compute(batch, cfg.mu)
            except NonFiniteError as e:
                raise TrainingDiverged(epoch, b_idx, str(e)) from e
            if not parts.is_finite():
                raise TrainingDiverged(epoch, b_idx, f"loss {parts.total}")
            optimizer.step(model.parameters(), grads)
            sums += parts.as_array() * len(idx)
            seen += len(idx)

        total, audio, visual = sums / seen
        log.append(EpochRecord(epoch, modality, state.segment, float(total), float(audio), float(visual)))
        logger.info(f"TRAIN | epoch {epoch:4d} | {modality:<12} | total {total:.5f} | audio {audio:.5f} | visual {visual:.5f}")

        if early_stop:
            if total < state.best_loss * (1.0 - cfg.min_rel_improvement):
                state.best_loss, state.best_epoch = float(total), epoch
                result.best = model.state_dict()
            elif epoch - state.best_epoch >= cfg.patience:
                logger.info(f"TRAIN | early stop at epoch {epoch}, best epoch {state.best_epoch} ({state.best_loss:.5f})")
                state.stopped = True
        else:
            state.best_loss, state.best_epoch = float(total), epoch
            result.best = model.state_dict()

        state.next_epoch = epoch + 1
        state.modality = modality
        state.shuffle_rng = shuffle.bit_generator.state
        state.modality_rng = modality_rng.bit_generator.state
        state.dropout_rngs = model.rng_states()
        log.selected_epoch = state.best_epoch
        if on_epoch is not None:
            on_epoch(result)

    model.load_state_dict(result.best)
    log.selected_epoch = state.best_epoch
    return result


def train(model: SpeechEnhancer, data: Batch, cfg: TrainConfig, resume=None, on_epoch=None) -> FitResult:
    """Plain joint training with early stopping; the model ends up holding the selected weights."""
    return _fit(model, data, cfg, multistyle=False, resume=resume, on_epoch=on_epoch)


def multistyle_train(model: SpeechEnhancer, data: Batch, cfg: TrainConfig, resume=None, on_epoch=None) -> FitResult:
    """Modality-scheduled training; with the schedule off this is exactly train()."""
    if cfg.schedule == "off":
        return train(model, data, cfg, resume, on_epoch)
    return _fit(model, data, cfg, multistyle=True, resume=resume, on_epoch=on_epoch)


def fit(model: SpeechEnhancer, data: Batch, cfg: TrainConfig, resume=None, on_epoch=None) -> FitResult:
    return multistyle_train(model, data, cfg, resume, on_epoch)


# ============================================================================
# RUN DIRECTORIES
# ============================================================================

CHECKPOINT_DIR = "checkpoint"   # selected weights
STATE_DIR = "state"             # latest weights + optimizer accumulators
STATE_FILE = "train_state.json"
OPT_PREFIX = "opt."


def save_best(out_dir: PathLike, model: SpeechEnhancer, result: FitResult) -> Path:
    meta = model_meta(model)
    meta.update(selected_epoch=str(result.state.best_epoch), config_hash=result.log.config_hash)
    return save_checkpoint(Path(out_dir) / CHECKPOINT_DIR, result.best, meta)


def save_state(out_dir: PathLike, model: SpeechEnhancer, result: FitResult) -> Path:
    """Everything a later `load_run` needs; the model must hold the latest weights."""
    out_dir = Path(out_dir)
    opt = {f"{OPT_PREFIX}{k}": v.astype(np.float32) for k, v in result.optimizer.v.items()}
    save_model(model, out_dir / STATE_DIR, {"next_epoch": str(result.state.next_epoch)}, opt)
    result.state.save(out_dir / STATE_DIR / STATE_FILE)
    result.log.write_csv(out_dir / TRAIN_LOG)
    return out_dir


def load_run(out_dir: PathLike, cfg: TrainConfig) -> Tuple[SpeechEnhancer, Resume]:
    out_dir = Path(out_dir)
    state_file = out_dir / STATE_DIR / STATE_FILE
    if not state_file.exists() or not (out_dir / TRAIN_LOG).exists():
        raise TrainError(f"Nothing to resume in {out_dir}")
    loaded = read_model(out_dir / STATE_DIR)
    v = {k[len(OPT_PREFIX):]: a.astype(np.float64) for k, a in loaded.extra.items() if k.startswith(OPT_PREFIX)}
    best: Dict[str, np.ndarray] = {}
    if (out_dir / CHECKPOINT_DIR).exists():
        best, _ = load_checkpoint(out_dir / CHECKPOINT_DIR)
    resume = Resume(
        state=TrainState.load(state_file),
        optimizer=OptimizerState(lr=cfg.lr, v=v),
        log=TrainLog.read_csv(out_dir / TRAIN_LOG),
        best=best,
    )
    return loaded.model, resume


# ============================================================================
# EXPERIMENTS
# ============================================================================

@dataclass
class MuResult:
    mu: float
    audio_loss: float
    visual_loss: float
    log: TrainLog


def sweep_mu(make_model: Callable[[], SpeechEnhancer], data: Batch, mus: Sequence[float],
             cfg: TrainConfig) -> List[MuResult]:
    """One full training per mixing weight, same seed; losses at the selected epoch."""
    if len(mus) < 2:
        raise TrainError("A mu sweep needs at least two values")
    results = []
    for mu in mus:
        result = fit(make_model(), data, replace(cfg, mu=float(mu)))
        rec = result.log.selected()
        results.append(MuResult(float(mu), rec.audio, rec.visual, result.log))
        logger.info(f"SWEEP | mu={mu:g} audio {rec.audio:.5f} visual {rec.visual:.5f}")
    return results


@dataclass
class ProbeResult:
    stoi_true: float
    stoi_fake: float
    sdi_true: float
    sdi_fake: float
    silence_true_db: float
    silence_fake_db: float

    @property
    def stoi_delta(self) -> float:
        return self.stoi_true - self.stoi_fake

    @property
    def sdi_delta(self) -> float:
        return self.sdi_fake - self.sdi_true

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(stoi_delta=self.stoi_delta, sdi_delta=self.sdi_delta)
        return d


def mismatched_visual_probe(model: SpeechEnhancer, clean: Waveform, noisy: Waveform, images: np.ndarray,
                            fake_image: np.ndarray) -> ProbeResult:
    """Enhance with the true mouth stream and with one fake frame held for the whole utterance."""
    if not model.uses_visual:
        raise TrainError(f"{model.kind} has no visual input to probe")
    fake = np.broadcast_to(np.asarray(fake_image, np.float32), images.shape).copy()
    true_out = enhance_utterance(model, noisy, images).waveform
    fake_out = enhance_utterance(model, noisy, fake).waveform

    def score(out: Waveform) -> Tuple[float, float, float]:
        try:
            s = stoi(clean, out)
        except MetricError as e:
            logger.warning(f"PROBE | STOI unavailable: {e}")
            s = float('nan')
        return s, sdi(clean, out), silence_residual_db(clean, out)

    st, dt, qt = score(true_out)
    sf_, df, qf = score(fake_out)
    return ProbeResult(st, sf_, dt, df, qt, qf)


class TrainError(AVSEError):
    """Raised for invalid training setups."""
    pass


class TrainingDiverged(TrainError):
    """NaN/Inf during training; carries where it happened."""

    def __init__(self, epoch: int, batch: int, detail: str):
        super().__init__(f"Training diverged at epoch {epoch}, batch {batch}: {detail}")
        self.epoch = epoch
        self.batch = batch
