"""
Enhancement Models

The late-fusion audio-visual encoder/decoder (AVDCNN), its audio-only ablation
(ADCNN) and the early-fusion variant (AVDCNN-EF), plus utterance enhancement and
checkpoint persistence.

All three share one shape: an encoder producing a flat code F, a shared trunk
FC1 -> FC2 (sigmoid, dropout 0.1) and an audio head FC_a3 -> 257. The two
audio-visual models add a visual head FC_v3 -> 1152 reconstructing the
central mouth image.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shared import (
    AVSEError, CONTEXT_WIDTH, IMG_C, IMG_H, IMG_SIZE, IMG_W, MODEL_KINDS, N_BINS,
)
from utils.config import _render, dataclass_from_mapping
from utils.dsp import (
    Waveform, context_window, denormalize, fit_length, istft, normalize_utterance, stft,
)
from utils.nn import LayerSpec, Sequential, ShapeError, check_finite, mse_loss
from utils.tensor_store import load_checkpoint, save_checkpoint
from utils.visual import ImageStats, align_streams, denormalize_images, normalize_images, visual_stacks

logger = logging.getLogger('avse')

REFERENCE_MERGED_WIDTH = 2804     # merged layer width quoted for the original network
EF_HEIGHT = N_BINS
EF_WIDTH = CONTEXT_WIDTH + IMG_W  # 5 audio columns + 24 image columns
EF_FRAME_ROWS = CONTEXT_WIDTH * IMG_H   # 80 rows per colour channel
LOGPOW_CEIL = 30.0                # keeps exp() finite on wild predictions
PREDICT_BATCH = 256

PathLike = Union[str, Path]


# ============================================================================
# CONFIG / BATCH
# ============================================================================

@dataclass
class AVDCNNConfig:
    """Layer table. Kernels are (rows, cols) on the tensor each branch sees."""
    conv_a1_h: int = 12
    conv_a1_w: int = 2
    conv_a1_filters: int = 10
    pool_a1_h: int = 2
    pool_a1_w: int = 1
    conv_a2_h: int = 5
    conv_a2_w: int = 1
    conv_a2_filters: int = 4
    conv_v1_h: int = 15
    conv_v1_w: int = 2
    conv_v1_filters: int = 12
    conv_v2_h: int = 7
    conv_v2_w: int = 2
    conv_v2_filters: int = 10
    conv_v3_h: int = 3
    conv_v3_w: int = 2
    conv_v3_filters: int = 6
    fc1: int = 1000
    fc2: int = 800
    fc_a3: int = 600
    fc_v3: int = 1500
    ef_pool_w: int = 2            # united stack also pools canvas columns
    dropout: float = 0.1
    batchnorm: bool = True
    init: str = "uniform"
    mu: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ShapeError(f"Mixing weight mu must be >= 0, got {self.mu}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Dict[str, str], prefix: str = "model.") -> 'AVDCNNConfig':
        return dataclass_from_mapping(cls, data, strict=False, prefix=prefix)

    def shrunken(self, filters: int = 4, width: int = 32) -> 'AVDCNNConfig':
        """Same topology, at most `filters` per conv and `width` per FC layer."""
        return replace(
            self,
            conv_a1_filters=min(self.conv_a1_filters, filters),
            conv_a2_filters=min(self.conv_a2_filters, filters),
            conv_v1_filters=min(self.conv_v1_filters, filters),
            conv_v2_filters=min(self.conv_v2_filters, filters),
            conv_v3_filters=min(self.conv_v3_filters, filters),
            fc1=width, fc2=width, fc_a3=width, fc_v3=width,
        )

    # ----- layer tables -----

    # Conv outputs reach fc1 through linear maps only, so the next batch norm cancels any per-channel shift.
    def audio_specs(self, prefix: str = "a", pool_w: Optional[int] = None) -> List[Tuple[str, LayerSpec]]:
        bn = self.batchnorm
        pool_w = self.pool_a1_w if pool_w is None else pool_w
        return [
            (f"conv_{prefix}1", LayerSpec("conv2d", (self.conv_a1_h, self.conv_a1_w), self.conv_a1_filters,
                                          batchnorm=bn, center=False)),
            (f"pool_{prefix}1", LayerSpec("maxpool", (self.pool_a1_h, pool_w))),
            (f"conv_{prefix}2", LayerSpec("conv2d", (self.conv_a2_h, self.conv_a2_w), self.conv_a2_filters,
                                          batchnorm=bn, center=False)),
        ]

    def visual_specs(self) -> List[Tuple[str, LayerSpec]]:
        bn = self.batchnorm
        return [
            ("conv_v1", LayerSpec("conv2d", (self.conv_v1_h, self.conv_v1_w), self.conv_v1_filters,
                                  batchnorm=bn, center=False)),
            ("conv_v2", LayerSpec("conv2d", (self.conv_v2_h, self.conv_v2_w), self.conv_v2_filters,
                                  batchnorm=bn, center=False)),
            ("conv_v3", LayerSpec("conv2d", (self.conv_v3_h, self.conv_v3_w), self.conv_v3_filters,
                                  batchnorm=bn, center=False)),
        ]

    def trunk_specs(self) -> List[Tuple[str, LayerSpec]]:
        bn = self.batchnorm
        return [
            ("fc1", LayerSpec("fc", units=self.fc1, activation="sigmoid", batchnorm=bn, dropout=self.dropout)),
            ("fc2", LayerSpec("fc", units=self.fc2, activation="sigmoid", batchnorm=bn, dropout=self.dropout)),
        ]

    def audio_head_specs(self) -> List[Tuple[str, LayerSpec]]:
        return [
            ("fc_a3", LayerSpec("fc", units=self.fc_a3, batchnorm=self.batchnorm)),
            ("out_a", LayerSpec("fc", units=N_BINS)),
        ]

    def visual_head_specs(self) -> List[Tuple[str, LayerSpec]]:
        return [
            ("fc_v3", LayerSpec("fc", units=self.fc_v3, batchnorm=self.batchnorm)),
            ("out_v", LayerSpec("fc", units=IMG_SIZE)),
        ]


@dataclass
class Batch:
    """
    X: B x 257 x 5 x 1 noisy audio blocks, Z: B x 16 x 24 x 15 visual stacks,
    Y: B x 257 clean central frames, Zc: B x 1152 clean central mouth images.
    """
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    Zc: np.ndarray

    def __post_init__(self):
        b = self.X.shape[0]
        expected = {
            "X": (self.X, (N_BINS, CONTEXT_WIDTH, 1)),
            "Z": (self.Z, (IMG_H, IMG_W, IMG_C * CONTEXT_WIDTH)),
            "Y": (self.Y, (N_BINS,)),
            "Zc": (self.Zc, (IMG_SIZE,)),
        }
        for name, (arr, tail) in expected.items():
            if arr.shape[0] != b or tuple(arr.shape[1:]) != tail:
                raise ShapeError(f"Batch.{name} has shape {arr.shape}, expected ({b}, {', '.join(map(str, tail))})")

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def take(self, idx) -> 'Batch':
        return Batch(self.X[idx], self.Z[idx], self.Y[idx], self.Zc[idx])

    def astype(self, dtype) -> 'Batch':
        return Batch(self.X.astype(dtype), self.Z.astype(dtype), self.Y.astype(dtype), self.Zc.astype(dtype))

    @staticmethod
    def concat(batches: Sequence['Batch']) -> 'Batch':
        if not batches:
            raise ShapeError("Cannot concatenate an empty list of batches")
        return Batch(*(np.concatenate([getattr(b, k) for b in batches]) for k in ("X", "Z", "Y", "Zc")))


@dataclass
class LossParts:
    total: float
    audio: float
    visual: float

    def as_array(self) -> np.ndarray:
        return np.array([self.total, self.audio, self.visual])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


def joint_loss(y_hat: np.ndarray, y: np.ndarray, z_hat: Optional[np.ndarray], zc: Optional[np.ndarray],
               mu: float) -> LossParts:
    """mean_i ||y_hat_i - y_i||^2 + mu * ||z_hat_i - zc_i||^2"""
    if mu < 0:
        raise ShapeError(f"Mixing weight mu must be >= 0, got {mu}")
    audio = mse_loss(y_hat, y)[0]
    visual = mse_loss(z_hat, zc)[0] if z_hat is not None else 0.0
    return LossParts(audio + mu * visual, audio, visual)


# ============================================================================
# MODELS
# ============================================================================

class SpeechEnhancer:
    """Encoder -> shared trunk -> heads; subclasses provide the encoder."""

    kind = ""
    has_visual_head = True
    uses_visual = True

    def __init__(self, config: Optional[AVDCNNConfig] = None, seed: int = 0):
        self.config = config or AVDCNNConfig()
        self.seed = seed
        self._build_encoder()
        cfg = self.config
        self.trunk = Sequential.from_specs(cfg.trunk_specs(), (self.code_width,), cfg.init, [seed, 10])
        self.audio_head = Sequential.from_specs(cfg.audio_head_specs(), self.trunk.out_shape, cfg.init, [seed, 11])
        self.visual_head = (Sequential.from_specs(cfg.visual_head_specs(), self.trunk.out_shape, cfg.init, [seed, 12])
                            if self.has_visual_head else None)
        logger.debug(f"MODEL | {self.kind}: code width {self.code_width}, {self.parameter_count():,} parameters")

    # ----- subclass hooks -----

    def _build_encoder(self):
        raise NotImplementedError

    @property
    def code_width(self) -> int:
        raise NotImplementedError

    def encode(self, batch: Batch, training: bool) -> np.ndarray:
        raise NotImplementedError

    def encode_backward(self, d_code: np.ndarray):
        raise NotImplementedError

    def encoders(self) -> List[Sequential]:
        raise NotImplementedError

    # ----- bookkeeping -----

    def parts(self) -> List[Sequential]:
        heads = [self.audio_head] + ([self.visual_head] if self.visual_head is not None else [])
        return self.encoders() + [self.trunk] + heads

    def parameters(self) -> Dict[str, np.ndarray]:
        return {k: v for part in self.parts() for k, v in part.parameters().items()}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {k: v for part in self.parts() for k, v in part.gradients().items()}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {k: v for part in self.parts() for k, v in part.buffers().items()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and running statistic."""
        return {k: v.copy() for k, v in {**self.parameters(), **self.buffers()}.items()}

    def load_state_dict(self, values: Dict[str, np.ndarray]):
        missing = set(self.parameters()) | set(self.buffers())
        missing -= set(values)
        if missing:
            raise ShapeError(f"State is missing {len(missing)} tensors, e.g. {sorted(missing)[0]}")
        for part in self.parts():
            part.load(values)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def zero_grads(self):
        for part in self.parts():
            part.zero_grads()

    def astype(self, dtype) -> 'SpeechEnhancer':
        for part in self.parts():
            part.astype(dtype)
        return self

    def reseed(self, seed: int):
        for i, part in enumerate(self.parts()):
            part.reseed([seed, 100 + i])

    def freeze_routing(self, frozen: bool = True):
        for part in self.parts():
            part.freeze_routing(frozen)

    def rng_states(self) -> List[dict]:
        return [part.rng.bit_generator.state for part in self.parts()]

    def set_rng_states(self, states: List[dict]):
        for part, state in zip(self.parts(), states):
            part.rng.bit_generator.state = state

    # ----- forward / loss -----

    def heads_forward(self, code: np.ndarray, training: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        h = self.trunk.forward(code, training)
        y_hat = self.audio_head.forward(h, training)
        z_hat = self.visual_head.forward(h, training) if self.visual_head is not None else None
        return y_hat, z_hat

    def forward(self, batch: Batch, training: bool = False) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        return self.heads_forward(self.encode(batch, training), training)

    def compute(self, batch: Batch, mu: Optional[float] = None, training: bool = True,
                backward: bool = True) -> Tuple[LossParts, Dict[str, np.ndarray]]:
        """Joint loss on one batch and, when backward, gradients for every parameter."""
        mu = self.config.mu if mu is None else mu
        if mu < 0:
            raise ShapeError(f"Mixing weight mu must be >= 0, got {mu}")
        y_hat, z_hat = self.forward(batch, training)
        loss_a, grad_a = mse_loss(y_hat, batch.Y)
        if z_hat is not None:
            loss_v, grad_v = mse_loss(z_hat, batch.Zc)
        else:
            loss_v, grad_v = 0.0, None
        parts = LossParts(loss_a + mu * loss_v, loss_a, loss_v)
        if not backward or not parts.is_finite():
            return parts, {}

        self.zero_grads()
        d_h = self.audio_head.backward(grad_a)
        if self.visual_head is not None:
            d_h = d_h + self.visual_head.backward(mu * grad_v)
        self.encode_backward(self.trunk.backward(d_h))
        return parts, self.gradients()

    # grad_check protocol
    def loss(self, batch: Batch, mu: Optional[float] = None) -> float:
        return self.compute(batch, mu, backward=False)[0].total

    def loss_and_grads(self, batch: Batch, mu: Optional[float] = None) -> Tuple[float, Dict[str, np.ndarray]]:
        parts, grads = self.compute(batch, mu)
        return parts.total, grads

    def predict(self, X: np.ndarray, Z: np.ndarray, batch_size: int = PREDICT_BATCH):
        """Inference-mode forward in chunks; returns (Y_hat, Z_hat or None)."""
        ys, zs = [], []
        for start in range(0, max(X.shape[0], 1), batch_size):
            x, z = X[start:start + batch_size], Z[start:start + batch_size]
            b = Batch(x, z, np.zeros((len(x), N_BINS), X.dtype), np.zeros((len(x), IMG_SIZE), X.dtype))
            y_hat, z_hat = self.forward(b, training=False)
            ys.append(y_hat)
            if z_hat is not None:
                zs.append(z_hat)
        return np.concatenate(ys), (np.concatenate(zs) if zs else None)


class AVDCNN(SpeechEnhancer):
    """Late fusion: separate audio and visual conv branches, codes concatenated audio-first."""

    kind = "avdcnn"

    def _build_encoder(self):
        cfg = self.config
        self.audio = Sequential.from_specs(cfg.audio_specs(), (N_BINS, CONTEXT_WIDTH, 1), cfg.init, [self.seed, 1])
        # kernels run along (24-axis, 16-axis): the branch sees each stack transposed
        self.visual = Sequential.from_specs(cfg.visual_specs(), (IMG_W, IMG_H, IMG_C * CONTEXT_WIDTH),
                                            cfg.init, [self.seed, 2])
        self.merged_width = self.audio.out_width + self.visual.out_width
        if self.merged_width != REFERENCE_MERGED_WIDTH:
            logger.warning(
                f"MODEL | merged width {self.merged_width} "
                f"({self.audio.out_width} audio + {self.visual.out_width} visual) "
                f"differs from the reference width {REFERENCE_MERGED_WIDTH}"
            )

    @property
    def code_width(self) -> int:
        return self.merged_width

    def encoders(self):
        return [self.audio, self.visual]

    def forward_audio(self, X: np.ndarray, training: bool = False) -> np.ndarray:
        return self.audio.forward(X, training).reshape(X.shape[0], -1)

    def forward_visual(self, Z: np.ndarray, training: bool = False) -> np.ndarray:
        return self.visual.forward(Z.transpose(0, 2, 1, 3), training).reshape(Z.shape[0], -1)

    def fuse_forward(self, A: np.ndarray, V: np.ndarray, training: bool = False):
        return self.heads_forward(np.concatenate([A, V], axis=1), training)

    def encode(self, batch, training):
        return np.concatenate([self.forward_audio(batch.X, training), self.forward_visual(batch.Z, training)], axis=1)

    def encode_backward(self, d_code):
        wa = self.audio.out_width
        b = d_code.shape[0]
        self.audio.backward(d_code[:, :wa].reshape(b, *self.audio.out_shape))
        self.visual.backward(d_code[:, wa:].reshape(b, *self.visual.out_shape))


class ADCNN(SpeechEnhancer):
    """Audio-only ablation: the AVDCNN with every visual part disconnected."""

    kind = "adcnn"
    has_visual_head = False
    uses_visual = False

    def _build_encoder(self):
        cfg = self.config
        self.audio = Sequential.from_specs(cfg.audio_specs(), (N_BINS, CONTEXT_WIDTH, 1), cfg.init, [self.seed, 1])

    @property
    def code_width(self) -> int:
        return self.audio.out_width

    def encoders(self):
        return [self.audio]

    def forward_audio(self, X: np.ndarray, training: bool = False) -> np.ndarray:
        return self.audio.forward(X, training).reshape(X.shape[0], -1)

    def encode(self, batch, training):
        return self.forward_audio(batch.X, training)

    def encode_backward(self, d_code):
        self.audio.backward(d_code.reshape(d_code.shape[0], *self.audio.out_shape))


class AVDCNNEF(SpeechEnhancer):
    """Early fusion: one united conv stack over a 257 x 29 x 1 audio+image canvas."""

    kind = "avdcnn_ef"

    def _build_encoder(self):
        cfg = self.config
        specs = cfg.audio_specs(prefix="u", pool_w=cfg.ef_pool_w)
        self.united = Sequential.from_specs(specs, (EF_HEIGHT, EF_WIDTH, 1), cfg.init, [self.seed, 3])

    @property
    def code_width(self) -> int:
        return self.united.out_width

    def encoders(self):
        return [self.united]

    def encode(self, batch, training):
        return self.united.forward(assemble_early_fusion(batch.X, batch.Z), training).reshape(len(batch), -1)

    def encode_backward(self, d_code):
        self.united.backward(d_code.reshape(d_code.shape[0], *self.united.out_shape))


def assemble_early_fusion(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """
    B x 257 x 29 x 1 canvas: columns 0-4 hold the audio block; columns 5-28 hold
    the images, channel c / context frame f occupying rows c*80 + f*16 .. +16.
    Rows 240-256 of the image region stay zero.
    """
    b = X.shape[0]
    if Z.shape[0] != b:
        raise ShapeError(f"Audio batch {b} and visual batch {Z.shape[0]} differ")
    out = np.zeros((b, EF_HEIGHT, EF_WIDTH, 1), dtype=np.result_type(X, Z))
    out[:, :, :CONTEXT_WIDTH, 0] = X[..., 0]
    for c in range(IMG_C):
        for f in range(CONTEXT_WIDTH):
            row = c * EF_FRAME_ROWS + f * IMG_H
            out[:, row:row + IMG_H, CONTEXT_WIDTH:, 0] = Z[:, :, :, f * IMG_C + c]
    return out


def build_avdcnn(config: Optional[AVDCNNConfig] = None, seed: int = 0) -> AVDCNN:
    return AVDCNN(config, seed)


def build_adcnn(config: Optional[AVDCNNConfig] = None, seed: int = 0) -> ADCNN:
    return ADCNN(config, seed)


def build_avdcnn_ef(config: Optional[AVDCNNConfig] = None, seed: int = 0) -> AVDCNNEF:
    model = AVDCNNEF(config, seed)
    late = AVDCNN(model.config, seed).parameter_count()
    logger.info(
        f"MODEL | early-fusion parameters {model.parameter_count():,} vs late-fusion {late:,} "
        f"(ratio {model.parameter_count() / late:.2f})"
    )
    return model


_BUILDERS = {"avdcnn": build_avdcnn, "adcnn": build_adcnn, "avdcnn_ef": build_avdcnn_ef}


def build_model(kind: str, config: Optional[AVDCNNConfig] = None, seed: int = 0) -> SpeechEnhancer:
    if kind not in _BUILDERS:
        raise ShapeError(f"Unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    return _BUILDERS[kind](config, seed)


# ============================================================================
# UTTERANCE INPUTS / ENHANCEMENT
# ============================================================================

@dataclass
class UtteranceInputs:
    """Network inputs for one utterance after alignment."""
    X: np.ndarray                 # T x 257 x 5 x 1
    Z: np.ndarray                 # T x 16 x 24 x 15
    central: np.ndarray           # T x 1152 normalized central mouth images
    image_stats: ImageStats
    n_frames: int


def check_alignment(audio_t: int, video_t: int) -> int:
    """Aligned length; raises when the streams disagree by more than max(2, 5%)."""
    tolerance = max(2, int(0.05 * max(audio_t, video_t)))
    if abs(audio_t - video_t) > tolerance:
        raise StreamMismatchError(
            f"Audio has {audio_t} frames but video has {video_t} (tolerance {tolerance})"
        )
    return align_streams(audio_t, video_t)


def utterance_inputs(norm_logpow: np.ndarray, images: Optional[np.ndarray]) -> UtteranceInputs:
    """Context blocks for both streams, truncated to the aligned length first."""
    audio_t = norm_logpow.shape[0]
    if images is None:
        images = np.zeros((audio_t, IMG_H, IMG_W, IMG_C), np.float32)
    t = check_alignment(audio_t, len(images))
    normed, stats = normalize_images(images[:t])
    X = context_window(norm_logpow[:t])[..., None].astype(np.float32)
    Z = visual_stacks(normed).astype(np.float32)
    central = normed.reshape(t, -1).astype(np.float32)
    return UtteranceInputs(X=X, Z=Z, central=central, image_stats=stats, n_frames=t)


@dataclass
class EnhanceResult:
    waveform: Waveform
    mouths: Optional[np.ndarray]      # T x 16 x 24 x 3 raw-range reconstructions
    n_frames: int


def enhance_utterance(model: SpeechEnhancer, noisy: Waveform, images: Optional[np.ndarray] = None,
                      batch_size: int = PREDICT_BATCH) -> EnhanceResult:
    """
    Enhance one utterance: predict normalized log power per frame, undo the noisy
    utterance's normalization, rebuild amplitudes and borrow the noisy phase.
    """
    if model.uses_visual and images is None:
        raise StreamMismatchError(f"{model.kind} needs the mouth-image stream")
    frames = stft(noisy)
    norm, stats = normalize_utterance(frames)
    inputs = utterance_inputs(norm, images)

    y_hat, z_hat = model.predict(inputs.X, inputs.Z, batch_size)
    check_finite(y_hat, f"{model.kind} prediction")
    logpow = np.minimum(denormalize(y_hat, stats), LOGPOW_CEIL)
    enhanced = istft(np.exp(logpow / 2.0), frames.phase[:inputs.n_frames])
    waveform = Waveform(fit_length(enhanced.samples, len(noisy)), noisy.rate)

    mouths = None
    if z_hat is not None and images is not None:
        mouths = denormalize_images(z_hat, inputs.image_stats).reshape(-1, IMG_H, IMG_W, IMG_C).astype(np.float32)
    return EnhanceResult(waveform=waveform, mouths=mouths, n_frames=inputs.n_frames)


# ============================================================================
# CHECKPOINTS
# ============================================================================

@dataclass
class LoadedModel:
    model: SpeechEnhancer
    meta: Dict[str, str]
    extra: Dict[str, np.ndarray] = field(default_factory=dict)


def model_meta(model: SpeechEnhancer) -> Dict[str, str]:
    meta = {"kind": model.kind, "seed": str(model.seed), "parameters": str(model.parameter_count()),
            "code_width": str(model.code_width)}
    meta.update({f"model.{k}": _render(v) for k, v in model.config.to_dict().items()})
    return meta


def save_model(model: SpeechEnhancer, directory: PathLike, meta: Optional[Dict[str, str]] = None,
               extra: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """Checkpoint = parameters + running stats (+ extra tensors such as optimizer state)."""
    header = model_meta(model)
    header.update(meta or {})
    tensors = dict(model.state_dict())
    tensors.update(extra or {})
    path = save_checkpoint(directory, tensors, header)
    logger.info(f"CKPT | {model.kind} saved to {directory}")
    return path


def read_model(directory: PathLike) -> LoadedModel:
    tensors, meta = load_checkpoint(directory)
    kind = meta.get("kind")
    if kind not in MODEL_KINDS:
        raise StreamMismatchError(f"{directory}: unknown model kind '{kind}'")
    config = AVDCNNConfig.from_mapping(meta)
    model = build_model(kind, config, int(meta.get("seed", 0)))
    model.load_state_dict(tensors)
    own = set(model.parameters()) | set(model.buffers())
    return LoadedModel(model=model, meta=meta, extra={k: v for k, v in tensors.items() if k not in own})


def load_model(directory: PathLike) -> SpeechEnhancer:
    return read_model(directory).model


class StreamMismatchError(AVSEError):
    """Raised when audio and visual streams (or a checkpoint) do not line up."""
    pass
