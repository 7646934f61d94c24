"""
Minimal Layer Engine

Forward/backward pairs for the handful of layers the enhancer needs (valid 2-D
convolution, max pooling, fully connected, batch norm, dropout, sigmoid), an MSE
loss, RMSprop, and a central-difference gradient checker.

Tensors are plain row-major numpy arrays, batch first:
  images / spectra blocks  B x H x W x C
  flat features            B x D
Parameters are stored as float32; everything also runs in float64 for checking.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from shared import AVSEError

logger = logging.getLogger('avse')

# Configuration
PARAM_DTYPE = np.float32
BN_MOMENTUM = 0.99
BN_EPS = 1e-5
RMS_RHO = 0.9
RMS_EPS = 1e-8
GRADCHECK_H = 1e-3
GRADCHECK_FLOOR = 1e-8
ACTIVATIONS = ("linear", "sigmoid")
INIT_MODES = ("uniform", "scaled")


# ============================================================================
# TYPES
# ============================================================================

@dataclass
class LayerSpec:
    """One row of a layer table."""
    kind: str                                   # conv2d | maxpool | fc
    kernel: Tuple[int, int] = (1, 1)            # conv kernel or pool window
    units: int = 0                              # filters or neurons
    activation: str = "linear"
    batchnorm: bool = False
    dropout: float = 0.0
    center: bool = True                         # learn a batch-norm shift

    def __post_init__(self):
        if self.kind not in ("conv2d", "maxpool", "fc"):
            raise ShapeError(f"Unknown layer kind '{self.kind}'")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"Unknown activation '{self.activation}'")
        if not 0.0 <= self.dropout < 1.0:
            raise ShapeError(f"Dropout rate must be in [0, 1), got {self.dropout}")


@dataclass
class OptimizerState:
    """RMSprop running mean-square accumulators, one per parameter."""
    lr: float = 1e-4
    rho: float = RMS_RHO
    eps: float = RMS_EPS
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"Non-finite values after {where}")
    return x


# ============================================================================
# FUNCTIONAL LAYERS
# ============================================================================

def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """
    Valid cross-correlation, stride 1.

    x: B x H x W x Cin (or H x W x Cin), w: kh x kw x Cin x Cout, b: Cout.
    Returns (out, cache) with out B x (H-kh+1) x (W-kw+1) x Cout.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    kh, kw, cin, cout = w.shape
    if x.ndim != 4 or x.shape[3] != cin:
        raise ShapeError(f"conv2d input {x.shape} does not match kernel {w.shape}")
    if kh > x.shape[1] or kw > x.shape[2]:
        raise ShapeError(f"Kernel {kh}x{kw} larger than input {x.shape[1]}x{x.shape[2]}")

    patches = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))  # B,Ho,Wo,C,kh,kw
    out = np.einsum('bhwcij,ijco->bhwo', patches, w, optimize=True) + b
    cache = (x, w, single)
    return (out[0] if single else out), cache


def conv2d_backward(dout: np.ndarray, cache):
    """Returns (dx, dw, db) for conv2d_forward."""
    x, w, single = cache
    if single:
        dout = dout[None]
    kh, kw, _, cout = w.shape
    expected = (x.shape[0], x.shape[1] - kh + 1, x.shape[2] - kw + 1, cout)
    if dout.shape != expected:
        raise ShapeError(f"conv2d upstream gradient {dout.shape}, expected {expected}")

    patches = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    dw = np.einsum('bhwcij,bhwo->ijco', patches, dout, optimize=True)
    db = dout.sum(axis=(0, 1, 2))

    padded = np.pad(dout, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    dpatches = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))  # B,H,W,Cout,kh,kw
    dx = np.einsum('bhwoij,ijco->bhwc', dpatches, w[::-1, ::-1], optimize=True)
    return (dx[0] if single else dx), dw, db


def maxpool_forward(x: np.ndarray, pool: Tuple[int, int] = (2, 1), arg: Optional[np.ndarray] = None):
    """
    Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped.
    A given arg reuses an earlier window routing instead of taking the argmax again.
    """
    ph, pw = pool
    bsz, h, wd, c = x.shape
    ho, wo = h // ph, wd // pw
    if ho < 1 or wo < 1:
        raise ShapeError(f"Pool {pool} larger than input {h}x{wd}")
    win = x[:, :ho * ph, :wo * pw, :].reshape(bsz, ho, ph, wo, pw, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(bsz, ho, wo, c, ph * pw)
    if arg is None:
        arg = win.argmax(axis=-1)
    elif arg.shape != win.shape[:-1]:
        raise ShapeError(f"Routing {arg.shape} does not match pooled shape {win.shape[:-1]}")
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, pool, arg)


def maxpool_backward(dout: np.ndarray, cache) -> np.ndarray:
    """Routes each upstream value to its window's argmax only."""
    shape, (ph, pw), arg = cache
    bsz, h, wd, c = shape
    ho, wo = h // ph, wd // pw
    dwin = np.zeros((bsz, ho, wo, c, ph * pw), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(bsz, ho, wo, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(bsz, ho * ph, wo * pw, c)
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :ho * ph, :wo * pw, :] = dwin
    return dx


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def activation_forward(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def activation_backward(dout: np.ndarray, y: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return dout * y * (1.0 - y)
    return dout


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, activation: str = "linear"):
    """y = act(x W + b); x is B x n_in (or n_in), W is n_in x n_out."""
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"fc input {x.shape} does not match weights {w.shape}")
    y = activation_forward(x @ w + b, activation)
    return (y[0] if single else y), (x, w, y, activation, single)


def fc_backward(dout: np.ndarray, cache):
    x, w, y, activation, single = cache
    if single:
        dout = dout[None]
    dz = activation_backward(dout, y, activation)
    dx = dz @ w.T
    return (dx[0] if single else dx), x.T @ dz, dz.sum(axis=0)


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS


def batchnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                      state: BatchNormState, training: bool):
    """
    Per-feature batch norm over every axis but the last (features or channels).
    Training normalizes with batch statistics and updates the running ones.
    """
    shape = x.shape
    flat = x.reshape(-1, shape[-1])
    if training:
        if shape[0] < 2:
            raise ShapeError("Batch norm in training mode needs a batch of at least 2")
        mean = flat.mean(axis=0)
        var = flat.var(axis=0)
        m = state.momentum
        state.running_mean = (m * state.running_mean + (1.0 - m) * mean).astype(state.running_mean.dtype)
        state.running_var = (m * state.running_var + (1.0 - m) * var).astype(state.running_var.dtype)
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (flat - mean) * inv_std
    out = (xhat * gamma + beta).reshape(shape)
    return out, (xhat, inv_std, gamma, shape, training)


def batchnorm_backward(dout: np.ndarray, cache):
    xhat, inv_std, gamma, shape, training = cache
    d = dout.reshape(-1, shape[-1])
    dgamma = (d * xhat).sum(axis=0)
    dbeta = d.sum(axis=0)
    dxhat = d * gamma
    if training:
        dx = inv_std * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
    else:
        dx = dxhat * inv_std
    return dx.reshape(shape), dgamma, dbeta


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator, training: bool):
    """Inverted dropout: kept units are scaled by 1/(1-rate); inference is identity."""
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"Dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return dout if mask is None else dout * mask


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean over the batch of squared L2 norms; gradient 2(pred-target)/B."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    bsz = pred.shape[0]
    diff = pred - target
    loss = float(np.sum(np.square(diff, dtype=np.float64)) / bsz)
    return loss, (2.0 / bsz) * diff


# ============================================================================
# LAYERS
# ============================================================================

def init_uniform(shape: Tuple[int, ...], fan_in: int, fan_out: int, mode: str,
                 rng: np.random.Generator) -> np.ndarray:
    if mode == "uniform":
        limit = 1.0
    elif mode == "scaled":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise ShapeError(f"Unknown init mode '{mode}', expected one of {INIT_MODES}")
    return rng.uniform(-limit, limit, shape).astype(PARAM_DTYPE)


class Layer:
    """Base layer: named params/grads/buffers plus forward/backward."""

    def __init__(self, name: str):
        self.name = name
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        raise NotImplementedError

    def key(self, local: str) -> str:
        return f"{self.name}.{local}"


class _Normed(Layer):
    """Shared batch-norm plumbing for conv and fc layers."""

    def _init_bn(self, width: int, batchnorm: bool, center: bool = True):
        self.batchnorm = batchnorm
        if batchnorm:
            self.params[self.key("gamma")] = np.ones(width, PARAM_DTYPE)
            if center:
                self.params[self.key("beta")] = np.zeros(width, PARAM_DTYPE)
            self.buffers[self.key("running_mean")] = np.zeros(width, PARAM_DTYPE)
            self.buffers[self.key("running_var")] = np.ones(width, PARAM_DTYPE)

    def _bn_forward(self, z: np.ndarray, training: bool) -> np.ndarray:
        if not self.batchnorm:
            self._bn_cache = None
            return z
        state = BatchNormState(self.buffers[self.key("running_mean")], self.buffers[self.key("running_var")])
        gamma, beta = self.params[self.key("gamma")], self.params.get(self.key("beta"), 0.0)
        out, self._bn_cache = batchnorm_forward(z, gamma, beta, state, training)
        self.buffers[self.key("running_mean")] = state.running_mean
        self.buffers[self.key("running_var")] = state.running_var
        return out

    def _bn_backward(self, dout: np.ndarray) -> np.ndarray:
        if self._bn_cache is None:
            return dout
        dz, dgamma, dbeta = batchnorm_backward(dout, self._bn_cache)
        self.grads[self.key("gamma")] = dgamma
        if self.key("beta") in self.params:
            self.grads[self.key("beta")] = dbeta
        return dz


class Conv2D(_Normed):
    """conv -> (batch norm) -> activation."""

    def __init__(self, name: str, kernel: Tuple[int, int], cin: int, cout: int, activation: str = "linear",
                 batchnorm: bool = False, init: str = "scaled", rng: Optional[np.random.Generator] = None,
                 center: bool = True):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        kh, kw = kernel
        self.kernel, self.cin, self.cout, self.activation = (kh, kw), cin, cout, activation
        self.params[self.key("w")] = init_uniform((kh, kw, cin, cout), kh * kw * cin, kh * kw * cout, init, rng)
        if not batchnorm:  # beta takes the bias role under batch norm
            self.params[self.key("b")] = (init_uniform((cout,), 1, 1, init, rng) if init == "uniform"
                                          else np.zeros(cout, PARAM_DTYPE))
        self._init_bn(cout, batchnorm, center)

    def output_shape(self, in_shape):
        h, w, c = in_shape
        kh, kw = self.kernel
        if c != self.cin or kh > h or kw > w:
            raise ShapeError(f"{self.name}: kernel {kh}x{kw}x{self.cin} does not fit input {in_shape}")
        return (h - kh + 1, w - kw + 1, self.cout)

    def forward(self, x, training, rng):
        z, self._conv_cache = conv2d_forward(x, self.params[self.key("w")], self.params.get(self.key("b"), 0.0))
        z = self._bn_forward(z, training)
        self._y = activation_forward(z, self.activation)
        return self._y

    def backward(self, dout):
        dz = activation_backward(dout, self._y, self.activation)
        dz = self._bn_backward(dz)
        dx, dw, db = conv2d_backward(dz, self._conv_cache)
        self.grads[self.key("w")] = dw
        if self.key("b") in self.params:
            self.grads[self.key("b")] = db
        return dx


class MaxPool(Layer):
    def __init__(self, name: str, pool: Tuple[int, int] = (2, 1)):
        super().__init__(name)
        self.pool = tuple(pool)
        self.frozen = False
        self._cache = None

    def output_shape(self, in_shape):
        h, w, c = in_shape
        return (h // self.pool[0], w // self.pool[1], c)

    def forward(self, x, training, rng):
        arg = None
        if self.frozen and self._cache is not None and self._cache[0] == x.shape:
            arg = self._cache[2]
        out, self._cache = maxpool_forward(x, self.pool, arg)
        return out

    def backward(self, dout):
        return maxpool_backward(dout, self._cache)


class Dense(_Normed):
    """fc -> (batch norm) -> activation -> (dropout). Input is flattened per sample."""

    def __init__(self, name: str, n_in: int, n_out: int, activation: str = "linear", batchnorm: bool = False,
                 dropout: float = 0.0, init: str = "scaled", rng: Optional[np.random.Generator] = None,
                 center: bool = True):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out, self.activation, self.dropout = n_in, n_out, activation, dropout
        self.params[self.key("w")] = init_uniform((n_in, n_out), n_in, n_out, init, rng)
        if not batchnorm:
            self.params[self.key("b")] = (init_uniform((n_out,), 1, 1, init, rng) if init == "uniform"
                                          else np.zeros(n_out, PARAM_DTYPE))
        self._init_bn(n_out, batchnorm, center)

    def output_shape(self, in_shape):
        if int(np.prod(in_shape)) != self.n_in:
            raise ShapeError(f"{self.name}: expects {self.n_in} inputs, got {in_shape}")
        return (self.n_out,)

    def forward(self, x, training, rng):
        self._in_shape = x.shape
        flat = x.reshape(x.shape[0], -1)
        z, self._fc_cache = fc_forward(flat, self.params[self.key("w")], self.params.get(self.key("b"), 0.0))
        z = self._bn_forward(z, training)
        self._y = activation_forward(z, self.activation)
        out, self._mask = dropout_forward(self._y, self.dropout, rng, training)
        return out

    def backward(self, dout):
        d = dropout_backward(dout, self._mask)
        d = activation_backward(d, self._y, self.activation)
        d = self._bn_backward(d)
        dx, dw, db = fc_backward(d, self._fc_cache)
        self.grads[self.key("w")] = dw
        if self.key("b") in self.params:
            self.grads[self.key("b")] = db
        return dx.reshape(self._in_shape)


def build_layer(spec: LayerSpec, name: str, in_shape: Tuple[int, ...], init: str,
                rng: np.random.Generator) -> Layer:
    """Instantiate a LayerSpec against a known per-sample input shape."""
    if spec.kind == "conv2d":
        return Conv2D(name, spec.kernel, in_shape[-1], spec.units, spec.activation, spec.batchnorm, init, rng,
                      spec.center)
    if spec.kind == "maxpool":
        return MaxPool(name, spec.kernel)
    return Dense(name, int(np.prod(in_shape)), spec.units, spec.activation, spec.batchnorm, spec.dropout, init, rng,
                 spec.center)


# ============================================================================
# CONTAINER
# ============================================================================

class Sequential:
    """An ordered layer chain with shape bookkeeping and finite checks."""

    def __init__(self, layers: Sequence[Layer], in_shape: Tuple[int, ...], seed: int = 0):
        self.layers: List[Layer] = list(layers)
        self.in_shape = tuple(in_shape)
        self.shapes: List[Tuple[int, ...]] = [self.in_shape]
        for layer in self.layers:
            self.shapes.append(tuple(layer.output_shape(self.shapes[-1])))
        self.rng = np.random.default_rng(seed)

    @classmethod
    def from_specs(cls, specs: Sequence[Tuple[str, LayerSpec]], in_shape: Tuple[int, ...],
                   init: str = "scaled", seed: int = 0) -> 'Sequential':
        rng = np.random.default_rng(seed)
        layers, shape = [], tuple(in_shape)
        for name, spec in specs:
            layer = build_layer(spec, name, shape, init, rng)
            shape = tuple(layer.output_shape(shape))
            layers.append(layer)
        return cls(layers, in_shape, seed)

    @property
    def out_shape(self) -> Tuple[int, ...]:
        return self.shapes[-1]

    @property
    def out_width(self) -> int:
        return int(np.prod(self.out_shape))

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        if tuple(x.shape[1:]) != self.in_shape:
            raise ShapeError(f"Expected per-sample input {self.in_shape}, got {tuple(x.shape[1:])}")
        for layer in self.layers:
            x = check_finite(layer.forward(x, training, self.rng), layer.name)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self) -> Dict[str, np.ndarray]:
        return {k: v for layer in self.layers for k, v in layer.params.items()}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {k: v for layer in self.layers for k, v in layer.grads.items()}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {k: v for layer in self.layers for k, v in layer.buffers.items()}

    def zero_grads(self):
        for layer in self.layers:
            layer.grads = {k: np.zeros_like(v) for k, v in layer.params.items()}

    def astype(self, dtype) -> 'Sequential':
        for layer in self.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.buffers = {k: v.astype(dtype) for k, v in layer.buffers.items()}
        return self

    def reseed(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def freeze_routing(self, frozen: bool = True):
        """Pin every pool to the argmax of its last forward pass."""
        for layer in self.layers:
            if isinstance(layer, MaxPool):
                layer.frozen = frozen

    def load(self, values: Dict[str, np.ndarray]):
        """Copy matching params/buffers in place; unknown names are ignored."""
        for layer in self.layers:
            for store in (layer.params, layer.buffers):
                for k in store:
                    if k in values:
                        if np.shape(values[k]) != store[k].shape:
                            raise ShapeError(f"{k}: shape {np.shape(values[k])} != {store[k].shape}")
                        store[k] = np.asarray(values[k], dtype=store[k].dtype).copy()

    # Regression helpers so a bare chain can be gradient-checked and trained.
    def loss(self, x: np.ndarray, target: np.ndarray) -> float:
        return mse_loss(self.forward(x, training=True), target)[0]

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        self.zero_grads()
        loss, grad = mse_loss(self.forward(x, training=True), target)
        self.backward(grad)
        return loss, self.gradients()


# ============================================================================
# OPTIMIZER
# ============================================================================

class RMSprop:
    """v <- rho v + (1 - rho) g^2 ;  p <- p - lr g / (sqrt(v) + eps)."""

    def __init__(self, lr: float = 1e-4, rho: float = RMS_RHO, eps: float = RMS_EPS,
                 state: Optional[OptimizerState] = None):
        self.state = state or OptimizerState(lr=lr, rho=rho, eps=eps)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        st = self.state
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
            v = st.v.get(name)
            if v is None:
                v = np.zeros(p.shape, dtype=np.float64)
            v = st.rho * v + (1.0 - st.rho) * np.square(g, dtype=np.float64)
            st.v[name] = v
            p -= (st.lr * g / (np.sqrt(v) + st.eps)).astype(p.dtype)


def rmsprop_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
                 state: OptimizerState) -> Dict[str, np.ndarray]:
    RMSprop(state=state).step(params, grads)
    return params


# ============================================================================
# GRADIENT CHECK
# ============================================================================

def numeric_gradient(f: Callable[[], float], x: np.ndarray, index, h: float = GRADCHECK_H) -> float:
    """Central difference of f() with respect to x[index] (x is perturbed in place)."""
    old = x[index]
    x[index] = old + h
    fp = f()
    x[index] = old - h
    fm = f()
    x[index] = old
    return (fp - fm) / (2.0 * h)


def relative_error(analytic: float, numeric: float, floor: float = GRADCHECK_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(network, inputs, target=None, h: float = GRADCHECK_H, per_param: int = 8,
               seed: int = 0, grad_transform: Optional[Callable[[Dict[str, np.ndarray]], Dict]] = None,
               floor_scale: float = 0.0) -> float:
    """
    Max relative error |a - n| / max(|a|, |n|, GRADCHECK_FLOOR) between analytic and
    central-difference gradients. A positive floor_scale raises the floor to
    floor_scale times the largest analytic gradient; it is off by default.

    The network is deep-copied to float64. It must offer parameters(),
    loss(inputs, target) and loss_and_grads(inputs, target); reseed(seed), when
    present, is called before every evaluation so dropout masks repeat.
    freeze_routing(True), when present, pins max-pool windows to the analytic
    pass so the differences stay on one linear piece.
    """
    net = copy.deepcopy(network)
    net.astype(np.float64)
    inputs = _to64(inputs)
    target = _to64(target)
    reseed = getattr(net, "reseed", None)

    def evaluate() -> float:
        if reseed:
            reseed(seed)
        return net.loss(inputs, target)

    if reseed:
        reseed(seed)
    _, grads = net.loss_and_grads(inputs, target)
    freeze = getattr(net, "freeze_routing", None)
    if freeze:
        freeze(True)
    grads = {k: np.array(v, dtype=np.float64) for k, v in grads.items()}
    if grad_transform is not None:
        grads = grad_transform(grads)
    floor = GRADCHECK_FLOOR
    if floor_scale > 0.0:
        floor = max(floor, floor_scale * max((float(np.max(np.abs(g))) for g in grads.values() if g.size), default=0.0))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in net.parameters().items():
        flat_count = p.size
        picks = np.arange(flat_count) if flat_count <= per_param else rng.choice(flat_count, per_param, replace=False)
        for flat in picks:
            idx = np.unravel_index(int(flat), p.shape)
            numeric = numeric_gradient(evaluate, p, idx, h)
            worst = max(worst, relative_error(float(grads[name][idx]), numeric, floor))
    logger.debug(f"GRADCHECK | max relative error {worst:.3e}")
    return worst


def _to64(obj):
    if obj is None:
        return None
    if isinstance(obj, np.ndarray):
        return obj.astype(np.float64)
    if hasattr(obj, "astype"):
        return obj.astype(np.float64)
    return obj


class ShapeError(AVSEError):
    """Raised when tensor shapes do not fit a layer or each other."""
    pass


class NonFiniteError(AVSEError):
    """Raised when NaN or Inf shows up in a forward pass or loss."""
    pass
