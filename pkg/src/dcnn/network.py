"""The motif-detection CNN: parameters, forward/backward, loss, Adam,
flat gradient views for the aggregation strategies, and checkpoints.

Architecture, per sample: conv1d (valid) -> activation -> maxpool ->
flatten -> dense(1) -> sigmoid.  The loss is mean binary cross-entropy;
backward fuses sigmoid and BCE so the logit gradient is just
(p - y) / B.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import (
    CheckpointError,
    InternalConsistencyError,
    ShapeError,
    TrainingDivergedError,
    ValidationError,
)

PROB_CLAMP = 1e-7

CHECKPOINT_MAGIC = b"DCNN"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class ModelConfig:
    n_filters: int = 15
    filter_width: int = 10
    pool_window: int = 35
    pool_stride: int = 35
    conv_activation: str = "relu"
    seq_length: int = 1500

    def __post_init__(self):
        for name in ("n_filters", "filter_width", "pool_window", "pool_stride"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.conv_activation not in _ACTIVATIONS:
            raise ValidationError(
                f"conv_activation must be one of {_ACTIVATIONS}, "
                f"got {self.conv_activation!r}"
            )
        if self.seq_length < self.filter_width:
            raise ValidationError(
                f"seq_length {self.seq_length} is shorter than filter_width "
                f"{self.filter_width}"
            )
        if self.conv_out_length < self.pool_window:
            raise ValidationError(
                f"conv output length {self.conv_out_length} is shorter than "
                f"pool_window {self.pool_window}"
            )

    @property
    def conv_out_length(self) -> int:
        return self.seq_length - self.filter_width + 1

    @property
    def pool_out_length(self) -> int:
        return (self.conv_out_length - self.pool_window) // self.pool_stride + 1

    @property
    def flat_dim(self) -> int:
        return self.pool_out_length * self.n_filters

    @property
    def param_count(self) -> int:
        conv = self.n_filters * self.filter_width * 4 + self.n_filters
        return conv + self.flat_dim + 1


@dataclass
class ModelParams:
    conv_filters: np.ndarray  # [F, W, 4]
    conv_bias: np.ndarray  # [F]
    dense_weights: np.ndarray  # [D, 1]
    dense_bias: np.ndarray  # scalar (rank 0)


@dataclass
class Gradients:
    conv_filters: np.ndarray
    conv_bias: np.ndarray
    dense_weights: np.ndarray
    dense_bias: np.ndarray


_TENSOR_FIELDS = ("conv_filters", "conv_bias", "dense_weights", "dense_bias")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def fresh_adam_state(config: ModelConfig, dtype=np.float32, **hyper) -> AdamState:
    n = config.param_count
    return AdamState(m=np.zeros(n, dtype=dtype), v=np.zeros(n, dtype=dtype), **hyper)


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    conv_fan_in = config.filter_width * 4
    conv_fan_out = config.filter_width * config.n_filters
    conv_bound = np.sqrt(6.0 / (conv_fan_in + conv_fan_out))
    dense_bound = np.sqrt(6.0 / (config.flat_dim + 1))
    return ModelParams(
        conv_filters=rng.uniform(
            -conv_bound, conv_bound, size=(config.n_filters, config.filter_width, 4)
        ).astype(dtype),
        conv_bias=np.zeros(config.n_filters, dtype=dtype),
        dense_weights=rng.uniform(
            -dense_bound, dense_bound, size=(config.flat_dim, 1)
        ).astype(dtype),
        dense_bias=np.zeros((), dtype=dtype),
    )


@dataclass
class ForwardCache:
    params: ModelParams
    inputs: np.ndarray
    conv_out: np.ndarray
    argmax_rows: np.ndarray
    flat: np.ndarray
    probs: np.ndarray


def forward(params: ModelParams, batch, config: ModelConfig):
    """(probs in (0,1), cache for backward).  ``batch`` is a pipeline
    Batch or any object with .inputs [B, L, 4] and .labels."""
    x = batch.inputs
    if x.ndim != 3 or x.shape[1] != config.seq_length or x.shape[2] != 4:
        raise ShapeError(
            f"batch inputs {x.shape} do not match the model's expected "
            f"[B, {config.seq_length}, 4]"
        )
    conv_out = kernels.conv1d_forward(x, params.conv_filters, params.conv_bias)
    if config.conv_activation == "relu":
        act = kernels.relu(conv_out)
    else:
        act = conv_out
    pooled, argmax_rows = kernels.maxpool1d_forward(
        act, config.pool_window, config.pool_stride
    )
    flat = pooled.reshape(pooled.shape[0], -1)
    logits = kernels.dense_forward(flat, params.dense_weights, params.dense_bias)
    probs = kernels.sigmoid(logits)
    cache = ForwardCache(
        params=params,
        inputs=x,
        conv_out=conv_out,
        argmax_rows=argmax_rows,
        flat=flat,
        probs=probs,
    )
    return probs, cache


def _clamped(probs: np.ndarray) -> np.ndarray:
    return np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _check_labels(labels: np.ndarray) -> None:
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped away from
    {0, 1} by 1e-7."""
    _check_labels(labels)
    p = _clamped(np.asarray(probs))
    y = np.asarray(labels)
    per_sample = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    return float(per_sample.mean())


def bce_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(mean BCE)/d(p_i) on the clamped probabilities."""
    _check_labels(labels)
    p = _clamped(np.asarray(probs))
    y = np.asarray(labels)
    return (p - y) / (p * (1 - p)) / p.shape[0]


def backward(params: ModelParams, cache: ForwardCache, labels: np.ndarray,
             config: ModelConfig) -> Gradients:
    """Exact gradients of mean BCE w.r.t. every parameter tensor.

    Sigmoid and BCE are composed analytically, so the logit gradient is
    the numerically stable (p - y) / B with no division by p(1-p).
    """
    if cache.params is not params:
        raise InternalConsistencyError(
            "backward called with a cache produced by different params"
        )
    _check_labels(labels)
    batch_size = cache.probs.shape[0]
    if np.shape(labels) != (batch_size,):
        raise ShapeError(
            f"labels shape {np.shape(labels)} does not match batch of {batch_size}"
        )
    dtype = cache.flat.dtype
    dlogit = ((cache.probs - labels) / batch_size).astype(dtype, copy=False)
    grad_dense_w, grad_dense_b, dflat = kernels.dense_backward(
        cache.flat, params.dense_weights, dlogit
    )
    dpooled = dflat.reshape(batch_size, config.pool_out_length, config.n_filters)
    dact = kernels.maxpool1d_backward(
        cache.argmax_rows, dpooled, config.conv_out_length
    )
    if config.conv_activation == "relu":
        dconv = dact * kernels.relu_grad(cache.conv_out)
    else:
        dconv = dact
    grad_filters, grad_bias = kernels.conv1d_backward(
        cache.inputs, params.conv_filters, dconv
    )
    return Gradients(
        conv_filters=grad_filters,
        conv_bias=grad_bias,
        dense_weights=grad_dense_w,
        dense_bias=np.asarray(grad_dense_b, dtype=dtype).reshape(()),
    )


# ---------------------------------------------------------------------------
# Flat views (canonical order: conv_filters, conv_bias, dense_weights,
# dense_bias — row-major within each tensor)


def _flatten(obj) -> np.ndarray:
    parts = [np.asarray(getattr(obj, name)).reshape(-1) for name in _TENSOR_FIELDS]
    return np.concatenate(parts)


def _unflatten(vec: np.ndarray, config: ModelConfig, cls):
    vec = np.asarray(vec)
    if vec.ndim != 1 or vec.shape[0] != config.param_count:
        raise ShapeError(
            f"flat vector length {vec.shape} does not match parameter count "
            f"{config.param_count}"
        )
    shapes = (
        (config.n_filters, config.filter_width, 4),
        (config.n_filters,),
        (config.flat_dim, 1),
        (),
    )
    out = {}
    offset = 0
    for name, shape in zip(_TENSOR_FIELDS, shapes):
        size = int(np.prod(shape)) if shape else 1
        out[name] = vec[offset : offset + size].reshape(shape).copy()
        offset += size
    return cls(**out)


def flatten_grads(grads: Gradients) -> np.ndarray:
    return _flatten(grads)


def unflatten_grads(vec: np.ndarray, config: ModelConfig) -> Gradients:
    return _unflatten(vec, config, Gradients)


def flatten_params(params: ModelParams) -> np.ndarray:
    return _flatten(params)


def unflatten_params(vec: np.ndarray, config: ModelConfig) -> ModelParams:
    return _unflatten(vec, config, ModelParams)


def adam_step(params: ModelParams, grads: Gradients, state: AdamState,
              config: ModelConfig):
    """One Adam update; returns (new params, new state), both fresh values.

    t increments first, then m/v update and bias-corrected step
    theta <- theta - alpha * m_hat / (sqrt(v_hat) + eps).
    """
    theta = flatten_params(params)
    g = flatten_grads(grads).astype(theta.dtype, copy=False)
    if g.shape != theta.shape:
        raise ShapeError(
            f"gradient length {g.shape[0]} does not match parameter "
            f"length {theta.shape[0]}"
        )
    if not np.isfinite(g).all():
        raise TrainingDivergedError("non-finite gradient in optimizer step")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    theta = theta - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = unflatten_params(theta.astype(g.dtype, copy=False), config)
    new_state = replace(state, m=m.astype(g.dtype, copy=False),
                        v=v.astype(g.dtype, copy=False), t=t)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Checkpoints: magic "DCNN", u32 LE version, then per tensor
#   u16 name length, UTF-8 name, u8 rank, u32 dims, raw little-endian f32.

_META_NAME = "model_config"
_ACTIVATION_CODE = {"relu": 0.0, "linear": 1.0}
_ACTIVATION_FROM_CODE = {0: "relu", 1: "linear"}


def _config_meta(config: ModelConfig) -> np.ndarray:
    return np.array(
        [
            config.n_filters,
            config.filter_width,
            config.pool_window,
            config.pool_stride,
            config.seq_length,
            _ACTIVATION_CODE[config.conv_activation],
        ],
        dtype=np.float32,
    )


def save_checkpoint(params: ModelParams, config: ModelConfig, path) -> None:
    """Versioned binary dump of the parameters plus the architecture
    needed to interpret them; tensors are stored as 32-bit floats."""
    tensors = [(_META_NAME, _config_meta(config))]
    tensors += [(name, np.asarray(getattr(params, name))) for name in _TENSOR_FIELDS]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name, tensor in tensors:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint: (ModelParams, ModelConfig).

    The strict structural checks mean silently corrupted files surface
    as CheckpointError naming the offending field, never as garbage
    parameters.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: unexpected end in {what}")
        piece = blob[offset : offset + n]
        offset += n
        return piece

    offset = 0
    if take(4, "magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic bytes)")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    tensors = {}
    while offset < len(blob):
        (name_len,) = struct.unpack("<H", take(2, "tensor name length"))
        name = take(name_len, "tensor name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        count = 1
        for d in dims:
            count *= d
        data = np.frombuffer(take(4 * count, f"data of {name}"), dtype="<f4")
        tensors[name] = data.reshape(dims).astype(np.float32)

    if _META_NAME not in tensors:
        raise CheckpointError(f"checkpoint is missing the {_META_NAME} tensor")
    meta = tensors[_META_NAME]
    if meta.shape != (6,):
        raise CheckpointError(f"{_META_NAME} tensor has shape {meta.shape}, expected (6,)")
    activation = _ACTIVATION_FROM_CODE.get(int(meta[5]))
    if activation is None:
        raise CheckpointError(f"unknown activation code {meta[5]} in {_META_NAME}")
    try:
        config = ModelConfig(
            n_filters=int(meta[0]),
            filter_width=int(meta[1]),
            pool_window=int(meta[2]),
            pool_stride=int(meta[3]),
            conv_activation=activation,
            seq_length=int(meta[4]),
        )
    except ValidationError as exc:
        raise CheckpointError(f"invalid {_META_NAME}: {exc}") from exc

    expected_shapes = {
        "conv_filters": (config.n_filters, config.filter_width, 4),
        "conv_bias": (config.n_filters,),
        "dense_weights": (config.flat_dim, 1),
        "dense_bias": (),
    }
    fields = {}
    for name, shape in expected_shapes.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {name}")
        if tensors[name].shape != shape:
            raise CheckpointError(
                f"tensor {name} has shape {tensors[name].shape}, expected {shape}"
            )
        fields[name] = tensors[name]
    return ModelParams(**fields), config
