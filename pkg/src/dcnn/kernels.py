"""Dense numeric kernels for the motif CNN.

Valid (no padding, stride 1) 1-D convolution over one-hot channels,
windowed max pooling, a single-logit dense layer, and sigmoid/relu
activations, each with a hand-written backward pass.

All kernels are pure functions on numpy arrays in float32 or float64 and
accept an optional leading batch dimension. Reductions run in a fixed
order so identical inputs give bit-identical outputs: the convolution
forward accumulates bias first, then filter taps in ascending (tap,
channel) order, which makes it bit-equal to a naive triple loop; gradient
reductions go through single-threaded ``einsum``/``add.at`` paths that
never depend on thread scheduling.
"""

from __future__ import annotations

import numpy as np

from .errors import InternalConsistencyError, ShapeError, ValidationError

#: Supported floating precisions, keyed by config string.
PRECISIONS = {"f32": np.float32, "f64": np.float64}


def dtype_for(precision: str) -> np.dtype:
    """Map a precision name ('f32' or 'f64') to a numpy dtype."""
    try:
        return np.dtype(PRECISIONS[precision])
    except KeyError:
        raise ValidationError(
            f"unknown precision {precision!r}; expected one of {sorted(PRECISIONS)}"
        ) from None


def conv1d_forward(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution: out[..., i, f] = bias[f] + sum_{j,c} filters[f,j,c] * x[..., i+j, c].

    ``x`` is [..., L, C], ``filters`` is [F, W, C], ``bias`` is [F];
    returns [..., L-W+1, F].
    """
    x = np.asarray(x)
    filters = np.asarray(filters)
    bias = np.asarray(bias)
    if x.ndim < 2:
        raise ShapeError(f"conv1d input must be at least 2-D [L, C], got shape {x.shape}")
    if filters.ndim != 3:
        raise ShapeError(f"conv1d filters must be 3-D [F, W, C], got shape {filters.shape}")
    length, channels = x.shape[-2], x.shape[-1]
    n_filters, width, filter_channels = filters.shape
    if channels != filter_channels:
        raise ShapeError(
            f"conv1d channel mismatch: input has {channels} channels, "
            f"filters have {filter_channels}"
        )
    if bias.shape != (n_filters,):
        raise ShapeError(f"conv1d bias must have shape ({n_filters},), got {bias.shape}")
    if length < width:
        raise ShapeError(
            f"conv1d would produce an empty output: input length {length} < filter width {width}"
        )
    out_length = length - width + 1

    out = np.empty(x.shape[:-2] + (out_length, n_filters), dtype=x.dtype)
    out[...] = bias
    tmp = np.empty_like(out)
    # Fixed ascending (tap, channel) accumulation; one rounded multiply and
    # one rounded add per term, exactly like the scalar reference loop.
    for j in range(width):
        window = x[..., j : j + out_length, :]
        for c in range(channels):
            np.multiply(window[..., c, None], filters[:, j, c], out=tmp)
            out += tmp
    return out


def conv1d_backward(
    x: np.ndarray, filters: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv1d_forward w.r.t. filters and bias.

    grad_filters[f, j, c] = sum_{..., i} grad_out[..., i, f] * x[..., i+j, c];
    grad_bias[f] = sum over everything but f. The input gradient is not
    computed: the convolution is the first layer of the model.
    """
    x = np.asarray(x)
    filters = np.asarray(filters)
    grad_out = np.asarray(grad_out)
    n_filters, width, channels = filters.shape
    out_length = x.shape[-2] - width + 1
    expected = x.shape[:-2] + (out_length, n_filters)
    if grad_out.shape != expected:
        raise ShapeError(
            f"conv1d_backward grad_out shape {grad_out.shape} does not match "
            f"forward output shape {expected}"
        )
    flat_x = x.reshape(-1, *x.shape[-2:])
    flat_grad = grad_out.reshape(-1, out_length, n_filters)
    grad_filters = np.empty_like(filters)
    for j in range(width):
        window = flat_x[:, j : j + out_length, :]
        grad_filters[:, j, :] = np.einsum("bif,bic->fc", flat_grad, window)
    grad_bias = grad_out.reshape(-1, n_filters).sum(axis=0)
    return grad_filters, grad_bias


def maxpool1d_forward(
    x: np.ndarray, window: int, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel max over sliding windows.

    ``x`` is [..., T, F]; returns (pooled [..., n_out, F], argmax_rows)
    where n_out = (T - window)//stride + 1 and argmax_rows holds the input
    row index of each winning element (first occurrence on ties).
    """
    x = np.asarray(x)
    if window < 1 or stride < 1:
        raise ValidationError(f"maxpool window and stride must be >= 1, got {window}, {stride}")
    if x.ndim < 2:
        raise ShapeError(f"maxpool input must be at least 2-D [T, F], got shape {x.shape}")
    rows = x.shape[-2]
    if rows < window:
        raise ShapeError(
            f"maxpool would produce an empty output: input length {rows} < window {window}"
        )
    n_out = (rows - window) // stride + 1
    starts = np.arange(n_out) * stride
    gather = starts[:, None] + np.arange(window)
    windows = x[..., gather, :]  # [..., n_out, window, F]
    arg_in_window = np.argmax(windows, axis=-2)
    pooled = np.take_along_axis(windows, arg_in_window[..., None, :], axis=-2)
    pooled = pooled[..., 0, :]
    argmax_rows = starts[:, None] + arg_in_window
    return pooled, argmax_rows


def maxpool1d_backward(
    argmax_rows: np.ndarray, grad_out: np.ndarray, input_length: int
) -> np.ndarray:
    """Route pooled gradients back to the rows that won each window.

    All non-winning entries get zero, so the gradient mass is conserved:
    grad_input sums to grad_out.
    """
    argmax_rows = np.asarray(argmax_rows)
    grad_out = np.asarray(grad_out)
    if argmax_rows.shape != grad_out.shape:
        raise ShapeError(
            f"maxpool_backward argmax shape {argmax_rows.shape} does not match "
            f"grad_out shape {grad_out.shape}"
        )
    if argmax_rows.size and (argmax_rows.min() < 0 or argmax_rows.max() >= input_length):
        raise InternalConsistencyError(
            f"maxpool argmax row {int(argmax_rows.max())} outside input of length {input_length}"
        )
    n_channels = grad_out.shape[-1]
    lead = grad_out.shape[:-2]
    grad_in = np.zeros(lead + (input_length, n_channels), dtype=grad_out.dtype)
    flat_grad = grad_out.reshape(-1, grad_out.shape[-2], n_channels)
    flat_rows = argmax_rows.reshape(flat_grad.shape)
    flat_in = grad_in.reshape(-1, input_length, n_channels)
    batch_idx = np.arange(flat_grad.shape[0])[:, None, None]
    chan_idx = np.arange(n_channels)[None, None, :]
    np.add.at(flat_in, (batch_idx, flat_rows, chan_idx), flat_grad)
    return grad_in


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: float) -> np.ndarray:
    """Single-output affine layer: logit = bias + x . weights.

    ``x`` is [..., D], ``weights`` is [D, 1]; returns a scalar for 1-D
    input, else an array of the leading shape.
    """
    x = np.asarray(x)
    weights = np.asarray(weights)
    if weights.ndim != 2 or weights.shape[1] != 1:
        raise ShapeError(f"dense weights must have shape [D, 1], got {weights.shape}")
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"dense input feature size {x.shape[-1]} does not match weight rows {weights.shape[0]}"
        )
    return np.einsum("...d,d->...", x, weights[:, 0]) + bias


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of dense_forward: (grad_weights [D,1], grad_bias scalar, grad_input)."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    grad_out = np.asarray(grad_out)
    if grad_out.shape != x.shape[:-1]:
        raise ShapeError(
            f"dense_backward grad_out shape {grad_out.shape} does not match "
            f"input leading shape {x.shape[:-1]}"
        )
    flat_x = x.reshape(-1, x.shape[-1])
    flat_grad = grad_out.reshape(-1)
    grad_weights = np.einsum("nd,n->d", flat_x, flat_grad)[:, None]
    grad_bias = grad_out.sum(dtype=grad_out.dtype)
    grad_input = grad_out[..., None] * weights[:, 0]
    return grad_weights, grad_bias, grad_input


def sigmoid(x):
    """Logistic function, overflow-free for any finite input."""
    x = np.asarray(x)
    z = np.where(x >= 0, -x, x)  # always <= 0, so exp never overflows
    e = np.exp(z)
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_grad(y):
    """Derivative of sigmoid expressed in terms of its output: y * (1 - y)."""
    y = np.asarray(y)
    return y * (1.0 - y)


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, 0)


def relu_grad(x):
    """Derivative mask of relu w.r.t. its input: 1 where x > 0, else 0."""
    x = np.asarray(x)
    return (x > 0).astype(x.dtype if x.dtype.kind == "f" else np.float64)
