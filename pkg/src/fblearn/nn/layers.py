"""Layer primitives with hand-written backward passes.

Tensors are float64 numpy arrays in NCHW layout.  Every ``*_forward``
returns ``(out, cache)`` and the matching ``*_backward`` consumes the
upstream gradient plus that cache.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument

__all__ = [
    "leaky_relu",
    "leaky_relu_forward",
    "leaky_relu_backward",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool_forward",
    "maxpool_backward",
    "dense_forward",
    "dense_backward",
    "softmax_xent",
    "softmax_xent_batch",
]


def leaky_relu(x, slope: float = 0.33):
    """``x`` for ``x >= 0``, ``slope * x`` otherwise; works on scalars and arrays."""
    if np.ndim(x) == 0:
        return x if x >= 0 else slope * x
    x = np.asarray(x)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_forward(x, slope: float = 0.33):
    return leaky_relu(x, slope), (x >= 0, slope)


def leaky_relu_backward(dout, cache):
    positive, slope = cache
    return np.where(positive, dout, slope * dout)


def conv2d_forward(x, w, b, pad: int | None = None):
    """Stride-1 cross-correlation.

    Args:
        x: input, ``(N, C, H, W)``.
        w: kernels, ``(F, C, kh, kw)``.
        b: biases, ``(F,)``.
        pad: zero padding on each side; ``None`` means "same" padding,
            which requires odd kernel sizes.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise InvalidArgument(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    if b.shape != (w.shape[0],):
        raise InvalidArgument(f"conv2d bias shape {b.shape} does not match {w.shape[0]} filters")
    F, C, kh, kw = w.shape
    if pad is None:
        if kh % 2 == 0 or kw % 2 == 0:
            raise InvalidArgument("same padding needs odd kernel sizes")
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = int(pad)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise InvalidArgument(f"kernel {kh}x{kw} larger than padded input {xp.shape[2:]}")
    # (N, C, Ho, Wo, kh, kw) -> (N, Ho, Wo, C*kh*kw)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    N, _, Ho, Wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N, Ho, Wo, C * kh * kw)
    out = cols @ w.reshape(F, -1).T + b
    return out.transpose(0, 3, 1, 2), (x.shape, cols, w, ph, pw)


def conv2d_backward(dout, cache):
    """Returns ``(dx, dw, db)``."""
    x_shape, cols, w, ph, pw = cache
    F, C, kh, kw = w.shape
    N, _, Ho, Wo = dout.shape
    if dout.shape[1] != F:
        raise InvalidArgument(f"conv2d upstream gradient has {dout.shape[1]} channels, expected {F}")
    d = dout.transpose(0, 2, 3, 1)  # (N, Ho, Wo, F)
    db = d.sum(axis=(0, 1, 2))
    dw = (d.reshape(-1, F).T @ cols.reshape(-1, C * kh * kw)).reshape(w.shape)
    dcols = (d @ w.reshape(F, -1)).reshape(N, Ho, Wo, C, kh, kw)
    H, W = x_shape[2], x_shape[3]
    dxp = np.zeros((N, C, H + 2 * ph, W + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + Ho, j:j + Wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, ph:ph + H, pw:pw + W]
    return dx, dw, db


def maxpool_forward(x, size: int = 2, stride: int = 2):
    """Max pooling; trailing rows/columns that do not fill a window are dropped."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise InvalidArgument(f"maxpool expects NCHW input, got shape {x.shape}")
    N, C, H, W = x.shape
    if H < size or W < size:
        raise InvalidArgument(f"pool size {size} larger than input {H}x{W}")
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2:4]
    flat = win.reshape(N, C, Ho, Wo, size * size)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, size, stride)


def maxpool_backward(dout, cache):
    """Routes each upstream gradient to the first maximum of its window."""
    x_shape, arg, size, stride = cache
    if dout.shape != arg.shape:
        raise InvalidArgument(f"maxpool upstream gradient shape {dout.shape} != {arg.shape}")
    dx = np.zeros(x_shape)
    N, C, Ho, Wo = arg.shape
    di, dj = np.divmod(arg, size)
    rows = np.arange(Ho)[None, None, :, None] * stride + di
    cols = np.arange(Wo)[None, None, None, :] * stride + dj
    n = np.arange(N)[:, None, None, None]
    c = np.arange(C)[None, :, None, None]
    # add.at accumulates correctly when windows overlap (stride < size)
    np.add.at(dx, (n, c, rows, cols), dout)
    return dx


def dense_forward(x, w, b):
    """Affine map ``x @ w + b`` for ``x`` of shape ``(N, D)`` and ``w`` of ``(D, K)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise InvalidArgument(f"dense shape mismatch: input {x.shape}, weight {w.shape}, bias {b.shape}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax_xent(logits, label: int):
    """Cross-entropy of one logit vector against an integer label.

    Returns ``(loss, grad_logits)`` where the gradient is
    ``softmax(logits) - onehot(label)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise InvalidArgument(f"label {label} out of range for {logits.shape[-1]} classes")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    log_p = shifted - log_z
    grad = np.exp(log_p)
    grad[label] -= 1.0
    return float(-log_p[label]), grad


def softmax_xent_batch(logits, labels):
    """Mean cross-entropy over a batch; the gradient is scaled by ``1 / N``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    N, K = logits.shape
    if labels.shape != (N,):
        raise InvalidArgument(f"expected {N} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= K):
        raise InvalidArgument(f"labels out of range for {K} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(N)
    loss = -log_p[rows, labels].mean()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return float(loss), grad / N
