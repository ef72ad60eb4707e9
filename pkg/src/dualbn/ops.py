"""Dense layer operations with hand-derived backward passes.

Tensors are plain row-major float32 ndarrays.  Reductions (means, sums,
losses) accumulate in float64 and cast the result back to float32.  Every
forward that participates in training returns a cache consumed by its
paired backward; there is no autodiff graph.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation

DTYPE = np.float32


def as_f32(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


@dataclass
class Param:
    """A trainable tensor with its gradient and momentum buffers."""

    value: np.ndarray
    grad: np.ndarray = None
    velocity: np.ndarray = None
    name: str = ""
    weight_decay: bool = True  # gamma/beta and biases opt out

    def __post_init__(self):
        self.value = as_f32(self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape or self.velocity.shape != self.value.shape:
            raise ContractViolation(
                f"param '{self.name}': value {self.value.shape}, grad {self.grad.shape}, "
                f"velocity {self.velocity.shape} must share one shape"
            )

    def zero_grad(self):
        self.grad.fill(0.0)


# ---------------------------------------------------------------------------
# conv2d: cross-correlation over NCHW with OIHW kernels
# ---------------------------------------------------------------------------

def _conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0):
    """Cross-correlate x (N,C,H,W) with w (O,I,kH,kW).

    Returns (y, cache); cache feeds conv2d_backward.  Implemented as
    im2col + one GEMM; the column matrix is kept in the cache so the
    weight gradient reuses it.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ContractViolation(f"conv2d wants 4-d input/kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ContractViolation(
            f"conv2d channel mismatch: input {x.shape} has {x.shape[1]} channels, "
            f"kernel {w.shape} expects {w.shape[1]}"
        )
    if stride < 1 or pad < 0:
        raise ContractViolation(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    if h + 2 * pad < kh or wd + 2 * pad < kw:
        raise ContractViolation(
            f"conv2d kernel {w.shape} does not fit padded input {x.shape} with pad={pad}"
        )
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(wd, kw, stride, pad)

    if pad:
        xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
        xp[:, :, pad:pad + h, pad:pad + wd] = x
    else:
        xp = np.ascontiguousarray(x)

    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, Ho, Wo, C*kH*kW) with (C, kH, kW) fastest, matching w.reshape(O, -1)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    y = cols @ w.reshape(o, -1).T
    y = y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    cache = (cols, x.shape, w, stride, pad)
    return np.ascontiguousarray(y), cache


def conv2d_backward(cache, dy: np.ndarray):
    """Gradient of conv2d; returns (dx, dw)."""
    cols, x_shape, w, stride, pad = cache
    n, c, h, wd = x_shape
    o, _, kh, kw = w.shape
    _, _, ho, wo = dy.shape
    dy_cols = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * ho * wo, o)

    dw = (dy_cols.T @ cols).reshape(w.shape)

    dcols = dy_cols @ w.reshape(o, -1)  # (N*Ho*Wo, C*kH*kW)
    dcols = dcols.reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return np.ascontiguousarray(dx), dw


def conv2d_reference(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Quadruple-loop oracle for conv2d; float64 arithmetic, slow on purpose."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = _conv_out_size(h, kh, stride, pad)
    wo = _conv_out_size(wd, kw, stride, pad)
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    w64 = w.astype(np.float64)
    y = np.zeros((n, o, ho, wo), dtype=np.float64)
    for ni in range(n):
        for oi in range(o):
            for p in range(ho):
                for q in range(wo):
                    patch = xp[ni, :, p * stride:p * stride + kh, q * stride:q * stride + kw]
                    y[ni, oi, p, q] = np.sum(patch * w64[oi])
    return y.astype(DTYPE)


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine map x (N,D) @ w (D,K) + b (K)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ContractViolation(f"dense dimension mismatch: x {x.shape} vs w {w.shape}")
    if b.shape != (w.shape[1],):
        raise ContractViolation(f"dense bias shape {b.shape} must be ({w.shape[1]},)")
    y = x @ w + b
    return y, (x, w)


def dense_backward(cache, dy: np.ndarray):
    x, w = cache
    dx = dy @ w.T
    dw = x.T @ dy
    db = np.sum(dy, axis=0, dtype=np.float64).astype(dy.dtype)
    return dx, dw, db


# ---------------------------------------------------------------------------
# relu
# ---------------------------------------------------------------------------

def relu(x: np.ndarray):
    y = np.maximum(x, 0.0)
    return y, (x > 0.0)  # subgradient at 0 is 0


def relu_backward(cache, dy: np.ndarray):
    return dy * cache


# ---------------------------------------------------------------------------
# global average pool
# ---------------------------------------------------------------------------

def global_avg_pool(x: np.ndarray):
    if x.ndim != 4:
        raise ContractViolation(f"global_avg_pool wants NCHW, got {x.shape}")
    n, c, h, w = x.shape
    y = np.mean(x, axis=(2, 3), dtype=np.float64).astype(x.dtype)
    return y, (n, c, h, w)


def global_avg_pool_backward(cache, dy: np.ndarray):
    n, c, h, w = cache
    scale = dy.dtype.type(1.0 / (h * w))
    return np.broadcast_to((dy * scale)[:, :, None, None], (n, c, h, w)).astype(dy.dtype)


# ---------------------------------------------------------------------------
# softmax cross entropy
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax, stabilized by max subtraction."""
    z = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(z, dtype=np.float64)
    return (e / np.sum(e, axis=1, keepdims=True)).astype(logits.dtype)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood over the batch.

    Returns (loss, probs, cache); gradient is (probs - onehot)/N scaled by
    the upstream dloss.
    """
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ContractViolation(f"labels shape {labels.shape} must be ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractViolation(
            f"label out of range: [{labels.min()}, {labels.max()}] for {k} classes"
        )
    z = logits.astype(np.float64)
    z -= np.max(z, axis=1, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(z), axis=1))
    log_probs = z - logsumexp[:, None]
    loss = float(-np.mean(log_probs[np.arange(n), labels]))
    probs = np.exp(log_probs).astype(logits.dtype)
    return loss, probs, (probs, labels, n)


def softmax_cross_entropy_backward(cache, dloss: float = 1.0):
    probs, labels, n = cache
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return dlogits * dlogits.dtype.type(dloss / n)
