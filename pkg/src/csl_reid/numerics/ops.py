"""Forward primitives with hand-written backward passes.

Only the fixed op set the models need is provided; each op returns a new
:class:`Tensor` whose backward closure accumulates into its inputs.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from csl_reid.numerics.tensor import BNState, Tensor

logger = logging.getLogger(__name__)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents, backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return Tensor(data, parents=parents, backward=backward)


def _im2col(xp: np.ndarray, k: int, stride: int, h_out: int, w_out: int) -> np.ndarray:
    n, c = xp.shape[:2]
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))
    windows = windows[:, :, : stride * h_out : stride, : stride * w_out : stride]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h_out * w_out, c * k * k)


def conv2d(x, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlate ``x`` with ``w``.

    Args:
        x: ``C_in x H x W`` or ``N x C_in x H x W`` input.
        w: ``C_out x C_in x k x k`` kernel, ``k`` in {1, 3}.
        b: Optional ``C_out`` bias.
        stride: Spatial stride, at least 1.
        pad: Zero padding, 0 or ``(k - 1) / 2``.

    Returns:
        Tensor: Output of shape ``[N x] C_out x H' x W'`` with
        ``H' = (H + 2 pad - k) / stride + 1``.

    Raises:
        ValueError: On any shape or hyperparameter violation.
    """
    x = as_tensor(x)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernel, got {x.shape} and {w.shape}")
    n, c_in, h, wd = xd.shape
    c_out, w_cin, k, k2 = w.shape
    if w_cin != c_in:
        raise ValueError(
            f"conv2d channel mismatch: input shape {tuple(x.shape)} has {c_in} channels, "
            f"weight shape {tuple(w.shape)} expects {w_cin}"
        )
    if k != k2 or k not in (1, 3):
        raise ValueError(f"conv2d kernel must be 1x1 or 3x3, got {k}x{k2}")
    if pad not in (0, (k - 1) // 2):
        raise ValueError(f"conv2d pad must be 0 or {(k - 1) // 2} for k={k}, got {pad}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if h < k or wd < k:
        raise ValueError(f"conv2d input {h}x{wd} smaller than kernel {k}x{k}")
    if b is not None and b.shape != (c_out,):
        raise ValueError(f"conv2d bias shape {b.shape} does not match {c_out} filters")

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (wd + 2 * pad - k) // stride + 1
    cols = _im2col(xp, k, stride, h_out, w_out)
    wmat = w.data.reshape(c_out, -1)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.reshape(n, h_out, w_out, c_out).transpose(0, 3, 1, 2))
    if single:
        out = out[0]

    def backward(grad):
        g4 = grad[None] if single else grad
        gmat = g4.transpose(0, 2, 3, 1).reshape(-1, c_out)
        if w.requires_grad:
            w.accumulate((gmat.T @ cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b.accumulate(gmat.sum(axis=0))
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(n, h_out, w_out, c_in, k, k)
            dxp = np.zeros(xp.shape, dtype=grad.dtype)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            dx = dxp[:, :, pad : pad + h, pad : pad + wd]
            x.accumulate(dx[0] if single else dx)

    parents = [x, w] + ([b] if b is not None else [])
    return _result(out, parents, backward, "conv2d")


def batch_norm(x, state: BNState) -> Tensor:
    """Normalize ``x`` per channel (axis 1) with ``state``.

    Train mode normalizes with the biased batch variance and updates the
    running statistics by ``momentum``; eval mode uses the running
    statistics. Works on ``N x C`` and ``N x C x H x W`` inputs.

    Raises:
        ValueError: If train mode sees fewer than two values per channel.
    """
    x = as_tensor(x)
    if x.ndim not in (2, 4) or x.shape[1] != state.channels:
        raise ValueError(f"batch_norm input {x.shape} does not match {state.channels} channels")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    count = x.data.size // x.shape[1]
    gamma = state.gamma.data.reshape(bshape)
    beta = state.beta.data.reshape(bshape)
    training = state.mode == "train"

    if training:
        if count < 2:
            raise ValueError(
                f"batch_norm in train mode needs >= 2 values per channel, got {count} for input {x.shape}"
            )
        mean = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        m = state.momentum
        state.running_mean = ((1 - m) * state.running_mean + m * mean.reshape(-1)).astype(
            state.running_mean.dtype
        )
        unbiased = var.reshape(-1) * (count / (count - 1))
        state.running_var = ((1 - m) * state.running_var + m * unbiased).astype(state.running_var.dtype)
    else:
        mean = state.running_mean.reshape(bshape)
        var = state.running_var.reshape(bshape)
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mean) * inv_std
    out = (gamma * xhat + beta).astype(x.dtype, copy=False)

    def backward(grad):
        if state.gamma.requires_grad:
            state.gamma.accumulate((grad * xhat).sum(axis=axes))
        if state.beta.requires_grad:
            state.beta.accumulate(grad.sum(axis=axes))
        if x.requires_grad:
            dxhat = grad * gamma
            if training:
                dx = (inv_std / count) * (
                    count * dxhat
                    - dxhat.sum(axis=axes, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
                )
            else:
                dx = dxhat * inv_std
            x.accumulate(dx)

    return _result(out, [x, state.gamma, state.beta], backward, "batch_norm")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)

    def backward(grad):
        x.accumulate(grad * mask)

    return _result(out, [x], backward, "relu")


def linear(x, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ w.T + b`` over the rows of ``x``."""
    x = as_tensor(x)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"linear shape mismatch: input {x.shape} vs weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"linear bias shape {b.shape} does not match weight {w.shape}")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def backward(grad):
        if x.requires_grad:
            x.accumulate(grad @ w.data)
        if w.requires_grad:
            w.accumulate(grad.T @ x.data)
        if b is not None and b.requires_grad:
            b.accumulate(grad.sum(axis=0))

    parents = [x, w] + ([b] if b is not None else [])
    return _result(out, parents, backward, "linear")


def global_avg_pool(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool expects N x C x H x W, got {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(grad):
        x.accumulate(np.broadcast_to(grad[:, :, None, None] / (h * w), x.shape))

    return _result(out, [x], backward, "global_avg_pool")


def softmax_cross_entropy(logits, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under row-softmax of ``logits``.

    Raises:
        ValueError: If a label lies outside ``[0, K)``.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"softmax_cross_entropy shape mismatch: logits {logits.shape}, labels {labels.shape}")
    n, k = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"Label out of range [0, {k}): {labels.tolist()}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    rows = np.arange(n)
    out = np.asarray(-log_probs[rows, labels].mean(), dtype=logits.dtype)

    def backward(grad):
        dlogits = np.exp(log_probs)
        dlogits[rows, labels] -= 1.0
        logits.accumulate(dlogits * (grad / n))

    return _result(out, [logits], backward, "softmax_cross_entropy")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(grad):
        if a.requires_grad:
            a.accumulate(grad)
        if b.requires_grad:
            b.accumulate(grad)

    return _result(a.data + b.data, [a, b], backward, "add")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum(sizes)[:-1]

    def backward(grad):
        for tensor, piece in zip(tensors, np.split(grad, bounds, axis=axis)):
            if tensor.requires_grad:
                tensor.accumulate(piece)

    return _result(out, tensors, backward, "concat")


def spatial_attention(theta, phi, g) -> Tensor:
    """Embedded-Gaussian attention over all spatial positions.

    ``y[:, :, i] = sum_j softmax_j(theta_i . phi_j) g[:, :, j]`` for inputs of
    shape ``N x C' x H x W``.
    """
    theta, phi, g = as_tensor(theta), as_tensor(phi), as_tensor(g)
    if not (theta.shape == phi.shape == g.shape) or theta.ndim != 4:
        raise ValueError(f"spatial_attention shape mismatch: {theta.shape}, {phi.shape}, {g.shape}")
    n, c, h, w = theta.shape
    t = theta.data.reshape(n, c, h * w)
    p = phi.data.reshape(n, c, h * w)
    v = g.data.reshape(n, c, h * w)
    scores = np.matmul(t.transpose(0, 2, 1), p)
    scores = scores - scores.max(axis=2, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=2, keepdims=True)
    out = np.matmul(v, attn.transpose(0, 2, 1)).reshape(n, c, h, w)

    def backward(grad):
        dy = grad.reshape(n, c, h * w)
        if g.requires_grad:
            g.accumulate(np.matmul(dy, attn).reshape(g.shape))
        if theta.requires_grad or phi.requires_grad:
            dattn = np.matmul(dy.transpose(0, 2, 1), v)
            dscores = attn * (dattn - (dattn * attn).sum(axis=2, keepdims=True))
            if theta.requires_grad:
                theta.accumulate(np.matmul(p, dscores.transpose(0, 2, 1)).reshape(theta.shape))
            if phi.requires_grad:
                phi.accumulate(np.matmul(t, dscores).reshape(phi.shape))

    return _result(out, [theta, phi, g], backward, "spatial_attention")
