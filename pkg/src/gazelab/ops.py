"""Spatial and dense forward operators with recorded backward passes.

All image tensors are NCHW. Convolution uses cross-correlation semantics
with zero padding; max pooling pads with -inf and breaks ties by the first
index in row-major window order; average pooling supports no padding and
always divides by kernel**2.
"""

import numpy as np

from .tensor import Tensor, ShapeError, record


def _out_extent(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _check_spatial(op, h, w, kh, kw, stride, padding):
    if stride < 1:
        raise ShapeError(f"{op}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"{op}: padding must be >= 0, got {padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"{op}: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")


def _strided_windows(xp, kh, kw, stride):
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def pad2d(x, padding):
    """Zero-pad the two trailing spatial axes symmetrically."""
    if x.data.ndim != 4:
        raise ShapeError(f"pad2d: expected NCHW input, got dims {tuple(x.dims)}")
    p = int(padding)
    if p < 0:
        raise ShapeError(f"pad2d: padding must be >= 0, got {p}")
    if p == 0:
        out = Tensor(x.data.copy())
        return record(out, (x,), lambda g: (g,))
    out = Tensor(np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))))

    def grads(g):
        return (np.ascontiguousarray(g[:, :, p:-p, p:-p]),)

    return record(out, (x,), grads)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-d cross-correlation, NCHW x (Cout,Cin,kh,kw) -> NCHW."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-d NCHW, got dims {tuple(x.dims)}")
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d: weight must be 4-d, got dims {tuple(weight.dims)}")
    n, cin, h, w = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv2d: channel axis mismatch, input has {cin} channels but weight expects {cin_w}")
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(
            f"conv2d: bias axis must have {cout} entries, got dims {tuple(bias.dims)}")
    stride, padding = int(stride), int(padding)
    _check_spatial("conv2d", h, w, kh, kw, stride, padding)

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    ho = _out_extent(h, kh, stride, padding)
    wo = _out_extent(w, kw, stride, padding)
    k = cin * kh * kw
    rows = n * ho * wo
    # K-major im2col: gathering one (c,i,j)-plane at a time keeps whole
    # output rows contiguous, which is far cheaper than per-patch gathers
    cols_t = np.empty((cin, kh, kw, n, ho, wo), dtype=x.dtype)
    for c in range(cin):
        for i in range(kh):
            for j in range(kw):
                cols_t[c, i, j] = xp[:, c, i:i + stride * ho:stride,
                                     j:j + stride * wo:stride]
    cols_t = cols_t.reshape(k, rows)
    w_mat = weight.data.reshape(cout, k)
    out_data = (w_mat @ cols_t).reshape(cout, n, ho, wo)
    out_data = np.ascontiguousarray(out_data.swapaxes(0, 1))
    if bias is not None:
        out_data += bias.data[None, :, None, None]
    out = Tensor(out_data)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def grads(g):
        g_t = np.ascontiguousarray(g.swapaxes(0, 1)).reshape(cout, rows)
        gw = (g_t @ cols_t.T).reshape(cout, cin, kh, kw)
        dcols = (w_mat.T @ g_t).reshape(cin, kh, kw, n, ho, wo)
        gxp_t = np.zeros((cin, n) + xp.shape[2:], dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp_t[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                    dcols[:, i, j]
        gxp = np.ascontiguousarray(gxp_t.swapaxes(0, 1))
        if padding:
            gx = np.ascontiguousarray(gxp[:, :, padding:padding + h, padding:padding + w])
        else:
            gx = gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return record(out, inputs, grads)


def maxpool2d(x, kernel, stride, padding=0):
    """Max pooling with -inf fill; gradient routes to the first max per window."""
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d: expected NCHW input, got dims {tuple(x.dims)}")
    n, c, h, w = x.data.shape
    kernel, stride, padding = int(kernel), int(stride), int(padding)
    if kernel < 1:
        raise ShapeError(f"maxpool2d: kernel must be >= 1, got {kernel}")
    if padding >= kernel:
        raise ShapeError(f"maxpool2d: padding {padding} must be < kernel {kernel}")
    _check_spatial("maxpool2d", h, w, kernel, kernel, stride, padding)

    if padding:
        xp = np.full((n, c, h + 2 * padding, w + 2 * padding), -np.inf, dtype=x.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = x.data
    else:
        xp = x.data
    ho = _out_extent(h, kernel, stride, padding)
    wo = _out_extent(w, kernel, stride, padding)
    # running max over the k*k shifted slices; strict > keeps the first
    # (row-major) maximum on ties
    best = None
    arg = None
    for t in range(kernel * kernel):
        i, j = divmod(t, kernel)
        view = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
        if best is None:
            best = view.copy()
            arg = np.zeros(best.shape, dtype=np.int16)
        else:
            mask = view > best
            np.copyto(best, view, where=mask)
            np.copyto(arg, np.int16(t), where=mask)
    out = Tensor(best)

    def grads(g):
        gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
        for t in range(kernel * kernel):
            i, j = divmod(t, kernel)
            mask = arg == t
            if not mask.any():
                continue
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += g * mask
        if padding:
            return (np.ascontiguousarray(gxp[:, :, padding:padding + h, padding:padding + w]),)
        return (gxp,)

    return record(out, (x,), grads)


def avgpool2d(x, kernel, stride):
    """Average pooling, divisor kernel**2, no padding."""
    if x.data.ndim != 4:
        raise ShapeError(f"avgpool2d: expected NCHW input, got dims {tuple(x.dims)}")
    n, c, h, w = x.data.shape
    kernel, stride = int(kernel), int(stride)
    if kernel < 1:
        raise ShapeError(f"avgpool2d: kernel must be >= 1, got {kernel}")
    _check_spatial("avgpool2d", h, w, kernel, kernel, stride, 0)
    ho = _out_extent(h, kernel, stride, 0)
    wo = _out_extent(w, kernel, stride, 0)
    scale = 1.0 / (kernel * kernel)
    acc = np.zeros((n, c, ho, wo), dtype=np.float64)
    for i in range(kernel):
        for j in range(kernel):
            acc += x.data[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    out = Tensor((acc * scale).astype(x.dtype))

    def grads(g):
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        gs = g * np.asarray(scale, dtype=g.dtype)
        for i in range(kernel):
            for j in range(kernel):
                gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gs
        return (gx,)

    return record(out, (x,), grads)


def global_avg_pool(x):
    """(N, C, H, W) -> (N, C) mean over the spatial axes."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NCHW input, got dims {tuple(x.dims)}")
    n, c, h, w = x.data.shape
    out = Tensor(x.data.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype))

    def grads(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).astype(g.dtype),)

    return record(out, (x,), grads)


def linear(x, weight, bias=None):
    """Affine map (N, F) x (O, F) -> (N, O)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(
            f"linear: expected 2-d input and weight, got {tuple(x.dims)} and {tuple(weight.dims)}")
    n, f = x.data.shape
    o, f_w = weight.data.shape
    if f != f_w:
        raise ShapeError(f"linear: feature axis mismatch, input has {f} but weight expects {f_w}")
    if bias is not None and bias.data.shape != (o,):
        raise ShapeError(f"linear: bias axis must have {o} entries, got dims {tuple(bias.dims)}")
    out_data = x.data @ weight.data.T
    if bias is not None:
        out_data = out_data + bias.data[None, :]
    out = Tensor(out_data)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def grads(g):
        gx = g @ weight.data
        gw = g.T @ x.data
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return record(out, inputs, grads)


class BatchNormState:
    """Running statistics for one batchnorm layer (float32 storage)."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = float(momentum)
        self.eps = float(eps)


def batchnorm2d(x, gamma, beta, state, training):
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes by batch statistics (64-bit accumulation, biased
    variance) and updates the running stats; eval mode uses running stats.
    Train mode requires N*H*W >= 2 per channel.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d: expected NCHW input, got dims {tuple(x.dims)}")
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"batchnorm2d: gamma/beta must have {c} entries on the channel axis")
    if training:
        m = n * h * w
        if m < 2:
            raise ShapeError(
                f"batchnorm2d: train mode needs N*H*W >= 2 per channel, got {m} "
                "(degenerate variance)")
        mean64 = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        var64 = x.data.var(axis=(0, 2, 3), dtype=np.float64)
        mom = state.momentum
        state.running_mean = ((1.0 - mom) * state.running_mean.astype(np.float64)
                              + mom * mean64).astype(np.float32)
        state.running_var = ((1.0 - mom) * state.running_var.astype(np.float64)
                             + mom * var64).astype(np.float32)
        inv = (1.0 / np.sqrt(var64 + state.eps)).astype(x.dtype)
        mean = mean64.astype(x.dtype)
        xhat = (x.data - mean[None, :, None, None]) * inv[None, :, None, None]
        out = Tensor(gamma.data[None, :, None, None] * xhat
                     + beta.data[None, :, None, None])

        def grads(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dxhat = g * gamma.data[None, :, None, None]
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (inv[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
            return dx, dgamma, dbeta

        return record(out, (x, gamma, beta), grads)

    inv = (1.0 / np.sqrt(state.running_var.astype(np.float64) + state.eps)).astype(x.dtype)
    mean = state.running_mean.astype(x.dtype)
    xhat = (x.data - mean[None, :, None, None]) * inv[None, :, None, None]
    out = Tensor(gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None])

    def grads_eval(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dx = g * (gamma.data * inv)[None, :, None, None]
        return dx, dgamma, dbeta

    return record(out, (x, gamma, beta), grads_eval)
