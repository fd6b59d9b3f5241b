"""Independent reference implementations used as test oracles.

Everything in here is deliberately naive (nested loops, scalar math) and
shares no code with the package under test.
"""

import math

import numpy as np


def conv2d_ref(x, w, b=None, stride=1, padding=0):
    """Direct six-nested-loop cross-correlation with zero padding."""
    n, cin, h, wid = x.shape
    cout, cin_w, kh, kw = w.shape
    assert cin == cin_w
    hp, wp = h + 2 * padding, wid + 2 * padding
    xp = np.zeros((n, cin, hp, wp), dtype=np.float64)
    xp[:, :, padding:padding + h, padding:padding + wid] = x
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for ni in range(n):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += (xp[ni, ci, oy * stride + ky, ox * stride + kx]
                                        * w[co, ci, ky, kx])
                    if b is not None:
                        acc += b[co]
                    out[ni, co, oy, ox] = acc
    return out


def maxpool2d_ref(x, kernel, stride, padding=0):
    """Nested-loop max pooling with -inf padding."""
    n, c, h, w = x.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    xp = np.full((n, c, hp, wp), -np.inf, dtype=np.float64)
    xp[:, :, padding:padding + h, padding:padding + w] = x
    ho = (hp - kernel) // stride + 1
    wo = (wp - kernel) // stride + 1
    out = np.zeros((n, c, ho, wo), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = -np.inf
                    for ky in range(kernel):
                        for kx in range(kernel):
                            v = xp[ni, ci, oy * stride + ky, ox * stride + kx]
                            if v > best:
                                best = v
                    out[ni, ci, oy, ox] = best
    return out


def avgpool2d_ref(x, kernel, stride):
    """Nested-loop average pooling, divisor kernel**2, no padding."""
    n, c, h, w = x.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    out = np.zeros((n, c, ho, wo), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ky in range(kernel):
                        for kx in range(kernel):
                            acc += float(x[ni, ci, oy * stride + ky, ox * stride + kx])
                    out[ni, ci, oy, ox] = acc / (kernel * kernel)
    return out


def linear_ref(x, w, b):
    """Explicit dot-product affine map: out[i, o] = sum_f x[i, f] * w[o, f] + b[o]."""
    n, f = x.shape
    o, f2 = w.shape
    assert f == f2
    out = np.zeros((n, o), dtype=np.float64)
    for i in range(n):
        for oo in range(o):
            acc = 0.0
            for ff in range(f):
                acc += float(x[i, ff]) * float(w[oo, ff])
            out[i, oo] = acc + float(b[oo])
    return out


def l1_loss_ref(pred, target):
    """Scalar-accumulated mean absolute error."""
    acc = 0.0
    for p, t in zip(pred.ravel().tolist(), target.ravel().tolist()):
        acc += abs(p - t)
    return acc / pred.size


def adam_scalar_ref(x0, grad_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Hand-rolled scalar Adam on a 1-d parameter, all float64."""
    x, m, v = float(x0), 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        x = x - lr * mhat / (math.sqrt(vhat) + eps)
    return x


def angular_error_ref(v1, v2):
    """High-precision angle in degrees between two 3-vectors."""
    a = np.asarray(v1, dtype=np.float64)
    b = np.asarray(v2, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    d = min(1.0, max(-1.0, float(np.dot(a, b))))
    return math.degrees(math.acos(d))
