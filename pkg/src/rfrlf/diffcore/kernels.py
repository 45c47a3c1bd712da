"""Numeric forward/backward kernels for the differentiable primitives.

Forward passes accumulate over the contraction or reduction axis
sequentially, in float64, vectorized over all remaining axes.  That
ordering makes 64-bit outputs reproducible bit-for-bit against plain
loop implementations of the same formulas (BLAS matmul, einsum, and
numpy's pairwise-sum reductions all reassociate the sums and differ in
the final bits).  Backward passes are validated against finite
differences rather than an exactness oracle, so they are free to use
BLAS contractions.

Every kernel computes in float64 internally regardless of the input
dtype and rounds once to the promoted input dtype on output.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, ShapeMismatchError

NORM_EPS = 1e-5


def _out_dtype(*arrays) -> np.dtype:
    return np.result_type(*(np.asarray(a).dtype for a in arrays))


def _f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# dense

def dense_fwd(x, w, b):
    """y = W x + b, row by row: y[i] = b[i] + sum_j W[i, j] x[j].

    Accepts x of shape (n,) or batched (B, n).  The j-sum runs in
    ascending order, matching a naive nested loop exactly in float64.
    """
    w = np.asarray(w)
    b = np.asarray(b)
    x = np.asarray(x)
    if w.ndim != 2:
        raise ShapeMismatchError(f"dense weight must be 2-d, got shape {w.shape}")
    m, n = w.shape
    if b.shape != (m,):
        raise ShapeMismatchError(f"dense bias shape {b.shape} does not match output width {m}")
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise ShapeMismatchError(f"dense input shape {x.shape} does not match weight shape {w.shape}")
    x64, w64, b64 = _f64(x), _f64(w), _f64(b)
    if x.ndim == 1:
        out = b64.copy()
        for j in range(n):
            out += w64[:, j] * x64[j]
    else:
        out = np.empty((x.shape[0], m), dtype=np.float64)
        out[:] = b64
        for j in range(n):
            out += x64[:, j, np.newaxis] * w64[:, j]
    return out.astype(_out_dtype(x, w, b), copy=False)


def dense_bwd(g, x, w):
    g64, x64, w64 = _f64(g), _f64(x), _f64(w)
    if x.ndim == 1:
        dx = g64 @ w64
        dw = np.outer(g64, x64)
        db = g64.copy()
    else:
        dx = g64 @ w64
        dw = g64.T @ x64
        db = g64.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------------------
# conv2d / deconv2d

def _conv_geometry(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeMismatchError(
            f"conv output size not integral: input {size}, kernel {k}, "
            f"stride {stride}, padding {padding}")
    return span // stride + 1


def _check_conv_args(stride: int, padding: int) -> None:
    if not (isinstance(stride, (int, np.integer)) and stride >= 1):
        raise ConfigurationError(f"stride must be a positive integer, got {stride!r}")
    if not (isinstance(padding, (int, np.integer)) and padding >= 0):
        raise ConfigurationError(f"padding must be a non-negative integer, got {padding!r}")


def conv2d_fwd(x, k, b, stride: int = 1, padding: int = 0):
    """Cross-correlation: out[k,i,j] = b[k] + sum_{c,di,dj} K[k,c,di,dj] * xp[c, i*s+di, j*s+dj].

    x is (C, H, W) or (B, C, H, W); K is (K, C, kh, kw).  The (c, di, dj)
    sum runs in ascending row-major order, matching a naive loop exactly
    in float64.
    """
    _check_conv_args(stride, padding)
    x = np.asarray(x)
    k = np.asarray(k)
    b = np.asarray(b)
    if k.ndim != 4:
        raise ShapeMismatchError(f"conv kernel must be 4-d, got shape {k.shape}")
    kk, kc, kh, kw = k.shape
    squeeze = x.ndim == 3
    if squeeze:
        x = x[np.newaxis]
    if x.ndim != 4 or x.shape[1] != kc:
        raise ShapeMismatchError(f"conv input shape {x.shape} does not match kernel shape {k.shape}")
    if b.shape != (kk,):
        raise ShapeMismatchError(f"conv bias shape {b.shape} does not match {kk} output channels")
    bsz, _, h, w = x.shape
    ho = _conv_geometry(h, kh, stride, padding)
    wo = _conv_geometry(w, kw, stride, padding)
    x64, k64, b64 = _f64(x), _f64(k), _f64(b)
    if padding:
        xp = np.zeros((bsz, kc, h + 2 * padding, w + 2 * padding), dtype=np.float64)
        xp[:, :, padding:padding + h, padding:padding + w] = x64
    else:
        xp = x64
    out = np.empty((bsz, kk, ho, wo), dtype=np.float64)
    out[:] = b64[:, np.newaxis, np.newaxis]
    for c in range(kc):
        for di in range(kh):
            for dj in range(kw):
                patch = xp[:, c, di:di + (ho - 1) * stride + 1:stride,
                           dj:dj + (wo - 1) * stride + 1:stride]
                out += k64[:, c, di, dj][:, np.newaxis, np.newaxis] * patch[:, np.newaxis]
    if squeeze:
        out = out[0]
    return out.astype(_out_dtype(x, k, b), copy=False)


def conv2d_bwd(g, x, k, stride: int = 1, padding: int = 0):
    x = np.asarray(x)
    k = np.asarray(k)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[np.newaxis]
    g64 = _f64(g)
    if squeeze:
        g64 = g64[np.newaxis]
    x64, k64 = _f64(x), _f64(k)
    kk, kc, kh, kw = k.shape
    bsz, _, h, w = x.shape
    _, _, ho, wo = g64.shape
    if padding:
        xp = np.zeros((bsz, kc, h + 2 * padding, w + 2 * padding), dtype=np.float64)
        xp[:, :, padding:padding + h, padding:padding + w] = x64
    else:
        xp = x64
    db = g64.sum(axis=(0, 2, 3))
    dk = np.zeros((kk, kc, kh, kw), dtype=np.float64)
    dxp = np.zeros_like(xp)
    for c in range(kc):
        for di in range(kh):
            for dj in range(kw):
                rows = slice(di, di + (ho - 1) * stride + 1, stride)
                cols = slice(dj, dj + (wo - 1) * stride + 1, stride)
                patch = xp[:, c, rows, cols]
                dk[:, c, di, dj] = np.tensordot(g64, patch, axes=([0, 2, 3], [0, 1, 2]))
                dxp[:, c, rows, cols] += np.tensordot(g64, k64[:, c, di, dj], axes=([1], [0]))
    dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
    if squeeze:
        dx = dx[0]
    return dx, dk, db


def deconv2d_fwd(x, k, b, stride: int = 1, padding: int = 0):
    """Transposed convolution (fractionally strided scatter).

    x is (C, H, W) or (B, C, H, W); K is (C, K, kh, kw) with input
    channels leading.  out[k, i*s+di-p, j*s+dj-p] accumulates
    x[c,i,j] * K[c,k,di,dj] over ascending (c, di, dj); the bias is
    added once after the scatter completes.  Output spatial size is
    (H-1)*s - 2p + kh.
    """
    _check_conv_args(stride, padding)
    x = np.asarray(x)
    k = np.asarray(k)
    b = np.asarray(b)
    if k.ndim != 4:
        raise ShapeMismatchError(f"deconv kernel must be 4-d, got shape {k.shape}")
    kc, kk, kh, kw = k.shape
    squeeze = x.ndim == 3
    if squeeze:
        x = x[np.newaxis]
    if x.ndim != 4 or x.shape[1] != kc:
        raise ShapeMismatchError(f"deconv input shape {x.shape} does not match kernel shape {k.shape}")
    if b.shape != (kk,):
        raise ShapeMismatchError(f"deconv bias shape {b.shape} does not match {kk} output channels")
    bsz, _, h, w = x.shape
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"deconv output size {ho}x{wo} is empty for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}")
    x64, k64, b64 = _f64(x), _f64(k), _f64(b)
    full = np.zeros((bsz, kk, (h - 1) * stride + kh, (w - 1) * stride + kw), dtype=np.float64)
    for c in range(kc):
        for di in range(kh):
            for dj in range(kw):
                rows = slice(di, di + (h - 1) * stride + 1, stride)
                cols = slice(dj, dj + (w - 1) * stride + 1, stride)
                full[:, :, rows, cols] += (
                    x64[:, c][:, np.newaxis] * k64[c, :, di, dj][np.newaxis, :, np.newaxis, np.newaxis])
    out = full[:, :, padding:padding + ho, padding:padding + wo] + b64[:, np.newaxis, np.newaxis]
    if squeeze:
        out = out[0]
    return out.astype(_out_dtype(x, k, b), copy=False)


def deconv2d_bwd(g, x, k, stride: int = 1, padding: int = 0):
    x = np.asarray(x)
    k = np.asarray(k)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[np.newaxis]
    g64 = _f64(g)
    if squeeze:
        g64 = g64[np.newaxis]
    x64, k64 = _f64(x), _f64(k)
    kc, kk, kh, kw = k.shape
    bsz, _, h, w = x.shape
    _, _, ho, wo = g64.shape
    gfull = np.zeros((bsz, kk, (h - 1) * stride + kh, (w - 1) * stride + kw), dtype=np.float64)
    gfull[:, :, padding:padding + ho, padding:padding + wo] = g64
    db = g64.sum(axis=(0, 2, 3))
    dx = np.zeros_like(x64)
    dk = np.zeros((kc, kk, kh, kw), dtype=np.float64)
    for di in range(kh):
        for dj in range(kw):
            rows = slice(di, di + (h - 1) * stride + 1, stride)
            cols = slice(dj, dj + (w - 1) * stride + 1, stride)
            gsl = gfull[:, :, rows, cols]
            dk[:, :, di, dj] = np.tensordot(x64, gsl, axes=([0, 2, 3], [0, 2, 3]))
            for c in range(kc):
                dx[:, c] += np.tensordot(gsl, k64[c, :, di, dj], axes=([1], [0]))
    if squeeze:
        dx = dx[0]
    return dx, dk, db


# ---------------------------------------------------------------------------
# normalization

def norm_fwd(x, kind: str, gain, shift, eps: float = NORM_EPS):
    """Normalize to zero mean / unit variance, then scale and shift.

    kind "layer": statistics over the last axis, gain/shift per feature.
    kind "instance": statistics over the trailing two (spatial) axes,
    gain/shift per channel (axis -3).  Composition order is fixed as
    out = ((x - mu) / sqrt(var + eps)) * gain + shift with mu = acc/n
    and var = acc2/n computed by sequential accumulation, so 64-bit
    results match a plain per-group loop exactly.
    """
    x = np.asarray(x)
    x64 = _f64(x)
    g64, s64 = _f64(gain), _f64(shift)
    if kind == "layer":
        if x64.ndim < 1:
            raise ShapeMismatchError("layer norm input must have a feature axis")
        f = x64.shape[-1]
        if g64.shape != (f,) or s64.shape != (f,):
            raise ShapeMismatchError(
                f"layer norm gain/shift shapes {g64.shape}/{s64.shape} do not match {f} features")
        mu = np.zeros(x64.shape[:-1], dtype=np.float64)
        for j in range(f):
            mu += x64[..., j]
        mu = mu / f
        var = np.zeros(x64.shape[:-1], dtype=np.float64)
        for j in range(f):
            d = x64[..., j] - mu
            var += d * d
        var = var / f
        den = np.sqrt(var + eps)
        xhat = (x64 - mu[..., np.newaxis]) / den[..., np.newaxis]
        out = xhat * g64 + s64
        gain_b = g64
    elif kind == "instance":
        if x64.ndim not in (3, 4):
            raise ShapeMismatchError(
                f"instance norm input must be (C,H,W) or (B,C,H,W), got shape {x64.shape}")
        c, h, w = x64.shape[-3], x64.shape[-2], x64.shape[-1]
        if g64.shape != (c,) or s64.shape != (c,):
            raise ShapeMismatchError(
                f"instance norm gain/shift shapes {g64.shape}/{s64.shape} do not match {c} channels")
        n = h * w
        mu = np.zeros(x64.shape[:-2], dtype=np.float64)
        for i in range(h):
            for j in range(w):
                mu += x64[..., i, j]
        mu = mu / n
        var = np.zeros(x64.shape[:-2], dtype=np.float64)
        for i in range(h):
            for j in range(w):
                d = x64[..., i, j] - mu
                var += d * d
        var = var / n
        den = np.sqrt(var + eps)
        xhat = (x64 - mu[..., np.newaxis, np.newaxis]) / den[..., np.newaxis, np.newaxis]
        out = xhat * g64[:, np.newaxis, np.newaxis] + s64[:, np.newaxis, np.newaxis]
        gain_b = g64[:, np.newaxis, np.newaxis]
    else:
        raise ConfigurationError(f"unknown normalization kind {kind!r}")
    cache = (xhat, den, gain_b, kind)
    return out.astype(_out_dtype(x, gain, shift), copy=False), cache


def norm_bwd(g, cache):
    xhat, den, gain_b, kind = cache
    g64 = _f64(g)
    if kind == "layer":
        param_axes = tuple(range(g64.ndim - 1))
        stat_axes = (-1,)
        den_b = den[..., np.newaxis]
    else:
        param_axes = tuple(i for i in range(g64.ndim) if i != g64.ndim - 3)
        stat_axes = (-2, -1)
        den_b = den[..., np.newaxis, np.newaxis]
    dgain = np.sum(g64 * xhat, axis=param_axes)
    dshift = np.sum(g64, axis=param_axes)
    dxhat = g64 * gain_b
    m1 = dxhat.mean(axis=stat_axes, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=stat_axes, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) / den_b
    return dx, dgain, dshift


# ---------------------------------------------------------------------------
# elementwise / softmax

def sigmoid_fwd(x):
    x64 = _f64(x)
    z = np.exp(-np.abs(x64))
    return np.where(x64 >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax_fwd(x, axis: int = -1):
    x64 = _f64(x)
    shifted = x64 - x64.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_bwd(g, y, axis: int = -1):
    g64, y64 = _f64(g), _f64(y)
    inner = (g64 * y64).sum(axis=axis, keepdims=True)
    return y64 * (g64 - inner)
