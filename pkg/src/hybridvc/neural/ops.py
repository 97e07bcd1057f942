"""Differentiable primitives: convolution, modulated deformable convolution,
bilinear sampling, activations, and the elementwise glue.

All spatial ops are resolution preserving (stride 1, zero "same" padding) and
operate on N x C x H x W tensors. Offsets displace the canonical 3x3 taps in
pixel units; samples landing outside the image blend with zeros, so a fully
out-of-range tap contributes nothing.
"""

import numpy as np

from ..errors import ValidationError
from .autodiff import Tensor, astensor, grad_enabled, node


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# Elementwise ops -----------------------------------------------------------

def add(x, y):
    x, y = astensor(x), astensor(y)
    out = x.data + y.data

    def vjp(g):
        return _unbroadcast(g, x.data.shape), _unbroadcast(g, y.data.shape)

    return node(out, (x, y), vjp)


def sub(x, y):
    x, y = astensor(x), astensor(y)
    out = x.data - y.data

    def vjp(g):
        return _unbroadcast(g, x.data.shape), -_unbroadcast(g, y.data.shape)

    return node(out, (x, y), vjp)


def mul(x, y):
    x, y = astensor(x), astensor(y)
    xd, yd = x.data, y.data
    out = xd * yd

    def vjp(g):
        return _unbroadcast(g * yd, xd.shape), _unbroadcast(g * xd, yd.shape)

    return node(out, (x, y), vjp)


def div(x, y):
    x, y = astensor(x), astensor(y)
    xd, yd = x.data, y.data
    out = xd / yd

    def vjp(g):
        return _unbroadcast(g / yd, xd.shape), _unbroadcast(-g * xd / (yd * yd), yd.shape)

    return node(out, (x, y), vjp)


def scale(x, s: float):
    xd = x.data

    def vjp(g):
        return (g * s,)

    return node(xd * s, (x,), vjp)


def pow_const(x, p: float):
    """x ** p for positive inputs (use clamp_min first when in doubt)."""
    xd = x.data
    out = xd ** p

    def vjp(g):
        return (g * p * xd ** (p - 1.0),)

    return node(out, (x,), vjp)


def clamp_min(x, m: float):
    xd = x.data
    out = np.maximum(xd, m)

    def vjp(g):
        return (g * (xd > m),)

    return node(out, (x,), vjp)


def leaky_relu(x, negative_slope=0.1):
    xd = x.data
    out = np.where(xd >= 0, xd, negative_slope * xd)

    def vjp(g):
        return (g * np.where(xd >= 0, 1.0, negative_slope),)

    return node(out, (x,), vjp)


def sigmoid(x):
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return node(out, (x,), vjp)


def concat_channels(x, y):
    if x.data.shape[0] != y.data.shape[0] or x.data.shape[2:] != y.data.shape[2:]:
        raise ValidationError(f"cannot concat shapes {x.data.shape} and {y.data.shape}")
    out = np.concatenate([x.data, y.data], axis=1)
    cx = x.data.shape[1]

    def vjp(g):
        return g[:, :cx], g[:, cx:]

    return node(out, (x, y), vjp)


def slice_channels(x, lo, hi):
    out = x.data[:, lo:hi]
    shape = x.data.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, lo:hi] = g
        return (full,)

    return node(out, (x,), vjp)


def mean_pool2(x):
    """2x2 average pooling with stride 2; odd trailing row/column is cropped."""
    n, c, h, w = x.data.shape
    h2, w2 = h // 2, w // 2
    xd = x.data[:, :, : h2 * 2, : w2 * 2]
    out = xd.reshape(n, c, h2, 2, w2, 2).mean(axis=(3, 5))

    def vjp(g):
        full = np.zeros((n, c, h, w), dtype=g.dtype)
        full[:, :, : h2 * 2, : w2 * 2] = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        return (full,)

    return node(out, (x,), vjp)


def mean_all(x):
    size = x.data.size
    out = np.asarray(x.data.mean())

    def vjp(g):
        return (np.broadcast_to(g / size, x.data.shape).astype(x.data.dtype),)

    return node(out, (x,), vjp)


def mse_loss(pred, target):
    """Mean squared error against a constant target array."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    diff = pred.data - t
    out = np.asarray(np.mean(diff * diff))

    def vjp(g):
        return (g * 2.0 * diff / diff.size,)

    return node(out, (pred,), vjp)


# Convolution ---------------------------------------------------------------

def _im2col(xp, kh, kw, h, wid):
    """Padded (N,C,Hp,Wp) -> (N, C*kh*kw, H*W) patch matrix."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh * kw, h * wid), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i * kw + j] = xp[:, :, i:i + h, j:j + wid].reshape(n, c, -1)
    return cols.reshape(n, c * kh * kw, h * wid)


def conv2d(x, w, b):
    """Same-padded stride-1 convolution; kernel must be odd-sized."""
    xd, wd, bd = x.data, w.data, b.data
    n, c, h, wid = xd.shape
    f, c2, kh, kw = wd.shape
    if c2 != c:
        raise ValidationError(f"conv2d channel mismatch: input {c}, weight {c2}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValidationError("conv2d kernels must be odd-sized")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, kh, kw, h, wid)
    w2 = wd.reshape(f, c * kh * kw)
    out = (np.matmul(w2, cols) + bd[:, None]).reshape(n, f, h, wid)

    # Only the gradients a parent actually needs are produced; a frozen
    # weight or a leaf input skips its half of the backward GEMMs.
    need_x = x.requires_grad
    need_w = w.requires_grad
    need_b = b.requires_grad
    cols_keep = cols if (grad_enabled() and need_w) else None

    def vjp(g):
        g2 = g.reshape(n, f, h * wid)
        dw = db = dx = None
        if need_b:
            db = g.sum(axis=(0, 2, 3))
        if need_w:
            dw = np.matmul(g2, cols_keep.transpose(0, 2, 1)).sum(axis=0).reshape(f, c, kh, kw)
        if need_x:
            dcols = np.matmul(w2.T, g2).reshape(n, c, kh * kw, h * wid)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + h, j:j + wid] += dcols[:, :, i * kw + j].reshape(n, c, h, wid)
            dx = dxp[:, :, ph:ph + h, pw:pw + wid] if (ph or pw) else dxp
        return dx, dw, db

    return node(out, (x, w, b), vjp)


# Bilinear sampling ---------------------------------------------------------

def _corner_terms(ys, xs, h, w):
    """Corner indices, weights, and validity for bilinear interpolation."""
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = ys - y0
    wx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    corners = []
    for dy, dx, cw in ((0, 0, (1 - wy) * (1 - wx)), (0, 1, (1 - wy) * wx),
                       (1, 0, wy * (1 - wx)), (1, 1, wy * wx)):
        yi = y0 + dy
        xi = x0 + dx
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        idx = np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
        corners.append((idx, cw, valid))
    return corners, wy, wx


def _gather(flat, idx):
    """flat: (N, C, H*W); idx: (N, *S) -> (N, C, *S)."""
    n, c, _ = flat.shape
    s = idx.shape[1:]
    ridx = idx.reshape(n, -1)
    out = np.empty((n, c, ridx.shape[1]), dtype=flat.dtype)
    for bi in range(n):
        np.take(flat[bi], ridx[bi], axis=1, out=out[bi])
    return out.reshape(n, c, *s)


def bilinear_sample(x, ys, xs):
    """Sample every channel of ``x`` at real-valued (y, x) locations.

    ``ys``/``xs`` have shape (N, *S); the result is (N, C, *S). Locations
    outside the image blend with zeros and vanish entirely once the whole
    bilinear footprint leaves the padded domain.
    """
    x = astensor(x)
    xd = x.data
    n, c, h, w = xd.shape
    ys = np.asarray(ys, dtype=xd.dtype)
    xs = np.asarray(xs, dtype=xd.dtype)
    flat = xd.reshape(n, c, h * w)
    corners, _, _ = _corner_terms(ys, xs, h, w)
    out = None
    for idx, cw, valid in corners:
        term = _gather(flat, idx) * (cw * valid)[:, None]
        out = term if out is None else out + term

    def vjp(g):
        dflat = np.zeros((n, c, h * w), dtype=g.dtype)
        for idx, cw, valid in corners:
            contrib = g * (cw * valid)[:, None]
            fidx = idx.reshape(n, -1)
            fcontrib = contrib.reshape(n, c, -1)
            for bi in range(n):
                shifted = (fidx[bi][None, :] + np.arange(c)[:, None] * (h * w)).ravel()
                dflat[bi] += np.bincount(shifted, weights=fcontrib[bi].ravel(),
                                         minlength=c * h * w).reshape(c, h * w).astype(g.dtype)
        return (dflat.reshape(n, c, h, w),)

    return node(out, (x,), vjp)


# Modulated deformable convolution -------------------------------------------

_KGRID = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]


def _deform_geometry(od, h, wid):
    """Sampling coordinates for all taps: (N, K, H, W) ys and xs."""
    dtype = od.dtype
    base_y = np.arange(h, dtype=dtype)[None, None, :, None]
    base_x = np.arange(wid, dtype=dtype)[None, None, None, :]
    grid = np.asarray(_KGRID, dtype=dtype)
    ys = base_y + grid[:, 0][None, :, None, None] + od[:, 0::2]
    xs = base_x + grid[:, 1][None, :, None, None] + od[:, 1::2]
    return ys, xs


def _deform_samples(flat, corners):
    """Per-corner gathered values (zeroed outside) and their bilinear blend."""
    vals = []
    samp = None
    for idx, cw, valid in corners:
        v = _gather(flat, idx) * valid[:, None]
        vals.append(v)
        term = v * cw[:, None]
        samp = term if samp is None else samp + term
    return vals, samp


def deform_conv2d(x, offsets, mask, w, b):
    """3x3 modulated deformable convolution (stride 1, dilation 1).

    ``offsets`` is (N, 18, H, W) holding per-tap (dy, dx) pairs in channel
    order (dy0, dx0, dy1, dx1, ...); ``mask`` is (N, 9, H, W) of per-tap
    weights in [0, 1]. For each output location p the k-th tap samples the
    input at p + grid_k + offset_k(p), modulated by mask_k(p), and taps are
    mixed by ``w`` of shape (F, C, 3, 3).
    """
    x, offsets, mask = astensor(x), astensor(offsets), astensor(mask)
    xd, od, md, wd, bd = x.data, offsets.data, mask.data, w.data, b.data
    n, c, h, wid = xd.shape
    f, c2, kh, kw = wd.shape
    k = kh * kw
    if (kh, kw) != (3, 3):
        raise ValidationError("deformable convolution supports 3x3 kernels only")
    if c2 != c:
        raise ValidationError(f"deform_conv2d channel mismatch: input {c}, weight {c2}")
    if od.shape != (n, 2 * k, h, wid):
        raise ValidationError(f"offsets must be (N, {2 * k}, H, W), got {od.shape}")
    if md.shape != (n, k, h, wid):
        raise ValidationError(f"mask must be (N, {k}, H, W), got {md.shape}")

    hw = h * wid
    flat = xd.reshape(n, c, hw)
    w2 = wd.reshape(f, c * k)
    ys, xs = _deform_geometry(od, h, wid)
    corners, wy, wx = _corner_terms(ys, xs, h, wid)
    vals, samp = _deform_samples(flat, corners)       # (N, C, K, H, W) each
    msamp = samp * md[:, None]
    out = (np.matmul(w2, msamp.reshape(n, c * k, hw)) + bd[:, None]).reshape(n, f, h, wid)

    if not (grad_enabled() and any(t.requires_grad for t in (x, offsets, mask, w, b))):
        vals = samp = msamp = None  # single deform layer; safe to retain otherwise

    def vjp(g):
        g2 = g.reshape(n, f, hw)
        db = g.sum(axis=(0, 2, 3))
        dw = np.matmul(g2, msamp.reshape(n, c * k, hw).transpose(0, 2, 1)
                       ).sum(axis=0).reshape(f, c, kh, kw)
        gval = np.matmul(w2.T, g2).reshape(n, c, k, h, wid)
        dmask = (gval * samp).sum(axis=1)
        gsamp = gval * md[:, None]
        v00, v01, v10, v11 = vals
        dys = (gsamp * ((v10 - v00) * (1 - wx)[:, None] + (v11 - v01) * wx[:, None])).sum(axis=1)
        dxs = (gsamp * ((v01 - v00) * (1 - wy)[:, None] + (v11 - v10) * wy[:, None])).sum(axis=1)
        doff = np.empty_like(od)
        doff[:, 0::2] = dys
        doff[:, 1::2] = dxs
        dx = None
        if x.requires_grad:
            dflat = np.zeros((n, c, hw), dtype=np.float64)
            coffs = (np.arange(c) * hw)[:, None]
            for idx, cw, valid in corners:
                contrib = (gsamp * (cw * valid)[:, None]).reshape(n, c, -1)
                fidx = idx.reshape(n, -1)
                for bi in range(n):
                    shifted = (fidx[bi][None, :] + coffs).ravel()
                    dflat[bi] += np.bincount(shifted, weights=contrib[bi].ravel(),
                                             minlength=c * hw).reshape(c, hw)
            dx = dflat.reshape(n, c, h, wid).astype(g.dtype)
        return dx, doff, dmask, dw, db

    return node(out, (x, offsets, mask, w, b), vjp)
