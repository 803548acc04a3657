"""Differentiable array operations.

Every function takes ``np.ndarray`` or :class:`~lgteun.tensor.autodiff.Var`
arguments.  Spatial tensors are channels-last, ``(..., H, W, C)``; any leading
axes are treated as a batch.
"""
from __future__ import annotations

import contextlib
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import erf

from lgteun.errors import InvalidValueError, ShapeError
from lgteun.tensor import _kernels
from lgteun.tensor.autodiff import Var, record, value

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
BICUBIC_A = -0.5


# ------------------------------------------------------------ flop counting

class FlopCounter:
    def __init__(self):
        self.total = 0

    def add(self, n):
        self.total += int(n)


_active_counter: list[FlopCounter] = []


@contextlib.contextmanager
def count_flops():
    """Tally approximate floating-point operations of forward ops in the block."""
    counter = FlopCounter()
    _active_counter.append(counter)
    try:
        yield counter
    finally:
        _active_counter.pop()


def _flops(n):
    if _active_counter:
        _active_counter[-1].add(n)


# ------------------------------------------------------------ elementwise

def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _shape_of(a):
    return np.shape(value(a))


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    _flops(out.size)
    sa, sb = _shape_of(a), _shape_of(b)
    return record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    av, bv = value(a), value(b)
    out = av - bv
    _flops(out.size)
    sa, sb = _shape_of(a), _shape_of(b)
    return record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    av, bv = value(a), value(b)
    out = av * bv
    _flops(out.size)
    sa, sb = _shape_of(a), _shape_of(b)
    return record(out, (a, b),
                  lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)))


def cos(a):
    av = value(a)
    return record(np.cos(av), (a,), lambda g: (-g * np.sin(av),))


def sin(a):
    av = value(a)
    return record(np.sin(av), (a,), lambda g: (g * np.cos(av),))


def absolute(a):
    av = value(a)
    return record(np.abs(av), (a,), lambda g: (g * np.sign(av),))


def sum_all(a):
    av = value(a)
    return record(np.asarray(av.sum(), dtype=av.dtype), (a,),
                  lambda g: (np.broadcast_to(g, av.shape).astype(av.dtype),))


def mean_all(a):
    av = value(a)
    n = av.size
    return record(np.asarray(av.mean(), dtype=av.dtype), (a,),
                  lambda g: (np.full(av.shape, g / n, dtype=av.dtype),))


def gelu(a):
    """Exact (erf-based) GELU."""
    av = value(a)
    cdf = 0.5 * (1.0 + erf(av / _SQRT2))
    out = (av * cdf).astype(av.dtype, copy=False)
    _flops(8 * av.size)

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * av * av)
        return ((g * (cdf + av * pdf)).astype(av.dtype, copy=False),)

    return record(out, (a,), vjp)


# ------------------------------------------------------------ shape ops

def reshape(a, shape):
    av = value(a)
    old = av.shape
    return record(av.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    av = value(a)
    inv = tuple(np.argsort(axes))
    return record(av.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, key):
    av = value(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, key, g) if _is_fancy(key) else out.__setitem__(key, g)
        return (out,)

    return record(av[key], (a,), vjp)


def _is_fancy(key):
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def concat(parts, axis=-1):
    vals = [value(p) for p in parts]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    out = np.concatenate(vals, axis=axis)
    return record(out, tuple(parts), lambda g: tuple(np.split(g, sizes, axis=axis)))


def split_channels(a, n_first):
    """Split the last axis into ``[:n_first]`` and ``[n_first:]``."""
    return a[..., :n_first], a[..., n_first:]


# ------------------------------------------------------------ linear algebra

def matmul(a, b):
    av, bv = value(a), value(b)
    out = av @ bv
    _flops(2 * out.size * av.shape[-1])

    def vjp(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        if bv.ndim == 2:
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return _unbroadcast(ga, av.shape), gb

    return record(out, (a, b), vjp)


def softmax_lastdim(x):
    """Numerically stable softmax over the last axis."""
    xv = value(x)
    if not np.all(np.isfinite(xv)):
        raise InvalidValueError("softmax input contains non-finite values")
    e = np.exp(xv - xv.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    _flops(4 * p.size)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return record(p, (x,), vjp)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize each token over its channel (last) axis, then scale and shift."""
    xv, gv, bv = value(x), value(gamma), value(beta)
    c = xv.shape[-1]
    if gv.shape != (c,) or bv.shape != (c,):
        raise ShapeError(f"layer_norm affine extents {gv.shape}/{bv.shape} do not match channels {c}")
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    _flops(8 * xv.size)

    def vjp(g):
        gh = g * gv
        gx = rstd * (gh - gh.mean(axis=-1, keepdims=True)
                     - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record(xhat * gv + bv, (x, gamma, beta), vjp)


def conv_pointwise(x, w, b):
    """Per-pixel linear map ``x @ w + b`` with ``w`` of extents (C_in, C_out)."""
    xv, wv = value(x), value(w)
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[0]:
        raise ShapeError(f"conv_pointwise: input channels {xv.shape[-1]} vs weight {wv.shape}")
    if value(b).shape != (wv.shape[1],):
        raise ShapeError(f"conv_pointwise: bias {value(b).shape} vs {wv.shape[1]} outputs")
    return add(matmul(x, w), b)


# ------------------------------------------------------------ padding

def _pad_amounts(kh, kw):
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"depthwise kernels must have odd extents, got {kh}x{kw}")
    return kh // 2, kw // 2


def _pad_axis(x, p, axis, mode):
    if p == 0:
        return x
    n = x.shape[axis]
    if mode == "reflect":
        idx = np.concatenate([np.arange(p, 0, -1), np.arange(n), np.arange(n - 2, n - 2 - p, -1)])
        return np.take(x, idx, axis=axis)
    widths = [(0, 0)] * x.ndim
    widths[axis] = (p, p)
    return np.pad(x, widths)


def _pad_axis_adjoint(g, p, axis, mode):
    if p == 0:
        return g
    g = np.moveaxis(g, axis, 0)
    n = g.shape[0] - 2 * p
    out = g[p:p + n].copy()
    if mode == "reflect":
        out[1:p + 1] += g[:p][::-1]
        out[n - 1 - p:n - 1] += g[p + n:][::-1]
    return np.moveaxis(out, 0, axis)


def pad2d(x4, ph, pw, mode):
    return _pad_axis(_pad_axis(x4, ph, 1, mode), pw, 2, mode)


def pad2d_adjoint(g4, ph, pw, mode):
    return _pad_axis_adjoint(_pad_axis_adjoint(g4, pw, 2, mode), ph, 1, mode)


def _dw_geometry(h, w, kv, stride, padding):
    if padding not in ("reflect", "zero"):
        raise ValueError(f"unknown padding {padding!r}")
    _, kh, kw = kv.shape
    ph, pw = _pad_amounts(kh, kw)
    if padding == "reflect" and (ph >= h or pw >= w):
        raise ShapeError(f"conv_depthwise: {kh}x{kw} kernel larger than padded {h}x{w} input")
    return ph, pw, -(-h // stride), -(-w // stride)


def conv_depthwise(x, k, stride=1, padding="reflect"):
    """Per-channel 2-D correlation with 'same' padding, then decimation by ``stride``.

    ``k`` has extents (C, kh, kw) with odd kh, kw.  Output spatial extents are
    ``ceil(H / stride)`` x ``ceil(W / stride)``.
    """
    xv, kv = value(x), value(k)
    if kv.ndim != 3 or kv.shape[0] != xv.shape[-1]:
        raise ShapeError(f"conv_depthwise: kernel {kv.shape} vs {xv.shape[-1]} channels")
    *lead, h, w, c = xv.shape
    ph, pw, oh, ow = _dw_geometry(h, w, kv, stride, padding)
    kx = kv.astype(xv.dtype, copy=False)
    xp = pad2d(xv.reshape(-1, h, w, c), ph, pw, padding)
    out = _kernels.dwcorr_fwd(xp, kx, stride, oh, ow)
    _flops(2 * out.size * kv.shape[1] * kv.shape[2])

    def vjp(g):
        gxp, gk = _kernels.dwcorr_bwd(xp, kx, g.reshape(-1, oh, ow, c), stride)
        gx = pad2d_adjoint(gxp, ph, pw, padding).reshape(xv.shape)
        return gx, gk.astype(kv.dtype, copy=False)

    return record(out.reshape(*lead, oh, ow, c), (x, k), vjp)


def conv_depthwise_adjoint(y, k, in_hw, stride=1, padding="reflect"):
    """Exact adjoint of :func:`conv_depthwise` with respect to its input (no tape)."""
    yv, kv = value(y), value(k)
    *lead, oh, ow, c = yv.shape
    h, w = in_hw
    ph, pw, eoh, eow = _dw_geometry(h, w, kv, stride, padding)
    if (eoh, eow) != (oh, ow):
        raise ShapeError(f"adjoint: {oh}x{ow} input does not come from {h}x{w} at stride {stride}")
    xp = np.zeros((int(np.prod(lead, dtype=int)), h + 2 * ph, w + 2 * pw, c), dtype=yv.dtype)
    gxp, _ = _kernels.dwcorr_bwd(xp, kv.astype(yv.dtype, copy=False), yv.reshape(-1, oh, ow, c), stride)
    return pad2d_adjoint(gxp, ph, pw, padding).reshape(*lead, h, w, c)


# ------------------------------------------------------------ resampling

def _cubic(t, a=BICUBIC_A):
    t = np.abs(t)
    return np.where(
        t <= 1.0,
        (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0,
        np.where(t < 2.0, a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a, 0.0),
    )


@lru_cache(maxsize=64)
def bicubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) interpolation matrix, half-pixel centers, clamped borders."""
    mat = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        i0 = math.floor(src)
        t = src - i0
        for off in range(-1, 3):
            wgt = float(_cubic(np.array(t - off)))
            mat[i, min(max(i0 + off, 0), n_in - 1)] += wgt
    mat.setflags(write=False)
    return mat


def _along_h(mat, x):
    *lead, h, w, c = x.shape
    return (mat @ x.reshape(-1, h, w * c)).reshape(*lead, mat.shape[0], w, c)


def _along_w(mat, x):
    *lead, h, w, c = x.shape
    return (mat @ x.reshape(-1, w, c)).reshape(*lead, h, mat.shape[0], c)


def resample_bicubic(x, factor):
    """Bicubic resize (a = -0.5) of the spatial axes by ``factor`` in {1/4, 1/2, 1, 2, 4}."""
    f = Fraction(factor).limit_denominator(16)
    if f not in (Fraction(1, 4), Fraction(1, 2), 1, 2, 4):
        raise ShapeError(f"unsupported resampling factor {factor}")
    xv = value(x)
    if f == 1:
        return x
    h, w = xv.shape[-3], xv.shape[-2]
    if (h * f.numerator) % f.denominator or (w * f.numerator) % f.denominator:
        raise ShapeError(f"cannot resample {h}x{w} by {f}: extents not divisible by {f.denominator}")
    oh, ow = h * f.numerator // f.denominator, w * f.numerator // f.denominator
    mh = bicubic_matrix(h, oh).astype(xv.dtype)
    mw = bicubic_matrix(w, ow).astype(xv.dtype)
    out = _along_w(mw, _along_h(mh, xv))
    _flops(8 * out.size + 8 * oh * w * xv.shape[-1])
    return record(out, (x,), lambda g: (_along_h(mh.T, _along_w(mw.T, g)),))
