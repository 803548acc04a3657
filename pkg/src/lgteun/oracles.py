"""Slow reference implementations used to cross-check the fast paths.

Nothing here shares code with the production kernels: loops are explicit and
formulas are written out term by term.
"""
from __future__ import annotations

import math

import numpy as np


def naive_dft2(x):
    """Unitary 2-D DFT by direct double sum, full spectrum, per channel. x: (H, W, C)."""
    h, w, c = x.shape
    out = np.zeros((h, w, c), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = np.zeros(c, dtype=np.complex128)
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * np.exp(-2j * math.pi * (m * u / h + n * v / w))
            out[u, v] = acc / math.sqrt(h * w)
    return out


def naive_idft2(spec):
    """Inverse of :func:`naive_dft2` (full spectrum in, real part out)."""
    h, w, c = spec.shape
    out = np.zeros((h, w, c))
    for m in range(h):
        for n in range(w):
            acc = np.zeros(c, dtype=np.complex128)
            for u in range(h):
                for v in range(w):
                    acc += spec[u, v] * np.exp(2j * math.pi * (m * u / h + n * v / w))
            out[m, n] = (acc / math.sqrt(h * w)).real
    return out


def hermitian_full(half, width):
    """Expand a stored half spectrum (H, W//2+1, C) to the full (H, W, C) spectrum."""
    h, wh, c = half.shape
    full = np.zeros((h, width, c), dtype=np.complex128)
    for u in range(h):
        for v in range(width):
            if v < wh:
                full[u, v] = half[u, v]
            else:
                full[u, v] = np.conj(half[(-u) % h, width - v])
    return full


def brute_wmsa(x, qkv_w, qkv_b, proj_w, proj_b, pos, window, heads):
    """Windowed multi-head attention with explicit loops over windows, heads and tokens."""
    h, w, c = x.shape
    d = c // heads
    out = np.zeros_like(x, dtype=np.float64)
    for wy in range(h // window):
        for wx in range(w // window):
            tokens = []
            coords = []
            for a in range(window):
                for b in range(window):
                    r, s = wy * window + a, wx * window + b
                    tokens.append(x[r, s])
                    coords.append((r, s))
            t = np.array(tokens, dtype=np.float64)
            qkv = t @ qkv_w + qkv_b
            q, k, v = qkv[:, :c], qkv[:, c:2 * c], qkv[:, 2 * c:]
            heads_out = []
            for i in range(heads):
                qi, ki, vi = (m[:, i * d:(i + 1) * d] for m in (q, k, v))
                res = np.zeros_like(vi)
                for tq in range(len(tokens)):
                    logits = np.array([qi[tq] @ ki[tk] / math.sqrt(d) + pos[i, tq, tk]
                                       for tk in range(len(tokens))])
                    wts = np.exp(logits - logits.max())
                    wts /= wts.sum()
                    res[tq] = sum(wts[tk] * vi[tk] for tk in range(len(tokens)))
                heads_out.append(res)
            merged = np.concatenate(heads_out, axis=1) @ proj_w + proj_b
            for idx, (r, s) in enumerate(coords):
                out[r, s] = merged[idx]
    return out


def materialize(op, in_shape):
    """Dense matrix of a linear map on arrays of ``in_shape`` (column j = op(e_j))."""
    n = int(np.prod(in_shape))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.asarray(op(e.reshape(in_shape)), dtype=np.float64).ravel())
    return np.stack(cols, axis=1)


def naive_depthwise(x, k, stride, padding):
    """Triple-loop depthwise correlation with 'same' padding. x: (H, W, C), k: (C, kh, kw)."""
    h, w, c = x.shape
    _, kh, kw = k.shape
    ph, pw = kh // 2, kw // 2

    def fetch(r, s, ch):
        if padding == "reflect":
            r = -r if r < 0 else (2 * (h - 1) - r if r >= h else r)
            s = -s if s < 0 else (2 * (w - 1) - s if s >= w else s)
        elif not (0 <= r < h and 0 <= s < w):
            return 0.0
        return x[r, s, ch]

    oh, ow = -(-h // stride), -(-w // stride)
    out = np.zeros((oh, ow, c))
    for i in range(oh):
        for j in range(ow):
            for ch in range(c):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        acc += fetch(i * stride + a - ph, j * stride + b - pw, ch) * k[ch, a, b]
                out[i, j, ch] = acc
    return out


def finite_difference(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def reference_adam(grad_fn, w0, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written straight from the published update rule."""
    w, m, v = float(w0), 0.0, 0.0
    traj = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        traj.append(w)
    return traj
