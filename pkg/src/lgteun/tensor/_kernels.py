"""Hot inner loops, with a numba-compiled path and a pure-numpy path.

The backend is picked once at import time from ``LGTEUN_NUMBA``:
``"0"`` forces numpy, anything else uses numba when it imports.  Both paths
compute the same sums in different orders, so they agree to rounding only.
"""
from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("LGTEUN_NUMBA", "1") != "0"


# ---------------------------------------------------------------- numpy path

def dwcorr_fwd_np(xp, k, stride, oh, ow):
    # xp: (N, Hp, Wp, C) padded input; k: (C, kh, kw)
    n, _, _, c = xp.shape
    _, kh, kw = k.shape
    out = np.zeros((n, oh, ow, c), dtype=xp.dtype)
    for a in range(kh):
        for b in range(kw):
            win = xp[:, a:a + stride * (oh - 1) + 1:stride, b:b + stride * (ow - 1) + 1:stride, :]
            out += win * k[:, a, b]
    return out


def dwcorr_bwd_np(xp, k, g, stride):
    n, hp, wp, c = xp.shape
    _, kh, kw = k.shape
    _, oh, ow, _ = g.shape
    gx = np.zeros_like(xp)
    gk = np.zeros_like(k)
    for a in range(kh):
        for b in range(kw):
            sl = (slice(None), slice(a, a + stride * (oh - 1) + 1, stride),
                  slice(b, b + stride * (ow - 1) + 1, stride), slice(None))
            gx[sl] += g * k[:, a, b]
            gk[:, a, b] = np.einsum("nhwc,nhwc->c", g, xp[sl])
    return gx, gk


def window_moments_np(x, y, win):
    """Per-window means, variances and covariance for every ``win`` x ``win`` window.

    ``x``, ``y`` are 2-D.  Two-pass (centered) statistics, one window row at a time.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    oh, ow = x.shape[0] - win + 1, x.shape[1] - win + 1
    stats = np.empty((5, oh, ow))
    for i in range(oh):
        wx = sliding_window_view(x[i:i + win], (win, win))[0]
        wy = sliding_window_view(y[i:i + win], (win, win))[0]
        ux = wx.mean(axis=(1, 2))
        uy = wy.mean(axis=(1, 2))
        dx = wx - ux[:, None, None]
        dy = wy - uy[:, None, None]
        stats[0, i] = ux
        stats[1, i] = uy
        stats[2, i] = (dx * dx).mean(axis=(1, 2))
        stats[3, i] = (dy * dy).mean(axis=(1, 2))
        stats[4, i] = (dx * dy).mean(axis=(1, 2))
    return tuple(stats)


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def dwcorr_fwd_nb(xp, k, stride, oh, ow):
        n, _, _, c = xp.shape
        _, kh, kw = k.shape
        out = np.zeros((n, oh, ow, c), dtype=xp.dtype)
        for s in range(n):
            for i in range(oh):
                for j in range(ow):
                    for a in range(kh):
                        for b in range(kw):
                            r = i * stride + a
                            q = j * stride + b
                            for ch in range(c):
                                out[s, i, j, ch] += xp[s, r, q, ch] * k[ch, a, b]
        return out

    @numba.njit(cache=True)
    def dwcorr_bwd_nb(xp, k, g, stride):
        n, _, _, c = xp.shape
        _, kh, kw = k.shape
        _, oh, ow, _ = g.shape
        gx = np.zeros_like(xp)
        gk = np.zeros_like(k)
        for s in range(n):
            for i in range(oh):
                for j in range(ow):
                    for a in range(kh):
                        for b in range(kw):
                            r = i * stride + a
                            q = j * stride + b
                            for ch in range(c):
                                gv = g[s, i, j, ch]
                                gx[s, r, q, ch] += gv * k[ch, a, b]
                                gk[ch, a, b] += gv * xp[s, r, q, ch]
        return gx, gk

    @numba.njit(cache=True)
    def window_moments_nb(x, y, win):
        h, w = x.shape
        oh, ow = h - win + 1, w - win + 1
        mx = np.empty((oh, ow))
        my = np.empty((oh, ow))
        vx = np.empty((oh, ow))
        vy = np.empty((oh, ow))
        cxy = np.empty((oh, ow))
        n = float(win * win)
        for i in range(oh):
            for j in range(ow):
                sx = 0.0
                sy = 0.0
                for a in range(win):
                    for b in range(win):
                        sx += x[i + a, j + b]
                        sy += y[i + a, j + b]
                ux = sx / n
                uy = sy / n
                qx = 0.0
                qy = 0.0
                qxy = 0.0
                for a in range(win):
                    for b in range(win):
                        dx = x[i + a, j + b] - ux
                        dy = y[i + a, j + b] - uy
                        qx += dx * dx
                        qy += dy * dy
                        qxy += dx * dy
                mx[i, j] = ux
                my[i, j] = uy
                vx[i, j] = qx / n
                vy[i, j] = qy / n
                cxy[i, j] = qxy / n
        return mx, my, vx, vy, cxy


def dwcorr_fwd(xp, k, stride, oh, ow, use_numba=None):
    if USE_NUMBA if use_numba is None else use_numba:
        return dwcorr_fwd_nb(np.ascontiguousarray(xp), np.ascontiguousarray(k), stride, oh, ow)
    return dwcorr_fwd_np(xp, k, stride, oh, ow)


def dwcorr_bwd(xp, k, g, stride, use_numba=None):
    if USE_NUMBA if use_numba is None else use_numba:
        return dwcorr_bwd_nb(np.ascontiguousarray(xp), np.ascontiguousarray(k),
                             np.ascontiguousarray(g), stride)
    return dwcorr_bwd_np(xp, k, g, stride)


def window_moments(x, y, win, use_numba=None):
    if USE_NUMBA if use_numba is None else use_numba:
        return window_moments_nb(np.ascontiguousarray(x, dtype=np.float64),
                                 np.ascontiguousarray(y, dtype=np.float64), win)
    return window_moments_np(x, y, win)
