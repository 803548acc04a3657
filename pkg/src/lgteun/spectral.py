"""Unitary 2-D real DFT and polar (amplitude/phase) decomposition.

Spatial tensors are ``(..., H, W, C)`` and transform per channel over the
``H``/``W`` axes.  The forward transform stores the non-redundant half
spectrum ``(..., H, W//2 + 1, C)``.  Both directions use ``1/sqrt(HW)`` so the
round trip is the identity and Parseval holds without extra factors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lgteun.errors import ShapeError
from lgteun.tensor import ops
from lgteun.tensor.autodiff import record, value

_AXES = (-3, -2)


@dataclass
class Spectrum:
    real: object
    imag: object

    @property
    def shape(self):
        return value(self.real).shape


def _half_weights(n_half, width, dtype):
    # multiplicity of each stored column in the full spectrum
    wts = np.full(n_half, 2.0, dtype=dtype)
    wts[0] = 1.0
    if width % 2 == 0:
        wts[-1] = 1.0
    return wts[:, None]


def _rfft2_packed(x):
    xv = value(x)
    h, w = xv.shape[-3], xv.shape[-2]
    spec = np.fft.rfft2(xv, axes=_AXES, norm="ortho")
    packed = np.stack([spec.real, spec.imag], axis=0)
    ops._flops(5 * xv.size * np.log2(max(h * w, 2)))

    def vjp(g):
        full = np.zeros(xv.shape[:-2] + (w, xv.shape[-1]), dtype=np.result_type(xv.dtype, np.complex64))
        full[..., : spec.shape[-2], :] = g[0] + 1j * g[1]
        return (np.fft.ifft2(full, axes=_AXES, norm="ortho").real.astype(xv.dtype),)

    return record(packed, (x,), vjp)


def rfft2(x) -> Spectrum:
    """Half-spectrum unitary DFT of a real ``(..., H, W, C)`` tensor."""
    if value(x).ndim < 3:
        raise ShapeError(f"rfft2 expects (..., H, W, C), got {value(x).shape}")
    packed = _rfft2_packed(x)
    return Spectrum(packed[0], packed[1])


def irfft2(s: Spectrum, out_width: int):
    """Inverse of :func:`rfft2`; ``out_width`` resolves the even/odd ambiguity."""
    re, im = s.real, s.imag
    rv, iv = value(re), value(im)
    if rv.shape != iv.shape:
        raise ShapeError(f"spectrum parts disagree: {rv.shape} vs {iv.shape}")
    n_half = rv.shape[-2]
    if out_width not in (2 * (n_half - 1), 2 * (n_half - 1) + 1) or out_width < 1:
        raise ShapeError(f"out_width {out_width} inconsistent with half-width {n_half}")
    h = rv.shape[-3]
    out = np.fft.irfft2(rv + 1j * iv, s=(h, out_width), axes=_AXES, norm="ortho").astype(rv.dtype)
    wts = _half_weights(n_half, out_width, rv.dtype)
    ops._flops(5 * out.size * np.log2(max(h * out_width, 2)))

    def vjp(g):
        q = np.fft.rfft2(g, axes=_AXES, norm="ortho")
        return (wts * q.real).astype(rv.dtype), (wts * q.imag).astype(rv.dtype)

    return record(out, (re, im), vjp)


def _amplitude(re, im):
    rv, iv = value(re), value(im)
    amp = np.hypot(rv, iv)

    def vjp(g):
        safe = np.where(amp > 0, amp, 1.0)
        scale = np.where(amp > 0, g / safe, 0.0)
        return scale * rv, scale * iv

    return record(amp, (re, im), vjp)


def _phase(re, im):
    rv, iv = value(re), value(im)
    ph = np.arctan2(iv, rv)
    # fold -pi (from a signed-zero imaginary part) onto +pi
    ph = np.where(ph <= -np.pi, np.pi, ph).astype(rv.dtype)

    def vjp(g):
        a2 = rv * rv + iv * iv
        scale = np.where(a2 > 0, g / np.where(a2 > 0, a2, 1.0), 0.0)
        return -scale * iv, scale * rv

    return record(ph, (re, im), vjp)


def amp_phase(s: Spectrum):
    """Amplitude ``sqrt(R^2 + I^2)`` and four-quadrant phase in ``(-pi, pi]``."""
    return _amplitude(s.real, s.imag), _phase(s.real, s.imag)


def recompose(amp, phase) -> Spectrum:
    if value(amp).shape != value(phase).shape:
        raise ShapeError(f"amplitude {value(amp).shape} vs phase {value(phase).shape}")
    return Spectrum(ops.mul(amp, ops.cos(phase)), ops.mul(amp, ops.sin(phase)))
