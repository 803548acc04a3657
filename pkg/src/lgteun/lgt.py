"""Local-Global Transformer prior.

Each block is ``x + LGMixer(LN(x))`` followed by ``y + ChannelMixer(LN(y))``.
The LG mixer sends the first half of the channels through window attention
and the second half through a frequency-domain branch that rescales the
amplitude and phase of the 2-D spectrum per channel.  Blocks are stacked in
a two-level U: encoder, bottleneck at half resolution and doubled width,
decoder with an additive skip, then a global residual.

Parameters live in flat ``dict[str, array]`` stores with dotted names; all
forward functions accept either arrays or tape ``Var`` values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lgteun import spectral
from lgteun.errors import ShapeError
from lgteun.tensor import ops
from lgteun.tensor.autodiff import value


@dataclass(frozen=True)
class LgtConfig:
    channels: int = 16
    window: int = 8
    heads: int = 2
    encoder_blocks: int = 2
    bottleneck_blocks: int = 1
    decoder_blocks: int = 2
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.channels <= 0 or self.channels % 2:
            raise ShapeError(f"channels must be even and positive, got {self.channels}")
        if self.window < 1 or self.heads < 1:
            raise ShapeError("window and heads must be >= 1")
        if (self.channels // 2) % self.heads:
            raise ShapeError(f"C/2 = {self.channels // 2} not divisible by {self.heads} heads")

    @property
    def n_blocks(self) -> int:
        return self.encoder_blocks + self.bottleneck_blocks + self.decoder_blocks


class Scope:
    """Prefix view over a flat parameter store."""

    def __init__(self, store, prefix=""):
        self.store = store
        self.prefix = prefix

    def __getitem__(self, key):
        return self.store[self.prefix + key]

    def sub(self, name) -> "Scope":
        return Scope(self.store, f"{self.prefix}{name}.")


# ------------------------------------------------------------ initialization

def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


def init_pointwise(rng, c_in, c_out, dtype=np.float32):
    return {"w": _uniform(rng, (c_in, c_out), c_in, dtype), "b": np.zeros(c_out, dtype)}


def init_block(rng, channels, window, heads, dtype=np.float32) -> dict[str, np.ndarray]:
    half = channels // 2
    m2 = window * window
    p = {
        "ln1.g": np.ones(channels, dtype), "ln1.b": np.zeros(channels, dtype),
        "ln2.g": np.ones(channels, dtype), "ln2.b": np.zeros(channels, dtype),
        "wmsa.pos": np.zeros((heads, m2, m2), dtype),
        # per-channel 1x1 maps on amplitude and phase: fan-in is 1
        "glob.amp.w": _uniform(rng, (half,), 1, dtype), "glob.amp.b": np.zeros(half, dtype),
        "glob.pha.w": _uniform(rng, (half,), 1, dtype), "glob.pha.b": np.zeros(half, dtype),
        "mlp.dw.k": _uniform(rng, (2 * channels, 3, 3), 9, dtype),
        "mlp.dw.b": np.zeros(2 * channels, dtype),
    }
    for name, (ci, co) in {"wmsa.qkv": (half, 3 * half), "wmsa.proj": (half, half),
                           "mlp.fc1": (channels, 2 * channels),
                           "mlp.fc2": (2 * channels, channels)}.items():
        for k, v in init_pointwise(rng, ci, co, dtype).items():
            p[f"{name}.{k}"] = v
    return p


def _add(store, prefix, params):
    for k, v in params.items():
        store[f"{prefix}{k}"] = v


def init_prior(rng, bands: int, cfg: LgtConfig, prefix: str = "", dtype=np.float32) -> dict[str, np.ndarray]:
    """Fresh parameters for one prior module, keyed ``{prefix}enc.block0.ln1.g`` etc."""
    c = cfg.channels
    store: dict[str, np.ndarray] = {}
    _add(store, prefix + "embed.", init_pointwise(rng, bands, c, dtype))
    for i in range(cfg.encoder_blocks):
        _add(store, f"{prefix}enc.block{i}.", init_block(rng, c, cfg.window, cfg.heads, dtype))
    _add(store, prefix + "down.", init_pointwise(rng, c, 2 * c, dtype))
    for i in range(cfg.bottleneck_blocks):
        _add(store, f"{prefix}bottleneck.block{i}.", init_block(rng, 2 * c, cfg.window, cfg.heads, dtype))
    _add(store, prefix + "up.", init_pointwise(rng, 2 * c, c, dtype))
    for i in range(cfg.decoder_blocks):
        _add(store, f"{prefix}dec.block{i}.", init_block(rng, c, cfg.window, cfg.heads, dtype))
    # zero projection: a fresh prior is the identity map on its input
    store[prefix + "unembed.w"] = np.zeros((c, bands), dtype)
    store[prefix + "unembed.b"] = np.zeros(bands, dtype)
    return store


# ------------------------------------------------------------ building blocks

def pointwise(x, p: Scope):
    return ops.conv_pointwise(x, p["w"], p["b"])


def patch_embed(z, p: Scope):
    """Patch size 1: every pixel vector is a token, projected B -> C."""
    return pointwise(z, p)


def patch_unembed(x, p: Scope):
    return pointwise(x, p)


def window_partition(x, m: int):
    """``(..., H, W, C)`` -> ``(n_windows, M*M, C)``, windows in row-major order."""
    *lead, h, w, c = value(x).shape
    if h % m or w % m:
        raise ShapeError(f"{h}x{w} feature map not divisible by window {m}")
    t = ops.reshape(x, (-1, h // m, m, w // m, m, c))
    t = ops.transpose(t, (0, 1, 3, 2, 4, 5))
    return ops.reshape(t, (-1, m * m, c))


def window_merge(windows, h: int, w: int, lead=()):
    """Inverse of :func:`window_partition`."""
    n, m2, c = value(windows).shape
    m = math.isqrt(m2)
    t = ops.reshape(windows, (-1, h // m, w // m, m, m, c))
    t = ops.transpose(t, (0, 1, 3, 2, 4, 5))
    return ops.reshape(t, (*lead, h, w, c))


def wmsa(x, p: Scope, window: int, heads: int, return_attention=False):
    """Window multi-head self-attention: softmax(Q K^T / sqrt(d) + P) V per window."""
    *lead, h, w, c = value(x).shape
    if c % heads:
        raise ShapeError(f"{c} channels not divisible by {heads} heads")
    d = c // heads
    m2 = window * window
    t = window_partition(x, window)
    qkv = pointwise(t, p.sub("qkv"))
    qkv = ops.reshape(qkv, (-1, m2, 3, heads, d))
    qkv = ops.transpose(qkv, (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2)))
    scores = ops.add(ops.mul(scores, 1.0 / math.sqrt(d)), p["pos"])
    attn = ops.softmax_lastdim(scores)
    out = ops.matmul(attn, v)
    out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (-1, m2, c))
    out = pointwise(out, p.sub("proj"))
    merged = window_merge(out, h, w, tuple(lead))
    return (merged, attn) if return_attention else merged


def global_branch(x, p: Scope):
    """Per-channel affine maps on spectral amplitude and phase, back to space."""
    width = value(x).shape[-2]
    amp, pha = spectral.amp_phase(spectral.rfft2(x))
    amp = ops.add(ops.mul(amp, p["amp.w"]), p["amp.b"])
    pha = ops.add(ops.mul(pha, p["pha.w"]), p["pha.b"])
    return spectral.irfft2(spectral.recompose(amp, pha), width)


def lg_mixer(x, p: Scope, window: int, heads: int):
    c = value(x).shape[-1]
    if c % 2:
        raise ShapeError(f"LG mixer needs an even channel count, got {c}")
    x_l, x_g = ops.split_channels(x, c // 2)
    return ops.concat([wmsa(x_l, p.sub("wmsa"), window, heads), global_branch(x_g, p.sub("glob"))])


def channel_mixer(x, p: Scope):
    """Pointwise expand x2 -> 3x3 depthwise conv -> GELU -> pointwise contract."""
    t = pointwise(x, p.sub("fc1"))
    t = ops.add(ops.conv_depthwise(t, p["dw.k"], 1, "reflect"), p["dw.b"])
    return pointwise(ops.gelu(t), p.sub("fc2"))


def lgt_block(x, p: Scope, window: int, heads: int, eps: float = 1e-5):
    y = ops.add(x, lg_mixer(ops.layer_norm(x, p["ln1.g"], p["ln1.b"], eps), p, window, heads))
    return ops.add(y, channel_mixer(ops.layer_norm(y, p["ln2.g"], p["ln2.b"], eps), p.sub("mlp")))


def prior_forward(z_half, params, cfg: LgtConfig, prefix: str = ""):
    """Denoise ``(..., H, W, B)``; H and W must be multiples of ``2 * window``."""
    h, w = value(z_half).shape[-3:-1]
    need = 2 * cfg.window
    if h % need or w % need:
        raise ShapeError(f"prior input {h}x{w}: extents must be multiples of {need} (2 x window)")
    p = Scope(params, prefix)
    blk = lambda t, name: lgt_block(t, p.sub(name), cfg.window, cfg.heads, cfg.ln_eps)  # noqa: E731

    t = patch_embed(z_half, p.sub("embed"))
    for i in range(cfg.encoder_blocks):
        t = blk(t, f"enc.block{i}")
    skip = t
    t = pointwise(ops.resample_bicubic(t, 0.5), p.sub("down"))
    for i in range(cfg.bottleneck_blocks):
        t = blk(t, f"bottleneck.block{i}")
    t = pointwise(ops.resample_bicubic(t, 2), p.sub("up"))
    t = ops.add(t, skip)
    for i in range(cfg.decoder_blocks):
        t = blk(t, f"dec.block{i}")
    return ops.add(z_half, patch_unembed(t, p.sub("unembed")))


def block_names(params, prefix: str = "") -> list[str]:
    """Distinct LGT block scopes present in a parameter store."""
    seen = []
    for k in params:
        if k.startswith(prefix) and ".block" in k:
            scope = k[: k.index(".", k.index(".block") + 1)]
            if scope not in seen:
                seen.append(scope)
    return seen
