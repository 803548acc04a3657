"""The unfolded network: K stages of (learned gradient step, LGT prior).

One data-module weight set is shared by every stage; each stage owns its step
size ``stage{k}.eta`` and its prior ``stage{k}.prior.*``.  The learned
degradation operators are

* ``S``:   two units of (bicubic x1/2 -> 3x3 depthwise conv)
* ``S^T``: two units of (bicubic x2  -> 3x3 depthwise conv)
* ``R``, ``R^T``: pointwise convs B -> 1 and 1 -> B
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from lgteun.errors import FormatError, ShapeError
from lgteun.lgt import LgtConfig, Scope, init_prior, prior_forward
from lgteun.tensor import ops
from lgteun.tensor.autodiff import value
from lgteun.tensor.io import read_record, write_record

SCALE = 4
INIT_RECIPE = "fanin-uniform/zero-unembed/delta-dw/eta0.1/v1"
CKPT_MAGIC = b"LGCK"


@dataclass(frozen=True)
class UnfoldConfig:
    stages: int = 2
    bands: int = 4
    lgt: LgtConfig = field(default_factory=LgtConfig)
    scale: int = SCALE

    def __post_init__(self):
        if self.stages < 0:
            raise ShapeError(f"stages must be >= 0, got {self.stages}")
        if self.scale != SCALE:
            raise ShapeError(f"scale is fixed at {SCALE}, got {self.scale}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UnfoldConfig":
        d = dict(d)
        d["lgt"] = LgtConfig(**d["lgt"])
        return cls(**d)


def _delta3(channels, dtype):
    k = np.zeros((channels, 3, 3), dtype)
    k[:, 1, 1] = 1.0
    return k


def init_data_module(bands: int, dtype=np.float32) -> dict[str, np.ndarray]:
    p = {}
    for unit in ("down0", "down1", "up0", "up1"):
        p[f"data.{unit}.k"] = _delta3(bands, dtype)
    p["data.R.w"] = np.full((bands, 1), 1.0 / bands, dtype)
    p["data.R.b"] = np.zeros(1, dtype)
    p["data.RT.w"] = np.ones((1, bands), dtype)
    p["data.RT.b"] = np.zeros(bands, dtype)
    return p


def init_model(cfg: UnfoldConfig, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """ModelParams: ``data.*`` (shared), ``stage{k}.eta`` and ``stage{k}.prior.*``."""
    rng = np.random.default_rng(seed)
    params = init_data_module(cfg.bands, dtype)
    for k in range(cfg.stages):
        params[f"stage{k}.eta"] = np.asarray(0.1, dtype)
        params.update(init_prior(rng, cfg.bands, cfg.lgt, f"stage{k}.prior.", dtype))
    return params


def count_params(params) -> int:
    return int(sum(np.size(value(v)) for v in params.values()))


# ------------------------------------------------------------ learned operators

def learned_S(z, p: Scope):
    for unit in ("down0", "down1"):
        z = ops.conv_depthwise(ops.resample_bicubic(z, 0.5), p[f"{unit}.k"], 1, "reflect")
    return z


def learned_ST(x, p: Scope):
    for unit in ("up0", "up1"):
        x = ops.conv_depthwise(ops.resample_bicubic(x, 2), p[f"{unit}.k"], 1, "reflect")
    return x


def learned_R(z, p: Scope):
    return ops.conv_pointwise(z, p["R.w"], p["R.b"])


def learned_RT(y, p: Scope):
    return ops.conv_pointwise(y, p["RT.w"], p["RT.b"])


def data_module(z_prev, x, y, eta, params, prefix: str = "data."):
    """``z - eta * [S^T(S z - x) + R^T(z R - y)]`` with the learned operators."""
    zs, xs, ys = value(z_prev).shape, value(x).shape, value(y).shape
    if xs[:-3] != zs[:-3] or xs[-3:] != (zs[-3] // SCALE, zs[-2] // SCALE, zs[-1]) \
            or zs[-3] % SCALE or zs[-2] % SCALE:
        raise ShapeError(f"data module: LrMS {xs} inconsistent with {zs} at scale {SCALE}")
    if ys != zs[:-1] + (1,):
        raise ShapeError(f"data module: PAN {ys} inconsistent with {zs}")
    p = Scope(params, prefix)
    spatial = learned_ST(ops.sub(learned_S(z_prev, p), x), p)
    spectral_ = learned_RT(ops.sub(learned_R(z_prev, p), y), p)
    return ops.sub(z_prev, ops.mul(eta, ops.add(spatial, spectral_)))


def lgteun_forward(x, y, params, cfg: UnfoldConfig, return_intermediates: bool = False):
    """Run all stages.  Intermediates are ``[z0, z_1/2, z1, ..., zK]``."""
    xs = value(x).shape
    if xs[-1] != cfg.bands:
        raise ShapeError(f"LrMS has {xs[-1]} bands, model expects {cfg.bands}")
    z = ops.resample_bicubic(x, SCALE)
    inter = [z] if return_intermediates else None
    for k in range(cfg.stages):
        try:
            half = data_module(z, x, y, params[f"stage{k}.eta"], params)
            z = prior_forward(half, params, cfg.lgt, f"stage{k}.prior.")
        except ShapeError as exc:
            raise ShapeError(f"stage {k}: {exc}") from exc
        if inter is not None:
            inter += [half, z]
    return (z, inter) if return_intermediates else z


def predict(lrms, pan, params, cfg: UnfoldConfig):
    """Plain-array inference on a single ``(h, w, B)`` / ``(H, W, 1)`` pair or a batch."""
    return np.asarray(lgteun_forward(lrms, pan, params, cfg))


# ------------------------------------------------------------ checkpoints

def save_checkpoint(path, params, cfg: UnfoldConfig, extra: dict | None = None) -> None:
    """``LGCK`` | u32 header length | JSON header | u32 count | entries.

    Each entry is u32 name length, UTF-8 name, then one MST1 tensor record.
    """
    header = {"config": cfg.to_dict(), "init_recipe": INIT_RECIPE, **(extra or {})}
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            write_record(fh, np.asarray(arr))


def load_checkpoint(path):
    """Returns ``(params, cfg, header)``."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        (count,) = struct.unpack("<I", fh.read(4))
        params = {}
        for _ in range(count):
            raw = fh.read(4)
            if len(raw) != 4:
                raise FormatError(f"{path}: truncated entry table")
            (nlen,) = struct.unpack("<I", raw)
            name = fh.read(nlen).decode("utf-8")
            arr = read_record(fh, f"{path}:{name}")
            params[name] = arr
    return params, UnfoldConfig.from_dict(header["config"]), header
