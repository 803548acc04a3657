"""Exact observation model and reduced-resolution scene synthesis.

``apply_S`` blurs each band with a normalized kernel (reflect padding) and
keeps every ``scale``-th pixel starting at index 0; ``apply_R`` projects the
bands onto a single panchromatic channel.  Adjoints are exact, including the
folding of reflected border pixels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lgteun.errors import ContractError, ShapeError
from lgteun.tensor import ops
from lgteun.tensor.io import load_tensor, save_tensor


def gaussian_kernel(size: int = 7, sigma: float = 1.0) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


@dataclass
class DegradationSpec:
    blur_kernel: np.ndarray = field(default_factory=gaussian_kernel)
    scale: int = 4
    spectral_response: np.ndarray | None = None
    noise_sigma_x: float = 0.0
    noise_sigma_y: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.blur_kernel = np.asarray(self.blur_kernel, dtype=np.float64)
        if self.blur_kernel.ndim != 2 or np.any(self.blur_kernel < 0):
            raise ContractError("blur kernel must be a nonnegative 2-D array")
        if abs(self.blur_kernel.sum() - 1.0) > 1e-9:
            raise ContractError(f"blur kernel sums to {self.blur_kernel.sum()}, expected 1")
        if self.scale < 1:
            raise ContractError(f"scale must be >= 1, got {self.scale}")
        if self.spectral_response is not None:
            self.spectral_response = np.asarray(self.spectral_response, dtype=np.float64)
            r = self.spectral_response
            if r.ndim != 1 or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
                raise ContractError("spectral response must be nonnegative weights summing to 1")
        if self.noise_sigma_x < 0 or self.noise_sigma_y < 0:
            raise ContractError("noise levels must be >= 0")

    def response(self, bands: int) -> np.ndarray:
        """Spectral response for ``bands`` channels (uniform when unset)."""
        if self.spectral_response is None:
            return np.full(bands, 1.0 / bands)
        if self.spectral_response.shape != (bands,):
            raise ShapeError(f"spectral response has {self.spectral_response.size} weights, data has {bands} bands")
        return self.spectral_response


@dataclass
class SceneTriple:
    gt: np.ndarray
    lrms: np.ndarray
    pan: np.ndarray

    def save(self, stem) -> None:
        stem = str(stem)
        save_tensor(stem + ".gt.mst", self.gt)
        save_tensor(stem + ".lrms.mst", self.lrms)
        save_tensor(stem + ".pan.mst", self.pan)

    @classmethod
    def load(cls, stem) -> "SceneTriple":
        stem = str(stem)
        return cls(load_tensor(stem + ".gt.mst"), load_tensor(stem + ".lrms.mst"),
                   load_tensor(stem + ".pan.mst"))


def _kernel_stack(spec, channels, dtype):
    return np.broadcast_to(spec.blur_kernel.astype(dtype), (channels,) + spec.blur_kernel.shape)


def _check_divisible(z, s):
    h, w = z.shape[-3], z.shape[-2]
    if h % s or w % s:
        raise ShapeError(f"spatial extents {h}x{w} not divisible by scale {s}")


def apply_S(z: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    _check_divisible(z, spec.scale)
    k = _kernel_stack(spec, z.shape[-1], z.dtype)
    return ops.conv_depthwise(z, k, stride=spec.scale, padding="reflect")


def apply_S_adjoint(x: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    s = spec.scale
    h, w = x.shape[-3] * s, x.shape[-2] * s
    k = _kernel_stack(spec, x.shape[-1], x.dtype)
    return ops.conv_depthwise_adjoint(x, k, (h, w), stride=s, padding="reflect")


def apply_R(z: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    r = spec.response(z.shape[-1]).astype(z.dtype)
    return z @ r[:, None]


def apply_R_adjoint(y: np.ndarray, spec: DegradationSpec, bands: int | None = None) -> np.ndarray:
    if y.shape[-1] != 1:
        raise ShapeError(f"apply_R_adjoint expects one channel, got {y.shape[-1]}")
    if bands is None:
        if spec.spectral_response is None:
            raise ContractError("band count needed when the spectral response is uniform/unset")
        bands = spec.spectral_response.size
    r = spec.response(bands).astype(y.dtype)
    return y * r


def synth_wald(gt: np.ndarray, spec: DegradationSpec) -> SceneTriple:
    """Reduced-resolution (LrMS, PAN) pair for a ground-truth image in [0, 1]."""
    if gt.min() < 0 or gt.max() > 1:
        raise ContractError(f"ground truth must lie in [0, 1], got [{gt.min()}, {gt.max()}]")
    rng = np.random.default_rng(spec.seed)
    lrms = apply_S(gt, spec)
    pan = apply_R(gt, spec)
    if spec.noise_sigma_x > 0:
        lrms = lrms + spec.noise_sigma_x * rng.standard_normal(lrms.shape).astype(gt.dtype)
    if spec.noise_sigma_y > 0:
        pan = pan + spec.noise_sigma_y * rng.standard_normal(pan.shape).astype(gt.dtype)
    return SceneTriple(gt, np.clip(lrms, 0.0, 1.0), np.clip(pan, 0.0, 1.0))


def synthetic_scene(size: int, bands: int, seed: int, dtype=np.float32) -> np.ndarray:
    """Procedural multi-band scene in [0, 1]: gradients, soft blobs and rectangles.

    Bands share the same spatial layout with band-specific reflectances so the
    channels are correlated the way real multispectral bands are.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = np.zeros((size, size, bands))

    base = rng.uniform(0.2, 0.5, bands)
    tilt = rng.uniform(-0.15, 0.15, (2, bands))
    img += base + yy[..., None] * tilt[0] + xx[..., None] * tilt[1]

    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, 1, 2)
        rad = rng.uniform(0.05, 0.25)
        amp = rng.uniform(-0.25, 0.35) * rng.uniform(0.5, 1.0, bands)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rad**2))
        img += blob[..., None] * amp

    for _ in range(rng.integers(2, 5)):
        y0, x0 = rng.integers(0, size - 2, 2)
        hgt, wid = rng.integers(2, max(3, size // 3), 2)
        amp = rng.uniform(-0.2, 0.25) * rng.uniform(0.5, 1.0, bands)
        img[y0:y0 + hgt, x0:x0 + wid] += amp

    lo, hi = img.min(), img.max()
    img = 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-12)
    return img.astype(dtype)


def write_scene_set(out_dir, count: int, size: int, bands: int, seed: int,
                    spec: DegradationSpec | None = None, dtype=np.float32) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = []
    seeds = np.random.SeedSequence(seed).spawn(count)
    for i, ss in enumerate(seeds):
        scene_seed, noise_seed = ss.generate_state(2)
        gt = synthetic_scene(size, bands, int(scene_seed), dtype)
        base = spec or DegradationSpec()
        sp = DegradationSpec(base.blur_kernel, base.scale, base.spectral_response,
                             base.noise_sigma_x, base.noise_sigma_y, int(noise_seed))
        triple = synth_wald(gt, sp)
        stem = out_dir / f"scene{i:03d}"
        triple.save(stem)
        stems.append(stem)
    return stems
