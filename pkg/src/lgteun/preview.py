"""8-bit PNG previews with per-band min-max scaling (diagnostic only)."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_preview(path, arr: np.ndarray) -> Path:
    """Bands side by side as one grayscale strip; scaling goes to ``<path>.txt``."""
    path = Path(path)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    panels, lines = [], []
    for b in range(arr.shape[-1]):
        band = arr[..., b]
        lo, hi = float(band.min()), float(band.max())
        span = hi - lo if hi > lo else 1.0
        panels.append(np.round(255.0 * (band - lo) / span).astype(np.uint8))
        lines.append(f"band {b}: min={lo:.9g} max={hi:.9g}")
    Image.fromarray(np.concatenate(panels, axis=1)).save(path)
    path.with_suffix(path.suffix + ".txt").write_text("\n".join(lines) + "\n")
    return path
