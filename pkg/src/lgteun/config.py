"""``key = value`` run configuration with a closed schema."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from lgteun.errors import ContractError


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _precision(text: str) -> str:
    if text not in ("single", "double"):
        raise ValueError(f"precision must be 'single' or 'double', got {text!r}")
    return text


SCHEMA = {
    # shared
    "seed": int, "out": str, "precision": _precision, "threads": int,
    # data synthesis / degradation
    "count": int, "size": int, "bands": int, "blur_size": int, "blur_sigma": float,
    "noise_sigma_x": float, "noise_sigma_y": float, "png": _bool,
    # model
    "stages": int, "channels": int, "window": int, "heads": int,
    # training
    "data": str, "epochs": int, "batch": int, "lr0": float, "decay": float, "decay_every": int,
    "beta1": float, "beta2": float, "adam_eps": float, "ckpt_every": int,
    # inference / evaluation
    "ckpt": str, "lrms": str, "pan": str, "gt": str,
    # classical solver
    "prox": str, "lam": float, "iters": int, "eta": float, "tol": float,
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: str = "<flags>"

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v


def parse_config_text(text: str, source: str = "<string>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SCHEMA:
            raise ContractError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = SCHEMA[key](val)
        except ValueError as exc:
            raise ContractError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def load_run_config(path, overrides: dict) -> RunConfig:
    """File values (if any) with non-``None`` flag overrides on top."""
    values = {}
    source = "<flags>"
    if path:
        values = parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))
        source = f"{path} + flags"
    for k, v in overrides.items():
        if v is None:
            continue
        if k not in SCHEMA:
            raise ContractError(f"unknown option {k!r}")
        values[k] = v
    return RunConfig(values, source)
