"""Unfolded pan-sharpening with a local-global transformer prior."""
from lgteun.degradation import DegradationSpec, SceneTriple, synth_wald
from lgteun.errors import LgteunError
from lgteun.lgt import LgtConfig
from lgteun.pgd import PgdConfig, pgd_solve
from lgteun.unfold import UnfoldConfig, init_model, lgteun_forward, load_checkpoint, predict, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "DegradationSpec", "SceneTriple", "synth_wald", "LgteunError", "LgtConfig", "PgdConfig",
    "pgd_solve", "UnfoldConfig", "init_model", "lgteun_forward", "load_checkpoint", "predict",
    "save_checkpoint",
]
