"""Dense tensor primitives and reverse-mode differentiation."""
from lgteun.tensor.autodiff import Graph, Var, backward, value
from lgteun.tensor.io import load_tensor, save_tensor
from lgteun.tensor.ops import (
    conv_depthwise,
    conv_pointwise,
    count_flops,
    gelu,
    layer_norm,
    resample_bicubic,
    softmax_lastdim,
)

__all__ = [
    "Graph", "Var", "backward", "value", "load_tensor", "save_tensor",
    "conv_depthwise", "conv_pointwise", "count_flops", "gelu", "layer_norm",
    "resample_bicubic", "softmax_lastdim",
]
