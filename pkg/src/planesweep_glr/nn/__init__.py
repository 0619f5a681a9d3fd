"""Minimal deterministic tensor engine used by the renderer."""

from planesweep_glr.nn.blocks import Tape, resblock
from planesweep_glr.nn.gradcheck import finite_diff_check, finite_diff_report
from planesweep_glr.nn.ops import conv2d, conv2d_backward, conv2d_forward, upsample2x
from planesweep_glr.nn.optim import AdamState, adam_step, clip_global_norm, global_norm
from planesweep_glr.nn.tensor import Params, Tensor

__all__ = [
    "AdamState",
    "Params",
    "Tape",
    "Tensor",
    "adam_step",
    "clip_global_norm",
    "conv2d",
    "conv2d_backward",
    "conv2d_forward",
    "finite_diff_check",
    "finite_diff_report",
    "global_norm",
    "resblock",
    "upsample2x",
]
