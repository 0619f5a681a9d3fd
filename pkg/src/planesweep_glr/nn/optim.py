"""Adam optimizer and global-norm gradient clipping (pure functions)."""

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.nn.tensor import Params, Tensor, zeros_like_params


@dataclass
class AdamState:
    """First/second moment estimates and the number of steps taken."""

    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    step: int = 0

    @classmethod
    def fresh(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls(m=zeros_like_params(params), v=zeros_like_params(params), step=0)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update.

    Inputs are not modified; parameters without a gradient are treated as
    having a zero gradient.

    Returns:
        Updated parameters and optimizer state.
    """
    step = state.step + 1
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        if not (grad.shape == value.shape == m.shape == v.shape):
            raise ShapeMismatchError(
                f"{name}: param {value.shape}, grad {grad.shape}, moments {m.shape}/{v.shape}"
            )
        dtype = value.dtype
        m = (beta1 * m + (1.0 - beta1) * grad).astype(dtype, copy=False)
        v = (beta2 * v + (1.0 - beta2) * grad * grad).astype(dtype, copy=False)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        new_params[name] = (value - update).astype(dtype, copy=False)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=step)


def global_norm(grads: Mapping[str, Tensor]) -> float:
    """L2 norm of all gradients taken together, accumulated in float64."""
    total = 0.0
    for name in sorted(grads):
        g = np.asarray(grads[name], dtype=np.float64)
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_global_norm(grads: Mapping[str, Tensor], max_norm: float) -> tuple[Params, float]:
    """Scale gradients so their global norm does not exceed ``max_norm``.

    Returns:
        The (possibly rescaled) gradients and the norm before clipping.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {name: (g * scale).astype(g.dtype, copy=False) for name, g in grads.items()}, norm
