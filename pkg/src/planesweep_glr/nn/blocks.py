"""Composite layers built from :mod:`planesweep_glr.nn.ops`.

Layers read their weights from a flat ``name -> tensor`` mapping and record
their backward step on a :class:`Tape`. The tape is strictly sequential: each
step maps the gradient of its output to the gradient of its input and adds
parameter gradients into a shared store.
"""

from collections.abc import Callable, Mapping
from typing import cast

import numpy as np

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.models import UpsampleMode
from planesweep_glr.nn import ops
from planesweep_glr.nn.tensor import Params, Tensor

BackwardStep = Callable[[Tensor, Params], Tensor]


class Tape:
    """Ordered record of backward steps for one forward pass."""

    def __init__(self) -> None:
        self._steps: list[BackwardStep] = []

    def __len__(self) -> int:
        return len(self._steps)

    def record(self, step: BackwardStep) -> None:
        self._steps.append(step)

    def extend(self, other: "Tape") -> None:
        self._steps.extend(other._steps)

    def backward(self, dy: Tensor, grads: Params | None = None) -> tuple[Tensor, Params]:
        """Run the recorded steps in reverse.

        Returns:
            Gradient with respect to the first recorded input and the
            accumulated parameter gradients.
        """
        grads = {} if grads is None else grads
        for step in reversed(self._steps):
            dy = step(dy, grads)
        return dy, grads


def _accumulate(grads: Params, name: str, value: Tensor) -> None:
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


def conv_layer(
    x: Tensor,
    params: Mapping[str, Tensor],
    prefix: str,
    tape: Tape | None,
    stride: int = 1,
    groups: int = 1,
) -> Tensor:
    """Convolution reading ``{prefix}.weight`` and ``{prefix}.bias``."""
    y, cache = ops.conv2d_forward(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], stride, groups)
    if tape is not None:

        def backward(dy: Tensor, grads: Params) -> Tensor:
            dx, dw, db = ops.conv2d_backward(dy, cache)
            _accumulate(grads, f"{prefix}.weight", dw)
            _accumulate(grads, f"{prefix}.bias", db)
            return dx

        tape.record(backward)
    return y


def resblock(
    x: Tensor,
    params: Mapping[str, Tensor],
    prefix: str,
    tape: Tape | None,
    groups: int = 1,
) -> Tensor:
    """Residual block ``y = skip(x) + conv(relu(conv(x)))``.

    Both body convolutions are 3x3. The skip is the identity when channel
    counts match, otherwise a 1x1 projection ``{prefix}.skip``. All three
    convolutions share ``groups``.
    """
    cout = params[f"{prefix}.conv1.weight"].shape[0]
    project = f"{prefix}.skip.weight" in params
    if not project and x.shape[1] != cout:
        raise ShapeMismatchError(
            f"{prefix}: {x.shape[1]} -> {cout} channels needs a skip projection"
        )

    body_tape = Tape() if tape is not None else None
    h = conv_layer(x, params, f"{prefix}.conv1", body_tape, groups=groups)
    h, mask = ops.relu_forward(h)
    if body_tape is not None:
        body_tape.record(lambda dy, grads: ops.relu_backward(dy, mask))
    h = conv_layer(h, params, f"{prefix}.conv2", body_tape, groups=groups)

    skip_tape = Tape() if tape is not None and project else None
    skip = conv_layer(x, params, f"{prefix}.skip", skip_tape, groups=groups) if project else x

    if tape is not None:
        body = cast(Tape, body_tape)

        def backward(dy: Tensor, grads: Params) -> Tensor:
            dx_body, _ = body.backward(dy, grads)
            dx_skip = skip_tape.backward(dy, grads)[0] if skip_tape is not None else dy
            return dx_body + dx_skip

        tape.record(backward)
    return skip + h


def resblock_shapes(cin: int, cout: int, prefix: str, groups: int = 1) -> dict[str, tuple[int, ...]]:
    """Parameter shapes of :func:`resblock` for ``cin -> cout`` channels."""
    shapes: dict[str, tuple[int, ...]] = {
        f"{prefix}.conv1.weight": (cout, cin // groups, 3, 3),
        f"{prefix}.conv1.bias": (cout,),
        f"{prefix}.conv2.weight": (cout, cout // groups, 3, 3),
        f"{prefix}.conv2.bias": (cout,),
    }
    if cin != cout:
        shapes[f"{prefix}.skip.weight"] = (cout, cin // groups, 1, 1)
        shapes[f"{prefix}.skip.bias"] = (cout,)
    return shapes


def upsample_layer(x: Tensor, mode: UpsampleMode, tape: Tape | None) -> Tensor:
    """2x spatial upsampling recorded on the tape."""
    y = ops.upsample2x(x, mode)
    if tape is not None:
        tape.record(lambda dy, grads: ops.upsample2x_backward(dy, mode))
    return y


def reshape_layer(x: Tensor, shape: tuple[int, ...], tape: Tape | None) -> Tensor:
    """Pure view change recorded on the tape."""
    original = x.shape
    y = np.reshape(x, shape)
    if tape is not None:
        tape.record(lambda dy, grads: np.reshape(dy, original))
    return y
