"""Finite-difference verification of analytic gradients."""

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from planesweep_glr.nn.tensor import Params, Tensor

MIN_COORDINATES = 200


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of a finite-difference check."""

    max_rel_error: float
    worst: tuple[str, int] | None
    checked: int
    skipped: int


def _central_difference(
    f: Callable[[Params], float], work: Params, name: str, index: int, h: float
) -> float:
    flat = work[name].reshape(-1)
    original = flat[index].copy()
    flat[index] = original + h
    plus = f(work)
    flat[index] = original - h
    minus = f(work)
    flat[index] = original
    if not (math.isfinite(plus) and math.isfinite(minus)):
        raise FloatingPointError(f"non-finite objective while perturbing {name}[{index}]")
    return (plus - minus) / (2.0 * h)


def finite_diff_report(
    f: Callable[[Params], float],
    params: Mapping[str, Tensor],
    analytic: Mapping[str, Tensor],
    h: float = 1e-6,
    num_coords: int = 256,
    seed: int = 0,
    floor: float = 1e-3,
    kink_rtol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients with central differences on random coordinates.

    The relative error of a coordinate is ``|a - n| / max(|a|, |n|, floor * G)``
    where ``G`` is the largest analytic magnitude among sampled coordinates.
    A coordinate whose central difference changes between steps ``h`` and
    ``h / 2`` straddles a ReLU kink and is skipped.

    Raises:
        FloatingPointError: If the objective is not finite.
    """
    work = {name: np.array(value, copy=True) for name, value in params.items()}
    if not math.isfinite(f(work)):
        raise FloatingPointError("objective is not finite at the base point")

    names = sorted(work)
    sizes = np.array([work[name].size for name in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=min(max(num_coords, MIN_COORDINATES), total), replace=False))

    coords = []
    for flat_index in picks:
        slot = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        coords.append((names[slot], int(flat_index - offsets[slot])))

    scale = max(
        (abs(float(np.asarray(analytic[name]).reshape(-1)[i])) for name, i in coords),
        default=0.0,
    )
    denom_floor = max(floor * scale, np.finfo(np.float64).tiny)

    worst_error, worst = 0.0, None
    checked = skipped = 0
    for name, index in coords:
        numeric = _central_difference(f, work, name, index, h)
        numeric_half = _central_difference(f, work, name, index, h / 2)
        if abs(numeric - numeric_half) > kink_rtol * max(abs(numeric), abs(numeric_half), denom_floor):
            skipped += 1
            continue
        value = float(np.asarray(analytic[name]).reshape(-1)[index])
        error = abs(value - numeric) / max(abs(value), abs(numeric), denom_floor)
        checked += 1
        if error > worst_error:
            worst_error, worst = error, (name, index)
    return GradCheckReport(worst_error, worst, checked, skipped)


def finite_diff_check(
    f: Callable[[Params], float],
    params: Mapping[str, Tensor],
    analytic: Mapping[str, Tensor],
    h: float = 1e-6,
    num_coords: int = 256,
    seed: int = 0,
) -> float:
    """Maximum relative error between analytic and central-difference gradients."""
    return finite_diff_report(f, params, analytic, h=h, num_coords=num_coords, seed=seed).max_rel_error
