"""Convolutional global latent renderer.

Four stages map a plane sweep volume to an image:

1. grouped PSV          (D, V, Cin, H, W) -> (D_G, Cin*G*V [+2], H, W)
2. multi-view matching  -> Y (D_G, 4C, H/4, W/4), depths ride the batch axis
3. global rendering     -> Z (1, 4C, H/4, W/4), log2(D_G) pairwise collapses
4. upsampling head      -> image (3, H, W)

Weights live in a flat ``name -> array`` mapping whose shapes are fully
determined by :class:`~planesweep_glr.models.ModelConfig`.
"""

import logging
from collections.abc import Mapping

import numpy as np
import numpy.typing as npt

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.models import ModelConfig, UpsampleMode, Variant
from planesweep_glr.nn.blocks import Tape, conv_layer, reshape_layer, resblock, resblock_shapes, upsample_layer
from planesweep_glr.nn.tensor import TRAIN_DTYPE, Params, Tensor
from planesweep_glr.psv import PlaneSweepVolume, append_positional_channels, group_depths

logger = logging.getLogger(__name__)

MATCHING_BLOCKS = (2, 3, 4)
UPSAMPLING_BLOCKS = (3, 2)


def _conv_shapes(prefix: str, cout: int, cin: int, k: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.weight": (cout, cin, k, k), f"{prefix}.bias": (cout,)}


def stage_pairs(cfg: ModelConfig, stage: int) -> int:
    """Depth pairs processed by rendering stage ``stage`` (= depths it outputs)."""
    return cfg.num_groups >> (stage + 1)


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter names and shapes for ``cfg``."""
    c = cfg.channels
    shapes: dict[str, tuple[int, ...]] = {}
    shapes.update(_conv_shapes("match.conv_in", c, cfg.input_channels, 3))
    width = c
    for level, count in enumerate(MATCHING_BLOCKS):
        if level > 0:
            shapes.update(_conv_shapes(f"match.down{level}", 2 * width, width, 3))
            width *= 2
        for i in range(count):
            shapes.update(resblock_shapes(width, width, f"match.level{level}.block{i}"))

    for stage in range(cfg.render_stages):
        groups = stage_pairs(cfg, stage) if cfg.variant is Variant.SPECIALIZED else 1
        shapes.update(resblock_shapes(groups * 8 * c, groups * 4 * c, f"render.stage{stage}", groups))

    width = 4 * c
    for level, count in enumerate(UPSAMPLING_BLOCKS):
        for i in range(count):
            cin = width if i == 0 else width // 2
            shapes.update(resblock_shapes(cin, width // 2, f"up.level{level}.block{i}"))
        width //= 2
    shapes.update(_conv_shapes("head.conv_out", 3, c, 1))
    return shapes


def init_weights(cfg: ModelConfig, seed: int, dtype: npt.DTypeLike = TRAIN_DTYPE) -> Params:
    """Seeded uniform initialization in +-sqrt(1/fan_in).

    Values are drawn in float64 and cast, so a float32 and a float64 model
    from the same seed agree to float32 rounding.
    """
    rng = np.random.default_rng(seed)
    weights: Params = {}
    bound = 0.0
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = float(np.sqrt(1.0 / fan_in))
        weights[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    logger.debug("initialized %d parameters (%s variant)", parameter_count(weights), cfg.variant.value)
    return weights


def parameter_count(weights: Mapping[str, Tensor]) -> int:
    """Total number of scalar parameters."""
    return int(sum(value.size for value in weights.values()))


def parameter_breakdown(weights: Mapping[str, Tensor]) -> dict[str, int]:
    """Parameter counts per stage (matching, rendering, upsampling, head)."""
    stages = {"match": "matching", "render": "rendering", "up": "upsampling", "head": "head"}
    counts = dict.fromkeys(stages.values(), 0)
    for name, value in weights.items():
        counts[stages[name.split(".", 1)[0]]] += int(value.size)
    return counts


def check_weights(cfg: ModelConfig, weights: Mapping[str, Tensor]) -> None:
    """Verify that ``weights`` match the shapes required by ``cfg``.

    Raises:
        ShapeMismatchError: On a missing, unexpected or misshaped parameter.
    """
    expected = parameter_shapes(cfg)
    missing = sorted(set(expected) - set(weights))
    extra = sorted(set(weights) - set(expected))
    if missing or extra:
        raise ShapeMismatchError(f"weights do not match config: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if weights[name].shape != shape:
            raise ShapeMismatchError(f"{name}: expected {shape}, got {weights[name].shape}")


def replicate_shared(shared: Mapping[str, Tensor], cfg: ModelConfig) -> Params:
    """Specialized-variant weights that reproduce a shared-variant model exactly."""
    specialized: Params = {}
    for name, value in shared.items():
        if name.startswith("render.stage"):
            stage = int(name.split(".")[1].removeprefix("stage"))
            reps = (stage_pairs(cfg, stage),) + (1,) * (value.ndim - 1)
            specialized[name] = np.tile(value, reps)
        else:
            specialized[name] = value.copy()
    return specialized


def multi_view_matching(x: Tensor, weights: Mapping[str, Tensor], tape: Tape | None = None) -> Tensor:
    """Aggregate views per depth group: (D_G, Cin_g, H, W) -> (D_G, 4C, H/4, W/4)."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"grouped PSV must be 4D, got shape {x.shape}")
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise ShapeMismatchError(f"spatial size {x.shape[2]}x{x.shape[3]} is not divisible by 4")
    h = conv_layer(x, weights, "match.conv_in", tape)
    for level, count in enumerate(MATCHING_BLOCKS):
        if level > 0:
            h = conv_layer(h, weights, f"match.down{level}", tape, stride=2)
        for i in range(count):
            h = resblock(h, weights, f"match.level{level}.block{i}", tape)
    return h


def global_latent_render(
    y: Tensor,
    weights: Mapping[str, Tensor],
    variant: Variant | str = Variant.SHARED,
    tape: Tape | None = None,
) -> Tensor:
    """Collapse the depth axis pairwise: (D_G, 4C, h, w) -> (1, 4C, h, w).

    Each stage concatenates adjacent depths along channels and applies one
    resblock 8C -> 4C. The shared variant batches the pairs through one set
    of weights; the specialized variant moves the pairs into channels and
    gives each its own weights through grouped convolutions.
    """
    variant = Variant(variant)
    depth, channels, height, width = y.shape
    if depth < 2 or depth & (depth - 1):
        raise ShapeMismatchError(f"D_G={depth} must be a power of two >= 2")
    stage = 0
    h = y
    while depth > 1:
        pairs = depth // 2
        prefix = f"render.stage{stage}"
        if variant is Variant.SHARED:
            h = reshape_layer(h, (pairs, 2 * channels, height, width), tape)
            h = resblock(h, weights, prefix, tape)
        else:
            h = reshape_layer(h, (1, pairs * 2 * channels, height, width), tape)
            h = resblock(h, weights, prefix, tape, groups=pairs)
            h = reshape_layer(h, (pairs, channels, height, width), tape)
        depth = pairs
        stage += 1
    return h


def upsample_head(
    z: Tensor,
    weights: Mapping[str, Tensor],
    mode: UpsampleMode | str = UpsampleMode.NEAREST,
    tape: Tape | None = None,
    clamp: bool = False,
) -> Tensor:
    """Upsample the latent view 4x into a (3, H, W) image.

    Training output is unclamped; ``clamp=True`` (evaluation) clips to [0, 1].
    """
    mode = UpsampleMode(mode)
    h = z
    for level, count in enumerate(UPSAMPLING_BLOCKS):
        h = upsample_layer(h, mode, tape)
        for i in range(count):
            h = resblock(h, weights, f"up.level{level}.block{i}", tape)
    h = conv_layer(h, weights, "head.conv_out", tape)
    image = reshape_layer(h, h.shape[1:], tape)
    if clamp:
        image = np.clip(image, 0.0, 1.0)
    return image


def render_grouped(
    x: Tensor,
    cfg: ModelConfig,
    weights: Mapping[str, Tensor],
    tape: Tape | None = None,
    clamp: bool = False,
) -> Tensor:
    """Run stages 2-4 on an already grouped input tensor."""
    y = multi_view_matching(x, weights, tape)
    z = global_latent_render(y, weights, cfg.variant, tape)
    return upsample_head(z, weights, cfg.upsample_mode, tape, clamp=clamp)


def grouped_input(psv: PlaneSweepVolume, cfg: ModelConfig, dtype: npt.DTypeLike) -> Tensor:
    """Group a PSV and append conditioning channels as configured.

    Raises:
        ShapeMismatchError: Naming the first PSV dimension that disagrees with ``cfg``.
    """
    checks = (
        ("D (depth planes)", psv.num_depths, cfg.num_depths),
        ("V (input views)", psv.num_views, cfg.num_views),
        ("Cin (channels per view)", psv.color_channels, cfg.color_channels),
    )
    for label, got, want in checks:
        if got != want:
            raise ShapeMismatchError(f"PSV {label} is {got} but the model expects {want}")
    if psv.patch.height % 4 or psv.patch.width % 4:
        raise ShapeMismatchError(
            f"PSV H x W = {psv.patch.height}x{psv.patch.width} must be divisible by 4"
        )
    grouped = group_depths(psv, cfg.group_size)
    if cfg.with_positional:
        grouped = append_positional_channels(grouped)
    return np.asarray(grouped.data, dtype=dtype)


def forward(
    psv: PlaneSweepVolume,
    cfg: ModelConfig,
    weights: Mapping[str, Tensor],
    tape: Tape | None = None,
    clamp: bool = False,
) -> Tensor:
    """Render the target patch described by ``psv``: returns (3, H, W)."""
    dtype = next(iter(weights.values())).dtype
    return render_grouped(grouped_input(psv, cfg, dtype), cfg, weights, tape, clamp=clamp)
