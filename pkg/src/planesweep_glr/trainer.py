"""Training and evaluation loops."""

import json
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path
from typing import NamedTuple

import numpy as np

from planesweep_glr import network
from planesweep_glr.camera import Camera, DepthPlanes, normalize_to_target, sample_depths
from planesweep_glr.exceptions import BoundsError, ConfigError, ShapeMismatchError, TrainingDivergedError
from planesweep_glr.losses import loss_for_step
from planesweep_glr.metrics import psnr, ssim
from planesweep_glr.models import EvalEntry, EvalReport, ModelConfig, TrainConfig, TrainLog, TrainLogEntry, ViewMetrics
from planesweep_glr.nn.blocks import Tape
from planesweep_glr.nn.optim import AdamState, adam_step, clip_global_norm
from planesweep_glr.nn.tensor import TRAIN_DTYPE, Params, Tensor
from planesweep_glr.psv import ImageBuffer, Rect, build_psv
from planesweep_glr.scenes import SceneData
from planesweep_glr.storage import Checkpoint, load_checkpoint, load_scene, save_checkpoint

logger = logging.getLogger(__name__)

LOG_FILE = "train_log.csv"
FINAL_CHECKPOINT = "final.ckpt"
DIVERGENCE_FILE = "divergence.json"


def lr_schedule(step: int, total: int, base: float, final_drop: bool = False) -> float:
    """Piecewise-constant learning rate.

    ``base`` until 80% of ``total``, then ``base / 10``; with ``final_drop``
    the last 5% use ``base / 100``.
    """
    if not 0 <= step < total:
        raise ValueError(f"step {step} outside [0, {total})")
    if 100 * step < 80 * total:
        return base
    if final_drop and 100 * step >= 95 * total:
        return base / 100
    return base / 10


def sample_patch(rng: np.random.Generator, full: tuple[int, int], patch: int) -> Rect:
    """Uniformly random ``patch x patch`` rectangle inside a (H, W) image.

    Raises:
        BoundsError: If the patch does not fit.
        ValueError: If ``patch`` is not divisible by 4.
    """
    height, width = full
    if patch % 4:
        raise ValueError(f"patch={patch} must be divisible by 4")
    if patch < 4 or patch > min(height, width):
        raise BoundsError(f"patch {patch} does not fit a {height}x{width} image")
    y0 = int(rng.integers(0, height - patch + 1))
    x0 = int(rng.integers(0, width - patch + 1))
    return Rect(x0, y0, patch, patch)


def split_patch(rect: Rect, slices: int) -> list[Rect]:
    """Cut a square patch into ``slices x slices`` equal sub-patches, row-major."""
    if slices == 1:
        return [rect]
    size = rect.width // slices
    return [
        Rect(rect.x0 + j * size, rect.y0 + i * size, size, size)
        for i in range(slices)
        for j in range(slices)
    ]


def scene_planes(cfg: TrainConfig, scene: SceneData) -> DepthPlanes:
    """Depth planes from the config bounds, falling back to the scene bounds."""
    near = cfg.near if cfg.near is not None else scene.near
    far = cfg.far if cfg.far is not None else scene.far
    return sample_depths(near, far, cfg.num_depths, cfg.sampling)


def target_psv_inputs(
    scene: SceneData, input_ids: Sequence[int], target: Camera
) -> tuple[list[ImageBuffer], list[Camera], Camera]:
    """Input images and cameras normalized to ``target``."""
    missing = [v for v in input_ids if v not in scene.cameras]
    if missing:
        raise ConfigError(f"input views {missing} are not in the scene (have {scene.view_ids})")
    views, canonical = normalize_to_target([scene.cameras[v] for v in input_ids], target)
    return [scene.images[v] for v in input_ids], views, canonical


def render_view(
    weights: Mapping[str, Tensor],
    model: ModelConfig,
    scene: SceneData,
    input_ids: Sequence[int],
    target: Camera,
    depths: DepthPlanes,
    tile: int | None = None,
) -> ImageBuffer:
    """Render a full target frame, tiling it into 4-aligned patches.

    Tiles do not overlap except for the last tile along an axis, which is
    shifted to end at the image border. Positional channels use global
    pixel coordinates, so every tile sees its true image position.
    """
    images, views, canonical = target_psv_inputs(scene, input_ids, target)
    height, width = canonical.height, canonical.width
    if height < 4 or width < 4:
        raise ShapeMismatchError(f"cannot render a {width}x{height} frame in 4-aligned tiles")
    tile_h = min(tile or height, height - height % 4)
    tile_w = min(tile or width, width - width % 4)
    if tile_h % 4 or tile_w % 4:
        raise ShapeMismatchError(f"tile size {tile} must be divisible by 4")

    def starts(length: int, size: int) -> list[int]:
        offsets = list(range(0, length - size + 1, size))
        if offsets[-1] + size < length:
            offsets.append(length - size)
        return offsets

    out = np.zeros((3, height, width), dtype=next(iter(weights.values())).dtype)
    for y0 in starts(height, tile_h):
        for x0 in starts(width, tile_w):
            rect = Rect(x0, y0, tile_w, tile_h)
            psv = build_psv(images, views, canonical, depths, rect, with_angular=model.with_angular)
            out[:, y0 : y0 + tile_h, x0 : x0 + tile_w] = network.forward(psv, model, weights, clamp=True)
    return out


def report_from_images(
    predictions: Mapping[int, ImageBuffer], targets: Mapping[int, ImageBuffer], scene: str = ""
) -> EvalReport:
    """Per-view PSNR/SSIM rows for already rendered targets."""
    rows = [
        ViewMetrics(view_id=view_id, psnr=psnr(predictions[view_id], targets[view_id]), ssim=ssim(predictions[view_id], targets[view_id]))
        for view_id in sorted(predictions)
    ]
    return EvalReport(scene=scene, rows=rows)


def evaluate(
    weights: Mapping[str, Tensor],
    cfg: TrainConfig,
    scene: SceneData,
    target_ids: Sequence[int],
    tile: int | None = None,
    scene_name: str = "",
) -> EvalReport:
    """Render each target full-frame and report PSNR/SSIM per view and on average.

    Raises:
        ConfigError: If a target is also an input view or is not in the scene.
    """
    leaked = sorted(set(target_ids) & set(cfg.input_views))
    if leaked:
        raise ConfigError(f"targets {leaked} are also input views")
    unknown = sorted(set(target_ids) - set(scene.cameras))
    if unknown:
        raise ConfigError(f"targets {unknown} are not in the scene (have {scene.view_ids})")
    model = cfg.to_model_config()
    network.check_weights(model, weights)
    depths = scene_planes(cfg, scene)
    predictions = {
        view_id: render_view(weights, model, scene, cfg.input_views, scene.cameras[view_id], depths, tile)
        for view_id in target_ids
    }
    report = report_from_images(predictions, {v: scene.images[v] for v in target_ids}, scene_name)
    logger.info("evaluated %d views: mean PSNR %.2f dB, SSIM %.4f", len(report.rows), report.mean_psnr, report.mean_ssim)
    return report


class TrainResult(NamedTuple):
    weights: Params
    log: TrainLog


class Trainer:
    """Optimizes renderer weights on patches of one or more scenes.

    Each step draws ``batch`` (scene, target, patch) samples from a
    generator seeded with ``(seed, step)``, so a resumed run continues
    exactly where the original would have been.
    """

    def __init__(
        self,
        config: TrainConfig,
        scenes: Sequence[SceneData] | None = None,
        on_step: Callable[[TrainLogEntry], None] | None = None,
    ) -> None:
        """Initialize the trainer.

        Args:
            config: Training configuration.
            scenes: Preloaded scenes; loaded from ``config.scene_dirs`` if omitted.
            on_step: Called after every optimizer step.
        """
        if not config.input_views or not config.target_views:
            raise ConfigError("input_views and target_views must both be non-empty")
        self.config = config
        self.model = config.to_model_config()
        self.scenes = list(scenes) if scenes is not None else [load_scene(d) for d in config.scene_dirs]
        if not self.scenes:
            raise ConfigError("no scenes configured (set scene_dir)")
        for index, scene in enumerate(self.scenes):
            absent = sorted(set(config.input_views + config.target_views) - set(scene.cameras))
            if absent:
                raise ConfigError(f"scene {index} lacks views {absent}")
        self.on_step = on_step
        self.weights = network.init_weights(self.model, config.seed, TRAIN_DTYPE)
        self.adam = AdamState.fresh(self.weights)
        self.step = 0
        self.log = TrainLog()
        self.out_dir = Path(config.out_dir)

    def resume(self, path: str | Path) -> None:
        """Continue from a checkpoint written by :meth:`save`.

        Raises:
            ConfigError: If the checkpoint was trained with another architecture.
        """
        checkpoint = load_checkpoint(path)
        if checkpoint.model != self.model:
            raise ConfigError(f"checkpoint model {checkpoint.model} does not match config {self.model}")
        network.check_weights(self.model, checkpoint.weights)
        self.weights = checkpoint.weights
        self.adam = checkpoint.adam or AdamState.fresh(self.weights)
        self.step = checkpoint.step
        logger.info("resumed from %s at step %d", path, self.step)

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, Checkpoint(self.model, self.weights, self.step, self.adam))

    def _sample_pieces(self, rng: np.random.Generator) -> list[tuple[SceneData, Camera, Rect, int]]:
        pieces = []
        for _ in range(self.config.batch):
            scene = self.scenes[int(rng.integers(len(self.scenes)))]
            target_id = self.config.target_views[int(rng.integers(len(self.config.target_views)))]
            target = scene.cameras[target_id]
            rect = sample_patch(rng, target.size, self.config.patch)
            pieces.extend((scene, target, sub, target_id) for sub in split_patch(rect, self.config.slices))
        return pieces

    def loss_and_gradients(self, step: int) -> tuple[float, Params]:
        """Mean loss and gradient over the sampled pieces of ``step``."""
        rng = np.random.default_rng([self.config.seed, step])
        loss_fn = loss_for_step(step, self.config.steps, self.config.loss)
        pieces = self._sample_pieces(rng)
        total_loss = 0.0
        grads: Params = {}
        for scene, target, rect, target_id in pieces:
            images, views, canonical = target_psv_inputs(scene, self.config.input_views, target)
            depths = scene_planes(self.config, scene)
            psv = build_psv(images, views, canonical, depths, rect, with_angular=self.model.with_angular)
            tape = Tape()
            pred = network.forward(psv, self.model, self.weights, tape)
            gt = rect.crop(np.asarray(scene.images[target_id], dtype=pred.dtype))
            value, dpred = loss_fn(pred, gt)
            total_loss += value
            tape.backward(dpred, grads)
        scale = 1.0 / len(pieces)
        averaged = {name: (grads[name] * scale).astype(self.weights[name].dtype, copy=False) for name in self.weights}
        return total_loss * scale, averaged

    def train_step(self) -> TrainLogEntry:
        """Run one optimizer step and append it to the log."""
        cfg = self.config
        step = self.step
        lr = lr_schedule(step, cfg.steps, cfg.lr, cfg.final_drop)
        loss, grads = self.loss_and_gradients(step)
        clipped, norm = clip_global_norm(grads, cfg.clip_norm)
        if not (math.isfinite(loss) and math.isfinite(norm)):
            self._dump_divergence(step, lr, norm, loss)
            raise TrainingDivergedError(step, lr, norm, loss)
        self.weights, self.adam = adam_step(self.weights, clipped, self.adam, lr)
        self.step = step + 1
        entry = TrainLogEntry(step=step, loss=loss, lr=lr, grad_norm=norm)
        self.log.append(entry)
        return entry

    def _dump_divergence(self, step: int, lr: float, norm: float, loss: float) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump = {"step": step, "lr": lr, "grad_norm": repr(norm), "loss": repr(loss)}
        (self.out_dir / DIVERGENCE_FILE).write_text(json.dumps(dump, indent=2) + "\n", encoding="utf-8")
        logger.error("training diverged at step %d (lr=%g, grad_norm=%s, loss=%s)", step, lr, norm, loss)

    def _evaluate_targets(self) -> EvalEntry:
        scene = self.scenes[0]
        depths = scene_planes(self.config, scene)
        predictions = {
            v: render_view(self.weights, self.model, scene, self.config.input_views, scene.cameras[v], depths)
            for v in self.config.target_views
        }
        report = report_from_images(predictions, {v: scene.images[v] for v in self.config.target_views})
        return EvalEntry(step=self.step, psnr=report.mean_psnr, ssim=report.mean_ssim)

    def run(self) -> TrainResult:
        """Train until ``config.steps``; writes checkpoints and the CSV log."""
        cfg = self.config
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.step >= cfg.steps:
            logger.info("nothing to do: checkpoint is at step %d of %d", self.step, cfg.steps)
        while self.step < cfg.steps:
            entry = self.train_step()
            if self.step % cfg.log_every == 0 or self.step == cfg.steps:
                logger.info(
                    "step %d/%d loss %.6f lr %.2e grad_norm %.4f",
                    self.step, cfg.steps, entry.loss, entry.lr, entry.grad_norm,
                )
            if cfg.ckpt_every and self.step % cfg.ckpt_every == 0:
                self.save(self.out_dir / f"checkpoint_{self.step:06d}.ckpt")
            if cfg.eval_every and self.step % cfg.eval_every == 0:
                evaluation = self._evaluate_targets()
                self.log.append_eval(evaluation)
                logger.info("step %d target PSNR %.2f dB SSIM %.4f", self.step, evaluation.psnr, evaluation.ssim)
            if self.on_step is not None:
                self.on_step(entry)
        self.save(self.out_dir / FINAL_CHECKPOINT)
        (self.out_dir / LOG_FILE).write_text(self.log.to_csv(), encoding="utf-8")
        return TrainResult(self.weights, self.log)


def train(
    cfg: TrainConfig,
    resume: str | Path | None = None,
    scenes: Sequence[SceneData] | None = None,
    on_step: Callable[[TrainLogEntry], None] | None = None,
) -> TrainResult:
    """Train a renderer as configured; see :class:`Trainer`."""
    trainer = Trainer(cfg, scenes=scenes, on_step=on_step)
    if resume is not None:
        trainer.resume(resume)
    return trainer.run()
