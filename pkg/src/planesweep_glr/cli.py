"""Command-line interface for planesweep-glr."""

import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from planesweep_glr import network
from planesweep_glr.camera import sample_depths
from planesweep_glr.config import load_config, write_starter_config
from planesweep_glr.exceptions import GLRError, MissingFileError
from planesweep_glr.models import EvalReport, SamplingMode, TrainConfig
from planesweep_glr.psv import Rect, build_psv, focus_curve, mean_psv, mean_psv_all
from planesweep_glr.scenes import SceneData, generate_scene, render_views
from planesweep_glr.selftest import run_selftest
from planesweep_glr.storage import (
    load_checkpoint,
    load_scene,
    read_manifest,
    save_scene,
    write_ppm,
    write_tensor,
)
from planesweep_glr.trainer import evaluate, render_view, target_psv_inputs, train

console = Console()
logger = logging.getLogger("planesweep_glr")


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)


def _id_list(ctx: click.Context, param: click.Parameter, value: str | None) -> list[int] | None:
    """Parse a comma separated list of view ids."""
    if value is None:
        return None
    try:
        ids = [int(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma separated integers, got {value!r}") from None
    if not ids:
        raise click.BadParameter("at least one view id is required")
    return ids


def _image_size(ctx: click.Context, param: click.Parameter, value: str) -> tuple[int, int]:
    """Parse ``WxH``."""
    width, sep, height = value.lower().partition("x")
    if not sep or not width.isdigit() or not height.isdigit() or int(width) < 1 or int(height) < 1:
        raise click.BadParameter(f"expected WxH with positive integers, got {value!r}")
    return int(width), int(height)


def _fail(action: str, error: Exception) -> NoReturn:
    if isinstance(error, MissingFileError):
        raise click.UsageError(str(error), ctx=click.get_current_context(silent=True)) from error
    console.print(f"[red]{action} failed:[/red] {error}")
    sys.exit(1)


def _default_inputs(scene: SceneData, exclude: Sequence[int], count: int | None = None) -> list[int]:
    inputs = [v for v in scene.view_ids if v not in exclude]
    return inputs[:count] if count is not None else inputs


def _eval_config(
    weights_path: str,
    scene: SceneData,
    targets: Sequence[int],
    inputs: list[int] | None,
    near: float | None,
    far: float | None,
    sampling: str,
) -> tuple[TrainConfig, dict[str, np.ndarray]]:
    checkpoint = load_checkpoint(weights_path)
    model = checkpoint.model
    chosen = inputs if inputs is not None else _default_inputs(scene, targets, model.num_views)
    cfg = TrainConfig(
        input_views=chosen,
        D=model.num_depths,
        G=model.group_size,
        C=model.channels,
        variant=model.variant,
        upsample=model.upsample_mode,
        pos_enc=model.with_positional,
        ang_enc=model.with_angular,
        near=near,
        far=far,
        sampling=SamplingMode(sampling),
    )
    if cfg.to_model_config() != model:
        raise GLRError(
            f"checkpoint expects {model.num_views} input views, got {len(chosen)} ({chosen})"
        )
    return cfg, checkpoint.weights


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.option("--quiet", "-q", is_flag=True, help="Only warnings and errors")
def main(verbose: bool, quiet: bool) -> None:
    """planesweep-glr - novel view synthesis with plane sweep volumes.

    Commands:

        glr scene generate        Write a procedural test scene

        glr build-psv             Build a plane sweep volume tensor

        glr train                 Train a renderer from a config file

        glr eval                  Report PSNR/SSIM on held-out views

        glr render                Render one target view to PPM

        glr diagnose focus        Write the mean-PSV focus stack

        glr selftest              Run the geometry and gradient suites

    Set GLR_DETERMINISTIC=1 for bit-reproducible runs.
    """
    _configure_logging(verbose, quiet)


@main.command(name="build-psv")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--target", required=True, type=int, help="Target view id")
@click.option("--depths", required=True, type=click.IntRange(min=2), help="Number of depth planes")
@click.option("--near", type=click.FloatRange(min=0, min_open=True), help="Near bound (default: bounds file)")
@click.option("--far", type=click.FloatRange(min=0, min_open=True), help="Far bound (default: bounds file)")
@click.option("--sampling", type=click.Choice([m.value for m in SamplingMode]), default="depth")
@click.option("--inputs", callback=_id_list, help="Input view ids (default: all views)")
@click.option("--angular", is_flag=True, help="Append the angular encoding channel")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output GLRT file")
def build_psv_cmd(
    scene_dir: str,
    target: int,
    depths: int,
    near: float | None,
    far: float | None,
    sampling: str,
    inputs: list[int] | None,
    angular: bool,
    out: str,
) -> None:
    """Build the plane sweep volume of a target view and write it as GLRT."""
    try:
        scene = load_scene(scene_dir)
        if target not in scene.cameras:
            raise GLRError(f"view {target} is not in the scene (have {scene.view_ids})")
        planes = sample_depths(near or scene.near, far or scene.far, depths, sampling)
        views = inputs if inputs is not None else scene.view_ids
        images, cameras, canonical = target_psv_inputs(scene, views, scene.cameras[target])
        rect = Rect.full(canonical.height, canonical.width)
        psv = build_psv(images, cameras, canonical, planes, rect, with_angular=angular)
        write_tensor(out, psv.data)
    except (GLRError, ValueError) as e:
        _fail("PSV build", e)
    console.print(f"[green]PSV written:[/green] {out} {tuple(psv.data.shape)}")


@main.command(name="train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Config file")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), help="Checkpoint to resume from")
def train_cmd(config_path: str | None, resume: str | None) -> None:
    """Train a renderer (key = value or YAML config)."""
    try:
        cfg = load_config(config_path)
        result = train(cfg, resume=resume)
    except (GLRError, ValueError) as e:
        _fail("Training", e)
    last = result.log.entries[-1] if result.log.entries else None
    summary = f"[bold]Output:[/bold] {cfg.out_dir}\n[bold]Steps run:[/bold] {len(result.log.entries)}"
    if last is not None:
        summary += f"\n[bold]Final loss:[/bold] {last.loss:.6f}"
    console.print(Panel(summary, title="TRAINING", border_style="cyan"))


def _output_report(report: EvalReport) -> None:
    table = Table(title=f"Evaluation {report.scene}".strip())
    table.add_column("view", justify="right")
    table.add_column("PSNR (dB)", justify="right")
    table.add_column("SSIM", justify="right")
    for row in report.rows:
        table.add_row(str(row.view_id), f"{row.psnr:.2f}", f"{row.ssim:.4f}")
    table.add_row("[bold]mean[/bold]", f"[bold]{report.mean_psnr:.2f}[/bold]", f"[bold]{report.mean_ssim:.4f}[/bold]")
    console.print(table)


@main.command(name="eval")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--targets", required=True, callback=_id_list, help="Comma separated target view ids")
@click.option("--inputs", callback=_id_list, help="Input view ids (default: first non-target views)")
@click.option("--near", type=click.FloatRange(min=0, min_open=True))
@click.option("--far", type=click.FloatRange(min=0, min_open=True))
@click.option("--sampling", type=click.Choice([m.value for m in SamplingMode]), default="depth")
@click.option("--tile", type=click.IntRange(min=4), help="Tile size for full-frame rendering")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), help="Write the JSON report here")
@click.option("--json", "output_json", is_flag=True, help="Output as JSON")
def eval_cmd(
    scene_dir: str,
    weights: str,
    targets: list[int],
    inputs: list[int] | None,
    near: float | None,
    far: float | None,
    sampling: str,
    tile: int | None,
    report_path: str | None,
    output_json: bool,
) -> None:
    """Evaluate a checkpoint on held-out target views."""
    try:
        scene = load_scene(scene_dir)
        cfg, params = _eval_config(weights, scene, targets, inputs, near, far, sampling)
        report = evaluate(params, cfg, scene, targets, tile=tile, scene_name=scene_dir)
    except (GLRError, ValueError) as e:
        _fail("Evaluation", e)
    if report_path:
        Path(report_path).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    if output_json:
        click.echo(report.model_dump_json(indent=2))
    else:
        _output_report(report)


@main.command(name="render")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, type=int)
@click.option("--inputs", callback=_id_list, help="Input view ids (default: first non-target views)")
@click.option("--near", type=click.FloatRange(min=0, min_open=True))
@click.option("--far", type=click.FloatRange(min=0, min_open=True))
@click.option("--sampling", type=click.Choice([m.value for m in SamplingMode]), default="depth")
@click.option("--tile", type=click.IntRange(min=4))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output PPM")
def render_cmd(
    scene_dir: str,
    weights: str,
    target: int,
    inputs: list[int] | None,
    near: float | None,
    far: float | None,
    sampling: str,
    tile: int | None,
    out: str,
) -> None:
    """Render one target view of a scene to a PPM image."""
    try:
        scene = load_scene(scene_dir)
        if target not in scene.cameras:
            raise GLRError(f"view {target} is not in the scene (have {scene.view_ids})")
        cfg, params = _eval_config(weights, scene, [target], inputs, near, far, sampling)
        model = cfg.to_model_config()
        network.check_weights(model, params)
        planes = sample_depths(near or scene.near, far or scene.far, model.num_depths, sampling)
        image = render_view(params, model, scene, cfg.input_views, scene.cameras[target], planes, tile)
        write_ppm(out, image)
    except (GLRError, ValueError) as e:
        _fail("Rendering", e)
    console.print(f"[green]Rendered view {target}:[/green] {out}")


@main.group()
def diagnose() -> None:
    """Diagnostic dumps."""


@diagnose.command(name="focus")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--target", required=True, type=int)
@click.option("--depths", type=click.IntRange(min=2), default=64, show_default=True)
@click.option("--inputs", callback=_id_list, help="Input view ids (default: all other views)")
@click.option("--near", type=click.FloatRange(min=0, min_open=True))
@click.option("--far", type=click.FloatRange(min=0, min_open=True))
@click.option("--sampling", type=click.Choice([m.value for m in SamplingMode]), default="depth")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
def focus_cmd(
    scene_dir: str,
    target: int,
    depths: int,
    inputs: list[int] | None,
    near: float | None,
    far: float | None,
    sampling: str,
    out: str,
) -> None:
    """Write the per-depth mean PSV images and the cross-view variance curve."""
    try:
        scene = load_scene(scene_dir)
        if target not in scene.cameras:
            raise GLRError(f"view {target} is not in the scene (have {scene.view_ids})")
        views = inputs if inputs is not None else _default_inputs(scene, [target])
        if len(views) < 2:
            raise GLRError("the focus stack needs at least two input views")
        planes = sample_depths(near or scene.near, far or scene.far, depths, sampling)
        images, cameras, canonical = target_psv_inputs(scene, views, scene.cameras[target])
        psv = build_psv(images, cameras, canonical, planes, Rect.full(canonical.height, canonical.width))
        curve = focus_curve(psv)
    except (GLRError, ValueError) as e:
        _fail("Focus diagnosis", e)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for index, image in enumerate(mean_psv(psv)):
        write_ppm(out_dir / f"focus_{index:03d}.ppm", image)
    write_ppm(out_dir / "mean.ppm", mean_psv_all(psv))
    lines = ["index,depth,variance"]
    lines += [f"{i},{planes.distances[i]!r},{curve[i]!r}" for i in range(len(planes))]
    (out_dir / "focus.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    sharpest = int(np.argmin(curve))
    console.print(
        f"[green]Focus stack written:[/green] {out_dir} ({len(planes)} planes)\n"
        f"[bold]Sharpest plane:[/bold] {sharpest} at depth {planes.distances[sharpest]:.4f}"
    )


@main.command()
@click.option("--quick", is_flag=True, help="Use a smaller network for the gradient suite")
@click.option("--seed", type=int, default=0, show_default=True)
def selftest(quick: bool, seed: int) -> None:
    """Run the homography-oracle, epipolar and gradient suites."""
    results = run_selftest(seed=seed, quick=quick)
    table = Table(title="Self-test")
    table.add_column("suite")
    table.add_column("result")
    table.add_column("detail")
    table.add_column("time", justify="right")
    for result in results:
        status = "[green]ok[/green]" if result.passed else "[red]FAILED[/red]"
        table.add_row(result.name, status, result.detail, f"{result.seconds:.1f}s")
    console.print(table)
    if not all(r.passed for r in results):
        sys.exit(1)


@main.command()
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
def info(weights: str) -> None:
    """Show the model manifest and parameter counts of a checkpoint."""
    try:
        checkpoint = load_checkpoint(weights)
        manifest, _ = read_manifest(weights)
    except (GLRError, ValueError) as e:
        _fail("Reading checkpoint", e)
    model = checkpoint.model
    breakdown = network.parameter_breakdown(checkpoint.weights)
    lines = [
        f"[bold]Variant:[/bold] {model.variant.value}  [bold]D/G/C/V:[/bold] "
        f"{model.num_depths}/{model.group_size}/{model.channels}/{model.num_views}",
        f"[bold]Upsampling:[/bold] {model.upsample_mode.value}  [bold]Positional:[/bold] "
        f"{model.with_positional}  [bold]Angular:[/bold] {model.with_angular}",
        f"[bold]Step:[/bold] {checkpoint.step}  [bold]Optimizer state:[/bold] {checkpoint.adam is not None}",
        f"[bold]Parameters:[/bold] {network.parameter_count(checkpoint.weights):,}",
    ]
    lines += [f"  {stage}: {count:,}" for stage, count in breakdown.items()]
    console.print(Panel("\n".join(lines), title=Path(weights).name, border_style="cyan"))
    logger.debug("manifest:\n%s", "\n".join(manifest))


@main.group()
def scene() -> None:
    """Procedural scene tools."""


@scene.command(name="generate")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--planes", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--views", type=click.IntRange(min=2), default=9, show_default=True)
@click.option("--size", callback=_image_size, default="64x64", show_default=True, help="Image size WxH")
@click.option("--float-images", is_flag=True, help="Also store lossless GLRT images")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
def generate_cmd(seed: int, planes: int, views: int, size: tuple[int, int], float_images: bool, out: str) -> None:
    """Write a procedural plane scene with analytic ground-truth images."""
    width, height = size
    try:
        generated = generate_scene(seed, planes, views, width, height)
        save_scene(render_views(generated), out, float_images=float_images)
    except (GLRError, ValueError) as e:
        _fail("Scene generation", e)
    console.print(
        f"[green]Scene written:[/green] {out} ({views} views, {planes} planes, "
        f"near {generated.near:.3f}, far {generated.far:.3f})"
    )


@main.command()
@click.option("--path", "config_path", default="glr.conf", show_default=True, type=click.Path(dir_okay=False))
def init(config_path: str) -> None:
    """Write a starter training configuration."""
    target = Path(config_path)
    if target.exists() and not click.confirm(f"{target} already exists. Overwrite?"):
        return
    if target.exists():
        target.unlink()
    write_starter_config(target)
    console.print(f"[green]Config created:[/green] {target}")


@main.command()
def version() -> None:
    """Show version information."""
    from planesweep_glr import __version__

    console.print(f"[cyan]planesweep-glr[/cyan] v{__version__}")


if __name__ == "__main__":
    main()
