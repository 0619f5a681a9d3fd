"""Tests for CLI interface."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from planesweep_glr.cli import main
from planesweep_glr.storage import load_checkpoint, read_ppm, read_tensor


def _write_train_config(path: Path, scene: Path, out: Path) -> Path:
    path.write_text(
        f"""
scene_dir = {scene}
input_views = 0, 2
target_views = 1
D = 4
G = 2
C = 2
patch = 8
steps = 2
lr = 0.001
out_dir = {out}
"""
    )
    return path


class TestCLI:
    """Tests for CLI commands."""

    @pytest.fixture
    def runner(self):
        """Create CLI test runner."""
        return CliRunner()

    @pytest.fixture
    def small_scene_dir(self, runner: CliRunner, tmp_path: Path) -> Path:
        """Generate the three-view 16x16 scene through the CLI."""
        out = tmp_path / "scene"
        result = runner.invoke(
            main,
            ["scene", "generate", "--seed", "3", "--planes", "2", "--views", "3", "--size", "16x16",
             "--float-images", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        return out

    @pytest.fixture
    def trained(self, runner: CliRunner, tmp_path: Path, small_scene_dir: Path) -> Path:
        """Train a tiny model for two steps and return its final checkpoint."""
        config = _write_train_config(tmp_path / "glr.conf", small_scene_dir, tmp_path / "run")
        result = runner.invoke(main, ["train", "--config", str(config)])
        assert result.exit_code == 0, result.output
        return tmp_path / "run" / "final.ckpt"

    def test_help_message(self, runner: CliRunner):
        """Test --help shows usage information."""
        result = runner.invoke(main, ["--help"])

        assert result.exit_code == 0
        assert "planesweep-glr" in result.output
        assert "build-psv" in result.output

    def test_version_command(self, runner: CliRunner):
        """Test version subcommand."""
        result = runner.invoke(main, ["version"])

        assert result.exit_code == 0
        assert "planesweep-glr v0.1.0" in result.output

    def test_init_command(self, runner: CliRunner, tmp_path: Path):
        """Test init subcommand creates config file."""
        with runner.isolated_filesystem(temp_dir=tmp_path):
            result = runner.invoke(main, ["init"])

            assert result.exit_code == 0
            content = Path("glr.conf").read_text()
            assert "scene_dir" in content
            assert "target_views" in content

    def test_init_command_no_overwrite(self, runner: CliRunner, tmp_path: Path):
        """Test init doesn't overwrite without confirmation."""
        with runner.isolated_filesystem(temp_dir=tmp_path):
            Path("glr.conf").write_text("seed = 1\n")

            runner.invoke(main, ["init"], input="n\n")

            assert Path("glr.conf").read_text() == "seed = 1\n"

    def test_init_command_overwrite(self, runner: CliRunner, tmp_path: Path):
        """Test init replaces the file when confirmed."""
        with runner.isolated_filesystem(temp_dir=tmp_path):
            Path("glr.conf").write_text("seed = 1\n")

            result = runner.invoke(main, ["init"], input="y\n")

            assert result.exit_code == 0
            assert "scene_dir" in Path("glr.conf").read_text()

    def test_scene_generate(self, small_scene_dir: Path):
        """Test the procedural scene layout on disk."""
        assert (small_scene_dir / "cameras.txt").is_file()
        assert (small_scene_dir / "bounds.txt").is_file()
        for view in range(3):
            assert read_ppm(small_scene_dir / "images" / f"view_{view}.ppm").shape == (3, 16, 16)
            assert (small_scene_dir / "images" / f"view_{view}.glrt").is_file()

    def test_scene_generate_bad_size(self, runner: CliRunner, tmp_path: Path):
        """Test that a malformed size is a usage error."""
        result = runner.invoke(main, ["scene", "generate", "--size", "16by16", "--out", str(tmp_path / "s")])

        assert result.exit_code == 2
        assert "WxH" in result.output

    def test_build_psv(self, runner: CliRunner, two_view_dir: Path, tmp_path: Path):
        """Test that build-psv writes a (D, V, 3, H, W) tensor."""
        out = tmp_path / "psv.glrt"
        result = runner.invoke(
            main, ["build-psv", "--scene", str(two_view_dir), "--target", "0", "--depths", "4", "--out", str(out)]
        )

        assert result.exit_code == 0, result.output
        psv = read_tensor(out)
        assert psv.shape == (4, 2, 3, 8, 8)

    def test_build_psv_angular(self, runner: CliRunner, two_view_dir: Path, tmp_path: Path):
        """Test the angular channel flag."""
        out = tmp_path / "psv.glrt"
        result = runner.invoke(
            main,
            ["build-psv", "--scene", str(two_view_dir), "--target", "1", "--depths", "2", "--inputs", "0",
             "--angular", "--out", str(out)],
        )

        assert result.exit_code == 0, result.output
        assert read_tensor(out).shape == (2, 1, 4, 8, 8)

    def test_build_psv_unknown_target(self, runner: CliRunner, two_view_dir: Path, tmp_path: Path):
        """Test that errors exit with status 1."""
        result = runner.invoke(
            main,
            ["build-psv", "--scene", str(two_view_dir), "--target", "9", "--depths", "4",
             "--out", str(tmp_path / "psv.glrt")],
        )

        assert result.exit_code == 1
        assert "PSV build failed" in result.output

    def test_build_psv_missing_bounds(self, runner: CliRunner, small_scene_dir: Path, tmp_path: Path):
        """Test that a missing scene file is a usage error."""
        (small_scene_dir / "bounds.txt").unlink()
        result = runner.invoke(
            main,
            ["build-psv", "--scene", str(small_scene_dir), "--target", "0", "--depths", "4",
             "--out", str(tmp_path / "psv.glrt")],
        )

        assert result.exit_code == 2
        assert "Usage:" in result.output
        assert "bounds file not found" in result.output

    def test_build_psv_malformed_bounds(self, runner: CliRunner, small_scene_dir: Path, tmp_path: Path):
        """Test that malformed scene contents still exit with status 1."""
        (small_scene_dir / "bounds.txt").write_text("near nope\n")
        result = runner.invoke(
            main,
            ["build-psv", "--scene", str(small_scene_dir), "--target", "0", "--depths", "4",
             "--out", str(tmp_path / "psv.glrt")],
        )

        assert result.exit_code == 1
        assert "PSV build failed" in result.output

    def test_focus_finds_plane_depth(self, runner: CliRunner, tmp_path: Path):
        """Test that the focus stack is sharpest at the plane's true depth."""
        scene = tmp_path / "focus_scene"
        result = runner.invoke(
            main,
            ["scene", "generate", "--seed", "7", "--planes", "1", "--views", "5", "--float-images",
             "--out", str(scene)],
        )
        assert result.exit_code == 0, result.output

        out = tmp_path / "focus"
        result = runner.invoke(
            main, ["diagnose", "focus", "--scene", str(scene), "--target", "2", "--depths", "64", "--out", str(out)]
        )

        assert result.exit_code == 0, result.output
        assert "Sharpest plane: 21" in result.output
        rows = (out / "focus.csv").read_text().splitlines()
        assert rows[0] == "index,depth,variance"
        variances = [float(row.split(",")[2]) for row in rows[1:]]
        assert len(variances) == 64
        assert variances.index(min(variances)) == 21
        assert (out / "focus_000.ppm").is_file()
        assert (out / "focus_063.ppm").is_file()
        assert (out / "mean.ppm").is_file()

    def test_train_writes_checkpoint(self, trained: Path):
        """Test that the train command produces a final checkpoint and log."""
        checkpoint = load_checkpoint(trained)
        assert checkpoint.step == 2
        assert (trained.parent / "train_log.csv").read_text().startswith("step,loss,lr,grad_norm")

    def test_train_invalid_config(self, runner: CliRunner, tmp_path: Path):
        """Test that an invalid config exits with status 1."""
        config = tmp_path / "bad.conf"
        config.write_text("patch = 30\n")

        result = runner.invoke(main, ["train", "--config", str(config)])

        assert result.exit_code == 1
        assert "Training failed" in result.output

    def test_info(self, runner: CliRunner, trained: Path):
        """Test the checkpoint summary."""
        result = runner.invoke(main, ["info", "--weights", str(trained)])

        assert result.exit_code == 0, result.output
        assert "shared" in result.output
        assert "4/2/2/2" in result.output

    def test_eval_json(self, runner: CliRunner, trained: Path, small_scene_dir: Path, tmp_path: Path):
        """Test JSON evaluation output and the report file."""
        report_path = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["-q", "eval", "--scene", str(small_scene_dir), "--weights", str(trained), "--targets", "1",
             "--report", str(report_path), "--json"],
        )

        assert result.exit_code == 0, result.output
        data = json.loads(result.stdout)
        assert [row["view_id"] for row in data["rows"]] == [1]
        assert data["mean_psnr"] == pytest.approx(data["rows"][0]["psnr"])
        assert json.loads(report_path.read_text()) == data

    def test_eval_table(self, runner: CliRunner, trained: Path, small_scene_dir: Path):
        """Test the table output."""
        result = runner.invoke(
            main, ["eval", "--scene", str(small_scene_dir), "--weights", str(trained), "--targets", "1"]
        )

        assert result.exit_code == 0, result.output
        assert "PSNR" in result.output
        assert "mean" in result.output

    def test_eval_wrong_input_count(self, runner: CliRunner, trained: Path, small_scene_dir: Path):
        """Test that the input view count must match the checkpoint."""
        result = runner.invoke(
            main,
            ["eval", "--scene", str(small_scene_dir), "--weights", str(trained), "--targets", "1",
             "--inputs", "0"],
        )

        assert result.exit_code == 1
        assert "Evaluation failed" in result.output

    def test_render(self, runner: CliRunner, trained: Path, small_scene_dir: Path, tmp_path: Path):
        """Test rendering a target view to PPM."""
        out = tmp_path / "render.ppm"
        result = runner.invoke(
            main,
            ["render", "--scene", str(small_scene_dir), "--weights", str(trained), "--target", "1",
             "--tile", "8", "--out", str(out)],
        )

        assert result.exit_code == 0, result.output
        assert read_ppm(out).shape == (3, 16, 16)

    def test_selftest_quick(self, runner: CliRunner):
        """Test that the quick self-test passes."""
        result = runner.invoke(main, ["selftest", "--quick"])

        assert result.exit_code == 0, result.output
        assert "homography-oracle" in result.output
        assert "FAILED" not in result.output
