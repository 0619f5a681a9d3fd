"""On-disk formats: GLRT tensors, camera and bounds text files, PPM images,
scene directories and model checkpoints.

GLRT (little-endian)::

    b"GLRT" | u32 version=1 | u32 dtype (0 = float32, 1 = float64) | u32 rank
    | rank x u32 dims | row-major data

A checkpoint is an ASCII manifest terminated by ``end`` followed by the
concatenated GLRT records it indexes; offsets count from the first byte
after the manifest.
"""

import logging
import struct
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError

from planesweep_glr.camera import Camera
from planesweep_glr.exceptions import FormatError, InvalidCameraError, MissingFileError
from planesweep_glr.models import ModelConfig
from planesweep_glr.nn.optim import AdamState
from planesweep_glr.nn.tensor import Params
from planesweep_glr.psv import ImageBuffer
from planesweep_glr.scenes import SceneData

logger = logging.getLogger(__name__)

GLRT_MAGIC = b"GLRT"
GLRT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {code: dtype.newbyteorder("<") for dtype, code in _DTYPE_CODES.items()}
_HEADER = struct.Struct("<4sIII")

CHECKPOINT_MAGIC = "GLRCKPT 1"


# ---------------------------------------------------------------------------
# GLRT tensors
# ---------------------------------------------------------------------------


def encode_tensor(array: npt.ArrayLike) -> bytes:
    """Serialize a float32 or float64 array as one GLRT record."""
    data = np.asarray(array)
    code = _DTYPE_CODES.get(data.dtype)
    if code is None:
        raise FormatError(f"GLRT stores float32 or float64 tensors, got {data.dtype}")
    header = _HEADER.pack(GLRT_MAGIC, GLRT_VERSION, code, data.ndim)
    dims = struct.pack(f"<{data.ndim}I", *data.shape)
    return header + dims + np.ascontiguousarray(data, dtype=_CODE_DTYPES[code]).tobytes()


def decode_tensor(buffer: bytes, offset: int = 0, path: str | None = None) -> tuple[np.ndarray, int]:
    """Parse one GLRT record starting at ``offset``.

    Returns:
        The array (native byte order) and the offset just past the record.

    Raises:
        FormatError: On a bad magic, version, dtype or truncated data.
    """
    if len(buffer) - offset < _HEADER.size:
        raise FormatError("truncated GLRT header", path)
    magic, version, code, rank = _HEADER.unpack_from(buffer, offset)
    if magic != GLRT_MAGIC:
        raise FormatError(f"bad GLRT magic {magic!r}", path)
    if version != GLRT_VERSION:
        raise FormatError(f"unsupported GLRT version {version}", path)
    if code not in _CODE_DTYPES:
        raise FormatError(f"unknown GLRT dtype code {code}", path)
    offset += _HEADER.size
    if len(buffer) - offset < 4 * rank:
        raise FormatError("truncated GLRT dims", path)
    dims = struct.unpack_from(f"<{rank}I", buffer, offset)
    offset += 4 * rank
    dtype = _CODE_DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buffer) - offset < nbytes:
        raise FormatError(f"truncated GLRT data: need {nbytes} bytes, have {len(buffer) - offset}", path)
    array = np.frombuffer(buffer, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
    return array.reshape(dims).astype(dtype.newbyteorder("="), copy=True), offset + nbytes


def write_tensor(path: str | Path, array: npt.ArrayLike) -> None:
    Path(path).write_bytes(encode_tensor(array))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a single-record GLRT file."""
    buffer = Path(path).read_bytes()
    array, end = decode_tensor(buffer, 0, str(path))
    if end != len(buffer):
        raise FormatError(f"{len(buffer) - end} trailing bytes after GLRT record", str(path))
    return array


# ---------------------------------------------------------------------------
# Camera and bounds text files
# ---------------------------------------------------------------------------


def _fmt(values: npt.ArrayLike) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).reshape(-1))


def format_cameras(cameras: Mapping[int, Camera]) -> str:
    """Render cameras in the ``view`` / ``size`` / ``K`` / ``R`` / ``t`` block format."""
    blocks = []
    for view_id in sorted(cameras):
        cam = cameras[view_id]
        blocks.append(
            f"view {view_id}\n"
            f"size {cam.width} {cam.height}\n"
            f"K {_fmt(cam.intrinsics)}\n"
            f"R {_fmt(cam.rotation)}\n"
            f"t {_fmt(cam.translation)}\n"
        )
    return "\n".join(blocks)


_CAMERA_FIELDS = {"size": 2, "K": 9, "R": 9, "t": 3}


def parse_cameras(text: str, path: str | None = None) -> dict[int, Camera]:
    """Parse the camera text format; ``#`` starts a comment.

    Raises:
        FormatError: With the offending line number.
    """
    cameras: dict[int, Camera] = {}
    current: int | None = None
    header_line = 0
    fields: dict[str, list[float]] = {}

    def finish() -> None:
        if current is None:
            return
        missing = [key for key in _CAMERA_FIELDS if key not in fields]
        if missing:
            raise FormatError(f"view {current} is missing {', '.join(missing)}", path, header_line)
        width, height = (int(v) for v in fields["size"])
        try:
            cameras[current] = Camera(
                np.reshape(fields["K"], (3, 3)),
                np.reshape(fields["R"], (3, 3)),
                np.asarray(fields["t"]),
                width,
                height,
            )
        except InvalidCameraError as e:
            raise FormatError(f"view {current}: {e}", path, header_line) from e

    for number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        key, values = tokens[0], tokens[1:]
        if key == "view":
            finish()
            if len(values) != 1:
                raise FormatError("expected 'view <id>'", path, number)
            try:
                current = int(values[0])
            except ValueError:
                raise FormatError(f"view id {values[0]!r} is not an integer", path, number) from None
            if current in cameras:
                raise FormatError(f"duplicate view {current}", path, number)
            header_line, fields = number, {}
            continue
        if current is None:
            raise FormatError(f"'{key}' before any 'view' line", path, number)
        if key not in _CAMERA_FIELDS:
            raise FormatError(f"unknown camera field '{key}'", path, number)
        if key in fields:
            raise FormatError(f"duplicate '{key}' in view {current}", path, number)
        if len(values) != _CAMERA_FIELDS[key]:
            raise FormatError(
                f"'{key}' expects {_CAMERA_FIELDS[key]} values, got {len(values)}", path, number
            )
        try:
            fields[key] = [float(v) for v in values]
        except ValueError as e:
            raise FormatError(f"bad number in '{key}': {e}", path, number) from None
        if key == "size" and any(v != int(v) or v < 1 for v in fields[key]):
            raise FormatError("size must be two positive integers", path, number)
    finish()
    if not cameras:
        raise FormatError("no cameras defined", path)
    return cameras


def write_cameras(path: str | Path, cameras: Mapping[int, Camera]) -> None:
    Path(path).write_text(format_cameras(cameras), encoding="utf-8")


def read_cameras(path: str | Path) -> dict[int, Camera]:
    return parse_cameras(Path(path).read_text(encoding="utf-8"), str(path))


def write_bounds(path: str | Path, near: float, far: float) -> None:
    Path(path).write_text(f"near {near!r}\nfar {far!r}\n", encoding="utf-8")


def read_bounds(path: str | Path) -> tuple[float, float]:
    """Read ``near <real>`` / ``far <real>``.

    Raises:
        FormatError: If the file is missing or malformed, or near >= far.
    """
    source = Path(path)
    if not source.is_file():
        raise MissingFileError("bounds file not found", str(path))
    values: dict[str, float] = {}
    for number, raw in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != 2 or tokens[0] not in ("near", "far"):
            raise FormatError("expected 'near <real>' or 'far <real>'", str(path), number)
        try:
            values[tokens[0]] = float(tokens[1])
        except ValueError:
            raise FormatError(f"bad number {tokens[1]!r}", str(path), number) from None
    if set(values) != {"near", "far"}:
        raise FormatError("bounds file needs both near and far", str(path))
    if not 0 < values["near"] < values["far"]:
        raise FormatError(f"need 0 < near < far, got {values['near']} and {values['far']}", str(path))
    return values["near"], values["far"]


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


def to_uint8(image: ImageBuffer) -> npt.NDArray[np.uint8]:
    """Quantize a (3, H, W) image in [0, 1] to (H, W, 3) bytes."""
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def write_ppm(path: str | Path, image: ImageBuffer) -> None:
    """Write a binary (P6) 8-bit PPM."""
    Image.fromarray(to_uint8(image)).save(path, format="PPM")


def read_ppm(path: str | Path) -> ImageBuffer:
    """Read a PPM as a float32 (3, H, W) image in [0, 1]."""
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (UnidentifiedImageError, OSError) as e:
        raise FormatError(f"unreadable image: {e}", str(path)) from e
    return pixels.transpose(2, 0, 1) / np.float32(255.0)


# ---------------------------------------------------------------------------
# Scene directories
# ---------------------------------------------------------------------------


def save_scene(scene: SceneData, directory: str | Path, float_images: bool = False) -> Path:
    """Write ``cameras.txt``, ``bounds.txt``, ``images/view_<id>.ppm`` and ``meta.txt``.

    With ``float_images`` each view is also stored losslessly as
    ``images/view_<id>.glrt``; :func:`load_scene` prefers those.
    """
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    write_cameras(root / "cameras.txt", scene.cameras)
    write_bounds(root / "bounds.txt", scene.near, scene.far)
    for view_id in scene.view_ids:
        write_ppm(root / "images" / f"view_{view_id}.ppm", scene.images[view_id])
        if float_images:
            write_tensor(root / "images" / f"view_{view_id}.glrt", np.asarray(scene.images[view_id]))
    if scene.meta:
        lines = [f"{key} = {value}" for key, value in sorted(scene.meta.items())]
        (root / "meta.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote scene with %d views to %s", len(scene.cameras), root)
    return root


def _read_meta(path: Path) -> dict[str, str]:
    meta: dict[str, str] = {}
    if not path.is_file():
        return meta
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError("expected 'key = value'", str(path), number)
        meta[key.strip()] = value.strip()
    return meta


def load_scene(directory: str | Path) -> SceneData:
    """Load a scene directory written by :func:`save_scene` or by hand.

    Raises:
        FormatError: On a missing or malformed file.
    """
    root = Path(directory)
    if not root.is_dir():
        raise MissingFileError("scene directory not found", str(root))
    camera_file = root / "cameras.txt"
    if not camera_file.is_file():
        raise MissingFileError("cameras file not found", str(camera_file))
    cameras = read_cameras(camera_file)
    near, far = read_bounds(root / "bounds.txt")
    images: dict[int, ImageBuffer] = {}
    for view_id, cam in cameras.items():
        glrt = root / "images" / f"view_{view_id}.glrt"
        ppm = root / "images" / f"view_{view_id}.ppm"
        if glrt.is_file():
            image = read_tensor(glrt)
        elif ppm.is_file():
            image = read_ppm(ppm)
        else:
            raise MissingFileError(f"no image for view {view_id}", str(ppm))
        if image.shape != (3, cam.height, cam.width):
            raise FormatError(
                f"image is {image.shape}, camera expects (3, {cam.height}, {cam.width})", str(ppm)
            )
        images[view_id] = image
    return SceneData(cameras, images, near, far, _read_meta(root / "meta.txt"))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Self-describing model snapshot, optionally with optimizer state."""

    model: ModelConfig
    weights: Params
    step: int = 0
    adam: AdamState | None = None


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    """Write the manifest and the GLRT records it indexes."""
    records: list[tuple[str, np.ndarray]] = [(name, checkpoint.weights[name]) for name in checkpoint.weights]
    if checkpoint.adam is not None:
        records += [(f"adam.m/{name}", checkpoint.adam.m[name]) for name in checkpoint.weights]
        records += [(f"adam.v/{name}", checkpoint.adam.v[name]) for name in checkpoint.weights]

    lines = [
        CHECKPOINT_MAGIC,
        f"model {checkpoint.model.model_dump_json()}",
        f"step {checkpoint.step}",
        f"adam_step {checkpoint.adam.step if checkpoint.adam is not None else -1}",
    ]
    blobs = []
    offset = 0
    for name, value in records:
        blob = encode_tensor(value)
        dims = "x".join(str(d) for d in value.shape)
        lines.append(f"param {name} {value.dtype.name} {dims} {offset}")
        blobs.append(blob)
        offset += len(blob)
    lines.append("end")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(("\n".join(lines) + "\n").encode("ascii") + b"".join(blobs))


def read_manifest(path: str | Path) -> tuple[list[str], int]:
    """Return the manifest lines and the offset of the data section."""
    buffer = Path(path).read_bytes()
    marker = b"\nend\n"
    end = buffer.find(marker)
    if not buffer.startswith(CHECKPOINT_MAGIC.encode()) or end < 0:
        raise FormatError("not a GLR checkpoint", str(path))
    try:
        text = buffer[:end].decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("manifest is not ASCII", str(path)) from None
    return text.splitlines(), end + len(marker)


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        FormatError: On a malformed manifest or data section.
    """
    source = str(path)
    lines, data_start = read_manifest(path)
    buffer = Path(path).read_bytes()
    model: ModelConfig | None = None
    step = 0
    adam_step = -1
    tensors: dict[str, np.ndarray] = {}
    for number, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        if key == "model":
            try:
                model = ModelConfig.model_validate_json(rest)
            except ValidationError as e:
                raise FormatError(f"invalid model manifest: {e}", source, number) from e
        elif key in ("step", "adam_step"):
            try:
                value = int(rest)
            except ValueError:
                raise FormatError(f"bad {key} {rest!r}", source, number) from None
            if key == "step":
                step = value
            else:
                adam_step = value
        elif key == "param":
            parts = rest.split()
            if len(parts) != 4:
                raise FormatError("expected 'param <name> <dtype> <dims> <offset>'", source, number)
            name, _, dims, offset = parts
            try:
                start = data_start + int(offset)
                expected = tuple(int(d) for d in dims.split("x")) if dims else ()
            except ValueError:
                raise FormatError(f"bad dims or offset in param {name!r}", source, number) from None
            array, _ = decode_tensor(buffer, start, source)
            if array.shape != expected:
                raise FormatError(f"{name}: manifest dims {expected}, data {array.shape}", source, number)
            tensors[name] = array
        else:
            raise FormatError(f"unknown manifest entry '{key}'", source, number)
    if model is None:
        raise FormatError("manifest has no model line", source)

    weights = {name: value for name, value in tensors.items() if not name.startswith("adam.")}
    adam = None
    if adam_step >= 0:
        missing = [name for name in weights if f"adam.m/{name}" not in tensors or f"adam.v/{name}" not in tensors]
        if missing:
            raise FormatError(f"optimizer moments missing for {missing}", source)
        adam = AdamState(
            m={name: tensors[f"adam.m/{name}"] for name in weights},
            v={name: tensors[f"adam.v/{name}"] for name in weights},
            step=adam_step,
        )
    return Checkpoint(model=model, weights=weights, step=step, adam=adam)
