"""Configuration loader for planesweep-glr."""

import os
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from planesweep_glr.exceptions import ConfigError
from planesweep_glr.models import TrainConfig

LIST_KEYS = {"scene_dir", "input_views", "target_views"}

STARTER_CONFIG = """\
# planesweep-glr training configuration (key = value)
scene_dir = scenes/demo
input_views = 0, 1, 3, 4
target_views = 2

# architecture
D = 32
G = 2
C = 16
variant = shared
upsample = nearest
pos_enc = true
ang_enc = true

# depth planes (near/far default to the scene bounds file)
sampling = depth

# optimization
patch = 64
batch = 1
steps = 1000
lr = 1.5e-4
clip_norm = 1.0
loss = schedule
seed = 0
ckpt_every = 0
out_dir = runs/glr
"""


def _known_keys() -> set[str]:
    keys = set()
    for name, field in TrainConfig.model_fields.items():
        keys.add(field.alias or name)
    return keys


def load_config(config_path: str | None = None) -> TrainConfig:
    """Load configuration from file or defaults.

    Args:
        config_path: Path to config file. If not provided, searches default locations.

    Returns:
        TrainConfig instance.

    Raises:
        ConfigError: If the file is missing, malformed or invalid.
    """
    if config_path:
        return _load_from_file(config_path)

    search_paths = [
        Path("glr.conf"),
        Path("glr.yaml"),
        Path("glr.yml"),
        Path.home() / ".config" / "planesweep-glr" / "train.yaml",
    ]
    for path in search_paths:
        if path.exists():
            return _load_from_file(str(path))

    env_config = os.environ.get("GLR_CONFIG")
    if env_config and Path(env_config).exists():
        return _load_from_file(env_config)

    return TrainConfig()


def _load_from_file(path: str) -> TrainConfig:
    source = Path(path)
    if not source.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = source.read_text(encoding="utf-8")
    if source.suffix in (".yaml", ".yml"):
        values = _parse_yaml(text, path)
    else:
        values = parse_key_values(text, path)
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"{path}: {problems}") from e


def _parse_yaml(text: str, path: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys")
    unknown = sorted(set(data) - _known_keys())
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    for key in LIST_KEYS & set(data):
        if not isinstance(data[key], list):
            data[key] = [data[key]]
    return data


def parse_key_values(text: str, path: str = "<config>") -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma separated.

    Raises:
        ConfigError: Naming the line of an unknown key, a missing ``=`` or a repeated key.
    """
    known = _known_keys()
    values: dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"{path}:{number}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"{path}:{number}: '{key}' given twice")
        if key in LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def write_starter_config(path: str | Path) -> Path:
    """Write a commented starter config; refuses to overwrite."""
    target = Path(path)
    if target.exists():
        raise ConfigError(f"{target} already exists")
    target.write_text(STARTER_CONFIG, encoding="utf-8")
    return target
