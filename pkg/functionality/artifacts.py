import json
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from config import CONFIG_FILENAME
from functionality.errors import ConfigError, MissingArtifactError
from schemas.pipeline import PipelineConfig


def require_artifact(path, stage: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, stage)
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path, stage: str):
    return json.loads(require_artifact(path, stage).read_text(encoding="utf-8"))


def write_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_csv(path, stage: str, **kwargs) -> pd.DataFrame:
    return pd.read_csv(require_artifact(path, stage), **kwargs)


# ---------------------------------------------------------------------------
# key = value config files
# ---------------------------------------------------------------------------

def _flatten(data: dict, prefix: str = "") -> list[tuple[str, object]]:
    items = []
    for key, value in data.items():
        if isinstance(value, dict):
            items.extend(_flatten(value, f"{prefix}{key}."))
        else:
            items.append((f"{prefix}{key}", value))
    return items


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config_text(config: PipelineConfig) -> str:
    lines = ["# effective pipeline configuration"]
    lines += [f"{key} = {_format(value)}" for key, value in _flatten(config.model_dump(mode="json"))]
    return "\n".join(lines) + "\n"


def _set_dotted(data: dict, key: str, value, where: str):
    *parents, leaf = key.split(".")
    node = data
    for part in parents:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"{where}: unknown section {part!r}")
        node = node[part]
    if leaf not in node or isinstance(node[leaf], dict):
        raise ConfigError(f"{where}: unknown key {key!r}")
    if isinstance(node[leaf], list) and isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    node[leaf] = value


def _validated(data: dict) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        raise ConfigError(f"invalid configuration: {'.'.join(map(str, error['loc']))}: {error['msg']}")


def load_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Apply ``key = value`` lines on top of ``base`` (defaults when omitted)."""
    data = (base or PipelineConfig()).model_dump(mode="json")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        _set_dotted(data, key, value, f"config line {line_no}")
    return _validated(data)


def apply_overrides(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Dotted-key overrides from command-line flags; ``None`` values are left alone."""
    data = config.model_dump(mode="json")
    for key, value in overrides.items():
        if value is not None:
            _set_dotted(data, key, value, "command line")
    return _validated(data)


def read_config_file(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return load_config_text(path.read_text(encoding="utf-8"))


def write_config(directory, config: PipelineConfig) -> Path:
    path = Path(directory) / CONFIG_FILENAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config_text(config), encoding="utf-8")
    return path
