# core/config_loader.py

import copy
import json
from pathlib import Path
from typing import Iterable, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from core.config_schema import RunConfig
from core.paths import DEFAULT_CONFIG_PATH, PROJECT_ROOT

DEFAULT_ENV_PATH = PROJECT_ROOT / "secrets" / ".env"


class ConfigError(Exception):
    """Raised when the run configuration cannot be read or validated."""
    pass


def load_env_variables() -> None:
    """
    Loads secrets/.env when present. Only endpoint and cache variables are
    read from the environment; nothing numeric comes from here.
    """
    if DEFAULT_ENV_PATH.exists():
        load_dotenv(dotenv_path=DEFAULT_ENV_PATH)
    else:
        load_dotenv()


def load_raw_config(path: Path = DEFAULT_CONFIG_PATH) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found at {path.resolve()}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e


def _decode_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    """
    Applies "key=value" overrides. Dotted keys reach nested sections
    (e.g. "popularity.year=2020"); values are JSON-decoded when possible,
    otherwise kept as strings.
    """
    result = copy.deepcopy(raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"Override '{item}' must look like key=value")
        key, value = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"Override '{item}' has an empty key")
        node = result
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            elif not isinstance(child, dict):
                raise ConfigError(f"Override '{item}': '{part}' is not a section")
            node = child
        node[parts[-1]] = _decode_value(value)
    return result


def load_config(path: Optional[Path] = None, overrides: Optional[Iterable[str]] = None) -> RunConfig:
    """
    Loads environment variables and the JSON config, applies overrides,
    validates against the schema, and returns a typed RunConfig.
    """
    load_env_variables()
    raw = load_raw_config(Path(path) if path else DEFAULT_CONFIG_PATH)
    raw = apply_overrides(raw, overrides or [])
    try:
        return RunConfig(**raw)
    except ValidationError as e:
        raise ConfigError(f"Configuration validation failed: {e}") from e
