"""
Configuration Plumbing
Environment variables, declarative key-value config files and config hashing
"""

import hashlib
import json
import os
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError

# Load environment variables
load_dotenv()

TOOL_NAME = "cascade-veracity"
TOOL_VERSION = "1.0.0"

_TRUE_VALUES = {"1", "true", "yes", "on"}
_FALSE_VALUES = {"0", "false", "no", "off"}


def env_str(name: str, default: str) -> str:
    """Read a string setting from the environment"""
    value = os.getenv(name)
    return default if value is None or value.strip() == "" else value.strip()


def env_int(name: str, default: int) -> int:
    """Read an integer setting from the environment"""
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {value!r}")


def env_float(name: str, default: float) -> float:
    """Read a float setting from the environment"""
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {value!r}")


def parse_bool(value: Any, name: str = "value") -> bool:
    """Interpret the usual textual spellings of a boolean"""
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE_VALUES:
        return True
    if text in _FALSE_VALUES:
        return False
    raise ConfigError(f"{name} must be a boolean, got {value!r}")


def env_bool(name: str, default: bool) -> bool:
    """Read a boolean setting from the environment"""
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    return parse_bool(value, name)


def read_key_value_file(path: Optional[str]) -> Dict[str, str]:
    """
    Read a declarative ``KEY=value`` config file

    Parameters:
    -----------
    path : str, optional
        Path to a .env-style file; None yields an empty mapping

    Returns:
    --------
    Dict with upper-cased keys and non-empty string values
    """
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {
        key.strip().upper(): value.strip()
        for key, value in values.items()
        if value is not None and value.strip() != ""
    }


def canonical_json(payload: Any) -> str:
    """Stable JSON text used for hashing and byte-identical artifacts"""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(payload: Mapping[str, Any]) -> str:
    """Short sha256 digest of a resolved configuration"""
    digest = hashlib.sha256(canonical_json(dict(payload)).encode("utf-8"))
    return digest.hexdigest()[:12]


def default_threads() -> int:
    """Parallelism degree when no --threads flag is given"""
    return max(1, env_int("CASCADE_THREADS", 1))
