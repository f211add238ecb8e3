"""Configuration handling for camtomo."""

import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional

import numpy as np
import yaml
from dotenv import load_dotenv

from camtomo.utils.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "CAMTOMO_"
SCHEMA_VERSION = 1
DEFAULT_SEED = 20240101


class Config:
    """Configuration manager.

    Handles loading and accessing configuration from multiple sources:
    - Config files (YAML)
    - Environment variables (``CAMTOMO_<DOTTED_KEY>``, optionally from ``.env``)
    - Values set programmatically (command line overrides)
    """

    def __init__(self, config_file: Optional[str] = None, data: Optional[Dict[str, Any]] = None):
        """Initialize configuration.

        Args:
            config_file: Path to config file (optional)
            data: Already parsed configuration mapping; skips file lookup when given
        """
        load_dotenv(override=False)
        self.source: Optional[str] = None
        self.config_data: Dict[str, Any] = {}
        if data is not None:
            self.config_data = dict(data)
        else:
            self._load_config(config_file)

    def _load_config(self, config_file: Optional[str] = None) -> None:
        """Load configuration from the first readable file.

        Args:
            config_file: Path to config file

        Raises:
            ConfigError: If an explicitly requested file cannot be parsed
        """
        potential_config_files = [
            config_file,
            os.environ.get(f"{ENV_PREFIX}CONFIG"),
            os.path.join(os.getcwd(), "camtomo.yaml"),
            os.path.expanduser("~/.camtomo/config.yaml"),
        ]

        for file_path in potential_config_files:
            if file_path and os.path.isfile(file_path):
                try:
                    with open(file_path, "r") as f:
                        loaded = yaml.safe_load(f) or {}
                except yaml.YAMLError as e:
                    if file_path == config_file:
                        raise ConfigError(f"Failed to parse config file {file_path}: {e}")
                    logger.warning("Failed to load config file %s: %s", file_path, e)
                    continue
                if not isinstance(loaded, dict):
                    raise ConfigError(f"Config file {file_path} must contain a mapping")
                self.config_data = loaded
                self.source = file_path
                break
        else:
            if config_file:
                raise ConfigError(f"Config file not found: {config_file}")

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value.

        Args:
            key: Configuration key (dot notation)
            default: Default value if key not found

        Returns:
            Configuration value
        """
        env_key = f"{ENV_PREFIX}{key.replace('.', '_').upper()}"
        if env_key in os.environ:
            return yaml.safe_load(os.environ[env_key])

        parts = key.split(".")
        current: Any = self.config_data
        for part in parts:
            if isinstance(current, dict) and part in current:
                current = current[part]
            else:
                return default

        return current

    def has(self, key: str) -> bool:
        """Check if configuration key exists.

        Args:
            key: Configuration key (dot notation)

        Returns:
            True if key exists, False otherwise
        """
        env_key = f"{ENV_PREFIX}{key.replace('.', '_').upper()}"
        if env_key in os.environ:
            return True

        parts = key.split(".")
        current: Any = self.config_data
        for part in parts:
            if isinstance(current, dict) and part in current:
                current = current[part]
            else:
                return False

        return True

    def set(self, key: str, value: Any) -> None:
        """Set configuration value.

        Args:
            key: Configuration key (dot notation)
            value: Value to set
        """
        parts = key.split(".")
        current = self.config_data

        for part in parts[:-1]:
            if part not in current or not isinstance(current[part], dict):
                current[part] = {}
            current = current[part]

        current[parts[-1]] = value

    def as_dict(self) -> Dict[str, Any]:
        """Return a deep copy of the file data with environment overrides applied to known keys."""
        data = json.loads(canonical_json(self.config_data))
        for key in _dotted_keys(data):
            env_key = f"{ENV_PREFIX}{key.replace('.', '_').upper()}"
            if env_key in os.environ:
                _assign(data, key, yaml.safe_load(os.environ[env_key]))
        return data


def _dotted_keys(data: Dict[str, Any], prefix: str = "") -> list:
    keys = []
    for name, value in data.items():
        dotted = f"{prefix}{name}"
        if isinstance(value, dict):
            keys.extend(_dotted_keys(value, dotted + "."))
        else:
            keys.append(dotted)
    return keys


def _assign(data: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    for part in parts[:-1]:
        data = data[part]
    data[parts[-1]] = value


def _to_builtin(value: Any) -> Any:
    """Convert numpy containers and scalars to plain JSON types."""
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def canonical_json(data: Any) -> str:
    """Serialize data with sorted keys and fixed separators."""
    return json.dumps(_to_builtin(data), sort_keys=True, separators=(",", ":"))


def canonical_hash(data: Any) -> str:
    """SHA-256 of the canonical serialization; stable under key reordering.

    Args:
        data: Any JSON-compatible structure (numpy values allowed)

    Returns:
        Hex digest
    """
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def to_builtin(value: Any) -> Any:
    """Public wrapper used by writers that emit JSON artifacts."""
    return _to_builtin(value)
