"""Preset management for camtomo."""

import json
import logging
import os
from typing import Any, Dict, List, Optional

import yaml

from camtomo.utils.config import Config
from camtomo.utils.errors import ConfigError

logger = logging.getLogger(__name__)


class PresetManager:
    """Manage experiment presets.

    Presets are named YAML experiment configurations (geometry, grids,
    schedule, phantom). Local presets shadow user presets, which shadow the
    presets shipped with the package.
    """

    def __init__(self, config: Optional[Config] = None):
        """Initialize preset manager.

        Args:
            config: Configuration object (``presets.path`` adds a search directory)
        """
        self.config = config
        self._preset_dirs = self._get_preset_dirs()

    def _get_preset_dirs(self) -> List[str]:
        """Get preset directories in order of precedence.

        Returns:
            List of preset directory paths
        """
        preset_dirs = []

        if self.config is not None and self.config.has("presets.path"):
            extra = os.path.expanduser(str(self.config.get("presets.path")))
            if os.path.isdir(extra):
                preset_dirs.append(extra)

        cwd_presets = os.path.join(os.getcwd(), ".camtomo", "presets")
        if os.path.isdir(cwd_presets):
            preset_dirs.append(cwd_presets)

        home_presets = os.path.expanduser("~/.camtomo/presets")
        if os.path.isdir(home_presets):
            preset_dirs.append(home_presets)

        pkg_presets = os.path.join(os.path.dirname(__file__), "..", "presets")
        if os.path.isdir(pkg_presets):
            preset_dirs.append(pkg_presets)

        return preset_dirs

    def get_preset(self, preset_name: str, preset_type: str = "experiment") -> Optional[Dict[str, Any]]:
        """Get a preset by name and type.

        Args:
            preset_name: Name of the preset
            preset_type: Type of preset (only ``experiment`` ships with the package)

        Returns:
            Preset data as dictionary or None if not found
        """
        for preset_dir in self._preset_dirs:
            preset_path = os.path.join(preset_dir, preset_type, f"{preset_name}.yaml")

            if os.path.isfile(preset_path):
                try:
                    with open(preset_path, "r") as f:
                        return yaml.safe_load(f)
                except yaml.YAMLError as e:
                    logger.warning("Failed to load preset %s: %s", preset_path, e)

        return None

    def list_presets(self, preset_type: Optional[str] = None) -> Dict[str, List[str]]:
        """List available presets.

        Args:
            preset_type: Optional filter by preset type

        Returns:
            Dictionary with preset types as keys and lists of preset names as values
        """
        presets: Dict[str, List[str]] = {}

        for preset_dir in self._preset_dirs:
            type_names = [preset_type] if preset_type else sorted(os.listdir(preset_dir))
            for type_name in type_names:
                type_path = os.path.join(preset_dir, type_name)
                if not os.path.isdir(type_path):
                    continue
                names = presets.setdefault(type_name, [])
                for name in self._list_presets_in_dir(type_path):
                    if name not in names:
                        names.append(name)

        return presets

    def _list_presets_in_dir(self, directory: str) -> List[str]:
        """List preset names (without extension) in a directory."""
        return sorted(
            os.path.splitext(filename)[0]
            for filename in os.listdir(directory)
            if filename.endswith((".yaml", ".yml"))
        )

    def create_preset(
        self,
        preset_name: str,
        preset_data: Dict[str, Any],
        preset_type: str = "experiment",
        global_preset: bool = False,
    ) -> str:
        """Create a new preset.

        Args:
            preset_name: Name for the preset
            preset_data: Preset data
            preset_type: Type of preset
            global_preset: If True, save to the user's home directory instead of the working directory

        Returns:
            Path to created preset file
        """
        if global_preset:
            base_dir = os.path.expanduser("~/.camtomo/presets")
        else:
            base_dir = os.path.join(os.getcwd(), ".camtomo", "presets")

        preset_dir = os.path.join(base_dir, preset_type)
        os.makedirs(preset_dir, exist_ok=True)

        preset_path = os.path.join(preset_dir, f"{preset_name}.yaml")
        with open(preset_path, "w") as f:
            yaml.safe_dump(preset_data, f, default_flow_style=False, sort_keys=True)

        return preset_path

    def apply_preset(
        self,
        preset_name: str,
        preset_type: str = "experiment",
        override_values: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        """Load a preset and deep-merge override values into it.

        Args:
            preset_name: Name of the preset
            preset_type: Type of preset
            override_values: Optional values to override in the preset

        Returns:
            Preset data with overrides applied

        Raises:
            ConfigError: If preset is not found
        """
        preset = self.get_preset(preset_name, preset_type)

        if not preset:
            raise ConfigError(f"Preset '{preset_name}' of type '{preset_type}' not found")

        result = json.loads(json.dumps(preset))
        if override_values:
            deep_update(result, override_values)

        return result

    def export_preset(self, preset_name: str, output_path: str, preset_type: str = "experiment") -> None:
        """Export a preset to a file (JSON if the path ends in .json, YAML otherwise).

        Raises:
            ConfigError: If preset is not found
        """
        preset = self.get_preset(preset_name, preset_type)

        if not preset:
            raise ConfigError(f"Preset '{preset_name}' of type '{preset_type}' not found")

        with open(output_path, "w") as f:
            if output_path.endswith(".json"):
                json.dump(preset, f, indent=2, sort_keys=True)
            else:
                yaml.safe_dump(preset, f, default_flow_style=False, sort_keys=True)

    def import_preset(
        self,
        input_path: str,
        preset_name: str,
        preset_type: str = "experiment",
        global_preset: bool = False,
    ) -> str:
        """Import a preset from a YAML or JSON file.

        Returns:
            Path to imported preset file

        Raises:
            ConfigError: If the preset file is invalid
        """
        try:
            with open(input_path, "r") as f:
                if input_path.endswith(".json"):
                    preset_data = json.load(f)
                else:
                    preset_data = yaml.safe_load(f)
        except (OSError, ValueError, yaml.YAMLError) as e:
            raise ConfigError(f"Failed to read preset file: {e}")

        if not isinstance(preset_data, dict):
            raise ConfigError("Preset data must be an object/dictionary")

        return self.create_preset(
            preset_name=preset_name,
            preset_data=preset_data,
            preset_type=preset_type,
            global_preset=global_preset,
        )


def deep_update(original: Dict[str, Any], update: Dict[str, Any]) -> None:
    """Deep update a dictionary in place with values from another.

    Args:
        original: Dictionary to update
        update: Dictionary with values to apply
    """
    for key, value in update.items():
        if key in original and isinstance(original[key], dict) and isinstance(value, dict):
            deep_update(original[key], value)
        else:
            original[key] = value
