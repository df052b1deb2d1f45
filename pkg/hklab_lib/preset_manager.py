"""
Preset management utilities for discovering, validating, and creating experiment presets.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .config import DEFAULTS_FILE, PRESETS_PATH, LabConfig
from .data_structures import ValidationResult
from .exceptions import LabValidationError
from .experiments import EXPERIMENTS, ExperimentSpec, experiment_from_dict

logger = logging.getLogger(__name__)

KNOWN_KEYS = {
    "title", "description", "experiment", "seed", "potential", "dynamics", "times",
    "nu0", "nu1", "start", "t", "shift", "p_grid", "kappas", "rate", "tags", "version",
}


@dataclass
class PresetInfo:
    """Metadata about a preset for listings."""
    id: str
    title: str
    description: str
    experiment: str
    tags: List[str]
    version: str


def _load_yaml(path: Path) -> Any:
    with open(path, "r") as f:
        return yaml.safe_load(f)


class PresetManager:
    """Manages preset discovery, validation, and templates."""

    def __init__(self, presets_path: Path = PRESETS_PATH):
        self.presets_path = Path(presets_path)

    def _preset_files(self) -> List[Path]:
        return sorted(p for p in self.presets_path.glob("*.yaml") if p.resolve() != DEFAULTS_FILE.resolve())

    def preset_file(self, preset_id: str) -> Path:
        return self.presets_path / f"{preset_id}.yaml"

    def discover_presets(self) -> List[PresetInfo]:
        """Every *.yaml in the presets directory except the defaults."""
        presets = []
        for preset_file in self._preset_files():
            try:
                data = _load_yaml(preset_file) or {}
            except yaml.YAMLError as e:
                logger.warning("Could not load preset %s: %s", preset_file, e)
                continue
            if not isinstance(data, dict):
                logger.warning("Preset %s is not a mapping", preset_file)
                continue
            presets.append(PresetInfo(
                id=preset_file.stem,
                title=data.get("title", preset_file.stem),
                description=" ".join(str(data.get("description", "No description available.")).split()),
                experiment=data.get("experiment", "?"),
                tags=data.get("tags", []),
                version=str(data.get("version", "1.0")),
            ))
        return sorted(presets, key=lambda p: p.id)

    def load_preset(self, preset_id: str, base: Optional[LabConfig] = None) -> ExperimentSpec:
        preset_file = self.preset_file(preset_id)
        if not preset_file.exists():
            names = ", ".join(p.id for p in self.discover_presets())
            raise LabValidationError(f"unknown preset {preset_id!r} (available: {names})", field="preset")
        try:
            data = _load_yaml(preset_file)
        except yaml.YAMLError as e:
            raise LabValidationError(f"invalid YAML in {preset_file}: {e}", field="preset")
        return experiment_from_dict(data, base)

    def validate_preset(self, preset_id: str) -> ValidationResult:
        errors: List[str] = []
        warnings: List[str] = []
        preset_file = self.preset_file(preset_id)
        if not preset_file.exists():
            errors.append(f"Preset file not found: {preset_file}")
            return ValidationResult(False, errors, warnings)
        try:
            data = _load_yaml(preset_file)
        except yaml.YAMLError as e:
            errors.append(f"Invalid YAML in preset file: {e}")
            return ValidationResult(False, errors, warnings)
        if not isinstance(data, dict):
            errors.append("Preset file must contain a mapping")
            return ValidationResult(False, errors, warnings)

        for key in sorted(set(data) - KNOWN_KEYS):
            warnings.append(f"Unknown key ignored: {key}")
        for key in ("title", "description"):
            if key not in data:
                warnings.append(f"Missing '{key}' field")
        try:
            spec = experiment_from_dict(data)
        except LabValidationError as e:
            errors.append(str(e))
            return ValidationResult(False, errors, warnings)

        if spec.experiment != "quasi" and spec.dynamics.paths < 10_000:
            warnings.append(f"Only {spec.dynamics.paths} paths; Monte-Carlo error may dominate the envelope")
        if spec.experiment == "hedecay" and spec.potential.get("kind") == "quartic":
            warnings.append("Quartic drift is checked inside its reflecting box only")
        return ValidationResult(len(errors) == 0, errors, warnings)

    def create_preset_template(self, preset_id: str, title: str, experiment: str = "w2decay") -> Path:
        """Writes a new preset file and returns its path."""
        if experiment not in EXPERIMENTS:
            raise LabValidationError(f"experiment must be one of {', '.join(EXPERIMENTS)}", field="experiment")
        preset_file = self.preset_file(preset_id)
        if preset_file.exists():
            raise LabValidationError(f"preset already exists: {preset_file}", field="preset")
        data: Dict[str, Any] = {
            "title": title,
            "description": f"New {experiment} experiment: {title}",
            "experiment": experiment,
            "seed": 0,
        }
        if experiment == "quasi":
            data.update({"t": 0.5, "shift": 1.0, "dynamics": {"grid_spacing": 0.01, "grid_radius": 12.0}})
        else:
            data["potential"] = {"kind": "quadratic", "a": 1.0}
            if experiment == "w2decay":
                data.update({"nu0": 0.0, "nu1": 1.0})
            else:
                data["start"] = 1.0
            data.update({"times": [0.25, 0.5, 1.0], "dynamics": {"step": 1.0e-3, "paths": 100000}})
        data.update({"tags": [experiment], "version": "1.0"})
        with open(preset_file, "w") as f:
            yaml.dump(data, f, default_flow_style=False, sort_keys=False)
        logger.info("Created preset template %s", preset_file)
        return preset_file

    def get_preset_info(self, preset_id: str) -> Optional[PresetInfo]:
        for preset in self.discover_presets():
            if preset.id == preset_id:
                return preset
        return None
