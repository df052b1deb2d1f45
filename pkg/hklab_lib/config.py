import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .exceptions import LabValidationError

logger = logging.getLogger(__name__)

PRESETS_PATH = Path(__file__).parent / "presets"
DEFAULTS_FILE = PRESETS_PATH / "defaults.yaml"
THREADS_ENV_VAR = "HKLAB_THREADS"


@dataclass
class SolverConfig:
    epsilon_start: float = 0.1
    epsilon_end: float = 1e-4
    epsilon_stages: int = 7
    max_iterations: int = 20000
    stage_tolerance: float = 1e-10
    gap_tolerance: float = 1e-5
    polish: bool = True
    polish_max_iterations: int = 20000
    exact_fallback_size: int = 16
    dual_cap: float = 50.0
    emd_max_iterations: int = 10_000_000
    cost_exponent_cap: float = 700.0

    def epsilons(self) -> List[float]:
        if self.epsilon_stages <= 1:
            return [self.epsilon_end]
        ratio = (self.epsilon_end / self.epsilon_start) ** (1.0 / (self.epsilon_stages - 1))
        return [self.epsilon_start * ratio**k for k in range(self.epsilon_stages)]


@dataclass
class DictionaryConfig:
    seed: int = 0
    max_anchors: Optional[int] = None
    truncation_fractions: List[float] = field(default_factory=lambda: [0.25, 0.5])
    random_functions: int = 16
    random_lipschitz: float = 1.0
    smoothing_rounds: int = 4


@dataclass
class EstimatorConfig:
    exclusion_threshold: float = 1e-10
    refine_seeds: int = 3
    refine_blocks: int = 16
    refine_sweeps: int = 2
    weak_form: bool = False
    curve_sizes: List[int] = field(default_factory=lambda: [4, 16, 64])


@dataclass
class HarnessConfig:
    trials: int = 1000
    tol: float = 1e-8
    increment_tol: float = 1e-10
    ihi_tol: float = 1e-6
    hkc_rtol: float = 1e-3
    kuwada_rtol: float = 0.02
    p_grid: List[float] = field(default_factory=lambda: [1.25, 1.5, 2.0, 3.0, 5.0])
    kappa_grid: List[float] = field(
        default_factory=lambda: [0.05, 0.1, 0.2, 0.3465736, 0.5, 1.0, 2.0, 4.0]
    )
    whi_log10_scale_range: List[float] = field(default_factory=lambda: [-2.0, 2.0])
    hpi_log10_sharpness_range: List[float] = field(default_factory=lambda: [-1.0, 3.0])
    pairs: int = 20


@dataclass
class DynamicsConfig:
    step: float = 1e-3
    horizon: float = 1.0
    paths: int = 100_000
    chunks: int = 16
    batches: int = 10
    grid_spacing: float = 0.02
    grid_radius: float = 8.0
    divergence_bound: float = 1e6
    stat_tol: float = 0.05
    times: List[float] = field(default_factory=lambda: [0.25, 0.5, 1.0])


@dataclass
class LabConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


_SECTIONS = {
    "solver": SolverConfig,
    "dictionary": DictionaryConfig,
    "estimator": EstimatorConfig,
    "harness": HarnessConfig,
    "dynamics": DynamicsConfig,
}


def _load_yaml(file_path: Path) -> Any:
    """Loads a YAML (or JSON) file from the given path."""
    with open(file_path, "r") as f:
        return yaml.safe_load(f)


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _build_section(name: str, data: Dict[str, Any]):
    cls = _SECTIONS[name]
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise LabValidationError("unknown configuration key", field=f"{name}.{key}")
    defaults = cls()
    values = {}
    for key, f in known.items():
        if key not in data:
            continue
        value = data[key]
        default = getattr(defaults, key)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise LabValidationError(f"expected true/false, got {value!r}", field=f"{name}.{key}")
        elif isinstance(default, int) and value is not None:
            if isinstance(value, bool) or not isinstance(value, int):
                raise LabValidationError(f"expected an integer, got {value!r}", field=f"{name}.{key}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise LabValidationError(f"expected a number, got {value!r}", field=f"{name}.{key}")
            value = float(value)
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise LabValidationError(f"expected a list, got {value!r}", field=f"{name}.{key}")
        values[key] = value
    return cls(**values)


def config_from_dict(data: Dict[str, Any]) -> LabConfig:
    """Builds a LabConfig from a (possibly partial) nested dictionary."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise LabValidationError("configuration must be a mapping", field="config")
    for key in data:
        if key not in _SECTIONS:
            raise LabValidationError("unknown configuration section", field=key)
    sections = {name: _build_section(name, data.get(name) or {}) for name in _SECTIONS}
    return LabConfig(**sections)


def load_lab_config(config_path: Optional[Path] = None) -> LabConfig:
    """
    Loads the packaged defaults and merges an optional user file on top.
    Raises LabValidationError naming the offending field.
    """
    data = _load_yaml(DEFAULTS_FILE) or {}
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.exists():
            raise LabValidationError(f"config file not found: {config_path}", field="config")
        try:
            user_data = _load_yaml(config_path) or {}
        except yaml.YAMLError as e:
            raise LabValidationError(f"invalid YAML/JSON: {e}", field=str(config_path))
        if not isinstance(user_data, dict):
            raise LabValidationError("configuration must be a mapping", field=str(config_path))
        data = _deep_merge(data, user_data)
        logger.debug("Merged user config %s", config_path)
    return config_from_dict(data)


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value first, then HKLAB_THREADS, then 1."""
    if threads is not None:
        if threads < 1:
            raise LabValidationError("thread count must be >= 1", field="threads")
        return threads
    raw = os.environ.get(THREADS_ENV_VAR)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise LabValidationError(f"not an integer: {raw!r}", field=THREADS_ENV_VAR)
    if value < 1:
        raise LabValidationError("thread count must be >= 1", field=THREADS_ENV_VAR)
    return value
