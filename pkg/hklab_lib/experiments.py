"""
Experiment descriptions for `hklab simulate` and the code that runs them.

An experiment file (YAML or JSON) names one of w2decay, hedecay or quasi,
a potential for the Langevin experiments, and optional overrides of the
`dynamics` configuration section.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .config import DynamicsConfig, LabConfig, config_from_dict
from .data_structures import DecaySeries, QuasiInvarianceReport
from .dynamics import (
    LangevinConfig,
    gaussian_quasi_invariance,
    hellinger_decay_experiment,
    potential_from_dict,
    w2_decay_experiment,
)
from .exceptions import LabValidationError
from .space import DiscreteMeasure, FiniteMetricSpace

logger = logging.getLogger(__name__)

EXPERIMENTS = ("w2decay", "hedecay", "quasi")

PointMass = Union[float, Dict[str, List[float]]]


@dataclass
class ExperimentSpec:
    experiment: str
    title: str = ""
    description: str = ""
    seed: int = 0
    potential: Dict[str, Any] = field(default_factory=dict)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    times: List[float] = field(default_factory=list)
    nu0: PointMass = 0.0
    nu1: PointMass = 1.0
    start: float = 1.0
    t: float = 0.5
    shift: float = 1.0
    p_grid: Optional[List[float]] = None
    kappas: Optional[List[float]] = None
    rate: Optional[float] = None


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    passed: bool
    series: Optional[DecaySeries] = None
    quasi: Optional[QuasiInvarianceReport] = None


def _number(data: Dict[str, Any], key: str, default: Any) -> Any:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise LabValidationError(f"expected a number, got {value!r}", field=key)
    return float(value)


def _numbers(data: Dict[str, Any], key: str) -> Optional[List[float]]:
    value = data.get(key)
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise LabValidationError(f"expected a list of numbers, got {value!r}", field=key)
    return [float(v) for v in value]


def experiment_from_dict(data: Dict[str, Any], base: Optional[LabConfig] = None) -> ExperimentSpec:
    """Validates an experiment mapping; messages name the offending field."""
    if not isinstance(data, dict):
        raise LabValidationError("experiment file must hold a mapping", field="experiment")
    experiment = data.get("experiment")
    if experiment not in EXPERIMENTS:
        raise LabValidationError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {experiment!r}", field="experiment")
    base = base or LabConfig()
    overrides = data.get("dynamics") or {}
    if not isinstance(overrides, dict):
        raise LabValidationError("dynamics must be a mapping", field="dynamics")
    dynamics = config_from_dict({"dynamics": {**dataclasses.asdict(base.dynamics), **overrides}}).dynamics
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise LabValidationError(f"seed must be an integer, got {seed!r}", field="seed")
    spec = ExperimentSpec(
        experiment=experiment,
        title=str(data.get("title", experiment)),
        description=str(data.get("description", "")),
        seed=seed,
        dynamics=dynamics,
        times=_numbers(data, "times") or list(dynamics.times),
        p_grid=_numbers(data, "p_grid"),
        kappas=_numbers(data, "kappas"),
    )
    if experiment == "quasi":
        spec.t = _number(data, "t", spec.t)
        spec.shift = _number(data, "shift", spec.shift)
        return spec
    potential = data.get("potential")
    if potential is None:
        raise LabValidationError("Langevin experiments need a potential", field="potential")
    potential_from_dict(potential)
    spec.potential = dict(potential)
    spec.rate = _number(data, "rate", None)
    if experiment == "w2decay":
        spec.nu0 = data.get("nu0", spec.nu0)
        spec.nu1 = data.get("nu1", spec.nu1)
        for key in ("nu0", "nu1"):
            _point_mass(getattr(spec, key), key)
    else:
        spec.start = _number(data, "start", spec.start)
    return spec


def _point_mass(value: PointMass, key: str):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)], [1.0]
    if isinstance(value, dict) and "points" in value:
        points = [float(p) for p in value["points"]]
        weights = [float(w) for w in value.get("weights", [1.0 / len(points)] * len(points))]
        if len(points) != len(weights) or not points:
            raise LabValidationError("points and weights differ in length", field=key)
        return points, weights
    raise LabValidationError(f"expected a point or {{points, weights}}, got {value!r}", field=key)


def _grid_measure(grid: FiniteMetricSpace, value: PointMass, key: str) -> DiscreteMeasure:
    points, weights = _point_mass(value, key)
    nodes = grid.nodes()
    masses = np.zeros(grid.n)
    for point, weight in zip(points, weights):
        index = int(np.argmin(np.abs(nodes - point)))
        if abs(nodes[index] - point) > 1e-9 * max(1.0, abs(point)):
            raise LabValidationError(f"point {point} is not a grid node", field=key)
        masses[index] += weight
    return DiscreteMeasure(masses / masses.sum())


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    dynamics = spec.dynamics
    grid = FiniteMetricSpace.grid(dynamics.grid_spacing, dynamics.grid_radius)
    logger.info("Running %s on a grid of %d points", spec.experiment, grid.n)
    if spec.experiment == "quasi":
        report = gaussian_quasi_invariance(spec.t, spec.shift, grid, kappas=spec.kappas, p_grid=spec.p_grid)
        return ExperimentResult(spec, report.passed, quasi=report)
    config = LangevinConfig.from_dynamics(potential_from_dict(spec.potential), dynamics, seed=spec.seed, horizon=max(spec.times))
    if spec.experiment == "w2decay":
        nu0 = _grid_measure(grid, spec.nu0, "nu0")
        nu1 = _grid_measure(grid, spec.nu1, "nu1")
        series = w2_decay_experiment(config, nu0, nu1, grid, spec.times, rate=spec.rate, threads=threads)
    else:
        series = hellinger_decay_experiment(config, spec.start, grid, spec.times, threads=threads)
    return ExperimentResult(spec, series.passed, series=series)
