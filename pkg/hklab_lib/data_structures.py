from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import LabValidationError


@dataclass
class ValidationResult:
    """Result of validating a configuration or preset."""
    is_valid: bool
    errors: List[str]
    warnings: List[str]


@dataclass
class LETSolution:
    """Optimal plan of the logarithmic entropy transport program.

    ``value`` is the LET objective evaluated at ``coupling``; ``dual_value`` is
    a feasible dual objective, so ``value - dual_value`` bounds the error.
    """
    value: float
    coupling: np.ndarray = field(repr=False)
    marginal0: np.ndarray = field(repr=False)
    marginal1: np.ndarray = field(repr=False)
    dual_value: float = 0.0
    iterations: int = 0
    epsilon_schedule: List[float] = field(default_factory=list)
    stage_values: List[float] = field(default_factory=list)
    extrapolated_value: Optional[float] = None
    primal_residual: float = 0.0
    polished: bool = False
    trusted: bool = True

    @property
    def gap(self) -> float:
        return max(self.value - self.dual_value, 0.0)

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "gap": self.gap,
            "dual_value": self.dual_value,
            "iterations": self.iterations,
            "epsilon_schedule": list(self.epsilon_schedule),
            "stage_values": list(self.stage_values),
            "extrapolated_value": self.extrapolated_value,
            "primal_residual": self.primal_residual,
            "polished": self.polished,
            "trusted": self.trusted,
        }


@dataclass
class WResult:
    """A W_{a,b} evaluation together with the route that produced it."""
    value: float
    method: str
    gap: float = 0.0
    trusted: bool = True
    solution: Optional[LETSolution] = field(default=None, repr=False, compare=False)


@dataclass
class ConstantEstimate:
    """Dictionary supremum of a functional-inequality ratio.

    ``value`` is ``None`` when every denominator was excluded.
    """
    name: str
    value: Optional[float]
    witness_function: Optional[Tuple[float, ...]] = None
    witness_point: Optional[int] = None
    excluded_count: int = 0
    evaluated_count: int = 0
    curve: List[Tuple[int, Optional[float]]] = field(default_factory=list)

    def __post_init__(self):
        if self.witness_function is not None:
            self.witness_function = tuple(float(v) for v in self.witness_function)
        self.curve = [(int(s), None if v is None else float(v)) for s, v in self.curve]

    @property
    def absent(self) -> bool:
        return self.value is None


@dataclass
class HarnessReport:
    """Outcome of one inequality harness."""
    id: str
    trials: int
    tol: float
    max_violation: float
    worst_case: Dict[str, Any] = field(default_factory=dict)
    passed: bool = True
    skipped: int = 0
    notes: List[str] = field(default_factory=list)


@dataclass
class ChainRuleReport:
    residuals: np.ndarray = field(repr=False)
    max_residual: float
    tol: float
    passed: bool


@dataclass
class FeasibilityReport:
    """Pointwise check of the defining differential inequality of T_{a,b}."""
    max_violation: float
    worst_point: Optional[int]
    worst_time: Optional[float]
    blowup: bool
    admissible: bool
    tol: float
    feasible: bool


@dataclass
class RenyiResult:
    value: float
    order: float
    tilde: float
    density: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


@dataclass
class CertifiedValue:
    """Two-sided enclosure of T_{a,b}: ``lower <= T <= upper``."""
    lower: float
    upper: float
    lower_certificate: Dict[str, Any] = field(default_factory=dict)
    upper_certificate: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper * (1.0 + 1e-12):
            raise LabValidationError(
                f"certified interval is empty: lower {self.lower} > upper {self.upper}",
                field="lower<=upper",
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class DecaySeries:
    """Distance to a reference along a simulated semigroup, with envelope."""
    metric: str
    times: Tuple[float, ...]
    values: Tuple[float, ...]
    stderr: Tuple[float, ...]
    envelope: Tuple[float, ...]
    stat_tol: float = 0.0
    passed: bool = True
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.times = tuple(float(t) for t in self.times)
        self.values = tuple(float(v) for v in self.values)
        self.stderr = tuple(float(s) for s in self.stderr)
        self.envelope = tuple(float(e) for e in self.envelope)
        if not (len(self.times) == len(self.values) == len(self.stderr) == len(self.envelope)):
            raise LabValidationError("series columns differ in length", field="DecaySeries")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise LabValidationError("times must be strictly increasing", field="DecaySeries.times")
        if any(s < 0 for s in self.stderr):
            raise LabValidationError("standard errors must be nonnegative", field="DecaySeries.stderr")


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    inputs: Dict[str, str] = field(default_factory=dict)
    seed: int = 0
    version: str = ""
    wall_clock: float = 0.0
    outputs: List[str] = field(default_factory=list)


@dataclass
class QuasiInvarianceReport:
    """Grid-versus-closed-form checks for a Gaussian kernel and its translate."""
    t: float
    shift: float
    checks: List[Dict[str, Any]] = field(default_factory=list)
    subdivision: List[Dict[str, Any]] = field(default_factory=list)
    vacuous: bool = False
    passed: bool = True
    notes: List[str] = field(default_factory=list)
