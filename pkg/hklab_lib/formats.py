"""
File formats: space JSON, measure/kernel CSV, JSON reports and manifests,
DecaySeries CSV.

Data files (spaces, measures, kernels, series) use shortest round-trip float
formatting. Reports round numbers to 12 significant digits.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .data_structures import (
    CertifiedValue,
    ConstantEstimate,
    DecaySeries,
    HarnessReport,
    QuasiInvarianceReport,
    RunManifest,
)
from .exceptions import LabValidationError
from .markov import MarkovKernel
from .space import DiscreteMeasure, FiniteMetricSpace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
REPORT_DIGITS = 12
MANIFEST_NAME = "manifest.json"


def _read_text(path: PathLike, field: str) -> str:
    path = Path(path)
    if not path.exists():
        raise LabValidationError(f"file not found: {path}", field=field)
    return path.read_text()


# --- spaces ---
def space_to_dict(space: FiniteMetricSpace) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "points": list(space.labels) if space.labels else list(range(space.n)),
        "dist": space.dist.tolist(),
        "neighbors": [list(nbrs) for nbrs in space.neighbors],
    }
    if space.coords is not None:
        data["coords"] = space.coords.tolist()
    return data


def space_from_dict(data: Dict[str, Any]) -> FiniteMetricSpace:
    if not isinstance(data, dict):
        raise LabValidationError("space file must hold a JSON object", field="space")
    labels = None
    if "points" in data:
        if not isinstance(data["points"], list):
            raise LabValidationError("points must be a list of labels", field="points")
        labels = [str(p) for p in data["points"]]
    if "dist" in data:
        neighbors = data.get("neighbors")
        coords = data.get("coords")
        if coords is None:
            return FiniteMetricSpace.from_matrix(data["dist"], neighbors, labels)
        if neighbors is None:
            raise LabValidationError("a distance matrix with coordinates needs neighbours", field="neighbors")
        return FiniteMetricSpace(data["dist"], neighbors, tuple(labels or ()), coords)
    if "coords" in data:
        metric = data.get("metric", "euclidean")
        if metric != "euclidean":
            raise LabValidationError(f"unsupported metric {metric!r}", field="metric")
        return FiniteMetricSpace.from_coords(data["coords"], data.get("neighbor_radius"), labels)
    raise LabValidationError("space file needs 'dist' or 'coords'", field="space")


def write_space(space: FiniteMetricSpace, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(space_to_dict(space)) + "\n")
    return path


def read_space(path: PathLike) -> FiniteMetricSpace:
    try:
        data = json.loads(_read_text(path, "space"))
    except json.JSONDecodeError as e:
        raise LabValidationError(f"invalid JSON in {path}: {e}", field="space")
    return space_from_dict(data)


# --- measures and kernels ---
def write_values(values, path: PathLike) -> Path:
    """One value per line; witness functions use the same layout as measures."""
    path = Path(path)
    path.write_text("".join(f"{float(v)!r}\n" for v in np.asarray(values, dtype=float).ravel()))
    return path


def write_measure(measure: DiscreteMeasure, path: PathLike) -> Path:
    return write_values(measure.weights, path)


def read_values(path: PathLike) -> np.ndarray:
    text = _read_text(path, "measure")
    try:
        return np.array([float(line) for line in text.splitlines() if line.strip()], dtype=float)
    except ValueError as e:
        raise LabValidationError(f"non-numeric entry in {path}: {e}", field="measure")


def read_measure(path: PathLike, space: Optional[FiniteMetricSpace] = None) -> DiscreteMeasure:
    weights = read_values(path)
    if space is not None and weights.size != space.n:
        raise LabValidationError(f"{path} has {weights.size} weights, space has {space.n} points", field="dimension")
    return DiscreteMeasure(weights)


def write_kernel(kernel: MarkovKernel, path: PathLike) -> Path:
    path = Path(path)
    lines = [",".join(repr(float(v)) for v in row) for row in kernel.matrix]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_kernel(path: PathLike, space: Optional[FiniteMetricSpace] = None) -> MarkovKernel:
    text = _read_text(path, "kernel")
    try:
        rows = [[float(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
    except ValueError as e:
        raise LabValidationError(f"non-numeric entry in {path}: {e}", field="kernel")
    if not rows or len({len(r) for r in rows}) != 1:
        raise LabValidationError(f"{path} is not a rectangular table", field="kernel")
    kernel = MarkovKernel(np.array(rows))
    if space is not None and kernel.n != space.n:
        raise LabValidationError(f"kernel has {kernel.n} states, space has {space.n} points", field="dimension")
    return kernel


# --- reports ---
def to_plain(obj: Any, digits: Optional[int] = REPORT_DIGITS) -> Any:
    """JSON-ready copy: numpy scalars and arrays unwrapped, floats rounded."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_plain({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.repr}, digits)
    if isinstance(obj, dict):
        return {str(k): to_plain(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if digits is None or not np.isfinite(value):
            return value
        return float(f"{value:.{digits}g}")
    return obj


def harness_report_to_dict(report: HarnessReport) -> Dict[str, Any]:
    data = to_plain(report)
    data["pass"] = data.pop("passed")
    return data


def harness_report_from_dict(data: Dict[str, Any]) -> HarnessReport:
    return HarnessReport(
        id=data["id"],
        trials=int(data["trials"]),
        tol=float(data["tol"]),
        max_violation=float(data["max_violation"]),
        worst_case=dict(data.get("worst_case", {})),
        passed=bool(data["pass"]),
        skipped=int(data.get("skipped", 0)),
        notes=list(data.get("notes", [])),
    )


def estimate_to_dict(estimate: ConstantEstimate) -> Dict[str, Any]:
    return to_plain(estimate)


def estimate_from_dict(data: Dict[str, Any]) -> ConstantEstimate:
    witness = data.get("witness_function")
    return ConstantEstimate(
        name=data["name"],
        value=data.get("value"),
        witness_function=None if witness is None else tuple(witness),
        witness_point=data.get("witness_point"),
        excluded_count=int(data.get("excluded_count", 0)),
        evaluated_count=int(data.get("evaluated_count", 0)),
        curve=[tuple(point) for point in data.get("curve", [])],
    )


def certified_to_dict(value: CertifiedValue) -> Dict[str, Any]:
    """Interval with both certificates inline; certificate arrays keep full precision."""
    return {
        "lower": to_plain(value.lower),
        "upper": to_plain(value.upper),
        "lower_certificate": to_plain(value.lower_certificate, digits=None),
        "upper_certificate": to_plain(value.upper_certificate, digits=None),
    }


def certified_from_dict(data: Dict[str, Any]) -> CertifiedValue:
    return CertifiedValue(
        lower=float(data["lower"]),
        upper=float(data["upper"]),
        lower_certificate=dict(data.get("lower_certificate", {})),
        upper_certificate=dict(data.get("upper_certificate", {})),
    )


def quasi_report_to_dict(report: QuasiInvarianceReport) -> Dict[str, Any]:
    data = to_plain(report)
    data["pass"] = data.pop("passed")
    return data


def write_json(data: Dict[str, Any], path: PathLike, manifest: bool = True) -> Path:
    """Writes a report; reports point back at the run's manifest."""
    path = Path(path)
    if manifest:
        data = {**data, "manifest": MANIFEST_NAME}
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        return json.loads(_read_text(path, "report"))
    except json.JSONDecodeError as e:
        raise LabValidationError(f"invalid JSON in {path}: {e}", field="report")


# --- decay series ---
SERIES_COLUMNS = ("time", "value", "stderr", "envelope")


def write_series(series: DecaySeries, path: PathLike) -> Path:
    path = Path(path)
    lines = [
        f"# manifest: {MANIFEST_NAME}",
        f"# metric: {series.metric}",
        f"# stat_tol: {series.stat_tol!r}",
        f"# passed: {str(series.passed).lower()}",
    ]
    lines += [f"# note: {note}" for note in series.notes]
    lines.append(",".join(SERIES_COLUMNS))
    for row in zip(series.times, series.values, series.stderr, series.envelope):
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_series(path: PathLike) -> DecaySeries:
    header: Dict[str, str] = {}
    notes: List[str] = []
    rows: List[List[float]] = []
    for line in _read_text(path, "series").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            if key == "note":
                notes.append(value)
            else:
                header[key] = value
        elif line.strip() and line.strip() != ",".join(SERIES_COLUMNS):
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as e:
                raise LabValidationError(f"non-numeric entry in {path}: {e}", field="series")
    columns = list(zip(*rows)) if rows else [(), (), (), ()]
    return DecaySeries(
        metric=header.get("metric", ""),
        times=columns[0],
        values=columns[1],
        stderr=columns[2],
        envelope=columns[3],
        stat_tol=float(header.get("stat_tol", 0.0)),
        passed=header.get("passed", "true") == "true",
        notes=notes,
    )


# --- manifests ---
def file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_to_dict(manifest: RunManifest) -> Dict[str, Any]:
    return to_plain(manifest, digits=None)


def manifest_from_dict(data: Dict[str, Any]) -> RunManifest:
    return RunManifest(
        command=data["command"],
        config=dict(data["config"]),
        inputs=dict(data.get("inputs", {})),
        seed=int(data.get("seed", 0)),
        version=str(data.get("version", "")),
        wall_clock=float(data.get("wall_clock", 0.0)),
        outputs=list(data.get("outputs", [])),
    )


def write_manifest(manifest: RunManifest, out_dir: PathLike) -> Path:
    return write_json(manifest_to_dict(manifest), Path(out_dir) / MANIFEST_NAME, manifest=False)
