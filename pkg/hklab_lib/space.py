"""
Finite metric measure spaces, the neighbour-graph gradient, and Lipschitz
test-function dictionaries.

Every other module computes on a ``FiniteMetricSpace``: a dense distance matrix
(the ground truth, never completed by shortest paths) plus a neighbour graph
that defines the discrete gradient

    |grad f|(i) = max_{j ~ i} |f(i) - f(j)| / d(i, j).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .config import DictionaryConfig
from .data_structures import ChainRuleReport
from .exceptions import LabValidationError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
EXHAUSTIVE_TRIANGLE_LIMIT = 512
SAMPLED_TRIANGLE_TRIPLES = 200_000

PROVENANCE_TAGS = (
    "constant",
    "distance-to-point",
    "coordinate",
    "random-smoothed",
    "user-supplied",
)


def _float_array(values, field: str) -> np.ndarray:
    try:
        return np.array(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise LabValidationError(f"expected a numeric array: {e}", field=field) from e


def _neighbor_lists(neighbors) -> Tuple[Tuple[int, ...], ...]:
    try:
        return tuple(tuple(int(j) for j in nbrs) for nbrs in neighbors)
    except (TypeError, ValueError) as e:
        raise LabValidationError(f"neighbour lists must hold point indices: {e}", field="neighbors") from e


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Point set with a full distance matrix and a neighbour graph."""
    dist: np.ndarray
    neighbors: Tuple[Tuple[int, ...], ...]
    labels: Tuple[str, ...] = ()
    coords: Optional[np.ndarray] = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        dist = _float_array(self.dist, "dist")
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] == 0:
            raise LabValidationError(f"distance matrix must be square and non-empty, got shape {dist.shape}", field="dist")
        n = dist.shape[0]
        raw_neighbors = _neighbor_lists(self.neighbors)
        if len(raw_neighbors) != n:
            raise LabValidationError(f"expected {n} neighbour lists, got {len(raw_neighbors)}", field="neighbors")
        neighbors = []
        for i, nbrs in enumerate(raw_neighbors):
            cleaned = tuple(sorted(set(nbrs)))
            if any(j < 0 or j >= n for j in cleaned):
                raise LabValidationError(f"point {i} has an out-of-range neighbour", field="neighbors")
            if i in cleaned:
                raise LabValidationError(f"point {i} lists itself as a neighbour", field="neighbors")
            neighbors.append(cleaned)
        labels = tuple(str(label) for label in self.labels) if self.labels else tuple(str(i) for i in range(n))
        if len(labels) != n:
            raise LabValidationError(f"expected {n} labels, got {len(labels)}", field="points")
        coords = None
        if self.coords is not None:
            coords = _float_array(self.coords, "coords")
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != n:
                raise LabValidationError("coordinate rows must match the point count", field="coords")
            coords.setflags(write=False)
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "neighbors", tuple(neighbors))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "coords", coords)
        self._check_metric()
        self._check_graph()

    # --- invariants ---
    def _check_metric(self):
        d, tol = self.dist, self.tol
        if not np.all(np.isfinite(d)):
            raise LabValidationError("distances must be finite", field="dist")
        if np.any(np.abs(np.diag(d)) > tol):
            raise LabValidationError("dist[i][i] must be 0", field="dist")
        if np.any(np.abs(d - d.T) > tol):
            raise LabValidationError("dist must be symmetric", field="dist")
        off = ~np.eye(self.n, dtype=bool)
        if np.any(d[off] <= 0):
            raise LabValidationError("dist[i][j] must be > 0 for i != j", field="dist")
        if self.n <= EXHAUSTIVE_TRIANGLE_LIMIT:
            for k in range(self.n):
                through_k = d[:, k][:, None] + d[k, :][None, :]
                if np.any(d > through_k + tol):
                    raise LabValidationError(f"triangle inequality fails through point {k}", field="dist")
        else:
            rng = np.random.default_rng(0)
            i, j, k = rng.integers(0, self.n, size=(3, SAMPLED_TRIANGLE_TRIPLES))
            if np.any(d[i, k] > d[i, j] + d[j, k] + tol):
                raise LabValidationError("triangle inequality fails on a sampled triple", field="dist")
            logger.debug("Triangle inequality checked on %d sampled triples (n=%d)", SAMPLED_TRIANGLE_TRIPLES, self.n)

    def _check_graph(self):
        if self.n == 1:
            return
        i, j, _ = self.edges
        if len(i) == 0:
            raise LabValidationError("neighbour graph has no edges", field="neighbors")
        adjacency = coo_matrix((np.ones(len(i)), (i, j)), shape=(self.n, self.n))
        count, _ = connected_components(adjacency, directed=True, connection="weak")
        if count != 1:
            raise LabValidationError(f"neighbour graph is not connected ({count} components)", field="neighbors")

    # --- derived structure ---
    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @cached_property
    def edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed edge arrays (i, j, d(i, j)) of the neighbour graph."""
        i = np.array([a for a, nbrs in enumerate(self.neighbors) for _ in nbrs], dtype=int)
        j = np.array([b for nbrs in self.neighbors for b in nbrs], dtype=int)
        return i, j, self.dist[i, j] if len(i) else np.zeros(0)

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max())

    @cached_property
    def max_edge_length(self) -> float:
        _, _, lengths = self.edges
        return float(lengths.max()) if len(lengths) else 0.0

    def lattice_spacing(self, rtol: float = 1e-9) -> Optional[float]:
        """Spacing h if the points form a uniform 1-D lattice in order, else None."""
        if self.coords is None or self.coords.shape[1] != 1 or self.n < 2:
            return None
        steps = np.diff(self.coords[:, 0])
        h = steps[0]
        if h <= 0 or np.any(np.abs(steps - h) > rtol * abs(h)):
            return None
        return float(h)

    def nodes(self) -> np.ndarray:
        """1-D coordinates of the points."""
        if self.coords is None or self.coords.shape[1] != 1:
            raise LabValidationError("space has no 1-D coordinates", field="coords")
        return self.coords[:, 0]

    def interior(self, margin: float) -> np.ndarray:
        """Indices of 1-D points at distance >= margin from both ends of the hull."""
        x = self.nodes()
        keep = (x >= x.min() + margin) & (x <= x.max() - margin)
        if not np.any(keep):
            raise LabValidationError(f"no point lies {margin} inside the hull", field="margin")
        return np.flatnonzero(keep)

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        """Same points and neighbours with every distance multiplied by ``factor``."""
        if not factor > 0:
            raise LabValidationError(f"scale factor must be > 0, got {factor}", field="factor")
        coords = None if self.coords is None else self.coords * factor
        return FiniteMetricSpace(self.dist * factor, self.neighbors, self.labels, coords, self.tol)

    # --- constructors ---
    @classmethod
    def from_matrix(
        cls,
        dist: Sequence[Sequence[float]],
        neighbors: Optional[Sequence[Sequence[int]]] = None,
        labels: Optional[Sequence[str]] = None,
        tol: float = DEFAULT_TOL,
    ) -> "FiniteMetricSpace":
        """Without explicit neighbours every pair is adjacent."""
        dist = _float_array(dist, "dist")
        n = dist.shape[0] if dist.ndim == 2 else 0
        if neighbors is None:
            neighbors = [[j for j in range(n) if j != i] for i in range(n)]
        return cls(dist, _neighbor_lists(neighbors), tuple(labels or ()), None, tol)

    @classmethod
    def from_coords(
        cls,
        coords: Sequence,
        neighbor_radius: Optional[float] = None,
        labels: Optional[Sequence[str]] = None,
        tol: float = DEFAULT_TOL,
    ) -> "FiniteMetricSpace":
        """Euclidean space on the given coordinates.

        1-D coordinates without a radius get order-adjacent neighbours.
        """
        coords = _float_array(coords, "coords")
        if coords.ndim == 1:
            coords = coords[:, None]
        dist = cdist(coords, coords)
        n = coords.shape[0]
        if neighbor_radius is None:
            if coords.shape[1] != 1:
                raise LabValidationError("neighbor_radius is required above one dimension", field="neighbor_radius")
            order = np.argsort(coords[:, 0], kind="stable")
            neighbors: List[List[int]] = [[] for _ in range(n)]
            for a, b in zip(order[:-1], order[1:]):
                neighbors[a].append(int(b))
                neighbors[b].append(int(a))
        else:
            close = dist <= neighbor_radius + tol
            np.fill_diagonal(close, False)
            neighbors = [list(np.flatnonzero(row)) for row in close]
        return cls(dist, tuple(tuple(nb) for nb in neighbors), tuple(labels or ()), coords, tol)

    @classmethod
    def grid(cls, spacing: float, radius: float, center: float = 0.0) -> "FiniteMetricSpace":
        """Uniform 1-D lattice ``center + spacing * k`` covering [-radius, radius]."""
        if not spacing > 0 or not radius >= 0:
            raise LabValidationError("grid needs spacing > 0 and radius >= 0", field="grid")
        m = int(round(radius / spacing))
        nodes = center + spacing * np.arange(-m, m + 1)
        return cls.path_graph_from_nodes(nodes)

    @classmethod
    def path_graph(cls, n: int, spacing: float = 1.0) -> "FiniteMetricSpace":
        if n < 1:
            raise LabValidationError("path graph needs at least one point", field="n")
        return cls.path_graph_from_nodes(spacing * np.arange(n))

    @classmethod
    def path_graph_from_nodes(cls, nodes: np.ndarray) -> "FiniteMetricSpace":
        nodes = np.asarray(nodes, dtype=float)
        dist = np.abs(nodes[:, None] - nodes[None, :])
        n = len(nodes)
        neighbors = tuple(tuple(j for j in (i - 1, i + 1) if 0 <= j < n) for i in range(n))
        return cls(dist, neighbors, (), nodes[:, None])

    @classmethod
    def cycle(cls, n: int, circumference: Optional[float] = None) -> "FiniteMetricSpace":
        """n equally spaced points on a circle with the geodesic metric."""
        if n < 3:
            raise LabValidationError("cycle needs at least 3 points", field="n")
        step = (circumference or n) / n
        k = np.arange(n)
        hops = np.abs(k[:, None] - k[None, :])
        dist = step * np.minimum(hops, n - hops)
        neighbors = tuple(((i - 1) % n, (i + 1) % n) for i in range(n))
        return cls(dist, neighbors)

    @classmethod
    def two_point(cls, d: float = 1.0) -> "FiniteMetricSpace":
        return cls.path_graph_from_nodes(np.array([0.0, float(d)]))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative weights over the points of a space."""
    weights: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).ravel()
        if weights.size == 0:
            raise LabValidationError("measure has no weights", field="weights")
        if not np.all(np.isfinite(weights)):
            raise LabValidationError("weights must be finite", field="weights")
        if np.any(weights < -self.tol):
            raise LabValidationError("weights must be >= 0", field="weights")
        weights = np.clip(weights, 0.0, None)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= self.tol

    def require_probability(self, name: str = "measure") -> "DiscreteMeasure":
        if not self.is_probability():
            raise LabValidationError(f"weights sum to {self.mass!r}, not 1", field=name)
        return self

    def integrate(self, f) -> float:
        return float(self.weights @ _as_values(f))

    def is_dirac(self) -> bool:
        return len(self.support) == 1

    @classmethod
    def dirac(cls, n: int, i: int) -> "DiscreteMeasure":
        weights = np.zeros(n)
        weights[i] = 1.0
        return cls(weights)

    @classmethod
    def uniform(cls, n: int) -> "DiscreteMeasure":
        return cls(np.full(n, 1.0 / n))


def check_same_space(n: int, *measures: DiscreteMeasure):
    for mu in measures:
        if mu.n != n:
            raise LabValidationError(f"measure has {mu.n} weights, space has {n} points", field="dimension")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Real function on the points with a declared Lipschitz bound."""
    __test__ = False

    values: np.ndarray
    lip_bound: float
    provenance: str = "user-supplied"
    label: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise LabValidationError("function values must be finite", field="values")
        if not self.lip_bound >= 0:
            raise LabValidationError("lip_bound must be >= 0", field="lip_bound")
        if self.provenance not in PROVENANCE_TAGS:
            raise LabValidationError(f"unknown provenance {self.provenance!r}", field="provenance")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def check(self, space: FiniteMetricSpace) -> bool:
        """Neighbour-pair Lipschitz check."""
        if self.values.size != space.n:
            return False
        i, j, lengths = space.edges
        slack = self.lip_bound * lengths + space.tol * (1.0 + np.abs(self.values[i]))
        return bool(np.all(np.abs(self.values[i] - self.values[j]) <= slack))


@dataclass(frozen=True, eq=False)
class LipschitzDictionary:
    """Finite family of test functions standing in for a supremum over Lip_b."""
    functions: Tuple[TestFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if self.functions and len({f.values.size for f in self.functions}) != 1:
            raise LabValidationError("dictionary functions differ in length", field="functions")

    def __len__(self) -> int:
        return len(self.functions)

    def __iter__(self) -> Iterator[TestFunction]:
        return iter(self.functions)

    def __getitem__(self, index: int) -> TestFunction:
        return self.functions[index]

    @cached_property
    def matrix(self) -> np.ndarray:
        """Values as an (n, m) array, one column per function."""
        matrix = np.column_stack([f.values for f in self.functions])
        matrix.setflags(write=False)
        return matrix

    @property
    def lip_bounds(self) -> np.ndarray:
        return np.array([f.lip_bound for f in self.functions])

    @property
    def tags(self) -> List[str]:
        return [f.provenance for f in self.functions]

    def prefix(self, size: int) -> "LipschitzDictionary":
        return LipschitzDictionary(self.functions[:size])

    def validate(self, space: FiniteMetricSpace) -> "LipschitzDictionary":
        for index, f in enumerate(self.functions):
            if not f.check(space):
                raise LabValidationError(f"function {index} ({f.label}) exceeds its Lipschitz bound", field="dictionary")
        return self


FunctionLike = Union[TestFunction, np.ndarray, Sequence[float]]


def _as_values(f: FunctionLike) -> np.ndarray:
    if isinstance(f, TestFunction):
        return f.values
    return np.asarray(f, dtype=float)


def discrete_gradient(space: FiniteMetricSpace, f: FunctionLike) -> np.ndarray:
    """Neighbour-graph gradient; accepts one function or an (n, m) stack."""
    values = _as_values(f)
    if values.shape[0] != space.n:
        raise LabValidationError(f"function has {values.shape[0]} values, space has {space.n} points", field="dimension")
    i, j, lengths = space.edges
    grad = np.zeros(values.shape, dtype=float)
    if len(i) == 0:
        return grad
    diff = np.abs(values[i] - values[j])
    ratio = diff / (lengths if values.ndim == 1 else lengths[:, None])
    np.maximum.at(grad, i, ratio)
    return grad


def _derivative(phi: Callable, u: np.ndarray) -> np.ndarray:
    # complex-step derivative, falling back to central differences
    step = 1e-20
    try:
        with np.errstate(all="ignore"):
            value = np.asarray(phi(u + 1j * step))
        if np.iscomplexobj(value) and np.all(np.isfinite(value)):
            return value.imag / step
    except (TypeError, ValueError):
        pass
    h = 1e-6 * np.maximum(1.0, np.abs(u))
    return (np.asarray(phi(u + h)) - np.asarray(phi(u - h))) / (2 * h)


def chain_rule_check(
    space: FiniteMetricSpace,
    f: FunctionLike,
    phi: Callable,
    dphi: Optional[Callable] = None,
    tol: Optional[float] = None,
    tol_factor: float = 1.0,
) -> ChainRuleReport:
    """Compares |grad(phi o f)| with |phi'(f)| |grad f| point by point.

    The default tolerance is ``tol_factor`` times the longest edge.
    """
    values = _as_values(f)
    composed = np.asarray(phi(values), dtype=float)
    slope = np.asarray(dphi(values), dtype=float) if dphi is not None else _derivative(phi, values)
    residuals = np.abs(discrete_gradient(space, composed) - np.abs(slope) * discrete_gradient(space, values))
    if tol is None:
        tol = tol_factor * space.max_edge_length
    max_residual = float(residuals.max()) if residuals.size else 0.0
    return ChainRuleReport(residuals=residuals, max_residual=max_residual, tol=tol, passed=max_residual <= tol)


def global_lipschitz(space: FiniteMetricSpace, f: FunctionLike) -> np.ndarray:
    """max over all pairs |f(i) - f(j)| / d(i, j); per column for an (n, m) stack."""
    values = _as_values(f)
    stacked = values if values.ndim == 2 else values[:, None]
    best = np.zeros(stacked.shape[1])
    for i in range(space.n - 1):
        rest = slice(i + 1, None)
        ratio = np.abs(stacked[i] - stacked[rest]) / space.dist[i, rest][:, None]
        best = np.maximum(best, ratio.max(axis=0))
    return best if values.ndim == 2 else best[:1]


def lipschitz_projection(space: FiniteMetricSpace, values: np.ndarray, lip: float) -> np.ndarray:
    """Largest lip-Lipschitz minorant: f(i) -> min_j f(j) + lip * d(i, j)."""
    return np.min(values[None, :] + lip * space.dist, axis=1)


def _anchor_indices(n: int, max_anchors: Optional[int]) -> np.ndarray:
    if max_anchors is None or max_anchors >= n:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, max(max_anchors, 2))).astype(int))


def build_dictionary(space: FiniteMetricSpace, config: Optional[DictionaryConfig] = None) -> LipschitzDictionary:
    """
    Deterministic dictionary: the zero function, coordinates, distance-to-point
    functions d(x_k, .), their truncations d(x_k, .) ^ R, and seeded random
    smoothed functions projected to the declared Lipschitz bound.
    """
    config = config or DictionaryConfig()
    functions: List[TestFunction] = [TestFunction(np.zeros(space.n), 0.0, "constant", "0")]

    if space.coords is not None:
        for c in range(space.coords.shape[1]):
            column = space.coords[:, c]
            functions.append(TestFunction(column - column.min(), 1.0, "coordinate", f"x[{c}]"))

    anchors = _anchor_indices(space.n, config.max_anchors)
    for k in anchors:
        functions.append(TestFunction(space.dist[k], 1.0, "distance-to-point", f"d({space.labels[k]},.)"))

    for fraction in config.truncation_fractions:
        radius = fraction * space.diameter
        for k in anchors:
            functions.append(
                TestFunction(np.minimum(space.dist[k], radius), 1.0, "distance-to-point", f"d({space.labels[k]},.)^{radius:.6g}")
            )

    if config.random_functions > 0:
        rng = np.random.default_rng(config.seed)
        lip = config.random_lipschitz
        degrees = np.array([max(len(nb), 1) for nb in space.neighbors], dtype=float)
        i, j, _ = space.edges
        for r in range(config.random_functions):
            g = rng.standard_normal(space.n)
            for _ in range(config.smoothing_rounds):
                neighbor_sum = np.zeros(space.n)
                np.add.at(neighbor_sum, i, g[j])
                g = 0.5 * g + 0.5 * neighbor_sum / degrees
            scale = np.max(np.abs(g))
            if scale > 0:
                g = g / scale * lip * space.diameter / 2
            projected = lipschitz_projection(space, g, lip)
            functions.append(TestFunction(projected - projected.min(), lip, "random-smoothed", f"random[{r}]"))

    dictionary = LipschitzDictionary(tuple(functions)).validate(space)
    logger.debug("Built dictionary with %d functions on %d points", len(dictionary), space.n)
    return dictionary
