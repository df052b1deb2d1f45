"""
Markov kernels on finite spaces and the grid semigroups used as test beds.

Variance conventions (generator -> row variance after time t):
  heat_kernel_grid      Laplacian,            2t
  brownian_kernel_grid  half Laplacian,        t
  ou_kernel_grid        Laplacian - a x d/dx,  (1 - e^{-2at}) / a
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .exceptions import LabValidationError
from .space import DiscreteMeasure, FiniteMetricSpace, FunctionLike, _as_values, check_same_space

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MarkovKernel:
    """Row-stochastic matrix: P f acts on functions, mu P on measures."""
    matrix: np.ndarray
    tol: float = ROW_SUM_TOL

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise LabValidationError(f"kernel must be square, got shape {matrix.shape}", field="kernel")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise LabValidationError("kernel entries must be finite and >= 0", field="kernel")
        sums = matrix.sum(axis=1)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        if abs(sums[worst] - 1.0) > self.tol:
            raise LabValidationError(f"row {worst} sums to {sums[worst]!r}", field="kernel row sums")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def log_matrix(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.matrix)

    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.matrix > 0))

    def row(self, i: int) -> DiscreteMeasure:
        return DiscreteMeasure(self.matrix[i], tol=self.tol)

    def compose(self, other: "MarkovKernel") -> "MarkovKernel":
        """(P Q) f = P(Q f)."""
        if other.n != self.n:
            raise LabValidationError("kernels act on different spaces", field="dimension")
        return MarkovKernel(self.matrix @ other.matrix, tol=max(self.tol, other.tol, 1e-9))

    @classmethod
    def identity(cls, n: int) -> "MarkovKernel":
        return cls(np.eye(n))

    @classmethod
    def constant_rows(cls, row: Sequence[float]) -> "MarkovKernel":
        """Every row equal to ``row``: one-step mixing to a fixed law."""
        row = np.asarray(row, dtype=float)
        return cls(np.tile(row, (row.size, 1)))


def apply_to_function(P: MarkovKernel, f: FunctionLike) -> np.ndarray:
    """(Pf)(i) = sum_j P(i, j) f(j); also accepts an (n, m) stack of functions."""
    values = _as_values(f)
    if values.shape[0] != P.n:
        raise LabValidationError(f"function has {values.shape[0]} values, kernel has {P.n} states", field="dimension")
    return P.matrix @ values


def apply_to_measure(mu: DiscreteMeasure, P: MarkovKernel) -> DiscreteMeasure:
    """(mu P)(j) = sum_i mu(i) P(i, j)."""
    check_same_space(P.n, mu)
    mu.require_probability()
    return DiscreteMeasure(mu.weights @ P.matrix, tol=max(mu.tol, P.tol))


def gaussian_kernel_grid(grid: FiniteMetricSpace, variance: float, contraction: float = 1.0) -> MarkovKernel:
    """Rows N(contraction * x_i, variance) sampled at the nodes and renormalised."""
    if grid.lattice_spacing() is None:
        raise LabValidationError("grid must be a uniform 1-D lattice", field="grid")
    if not variance > 0:
        raise LabValidationError(f"variance must be > 0, got {variance}", field="variance")
    x = grid.nodes()
    log_rows = -((x[None, :] - contraction * x[:, None]) ** 2) / (2.0 * variance)
    log_rows -= logsumexp(log_rows, axis=1, keepdims=True)
    rows = np.exp(log_rows)
    rows /= rows.sum(axis=1, keepdims=True)
    return MarkovKernel(rows)


def heat_kernel_grid(grid: FiniteMetricSpace, t: float) -> MarkovKernel:
    """Heat semigroup of the Laplacian: variance 2t."""
    if not t > 0:
        raise LabValidationError(f"time must be > 0, got {t}", field="t")
    return gaussian_kernel_grid(grid, 2.0 * t)


def brownian_kernel_grid(grid: FiniteMetricSpace, t: float) -> MarkovKernel:
    """Standard Brownian motion at time t (generator half Laplacian): variance t."""
    if not t > 0:
        raise LabValidationError(f"time must be > 0, got {t}", field="t")
    return gaussian_kernel_grid(grid, t)


def ou_kernel_grid(grid: FiniteMetricSpace, t: float, a: float) -> MarkovKernel:
    """Mehler kernel of Laplacian - a x d/dx."""
    if not t > 0:
        raise LabValidationError(f"time must be > 0, got {t}", field="t")
    if not a > 0:
        raise LabValidationError(f"convexity rate must be > 0, got {a}", field="a")
    return gaussian_kernel_grid(grid, -np.expm1(-2.0 * a * t) / a, contraction=np.exp(-a * t))


def bin_samples(samples: np.ndarray, grid: FiniteMetricSpace) -> Tuple[np.ndarray, int]:
    """Cell-midpoint histogram of 1-D samples; returns (weights, clamped count)."""
    h = grid.lattice_spacing()
    if h is None:
        raise LabValidationError("grid must be a uniform 1-D lattice", field="grid")
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise LabValidationError("empty sample set", field="samples")
    x0 = grid.nodes()[0]
    cells = np.rint((samples - x0) / h).astype(np.int64)
    outside = (cells < 0) | (cells > grid.n - 1)
    clamped = int(outside.sum())
    cells = np.clip(cells, 0, grid.n - 1)
    counts = np.bincount(cells, minlength=grid.n).astype(float)
    return counts / samples.size, clamped


@dataclass(frozen=True, eq=False)
class EmpiricalKernel:
    kernel: MarkovKernel
    clamped: int


def empirical_kernel(samples: Sequence[np.ndarray], grid: FiniteMetricSpace) -> EmpiricalKernel:
    """Row i is the normalised histogram of the endpoints started at point i."""
    if len(samples) != grid.n:
        raise LabValidationError(f"expected samples for {grid.n} start points, got {len(samples)}", field="samples")
    rows = []
    clamped = 0
    for i, cloud in enumerate(samples):
        if np.asarray(cloud).size == 0:
            raise LabValidationError(f"start point {i} has no samples", field="samples")
        weights, out = bin_samples(cloud, grid)
        rows.append(weights)
        clamped += out
    if clamped:
        logger.warning("Clamped %d samples outside the grid hull", clamped)
    return EmpiricalKernel(MarkovKernel(np.vstack(rows)), clamped)
