"""Closed forms between one-dimensional normal laws, used as an independent oracle."""
import numpy as np

from .exceptions import LabValidationError


def _check_variances(*variances: float):
    for v in variances:
        if not (np.isfinite(v) and v > 0):
            raise LabValidationError(f"variance must be > 0, got {v}", field="variance")


def normal_hellinger_sq(m0: float, var0: float, m1: float, var1: float) -> float:
    """int (sqrt(dN1) - sqrt(dN0))^2 = 2 - 2 * Bhattacharyya coefficient."""
    _check_variances(var0, var1)
    total = var0 + var1
    affinity = np.sqrt(2.0 * np.sqrt(var0 * var1) / total) * np.exp(-((m1 - m0) ** 2) / (4.0 * total))
    return float(2.0 - 2.0 * affinity)


def normal_w2_sq(m0: float, var0: float, m1: float, var1: float) -> float:
    _check_variances(var0, var1)
    return float((m1 - m0) ** 2 + (np.sqrt(var1) - np.sqrt(var0)) ** 2)


def normal_renyi_divergence(m1: float, var1: float, m0: float, var0: float, order: float) -> float:
    """D_r(N(m1, var1) | N(m0, var0)); +inf when r var0 + (1 - r) var1 <= 0."""
    _check_variances(var0, var1)
    if not (order > 0 and order != 1):
        raise LabValidationError(f"order must be > 0 and != 1, got {order}", field="order")
    mixed = order * var0 + (1.0 - order) * var1
    if mixed <= 0:
        return float("inf")
    return float(
        0.5 * np.log(var0 / var1)
        + np.log(var0 / mixed) / (2.0 * (order - 1.0))
        + order * (m1 - m0) ** 2 / (2.0 * mixed)
    )


def normal_renyi_integral(m1: float, var1: float, m0: float, var0: float, order: float) -> float:
    """int (dN1/dN0)^r dN0 = exp((r - 1) D_r)."""
    divergence = normal_renyi_divergence(m1, var1, m0, var0, order)
    if divergence == np.inf:
        return float("inf")
    return float(np.exp((order - 1.0) * divergence))


def shifted_renyi_functional(p: float, shift: float, variance: float) -> float:
    """(int (dmu/dmu^h)^{1/(p-1)} dmu)^{p-1} for mu = N(0, variance), mu^h = N(shift, variance)."""
    _check_variances(variance)
    if not p > 1:
        raise LabValidationError(f"p must be > 1, got {p}", field="p")
    return float(np.exp(p / (p - 1.0) * shift**2 / (2.0 * variance)))
