"""
The entropic divergence family T_{a,b}.

With p = e^b, q = p/(p-1) and C_b = p^{1-q}/q, T_{a,b}(mu0, mu1) is the
supremum of int phi_1 dmu1 - int phi_0 dmu0 over positive subsolutions of

    d/ds phi + a phi |grad ln phi|^2 + b phi ln phi <= 0,   s in [0, 1].

At a = 0 it is the closed form C_b * sum rho^q mu0 (rho = dmu1/dmu0). For
a > 0 it is enclosed between a certificate lower bound, built from the family
phi_s = exp(alpha(s) f^2 + beta(s)), and a coupling upper bound.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .config import SolverConfig
from .data_structures import CertifiedValue, FeasibilityReport, RenyiResult
from .exceptions import LabValidationError
from .parallel import map_ordered, split_chunks
from .space import DiscreteMeasure, FiniteMetricSpace, LipschitzDictionary, check_same_space, discrete_gradient, global_lipschitz
from .transport import exact_transport

logger = logging.getLogger(__name__)

K_GRID_SIZE = 64
ENDPOINT_REFINEMENTS = 29
DEGENERATE_DENOMINATOR = 1e-9
LINEAR_SCALES = np.geomspace(1e-3, 1e3, 61)
BETA0_RULE = "elem-ineq-optimal"
SEARCH_CHUNKS = 8


def c_b(b: float) -> Tuple[float, float, float]:
    """(p, q, C_b) for p = e^b, q = p/(p-1), C_b = (1/q) p^{1-q}."""
    if not (np.isfinite(b) and b > 0):
        raise LabValidationError(f"b must be > 0, got {b}", field="b")
    p = float(np.exp(b))
    q = float(1.0 / -np.expm1(-b))
    log_c = -np.log(q) + b - b * q
    return p, q, float(np.exp(log_c))


@dataclass(frozen=True)
class DivParams:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise LabValidationError("a and b must be finite", field="DivParams")
        if self.a < 0:
            raise LabValidationError(f"a must be >= 0, got {self.a}", field="DivParams.a")
        if not self.b > 0:
            raise LabValidationError(f"b must be > 0, got {self.b}", field="DivParams.b")

    @cached_property
    def _constants(self) -> Tuple[float, float, float]:
        return c_b(self.b)

    @property
    def p(self) -> float:
        return self._constants[0]

    @property
    def q(self) -> float:
        return self._constants[1]

    @property
    def c_b(self) -> float:
        return self._constants[2]

    @property
    def log_c_b(self) -> float:
        return float(-np.log(self.q) + self.b - self.b * self.q)


def young_gap(b: float, z: float, w: float, x: float) -> float:
    """C_b z^q / w^{q-1} - (x^{1/p} z - x w); zero exactly at x = (z/(p w))^q."""
    for name, value in (("z", z), ("w", w), ("x", x)):
        if not (np.isfinite(value) and value > 0):
            raise LabValidationError(f"{name} must be > 0, got {value}", field=name)
    p, q, cb = c_b(b)
    return float(cb * z**q / w ** (q - 1.0) - (x ** (1.0 / p) * z - x * w))


def gronwall_flow(b: float, r: float, y0: float, s: float) -> float:
    """Upper solution exp((r/b)(1 - e^{-bs})) y0^{e^{-bs}} of y' <= r y - b y ln y."""
    if not (np.isfinite(b) and b > 0):
        raise LabValidationError(f"b must be > 0, got {b}", field="b")
    if not (np.isfinite(r) and r >= 0):
        raise LabValidationError(f"r must be >= 0, got {r}", field="r")
    if not (np.isfinite(y0) and y0 > 0):
        raise LabValidationError(f"y0 must be > 0, got {y0}", field="y0")
    if not 0.0 <= s <= 1.0:
        raise LabValidationError(f"s must lie in [0, 1], got {s}", field="s")
    decay = float(np.exp(-b * s))
    return float(np.exp((r / b) * -np.expm1(-b * s) + decay * np.log(y0)))


def t_tilde(value: float, params: DivParams) -> float:
    """ln(value / C_b); (q-1) D_q at a = 0."""
    if value == np.inf:
        return float("inf")
    return float(np.log(value) - params.log_c_b)


def _require_pair(mu0: DiscreteMeasure, mu1: DiscreteMeasure, n: Optional[int] = None):
    check_same_space(mu0.n if n is None else n, mu0, mu1)
    mu0.require_probability("mu0")
    mu1.require_probability("mu1")


def renyi_T0b(params: DivParams, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> RenyiResult:
    """Closed form of T_{0,b}; +inf when mu1 charges a mu0-null point."""
    if params.a != 0:
        raise LabValidationError(f"closed form needs a = 0, got a = {params.a}", field="DivParams.a")
    _require_pair(mu0, mu1)
    w0, w1 = mu0.weights, mu1.weights
    q = params.q
    if np.any((w0 == 0) & (w1 > 0)):
        logger.debug("mu1 is not absolutely continuous with respect to mu0")
        return RenyiResult(value=float("inf"), order=q, tilde=float("inf"), density=None)
    support = w0 > 0
    with np.errstate(divide="ignore"):
        log_w1 = np.log(w1[support])
    log_terms = q * log_w1 + (1.0 - q) * np.log(w0[support])
    log_integral = float(logsumexp(log_terms))
    density = np.full(mu0.n, np.nan)
    density[support] = w1[support] / w0[support]
    with np.errstate(over="ignore"):
        value = float(np.exp(params.log_c_b + log_integral))
    return RenyiResult(value=value, order=q, tilde=log_integral, density=density)


@dataclass
class UpperBound:
    value: float
    coupling: np.ndarray
    capped: bool = False
    capped_used: bool = False

    @property
    def certified(self) -> float:
        """The bound itself, or +inf when the coupling uses a capped cost."""
        return float("inf") if self.capped_used else self.value


def t_ab_upper(
    params: DivParams,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    config: Optional[SolverConfig] = None,
) -> UpperBound:
    """C_b * min over couplings of int exp(d^2/(4ab)) dpi, solved as an exact LP."""
    config = config or SolverConfig()
    if not params.a > 0:
        raise LabValidationError("coupling bound needs a > 0", field="DivParams.a")
    _require_pair(mu0, mu1, space.n)
    exponent = space.dist**2 / (4.0 * params.a * params.b)
    rows, cols = mu0.support, mu1.support
    over = exponent > config.cost_exponent_cap
    capped = bool(np.any(over[np.ix_(rows, cols)]))
    if capped:
        logger.warning("Cost exponent above %.0f on the supports; capped and flagged", config.cost_exponent_cap)
    cost = np.exp(np.minimum(exponent, config.cost_exponent_cap))
    result = exact_transport(mu0, mu1, cost, config)
    capped_used = bool(np.any((result.coupling > 0) & over))
    return UpperBound(
        value=params.c_b * result.value,
        coupling=result.coupling,
        capped=capped,
        capped_used=capped_used,
    )


@dataclass
class LowerBound:
    value: float
    log_value: float
    certificate: Dict[str, Any]


def _k_grid(a: float, b: float, diameter: float) -> np.ndarray:
    if a == 0:
        # alpha(s) = k b e^{-bs}; any real k is admissible
        scales = LINEAR_SCALES / max(diameter**2, 1e-300)
        return np.concatenate([-scales[::-1], [0.0], scales]) / b
    top = 1.0 / (4.0 * a)
    positive = top * np.arange(K_GRID_SIZE) / K_GRID_SIZE
    negative = -top * np.arange(1, K_GRID_SIZE) / K_GRID_SIZE
    endpoint = top * -np.expm1(-np.log(2.0) * np.arange(7, ENDPOINT_REFINEMENTS + 1))
    return np.unique(np.concatenate([negative, positive, endpoint]))


def _quadratic_coefficients(a: float, b: float, k: float) -> Optional[Tuple[float, float]]:
    # (alpha(0), alpha(1))
    top_denominator = np.exp(b) - 4.0 * a * k
    bottom_denominator = 1.0 - 4.0 * a * k
    if abs(top_denominator) < DEGENERATE_DENOMINATOR or abs(bottom_denominator) < DEGENERATE_DENOMINATOR:
        return None
    return k * b / bottom_denominator, k * b / top_denominator


def _search_chunk(values0, values1, log_w0, log_w1, coefficients, log_cb, q):
    best = (-np.inf, -1, -1, 0.0, 0.0)
    for r, (c0, c1) in enumerate(coefficients):
        log_z1 = logsumexp(c1 * values1 + log_w1[:, None], axis=0)
        log_z0 = logsumexp(c0 * values0 + log_w0[:, None], axis=0)
        candidate = log_cb + q * log_z1 - (q - 1.0) * log_z0
        j = int(np.argmax(candidate))
        if candidate[j] > best[0]:
            best = (float(candidate[j]), j, r, float(log_z1[j]), float(log_z0[j]))
    return best


def _zero_certificate(params: DivParams, n: int) -> Dict[str, Any]:
    return {
        "family": "expquad",
        "f_index": None,
        "k": 0.0,
        "beta0_rule": BETA0_RULE,
        "beta0": -params.q * params.b,
        "f_scale": 1.0,
        "f_values": [0.0] * n,
    }


def t_ab_lower(
    params: DivParams,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    threads: int = 1,
) -> LowerBound:
    """
    Best dual-feasible certificate over the dictionary (each function rescaled
    to global Lipschitz constant 1) and the k grid. beta0 is the optimal choice
    from the Young-type inequality, so the certificate value is

        C_b (int e^{alpha(1) f^2} dmu1)^q / (int e^{alpha(0) f^2} dmu0)^{q-1}.

    For a = 0 the linear family exp(e^{-bs}(c f + beta0)) is searched as well.
    """
    _require_pair(mu0, mu1, space.n)
    if len(dictionary) and dictionary.matrix.shape[0] != space.n:
        raise LabValidationError("dictionary and space differ in size", field="dictionary")
    a, b, q = params.a, params.b, params.q
    log_cb = params.log_c_b
    best_log = log_cb
    certificate = _zero_certificate(params, space.n)
    if len(dictionary) == 0:
        return LowerBound(params.c_b, best_log, certificate)

    matrix = dictionary.matrix
    lip = global_lipschitz(space, matrix)
    scale = np.where(lip > 0, 1.0 / np.where(lip > 0, lip, 1.0), 1.0)
    functions = matrix * scale[None, :]
    rows, cols = mu0.support, mu1.support
    log_w0, log_w1 = np.log(mu0.weights[rows]), np.log(mu1.weights[cols])

    ks = _k_grid(a, b, space.diameter)
    quadratic = [(k, c) for k in ks for c in [_quadratic_coefficients(a, b, k)] if c is not None]
    skipped = len(ks) - len(quadratic)
    if skipped:
        logger.debug("Skipped %d k values with degenerate denominators", skipped)
    families = [("expquad", [c for _, c in quadratic], [k for k, _ in quadratic], functions**2)]
    if a == 0:
        linear = np.concatenate([-LINEAR_SCALES[::-1], LINEAR_SCALES]) / max(space.diameter, 1e-300)
        families.append(("explin", [(c, c * np.exp(-b)) for c in linear], list(linear), functions))

    for family, coefficients, labels, values in families:
        chunks = split_chunks(values.shape[1], SEARCH_CHUNKS)

        def search(columns, values=values, coefficients=coefficients):
            idx = np.asarray(columns)
            return idx, _search_chunk(values[np.ix_(rows, idx)], values[np.ix_(cols, idx)], log_w0, log_w1, coefficients, log_cb, q)

        for idx, (log_value, j, r, log_z1, log_z0) in map_ordered(search, chunks, threads):
            if j < 0 or not log_value > best_log:
                continue
            best_log = log_value
            f_index = int(idx[j])
            certificate = {
                "family": family,
                "f_index": f_index,
                "beta0_rule": BETA0_RULE,
                "beta0": q * (log_z1 - b - log_z0),
                "f_scale": float(scale[f_index]),
                "f_values": functions[:, f_index].tolist(),
            }
            certificate["k" if family == "expquad" else "scale"] = float(labels[r])

    with np.errstate(over="ignore"):
        value = float(np.exp(best_log))
    logger.debug("T lower bound %.12g from %s certificate f_index=%s", value, certificate["family"], certificate["f_index"])
    return LowerBound(value, best_log, certificate)


def t_ab_certified(
    params: DivParams,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    config: Optional[SolverConfig] = None,
    threads: int = 1,
) -> CertifiedValue:
    """Two-sided enclosure; at a = 0 the upper end is the closed form."""
    lower = t_ab_lower(params, mu0, mu1, space, dictionary, threads)
    if params.a == 0:
        renyi = renyi_T0b(params, mu0, mu1)
        upper_value = renyi.value
        upper_certificate: Dict[str, Any] = {"family": "closed-form", "tag": "renyi"}
    else:
        upper = t_ab_upper(params, mu0, mu1, space, config)
        upper_value = upper.certified
        upper_certificate = {
            "family": "coupling",
            "capped": upper.capped_used,
            "support": [[int(i), int(j), float(upper.coupling[i, j])] for i, j in zip(*np.nonzero(upper.coupling))],
        }
    return CertifiedValue(
        lower=lower.value,
        upper=upper_value,
        lower_certificate=lower.certificate,
        upper_certificate=upper_certificate,
    )


def t_point_mass_bounds(params: DivParams, d: float) -> Tuple[float, float]:
    """Enclosure of T_{a,b}(delta_x, delta_y) at distance d."""
    if not params.a > 0:
        raise LabValidationError("point-mass bounds need a > 0", field="DivParams.a")
    if not (np.isfinite(d) and d >= 0):
        raise LabValidationError(f"distance must be >= 0, got {d}", field="d")
    a, b, p, q = params.a, params.b, params.p, params.q
    lower = params.c_b * np.exp(b * q / (4.0 * a * (p - 1.0)) * d * d)
    upper = params.c_b * np.exp(d * d / (4.0 * a * b))
    return float(lower), float(upper)


def _parse_certificate(certificate: Dict[str, Any], n: int):
    try:
        family = certificate["family"]
        beta0 = float(certificate["beta0"])
        f = np.asarray(certificate["f_values"], dtype=float)
        coefficient = float(certificate["k"] if family == "expquad" else certificate["scale"])
    except (KeyError, TypeError, ValueError) as e:
        raise LabValidationError(f"malformed certificate: {e}", field="certificate") from e
    if family not in ("expquad", "explin"):
        raise LabValidationError(f"unknown certificate family {family!r}", field="certificate.family")
    if f.shape != (n,) or not np.all(np.isfinite(f)):
        raise LabValidationError(f"certificate needs {n} finite function values", field="certificate.f_values")
    if not (np.isfinite(beta0) and np.isfinite(coefficient)):
        raise LabValidationError("certificate parameters must be finite", field="certificate")
    return family, coefficient, beta0, f


def verify_dual_feasible(
    params: DivParams,
    certificate: Dict[str, Any],
    space: FiniteMetricSpace,
    times: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
) -> FeasibilityReport:
    """
    Evaluates d/ds ln phi + a |grad ln phi|^2 + b ln phi (the defining
    inequality divided by phi) at every point and time node, with exact time
    derivatives of alpha and beta and the neighbour-graph gradient.

    The default tolerance is the discretisation error of |grad f^2| for a
    1-Lipschitz f: a max alpha^2 (4 max|f| h + h^2), h the longest edge.
    """
    a, b = params.a, params.b
    family, coefficient, beta0, f = _parse_certificate(certificate, space.n)
    times = np.linspace(0.0, 1.0, 101) if times is None else np.asarray(times, dtype=float)
    if times.size == 0 or np.any((times < 0) | (times > 1)):
        raise LabValidationError("time nodes must lie in [0, 1]", field="times")

    def report(violation, point, time, blowup, admissible, tolerance):
        return FeasibilityReport(
            max_violation=violation,
            worst_point=point,
            worst_time=time,
            blowup=blowup,
            admissible=admissible,
            tol=tolerance,
            feasible=admissible and violation <= tolerance,
        )

    h = space.max_edge_length
    if family == "expquad":
        k = coefficient
        pole = 4.0 * a * k
        if a > 0 and pole >= 1.0:
            blowup = pole <= np.exp(b)
            logger.debug("Certificate k=%.6g is inadmissible (4ak=%.6g), pole on [0,1]: %s", k, pole, blowup)
            return report(float("inf"), None, None, blowup, False, 0.0 if tol is None else tol)
        grad_sq = discrete_gradient(space, f * f) ** 2
        denominators = np.exp(b * times) - pole
        alpha = k * b / denominators
        alpha_dot = -k * b * b * np.exp(b * times) / denominators**2
        beta = beta0 * np.exp(-b * times)
        log_phi = alpha[:, None] * (f * f)[None, :] + beta[:, None]
        d_log_phi = alpha_dot[:, None] * (f * f)[None, :] - b * beta[:, None]
        grad_term = a * (alpha**2)[:, None] * grad_sq[None, :]
        discretisation = a * float(np.max(alpha**2)) * (4.0 * float(np.max(np.abs(f))) * h + h * h)
    else:
        c = coefficient
        decay = np.exp(-b * times)
        grad = discrete_gradient(space, f)
        log_phi = decay[:, None] * (c * f[None, :] + beta0)
        d_log_phi = -b * log_phi
        grad_term = a * ((decay * c) ** 2)[:, None] * (grad**2)[None, :]
        discretisation = 0.0

    residual = d_log_phi + grad_term + b * log_phi
    roundoff = 1e-12 * float(np.max(np.abs(d_log_phi) + grad_term + b * np.abs(log_phi)) + 1.0)
    tolerance = discretisation + roundoff if tol is None else tol
    t_index, point = np.unravel_index(int(np.argmax(residual)), residual.shape)
    violation = max(float(residual[t_index, point]), 0.0)
    return report(violation, int(point), float(times[t_index]), False, True, tolerance)
