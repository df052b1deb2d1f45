"""
Functional-inequality constants of a Markov kernel and the harnesses that
exercise their transport and Harnack equivalents.

Estimators return dictionary suprema, i.e. lower bounds on the true constants:

    rpi       |grad Pf|^2 / (P(f^2) - (Pf)^2)
    rlsi      Pf |grad ln Pf|^2 / (P(f ln f) - Pf ln Pf),    f = exp(g) > 0
    gradient  |grad Pf|^2 / P(|grad f|^2)
    l1lnl     Pf |grad ln Pf|^2 / P(f |grad ln f|^2),        f = exp(g) > 0

Harness violations are relative, (lhs - rhs) / |rhs|, unless stated otherwise.
"""
from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, logsumexp

from .config import EstimatorConfig, HarnessConfig, SolverConfig
from .data_structures import ConstantEstimate, HarnessReport, WResult
from .divergence import DivParams, renyi_T0b, t_ab_lower, t_ab_upper, t_point_mass_bounds
from .exceptions import LabValidationError, SolverConvergenceError
from .markov import MarkovKernel, apply_to_measure
from .parallel import map_ordered, split_chunks
from .space import DiscreteMeasure, FiniteMetricSpace, LipschitzDictionary, discrete_gradient
from .transport import WParams, evaluate_w_ab, hellinger_sq, wasserstein2_sq

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-12
TRIAL_CHUNKS = 16
ACTIVE_ROW_FRACTION = 1e-12

MeasurePair = Tuple[DiscreteMeasure, DiscreteMeasure]

_KIND_BY_NAME = {
    "rpi": "rpi",
    "rpi-weak": "rpi-weak",
    "rlsi": "rlsi",
    "rlsi-linearized": "rlsi",
    "gradient": "gradient",
    "l1lnl": "l1lnl",
}


# --- ratio evaluation ---
def _check_inputs(P: MarkovKernel, space: FiniteMetricSpace, dictionary: LipschitzDictionary):
    if P.n != space.n:
        raise LabValidationError(f"kernel has {P.n} states, space has {space.n} points", field="dimension")
    if space.n < 2:
        raise LabValidationError("constants need at least two points", field="space")
    if len(dictionary) == 0:
        raise LabValidationError("dictionary is empty", field="dictionary")
    if dictionary.matrix.shape[0] != space.n:
        raise LabValidationError("dictionary and space differ in size", field="dictionary")


def _oscillation(values: np.ndarray) -> np.ndarray:
    return values.max(axis=0) - values.min(axis=0)


def _floor(kind: str, F: np.ndarray, diameter: float) -> np.ndarray:
    """Scale of each function's denominator; the exclusion threshold multiplies it."""
    osc = _oscillation(F)
    if kind in ("rpi", "rpi-weak"):
        return osc**2
    if kind == "gradient":
        return (osc / diameter) ** 2
    if kind == "rlsi":
        return osc**2 / F.max(axis=0)
    return F.max(axis=0) * (_oscillation(np.log(F)) / diameter) ** 2


def _ratio_matrix(kind: str, P: MarkovKernel, space: FiniteMetricSpace, F: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Ratios at every (point, function); excluded entries are -inf."""
    M = P.matrix
    PF = M @ F
    if kind in ("rpi", "rpi-weak", "gradient"):
        num = discrete_gradient(space, PF) ** 2
    else:
        num = PF * discrete_gradient(space, np.log(PF)) ** 2
    if kind == "rpi":
        den = M @ (F * F) - PF * PF
    elif kind == "rpi-weak":
        den = np.empty_like(PF)
        for x in range(P.n):
            den[x] = M[x] @ (F - PF[x]) ** 2
    elif kind == "gradient":
        den = M @ discrete_gradient(space, F) ** 2
    elif kind == "rlsi":
        den = M @ (F * np.log(F)) - PF * np.log(PF)
    else:
        den = M @ (F * discrete_gradient(space, np.log(F)) ** 2)
    limit = threshold * _floor(kind, F, space.diameter)
    valid = np.isfinite(num) & np.isfinite(den) & (den > limit[None, :])
    ratio = np.where(valid, num / np.where(valid, den, 1.0), -np.inf)
    return ratio, valid


def _local_ratio(kind: str, P: MarkovKernel, space: FiniteMetricSpace, f: np.ndarray, x: int, threshold: float) -> float:
    """The ratio of one function at one point, touching only row x and its neighbours."""
    nbrs = np.asarray(space.neighbors[x])
    rows = P.matrix[np.concatenate([[x], nbrs])]
    pf = rows @ f
    lengths = space.dist[x, nbrs]
    row = rows[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind in ("rpi", "rpi-weak", "gradient"):
            num = float(np.max(np.abs(pf[0] - pf[1:]) / lengths)) ** 2
        else:
            log_pf = np.log(pf)
            num = float(pf[0] * np.max(np.abs(log_pf[0] - log_pf[1:]) / lengths) ** 2)
        if kind == "rpi":
            den = float(row @ (f * f) - pf[0] * pf[0])
        elif kind == "rpi-weak":
            den = float(row @ (f - pf[0]) ** 2)
        elif kind == "gradient":
            den = float(row @ discrete_gradient(space, f) ** 2)
        elif kind == "rlsi":
            den = float(row @ (f * np.log(f)) - pf[0] * np.log(pf[0]))
        else:
            den = float(row @ (f * discrete_gradient(space, np.log(f)) ** 2))
        limit = threshold * float(_floor(kind, f[:, None], space.diameter)[0])
    if not (np.isfinite(num) and np.isfinite(den) and den > limit):
        return -np.inf
    return num / den


def _perturb(f: np.ndarray, block: np.ndarray, step: float, multiplicative: bool) -> np.ndarray:
    g = f.copy()
    if multiplicative:
        g[block] *= np.exp(step)
    else:
        g[block] += step
    return g


def _refine(kind: str, P: MarkovKernel, space: FiniteMetricSpace, f: np.ndarray, x: int, config: EstimatorConfig) -> Tuple[np.ndarray, float]:
    """Block-coordinate ascent of the ratio at x, one bounded scalar search per block."""
    rows = P.matrix[np.concatenate([[x], space.neighbors[x]])]
    weight = rows.max(axis=0)
    active = np.flatnonzero(weight > ACTIVE_ROW_FRACTION * weight.max())
    blocks = [b for b in np.array_split(active, max(1, config.refine_blocks)) if len(b)]
    multiplicative = kind in ("rlsi", "l1lnl")
    span = 2.0 if multiplicative else max(float(np.ptp(f)), 1e-12)
    threshold = config.exclusion_threshold
    best = _local_ratio(kind, P, space, f, x, threshold)
    for _ in range(config.refine_sweeps):
        for block in blocks:
            def objective(step, block=block):
                value = _local_ratio(kind, P, space, _perturb(f, block, step, multiplicative), x, threshold)
                return -value if np.isfinite(value) else 0.0

            result = minimize_scalar(objective, bounds=(-span, span), method="bounded", options={"xatol": 1e-6 * span})
            if -result.fun > best:
                f = _perturb(f, block, result.x, multiplicative)
                best = -result.fun
    return f, best


def _estimate(name: str, P: MarkovKernel, space: FiniteMetricSpace, F: np.ndarray, config: EstimatorConfig) -> ConstantEstimate:
    kind = _KIND_BY_NAME[name.split("[")[0]]
    ratio, valid = _ratio_matrix(kind, P, space, F, config.exclusion_threshold)
    evaluated = int(valid.sum())
    excluded = int(valid.size - evaluated)
    if excluded:
        logger.debug("%s: excluded %d of %d denominators", name, excluded, valid.size)
    if evaluated == 0:
        logger.warning("%s: every denominator is below threshold; constant absent", name)
        return ConstantEstimate(name, None, excluded_count=excluded, evaluated_count=0)

    column_best = ratio.max(axis=0)
    order = np.argsort(-column_best, kind="stable")
    best_f = F[:, order[0]].copy()
    best_value = float(column_best[order[0]])
    for j in order[: config.refine_seeds]:
        if not np.isfinite(column_best[j]):
            break
        x = int(np.argmax(ratio[:, j]))
        refined, value = _refine(kind, P, space, F[:, j].copy(), x, config)
        if value > best_value:
            best_f, best_value = refined, value

    column, _ = _ratio_matrix(kind, P, space, best_f[:, None], config.exclusion_threshold)
    point = int(np.argmax(column[:, 0]))
    value = _local_ratio(kind, P, space, best_f, point, config.exclusion_threshold)
    logger.info("%s estimate %.10g at point %d (%d ratios, %d excluded)", name, value, point, evaluated, excluded)
    return ConstantEstimate(
        name=name,
        value=value,
        witness_function=tuple(best_f),
        witness_point=point,
        excluded_count=excluded,
        evaluated_count=evaluated,
    )


def witness_ratio(estimate: ConstantEstimate, P: MarkovKernel, space: FiniteMetricSpace, config: Optional[EstimatorConfig] = None) -> float:
    """Re-evaluates an estimate's ratio from its recorded witness."""
    if estimate.absent:
        raise LabValidationError("an absent estimate has no witness", field="estimate")
    config = config or EstimatorConfig()
    kind = _KIND_BY_NAME[estimate.name.split("[")[0]]
    f = np.asarray(estimate.witness_function, dtype=float)
    return _local_ratio(kind, P, space, f, int(estimate.witness_point), config.exclusion_threshold)


def _positive(dictionary: LipschitzDictionary) -> np.ndarray:
    G = dictionary.matrix
    return np.exp(G - G.max(axis=0))


def rpi_constant(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    config: Optional[EstimatorConfig] = None,
    weak_form: Optional[bool] = None,
) -> ConstantEstimate:
    """Reverse Poincare constant; the weak form recentres f at Pf(x) first."""
    config = config or EstimatorConfig()
    _check_inputs(P, space, dictionary)
    weak = config.weak_form if weak_form is None else weak_form
    return _estimate("rpi-weak" if weak else "rpi", P, space, dictionary.matrix, config)


def rlsi_constant(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    config: Optional[EstimatorConfig] = None,
) -> ConstantEstimate:
    """Reverse log-Sobolev constant over f = exp(g), g in the dictionary."""
    config = config or EstimatorConfig()
    _check_inputs(P, space, dictionary)
    return _estimate("rlsi", P, space, _positive(dictionary), config)


def gradient_bound_constant(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    config: Optional[EstimatorConfig] = None,
) -> ConstantEstimate:
    config = config or EstimatorConfig()
    _check_inputs(P, space, dictionary)
    return _estimate("gradient", P, space, dictionary.matrix, config)


def l1lnl_constant(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    config: Optional[EstimatorConfig] = None,
) -> ConstantEstimate:
    config = config or EstimatorConfig()
    _check_inputs(P, space, dictionary)
    return _estimate("l1lnl", P, space, _positive(dictionary), config)


def rlsi_linearization(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    epsilons: Sequence[float] = (0.1, 0.01),
    config: Optional[EstimatorConfig] = None,
) -> List[ConstantEstimate]:
    """rLSI ratio at f = 1 + eps g; as eps -> 0 it tends to twice the RPI ratio of g."""
    config = config or EstimatorConfig()
    _check_inputs(P, space, dictionary)
    G, _ = _normalised(dictionary)
    estimates = []
    for eps in epsilons:
        if not eps > 0:
            raise LabValidationError(f"eps must be > 0, got {eps}", field="eps")
        estimates.append(_estimate(f"rlsi-linearized[{eps:g}]", P, space, 1.0 + eps * G, config))
    return estimates


Estimator = Callable[..., ConstantEstimate]

ESTIMATORS: Dict[str, Estimator] = {
    "rpi": rpi_constant,
    "rlsi": rlsi_constant,
    "grad": gradient_bound_constant,
    "l1lnl": l1lnl_constant,
}


def convergence_curve(
    estimator: Estimator,
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    sizes: Optional[Sequence[int]] = None,
    config: Optional[EstimatorConfig] = None,
) -> List[Tuple[int, Optional[float]]]:
    """Estimate against dictionary prefix size."""
    config = config or EstimatorConfig()
    sizes = config.curve_sizes if sizes is None else sizes
    sizes = sorted({min(int(s), len(dictionary)) for s in sizes if int(s) > 0})
    return [(size, estimator(P, space, dictionary.prefix(size), config).value) for size in sizes]


# --- harness plumbing ---
def _relative(lhs: float, rhs: float) -> float:
    return float((lhs - rhs) / max(abs(rhs), RELATIVE_FLOOR))


def _normalised(dictionary: LipschitzDictionary) -> Tuple[np.ndarray, np.ndarray]:
    """Nonconstant dictionary functions rescaled to [0, 1], with their original indices."""
    G = dictionary.matrix
    osc = _oscillation(G)
    keep = np.flatnonzero(osc > 0)
    if len(keep) == 0:
        raise LabValidationError("dictionary has no nonconstant function", field="dictionary")
    return (G[:, keep] - G[:, keep].min(axis=0)) / osc[keep], keep


def _points(space: FiniteMetricSpace, points: Optional[Sequence[int]]) -> np.ndarray:
    if points is None:
        return np.arange(space.n)
    points = np.asarray(points, dtype=int)
    if points.size == 0 or points.min() < 0 or points.max() >= space.n:
        raise LabValidationError("sample points out of range", field="points")
    return points


def _require_constant(C: float):
    if not (np.isfinite(C) and C > 0):
        raise LabValidationError(f"constant must be > 0, got {C}", field="C")


def _run_trials(evaluate: Callable[[int], Tuple[float, Dict]], count: int, threads: int) -> List[Tuple[float, Dict]]:
    chunks = split_chunks(count, TRIAL_CHUNKS) if count else []
    results = map_ordered(lambda chunk: [evaluate(i) for i in chunk], chunks, threads)
    return [outcome for chunk in results for outcome in chunk]


def _report(report_id: str, outcomes: List[Tuple[float, Dict]], tol: float, skipped: int = 0, notes: Optional[List[str]] = None) -> HarnessReport:
    notes = list(notes or [])
    if not outcomes:
        return HarnessReport(id=report_id, trials=0, tol=tol, max_violation=0.0, passed=True, skipped=skipped, notes=notes)
    violations = np.nan_to_num(np.array([v for v, _ in outcomes], dtype=float), nan=np.inf)
    worst = int(np.argmax(violations))
    max_violation = float(violations[worst])
    passed = bool(max_violation <= tol)
    if not passed:
        logger.info("%s: max violation %.3e above tol %.1e", report_id, max_violation, tol)
    return HarnessReport(
        id=report_id,
        trials=len(outcomes),
        tol=tol,
        max_violation=max_violation,
        worst_case=outcomes[worst][1],
        passed=passed,
        skipped=skipped,
        notes=notes,
    )


def sample_measure_pairs(
    space: FiniteMetricSpace,
    count: int,
    seed: int = 0,
    points: Optional[Sequence[int]] = None,
    dirac_fraction: float = 0.5,
    support_size: int = 5,
) -> List[MeasurePair]:
    """Dirac pairs at distinct points first, then random measures on small supports."""
    pts = _points(space, points)
    if len(pts) < 2:
        raise LabValidationError("need at least two sample points", field="points")
    rng = np.random.default_rng(seed)
    diracs = int(round(count * dirac_fraction))
    pairs: List[MeasurePair] = []
    for _ in range(diracs):
        x, y = rng.choice(pts, size=2, replace=False)
        pairs.append((DiscreteMeasure.dirac(space.n, int(x)), DiscreteMeasure.dirac(space.n, int(y))))
    k = min(support_size, len(pts))
    for _ in range(count - diracs):
        measures = []
        for _ in range(2):
            weights = np.zeros(space.n)
            weights[rng.choice(pts, size=k, replace=False)] = rng.dirichlet(np.ones(k))
            measures.append(DiscreteMeasure(weights / weights.sum()))
        pairs.append((measures[0], measures[1]))
    return pairs


def _dirac_distance(space: FiniteMetricSpace, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> Optional[float]:
    if mu0.is_dirac() and mu1.is_dirac():
        return float(space.dist[mu0.support[0], mu1.support[0]])
    return None


def _trusted(result: WResult, label: str) -> WResult:
    if not result.trusted:
        raise SolverConvergenceError(f"LET gap {result.gap:.3e} above tolerance in {label}", solution=result.solution)
    return result


# --- pointwise inequalities ---
def hpi_check(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    dictionary: LipschitzDictionary,
    trials: Optional[int] = None,
    tol: Optional[float] = None,
    seed: int = 0,
    points: Optional[Sequence[int]] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """
    Pf(x) <= Pf(y) + sqrt(C) d(x, y) sqrt(P(f^2)(x)) for nonnegative
    f = sigmoid(s (g - theta)), g a dictionary function rescaled to [0, 1].
    """
    config = config or HarnessConfig()
    trials = config.trials if trials is None else trials
    tol = config.tol if tol is None else tol
    _require_constant(C)
    G, columns = _normalised(dictionary)
    pts = _points(space, points)
    rng = np.random.default_rng(seed)
    lo, hi = config.hpi_log10_sharpness_range
    j = rng.integers(0, G.shape[1], trials)
    theta = rng.uniform(0.0, 1.0, trials)
    sharpness = 10.0 ** rng.uniform(lo, hi, trials)
    xs = rng.choice(pts, trials)
    ys = rng.choice(pts, trials)
    root_c = np.sqrt(C)

    def evaluate(i):
        f = expit(sharpness[i] * (G[:, j[i]] - theta[i]))
        x, y = int(xs[i]), int(ys[i])
        lhs = float(P.matrix[x] @ f)
        rhs = float(P.matrix[y] @ f + root_c * space.dist[x, y] * np.sqrt(P.matrix[x] @ (f * f)))
        details = {
            "f_index": int(columns[j[i]]),
            "theta": float(theta[i]),
            "sharpness": float(sharpness[i]),
            "x": x,
            "y": y,
            "lhs": lhs,
            "rhs": rhs,
        }
        return _relative(lhs, rhs), details

    return _report("hpi", _run_trials(evaluate, trials, threads), tol)


def increment_lemma_check(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    dictionary: LipschitzDictionary,
    trials: Optional[int] = None,
    tol: Optional[float] = None,
    seed: int = 0,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """|Pf(x) - Pf(y)|^2 <= 2 He^2(delta_x P, delta_y P)(P(f^2)(x) + P(f^2)(y)); absolute tolerance."""
    config = config or HarnessConfig()
    trials = config.trials if trials is None else trials
    tol = config.increment_tol if tol is None else tol
    G, columns = _normalised(dictionary)
    rng = np.random.default_rng(seed)
    j = rng.integers(0, G.shape[1], trials)
    slope = rng.standard_normal(trials)
    shift = rng.standard_normal(trials)
    xs = rng.integers(0, space.n, trials)
    ys = rng.integers(0, space.n, trials)
    roots = np.sqrt(P.matrix)

    def evaluate(i):
        f = slope[i] * G[:, j[i]] + shift[i]
        x, y = int(xs[i]), int(ys[i])
        px, py = P.matrix[x], P.matrix[y]
        he_sq = float(np.sum((roots[x] - roots[y]) ** 2))
        lhs = float((px @ f - py @ f) ** 2)
        rhs = float(2.0 * he_sq * (px @ (f * f) + py @ (f * f)))
        details = {"f_index": int(columns[j[i]]), "slope": float(slope[i]), "shift": float(shift[i]), "x": x, "y": y, "lhs": lhs, "rhs": rhs}
        return lhs - rhs, details

    return _report("increment", _run_trials(evaluate, trials, threads), tol)


def whi_check(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    dictionary: LipschitzDictionary,
    p_grid: Optional[Sequence[float]] = None,
    trials: Optional[int] = None,
    tol: Optional[float] = None,
    seed: int = 0,
    points: Optional[Sequence[int]] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """
    Pf(x)^p <= exp(p/(p-1) C d(x,y)^2 / 4) P(f^p)(y) for exponential tilts
    f = exp(s g), compared in log space; violation is expm1(log lhs - log rhs).
    """
    config = config or HarnessConfig()
    trials = config.trials if trials is None else trials
    tol = config.tol if tol is None else tol
    p_grid = np.asarray(config.p_grid if p_grid is None else p_grid, dtype=float)
    _require_constant(C)
    if np.any(p_grid <= 1):
        raise LabValidationError("every p must be > 1", field="p_grid")
    G, columns = _normalised(dictionary)
    pts = _points(space, points)
    rng = np.random.default_rng(seed)
    lo, hi = config.whi_log10_scale_range
    j = rng.integers(0, G.shape[1], trials)
    scale = rng.choice([-1.0, 1.0], trials) * 10.0 ** rng.uniform(lo, hi, trials)
    ps = rng.choice(p_grid, trials)
    xs = rng.choice(pts, trials)
    ys = rng.choice(pts, trials)
    log_rows = P.log_matrix

    def evaluate(i):
        g = scale[i] * G[:, j[i]]
        p, x, y = float(ps[i]), int(xs[i]), int(ys[i])
        log_lhs = float(p * logsumexp(log_rows[x] + g))
        log_rhs = float(p / (p - 1.0) * C * space.dist[x, y] ** 2 / 4.0 + logsumexp(log_rows[y] + p * g))
        details = {"f_index": int(columns[j[i]]), "scale": float(scale[i]), "p": p, "x": x, "y": y, "log_lhs": log_lhs, "log_rhs": log_rhs}
        return float(np.expm1(log_lhs - log_rhs)), details

    return _report("whi", _run_trials(evaluate, trials, threads), tol)


def harnack_integral(P: MarkovKernel, x: int, y: int, p: float) -> Optional[float]:
    """ln sum_z (p_x(z)/p_y(z))^{1/(p-1)} p_x(z); None when p_y vanishes where p_x does not."""
    px, py = P.matrix[x], P.matrix[y]
    charged = px > 0
    if np.any(py[charged] == 0):
        return None
    log_px, log_py = np.log(px[charged]), np.log(py[charged])
    return float(logsumexp((log_px - log_py) / (p - 1.0) + log_px))


def ihi_check(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    point_pairs: Sequence[Tuple[int, int]],
    p_grid: Optional[Sequence[float]] = None,
    form: str = "strong",
    tol: Optional[float] = None,
    config: Optional[HarnessConfig] = None,
) -> HarnessReport:
    """
    strong: sum (p_x/p_y)^{1/(p-1)} p_x <= exp(p/(p-1)^2 C d^2/4)
    weak:   (sum (p_x/p_y)^{1/(p-1)} p_x)^{p-1} <= exp((p-1)/(ln p)^2 C d^2/4)
    """
    config = config or HarnessConfig()
    tol = config.ihi_tol if tol is None else tol
    p_grid = config.p_grid if p_grid is None else p_grid
    _require_constant(C)
    if form not in ("strong", "weak"):
        raise LabValidationError(f"unknown form {form!r}", field="form")
    outcomes = []
    skipped = 0
    for x, y in point_pairs:
        d_sq = float(space.dist[x, y]) ** 2
        for p in p_grid:
            if not p > 1:
                raise LabValidationError(f"p must be > 1, got {p}", field="p_grid")
            log_lhs = harnack_integral(P, int(x), int(y), float(p))
            if log_lhs is None:
                skipped += 1
                continue
            if form == "strong":
                log_rhs = p / (p - 1.0) ** 2 * C * d_sq / 4.0
            else:
                log_lhs *= p - 1.0
                log_rhs = (p - 1.0) / np.log(p) ** 2 * C * d_sq / 4.0
            details = {"x": int(x), "y": int(y), "p": float(p), "form": form, "lhs": float(np.exp(log_lhs)), "rhs": float(np.exp(log_rhs))}
            outcomes.append((float(np.expm1(log_lhs - log_rhs)), details))
    notes = [f"{skipped} (pair, p) cases skipped for zero densities"] if skipped else []
    return _report(f"ihi-{form}", outcomes, tol, skipped=skipped, notes=notes)


# --- transport harnesses ---
def hkc_harness(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    pairs: Sequence[MeasurePair],
    rtol: Optional[float] = None,
    solver: Optional[SolverConfig] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """He^2(mu0 P, mu1 P) <= W_{1/C,1}(mu0, mu1) <= (C/4) W_2^2(mu0, mu1), both links with the LET gap as slack."""
    config = config or HarnessConfig()
    rtol = config.hkc_rtol if rtol is None else rtol
    _require_constant(C)
    params = WParams(1.0 / C, 1.0)

    def evaluate(index):
        mu0, mu1 = pairs[index]
        he_sq = hellinger_sq(apply_to_measure(mu0, P), apply_to_measure(mu1, P))
        w = _trusted(evaluate_w_ab(params, mu0, mu1, space, solver), "hkc")
        w2_bound = C / 4.0 * wasserstein2_sq(mu0, mu1, space, solver).value
        first = (he_sq - w.value - w.gap) / max(w.value + w.gap, RELATIVE_FLOOR)
        second = (w.value - w.gap - w2_bound) / max(w2_bound, RELATIVE_FLOOR)
        base = {"pair": index, "he2_pushed": he_sq, "w_ab": w.value, "gap": w.gap, "w2_bound": w2_bound}
        return [(float(first), {**base, "link": "he2<=w_ab"}), (float(second), {**base, "link": "w_ab<=C/4*w2"})]

    outcomes = [o for pair in map_ordered(evaluate, range(len(pairs)), threads) for o in pair]
    return _report("hkc", outcomes, rtol)


def eti_harness(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    pairs: Sequence[MeasurePair],
    kappas: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
    solver: Optional[SolverConfig] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """
    T_{0,kC}(mu0 P, mu1 P) <= upper bound of T_{k,kC}(mu0, mu1), a necessary
    consequence of the entropic contraction (the exact right side is only
    known as an interval).
    """
    config = config or HarnessConfig()
    tol = config.tol if tol is None else tol
    kappas = config.kappa_grid if kappas is None else kappas
    _require_constant(C)
    pushed = [(apply_to_measure(mu0, P), apply_to_measure(mu1, P)) for mu0, mu1 in pairs]
    cases = [(kappa, index) for kappa in kappas for index in range(len(pairs))]
    notes: List[str] = []

    def evaluate(case):
        kappa, index = case
        b = kappa * C
        lhs = renyi_T0b(DivParams(0.0, b), *pushed[index]).value
        params = DivParams(kappa, b)
        d = _dirac_distance(space, *pairs[index])
        if d is not None:
            rhs = t_point_mass_bounds(params, d)[1]
        else:
            rhs = t_ab_upper(params, pairs[index][0], pairs[index][1], space, solver).certified
        if lhs == np.inf and np.isfinite(rhs):
            violation = float("inf")
        elif rhs == np.inf:
            violation = -1.0
        else:
            violation = _relative(lhs, rhs)
        return violation, {"pair": index, "kappa": float(kappa), "b": b, "lhs": lhs, "rhs_upper": rhs}

    outcomes = map_ordered(evaluate, cases, threads)
    for violation, details in outcomes:
        if violation == np.inf:
            notes.append(f"infinite left side with finite bound at pair {details['pair']} (support mismatch)")
    return _report("eti", list(outcomes), tol, notes=notes)


def kuwada_harness(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    pairs: Sequence[MeasurePair],
    rtol: Optional[float] = None,
    solver: Optional[SolverConfig] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """W_2^2(mu0 P, mu1 P) <= C W_2^2(mu0, mu1)."""
    config = config or HarnessConfig()
    rtol = config.kuwada_rtol if rtol is None else rtol
    if not (np.isfinite(C) and C >= 0):
        raise LabValidationError(f"constant must be >= 0, got {C}", field="C")

    def evaluate(index):
        mu0, mu1 = pairs[index]
        lhs = wasserstein2_sq(apply_to_measure(mu0, P), apply_to_measure(mu1, P), space, solver).value
        base = wasserstein2_sq(mu0, mu1, space, solver).value
        rhs = C * base
        factor = lhs / base if base > 0 else None
        return _relative(lhs, rhs), {"pair": index, "w2_pushed": lhs, "w2": base, "bound": rhs, "factor": factor}

    return _report("kuwada", map_ordered(evaluate, range(len(pairs)), threads), rtol)


def poincare_type_check(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    a: float,
    b: float,
    gamma: float,
    delta: float,
    dictionary: LipschitzDictionary,
    tol: Optional[float] = None,
    config: Optional[HarnessConfig] = None,
) -> HarnessReport:
    """a|grad Pf|^2 + b(Pf)^2 <= gamma P|grad f|^2 + delta P(f^2) at every point, for f and f - mean(f)."""
    config = config or HarnessConfig()
    tol = config.tol if tol is None else tol
    _check_inputs(P, space, dictionary)
    G = dictionary.matrix
    F = np.hstack([G, G - G.mean(axis=0)])
    PF = P.matrix @ F
    lhs = a * discrete_gradient(space, PF) ** 2 + b * PF**2
    rhs = gamma * (P.matrix @ discrete_gradient(space, F) ** 2) + delta * (P.matrix @ F**2)
    violations = (lhs - rhs) / np.maximum(np.abs(rhs), RELATIVE_FLOOR)
    x, column = np.unravel_index(int(np.argmax(violations)), violations.shape)
    m = G.shape[1]
    details = {
        "x": int(x),
        "f_index": int(column % m),
        "centred": bool(column >= m),
        "lhs": float(lhs[x, column]),
        "rhs": float(rhs[x, column]),
    }
    worst = float(violations[x, column])
    report = _report("poincare", [(worst, details)], tol)
    report.trials = int(violations.size)
    return report


def poincare_contraction_harness(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    a: float,
    b: float,
    gamma: float,
    delta: float,
    pairs: Sequence[MeasurePair],
    rtol: Optional[float] = None,
    solver: Optional[SolverConfig] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """W_{gamma,delta}(mu0 P, mu1 P) <= W_{a,b}(mu0, mu1), gaps as slack."""
    config = config or HarnessConfig()
    rtol = config.hkc_rtol if rtol is None else rtol
    pushed_params, base_params = WParams(gamma, delta), WParams(a, b)

    def evaluate(index):
        mu0, mu1 = pairs[index]
        lhs = _trusted(evaluate_w_ab(pushed_params, apply_to_measure(mu0, P), apply_to_measure(mu1, P), space, solver), "poincare-contraction")
        rhs = _trusted(evaluate_w_ab(base_params, mu0, mu1, space, solver), "poincare-contraction")
        violation = (lhs.value - lhs.gap - rhs.value - rhs.gap) / max(rhs.value, RELATIVE_FLOOR)
        return float(violation), {"pair": index, "w_pushed": lhs.value, "w": rhs.value, "gaps": [lhs.gap, rhs.gap]}

    return _report("poincare-contraction", map_ordered(evaluate, range(len(pairs)), threads), rtol)


def entropic_gradient_harness(
    P: MarkovKernel,
    space: FiniteMetricSpace,
    C: float,
    kappa: float,
    epsilon: float,
    pairs: Sequence[MeasurePair],
    dictionary: LipschitzDictionary,
    tol: Optional[float] = None,
    solver: Optional[SolverConfig] = None,
    config: Optional[HarnessConfig] = None,
    threads: int = 1,
) -> HarnessReport:
    """Certified lower bound of T_{kC,eps}(mu0 P, mu1 P) <= upper bound of T_{k,eps}(mu0, mu1)."""
    config = config or HarnessConfig()
    tol = config.tol if tol is None else tol
    if not (np.isfinite(C) and C >= 0):
        raise LabValidationError(f"constant must be >= 0, got {C}", field="C")
    pushed_params, base_params = DivParams(kappa * C, epsilon), DivParams(kappa, epsilon)

    def evaluate(index):
        mu0, mu1 = pairs[index]
        lower = t_ab_lower(pushed_params, apply_to_measure(mu0, P), apply_to_measure(mu1, P), space, dictionary).value
        d = _dirac_distance(space, mu0, mu1)
        upper = t_point_mass_bounds(base_params, d)[1] if d is not None else t_ab_upper(base_params, mu0, mu1, space, solver).certified
        violation = -1.0 if upper == np.inf else _relative(lower, upper)
        return violation, {"pair": index, "lower_pushed": lower, "upper": upper, "kappa": kappa, "epsilon": epsilon}

    return _report("l1lnl", map_ordered(evaluate, range(len(pairs)), threads), tol)
