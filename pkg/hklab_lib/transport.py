"""
The W_{a,b} family of transport distances.

Endpoints are exact: b = 0 is a rescaled squared Wasserstein distance solved
by network simplex, a = 0 a rescaled squared Hellinger distance. The interior
is the logarithmic entropy transport (LET) program on a rescaled metric:

    W_{a,b}(d) = (1/b) * LET(d * sqrt(b) / (2 sqrt(a)))

    LET = min_gamma KL(gamma_0 | mu0) + KL(gamma_1 | mu1) + <gamma, l(d)>,
    l(d) = -2 ln cos(d) for d < pi/2, +inf otherwise.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
import ot
from scipy import sparse
from scipy.special import logsumexp

from .config import SolverConfig
from .data_structures import HarnessReport, LETSolution, WResult
from .exceptions import LabValidationError, SolverConvergenceError
from .space import DiscreteMeasure, FiniteMetricSpace, check_same_space

logger = logging.getLogger(__name__)

HALF_PI = np.pi / 2
CONVEX_SOLVER = "CLARABEL" if "CLARABEL" in cp.installed_solvers() else "SCS"


@dataclass(frozen=True)
class WParams:
    """Weights of the gradient (a) and zeroth-order (b) terms."""
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise LabValidationError("a and b must be finite", field="WParams")
        if self.a < 0 or self.b < 0:
            raise LabValidationError(f"a, b must be >= 0, got ({self.a}, {self.b})", field="WParams")
        if self.a == 0 and self.b == 0:
            raise LabValidationError("a and b cannot both be 0", field="WParams")

    def scaled(self, c: float) -> "WParams":
        return WParams(c * self.a, c * self.b)


@dataclass
class OTResult:
    value: float
    coupling: np.ndarray


def hellinger_sq(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> float:
    """sum_i (sqrt(mu1_i) - sqrt(mu0_i))^2, in [0, 2] for probabilities."""
    check_same_space(mu0.n, mu1)
    return float(np.sum((np.sqrt(mu1.weights) - np.sqrt(mu0.weights)) ** 2))


def exact_transport(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    cost: np.ndarray,
    config: Optional[SolverConfig] = None,
) -> OTResult:
    """Balanced optimal transport by network simplex, restricted to the supports."""
    config = config or SolverConfig()
    check_same_space(mu0.n, mu1)
    rows, cols = mu0.support, mu1.support
    a = mu0.weights[rows] / mu0.weights[rows].sum()
    b = mu1.weights[cols] / mu1.weights[cols].sum()
    sub_cost = np.asarray(cost, dtype=float)[np.ix_(rows, cols)]
    scale = float(sub_cost.max()) if sub_cost.size and sub_cost.max() > 0 else 1.0
    plan = ot.emd(a, b, sub_cost / scale, numItermax=config.emd_max_iterations)
    coupling = np.zeros((mu0.n, mu1.n))
    coupling[np.ix_(rows, cols)] = plan
    return OTResult(value=float(np.sum(plan * sub_cost)), coupling=coupling)


def wasserstein2_sq(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    config: Optional[SolverConfig] = None,
) -> OTResult:
    """Exact squared 2-Wasserstein distance with an optimal coupling."""
    check_same_space(space.n, mu0, mu1)
    mu0.require_probability("mu0")
    mu1.require_probability("mu1")
    return exact_transport(mu0, mu1, space.dist**2, config)


def let_cost(dist: np.ndarray) -> np.ndarray:
    """-2 ln cos(d), +inf from d = pi/2 on."""
    dist = np.asarray(dist, dtype=float)
    cost = np.full(dist.shape, np.inf)
    finite = dist < HALF_PI
    cost[finite] = -2.0 * np.log(np.cos(dist[finite]))
    return cost


def _kl(rho: np.ndarray, mu: np.ndarray) -> float:
    """sum rho ln(rho/mu) - rho + mu with 0 ln 0 = 0."""
    positive = rho > 0
    return float(np.sum(rho[positive] * np.log(rho[positive] / mu[positive])) - rho.sum() + mu.sum())


def let_objective(coupling: np.ndarray, mu0: np.ndarray, mu1: np.ndarray, cost: np.ndarray) -> float:
    """LET objective of an arbitrary nonnegative coupling (+inf on infinite-cost mass)."""
    coupling = np.asarray(coupling, dtype=float)
    positive = coupling > 0
    if np.any(~np.isfinite(cost[positive])):
        return float("inf")
    transport = float(np.sum(coupling[positive] * cost[positive]))
    return _kl(coupling.sum(axis=1), np.asarray(mu0, float)) + _kl(coupling.sum(axis=0), np.asarray(mu1, float)) + transport


def let_dual(u: np.ndarray, v: np.ndarray, mu0: np.ndarray, mu1: np.ndarray) -> float:
    """sum mu0 (1 - e^{-u}) + sum mu1 (1 - e^{-v}); a lower bound whenever u_i + v_j <= cost_ij."""
    return float(np.sum(mu0 * -np.expm1(-u)) + np.sum(mu1 * -np.expm1(-v)))


def _c_transform(cost: np.ndarray, potential: np.ndarray, axis: int) -> np.ndarray:
    # largest feasible partner potential
    if axis == 0:
        return np.min(cost - potential[:, None], axis=0)
    return np.min(cost - potential[None, :], axis=1)


def _dual_certificate(plan: np.ndarray, a: np.ndarray, b: np.ndarray, cost: np.ndarray, cap: float) -> float:
    marginal = plan.sum(axis=1)
    with np.errstate(divide="ignore"):
        u = np.where(marginal > 0, np.log(a / np.maximum(marginal, 1e-300)), cap)
    u = np.minimum(u, cap)
    v = _c_transform(cost, u, axis=0)
    best = let_dual(u, v, a, b)
    for _ in range(2):
        u = np.minimum(_c_transform(cost, v, axis=1), cap)
        v = _c_transform(cost, u, axis=0)
        best = max(best, let_dual(u, v, a, b))
    return best


def _scaling_stage(a, b, cost, finite, eps, f, g, config: SolverConfig) -> Tuple[np.ndarray, np.ndarray, int]:
    log_a, log_b = np.log(a), np.log(b)
    damping = 1.0 / (1.0 + eps)
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        exponent = np.where(finite, (g[None, :] - cost) / eps, -np.inf) + log_b[None, :]
        f_new = -damping * eps * logsumexp(exponent, axis=1)
        exponent = np.where(finite, (f_new[:, None] - cost) / eps, -np.inf) + log_a[:, None]
        g_new = -damping * eps * logsumexp(exponent, axis=0)
        change = max(np.max(np.abs(f_new - f)), np.max(np.abs(g_new - g)))
        f, g = f_new, g_new
        if change < config.stage_tolerance:
            break
    return f, g, iterations


def _scaling_plan(a, b, cost, finite, eps, f, g) -> np.ndarray:
    exponent = np.where(finite, (f[:, None] + g[None, :] - cost) / eps, -np.inf)
    return np.exp(exponent + np.log(a)[:, None] + np.log(b)[None, :])


def _exact_plan(a: np.ndarray, b: np.ndarray, cost: np.ndarray, finite: np.ndarray) -> Optional[np.ndarray]:
    rows, cols = np.nonzero(finite)
    k = len(rows)
    select0 = sparse.csr_matrix((np.ones(k), (rows, np.arange(k))), shape=(len(a), k))
    select1 = sparse.csr_matrix((np.ones(k), (cols, np.arange(k))), shape=(len(b), k))
    x = cp.Variable(k, nonneg=True)
    marginal0 = select0 @ x
    marginal1 = select1 @ x
    objective = (
        cp.sum(cp.rel_entr(marginal0, a)) - cp.sum(marginal0)
        + cp.sum(cp.rel_entr(marginal1, b)) - cp.sum(marginal1)
        + cost[rows, cols] @ x
    )
    problem = cp.Problem(cp.Minimize(objective))
    try:
        problem.solve(solver=CONVEX_SOLVER)
    except cp.SolverError as e:
        logger.warning("Exact LET solve failed: %s", e)
        return None
    if x.value is None or problem.status not in ("optimal", "optimal_inaccurate"):
        logger.warning("Exact LET solve ended with status %s", problem.status)
        return None
    plan = np.zeros(finite.shape)
    plan[rows, cols] = np.clip(x.value, 0.0, None)
    return plan


def _stationarity_residual(plan: np.ndarray, a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    """max |ln(gamma_0/mu0)_i + ln(gamma_1/mu1)_j + cost_ij| over the significant entries."""
    if plan.max() <= 0:
        return 0.0
    active = plan > 1e-9 * plan.max()
    with np.errstate(divide="ignore"):
        log0 = np.log(plan.sum(axis=1) / a)
        log1 = np.log(plan.sum(axis=0) / b)
    terms = log0[:, None] + log1[None, :] + cost
    return float(np.max(np.abs(terms[active])))


def _richardson(epsilons: List[float], values: List[float]) -> Optional[float]:
    # linear extrapolation of the regularised values to eps = 0
    if len(values) < 2:
        return None
    e1, e2 = epsilons[-2], epsilons[-1]
    v1, v2 = values[-2], values[-1]
    return v2 + (v2 - v1) * e2 / (e1 - e2)


def let_solve(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    config: Optional[SolverConfig] = None,
    scale: float = 1.0,
) -> LETSolution:
    """
    Solves the LET program on ``scale * space.dist``.

    Entropic scaling over a geometric epsilon schedule, then an exact convex
    solve when the certified gap is still above tolerance (always for supports
    of at most ``exact_fallback_size`` points). The returned value is the
    objective of the returned coupling and ``dual_value`` is a feasible dual
    objective built from it by c-transforms.
    """
    config = config or SolverConfig()
    check_same_space(space.n, mu0, mu1)
    rows, cols = mu0.support, mu1.support
    coupling = np.zeros((space.n, space.n))
    if len(rows) == 0 or len(cols) == 0:
        value = mu0.mass + mu1.mass
        return LETSolution(value, coupling, coupling.sum(axis=1), coupling.sum(axis=0), dual_value=value)

    cost_full = let_cost(scale * space.dist[np.ix_(rows, cols)])
    finite_full = np.isfinite(cost_full)
    live_rows = np.flatnonzero(finite_full.any(axis=1))
    live_cols = np.flatnonzero(finite_full.any(axis=0))
    a_all, b_all = mu0.weights[rows], mu1.weights[cols]
    dead_mass = a_all.sum() - a_all[live_rows].sum() + b_all.sum() - b_all[live_cols].sum()

    if len(live_rows) == 0:
        value = mu0.mass + mu1.mass
        logger.debug("LET: no pair closer than pi/2, pure creation and annihilation")
        return LETSolution(value, coupling, coupling.sum(axis=1), coupling.sum(axis=0), dual_value=value)

    a, b = a_all[live_rows], b_all[live_cols]
    cost = cost_full[np.ix_(live_rows, live_cols)]
    finite = np.isfinite(cost)

    epsilons: List[float] = []
    stage_values: List[float] = []
    iterations = 0
    plan = None
    use_scaling = max(len(a), len(b)) > config.exact_fallback_size
    if use_scaling:
        f = np.zeros(len(a))
        g = np.zeros(len(b))
        for eps in config.epsilons():
            f, g, used = _scaling_stage(a, b, cost, finite, eps, f, g, config)
            iterations += used
            plan = _scaling_plan(a, b, cost, finite, eps, f, g)
            epsilons.append(eps)
            stage_values.append(let_objective(plan, a, b, cost))
            logger.debug("LET stage eps=%.1e iterations=%d value=%.12g", eps, used, stage_values[-1])

    polished = False
    value = let_objective(plan, a, b, cost) if plan is not None else np.inf
    dual = _dual_certificate(plan, a, b, cost, config.dual_cap) if plan is not None else -np.inf
    needs_exact = plan is None or value - dual > config.gap_tolerance * max(value, 1e-3 * (a.sum() + b.sum()))
    if needs_exact and (config.polish or not use_scaling):
        exact = _exact_plan(a, b, cost, finite)
        if exact is not None:
            exact_value = let_objective(exact, a, b, cost)
            if exact_value <= value:
                plan, value = exact, exact_value
                polished = True
            dual = max(dual, _dual_certificate(exact, a, b, cost, config.dual_cap))

    if plan is None:
        plan = np.zeros((len(a), len(b)))
        value = let_objective(plan, a, b, cost)
        dual = let_dual(np.full(len(a), config.dual_cap), _c_transform(cost, np.full(len(a), config.dual_cap), 0), a, b)

    sub = coupling[np.ix_(rows, cols)]
    sub[np.ix_(live_rows, live_cols)] = plan
    coupling[np.ix_(rows, cols)] = sub
    total = value + dead_mass
    dual_total = min(dual + dead_mass, total)
    gap = total - dual_total
    trusted = gap <= config.gap_tolerance * max(total, 1e-3 * (mu0.mass + mu1.mass))
    residual = _stationarity_residual(plan, a, b, cost)
    if not trusted:
        logger.warning("LET gap %.3e above tolerance (value %.12g)", gap, total)
    return LETSolution(
        value=total,
        coupling=coupling,
        marginal0=coupling.sum(axis=1),
        marginal1=coupling.sum(axis=0),
        dual_value=dual_total,
        iterations=iterations,
        epsilon_schedule=epsilons,
        stage_values=stage_values,
        extrapolated_value=None if not stage_values else _richardson(epsilons, [v + dead_mass for v in stage_values]),
        primal_residual=residual,
        polished=polished,
        trusted=trusted,
    )


def evaluate_w_ab(
    params: WParams,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    config: Optional[SolverConfig] = None,
) -> WResult:
    """W_{a,b} with the route taken and, for the interior, the LET gap."""
    check_same_space(space.n, mu0, mu1)
    mu0.require_probability("mu0")
    mu1.require_probability("mu1")
    a, b = params.a, params.b
    if np.array_equal(mu0.weights, mu1.weights):
        return WResult(0.0, "identical")
    if b == 0:
        return WResult(wasserstein2_sq(mu0, mu1, space, config).value / (4.0 * a), "wasserstein")
    if a == 0:
        return WResult(hellinger_sq(mu0, mu1) / b, "hellinger")
    factor = np.sqrt(b) / (2.0 * np.sqrt(a))
    solution = let_solve(mu0, mu1, space, config, scale=factor)
    return WResult(solution.value / b, "let", gap=solution.gap / b, trusted=solution.trusted, solution=solution)


def w_ab(
    params: WParams,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    config: Optional[SolverConfig] = None,
) -> float:
    """W_{a,b}(mu0, mu1); raises SolverConvergenceError on an uncertified LET value."""
    result = evaluate_w_ab(params, mu0, mu1, space, config)
    if not result.trusted:
        raise SolverConvergenceError(
            f"LET gap {result.gap:.3e} above tolerance for (a, b) = ({params.a}, {params.b})",
            solution=result.solution,
        )
    return result.value


def w_dirac_closed_form(params: WParams, d: float) -> float:
    """W_{a,b}(delta_x, delta_y) at distance d."""
    a, b = params.a, params.b
    if b == 0:
        return d * d / (4.0 * a)
    if a == 0:
        return 0.0 if d == 0 else 2.0 / b
    angle = min(np.sqrt(b) / (2.0 * np.sqrt(a)) * d, HALF_PI)
    return (2.0 - 2.0 * np.cos(angle)) / b


def w_dirac_bound(params: WParams, d: float) -> float:
    """d^2/(4a) ^ 2/b."""
    bound = np.inf
    if params.a > 0:
        bound = d * d / (4.0 * params.a)
    if params.b > 0:
        bound = min(bound, 2.0 / params.b)
    return bound


def w_family_checks(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    space: FiniteMetricSpace,
    param_grid: Sequence[WParams],
    scale_factors: Sequence[float] = (2.0,),
    monotone_tol: float = 1e-6,
    scaling_rtol: float = 1e-4,
    config: Optional[SolverConfig] = None,
) -> HarnessReport:
    """
    Monotonicity in (a, b), the scaling law W_{ca,cb} = W_{a,b}/c and, for two
    Diracs, the bound W_{a,b} <= d^2/(4a) ^ 2/b. Failures become report entries.
    """
    cache: Dict[Tuple[float, float], WResult] = {}

    def value(params: WParams) -> WResult:
        key = (params.a, params.b)
        if key not in cache:
            cache[key] = evaluate_w_ab(params, mu0, mu1, space, config)
        return cache[key]

    trials = 0
    worst = 0.0
    worst_case: Dict = {}
    notes: List[str] = []

    def record(kind: str, violation: float, details: Dict):
        nonlocal worst, worst_case
        if violation > worst:
            worst = violation
            worst_case = {"check": kind, **details}
        if violation > 0:
            notes.append(f"{kind} violated: {details}")

    for p, q in itertools.permutations(param_grid, 2):
        if p.a <= q.a and p.b <= q.b:
            trials += 1
            lo, hi = value(q), value(p)
            violation = lo.value - hi.value - monotone_tol - lo.gap - hi.gap
            record("monotonicity", violation, {"small": [p.a, p.b], "large": [q.a, q.b], "w_small": hi.value, "w_large": lo.value})

    for p in param_grid:
        base = value(p)
        for c in scale_factors:
            trials += 1
            scaled = value(p.scaled(c))
            target = base.value / c
            slack = scaling_rtol * max(abs(target), 1e-12) + scaled.gap + base.gap / c
            violation = abs(scaled.value - target) - slack
            record("scaling", violation, {"params": [p.a, p.b], "c": c, "w_scaled": scaled.value, "w_over_c": target})

    if mu0.is_dirac() and mu1.is_dirac():
        d = float(space.dist[mu0.support[0], mu1.support[0]])
        for p in param_grid:
            trials += 1
            result = value(p)
            violation = result.value - w_dirac_bound(p, d) - monotone_tol - result.gap
            record("dirac-bound", violation, {"params": [p.a, p.b], "d": d, "w": result.value})

    untrusted = [k for k, r in cache.items() if not r.trusted]
    if untrusted:
        notes.append(f"uncertified LET values at {untrusted}")
    return HarnessReport(
        id="w-family",
        trials=trials,
        tol=monotone_tol,
        max_violation=worst,
        worst_case=worst_case,
        passed=worst <= 0 and not untrusted,
        notes=notes,
    )


def triangle_residuals(
    measures: Sequence[DiscreteMeasure],
    params: WParams,
    space: FiniteMetricSpace,
    config: Optional[SolverConfig] = None,
) -> List[Dict]:
    """sqrt W(x,z) - sqrt W(x,y) - sqrt W(y,z) for every ordered triple; positive means a triangle defect."""
    k = len(measures)
    root = np.zeros((k, k))
    for i, j in itertools.combinations(range(k), 2):
        root[i, j] = root[j, i] = np.sqrt(max(w_ab(params, measures[i], measures[j], space, config), 0.0))
    residuals = []
    for i, j, m in itertools.permutations(range(k), 3):
        residuals.append({"x": i, "y": j, "z": m, "residual": float(root[i, m] - root[i, j] - root[j, m])})
    return residuals
