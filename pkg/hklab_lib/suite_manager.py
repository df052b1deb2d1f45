"""
Verification suites: named harness runs against one kernel.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import LabConfig
from .data_structures import ConstantEstimate, HarnessReport
from .exceptions import LabValidationError
from .funcineq import (
    ESTIMATORS,
    entropic_gradient_harness,
    eti_harness,
    hkc_harness,
    hpi_check,
    ihi_check,
    increment_lemma_check,
    kuwada_harness,
    poincare_contraction_harness,
    poincare_type_check,
    sample_measure_pairs,
    whi_check,
)
from .markov import MarkovKernel
from .space import FiniteMetricSpace, LipschitzDictionary

logger = logging.getLogger(__name__)

SUITE_ORDER = ("increment", "hpi", "hkc", "whi", "ihi", "eti", "kuwada", "poincare", "l1lnl")

# Which estimated constant each suite consumes.
SUITE_CONSTANTS = {
    "increment": None,
    "hpi": "rpi",
    "hkc": "rpi",
    "whi": "rlsi",
    "ihi": "rlsi",
    "eti": "rlsi",
    "kuwada": "grad",
    "poincare": "grad",
    "l1lnl": "l1lnl",
}

CONTRACTION_MAX_POINTS = 256
CONTRACTION_PAIRS = 4
ENTROPIC_KAPPA = 1.0
ENTROPIC_EPSILON = 1.0


@dataclass
class SuiteContext:
    kernel: MarkovKernel
    space: FiniteMetricSpace
    dictionary: LipschitzDictionary
    config: LabConfig = field(default_factory=LabConfig)
    seed: int = 0
    threads: int = 1
    points: Optional[Sequence[int]] = None
    constant: Optional[float] = None


class SuiteRunner:
    """Runs harness suites by id, estimating the constants they need once."""

    def __init__(self, context: SuiteContext):
        self.context = context
        self.estimates: Dict[str, ConstantEstimate] = {}
        self.suites: Dict[str, Callable[[float], List[HarnessReport]]] = {
            "increment": self._run_increment,
            "hpi": self._run_hpi,
            "hkc": self._run_hkc,
            "whi": self._run_whi,
            "ihi": self._run_ihi,
            "eti": self._run_eti,
            "kuwada": self._run_kuwada,
            "poincare": self._run_poincare,
            "l1lnl": self._run_l1lnl,
        }

    def expand(self, selection: Sequence[str]) -> List[str]:
        """Resolves 'all' and returns the selection in run order."""
        wanted = set()
        for suite_id in selection:
            if suite_id == "all":
                wanted.update(SUITE_ORDER)
            elif suite_id in self.suites:
                wanted.add(suite_id)
            else:
                raise LabValidationError(f"unknown suite {suite_id!r}", field="suite")
        return [suite_id for suite_id in SUITE_ORDER if suite_id in wanted]

    def estimate(self, which: str) -> ConstantEstimate:
        if which not in self.estimates:
            ctx = self.context
            self.estimates[which] = ESTIMATORS[which](ctx.kernel, ctx.space, ctx.dictionary, ctx.config.estimator)
        return self.estimates[which]

    def constant_for(self, suite_id: str) -> Optional[float]:
        """The explicit --constant if given, else the suite's estimate (None if absent)."""
        if self.context.constant is not None:
            return self.context.constant
        which = SUITE_CONSTANTS[suite_id]
        if which is None:
            return None
        return self.estimate(which).value

    def run(self, selection: Sequence[str]) -> List[HarnessReport]:
        reports: List[HarnessReport] = []
        for suite_id in self.expand(selection):
            C = self.constant_for(suite_id)
            if SUITE_CONSTANTS[suite_id] is not None and C is None:
                logger.warning("Suite %s skipped: constant absent", suite_id)
                reports.append(HarnessReport(
                    id=suite_id, trials=0, tol=0.0, max_violation=float("inf"), passed=False,
                    notes=[f"{SUITE_CONSTANTS[suite_id]} constant is absent for this kernel"],
                ))
                continue
            logger.info("Running suite %s with C = %s", suite_id, C)
            for report in self.suites[suite_id](C):
                report.notes.append(f"constant: {C!r}" if C is not None else "constant: none")
                reports.append(report)
        return reports

    # --- suites ---
    def _pairs(self):
        ctx = self.context
        return sample_measure_pairs(ctx.space, ctx.config.harness.pairs, seed=ctx.seed, points=ctx.points)

    def _point_pairs(self):
        ctx = self.context
        points = np.arange(ctx.space.n) if ctx.points is None else np.asarray(ctx.points)
        rng = np.random.default_rng(ctx.seed)
        return [tuple(int(v) for v in rng.choice(points, size=2, replace=False)) for _ in range(ctx.config.harness.pairs)]

    def _run_increment(self, C):
        ctx = self.context
        return [increment_lemma_check(ctx.kernel, ctx.space, ctx.dictionary, seed=ctx.seed, config=ctx.config.harness, threads=ctx.threads)]

    def _run_hpi(self, C):
        ctx = self.context
        return [hpi_check(ctx.kernel, ctx.space, C, ctx.dictionary, seed=ctx.seed, points=ctx.points, config=ctx.config.harness, threads=ctx.threads)]

    def _run_hkc(self, C):
        ctx = self.context
        return [hkc_harness(ctx.kernel, ctx.space, C, self._pairs(), solver=ctx.config.solver, config=ctx.config.harness, threads=ctx.threads)]

    def _run_whi(self, C):
        ctx = self.context
        return [whi_check(ctx.kernel, ctx.space, C, ctx.dictionary, seed=ctx.seed, points=ctx.points, config=ctx.config.harness, threads=ctx.threads)]

    def _run_ihi(self, C):
        ctx = self.context
        pairs = self._point_pairs()
        return [ihi_check(ctx.kernel, ctx.space, C, pairs, form=form, config=ctx.config.harness) for form in ("strong", "weak")]

    def _run_eti(self, C):
        ctx = self.context
        return [eti_harness(ctx.kernel, ctx.space, C, self._pairs(), solver=ctx.config.solver, config=ctx.config.harness, threads=ctx.threads)]

    def _run_kuwada(self, C):
        ctx = self.context
        return [kuwada_harness(ctx.kernel, ctx.space, C, self._pairs(), solver=ctx.config.solver, config=ctx.config.harness, threads=ctx.threads)]

    def _run_poincare(self, C):
        ctx = self.context
        reports = [poincare_type_check(ctx.kernel, ctx.space, 1.0, 1.0, C, 1.0, ctx.dictionary, config=ctx.config.harness)]
        if ctx.space.n <= CONTRACTION_MAX_POINTS:
            pairs = self._pairs()[:CONTRACTION_PAIRS]
            reports.append(poincare_contraction_harness(
                ctx.kernel, ctx.space, 1.0, 1.0, C, 1.0, pairs, solver=ctx.config.solver, config=ctx.config.harness, threads=ctx.threads,
            ))
        else:
            reports[0].notes.append(f"contraction run skipped above {CONTRACTION_MAX_POINTS} points")
        return reports

    def _run_l1lnl(self, C):
        ctx = self.context
        return [entropic_gradient_harness(
            ctx.kernel, ctx.space, C, ENTROPIC_KAPPA, ENTROPIC_EPSILON, self._pairs(), ctx.dictionary,
            solver=ctx.config.solver, config=ctx.config.harness, threads=ctx.threads,
        )]
