import pytest

from hklab_lib.config import DictionaryConfig, HarnessConfig, LabConfig
from hklab_lib.exceptions import LabValidationError
from hklab_lib.markov import MarkovKernel, heat_kernel_grid
from hklab_lib.space import FiniteMetricSpace, build_dictionary
from hklab_lib.suite_manager import SUITE_ORDER, SuiteContext, SuiteRunner


@pytest.fixture(scope="module")
def grid():
    return FiniteMetricSpace.grid(0.05, 3.0)


@pytest.fixture(scope="module")
def dictionary(grid):
    return build_dictionary(grid, DictionaryConfig(max_anchors=8, random_functions=2))


@pytest.fixture
def config() -> LabConfig:
    return LabConfig(harness=HarnessConfig(trials=200, pairs=5))


@pytest.fixture
def heat_context(grid, dictionary, config) -> SuiteContext:
    return SuiteContext(heat_kernel_grid(grid, 0.25), grid, dictionary, config=config, points=grid.interior(2.5))


def test_expand_keeps_run_order(heat_context):
    runner = SuiteRunner(heat_context)
    assert runner.expand(["whi", "increment", "hpi"]) == ["increment", "hpi", "whi"]
    assert runner.expand(["all"]) == list(SUITE_ORDER)
    assert runner.expand(["hpi", "all", "hpi"]) == list(SUITE_ORDER)
    with pytest.raises(LabValidationError) as excinfo:
        runner.expand(["hpi", "lsi"])
    assert excinfo.value.field == "suite"


def test_absent_constant_fails_the_suite(grid, dictionary, config):
    runner = SuiteRunner(SuiteContext(MarkovKernel.identity(grid.n), grid, dictionary, config=config))
    (report,) = runner.run(["hpi"])
    assert report.id == "hpi"
    assert not report.passed
    assert report.trials == 0
    assert "absent" in report.notes[0]


def test_increment_suite_needs_no_constant(heat_context):
    runner = SuiteRunner(heat_context)
    (report,) = runner.run(["increment"])
    assert report.passed
    assert report.notes[-1] == "constant: none"
    assert runner.estimates == {}


def test_estimates_are_computed_once_per_constant(heat_context):
    runner = SuiteRunner(heat_context)
    reports = runner.run(["hpi", "hkc"])
    assert [r.id for r in reports] == ["hpi", "hkc"]
    assert set(runner.estimates) == {"rpi"}
    value = runner.estimates["rpi"].value
    assert all(r.notes[-1] == f"constant: {value!r}" for r in reports)


def test_explicit_constant_is_used_for_every_suite(heat_context):
    # rlsi constant of the heat kernel at variance 1/2 is 4; 4.4 covers hpi, whi and ihi
    heat_context.constant = 4.4
    runner = SuiteRunner(heat_context)
    reports = runner.run(["increment", "hpi", "whi", "ihi"])
    assert [r.id for r in reports] == ["increment", "hpi", "whi", "ihi-strong", "ihi-weak"]
    assert runner.estimates == {}
    failed = [(r.id, r.worst_case) for r in reports if not r.passed]
    assert not failed
    assert all(r.notes[-1] == "constant: 4.4" for r in reports[1:])


def test_poincare_suite_skips_contraction_on_large_spaces(dictionary, config):
    big = FiniteMetricSpace.grid(0.01, 1.5)
    runner = SuiteRunner(SuiteContext(
        heat_kernel_grid(big, 0.05),
        big,
        build_dictionary(big, DictionaryConfig(max_anchors=4, random_functions=0)),
        config=config,
        constant=2.0,
    ))
    reports = runner.run(["poincare"])
    assert [r.id for r in reports] == ["poincare"]
    assert any("skipped" in note for note in reports[0].notes)
