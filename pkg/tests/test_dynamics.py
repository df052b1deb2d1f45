import numpy as np
import pytest

from hklab_lib.dynamics import (
    LangevinConfig,
    _reflect,
    equilibrium_measure,
    gaussian_quasi_invariance,
    hellinger_decay_experiment,
    potential_from_dict,
    quadratic_potential,
    quartic_potential,
    simulate_langevin,
    user_potential,
    w2_decay_experiment,
)
from hklab_lib.exceptions import LabValidationError
from hklab_lib.space import DiscreteMeasure, FiniteMetricSpace


@pytest.fixture
def small_run() -> LangevinConfig:
    return LangevinConfig(quadratic_potential(1.0), step=0.01, horizon=0.2, paths=2000, chunks=4, batches=10, seed=11)


def test_user_potential_is_differentiated_symbolically():
    potential = user_potential("x**2/2", convexity=1.0, lipschitz=1.0)
    assert np.allclose(potential.gradient(np.array([1.0, -2.0])), [1.0, -2.0])
    assert np.allclose(potential.value(np.array([2.0])), [2.0])
    linear = user_potential("3*x", convexity=0.0, lipschitz=0.0)
    assert np.allclose(linear.gradient(np.array([0.0, 5.0])), [3.0, 3.0])


def test_user_potential_rejects_other_symbols():
    with pytest.raises(LabValidationError) as excinfo:
        user_potential("x*y", convexity=1.0, lipschitz=1.0)
    assert excinfo.value.field == "potential.expression"
    with pytest.raises(LabValidationError):
        user_potential("x**", convexity=1.0, lipschitz=1.0)


def test_quartic_potential_needs_a_box():
    with pytest.raises(LabValidationError):
        quartic_potential(1.0, None)
    potential = quartic_potential(2.0, 1.5)
    assert potential.lipschitz == pytest.approx(3.0 * 2.0 * 1.5**2)


def test_potential_from_dict():
    assert potential_from_dict({"kind": "quadratic", "a": 2.0}).convexity == 2.0
    with pytest.raises(LabValidationError) as excinfo:
        potential_from_dict({"kind": "quadratic"})
    assert excinfo.value.field == "potential.a"
    with pytest.raises(LabValidationError):
        potential_from_dict({"kind": "sextic"})


def test_reflection_keeps_points_in_the_box():
    x = np.array([2.5, -1.2, 0.3, 9.7, -7.0])
    reflected = _reflect(x, 1.0)
    assert reflected[0] == pytest.approx(-0.5)
    assert reflected[2] == pytest.approx(0.3)
    assert np.all(np.abs(reflected) <= 1.0)


def test_config_validation():
    with pytest.raises(LabValidationError):
        LangevinConfig(quadratic_potential(1.0), paths=10)
    with pytest.raises(LabValidationError):
        LangevinConfig(quadratic_potential(1.0), step=0.1, horizon=0.05)


def test_checkpoints_must_align_with_the_step(small_run):
    with pytest.raises(LabValidationError):
        simulate_langevin(small_run, [0.0], [0.105])
    with pytest.raises(LabValidationError):
        simulate_langevin(small_run, [0.0], [0.5])


def test_simulation_is_seeded_and_thread_independent(small_run):
    first = simulate_langevin(small_run, [0.0, 1.0], [0.1, 0.2])
    again = simulate_langevin(small_run, [0.0, 1.0], [0.1, 0.2])
    threaded = simulate_langevin(small_run, [0.0, 1.0], [0.1, 0.2], threads=2)
    assert first.samples.shape == (2, 2, 2000)
    assert np.array_equal(first.samples, again.samples)
    assert np.array_equal(first.samples, threaded.samples)
    assert first.aborted == (0, 0)


def test_simulation_matches_ou_mean(small_run):
    samples = simulate_langevin(small_run, [1.0], [0.2])
    # Euler mean (1 - h)^k
    assert samples.endpoints(0, 0).mean() == pytest.approx(0.99**20, abs=0.05)


def test_equilibrium_rejects_narrow_grid():
    with pytest.raises(LabValidationError):
        equilibrium_measure(quadratic_potential(1.0), FiniteMetricSpace.grid(0.1, 2.0))
    mu = equilibrium_measure(quadratic_potential(1.0), FiniteMetricSpace.grid(0.1, 8.0))
    assert mu.is_probability()


def test_w2_decay_stays_under_envelope(small_run):
    grid = FiniteMetricSpace.grid(0.05, 4.0)
    left = int(np.argmin(np.abs(grid.nodes() + 1.0)))
    right = int(np.argmin(np.abs(grid.nodes() - 1.0)))
    series = w2_decay_experiment(small_run, DiscreteMeasure.dirac(grid.n, left), DiscreteMeasure.dirac(grid.n, right), grid, [0.1, 0.2])
    assert series.metric == "w2_sq"
    assert series.times == (0.1, 0.2)
    assert series.passed, series
    assert series.envelope[0] == pytest.approx(4.0 * np.exp(-0.2), rel=1e-6)


def test_w2_decay_needs_convexity():
    config = LangevinConfig(user_potential("0*x", convexity=0.0, lipschitz=0.0), step=0.01, horizon=0.1, paths=1000)
    grid = FiniteMetricSpace.grid(0.5, 2.0)
    with pytest.raises(LabValidationError):
        w2_decay_experiment(config, DiscreteMeasure.dirac(grid.n, 0), DiscreteMeasure.dirac(grid.n, 1), grid, [0.1])


def test_hellinger_decay_reports_notes_for_the_box():
    config = LangevinConfig(quartic_potential(1.0, 2.0), step=0.01, horizon=0.2, paths=2000, chunks=2, seed=5)
    grid = FiniteMetricSpace.grid(0.05, 2.0)
    series = hellinger_decay_experiment(config, 1.0, grid, [0.1, 0.2])
    assert series.metric == "he2_sq"
    assert any("reflected" in note for note in series.notes)
    assert all(0.0 <= v <= 2.0 for v in series.values)


def test_gaussian_quasi_invariance_passes():
    report = gaussian_quasi_invariance(0.5, 1.0, FiniteMetricSpace.grid(0.02, 12.0))
    assert report.passed, [c for c in report.checks if not c["passed"]]
    assert not report.vacuous
    assert {c["check"] for c in report.checks} == {"t0b", "renyi", "hellinger"}


def test_gaussian_quasi_invariance_subdivides_vacuous_bound():
    report = gaussian_quasi_invariance(0.05, 1.0, FiniteMetricSpace.grid(0.01, 4.0))
    assert report.vacuous
    assert len(report.subdivision) == 3
    assert any("skipped" in note for note in report.notes)
    assert report.passed, [c for c in report.checks if not c["passed"]]


def test_gaussian_quasi_invariance_needs_room():
    with pytest.raises(LabValidationError) as excinfo:
        gaussian_quasi_invariance(0.5, 1.0, FiniteMetricSpace.grid(0.1, 3.0))
    assert excinfo.value.field == "grid_radius"


@pytest.fixture(scope="module")
def long_run() -> LangevinConfig:
    return LangevinConfig(quadratic_potential(1.0), step=1e-3, horizon=1.0, paths=100_000, seed=3)


@pytest.mark.slow
def test_w2_decay_with_many_paths(long_run):
    grid = FiniteMetricSpace.grid(0.05, 5.0)
    left = int(np.argmin(np.abs(grid.nodes() + 1.0)))
    right = int(np.argmin(np.abs(grid.nodes() - 1.0)))
    times = [0.25, 0.5, 1.0]
    series = w2_decay_experiment(long_run, DiscreteMeasure.dirac(grid.n, left), DiscreteMeasure.dirac(grid.n, right), grid, times)
    assert series.passed, series
    for t, value in zip(times, series.values):
        assert value == pytest.approx(4.0 * np.exp(-2.0 * t), rel=0.05)


@pytest.mark.slow
def test_hellinger_decay_under_quadratic_bound(long_run):
    grid = FiniteMetricSpace.grid(0.05, 7.0)
    series = hellinger_decay_experiment(long_run, 1.0, grid, [0.25, 0.5, 1.0])
    # W_2^2(delta_1, N(0, 1)) = 2
    assert series.envelope == pytest.approx((2.0, 1.0, 0.5), rel=1e-2)
    assert series.passed, series
    assert series.values[0] > series.values[-1]


@pytest.mark.slow
def test_hellinger_distance_vanishes_at_long_times():
    config = LangevinConfig(quadratic_potential(1.0), step=1e-2, horizon=20.0, paths=100_000, seed=9)
    grid = FiniteMetricSpace.grid(0.05, 7.0)
    series = hellinger_decay_experiment(config, 1.0, grid, [20.0])
    assert series.values[0] < 1e-2
