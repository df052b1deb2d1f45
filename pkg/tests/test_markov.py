import numpy as np
import pytest

from hklab_lib.exceptions import LabValidationError
from hklab_lib.markov import (
    MarkovKernel,
    apply_to_function,
    apply_to_measure,
    bin_samples,
    brownian_kernel_grid,
    empirical_kernel,
    heat_kernel_grid,
    ou_kernel_grid,
)
from hklab_lib.space import DiscreteMeasure, FiniteMetricSpace


@pytest.fixture
def grid() -> FiniteMetricSpace:
    return FiniteMetricSpace.grid(0.05, 4.0)


def test_kernel_rejects_bad_rows():
    with pytest.raises(LabValidationError) as excinfo:
        MarkovKernel([[0.5, 0.4], [0.5, 0.5]])
    assert excinfo.value.field == "kernel row sums"
    with pytest.raises(LabValidationError):
        MarkovKernel([[1.5, -0.5], [0.5, 0.5]])


def test_constants_are_fixed_and_mass_is_kept(grid):
    P = heat_kernel_grid(grid, 0.25)
    assert np.allclose(apply_to_function(P, np.full(grid.n, 3.0)), 3.0)
    mu = DiscreteMeasure.dirac(grid.n, 10)
    assert apply_to_measure(mu, P).mass == pytest.approx(1.0)


def test_heat_kernel_has_variance_two_t(grid):
    P = heat_kernel_grid(grid, 0.25)
    x = grid.nodes()
    centre = grid.n // 2
    row = P.matrix[centre]
    assert row @ x == pytest.approx(0.0, abs=1e-12)
    assert row @ x**2 == pytest.approx(0.5, rel=1e-5)


def test_brownian_kernel_has_variance_t(grid):
    P = brownian_kernel_grid(grid, 0.25)
    x = grid.nodes()
    row = P.matrix[grid.n // 2]
    assert row @ x**2 == pytest.approx(0.25, rel=1e-6)


def test_ou_kernel_contracts_the_mean(grid):
    P = ou_kernel_grid(grid, 0.5, 1.0)
    x = grid.nodes()
    start = int(np.argmin(np.abs(x - 1.0)))
    assert P.matrix[start] @ x == pytest.approx(np.exp(-0.5), rel=1e-3)


def test_two_state_kernel_on_functions_and_measures():
    P = MarkovKernel([[0.5, 0.5], [0.25, 0.75]])
    assert np.allclose(apply_to_function(P, [0.0, 1.0]), [0.5, 0.75])
    assert np.allclose(apply_to_measure(DiscreteMeasure([0.5, 0.5]), P).weights, [0.375, 0.625])


def test_ou_kernels_form_a_semigroup():
    grid = FiniteMetricSpace.grid(0.05, 6.0)
    composed = ou_kernel_grid(grid, 0.25, 1.0).compose(ou_kernel_grid(grid, 0.25, 1.0))
    direct = ou_kernel_grid(grid, 0.5, 1.0)
    inner = grid.interior(4.0)
    assert np.abs(composed.matrix[inner] - direct.matrix[inner]).sum(axis=1).max() <= 1e-6


def test_ou_kernel_converges_to_its_invariant_law():
    grid = FiniteMetricSpace.grid(0.05, 6.0)
    a = 2.0
    P = ou_kernel_grid(grid, 10.0, a)
    x = grid.nodes()
    left, right = (int(np.argmin(np.abs(x - point))) for point in (-1.0, 1.0))
    assert P.matrix[right] @ x**2 == pytest.approx(1.0 / a, rel=1e-3)
    assert 0.5 * np.abs(P.matrix[left] - P.matrix[right]).sum() < 1e-8


def test_heat_kernel_at_small_time_is_close_to_identity(grid):
    P = heat_kernel_grid(grid, 1e-4)
    assert np.allclose(P.matrix, np.eye(grid.n), atol=1e-2)


def test_binned_gaussian_samples_match_heat_row(grid):
    t = 0.25
    rng = np.random.default_rng(3)
    x = grid.nodes()
    start = grid.n // 2
    weights, clamped = bin_samples(x[start] + np.sqrt(2.0 * t) * rng.standard_normal(100_000), grid)
    assert clamped == 0
    assert np.abs(weights - heat_kernel_grid(grid, t).matrix[start]).sum() <= 0.05


def test_jensen_and_sup_norm_contraction():
    rng = np.random.default_rng(5)
    for _ in range(20):
        matrix = rng.random((6, 6)) ** 3
        P = MarkovKernel(matrix / matrix.sum(axis=1, keepdims=True))
        f = rng.normal(size=6)
        Pf = apply_to_function(P, f)
        assert np.all(Pf**2 <= apply_to_function(P, f**2) + 1e-12)
        assert np.max(np.abs(Pf)) <= np.max(np.abs(f)) + 1e-12


def test_compose_with_identity():
    P = MarkovKernel([[0.5, 0.5], [0.25, 0.75]])
    assert np.allclose(P.compose(MarkovKernel.identity(2)).matrix, P.matrix)
    assert np.allclose(MarkovKernel.constant_rows([0.2, 0.8]).matrix[1], [0.2, 0.8])


def test_bin_samples_counts_clamped_points():
    grid = FiniteMetricSpace.grid(1.0, 2.0)
    weights, clamped = bin_samples(np.array([-10.0, -0.4, 0.2, 0.6, 10.0]), grid)
    assert clamped == 2
    assert weights.sum() == pytest.approx(1.0)
    assert weights[2] == pytest.approx(0.4)
    assert weights[0] == pytest.approx(0.2)


def test_empirical_kernel_rows_are_histograms():
    grid = FiniteMetricSpace.grid(1.0, 1.0)
    samples = [np.array([-1.0, -1.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])]
    result = empirical_kernel(samples, grid)
    assert result.clamped == 0
    assert np.allclose(result.kernel.matrix, [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]])
    with pytest.raises(LabValidationError):
        empirical_kernel(samples[:2], grid)
