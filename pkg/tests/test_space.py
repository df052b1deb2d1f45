import numpy as np
import pytest

from hklab_lib.config import DictionaryConfig
from hklab_lib.exceptions import LabValidationError
from hklab_lib.space import (
    DiscreteMeasure,
    FiniteMetricSpace,
    LipschitzDictionary,
    TestFunction,
    build_dictionary,
    chain_rule_check,
    check_same_space,
    discrete_gradient,
    global_lipschitz,
)


def test_grid_layout():
    grid = FiniteMetricSpace.grid(0.5, 2.0)
    assert grid.n == 9
    assert grid.lattice_spacing() == pytest.approx(0.5)
    assert grid.nodes()[0] == pytest.approx(-2.0)
    assert grid.diameter == pytest.approx(4.0)
    assert grid.neighbors[0] == (1,)
    assert grid.neighbors[4] == (3, 5)


def test_interior_drops_points_near_the_ends():
    grid = FiniteMetricSpace.grid(0.5, 2.0)
    assert list(grid.interior(1.0)) == [2, 3, 4, 5, 6]
    with pytest.raises(LabValidationError):
        grid.interior(3.0)


def test_cycle_uses_geodesic_distance():
    cycle = FiniteMetricSpace.cycle(6)
    assert cycle.dist[0, 3] == pytest.approx(3.0)
    assert cycle.dist[0, 5] == pytest.approx(1.0)
    assert cycle.lattice_spacing() is None


@pytest.mark.parametrize(
    "dist, field",
    [
        ([[0.0, 1.0], [2.0, 0.0]], "dist"),
        ([[0.0, 0.0], [0.0, 0.0]], "dist"),
        ([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]], "dist"),
        ([[1.0, 1.0], [1.0, 0.0]], "dist"),
    ],
)
def test_rejects_non_metrics(dist, field):
    with pytest.raises(LabValidationError) as excinfo:
        FiniteMetricSpace.from_matrix(dist)
    assert excinfo.value.field == field


def test_rejects_disconnected_neighbour_graph():
    dist = [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]
    with pytest.raises(LabValidationError) as excinfo:
        FiniteMetricSpace.from_matrix(dist, neighbors=[[1], [0], []])
    assert excinfo.value.field == "neighbors"


def test_from_coords_needs_radius_above_one_dimension():
    with pytest.raises(LabValidationError):
        FiniteMetricSpace.from_coords([[0.0, 0.0], [1.0, 0.0]])
    space = FiniteMetricSpace.from_coords([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], neighbor_radius=1.0)
    assert space.dist[0, 2] == pytest.approx(np.sqrt(2.0))
    assert space.neighbors[0] == (1,)


def test_measures_validate_weights():
    with pytest.raises(LabValidationError):
        DiscreteMeasure([0.5, -0.5])
    with pytest.raises(LabValidationError):
        DiscreteMeasure([0.5, 0.6]).require_probability()
    mu = DiscreteMeasure.dirac(4, 2)
    assert mu.is_dirac()
    assert list(mu.support) == [2]
    with pytest.raises(LabValidationError):
        check_same_space(3, mu)


def test_discrete_gradient_of_coordinate_is_one():
    space = FiniteMetricSpace.path_graph(5, spacing=0.25)
    grad = discrete_gradient(space, space.nodes())
    assert np.allclose(grad, 1.0)


def test_chain_rule_is_exact_for_affine_maps():
    space = FiniteMetricSpace.grid(0.1, 1.0)
    f = np.sin(space.nodes())
    report = chain_rule_check(space, f, lambda u: 3.0 * u + 1.0)
    assert report.passed
    assert report.max_residual < 1e-12


def test_chain_rule_residual_of_square_shrinks_with_spacing():
    residuals = []
    for h in (0.1, 0.05, 0.025):
        space = FiniteMetricSpace.grid(h, 1.0)
        report = chain_rule_check(space, space.nodes(), lambda u: u * u, dphi=lambda u: 2.0 * u, tol_factor=1.5)
        # max(|2x + h|, |2x - h|) - 2|x| = h
        assert report.max_residual == pytest.approx(h, rel=1e-6)
        assert report.passed
        residuals.append(report.max_residual)
    assert residuals[0] > residuals[1] > residuals[2]


def test_chain_rule_for_exp_of_distance_function():
    for h in (0.05, 0.01):
        space = FiniteMetricSpace.grid(h, 1.0)
        f = space.dist[space.n // 2]
        report = chain_rule_check(space, f, np.exp, dphi=np.exp, tol_factor=2.0)
        assert report.passed, report.max_residual
        assert report.max_residual <= np.e * h


def test_global_lipschitz_of_distance_function():
    space = FiniteMetricSpace.cycle(7)
    assert global_lipschitz(space, space.dist[3])[0] == pytest.approx(1.0)


def test_test_function_checks_its_bound():
    space = FiniteMetricSpace.path_graph(3)
    assert TestFunction([0.0, 1.0, 2.0], 1.0).check(space)
    assert not TestFunction([0.0, 2.0, 2.0], 1.0).check(space)
    with pytest.raises(LabValidationError):
        LipschitzDictionary((TestFunction([0.0, 2.0, 2.0], 1.0),)).validate(space)


def test_build_dictionary_is_deterministic_and_valid():
    space = FiniteMetricSpace.grid(0.25, 2.0)
    config = DictionaryConfig(max_anchors=5, random_functions=4)
    first = build_dictionary(space, config)
    second = build_dictionary(space, config)
    assert np.array_equal(first.matrix, second.matrix)
    assert first.tags[0] == "constant"
    assert "coordinate" in first.tags
    assert first.tags.count("random-smoothed") == 4
    for f in first:
        assert f.check(space)
    assert len(first.prefix(3)) == 3
