import numpy as np
import pytest

from hklab_lib.config import DictionaryConfig
from hklab_lib.divergence import (
    DivParams,
    c_b,
    gronwall_flow,
    renyi_T0b,
    t_ab_certified,
    t_ab_lower,
    t_ab_upper,
    t_point_mass_bounds,
    t_tilde,
    verify_dual_feasible,
    young_gap,
)
from hklab_lib.exceptions import LabValidationError
from hklab_lib.space import DiscreteMeasure, FiniteMetricSpace, LipschitzDictionary, build_dictionary

LN2 = float(np.log(2.0))


@pytest.fixture
def two_point() -> FiniteMetricSpace:
    return FiniteMetricSpace.two_point(1.0)


def test_constants_at_ln2():
    p, q, cb = c_b(LN2)
    assert p == pytest.approx(2.0)
    assert q == pytest.approx(2.0)
    assert cb == pytest.approx(0.25)
    params = DivParams(0.0, LN2)
    assert params.log_c_b == pytest.approx(np.log(0.25))


def test_params_need_positive_b():
    with pytest.raises(LabValidationError):
        DivParams(1.0, 0.0)
    with pytest.raises(LabValidationError):
        DivParams(-1.0, 1.0)


def test_young_gap_vanishes_at_optimum():
    z, w = 1.0, 1.0
    x_star = (z / (2.0 * w)) ** 2
    assert young_gap(LN2, z, w, x_star) == pytest.approx(0.0, abs=1e-12)
    assert young_gap(LN2, z, w, 2.0 * x_star) > 0
    assert young_gap(LN2, z, w, 0.5 * x_star) > 0


def test_gronwall_flow_endpoints():
    assert gronwall_flow(1.0, 0.5, 3.0, 0.0) == pytest.approx(3.0)
    # y' = r y - b y ln y with y0 = 1, r = 0 stays at 1
    assert gronwall_flow(1.0, 0.0, 1.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(LabValidationError):
        gronwall_flow(1.0, 0.5, 3.0, 1.5)


def test_renyi_closed_form_on_two_points():
    result = renyi_T0b(DivParams(0.0, LN2), DiscreteMeasure([0.5, 0.5]), DiscreteMeasure([0.75, 0.25]))
    assert result.value == pytest.approx(0.3125)
    assert result.order == pytest.approx(2.0)
    assert result.tilde == pytest.approx(np.log(1.25))
    assert t_tilde(result.value, DivParams(0.0, LN2)) == pytest.approx(np.log(1.25))


def test_renyi_is_infinite_without_absolute_continuity():
    result = renyi_T0b(DivParams(0.0, 1.0), DiscreteMeasure([1.0, 0.0]), DiscreteMeasure([0.5, 0.5]))
    assert result.value == np.inf


def test_renyi_of_equal_measures_is_c_b():
    mu = DiscreteMeasure([0.2, 0.3, 0.5])
    params = DivParams(0.0, 0.7)
    assert renyi_T0b(params, mu, mu).value == pytest.approx(params.c_b)


def test_point_mass_bounds_enclose_coupling_bound(two_point):
    params = DivParams(0.5, 1.0)
    lower, upper = t_point_mass_bounds(params, 1.0)
    assert lower <= upper
    coupling = t_ab_upper(params, DiscreteMeasure.dirac(2, 0), DiscreteMeasure.dirac(2, 1), two_point)
    assert coupling.certified == pytest.approx(upper)
    assert not coupling.capped


def test_upper_bound_needs_positive_a(two_point):
    with pytest.raises(LabValidationError):
        t_ab_upper(DivParams(0.0, 1.0), DiscreteMeasure.dirac(2, 0), DiscreteMeasure.dirac(2, 1), two_point)


def test_lower_bound_without_dictionary_is_c_b(two_point):
    params = DivParams(0.5, 1.0)
    lower = t_ab_lower(params, DiscreteMeasure.dirac(2, 0), DiscreteMeasure.dirac(2, 1), two_point, LipschitzDictionary(()))
    assert lower.value == pytest.approx(params.c_b)
    assert lower.certificate["f_index"] is None


def test_certified_interval_for_diracs(two_point):
    params = DivParams(0.5, 1.0)
    dictionary = build_dictionary(two_point, DictionaryConfig(random_functions=0))
    value = t_ab_certified(params, DiscreteMeasure.dirac(2, 0), DiscreteMeasure.dirac(2, 1), two_point, dictionary)
    _, high = t_point_mass_bounds(params, 1.0)
    assert params.c_b <= value.lower <= value.upper
    assert value.upper == pytest.approx(high)
    assert value.upper_certificate["family"] == "coupling"


def test_certified_interval_at_zero_a_uses_closed_form(two_point):
    params = DivParams(0.0, LN2)
    mu0, mu1 = DiscreteMeasure([0.5, 0.5]), DiscreteMeasure([0.75, 0.25])
    dictionary = build_dictionary(two_point, DictionaryConfig(random_functions=0))
    value = t_ab_certified(params, mu0, mu1, two_point, dictionary)
    assert value.upper == pytest.approx(0.3125)
    assert params.c_b <= value.lower <= value.upper * (1.0 + 1e-12)


def test_lower_certificate_is_dual_feasible():
    path = FiniteMetricSpace.path_graph(6, spacing=0.5)
    params = DivParams(0.5, 1.0)
    mu0 = DiscreteMeasure([0.4, 0.3, 0.3, 0.0, 0.0, 0.0])
    mu1 = DiscreteMeasure([0.0, 0.0, 0.1, 0.2, 0.3, 0.4])
    dictionary = build_dictionary(path, DictionaryConfig(random_functions=2))
    lower = t_ab_lower(params, mu0, mu1, path, dictionary)
    assert lower.value > params.c_b
    report = verify_dual_feasible(params, lower.certificate, path)
    assert report.admissible
    assert report.feasible


def test_inadmissible_certificate_is_flagged():
    path = FiniteMetricSpace.path_graph(3)
    params = DivParams(0.5, 1.0)
    certificate = {"family": "expquad", "k": 1.0, "beta0": 0.0, "f_values": [0.0, 1.0, 2.0]}
    report = verify_dual_feasible(params, certificate, path)
    assert not report.admissible
    assert not report.feasible
    assert report.blowup


def test_malformed_certificate_is_rejected():
    path = FiniteMetricSpace.path_graph(3)
    with pytest.raises(LabValidationError):
        verify_dual_feasible(DivParams(0.5, 1.0), {"family": "expquad"}, path)


def test_point_mass_interval_values():
    lower, upper = t_point_mass_bounds(DivParams(1.0, LN2), 1.0)
    assert lower == pytest.approx(0.353553, abs=1e-6)
    assert upper == pytest.approx(0.358576, abs=1e-6)


@pytest.mark.parametrize("b, weights", [(LN2, [0.75, 0.25]), (0.4, [0.1, 0.9]), (2.0, [0.55, 0.45])])
def test_renyi_closed_form_dominates_exponential_subsolutions(b, weights):
    # phi_s = exp(e^{-bs} g) solves the a = 0 equation; sup over a dense grid of g
    mu0, mu1 = DiscreteMeasure([0.5, 0.5]), DiscreteMeasure(weights)
    params = DivParams(0.0, b)
    closed = renyi_T0b(params, mu0, mu1).value
    g = np.linspace(-12.0, 6.0, 4001)
    per_point = mu1.weights[:, None] * np.exp(np.exp(-b) * g)[None, :] - mu0.weights[:, None] * np.exp(g)[None, :]
    oracle = float(np.sum(per_point.max(axis=1)))
    assert oracle <= closed + 1e-12
    assert oracle == pytest.approx(closed, rel=0.02)


def test_tilde_is_scaled_renyi_divergence():
    rng = np.random.default_rng(5)
    for _ in range(10):
        w0, w1 = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        params = DivParams(0.0, float(rng.uniform(0.1, 3.0)))
        q = params.q
        direct = np.log(sum(x**q * y ** (1.0 - q) for x, y in zip(w1, w0)))
        result = renyi_T0b(params, DiscreteMeasure(w0), DiscreteMeasure(w1))
        assert result.tilde == pytest.approx(direct, rel=1e-10, abs=1e-12)
        assert result.value == pytest.approx(params.c_b * np.exp(direct), rel=1e-12)
