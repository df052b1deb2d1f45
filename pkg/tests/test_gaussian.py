import numpy as np
import pytest

from hklab_lib.exceptions import LabValidationError
from hklab_lib.gaussian import (
    normal_hellinger_sq,
    normal_renyi_divergence,
    normal_renyi_integral,
    normal_w2_sq,
    shifted_renyi_functional,
)


def test_hellinger_of_translates():
    assert normal_hellinger_sq(0.0, 1.0, 0.0, 1.0) == pytest.approx(0.0)
    assert normal_hellinger_sq(0.0, 0.5, 1.0, 0.5) == pytest.approx(2.0 - 2.0 * np.exp(-0.25))


def test_w2_adds_mean_and_scale_parts():
    assert normal_w2_sq(0.0, 1.0, 2.0, 4.0) == pytest.approx(4.0 + 1.0)


def test_renyi_divergence_of_translates():
    # D_r = r d^2 / (2 var) for equal variances
    assert normal_renyi_divergence(1.0, 1.0, 0.0, 1.0, 2.0) == pytest.approx(1.0)
    assert normal_renyi_integral(1.0, 1.0, 0.0, 1.0, 2.0) == pytest.approx(np.e)


def test_renyi_divergence_blows_up_for_wide_numerator():
    assert normal_renyi_divergence(0.0, 4.0, 0.0, 1.0, 3.0) == np.inf


def test_shifted_functional_matches_renyi_integral():
    p, shift, variance = 1.5, 0.7, 0.3
    r = 1.0 / (p - 1.0)
    # (int (dmu/dmu^h)^r dmu)^{p-1} = exp((p-1) r D_{r+1}(mu | mu^h))
    integral = normal_renyi_integral(0.0, variance, shift, variance, r + 1.0)
    assert shifted_renyi_functional(p, shift, variance) == pytest.approx(integral ** (p - 1.0))


def test_rejects_bad_inputs():
    with pytest.raises(LabValidationError):
        normal_w2_sq(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(LabValidationError):
        normal_renyi_divergence(0.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(LabValidationError):
        shifted_renyi_functional(1.0, 1.0, 1.0)
