import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from privsprt.mechanisms import (
    NoiseMechanism,
    ParameterError,
    gaussian_sigma,
    laplace_scale_for_abovethresh,
    perturb,
    privsprt_sigmas,
)
from privsprt.rng import RngStream


def test_gaussian_sigma_formula():
    assert gaussian_sigma(1.0, 1e-5, 2.0) == pytest.approx(math.sqrt(2 * math.log(1.25e5)) * 2.0)


@given(st.floats(0.05, 10), st.floats(1e-9, 0.5), st.floats(0.01, 5))
def test_privsprt_sigmas_closed_form(eps, delta, A):
    s1, s2 = privsprt_sigmas(eps, delta, A)
    L = math.log(1.25 / delta)
    assert s1 ** 2 == pytest.approx(32 * L * A * A / eps ** 2, rel=1e-12)
    assert s2 ** 2 == pytest.approx(128 * L * A * A / eps ** 2, rel=1e-12)


def test_infinite_budget_means_no_noise():
    assert privsprt_sigmas(math.inf, 1e-5, 0.5) == (0.0, 0.0)


@pytest.mark.parametrize("kwargs,field", [
    (dict(epsilon=0, delta=0.1, sensitivity=1), "epsilon"),
    (dict(epsilon=1, delta=1.0, sensitivity=1), "delta"),
    (dict(epsilon=1, delta=0.0, sensitivity=1), "delta"),
    (dict(epsilon=1, delta=0.1, sensitivity=0), "sensitivity"),
])
def test_invalid_parameters_name_the_field(kwargs, field):
    with pytest.raises(ParameterError) as info:
        gaussian_sigma(**kwargs)
    assert info.value.field == field


def test_laplace_scales():
    assert laplace_scale_for_abovethresh(1.0, 1.0) == (2.0, 4.0)


def test_zero_scale_mechanism_draws_nothing():
    s = RngStream(0)
    assert perturb(NoiseMechanism.gaussian(0.0), 3.5, s) == 3.5
    assert s.counter == 0


def test_mechanism_validation():
    with pytest.raises(ParameterError):
        NoiseMechanism.gaussian(-1.0)
