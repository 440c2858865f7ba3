import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarselat.analysis import (
    aronson_constant,
    fit_rate,
    holder_fit,
    kernel_estimates,
    living_mean,
    living_mean_bounds,
    local_average,
    nash_fit,
    step_approximation_distance,
)
from coarselat.backward import integrate_backward
from coarselat.core import Configuration, DomainError, ModelParams
from coarselat.integrator import Trajectory
from coarselat.kernel import KernelProfile, kernel_profile


def test_local_average_examples():
    assert local_average(Configuration.constant(2.0, 9), 4, 3) == pytest.approx(2.0)
    alt = Configuration.periodic([0.0, 1.0], 10)
    assert local_average(alt, 0, 1) == pytest.approx(2 / 3)
    assert local_average(alt, 1, 1) == pytest.approx(1 / 3)


def test_living_mean_examples():
    assert living_mean(Configuration.periodic([3.0, 0.0], 10)) == 3.0
    assert living_mean(Configuration.constant(1.5, 7), 2) == pytest.approx(1.5)
    assert living_mean(Configuration([1.0, 2.0, 0.0, 3.0]), 5) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        living_mean(Configuration([0.0, 0.0]))


def test_living_mean_bounds_bracket_full_mean():
    x = Configuration(np.random.default_rng(1).uniform(0, 1, 101))
    lo, hi = living_mean_bounds(x)
    assert lo <= living_mean(x, 50) <= hi


def test_fit_rate_exact_laws():
    t = np.linspace(1, 10, 20)
    f = fit_rate(t, t**2)
    assert f.exponent == pytest.approx(2.0, abs=1e-12)
    assert f.residual <= 1e-12
    g = fit_rate(t, 3 * np.exp(0.7 * t), "exponential")
    assert g.exponent == pytest.approx(0.7, abs=1e-12)
    assert g.prefactor == pytest.approx(3.0)
    h = fit_rate(t, (t + 5.0) ** 0.5, origin=5.0)
    assert h.exponent == pytest.approx(0.5, abs=1e-12)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_rate_recovers_power(a, c):
    t = np.geomspace(1, 100, 12)
    assert fit_rate(t, c * t**a).exponent == pytest.approx(a, abs=1e-9)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([1, 2, 3], [1, 2, 3])
    with pytest.raises(DomainError):
        fit_rate([1, 2, 3, 4, 5], [1, 2, 0, 4, 5])


def test_holder_fit():
    tr = Trajectory([0.0, 1.0, 2.0], np.ones((3, 4)))
    assert holder_fit(tr, 0.5).C == 0.0
    u0 = Configuration(np.random.default_rng(0).uniform(0, 1, 32))
    run = integrate_backward(u0, ModelParams(beta=1.0), 2.0)
    fit = holder_fit(run, 1.0)
    assert 0 < fit.C <= 4
    assert fit.alpha == 1.0


def test_kernel_estimates():
    profs = [kernel_profile(t) for t in (1.0, 4.0, 16.0)]
    ar, na = kernel_estimates(profs)
    assert np.isfinite(ar.C) and ar.C > 0
    assert 0.9 <= na.alpha <= 1.0
    assert np.isfinite(na.C)
    assert aronson_constant(profs[0]).C <= ar.C
    single = KernelProfile(1.0, np.array([0]), np.array([1.0]))
    with pytest.raises(ValueError):
        nash_fit(single)


def test_step_distance():
    p = kernel_profile(25.0)
    assert step_approximation_distance(p, 0.1) <= 0.05
    # a profile already constant on cells of width delta
    flat = KernelProfile(1.0, np.arange(-2, 3), np.full(5, 0.2))
    assert step_approximation_distance(flat, 1.0) == pytest.approx(0.0, abs=1e-15)
