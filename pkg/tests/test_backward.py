import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarselat.backward import (
    PositivityClass,
    comparison_violation,
    dominating,
    edge_coefficients,
    harnack_eta1,
    harnack_floor,
    integrate_backward,
    local_mass,
    membership_PLd,
    positivity_fit,
)
from coarselat.core import Configuration, DomainError, ModelParams
from coarselat.integrator import IntegratorPolicy, SingularityError
from coarselat.kernel import heat_kernel


def bisect_eta1(beta, c, iters=200):
    lo, hi = 0.0, max(1.0, c)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if 2 * mid**beta + mid / (1 - beta) < c:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_constant_data_stays_constant():
    for beta in (-1.0, 0.5, 1.0):
        tr = integrate_backward(Configuration.constant(0.7, 10), ModelParams(beta=beta), 3.0)
        assert np.allclose(tr.masses, 0.7, atol=1e-14)


def test_delta_data_reproduces_heat_kernel():
    M = 64
    u0 = np.zeros(M)
    u0[0] = 1.0
    tr = integrate_backward(Configuration(u0), ModelParams(beta=1.0), 1.0, policy=IntegratorPolicy(sample_times=(1.0,)))
    u = tr.masses_at(1.0)
    for k in range(-10, 11):
        assert u[k % M] == pytest.approx(heat_kernel(1.0, k), abs=1e-6)


@settings(max_examples=10)
@given(st.integers(0, 2**31), st.sampled_from([-1.0, 0.5, 1.0]))
def test_comparison_and_mass(seed, beta):
    u0 = Configuration(np.random.default_rng(seed).uniform(0.5, 1.0, 20))
    tr = integrate_backward(u0, ModelParams(beta=beta), 2.0)
    assert comparison_violation(tr, 0.5, 1.0) <= 1e-9
    tm = tr.total_mass()
    assert np.max(np.abs(tm - tm[0])) <= 1e-9 * tm[0]


def test_negative_beta_needs_positive_data():
    u0 = Configuration.periodic([1.0, 0.0], 8)
    with pytest.raises(SingularityError):
        integrate_backward(u0, ModelParams(beta=-1.0), 1.0)
    tr = integrate_backward(u0, ModelParams(beta=-1.0), 1.0, delta=1e-10)
    assert np.all(tr.masses[1:] > 0)


def test_edge_coefficients_positive():
    a = edge_coefficients(0.5, np.array([1.0, 1.0, 0.25, 0.0]))
    assert np.all(a > 0)
    assert a[0] == pytest.approx(0.5)  # derivative of sqrt at 1


def test_membership_examples():
    pc = PositivityClass(2, 1.0)
    assert membership_PLd(Configuration.constant(1.0, 6), PositivityClass(1, 1.0))
    assert membership_PLd(Configuration.periodic([1.0, 0.0], 6), pc)
    assert not membership_PLd(Configuration.periodic([1.0, 0.0], 6), PositivityClass(1, 1.0))
    assert not membership_PLd(Configuration.constant(0.5, 6), pc)
    with pytest.raises(DomainError):
        PositivityClass(0, 1.0)


def test_local_mass():
    u = Configuration([1.0, 2.0, 3.0, 4.0, 5.0])
    assert local_mass(u, 0, 1) == 5.0 + 1.0 + 2.0


def test_eta1_examples():
    assert harnack_eta1(0.5, 4.0) == pytest.approx(1.0, abs=1e-14)
    assert harnack_eta1(0.5, 0.0) == 0.0
    assert harnack_eta1(0.5, 1.0) == pytest.approx(((-1 + np.sqrt(3)) / 2) ** 2, abs=1e-14)
    assert harnack_floor(0.5, 0) == 1.0
    assert harnack_floor(0.5, 1) == pytest.approx(0.133975, abs=1e-6)
    assert harnack_floor(0.5, 2) == pytest.approx(bisect_eta1(0.5, bisect_eta1(0.5, 1.0)), rel=1e-12)
    with pytest.raises(DomainError):
        harnack_eta1(1.0, 1.0)


@given(st.sampled_from([0.1, 0.25, 0.5, 0.9]), st.floats(0.0, 10.0))
def test_eta1_inverts_dominating(beta, c):
    v = harnack_eta1(beta, c)
    assert abs(dominating(beta, v) - c) <= 1e-10
    assert v == pytest.approx(bisect_eta1(beta, c), abs=1e-12)


@given(st.sampled_from([0.25, 0.5]), st.floats(0.0, 9.0), st.floats(0.01, 1.0))
def test_eta1_increasing(beta, c, dc):
    assert harnack_eta1(beta, c + dc) > harnack_eta1(beta, c)


def test_floor_decreasing():
    vals = [harnack_floor(0.5, r) for r in range(5)]
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))


def test_positivity_fit_constant():
    p = ModelParams(beta=0.5)
    tr = integrate_backward(Configuration.constant(1.0, 8), p, 2.0)
    assert positivity_fit(tr, p, PositivityClass(2, 1.0)) >= 1.0 - 1e-12
