import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarselat.core import (
    Configuration,
    DomainError,
    ModelParams,
    flux,
    gflux,
    laplacian,
    living_neighbors,
    sigma_laplacian,
    sigma_laplacian_field,
    sigma_laplacian_flux,
)

betas = st.sampled_from([-2.0, -1.0, -0.5, 0.25, 0.5, 1.0])


def test_flux_examples():
    assert flux(1.0, 2.0) == -2.0
    assert flux(-1.0, 0.0) == 0.0
    assert flux(0.5, 4.0) == -2.0
    assert gflux(1.0, 3.0) == 3.0
    assert gflux(0.5, 9.0) == 3.0
    assert gflux(-1.0, 2.0) == -0.5  # sign(beta) * u**beta


@pytest.mark.parametrize("beta", [0.0, 1.5, float("nan")])
def test_flux_rejects_bad_beta(beta):
    with pytest.raises(DomainError):
        flux(beta, 1.0)


def test_flux_rejects_negative_mass():
    with pytest.raises(DomainError):
        flux(0.5, -1.0)


def test_params_theta_and_domain():
    p = ModelParams(beta=0.5)
    assert p.theta == pytest.approx(1.5)
    assert 1 / p.theta == pytest.approx(0.5 + p.epsilon, abs=1e-15)
    with pytest.raises(DomainError):
        ModelParams(beta=0.5, epsilon=0.3)
    with pytest.raises(DomainError):
        ModelParams(beta=0.5, ode_tol=0)
    assert p.with_(epsilon=1 / 12).theta == pytest.approx(12 / 7)


def test_living_neighbors_examples():
    nb = living_neighbors(Configuration([1.0, 0.0, 2.0]), 0)
    assert (nb.left, nb.right) == (2, 2)
    nb = living_neighbors(Configuration([1.0, 1.0, 1.0]), 1)
    assert (nb.left, nb.right) == (0, 2)
    nb = living_neighbors(Configuration([0.0, 5.0, 0.0, 7.0]), 1)
    assert (nb.left, nb.right) == (3, 3)


def test_sigma_laplacian_examples():
    c = Configuration.constant(2.5, 8)
    assert np.all(sigma_laplacian_field(c, 0.5) == 0)
    x = Configuration.periodic([2.0, 1.0], 8)
    assert sigma_laplacian_flux(x, -1.0, 1) == pytest.approx(-1.0)
    y = Configuration([0.0, 1.0, 3.0])
    assert sigma_laplacian_flux(y, 0.5, 0) == 0.0


@given(
    st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 10.0)), min_size=3, max_size=40).filter(any),
    betas,
)
def test_sigma_laplacian_sums_to_zero(masses, beta):
    x = Configuration(masses)
    lap = sigma_laplacian_field(x, beta)
    scale = max(1.0, float(np.max(np.abs(lap))))
    assert abs(lap.sum()) <= 1e-12 * scale * x.window_size
    assert np.all(lap[~x.alive] == 0)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=30))
def test_full_alive_matches_plain_laplacian(vals):
    v = np.array(vals)
    assert np.allclose(sigma_laplacian(v, np.ones(v.size, bool)), laplacian(v), atol=1e-12)


@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=20))
def test_configuration_json_round_trip(masses):
    x = Configuration(masses)
    y = Configuration.from_json(x.to_json())
    assert y == x
    assert json.loads(x.to_json())


def test_configuration_validation():
    with pytest.raises(DomainError):
        Configuration([1.0, -0.5])
    with pytest.raises(DomainError):
        Configuration([])
    x = Configuration([1.0, 0.0])
    with pytest.raises((ValueError, TypeError, AttributeError)):
        x.masses[0] = 5.0
