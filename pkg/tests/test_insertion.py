import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarselat.core import Configuration, DomainError
from coarselat.insertion import (
    JumpSequence,
    average_modifying_insertion,
    commutator_residual,
    local_averages,
    max_local_deviation,
    plan_constants,
    push_forward,
    push_values,
)


def brute_max_deviation(v, target, N_min):
    M = v.size
    worst = 0.0
    for N in range(N_min, (M - 1) // 2 + 1):
        for k in range(M):
            idx = (k + np.arange(-N, N + 1)) % M
            worst = max(worst, abs(v[idx].mean() - target))
    return worst


def test_push_forward_examples():
    x = Configuration([1.0, 2.0, 3.0])
    assert push_forward(JumpSequence.zeros(3), x) == x
    assert push_forward(JumpSequence([2, 0, 0]), x).masses.tolist() == [1.0, 0.0, 0.0, 2.0, 3.0]


def test_jump_sequence_validation_and_json():
    with pytest.raises(DomainError):
        JumpSequence([1, -1])
    with pytest.raises(DomainError):
        JumpSequence([0.5, 1])
    d = JumpSequence([0, 3, 1])
    assert JumpSequence.from_json(d.to_json()).jumps.tolist() == [0, 3, 1]
    assert (d.bound, d.total, d.target_size) == (3, 4, 7)
    assert d.index_map().tolist() == [0, 1, 5]


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_index_map_is_increasing_and_fixes_origin(jumps):
    d = JumpSequence(jumps)
    psi = d.index_map()
    assert psi[0] == 0
    assert np.all(np.diff(psi) == 1 + d.jumps[:-1])
    assert psi[-1] < d.target_size


@given(
    st.lists(st.one_of(st.just(0.0), st.floats(0.05, 5.0)), min_size=2, max_size=40).filter(any),
    st.data(),
    st.sampled_from([-2.0, -1.0, 0.5, 1.0]),
)
def test_commutation(masses, data, beta):
    d = JumpSequence(data.draw(st.lists(st.integers(0, 3), min_size=len(masses), max_size=len(masses))))
    x = Configuration(masses)
    alive = x.masses[x.alive]
    scale = max(1.0, float(np.max(alive ** beta)))
    assert commutator_residual(d, beta, x) <= 1e-14 * scale


def test_half_data_needs_no_insertion():
    d, plan, N0 = average_modifying_insertion(Configuration.constant(0.5, 240), 1 / 6)
    assert d.total == 0


def test_unit_data_block_average_is_half():
    K = plan_constants(1 / 6)[0]
    u0 = Configuration.constant(1.0, 10 * K)
    d, plan, _ = average_modifying_insertion(u0, 1 / 6)
    assert np.all(plan.insert_counts[plan.block_kinds] == K)
    v = push_values(d, u0.masses)
    assert v.mean() == pytest.approx(0.5)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1 / 6, 1 / 12]))
def test_insertion_guarantee(seed, eps):
    u0 = Configuration(np.random.default_rng(seed).uniform(0.5, 1.0, 2048))
    d, plan, N0 = average_modifying_insertion(u0, eps)
    assert d.bound <= plan.block_length
    v = push_values(d, u0.masses)
    assert max_local_deviation(v, 0.5, N0) <= eps


@settings(max_examples=40)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=40), st.integers(0, 5))
def test_max_local_deviation_matches_brute_force(vals, N_min):
    v = np.array(vals)
    N_min = min(N_min, (v.size - 1) // 2)
    assert max_local_deviation(v, 0.5, N_min) == pytest.approx(brute_max_deviation(v, 0.5, N_min), abs=1e-13)


@given(st.lists(st.floats(-1.0, 1.0), min_size=5, max_size=30), st.integers(0, 2))
def test_local_averages(vals, N):
    v = np.array(vals)
    got = local_averages(v, N)
    for k in range(v.size):
        idx = (k + np.arange(-N, N + 1)) % v.size
        assert got[k] == pytest.approx(v[idx].mean(), abs=1e-13)


def test_insertion_rejects_out_of_range_data():
    with pytest.raises(DomainError):
        average_modifying_insertion(Configuration([0.2, 0.9]), 1 / 6)
