import numpy as np
import pytest

from coarselat.construction import (
    build_approximant,
    equilibrate,
    instability_datum,
    schedule_from,
    vanishing_schedule,
)
from coarselat.core import Configuration, DomainError, ModelParams
from coarselat.insertion import push_forward


def test_schedule_examples():
    s = schedule_from(1.0, 1.5, 2.0, 3)
    assert np.allclose(s.t_events, [0, 2, 4, 6])
    s = schedule_from(0.5, 2.0, 1.0, 4)
    expect = [sum(2 ** (m / 2) for m in range(1, j + 1)) for j in range(5)]
    assert np.allclose(s.t_events, expect)
    assert s.T_n == pytest.approx(s.t_events[-1])
    # t_j = T_n - tau_{n-j}
    assert np.allclose(s.t_events, s.T_n - s.tau[::-1])
    q = 2.0**0.5
    g = s.t_events[1:] + s.origin()
    assert np.allclose(g[1:] / g[:-1], q)


def test_schedule_needs_time():
    with pytest.raises(DomainError):
        vanishing_schedule(ModelParams(beta=0.5), 2)
    assert vanishing_schedule(ModelParams(beta=0.5, T_equilibrate=3.0), 1).T == 3.0


def test_equilibrate_half_is_trivial():
    T, u, d = equilibrate(Configuration.constant(0.5, 256), ModelParams(beta=0.5))
    assert T == 0.0
    assert d.total == 0


def test_equilibrate_unit_data_linear():
    p = ModelParams(beta=1.0)
    T, u, d = equilibrate(Configuration.constant(1.0, 512), p)
    assert T > 0
    assert np.max(np.abs(u.masses - 0.5)) <= p.epsilon
    assert u.window_size == d.target_size


def test_n0_is_stationary_one():
    ap = build_approximant(ModelParams(beta=0.5), 0, M0=64)
    assert np.all(ap.masses_at(0.0) == 1.0)
    assert np.all(ap.masses_at(5.0) == 1.0)
    assert ap.vanish_events() == []


@pytest.fixture(scope="module")
def small_build():
    return build_approximant(ModelParams(beta=0.5), 2, M0=128)


def test_approximant_properties(small_build):
    ap = small_build
    th, te = ap.params.theta, ap.schedule.t_events
    x = ap.masses_at(ap.schedule.T_n)
    assert np.max(np.abs(x[x > 0] / th**2 - 1)) <= 1e-6
    for j in (1, 2):
        assert ap.sup_norm(te[j - 1], te[j]) <= th**j * (1 + 1e-9)
        xj = ap.masses_at(float(te[j]))
        assert xj[xj > 0].min() >= 0.5 * th**j
    tm = ap.trajectory().total_mass()
    assert np.max(np.abs(tm / tm[-1] - 1)) <= 1e-9


def test_approximant_gluing_and_export(small_build, tmp_path):
    ap = small_build
    # the pushed-forward stage start equals the previous stage end
    for d, (a, b) in zip(ap.creation_ops, zip(ap.stage_snapshots[:-1], ap.stage_snapshots[1:])):
        assert d.source_size == a.window_size
    tr = ap.trajectory()
    assert np.all(np.diff(tr.times) > 0)
    files = ap.export(tmp_path)
    assert [p.split("/")[-1] for p in files] == ["trajectory.csv", "events.csv", "schedule.json"]
    # inserted sites vanish at the scheduled times
    ev = np.array([e.time for e in ap.vanish_events()])
    assert np.all(np.min(np.abs(ev[:, None] - ap.schedule.t_events[None, 1:]), axis=1) <= 1e-9 * ap.schedule.T_n)


def test_instability_datum_n0_is_near_half():
    p = ModelParams(beta=0.5)
    x0 = instability_datum(p, 0, M0=128)
    assert np.max(np.abs(x0.masses - 0.5)) <= p.epsilon
