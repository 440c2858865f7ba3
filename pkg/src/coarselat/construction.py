"""Back-in-time construction of coarsening solutions.

Starting from constant terminal data, each stage rescales the current state
into ``[1/2, 1]``, inserts empty sites so that long averages sit near 1/2,
runs the backward equation until the state is uniformly within ``epsilon``
of 1/2, and scales back.  Read in reverse, the stages form a forward
solution in which the inserted sites are particles that vanish at the
scheduled times.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .analysis import living_mean
from .backward import integrate_backward
from .core import Configuration, DomainError, ModelParams
from .insertion import JumpSequence, average_modifying_insertion, push_values
from .integrator import (
    Event,
    IntegratorPolicy,
    NumericalError,
    Trajectory,
    write_events_csv,
    write_trajectory_csv,
)

DEFAULT_DELTA = 1e-10
DEFAULT_T_MAX = 1e4


class EquilibrationTimeout(NumericalError):
    pass


def _stage_delta(beta: float, delta: float | None) -> float:
    if beta > 0:
        return 0.0
    return DEFAULT_DELTA if delta is None else delta


def _sup_dev(u: np.ndarray) -> float:
    return float(np.max(np.abs(u - 0.5)))


def equilibrate(
    u0: Configuration,
    params: ModelParams,
    t_max: float = DEFAULT_T_MAX,
    delta: float | None = None,
    policy: IntegratorPolicy | None = None,
):
    """Insert empty sites, then diffuse backward until uniformly near 1/2.

    Returns ``(T_used, u_final, d)`` where ``T_used`` is the first time with
    ``max |u - 1/2| <= epsilon``.  For ``beta < 0`` the data are raised to
    ``delta`` first (default ``1e-10``).

    Raises
    ------
    EquilibrationTimeout
        If the criterion is not met by ``t_max``.
    """
    eps = params.epsilon
    d, _plan, _N0 = average_modifying_insertion(u0, eps)
    v0 = Configuration(push_values(d, u0.masses))
    # stop slightly inside the target so the retaken final step still meets it
    traj = integrate_backward(
        v0,
        params,
        t_max,
        delta=_stage_delta(params.beta, delta),
        policy=policy,
        stop=lambda u: _sup_dev(u) <= eps * (1 - 1e-9),
    )
    final = traj.masses[-1]
    if _sup_dev(final) > eps:
        raise EquilibrationTimeout(f"not within epsilon of 1/2 by t={t_max}")
    return float(traj.times[-1]), Configuration(final), d


@dataclass(frozen=True)
class ConstructionSchedule:
    """Creation times on the backward clock and vanishing times on the
    forward clock.

    ``tau[j]`` ends stage ``j`` (``tau[0] = 0``) and ``t_events[j] =
    T_n - tau[n - j]`` with ``T_n = tau[n]``.
    """

    n: int
    tau: np.ndarray
    t_events: np.ndarray
    T: float
    theta: float
    beta: float

    @property
    def T_n(self) -> float:
        return float(self.tau[-1])

    def stage_duration(self, j: int) -> float:
        return float(self.tau[j] - self.tau[j - 1])

    def origin(self) -> float:
        """Offset that turns ``t_events`` into a geometric sequence.

        ``t_j + origin`` grows by ``theta**(1 - beta)`` per index; infinite
        when ``beta = 1`` (the schedule is arithmetic).
        """
        q = self.theta ** (1.0 - self.beta)
        return math.inf if q == 1.0 else self.T / (1.0 - 1.0 / q)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "T": self.T,
            "theta": self.theta,
            "beta": self.beta,
            "tau": [float(v) for v in self.tau],
            "t": [float(v) for v in self.t_events],
        }


def schedule_from(beta: float, theta: float, T: float, n: int) -> ConstructionSchedule:
    """Schedule for explicit ``theta`` and ``T``."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    if not T > 0:
        raise DomainError("T must be positive")
    q = theta ** (1.0 - beta)
    tau = np.zeros(n + 1)
    for j in range(1, n + 1):
        tau[j] = tau[j - 1] + T * q ** (n + 1 - j)
    t = np.array([T * sum(q**m for m in range(1, j + 1)) for j in range(n + 1)])
    return ConstructionSchedule(n, tau, t, float(T), float(theta), float(beta))


def vanishing_schedule(params: ModelParams, n: int, T: float | None = None) -> ConstructionSchedule:
    """Schedule from the model parameters; ``T`` defaults to
    ``params.T_equilibrate``."""
    T = params.T_equilibrate if T is None else T
    if T is None:
        raise DomainError("an equilibration time is required")
    return schedule_from(params.beta, params.theta, T, n)


def probe_data(M0: int, probes: int, seed: int) -> list:
    """Constant-one data plus seeded uniform ``[1/2, 1]`` samples."""
    rng = np.random.default_rng(seed)
    out = [Configuration.constant(1.0, M0)]
    out += [Configuration(rng.uniform(0.5, 1.0, M0)) for _ in range(probes)]
    return out


def ensemble_T(params: ModelParams, M0: int, probes: int = 4, seed: int = 0, delta=None) -> float:
    """Largest equilibration time over the probe ensemble."""
    return max(equilibrate(u, params, delta=delta)[0] for u in probe_data(M0, probes, seed))


@dataclass
class _Stage:
    scale: float
    tau_start: float
    jumps: JumpSequence
    times: np.ndarray  # rescaled clock, starts at 0
    masses: np.ndarray  # rescaled masses; row 0 is the unregularized data
    positions: np.ndarray = field(default=None)


@dataclass
class ApproximantSolution:
    """Finite-stage back-in-time solution on the final window.

    Stage ``s`` (``1 <= s <= n``) covers the forward interval
    ``[t_{n-s}, t_{n-s+1}]``; for ``t >= T_n`` the solution is the constant
    terminal configuration.
    """

    params: ModelParams
    schedule: ConstructionSchedule
    creation_ops: list
    stage_snapshots: list
    M0: int
    stages: list = field(repr=False)
    stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.schedule.n

    @property
    def window_size(self) -> int:
        return int(self.stages[-1].positions.size) if self.stages else self.M0

    @property
    def terminal_value(self) -> float:
        return self.params.theta**self.n

    def _terminal_positions(self) -> np.ndarray:
        if not self.stages:
            return np.arange(self.M0)
        return self.stages[0].positions[self.stages[0].jumps.index_map()]

    def _stage_for(self, t: float) -> int:
        """Stage active at forward time ``t`` (0 for the terminal state)."""
        te = self.schedule.t_events
        n = self.n
        if t >= self.schedule.T_n:
            return 0
        j = int(np.searchsorted(te, t, side="right"))  # t in [t_{j-1}, t_j)
        return n - j + 1

    def masses_at(self, t: float) -> np.ndarray:
        """Glued configuration on the final window at forward time ``t``."""
        if t < 0:
            raise ValueError("forward time must be nonnegative")
        out = np.zeros(self.window_size)
        s = self._stage_for(t)
        if s == 0:
            out[self._terminal_positions()] = self.terminal_value
            return out
        st = self.stages[s - 1]
        beta = self.params.beta
        tau = self.schedule.T_n - t
        r = (tau - st.tau_start) / st.scale ** (1.0 - beta)
        r = min(max(r, 0.0), float(st.times[-1]))
        i = int(np.searchsorted(st.times, r, side="right")) - 1
        if st.times[i] == r or i == st.times.size - 1:
            v = st.masses[i]
        else:
            w = (r - st.times[i]) / (st.times[i + 1] - st.times[i])
            v = (1 - w) * st.masses[i] + w * st.masses[i + 1]
        out[st.positions] = st.scale * v
        return out

    def vanish_events(self) -> list:
        """Inserted sites of stage ``s`` vanish at forward time ``t_{n-s+1}``."""
        events = []
        te = self.schedule.t_events
        for s, st in enumerate(self.stages, start=1):
            created = np.ones(st.positions.size, dtype=bool)
            created[st.jumps.index_map()] = False
            t = float(te[self.n - s + 1])
            events += [Event(t, int(k), "vanish") for k in np.sort(st.positions[created])]
        return sorted(events, key=lambda e: (e.time, e.site))

    def forward_times(self, extra: float | None = None) -> np.ndarray:
        """All recorded forward times, ascending, ending past ``T_n``."""
        T_n = self.schedule.T_n
        ts = [np.array([T_n])]
        beta = self.params.beta
        for st in self.stages:
            ts.append(T_n - (st.tau_start + st.times * st.scale ** (1.0 - beta)))
        if extra is None:
            extra = max(1.0, 0.1 * T_n)
        ts.append(np.array([T_n + extra]))
        t = np.unique(np.concatenate(ts))
        return t[t >= 0]

    def trajectory(self) -> Trajectory:
        """Glued forward trajectory on the final window."""
        times = self.forward_times()
        masses = np.vstack([self.masses_at(float(t)) for t in times])
        return Trajectory(times, masses, tuple(self.vanish_events()), dict(self.stats))

    def initial(self) -> Configuration:
        return Configuration(self.masses_at(0.0))

    def sup_norm(self, t0: float, t1: float) -> float:
        """Largest mass over recorded forward times in ``[t0, t1]``."""
        ts = self.forward_times()
        ts = ts[(ts >= t0) & (ts <= t1)]
        return max(float(self.masses_at(float(t)).max()) for t in ts) if ts.size else 0.0

    def living_means(self) -> np.ndarray:
        """Full-window living mean at each scheduled time ``t_j``."""
        return np.array([living_mean(Configuration(self.masses_at(float(t)))) for t in self.schedule.t_events])

    def export(self, directory) -> list:
        """Write ``trajectory.csv``, ``events.csv`` and ``schedule.json``."""
        os.makedirs(directory, exist_ok=True)
        traj = self.trajectory()
        paths = [os.path.join(directory, name) for name in ("trajectory.csv", "events.csv", "schedule.json")]
        write_trajectory_csv(traj, paths[0])
        write_events_csv(traj.events, paths[1])
        sched = self.schedule.to_dict()
        sched["window_sizes"] = [int(st.positions.size) for st in self.stages]
        sched["jumps"] = [[int(v) for v in d.jumps] for d in self.creation_ops]
        with open(paths[2], "w") as fh:
            json.dump(sched, fh, indent=1)
        return paths


def _stage_grid(T: float, samples: int) -> np.ndarray:
    early = T * np.array([1e-4, 1e-3, 1e-2, 3e-2])
    return np.unique(np.concatenate((early, np.linspace(0.0, T, samples + 1)[1:])))


def _clip_unit(v: np.ndarray) -> np.ndarray:
    if np.any(v < 0.5 - 1e-9) or np.any(v > 1.0 + 1e-9):
        raise NumericalError("stage data left [1/2, 1]; the equilibration time is too short")
    return np.clip(v, 0.5, 1.0)


def _run_stages(params, n, M0, T, delta, samples, policy, start=None, first_scale=None):
    """Run stages from the terminal data; returns stages and snapshots, or the
    rescaled data of the first stage that failed to equilibrate."""
    theta, beta, eps = params.theta, params.beta, params.epsilon
    u = np.full(M0, theta**n) if start is None else np.array(start, dtype=float)
    snaps = [Configuration(u)]
    stages, tau = [], 0.0
    pol = policy or IntegratorPolicy()
    for j in range(1, n + 1):
        c = theta ** (n - j + 1) if first_scale is None else first_scale
        v_prev = _clip_unit(u / c)
        d, _plan, _N0 = average_modifying_insertion(Configuration(v_prev), eps)
        v0 = push_values(d, v_prev)
        grid = _stage_grid(T, samples)
        run = integrate_backward(
            Configuration(v0),
            params,
            T,
            delta=_stage_delta(beta, delta),
            policy=IntegratorPolicy(
                dt_init=pol.dt_init,
                dt_safety=pol.dt_safety,
                max_steps=pol.max_steps,
                dt_max=pol.dt_max,
                sample_times=tuple(grid),
            ),
        )
        masses = np.array(run.masses)
        masses[0] = v0
        if _sup_dev(masses[-1]) > eps * (1 + 1e-9):
            return None, (j, Configuration(v_prev))
        stages.append(_Stage(c, tau, d, np.array(run.times), masses))
        tau += T * c ** (1.0 - beta)
        u = c * masses[-1]
        snaps.append(Configuration(u))
    return (stages, snaps), None


def _assign_positions(stages: list) -> None:
    if not stages:
        return
    stages[-1].positions = np.arange(stages[-1].masses.shape[1])
    for s in range(len(stages) - 2, -1, -1):
        stages[s].positions = stages[s + 1].positions[stages[s + 1].jumps.index_map()]


def build_approximant(
    params: ModelParams,
    n: int,
    M0: int = 4096,
    T: float | None = None,
    probes: int = 4,
    seed: int = 0,
    delta: float | None = None,
    samples_per_stage: int = 40,
    policy: IntegratorPolicy | None = None,
    max_rebuilds: int = 6,
) -> ApproximantSolution:
    """Construct the ``n``-stage approximant from terminal data ``theta**n``.

    ``T`` defaults to ``params.T_equilibrate`` or, failing that, to the
    largest equilibration time over a probe ensemble.  If some stage is not
    within ``epsilon`` of 1/2 after time ``T``, ``T`` is raised to cover it
    and the whole construction is rerun, so the result is deterministic.
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    if n == 0:
        T0 = params.T_equilibrate or 1.0
        sched = schedule_from(params.beta, params.theta, T0, 0)
        return ApproximantSolution(params, sched, [], [Configuration.constant(1.0, M0)], M0, [])
    if T is None:
        T = params.T_equilibrate
    if T is None:
        T = ensemble_T(params, M0, probes, seed, delta)
    rebuilds = 0
    while True:
        result, failed = _run_stages(params, n, M0, T, delta, samples_per_stage, policy)
        if result is not None:
            break
        rebuilds += 1
        if rebuilds > max_rebuilds:
            raise EquilibrationTimeout("stage equilibration kept exceeding the common time")
        need = equilibrate(failed[1], params, delta=delta)[0]
        T = max(T, need) * 1.05
    stages, snaps = result
    _assign_positions(stages)
    sched = schedule_from(params.beta, params.theta, T, n)
    stats = {"T": T, "rebuilds": rebuilds, "window_sizes": [int(st.positions.size) for st in stages]}
    return ApproximantSolution(params, sched, [st.jumps for st in stages], snaps, M0, stages, stats)


@dataclass
class InstabilityDatum:
    """Data within ``epsilon`` of 1/2 whose forward evolution follows an
    ``n``-stage approximant after an extra equilibration stage of length
    ``lead``."""

    initial: Configuration
    approximant: ApproximantSolution
    lead: float

    def schedule_times(self) -> np.ndarray:
        """Scheduled vanishing times shifted to the clock starting at the
        datum."""
        return self.lead + self.approximant.schedule.t_events


def instability_run(params: ModelParams, n: int, **kwargs) -> InstabilityDatum:
    """Approximant plus one additional stage applied to its initial state."""
    approx = build_approximant(params, n, **kwargs)
    T = approx.schedule.T if n > 0 else None
    x0 = approx.initial().masses
    # the approximant's initial state is within [1/2, 1]; equilibrate it once more
    if T is None:
        T, _u, _d = equilibrate(Configuration(np.clip(x0, 0.5, 1.0)), params, delta=kwargs.get("delta"))
        T = max(T, 1e-12)
    result, failed = _run_stages(
        params, 1, approx.window_size, T, kwargs.get("delta"), kwargs.get("samples_per_stage", 40),
        kwargs.get("policy"), start=x0, first_scale=1.0,
    )
    if result is None:
        need = equilibrate(failed[1], params, delta=kwargs.get("delta"))[0]
        result, failed = _run_stages(
            params, 1, approx.window_size, need * 1.05, kwargs.get("delta"),
            kwargs.get("samples_per_stage", 40), kwargs.get("policy"), start=x0, first_scale=1.0,
        )
        T = need * 1.05
        if result is None:
            raise EquilibrationTimeout("extra stage did not equilibrate")
    stages, snaps = result
    return InstabilityDatum(snaps[-1], approx, float(T))


def instability_datum(params: ModelParams, n: int, **kwargs) -> Configuration:
    """Configuration uniformly within ``epsilon`` of 1/2 whose forward
    evolution coarsens like the ``n``-stage approximant."""
    return instability_run(params, n, **kwargs).initial
