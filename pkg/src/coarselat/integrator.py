"""Explicit adaptive time stepping shared by the forward and backward solvers.

The stepper is the Dormand-Prince 5(4) pair with its fourth-order continuous
extension.  Solvers supply their own step caps and event logic; this module
only knows how to attempt a step, estimate its error and interpolate inside
it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import Configuration


class NumericalError(RuntimeError):
    """Integration produced non-finite values or otherwise broke down."""


class StepLimitExceeded(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


@dataclass(frozen=True)
class IntegratorPolicy:
    """Step-size policy.

    ``dt_safety`` scales both the no-overshoot cap for decreasing masses and
    the diffusive stability cap of the backward solver.  ``mass_tol`` of
    ``None`` defers to :attr:`ModelParams.mass_tol`.  With ``sample_times``
    left as ``None`` every accepted step is recorded.
    """

    dt_init: float = 1e-3
    dt_safety: float = 0.8
    mass_tol: float | None = None
    max_steps: int = 2_000_000
    dt_max: float | None = None
    sample_times: tuple | None = None

    def __post_init__(self):
        if not self.dt_init > 0:
            raise ValueError("dt_init must be positive")
        if not 0 < self.dt_safety < 1:
            raise ValueError("dt_safety must lie in (0, 1)")
        if self.mass_tol is not None and not self.mass_tol > 0:
            raise ValueError("mass_tol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.sample_times is not None:
            st = np.asarray(self.sample_times, dtype=float)
            if st.ndim != 1 or np.any(np.diff(st) <= 0):
                raise ValueError("sample_times must be strictly increasing")
            object.__setattr__(self, "sample_times", tuple(float(v) for v in st))


class Event(NamedTuple):
    time: float
    site: int
    kind: str


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered snapshots of one run plus its event log.

    ``masses`` has shape ``(len(times), window_size)``.
    """

    times: np.ndarray
    masses: np.ndarray = field(repr=False)
    events: tuple = ()
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        m = np.array(self.masses, dtype=float)
        if m.ndim != 2 or m.shape[0] != t.size:
            raise ValueError("masses must have one row per recorded time")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        t.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "events", tuple(Event(*e) for e in self.events))

    @property
    def window_size(self) -> int:
        return int(self.masses.shape[1])

    def __len__(self) -> int:
        return int(self.times.size)

    def snapshot(self, i: int) -> Configuration:
        return Configuration(self.masses[i])

    @property
    def final(self) -> Configuration:
        return self.snapshot(-1)

    def index_at(self, t: float) -> int:
        """Index of the last recorded time not after ``t``."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"time {t} precedes the trajectory")
        return i

    def masses_at(self, t: float) -> np.ndarray:
        """Masses at ``t``, linearly interpolated between snapshots."""
        times = self.times
        if t <= times[0]:
            return self.masses[0].copy()
        if t >= times[-1]:
            return self.masses[-1].copy()
        i = self.index_at(t)
        if times[i] == t:
            return self.masses[i].copy()
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1 - w) * self.masses[i] + w * self.masses[i + 1]

    def vanish_events(self) -> list:
        return [e for e in self.events if e.kind == "vanish"]

    def total_mass(self) -> np.ndarray:
        return self.masses.sum(axis=1)

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)

    def events_to_csv(self, path) -> None:
        write_events_csv(self.events, path)


def fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else str(v)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """``time,site,mass,alive`` rows, time-major then site order."""
    with open(path, "w", newline="") as fh:
        fh.write("time,site,mass,alive\n")
        sites = np.arange(traj.window_size)
        for t, row in zip(traj.times, traj.masses):
            ts = "%.17g" % t
            lines = [
                f"{ts},{k},{m:.17g},{1 if m > 0 else 0}\n"
                for k, m in zip(sites, row)
            ]
            fh.writelines(lines)


def write_events_csv(events: Sequence[Event], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("time,site,kind\n")
        for e in sorted(events, key=lambda e: (e.time, e.site)):
            fh.write(f"{e.time:.17g},{e.site},{e.kind}\n")


def read_trajectory_csv(path, events_path=None) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    m = int(data[:, 1].max()) + 1
    masses = data[:, 2].reshape(times.size, m)
    events = []
    if events_path is not None:
        with open(events_path, newline="") as fh:
            for row in csv.DictReader(fh):
                events.append(Event(float(row["time"]), int(row["site"]), row["kind"]))
    return Trajectory(times, masses, tuple(events))


# Dormand-Prince 5(4) tableau with the continuous extension of Hairer et al.
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array(
    [-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40]
)
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


class StepResult(NamedTuple):
    y: np.ndarray
    f: np.ndarray
    error: float
    K: np.ndarray
    h: float


class DormandPrince:
    """Single-step engine; callers own the time loop."""

    order = 5

    def __init__(self, fun: Callable[[float, np.ndarray], np.ndarray], rtol: float, atol: float):
        self.fun = fun
        self.rtol = rtol
        self.atol = atol
        self.nfev = 0

    def attempt(self, t: float, y: np.ndarray, f: np.ndarray, h: float) -> StepResult:
        K = np.empty((7, y.size))
        K[0] = f
        for s in range(1, 6):
            dy = np.dot(_A[s], K[:s]) * h
            K[s] = self.fun(t + _C[s] * h, y + dy)
        y_new = y + h * np.dot(_B, K[:6])
        f_new = self.fun(t + h, y_new)
        K[6] = f_new
        self.nfev += 6
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            return StepResult(y_new, f_new, np.inf, K, h)
        err = h * np.dot(_E, K)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        error = float(np.max(np.abs(err) / scale)) if y.size else 0.0
        return StepResult(y_new, f_new, error, K, h)

    @staticmethod
    def dense(y: np.ndarray, step: StepResult, theta, idx=None) -> np.ndarray:
        """State at ``t + theta*h``; ``theta`` may be a scalar or an array
        matched to ``idx``."""
        K = step.K if idx is None else step.K[:, idx]
        y0 = y if idx is None else y[idx]
        Q = K.T @ _P
        th = np.asarray(theta, dtype=float)
        if th.ndim == 0:
            p = th ** np.arange(1, 5)
            return y0 + step.h * (Q @ p)
        p = th[:, None] ** np.arange(1, 5)[None, :]
        return y0 + step.h * np.sum(Q * p, axis=1)

    def next_h(self, h: float, error: float) -> float:
        if error == 0:
            return 5.0 * h
        if not np.isfinite(error):
            return 0.2 * h
        factor = 0.9 * error ** (-1.0 / self.order)
        return h * min(5.0, max(0.2, factor))


class Recorder:
    """Collects snapshots either at every accepted step or on a sample grid."""

    def __init__(self, sample_times=None):
        self.sample = None if sample_times is None else np.asarray(sample_times, float)
        self.pos = 0
        self.times: list = []
        self.rows: list = []

    def add(self, t: float, x: np.ndarray) -> None:
        if self.times and t <= self.times[-1]:
            if t == self.times[-1]:
                self.rows[-1] = x.copy()
            return
        self.times.append(float(t))
        self.rows.append(np.array(x, dtype=float))

    def pending(self, t0: float, t1: float) -> np.ndarray:
        """Sample times inside ``(t0, t1]`` not yet recorded."""
        if self.sample is None:
            return np.empty(0)
        lo = self.pos
        while lo < self.sample.size and self.sample[lo] <= t0:
            lo += 1
        hi = lo
        while hi < self.sample.size and self.sample[hi] <= t1:
            hi += 1
        self.pos = hi
        return self.sample[lo:hi]

    def build(self, events=(), stats=None) -> Trajectory:
        return Trajectory(
            np.array(self.times), np.vstack(self.rows), tuple(events), dict(stats or {})
        )
