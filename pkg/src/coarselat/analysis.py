"""Observables and fitted estimates: averages, living means, growth rates,
time regularity and kernel bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Configuration, DomainError
from .integrator import Trajectory
from .kernel import KernelProfile


@dataclass(frozen=True)
class RateFit:
    """Least-squares growth law.

    ``mode="power"``: ``v ~ prefactor * (t + origin)**exponent``.
    ``mode="exponential"``: ``v ~ prefactor * exp(exponent * t)``.
    ``residual`` is the RMS misfit of ``log v``.
    """

    exponent: float
    prefactor: float
    residual: float
    mode: str
    n_points: int
    origin: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": f"rate_{self.mode}",
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "residual": self.residual,
            "samples": self.n_points,
            "origin": self.origin,
        }


@dataclass(frozen=True)
class EstimateFit:
    """Smallest constant (and exponent, if fitted) in an upper bound."""

    C: float
    alpha: float | None
    kind: str
    n_points: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "C": self.C, "alpha": self.alpha, "samples": self.n_points}


def local_average(x: Configuration, k: int, N: int) -> float:
    """Cyclic mean of ``x`` over the ``2N + 1`` sites centred at ``k``,
    dead sites included."""
    M = x.window_size
    if N < 0 or 2 * N + 1 > M:
        raise DomainError("averaging window exceeds the lattice window")
    idx = (int(k) + np.arange(-N, N + 1)) % M
    return float(np.mean(x.masses[idx]))


def _sides(x: Configuration):
    """Alive masses strictly right and strictly left of site 0, nearest first."""
    alive = x.alive_indices
    if alive.size == 0:
        raise DomainError("configuration has no alive site")
    rest = alive[alive != 0]
    right = x.masses[rest]
    left = x.masses[rest[::-1]]
    return right, left, bool(x.masses[0] > 0)


def living_mean(x: Configuration, N: int | None = None) -> float:
    """Mean mass over site 0 (if alive) and its ``N`` nearest alive sites on
    each side, taken cyclically; ``None`` uses every alive site.

    When the two sides overlap on a small window each site is counted once.
    """
    alive = x.alive_indices
    if alive.size == 0:
        raise DomainError("configuration has no alive site")
    if N is None:
        return float(np.mean(x.masses[alive]))
    if N < 0:
        raise DomainError("N must be nonnegative")
    rest = alive[alive != 0]
    chosen = set(rest[:N].tolist()) | set(rest[::-1][:N].tolist())
    if x.masses[0] > 0:
        chosen.add(0)
    if not chosen:
        raise DomainError("no alive site selected")
    return float(np.mean(x.masses[sorted(chosen)]))


def living_mean_bounds(x: Configuration, N_min: int = 1) -> tuple[float, float]:
    """Smallest and largest living mean over radii ``N >= N_min`` for which the
    two sides do not overlap."""
    right, left, centre = _sides(x)
    n_max = right.size // 2
    if n_max < N_min:
        v = living_mean(x)
        return v, v
    cr = np.cumsum(right)[: n_max]
    cl = np.cumsum(left)[: n_max]
    N = np.arange(1, n_max + 1)
    c0 = x.masses[0] if centre else 0.0
    means = (cr + cl + c0) / (2 * N + (1 if centre else 0))
    means = means[N_min - 1 :]
    return float(means.min()), float(means.max())


def fit_rate(times, values, mode: str = "power", origin: float = 0.0) -> RateFit:
    """Least-squares fit of a power or exponential growth law.

    Parameters
    ----------
    origin
        Shift added to the times in power mode (``log(t + origin)`` is the
        regressor).  Use it when the data follow a power law about a virtual
        time origin, as geometric schedules do.

    Examples
    --------
    >>> t = [1.0, 2.0, 3.0, 4.0, 5.0]
    >>> round(fit_rate(t, [s * s for s in t]).exponent, 12)
    2.0
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be matching 1-d arrays")
    if t.size < 5:
        raise ValueError("a rate fit needs at least 5 samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if np.any(v <= 0):
        raise DomainError("values must be positive")
    if mode == "power":
        s = t + origin
        if np.any(s <= 0):
            raise DomainError("shifted times must be positive")
        X = np.log(s)
    elif mode == "exponential":
        X = t
    else:
        raise ValueError(f"unknown mode {mode!r}")
    Y = np.log(v)
    A = np.vstack([X, np.ones_like(X)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - Y) ** 2)))
    return RateFit(float(slope), float(np.exp(icpt)), resid, mode, int(t.size), float(origin) if mode == "power" else 0.0)


def holder_exponent(beta: float) -> float:
    return 1.0 / (1.0 - beta) if beta < 0 else 1.0


def holder_fit(traj: Trajectory, beta: float, t_max: float | None = None) -> EstimateFit:
    """Smallest ``C`` with ``|u(t2,k) - u(t1,k)| <= C |t2 - t1|**gamma`` over
    all recorded pairs, ``gamma = 1/(1-beta)`` for ``beta < 0`` and 1
    otherwise."""
    gamma = holder_exponent(beta)
    t = traj.times
    m = traj.masses
    if t_max is not None:
        keep = t <= t_max
        t, m = t[keep], m[keep]
    C = 0.0
    for i in range(t.size - 1):
        dt = (t[i + 1 :] - t[i]) ** gamma
        du = np.max(np.abs(m[i + 1 :] - m[i]), axis=1)
        C = max(C, float(np.max(du / dt)))
    return EstimateFit(C, gamma, "holder_time", int(t.size))


def _as_profiles(profile) -> list:
    if isinstance(profile, KernelProfile):
        return [profile]
    return list(profile)


def aronson_constant(profile) -> EstimateFit:
    """Smallest ``C`` with ``psi(t,k) <= C / s * exp(-|k| / s)``, ``s = max(1, sqrt t)``."""
    C, count = 0.0, 0
    for p in _as_profiles(profile):
        s = max(1.0, np.sqrt(p.t))
        C = max(C, float(np.max(p.values * s * np.exp(np.abs(p.sites) / s))))
        count += p.values.size
    return EstimateFit(C, None, "aronson", count)


def nash_fit(profile) -> EstimateFit:
    """Hölder exponent and constant of the kernel in space.

    For each time the largest increment ``D(r)`` at separation ``r`` in
    ``[1, sqrt t]`` is collected; ``log(sqrt(t) D)`` is regressed on
    ``log(r / sqrt t)`` over all times, the slope (capped at 1) is ``alpha``
    and ``C`` is the smallest constant making the bound hold at that
    ``alpha``.
    """
    X, Y = [], []
    for p in _as_profiles(profile):
        s = np.sqrt(p.t)
        r_max = int(np.floor(max(1.0, s)))
        for r in range(1, min(r_max, p.values.size - 1) + 1):
            D = float(np.max(np.abs(p.values[r:] - p.values[:-r])))
            if D > 0:
                X.append(np.log(r / s))
                Y.append(np.log(s * D))
    if len(X) < 2 or np.ptp(X) == 0:
        raise ValueError("at least 2 distinct increments are required")
    X, Y = np.array(X), np.array(Y)
    alpha = float(np.polyfit(X, Y, 1)[0])
    alpha = min(1.0, alpha)
    if alpha <= 0:
        raise ValueError("increments do not decay with separation")
    C = float(np.exp(np.max(Y - alpha * X)))
    return EstimateFit(C, alpha, "nash", int(X.size))


def kernel_estimates(profile) -> tuple[EstimateFit, EstimateFit]:
    """Aronson upper-bound constant and Nash continuity fit."""
    return aronson_constant(profile), nash_fit(profile)


def step_approximation_distance(profile: KernelProfile, delta: float) -> float:
    """L1 distance from ``U(t, .)`` to the best step function on the grid
    ``delta * Z``.

    ``U`` is piecewise constant on cells of width ``1/sqrt t``; on each grid
    cell the optimal constant is the length-weighted median of ``U``.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    edges, vals = profile.cells()
    lo = np.floor(edges[0] / delta) * delta
    hi = np.ceil(edges[-1] / delta) * delta
    grid = lo + delta * np.arange(int(round((hi - lo) / delta)) + 1)
    cuts = np.union1d(edges, grid)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    lens = np.diff(cuts)
    ui = np.searchsorted(edges, mids, side="right") - 1
    inside = (ui >= 0) & (ui < vals.size)
    pv = np.where(inside, vals[np.clip(ui, 0, vals.size - 1)], 0.0)
    cell = np.floor((mids - lo) / delta).astype(int)
    total = 0.0
    for c in np.unique(cell):
        sel = cell == c
        v, w = pv[sel], lens[sel]
        order = np.argsort(v)
        v, w = v[order], w[order]
        cw = np.cumsum(w)
        med = v[np.searchsorted(cw, 0.5 * cw[-1])]
        total += float(np.sum(w * np.abs(v - med)))
    return total


def window_mean(x: Configuration) -> float:
    return float(np.mean(x.masses))


def growth_samples(values: Sequence[float]) -> np.ndarray:
    """Ratios of consecutive samples, used to check monotone growth."""
    v = np.asarray(values, dtype=float)
    return v[1:] / v[:-1]
