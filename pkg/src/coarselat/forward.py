"""Forward coarsening dynamics with the particle-vanishing rule.

Alive sites evolve by the living-particle Laplacian of the flux.  For
``beta < 0`` the flux blows up as a mass goes to zero, so alive masses are
integrated in the variable ``y = x**(1 - beta)``, in which a vanishing
particle crosses zero at a finite, nonzero speed.  For ``beta > 0`` the
masses themselves are integrated.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import simpson, trapezoid

from .core import Configuration, DomainError, ModelParams, _flux_unchecked
from .integrator import (
    DormandPrince,
    IntegratorPolicy,
    NumericalError,
    Recorder,
    StepLimitExceeded,
    Trajectory,
)


def to_state(beta: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.copy() if beta > 0 else np.power(x, 1.0 - beta)


def to_mass(beta: float, y: np.ndarray) -> np.ndarray:
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    return y if beta > 0 else np.power(y, 1.0 / (1.0 - beta))


def forward_rhs(beta: float, y: np.ndarray, alive_idx: np.ndarray) -> np.ndarray:
    """Time derivative of the state ``y`` for the given alive sites."""
    out = np.zeros_like(y)
    if alive_idx.size == 0:
        return out
    x = to_mass(beta, y[alive_idx])
    F = _flux_unchecked(beta, x)
    if beta > 0:
        out[alive_idx] = np.roll(F, 1) - 2.0 * F + np.roll(F, -1)
    else:
        # x**(-beta) * (F(left) + F(right)) - 2, finite at x = 0
        nb = np.roll(F, 1) + np.roll(F, -1)
        out[alive_idx] = (1.0 - beta) * (np.power(x, -beta) * nb - 2.0)
    return out


def _time_resolution(t: float) -> float:
    return 1e-13 * max(1.0, abs(t))


def integrate_forward(
    cfg0: Configuration,
    params: ModelParams,
    t_end: float,
    policy: IntegratorPolicy | None = None,
) -> Trajectory:
    """Integrate the coarsening equation on ``[0, t_end]``.

    A particle vanishes when its mass drops to ``mass_tol`` (or when it would
    reach zero within the floating-point resolution of the clock).  The tiny
    residual mass is handed to its two living neighbours so the window mass is
    conserved exactly, and the site is excluded from the living Laplacian from
    then on.  Sites crossing within the same located event vanish together.

    Returns a :class:`Trajectory` whose ``stats`` hold step, rejection,
    event and function-evaluation counts.
    """
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    policy = policy or IntegratorPolicy()
    beta = params.beta
    mass_tol = policy.mass_tol if policy.mass_tol is not None else params.mass_tol
    y_tol = mass_tol if beta > 0 else mass_tol ** (1.0 - beta)
    safety = policy.dt_safety

    x0 = np.array(cfg0.masses, dtype=float)
    if not np.any(x0 > 0):
        raise DomainError("initial configuration has no alive site")
    y = to_state(beta, x0)
    total = float(x0.sum())
    alive = x0 > 0
    alive_idx = np.flatnonzero(alive)

    def fun(_t, state):
        return forward_rhs(beta, state, alive_idx)

    dp = DormandPrince(fun, params.ode_tol, params.ode_tol)
    rec = Recorder(policy.sample_times)
    rec.add(0.0, x0)
    events: list = []
    stats = {"steps": 0, "rejections": 0, "events": 0}

    t = 0.0
    f = fun(t, y)
    h = policy.dt_init
    halted = False

    def process_vanish(sites: np.ndarray) -> bool:
        nonlocal y, alive, alive_idx, f, halted
        x = to_mass(beta, y)
        alive_after = alive.copy()
        alive_after[sites] = False
        keep = np.flatnonzero(alive_after)
        for j in sites:
            events.append((t, int(j), "vanish"))
        stats["events"] += int(sites.size)
        if keep.size == 0:
            events.append((t, -1, "terminal"))
            halted = True
            x[sites] = 0.0
        else:
            pos = np.searchsorted(keep, sites)
            right = keep[pos % keep.size]
            left = keep[(pos - 1) % keep.size]
            share = 0.5 * x[sites]
            x[sites] = 0.0
            np.add.at(x, right, share)
            np.add.at(x, left, share)
            touched = np.unique(np.concatenate([left, right]))
            y[touched] = to_state(beta, x[touched])
        y[sites] = 0.0
        alive = alive_after
        alive_idx = keep
        f = fun(t, y)
        rec.add(t, to_mass(beta, y))
        return halted

    while t < t_end and not halted:
        # particles already at the threshold or about to hit zero below clock resolution
        ya, fa = y[alive_idx], f[alive_idx]
        tres = _time_resolution(t)
        h_min = 4.0 * tres
        dying = (ya <= y_tol) | ((fa < 0) & (ya <= -fa * (2.0 * h_min)))
        if np.any(dying):
            if process_vanish(alive_idx[dying]):
                break
            continue

        cap = np.inf
        dec = fa < 0
        if np.any(dec):
            cap = safety * float(np.min(ya[dec] / -fa[dec]))
        if beta < 0:
            cap = min(cap, safety * float(np.min(ya)))
        h_try = min(h, cap, t_end - t)
        if policy.dt_max is not None:
            h_try = min(h_try, policy.dt_max)
        if h_try < h_min:
            h_try = min(h_min, t_end - t)

        stats["steps"] += 1
        if stats["steps"] > policy.max_steps:
            raise StepLimitExceeded(f"exceeded {policy.max_steps} steps at t={t}")
        step = dp.attempt(t, y, f, h_try)
        if step.error > 1.0:
            if not np.isfinite(step.error) and h_try <= h_min:
                raise NumericalError(f"non-finite state at t={t}")
            if h_try > h_min:
                stats["rejections"] += 1
                h = dp.next_h(h_try, step.error)
                continue
            # the clock cannot resolve a smaller step; accept it
            stats["forced"] = stats.get("forced", 0) + 1

        crossing = alive_idx[step.y[alive_idx] <= y_tol]
        vanishing = None
        if crossing.size:
            theta = _locate_crossings(dp, y, step, crossing, y_tol)
            theta_c = float(theta.min())
            t_c = t + theta_c * h_try
            window = max(_time_resolution(t_c), 1e-9 * h_try)
            vanishing = crossing[(theta - theta_c) * h_try <= window]
            if theta_c < 1.0:
                step = dp.attempt(t, y, f, theta_c * h_try)
                if not np.all(np.isfinite(step.y)):
                    raise NumericalError(f"non-finite state at t={t}")

        _record_step(rec, dp, beta, y, step, t)
        t_new = t + step.h
        if t_end - t_new <= _time_resolution(t_end):
            t_new = t_end if vanishing is None else t_new
        t = t_new
        y = step.y
        f = step.f
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={t}")
        if beta < 0:
            # the transformed variable does not telescope exactly; restore the window mass
            y = _project_mass(beta, y, total)
        if vanishing is None:
            h = dp.next_h(h_try, step.error)
            if rec.sample is None:
                rec.add(t, to_mass(beta, y))
        else:
            y[vanishing] = np.minimum(y[vanishing], y_tol)
            if process_vanish(vanishing):
                break

    if rec.sample is None or rec.times[-1] < t:
        rec.add(t, to_mass(beta, y))
    stats["nfev"] = dp.nfev
    stats["t_final"] = t
    return rec.build(events, stats)


def _project_mass(beta: float, y: np.ndarray, total: float) -> np.ndarray:
    s = total / float(to_mass(beta, y).sum())
    return y * s ** (1.0 - beta)


def _locate_crossings(dp, y, step, sites, level) -> np.ndarray:
    """Fraction of the step at which each site's state first reaches ``level``.

    Bisection on the dense output; at the step start every site is above the
    level and at its end at or below it.
    """
    lo = np.zeros(sites.size)
    hi = np.ones(sites.size)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = dp.dense(y, step, mid, sites)
        below = val <= level
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
        if np.all(hi - lo < 1e-15):
            break
    return hi


def _record_step(rec: Recorder, dp, beta, y, step, t) -> None:
    if rec.sample is None:
        return
    for ts in rec.pending(t, t + step.h):
        rec.add(ts, to_mass(beta, dp.dense(y, step, (ts - t) / step.h)))


def mild_residual(traj: Trajectory, params: ModelParams, k: int, t1: float, t2: float) -> float:
    """Defect of the integral identity ``x(t2) - x(t1) = int Lap_sigma F(x) ds``.

    ``t1`` and ``t2`` are snapped to the nearest recorded times.  The time
    integral is split at vanishing events; on each piece the integrand uses the
    alive set of that piece (so its endpoint values are one-sided limits) and
    is integrated with Simpson's rule over the recorded snapshots.
    """
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    times = traj.times
    i1 = int(np.argmin(np.abs(times - t1)))
    i2 = int(np.argmin(np.abs(times - t2)))
    if i2 <= i1:
        return 0.0
    beta = params.beta
    k = int(k) % traj.window_size
    cuts = sorted({e.time for e in traj.events if times[i1] < e.time < times[i2]})
    bounds = [i1] + [int(np.searchsorted(times, c)) for c in cuts] + [i2]
    total = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a:
            continue
        # snapshot a is the post-event state, so its alive set holds on (a, b)
        alive = traj.masses[a] > 0
        vals = np.empty(b - a + 1)
        if not alive[k]:
            vals[:] = 0.0
        else:
            idx = np.flatnonzero(alive)
            pos = int(np.searchsorted(idx, k))
            nbs = [idx[(pos - 1) % idx.size], k, idx[(pos + 1) % idx.size]]
            seg = traj.masses[a : b + 1][:, nbs]
            F = _flux_unchecked(beta, seg)
            vals = F[:, 0] - 2.0 * F[:, 1] + F[:, 2]
        ts = times[a : b + 1]
        total += float(simpson(vals, x=ts)) if vals.size >= 3 else float(trapezoid(vals, ts))
    x = traj.masses[:, k]
    return abs(x[i2] - x[i1] - total)


def stationarity_time(traj: Trajectory, tol: float) -> float | None:
    """Earliest recorded time after which no mass varies by ``tol`` or more."""
    m = traj.masses
    hi = np.maximum.accumulate(m[::-1], axis=0)[::-1]
    lo = np.minimum.accumulate(m[::-1], axis=0)[::-1]
    spread = np.max(hi - lo, axis=1)
    ok = np.flatnonzero(spread < tol)
    if ok.size == 0:
        return None
    # suffix spread is nonincreasing, so the first hit starts the stationary tail
    return float(traj.times[ok[0]])
