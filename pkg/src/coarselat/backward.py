"""Time-reversed fast diffusion, Harnack floors and the positivity class.

The backward equation ``du/dt = Lap G(u)`` with ``G = -F`` uses the ordinary
periodic Laplacian: every site takes part, including those with zero mass.
For ``beta < 0`` the state is integrated as ``y = u**(1 - beta)``, in which a
tiny mass grows at a bounded rate; such runs need strictly positive data,
obtained by raising the data to a floor ``delta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .core import Configuration, DomainError, ModelParams, check_beta
from .integrator import (
    DormandPrince,
    IntegratorPolicy,
    NumericalError,
    Recorder,
    SingularityError,
    StepLimitExceeded,
    Trajectory,
)
from .kernel import heat_kernel


def _to_state(beta, u):
    return np.array(u, dtype=float) if beta > 0 else np.power(u, 1.0 - beta)


def _to_mass(beta, y):
    y = np.maximum(y, 0.0)
    return y if beta > 0 else np.power(y, 1.0 / (1.0 - beta))


def backward_rhs(beta: float, y: np.ndarray) -> np.ndarray:
    u = _to_mass(beta, y)
    if beta > 0:
        g = np.power(u, beta)
        return np.roll(g, 1) - 2.0 * g + np.roll(g, -1)
    # (1 - beta) * (2 - (u/u_left)**|beta| - (u/u_right)**|beta|)
    with np.errstate(divide="ignore"):
        g = np.power(u, beta)
    r = np.power(u, -beta) * (np.roll(g, 1) + np.roll(g, -1))
    return (1.0 - beta) * (2.0 - r)


def edge_coefficients(beta: float, u: np.ndarray) -> np.ndarray:
    """Divergence-form coefficients ``(G(u[k+1]) - G(u[k])) / (u[k+1] - u[k])``.

    Entry ``k`` belongs to the edge between ``k`` and ``k + 1`` (cyclic).  On
    nearly flat edges the derivative at the midpoint is used instead.
    """
    u = np.asarray(u, dtype=float)
    floor = 1e-12 * max(1.0, float(np.max(u)))
    u = np.maximum(u, floor)
    G = np.sign(beta) * np.power(u, beta)
    un = np.roll(u, -1)
    du = un - u
    dG = np.roll(G, -1) - G
    flat = np.abs(du) <= 1e-6 * np.maximum(u, un)
    a = np.empty_like(u)
    mid = 0.5 * (u[flat] + un[flat])
    a[flat] = abs(beta) * np.power(mid, beta - 1.0)
    a[~flat] = dG[~flat] / du[~flat]
    return a


def integrate_backward(
    u0: Configuration,
    params: ModelParams,
    t_end: float,
    delta: float = 0.0,
    policy: IntegratorPolicy | None = None,
    stop: Callable[[np.ndarray], bool] | None = None,
) -> Trajectory:
    """Integrate ``du/dt = Lap G(u)`` on ``[0, t_end]``.

    Parameters
    ----------
    delta
        Floor applied to the data, ``u0 ∨ delta``.  Required to be positive
        for ``beta < 0`` whenever ``u0`` has zeros.
    stop
        Optional predicate on the masses; the run ends at the first time it
        holds, located to within roundoff by bisection on the dense output
        (the predicate is assumed to stay true once it holds).

    Returns
    -------
    Trajectory
        Row 0 holds the data actually integrated (after the floor).
    """
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    policy = policy or IntegratorPolicy()
    beta = params.beta
    u = np.array(u0.masses, dtype=float)
    if delta > 0:
        u = np.maximum(u, delta)
    if beta < 0 and np.any(u <= 0):
        raise SingularityError("beta < 0 needs strictly positive data; pass delta > 0")
    total = float(u.sum())
    y = _to_state(beta, u)

    def fun(_t, state):
        return backward_rhs(beta, state)

    dp = DormandPrince(fun, params.ode_tol, params.ode_tol)
    rec = Recorder(policy.sample_times)
    rec.add(0.0, u)
    stats = {"steps": 0, "rejections": 0, "events": 0}
    t = 0.0
    if stop is not None and stop(u):
        stats["nfev"] = 0
        stats["t_final"] = 0.0
        return rec.build((), stats)
    f = fun(t, y)
    h = policy.dt_init
    safety = policy.dt_safety

    while t < t_end:
        a_max = float(np.max(edge_coefficients(beta, _to_mass(beta, y))))
        h_try = min(h, safety / (2.0 * a_max), t_end - t)
        if policy.dt_max is not None:
            h_try = min(h_try, policy.dt_max)
        if t + h_try == t:
            raise NumericalError(f"step size underflow at t={t}")
        stats["steps"] += 1
        if stats["steps"] > policy.max_steps:
            raise StepLimitExceeded(f"exceeded {policy.max_steps} steps at t={t}")
        step = dp.attempt(t, y, f, h_try)
        if step.error > 1.0:
            stats["rejections"] += 1
            h = dp.next_h(h_try, step.error)
            continue
        if beta < 0 and np.any(step.y <= 0):
            raise SingularityError(f"a mass reached zero at t={t + h_try}")

        stopped = False
        if stop is not None and stop(_to_mass(beta, step.y)):
            theta = _first_true(lambda th: stop(_to_mass(beta, dp.dense(y, step, th))))
            if theta < 1.0:
                step = dp.attempt(t, y, f, theta * h_try)
            stopped = True

        if rec.sample is not None:
            for ts in rec.pending(t, t + step.h):
                rec.add(ts, _to_mass(beta, dp.dense(y, step, (ts - t) / step.h)))
        t = t + step.h
        if t_end - t <= 1e-14 * max(1.0, t_end):
            t = t_end
        y = step.y
        f = step.f
        if beta < 0:
            y = y * (total / float(_to_mass(beta, y).sum())) ** (1.0 - beta)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={t}")
        h = dp.next_h(h_try, step.error)
        if rec.sample is None or stopped:
            rec.add(t, _to_mass(beta, y))
        if stopped:
            break

    if rec.times[-1] < t:
        rec.add(t, _to_mass(beta, y))
    stats["nfev"] = dp.nfev
    stats["t_final"] = t
    return rec.build((), stats)


def _first_true(pred: Callable[[float], bool], iters: int = 60) -> float:
    """Smallest ``theta`` in ``(0, 1]`` with ``pred(theta)``, given ``pred(1)``."""
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14:
            break
    return hi


@dataclass(frozen=True)
class PositivityClass:
    """Data in which every site sees a mass of at least ``d`` within ``L``
    steps to its right (cyclically)."""

    L: int
    d: float

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise DomainError("L must be a positive integer")
        if not self.d > 0:
            raise DomainError("d must be positive")


def membership_PLd(u: Configuration, pc: PositivityClass) -> bool:
    """Whether every site's gap to the next site of mass at least ``d`` is at
    most ``L``."""
    heavy = np.flatnonzero(u.masses >= pc.d)
    if heavy.size == 0:
        return False
    M = u.window_size
    k = np.arange(M)
    nxt = heavy[np.searchsorted(heavy, k, side="right") % heavy.size]
    gap = (nxt - k) % M
    gap[gap == 0] = M
    return bool(np.all(gap <= pc.L))


def local_mass(u0: Configuration, k: int, L: int) -> float:
    """Initial mass on the ``2L + 1`` sites centred at ``k``."""
    M = u0.window_size
    idx = (int(k) + np.arange(-L, L + 1)) % M
    return float(np.sum(u0.masses[idx]))


def dominating(beta: float, v):
    """``2 v**beta + v / (1 - beta)``, the growth bound of the local problem."""
    return 2.0 * np.power(v, beta) + np.asarray(v) / (1.0 - beta)


def harnack_eta1(beta: float, c: float) -> float:
    """Inverse of ``v -> 2 v**beta + v/(1 - beta)`` at ``c``.

    Examples
    --------
    >>> harnack_eta1(0.5, 4.0)
    1.0
    """
    if not 0 < beta < 1:
        raise DomainError("harnack_eta1 needs 0 < beta < 1")
    if c < 0:
        raise DomainError("c must be nonnegative")
    if c == 0:
        return 0.0
    hi = max(1.0, c)
    root = brentq(lambda v: float(dominating(beta, v)) - c, 0.0, hi, xtol=np.finfo(float).tiny, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(root)


def harnack_floor(beta: float, r: int) -> float:
    """``eta_1`` applied ``r`` times to 1."""
    if r < 0 or int(r) != r:
        raise DomainError("r must be a nonnegative integer")
    v = 1.0
    for _ in range(int(r)):
        v = harnack_eta1(beta, v)
    return v


def positivity_envelope(beta: float, t: np.ndarray, L: int) -> np.ndarray:
    """Time profile of the lower bound: ``min(1, t**(1/(1-beta)))`` or, for
    ``beta = 1``, ``exp(-2t) I_L(2t)``."""
    t = np.asarray(t, dtype=float)
    if beta == 1:
        return np.array([heat_kernel(s, L) for s in t])
    return np.minimum(1.0, np.power(t, 1.0 / (1.0 - beta)))


def positivity_fit(traj: Trajectory, params: ModelParams, pc: PositivityClass) -> float:
    """Largest ``c`` with ``u(t, k) >= c * envelope(t)`` at every recorded
    ``t > 0`` and site ``k``.  Returns 0 when some mass is not positive."""
    check_beta(params.beta)
    keep = traj.times > 0
    if not np.any(keep):
        raise ValueError("trajectory has no positive recorded time")
    t = traj.times[keep]
    env = positivity_envelope(params.beta, t, pc.L)
    low = traj.masses[keep].min(axis=1)
    if np.any(low <= 0) or np.any(env <= 0):
        return 0.0
    return float(np.min(low / env))


def comparison_violation(traj: Trajectory, lo: float | None = None, hi: float | None = None) -> float:
    """How far the run leaves ``[lo, hi]`` (data bounds by default)."""
    m0 = traj.masses[0]
    lo = float(m0.min()) if lo is None else lo
    hi = float(m0.max()) if hi is None else hi
    m = traj.masses
    return float(max(0.0, lo - m.min(), m.max() - hi))

