"""Modified Bessel functions and the discrete heat kernel.

The kernel ``exp(-2t) I_k(2t)`` is the fundamental solution of the linear
lattice heat equation ``du/dt = u(k-1) - 2u(k) + u(k+1)``.  Everything here
is computed in the exponentially scaled form ``exp(-x) I_k(x)`` so that large
arguments never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError

_SERIES_MAX_X = 10.0


def _series_scaled(n: int, x: float) -> float:
    """``exp(-x) I_n(x)`` from the power series, summed in log-shifted form."""
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    half = 0.5 * x
    log_t0 = n * math.log(half) - math.lgamma(n + 1) - x
    if log_t0 < -745.0:
        return 0.0
    q = half * half
    term, total, m = 1.0, 1.0, 0
    while True:
        m += 1
        term *= q / (m * (m + n))
        total += term
        if term < 1e-17 * total:
            break
    return math.exp(log_t0) * total


def _miller_scaled(nmax: int, x: float) -> np.ndarray:
    """``exp(-x) I_k(x)`` for ``k = 0..nmax`` by downward recurrence.

    The unnormalized sequence is rescaled on the fly to stay finite and then
    normalized with ``I_0 + 2 sum_{k>=1} I_k = exp(x)``.
    """
    top = max(nmax, int(x))
    start = top + 30 + int(10 * math.sqrt(top + 1))
    vals = np.zeros(start + 2)
    vals[start] = 1e-280
    for k in range(start, 0, -1):
        vals[k - 1] = (2.0 * k / x) * vals[k] + vals[k + 1]
        if vals[k - 1] > 1e250:
            vals[k - 1 :] *= 1e-250
    total = vals[0] + 2.0 * np.sum(vals[1:])
    return vals[: nmax + 1] / total


def bessel_i_scaled_table(nmax: int, x: float) -> np.ndarray:
    """``exp(-x) I_k(x)`` for ``k = 0..nmax``."""
    if nmax < 0:
        raise DomainError("nmax must be nonnegative")
    if x < 0 or not np.isfinite(x):
        raise DomainError("x must be finite and nonnegative")
    if x <= _SERIES_MAX_X:
        return np.array([_series_scaled(k, x) for k in range(nmax + 1)])
    return _miller_scaled(nmax, x)


def bessel_i(n: int, x: float) -> float:
    """Modified Bessel function of the first kind ``I_n(x)``.

    Power series for ``x <= 10`` and normalized Miller recurrence above.
    Arguments beyond about 700 overflow; use :func:`heat_kernel` or
    :func:`bessel_i_scaled_table` there.

    Examples
    --------
    >>> round(bessel_i(0, 2.0), 7)
    2.2795853
    """
    if n < 0 or int(n) != n:
        raise DomainError("order must be a nonnegative integer")
    n = int(n)
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x <= _SERIES_MAX_X:
        return _series_scaled(n, x) * math.exp(x)
    return float(_miller_scaled(n, x)[n]) * math.exp(x)


def heat_kernel(t: float, k: int) -> float:
    """``exp(-2t) I_|k|(2t)``, the lattice heat kernel at time ``t``."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    k = abs(int(k))
    if t == 0:
        return 1.0 if k == 0 else 0.0
    return float(bessel_i_scaled_table(k, 2.0 * t)[k])


def default_radius(t: float) -> int:
    """Half-width beyond which the kernel mass is below roundoff."""
    return int(math.ceil(20 + 10 * math.sqrt(t)))


def heat_kernel_table(t: float, K: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sites ``-K..K`` and the kernel values on them."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    K = default_radius(t) if K is None else int(K)
    ks = np.arange(-K, K + 1)
    if t == 0:
        return ks, (ks == 0).astype(float)
    half = bessel_i_scaled_table(K, 2.0 * t)
    return ks, half[np.abs(ks)]


@dataclass(frozen=True)
class KernelProfile:
    """Fundamental-solution samples ``psi(t, k)`` on sites ``k`` at one time.

    ``meta`` carries provenance such as the coefficient bounds of the run the
    profile was extracted from.
    """

    t: float
    sites: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.array(self.sites, dtype=int)
        v = np.array(self.values, dtype=float)
        if s.shape != v.shape or s.ndim != 1:
            raise ValueError("sites and values must be matching 1-d arrays")
        if not self.t > 0:
            raise DomainError("profile time must be positive")
        order = np.argsort(s)
        s, v = s[order], v[order]
        if s.size > 1 and np.any(np.diff(s) != 1):
            raise ValueError("sites must be consecutive integers")
        s.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "sites", s)
        object.__setattr__(self, "values", v)

    @property
    def scale(self) -> float:
        return math.sqrt(self.t)

    def psi(self, k) -> np.ndarray:
        """Values at integer sites, zero outside the sampled range."""
        k = np.asarray(k, dtype=int)
        idx = k - self.sites[0]
        ok = (idx >= 0) & (idx < self.sites.size)
        out = np.zeros(k.shape)
        out[ok] = self.values[idx[ok]]
        return out

    def rescaled(self, xi) -> np.ndarray:
        """``U(t, xi) = sqrt(t) * psi(t, floor(sqrt(t) * xi))``."""
        xi = np.asarray(xi, dtype=float)
        return self.scale * self.psi(np.floor(self.scale * xi).astype(int))

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell edges in ``xi`` and the constant value of ``U`` on each cell.

        ``U(t, .)`` is piecewise constant with cells ``[k, k+1) / sqrt(t)``.
        """
        edges = np.append(self.sites, self.sites[-1] + 1) / self.scale
        return edges, self.scale * self.values

    def total_mass(self) -> float:
        return float(np.sum(self.values))

    def rows(self):
        """``(t, k, psi, U_xi, xi)`` tuples, one per sampled site."""
        xi = self.sites / self.scale
        for k, v, x in zip(self.sites, self.values, xi):
            yield self.t, int(k), float(v), float(self.scale * v), float(x)


def kernel_profile(t: float, K: int | None = None) -> KernelProfile:
    ks, vals = heat_kernel_table(t, K)
    return KernelProfile(t, ks, vals, {"source": "bessel"})


def coefficient_bounds(beta: float, u: np.ndarray) -> tuple[float, float]:
    """Range of the divergence-form coefficient ``a = dG(u) / du`` on edges."""
    from .backward import edge_coefficients

    a = edge_coefficients(beta, np.asarray(u, dtype=float))
    return float(a.min()), float(a.max())


def profile_from_run(traj, t: float, beta: float, center: int = 0, K: int | None = None) -> KernelProfile:
    """Kernel-like profile read off a backward run started from a unit mass.

    Sites are measured relative to ``center``; the coefficient bounds
    ``lambda1, lambda2`` of the run over the recorded times up to ``t`` are
    kept in ``meta``.
    """
    i = traj.index_at(t)
    if traj.times[i] != t:
        raise ValueError(f"time {t} is not a recorded time of the run")
    M = traj.window_size
    K = min(M // 2 - 1 if K is None else int(K), M // 2 - 1)
    ks = np.arange(-K, K + 1)
    vals = traj.masses[i][(center + ks) % M]
    lo, hi = np.inf, 0.0
    for row in traj.masses[1 : i + 1]:
        a, b = coefficient_bounds(beta, row)
        lo, hi = min(lo, a), max(hi, b)
    meta = {"source": "run", "beta": beta, "lambda1": lo, "lambda2": hi}
    return KernelProfile(t, ks, vals, meta)


def write_kernel_csv(profiles, path) -> None:
    """Kernel table with columns ``t,k,psi,U_xi,xi``."""
    with open(path, "w", newline="") as fh:
        fh.write("t,k,psi,U_xi,xi\n")
        for prof in profiles:
            for t, k, v, u, x in prof.rows():
                fh.write(f"{t:.17g},{k},{v:.17g},{u:.17g},{x:.17g}\n")
