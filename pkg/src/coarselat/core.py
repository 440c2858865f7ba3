"""Lattice data model, flux functions and difference operators.

A configuration is a finite periodic window of nonnegative masses.  A site is
alive iff its mass is strictly positive; dead sites stay in place and are only
skipped by the living-neighbour relations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the admissible domain."""


@dataclass(frozen=True)
class ModelParams:
    """Model exponent, equilibration accuracy and numerical tolerances.

    ``theta`` is derived from ``epsilon`` as ``1 / (1/2 + epsilon)``.
    ``T_equilibrate`` may be left as ``None``; the construction then
    determines it empirically.
    """

    beta: float
    epsilon: float = 1.0 / 6.0
    T_equilibrate: float | None = None
    mass_tol: float = 1e-12
    ode_tol: float = 1e-8

    def __post_init__(self):
        check_beta(self.beta)
        if not (0.0 < self.epsilon <= 1.0 / 6.0 + 1e-15):
            raise DomainError(f"epsilon must lie in (0, 1/6], got {self.epsilon}")
        if self.T_equilibrate is not None and not self.T_equilibrate > 0:
            raise DomainError("T_equilibrate must be positive")
        if not (self.mass_tol > 0 and self.ode_tol > 0):
            raise DomainError("tolerances must be positive")

    @property
    def theta(self) -> float:
        return 1.0 / (0.5 + self.epsilon)

    def with_(self, **changes) -> "ModelParams":
        data = {
            "beta": self.beta,
            "epsilon": self.epsilon,
            "T_equilibrate": self.T_equilibrate,
            "mass_tol": self.mass_tol,
            "ode_tol": self.ode_tol,
        }
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "epsilon": self.epsilon,
            "theta": self.theta,
            "T_equilibrate": self.T_equilibrate,
            "mass_tol": self.mass_tol,
            "ode_tol": self.ode_tol,
        }


def check_beta(beta: float) -> None:
    if not np.isfinite(beta) or beta == 0 or beta > 1:
        raise DomainError(f"beta must lie in (-inf, 0) U (0, 1], got {beta}")


@dataclass(frozen=True)
class Configuration:
    """Masses on a periodic window.

    The array is copied and made read-only, so a configuration can be shared
    freely between threads and trajectories.
    """

    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.masses, dtype=float, copy=True).reshape(-1)
        if m.size == 0:
            raise DomainError("a configuration needs at least one site")
        if not np.all(np.isfinite(m)):
            raise DomainError("masses must be finite")
        if np.any(m < 0):
            raise DomainError("masses must be nonnegative")
        m.flags.writeable = False
        object.__setattr__(self, "masses", m)

    @property
    def window_size(self) -> int:
        return int(self.masses.size)

    @property
    def boundary(self) -> str:
        return "periodic"

    @property
    def alive(self) -> np.ndarray:
        return self.masses > 0

    @property
    def alive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.masses > 0)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.masses > 0)

    def __len__(self) -> int:
        return self.window_size

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash(self.masses.tobytes())

    def to_json(self) -> str:
        return json.dumps(
            {
                "masses": [float(v) for v in self.masses],
                "window_size": self.window_size,
                "boundary": "periodic",
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        data = json.loads(text)
        if isinstance(data, list):
            return cls(np.asarray(data, dtype=float))
        masses = np.asarray(data["masses"], dtype=float)
        if "window_size" in data and int(data["window_size"]) != masses.size:
            raise DomainError("window_size does not match the mass array")
        if data.get("boundary", "periodic") != "periodic":
            raise DomainError("only periodic windows are supported")
        return cls(masses)

    @classmethod
    def constant(cls, value: float, size: int) -> "Configuration":
        return cls(np.full(size, float(value)))

    @classmethod
    def periodic(cls, pattern, size: int) -> "Configuration":
        pattern = np.asarray(pattern, dtype=float)
        reps = -(-size // pattern.size)
        return cls(np.tile(pattern, reps)[:size])


@dataclass(frozen=True)
class LivingNeighbors:
    left: int
    right: int


def flux(beta: float, x):
    """Coarsening flux ``-sign(beta) * x**beta`` with value 0 at ``x = 0``.

    Works elementwise on arrays.
    """
    check_beta(beta)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise DomainError("flux is only defined for nonnegative masses")
    out = _flux_unchecked(beta, xa)
    return float(out) if np.ndim(out) == 0 else out


def gflux(beta: float, u):
    """Backward flux ``sign(beta) * u**beta`` (the negative of :func:`flux`)."""
    check_beta(beta)
    ua = np.asarray(u, dtype=float)
    if np.any(ua < 0):
        raise DomainError("gflux is only defined for nonnegative arguments")
    if beta < 0 and np.any(ua == 0):
        raise ZeroDivisionError("gflux is singular at u = 0 for beta < 0")
    out = np.sign(beta) * ua**beta
    return float(out) if np.ndim(out) == 0 else out


def _flux_unchecked(beta: float, x: np.ndarray) -> np.ndarray:
    sgn = -1.0 if beta > 0 else 1.0
    if beta > 0:
        return sgn * np.power(x, beta)
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = sgn * np.power(x[pos], beta)
    return out


def living_neighbors(cfg: Configuration, k: int) -> LivingNeighbors:
    """Nearest alive positions strictly before and after ``k`` in cyclic order.

    On a window with a single alive site the neighbours wrap around to that
    site (which may be ``k`` itself).
    """
    alive = cfg.alive_indices
    if alive.size == 0:
        raise DomainError("configuration has no alive site")
    m = cfg.window_size
    k = int(k) % m
    pos = np.searchsorted(alive, k, side="right")
    right = alive[pos % alive.size]
    lpos = np.searchsorted(alive, k, side="left") - 1
    left = alive[lpos % alive.size]
    return LivingNeighbors(int(left), int(right))


def sigma_laplacian_flux(cfg: Configuration, beta: float, k: int) -> float:
    """``[F(x(s-)) - 2 F(x(k)) + F(x(s+))]`` at an alive site, 0 at a dead one."""
    check_beta(beta)
    x = cfg.masses
    k = int(k) % cfg.window_size
    if x[k] <= 0:
        return 0.0
    nb = living_neighbors(cfg, k)
    f = _flux_unchecked(beta, x[[nb.left, k, nb.right]])
    return float(f[0] - 2.0 * f[1] + f[2])


def sigma_laplacian(values: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Living-particle Laplacian of ``values`` over the alive mask.

    Dead entries of the result are 0.  The alive sites form a cycle in window
    order, so the first alive site's left neighbour is the last alive site.
    """
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    idx = np.flatnonzero(alive)
    if idx.size == 0:
        return out
    v = values[idx]
    out[idx] = np.roll(v, 1) - 2.0 * v + np.roll(v, -1)
    return out


def sigma_laplacian_field(cfg: Configuration, beta: float) -> np.ndarray:
    """Vectorised :func:`sigma_laplacian_flux` over the whole window."""
    check_beta(beta)
    return sigma_laplacian(_flux_unchecked(beta, cfg.masses), cfg.alive)


def laplacian(values: np.ndarray) -> np.ndarray:
    """Periodic three-point Laplacian ``v(k-1) - 2 v(k) + v(k+1)``."""
    v = np.asarray(values, dtype=float)
    return np.roll(v, 1) - 2.0 * v + np.roll(v, -1)
