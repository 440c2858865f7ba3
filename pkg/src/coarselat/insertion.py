"""Creation operators: inserting zero-mass particles into a configuration.

A jump sequence ``d`` inserts ``d[k]`` empty sites directly after site ``k``,
so site ``k`` moves to ``psi(k) = k + sum_{m < k} d[m]``.  Site 0 never moves,
which keeps means anchored at the origin unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Configuration, DomainError, _flux_unchecked, check_beta, sigma_laplacian


@dataclass(frozen=True)
class JumpSequence:
    """Nonnegative insertion counts, one per window site."""

    jumps: np.ndarray

    def __post_init__(self):
        d = np.array(self.jumps, dtype=np.int64).reshape(-1)
        if np.any(np.asarray(self.jumps) != d.reshape(np.shape(self.jumps))):
            raise DomainError("jumps must be integers")
        if np.any(d < 0):
            raise DomainError("jumps must be nonnegative")
        d.flags.writeable = False
        object.__setattr__(self, "jumps", d)

    @classmethod
    def zeros(cls, size: int) -> "JumpSequence":
        return cls(np.zeros(size, dtype=np.int64))

    @property
    def bound(self) -> int:
        return int(self.jumps.max()) if self.jumps.size else 0

    @property
    def total(self) -> int:
        return int(self.jumps.sum())

    @property
    def source_size(self) -> int:
        return int(self.jumps.size)

    @property
    def target_size(self) -> int:
        return self.source_size + self.total

    def index_map(self) -> np.ndarray:
        """``psi(k)`` for every source site."""
        d = self.jumps
        return np.arange(d.size) + np.concatenate(([0], np.cumsum(d)[:-1]))

    def to_json(self) -> str:
        return json.dumps([int(v) for v in self.jumps])

    @classmethod
    def from_json(cls, text: str) -> "JumpSequence":
        return cls(np.asarray(json.loads(text), dtype=np.int64))


def push_values(d: JumpSequence, values: np.ndarray) -> np.ndarray:
    """Place ``values`` at the image sites and zeros everywhere else."""
    values = np.asarray(values, dtype=float)
    if values.size != d.source_size:
        raise DomainError("jump sequence and configuration sizes differ")
    out = np.zeros(d.target_size)
    out[d.index_map()] = values
    return out


def push_forward(d: JumpSequence, x: Configuration) -> Configuration:
    """Creation operator: the configuration with ``d[k]`` empty sites after
    each site ``k``.

    Examples
    --------
    >>> d = JumpSequence([2, 0, 0])
    >>> push_forward(d, Configuration([1.0, 2.0, 3.0])).masses.tolist()
    [1.0, 0.0, 0.0, 2.0, 3.0]
    """
    return Configuration(push_values(d, x.masses))


def commutator_residual(d: JumpSequence, beta: float, x: Configuration) -> float:
    """Largest difference between inserting then applying the living Laplacian
    of the flux, and applying it then inserting."""
    check_beta(beta)
    y = push_forward(d, x)
    lhs = sigma_laplacian(_flux_unchecked(beta, y.masses), y.alive)
    rhs = push_values(d, sigma_laplacian(_flux_unchecked(beta, x.masses), x.alive))
    return float(np.max(np.abs(lhs - rhs)))


@dataclass(frozen=True)
class InsertionPlan:
    """Block insertion scheme.

    The window is cut into blocks of ``block_length`` sites starting at site
    0.  A block whose average lies in ``(level_grid[i-1], level_grid[i]]``
    is of kind ``i`` and receives ``insert_counts[i]`` empty sites after its
    last site.
    """

    block_length: int
    level_grid: np.ndarray
    insert_counts: np.ndarray
    block_kinds: np.ndarray = field(repr=False)
    block_averages: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "block_length": self.block_length,
            "level_grid": [float(v) for v in self.level_grid],
            "insert_counts": [int(v) for v in self.insert_counts],
            "blocks": int(self.block_kinds.size),
        }


def plan_constants(epsilon: float) -> tuple[int, np.ndarray, np.ndarray, int]:
    """Block length, level grid, insertion counts and averaging radius for
    ``epsilon``.  None of them depends on the data."""
    if not 0 < epsilon <= 0.5:
        raise DomainError("epsilon must lie in (0, 1/2]")
    K = math.ceil(4.0 / epsilon - 1e-9)
    m = math.ceil(1.0 / epsilon - 1e-9)
    levels = 0.5 + np.arange(m + 1) / (2.0 * m)
    counts = np.rint(K * (2.0 * levels - 1.0)).astype(np.int64)
    N0 = math.ceil(K / epsilon - 1e-9)
    return K, levels, counts, N0


def average_modifying_insertion(u0: Configuration, epsilon: float):
    """Insert empty sites so that every long local average is near 1/2.

    Returns ``(d, plan, N0)``: averages of the pushed data over ``2N + 1``
    sites are within ``epsilon`` of 1/2 for every ``N >= N0``.  The block
    length, and hence ``max d``, depend on ``epsilon`` only.
    """
    m = u0.masses
    if np.any(m < 0.5 - 1e-12) or np.any(m > 1.0 + 1e-12):
        raise DomainError("data must lie in [1/2, 1]")
    K, levels, counts, N0 = plan_constants(epsilon)
    M = m.size
    starts = np.arange(0, M, K)
    sums = np.add.reduceat(m, starts)
    lengths = np.diff(np.append(starts, M))
    avgs = sums / lengths
    # smallest grid level at or above the block average
    kinds = np.searchsorted(levels, avgs - 1e-12, side="left")
    kinds = np.clip(kinds, 0, levels.size - 1)
    jumps = np.zeros(M, dtype=np.int64)
    lvl = levels[kinds]
    n_ins = np.where(
        lengths == K, counts[kinds], np.rint(lengths * (2.0 * lvl - 1.0)).astype(np.int64)
    )
    jumps[starts + lengths - 1] = n_ins
    plan = InsertionPlan(K, levels, counts, kinds, avgs)
    return JumpSequence(jumps), plan, N0


def local_averages(values: np.ndarray, N: int) -> np.ndarray:
    """Cyclic averages over ``2N + 1`` sites centred at every site."""
    v = np.asarray(values, dtype=float)
    M = v.size
    if 2 * N + 1 > M:
        raise DomainError("averaging window exceeds the lattice window")
    ext = np.concatenate((v[M - N :], v, v[:N]))
    c = np.concatenate(([0.0], np.cumsum(ext)))
    return (c[2 * N + 1 :] - c[: -(2 * N + 1)]) / (2 * N + 1)


def max_local_deviation(values: np.ndarray, target: float, N_min: int, N_max: int | None = None) -> float:
    """``max |local average - target|`` over every site and every radius in
    ``[N_min, N_max]`` (all admissible radii by default).

    The scan stops early once no larger radius can beat the running maximum:
    with the mean drift removed, partial sums of ``values - target`` are
    periodic, so a window of radius ``N`` deviates by at most
    ``|mean - target| + range / (2N + 1)``.  The result is exact.
    """
    v = np.asarray(values, dtype=float) - target
    M = v.size
    top = (M - 1) // 2 if N_max is None else min(int(N_max), (M - 1) // 2)
    if N_min > top:
        raise DomainError("no admissible averaging radius")
    c = np.concatenate(([0.0], np.cumsum(np.concatenate((v, v, v)))))
    drift = float(v.mean())
    q = c[: M + 1] - drift * np.arange(M + 1)
    spread = float(q.max() - q.min())
    worst = 0.0
    for N in range(int(N_min), top + 1):
        if abs(drift) + spread / (2 * N + 1) <= worst:
            break
        w = 2 * N + 1
        avg = (c[M + N + 1 : 2 * M + N + 1] - c[M - N : 2 * M - N]) / w
        worst = max(worst, float(np.max(np.abs(avg))))
    return worst
