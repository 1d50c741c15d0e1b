"""Geometry, pair potentials, configurations, energy deltas, and the cell-list grid.

Points are plain tuples of floats; boxes are axis-aligned with the origin at a
corner. Infinite energies are represented by ``math.inf`` and propagate through
sums without special casing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Domain",
    "HardSphere",
    "SoftCore",
    "Configuration",
    "SpatialGrid",
    "GridConsistencyError",
    "unit_ball_volume",
    "delta_energy",
    "birth_acceptance",
    "uniform_point",
]


class GridConsistencyError(RuntimeError):
    """Raised when a grid update contradicts the grid's own bookkeeping."""


def unit_ball_volume(d):
    """Volume of the unit ball in d dimensions."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box [0, L_1) x ... x [0, L_d)."""

    lengths: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        if not lengths:
            raise ValueError("domain needs at least one side length")
        if any(not (x > 0.0) or not math.isfinite(x) for x in lengths):
            raise ValueError(f"side lengths must be positive finite, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dimension(self):
        return len(self.lengths)

    @property
    def volume(self):
        return math.prod(self.lengths)

    def contains(self, point):
        return len(point) == self.dimension and all(
            0.0 <= x <= L for x, L in zip(point, self.lengths)
        )


@dataclass(frozen=True)
class HardSphere:
    """Hard spheres of radius r: infinite energy below center distance 2r.

    The boundary case dist == 2r is allowed (zero energy); rejection uses the
    strict inequality dist < 2r.
    """

    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")

    @property
    def interaction_range(self):
        return 2.0 * self.radius

    def phi(self, x, y):
        return math.inf if _sqdist(x, y) < self.interaction_range**2 else 0.0

    def temperedness_constant(self, d):
        """C_phi: volume of the ball of radius 2r in d dimensions."""
        return self.interaction_range**d * unit_ball_volume(d)


@dataclass(frozen=True)
class SoftCore:
    """Step potential: energy J per pair below distance R, zero beyond.

    J = 0 gives the ideal (Poisson) gas, useful as a control.
    """

    strength: float
    range: float

    def __post_init__(self):
        if self.strength < 0.0:
            raise ValueError("strength must be nonnegative (repulsive)")
        if not self.range > 0.0:
            raise ValueError("range must be positive")

    @property
    def interaction_range(self):
        return self.range

    def phi(self, x, y):
        return self.strength if _sqdist(x, y) < self.range**2 else 0.0

    def temperedness_constant(self, d):
        return (1.0 - math.exp(-self.strength)) * self.range**d * unit_ball_volume(d)


def _sqdist(x, y):
    return sum((a - b) ** 2 for a, b in zip(x, y))


class Configuration:
    """A finite identified point set: parallel tuples of ids and positions."""

    __slots__ = ("ids", "positions")

    def __init__(self, ids=(), positions=()):
        self.ids = tuple(ids)
        self.positions = tuple(tuple(float(c) for c in p) for p in positions)
        if len(self.ids) != len(self.positions):
            raise ValueError("ids and positions must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("particle ids must be unique")

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids, self.positions))

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.ids == other.ids
            and self.positions == other.positions
        )

    def __repr__(self):
        return f"Configuration(n={len(self)})"

    def positions_array(self):
        d = len(self.positions[0]) if self.positions else 1
        return np.asarray(self.positions, dtype=float).reshape(len(self), d)

    def is_valid(self, domain, potential):
        """True iff all points lie in the domain and the total energy is finite."""
        if any(not domain.contains(p) for p in self.positions):
            return False
        pos = self.positions
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if potential.phi(pos[i], pos[j]) == math.inf:
                    return False
        return True

    def min_pair_distance(self):
        pos = self.positions
        best = math.inf
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                best = min(best, math.sqrt(_sqdist(pos[i], pos[j])))
        return best


class SpatialGrid:
    """Cell list over a box domain with cell side equal to the interaction range.

    Every query for points within the interaction range of x only needs the
    cell of x and its <= 3^d - 1 neighbors (including diagonals). Points
    exactly on the upper domain boundary are clamped into the last cell.
    """

    __slots__ = ("cell_side", "shape", "cells", "_where")

    def __init__(self, domain, cell_side):
        if not cell_side > 0.0:
            raise ValueError("cell side must be positive")
        self.cell_side = float(cell_side)
        self.shape = tuple(
            max(1, math.ceil(L / self.cell_side - 1e-12)) for L in domain.lengths
        )
        self.cells = {}  # cell index tuple -> list of particle ids
        self._where = {}  # particle id -> (cell index, position)

    def __len__(self):
        return len(self._where)

    def cell_index(self, point):
        return tuple(
            min(int(x / self.cell_side), n - 1) for x, n in zip(point, self.shape)
        )

    def insert(self, pid, point):
        if pid in self._where:
            raise GridConsistencyError(f"id {pid} already present")
        idx = self.cell_index(point)
        self.cells.setdefault(idx, []).append(pid)
        self._where[pid] = (idx, tuple(point))

    def remove(self, pid):
        try:
            idx, _ = self._where.pop(pid)
        except KeyError:
            raise GridConsistencyError(f"id {pid} not present") from None
        cell = self.cells[idx]
        cell.remove(pid)
        if not cell:
            del self.cells[idx]

    def position(self, pid):
        return self._where[pid][1]

    def neighbor_cells(self, point):
        """Indices of the <= 3^d in-domain cells around the cell of `point`."""
        center = self.cell_index(point)
        out = [()]
        for c, n in zip(center, self.shape):
            out = [
                idx + (c + off,)
                for idx in out
                for off in (-1, 0, 1)
                if 0 <= c + off < n
            ]
        return out

    def neighbor_ids(self, point):
        """Ids of all particles in the cells adjacent to (or equal to) point's cell."""
        ids = []
        for idx in self.neighbor_cells(point):
            bucket = self.cells.get(idx)
            if bucket:
                ids.extend(bucket)
        return ids

    @classmethod
    def from_configuration(cls, config, domain, potential):
        grid = cls(domain, potential.interaction_range)
        for pid, pos in config:
            grid.insert(pid, pos)
        return grid


def delta_energy(grid, x, potential):
    """Energy cost of inserting a point at x: sum of phi(x, y) over occupants.

    Scans only the neighbor cells of x; for hard spheres returns inf exactly
    when some occupant is strictly closer than 2r.
    """
    rng2 = potential.interaction_range**2
    if isinstance(potential, HardSphere):
        for pid in grid.neighbor_ids(x):
            if _sqdist(grid.position(pid), x) < rng2:
                return math.inf
        return 0.0
    hits = 0
    for pid in grid.neighbor_ids(x):
        if _sqdist(grid.position(pid), x) < rng2:
            hits += 1
    return potential.strength * hits


def delta_energy_brute(positions, x, potential):
    """Reference O(n) pairwise evaluation of the same insertion cost."""
    rng2 = potential.interaction_range**2
    if isinstance(potential, HardSphere):
        for p in positions:
            if _sqdist(p, x) < rng2:
                return math.inf
        return 0.0
    hits = sum(1 for p in positions if _sqdist(p, x) < rng2)
    return potential.strength * hits


def birth_acceptance(delta_h):
    """Acceptance probability exp(-delta_h) for a proposed birth.

    Maps 0 to exactly 1 and inf to exactly 0; negative or NaN input means the
    potential is not repulsive and is rejected.
    """
    if math.isnan(delta_h) or delta_h < 0.0:
        raise ValueError(f"invalid energy delta {delta_h}: potential must be repulsive")
    return math.exp(-delta_h)


def uniform_point(domain, rng):
    """A point with independent Uniform[0, L_i) coordinates."""
    return tuple(rng.random() * L for L in domain.lengths)
