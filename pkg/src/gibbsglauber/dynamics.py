"""Continuum birth-death simulator with event traces and horizon planning.

The chain: at total rate |eta| + lam*|domain| an event fires; with probability
|eta|/(|eta| + lam*|domain|) a uniformly chosen particle dies, otherwise a
birth at a uniform location is attempted and accepted with probability
exp(-delta_H). The returned state is the configuration just before the first
event past the horizon.

Randomness: each chain owns a Philox generator keyed by
``SeedSequence(seed, spawn_key=(chain_index,))`` and consumes uniforms from
fixed-size blocks; a fresh block is started whenever fewer than 3 + d values
remain at the beginning of an event. Exponential increments use the inverse
CDF on (0, 1]. Every draw is a deterministic function of (seed, chain_index),
so replicas are reproducible under any execution order.
"""

from __future__ import annotations

import math
import time
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Configuration,
    Domain,
    HardSphere,
    SpatialGrid,
    delta_energy,
    birth_acceptance,
)

__all__ = [
    "GlauberParams",
    "ChainState",
    "Event",
    "EventTrace",
    "RunResult",
    "chain_generator",
    "make_state",
    "step",
    "run",
    "run_many",
    "plan_time",
    "default_gamma",
    "low_activity_gap",
    "throughput",
]

_BLOCK = 4096

Event = namedtuple("Event", "time kind pid pos")


@dataclass
class EventTrace:
    """Time-ordered birth/death/rejected-birth record of one chain."""

    events: list
    initial_count: int
    horizon: float

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def counts_on_grid(self, dt):
        """Cardinality |eta_t| sampled at t = 0, dt, 2*dt, ... up to the horizon."""
        n_steps = int(math.floor(self.horizon / dt)) + 1
        out = np.empty(n_steps, dtype=np.int64)
        n = self.initial_count
        i = 0
        for ev in self.events:
            while i < n_steps and i * dt < ev.time:
                out[i] = n
                i += 1
            if ev.kind == "birth":
                n += 1
            elif ev.kind == "death":
                n -= 1
        out[i:] = n
        return out


@dataclass(frozen=True)
class GlauberParams:
    """Inputs of one chain: box, potential, activity, horizon, start, seed.

    ``pinned`` points are immortal: they block space and contribute to energy
    deltas but never die and are not counted in the death rate. A run with
    pinned points targets the pinned measure (activity multiplied by the
    Boltzmann factor of the pins) with the pins added to every output.
    """

    domain: Domain
    potential: object
    activity: float
    horizon: float
    initial: Configuration = field(default_factory=Configuration)
    seed: int = 0
    pinned: Configuration = field(default_factory=Configuration)

    def __post_init__(self):
        if self.activity < 0.0:
            raise ValueError("activity must be nonnegative")
        if self.horizon < 0.0:
            raise ValueError("horizon must be nonnegative")
        if set(self.initial.ids) & set(self.pinned.ids):
            raise ValueError("initial and pinned ids must be disjoint")
        merged = Configuration(
            self.pinned.ids + self.initial.ids,
            self.pinned.positions + self.initial.positions,
        )
        if not merged.is_valid(self.domain, self.potential):
            raise ValueError("initial/pinned configuration has infinite energy or escapes the domain")

    def total_activity(self):
        return self.activity * self.domain.volume


@dataclass
class RunResult:
    configuration: Configuration
    trace: EventTrace | None
    n_events: int
    n_attempted_births: int
    clock: float
    chain_index: int = 0


def chain_generator(seed, chain_index):
    """Philox substream for one chain; the spawn key is the chain index."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chain_index,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ChainState:
    """Mutable chain state: clock, particles, grid, and the uniform block."""

    clock: float
    domain: Domain
    ids: list
    positions: dict
    grid: SpatialGrid
    gen: np.random.Generator
    buf: np.ndarray
    bpos: int
    next_id: int
    pinned_ids: frozenset
    n_events: int = 0
    n_attempted_births: int = 0

    def free_count(self):
        return len(self.ids)

    def configuration(self):
        pinned = sorted(self.pinned_ids)
        free = sorted(self.ids)
        order = pinned + free
        return Configuration(order, [self.positions[i] for i in order])

    def _ensure(self, k):
        if len(self.buf) - self.bpos < k:
            self.buf = self.gen.random(_BLOCK)
            self.bpos = 0

    def _take(self):
        u = self.buf[self.bpos]
        self.bpos += 1
        return float(u)


def make_state(params, chain_index=0):
    grid = SpatialGrid(params.domain, params.potential.interaction_range)
    positions = {}
    for pid, pos in params.pinned:
        grid.insert(pid, pos)
        positions[pid] = pos
    ids = []
    for pid, pos in params.initial:
        grid.insert(pid, pos)
        positions[pid] = pos
        ids.append(pid)
    taken = set(params.initial.ids) | set(params.pinned.ids)
    next_id = max((i for i in taken if i >= 0), default=-1) + 1
    gen = chain_generator(params.seed, chain_index)
    return ChainState(
        clock=0.0,
        domain=params.domain,
        ids=ids,
        positions=positions,
        grid=grid,
        gen=gen,
        buf=gen.random(_BLOCK),
        bpos=0,
        next_id=next_id,
        pinned_ids=frozenset(params.pinned.ids),
    )


def step(state, activity, potential, horizon):
    """Advance the chain by one event; reference implementation.

    Returns an Event whose kind is one of birth/death/reject, or "horizon"
    when the next event would land past the horizon (clock jumps there), or
    "absorbed" when the total rate is zero.
    """
    n = len(state.ids)
    lam_total = activity * state.domain.volume
    rate = n + lam_total
    if rate == 0.0:
        state.clock = horizon
        return Event(horizon, "absorbed", None, None)
    state._ensure(3 + state.domain.dimension)
    h = -math.log1p(-state._take()) / rate
    if state.clock + h > horizon:
        state.clock = horizon
        return Event(horizon, "horizon", None, None)
    state.clock += h
    if state._take() * rate <= n:
        j = int(state._take() * n)
        pid = state.ids[j]
        last = state.ids.pop()
        if j < len(state.ids):
            state.ids[j] = last
        state.grid.remove(pid)
        del state.positions[pid]
        state.n_events += 1
        return Event(state.clock, "death", pid, None)
    pos = tuple(state._take() * L for L in state.domain.lengths)
    state.n_attempted_births += 1
    state.n_events += 1
    p = birth_acceptance(delta_energy(state.grid, pos, potential))
    if p < 1.0:
        if p == 0.0 or state._take() >= p:
            return Event(state.clock, "reject", None, pos)
    pid = state.next_id
    state.next_id += 1
    state.ids.append(pid)
    state.positions[pid] = pos
    state.grid.insert(pid, pos)
    return Event(state.clock, "birth", pid, pos)


def _simulate(params, collect_trace, chain_index):
    """Optimized chain loop; draw-for-draw identical to repeated step()."""
    domain, potential = params.domain, params.potential
    lengths = domain.lengths
    d = len(lengths)
    lam_total = params.activity * domain.volume
    horizon = params.horizon
    gen = chain_generator(params.seed, chain_index)
    buf = gen.random(_BLOCK)
    bp = 0
    need = 3 + d

    cs = float(potential.interaction_range)
    shape = SpatialGrid(domain, cs).shape
    is_hard = isinstance(potential, HardSphere)
    range2 = cs * cs
    strength = 0.0 if is_hard else potential.strength

    cells = {}
    positions = {}

    def _key(pos):
        return tuple(
            min(int(x / cs), m - 1) for x, m in zip(pos, shape)
        )

    for pid, pos in params.pinned:
        positions[pid] = pos
        cells.setdefault(_key(pos), []).append(pid)
    ids = []
    for pid, pos in params.initial:
        positions[pid] = pos
        cells.setdefault(_key(pos), []).append(pid)
        ids.append(pid)
    taken = set(params.initial.ids) | set(params.pinned.ids)
    next_id = max((i for i in taken if i >= 0), default=-1) + 1

    t = 0.0
    events = [] if collect_trace else None
    n_events = 0
    n_attempted = 0
    log1p = math.log1p
    exp = math.exp
    nblock = len(buf)

    if d == 1:
        L0 = lengths[0]
        m0 = shape[0]
        while True:
            n = len(ids)
            rate = n + lam_total
            if rate == 0.0:
                t = horizon
                break
            if nblock - bp < need:
                buf = gen.random(_BLOCK)
                bp = 0
            h = -log1p(-buf[bp]) / rate
            bp += 1
            if t + h > horizon:
                t = horizon
                break
            t += h
            u = buf[bp]
            bp += 1
            if u * rate <= n:
                j = int(buf[bp] * n)
                bp += 1
                pid = ids[j]
                last = ids.pop()
                if j < len(ids):
                    ids[j] = last
                x = positions.pop(pid)
                c = int(x[0] / cs)
                if c >= m0:
                    c = m0 - 1
                bucket = cells[(c,)]
                bucket.remove(pid)
                if not bucket:
                    del cells[(c,)]
                n_events += 1
                if events is not None:
                    events.append(Event(t, "death", pid, None))
                continue
            x0 = buf[bp] * L0
            bp += 1
            n_attempted += 1
            n_events += 1
            c = int(x0 / cs)
            if c >= m0:
                c = m0 - 1
            lo = c - 1 if c > 0 else 0
            hi = c + 1 if c + 1 < m0 else m0 - 1
            if is_hard:
                ok = True
                for cc in range(lo, hi + 1):
                    bucket = cells.get((cc,))
                    if bucket:
                        for pid in bucket:
                            dx = positions[pid][0] - x0
                            if dx * dx < range2:
                                ok = False
                                break
                        if not ok:
                            break
            else:
                hits = 0
                for cc in range(lo, hi + 1):
                    bucket = cells.get((cc,))
                    if bucket:
                        for pid in bucket:
                            dx = positions[pid][0] - x0
                            if dx * dx < range2:
                                hits += 1
                dh = strength * hits
                if dh == 0.0:
                    ok = True
                else:
                    p = exp(-dh)
                    ok = buf[bp] < p
                    bp += 1
            if ok:
                pid = next_id
                next_id += 1
                ids.append(pid)
                pos = (x0,)
                positions[pid] = pos
                cells.setdefault((c,), []).append(pid)
                if events is not None:
                    events.append(Event(t, "birth", pid, pos))
            elif events is not None:
                events.append(Event(t, "reject", None, (x0,)))
    else:
        from itertools import product as _product

        while True:
            n = len(ids)
            rate = n + lam_total
            if rate == 0.0:
                t = horizon
                break
            if nblock - bp < need:
                buf = gen.random(_BLOCK)
                bp = 0
            h = -log1p(-buf[bp]) / rate
            bp += 1
            if t + h > horizon:
                t = horizon
                break
            t += h
            u = buf[bp]
            bp += 1
            if u * rate <= n:
                j = int(buf[bp] * n)
                bp += 1
                pid = ids[j]
                last = ids.pop()
                if j < len(ids):
                    ids[j] = last
                pos = positions.pop(pid)
                key = _key(pos)
                bucket = cells[key]
                bucket.remove(pid)
                if not bucket:
                    del cells[key]
                n_events += 1
                if events is not None:
                    events.append(Event(t, "death", pid, None))
                continue
            pos = tuple(buf[bp + i] * lengths[i] for i in range(d))
            bp += d
            n_attempted += 1
            n_events += 1
            center = _key(pos)
            ranges = [
                range(c - 1 if c > 0 else 0, (c + 2 if c + 2 <= m else m))
                for c, m in zip(center, shape)
            ]
            dh = 0.0
            for key in _product(*ranges):
                bucket = cells.get(key)
                if bucket:
                    for pid in bucket:
                        q = positions[pid]
                        s = 0.0
                        for i in range(d):
                            diff = q[i] - pos[i]
                            s += diff * diff
                        if s < range2:
                            if is_hard:
                                dh = math.inf
                                break
                            dh += strength
                    if dh == math.inf:
                        break
            if dh == 0.0:
                ok = True
            elif dh == math.inf:
                ok = False
            else:
                p = exp(-dh)
                ok = buf[bp] < p
                bp += 1
            if ok:
                pid = next_id
                next_id += 1
                ids.append(pid)
                positions[pid] = pos
                cells.setdefault(center, []).append(pid)
                if events is not None:
                    events.append(Event(t, "birth", pid, pos))
            elif events is not None:
                events.append(Event(t, "reject", None, pos))

    pinned = sorted(params.pinned.ids)
    free = sorted(ids)
    order = pinned + free
    config = Configuration(order, [positions[i] for i in order])
    trace = (
        EventTrace(events, len(params.initial), horizon)
        if collect_trace
        else None
    )
    return RunResult(config, trace, n_events, n_attempted, t, chain_index)


def run(params, collect_trace=False, chain_index=0):
    """Simulate one chain up to the horizon and return its final configuration."""
    return _simulate(params, collect_trace, chain_index)


def _run_chunk(args):
    params, lo, hi, collect_trace = args
    return [_simulate(params, collect_trace, i) for i in range(lo, hi)]


def run_many(params, n_chains, workers=1, collect_trace=False):
    """Independent replicas; chain i uses the substream keyed by (seed, i).

    The result list is ordered by chain index and identical for any worker
    count.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    workers = max(1, int(workers))
    if workers == 1 or n_chains < 4:
        return [_simulate(params, collect_trace, i) for i in range(n_chains)]
    chunk = max(1, math.ceil(n_chains / (4 * workers)))
    tasks = [
        (params, lo, min(lo + chunk, n_chains), collect_trace)
        for lo in range(0, n_chains, chunk)
    ]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for block in pool.map(_run_chunk, tasks):
            out.extend(block)
    return out


def plan_time(epsilon, initial_count, gamma, lam_total):
    """Horizon sufficient for epsilon TV accuracy given a spectral-gap bound.

    Empty start: (lam_total/2 + ln(1/eps)) / gamma. A nonempty start of size
    s adds the burn-in allowance ln(2 s / eps).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if initial_count < 0:
        raise ValueError("initial_count must be nonnegative")
    if lam_total < 0.0:
        raise ValueError("lam_total must be nonnegative")
    t = (lam_total / 2.0 + math.log(1.0 / epsilon)) / gamma
    if initial_count >= 1:
        t += math.log(2.0 * initial_count / epsilon)
    return t


GammaBound = namedtuple("GammaBound", "gamma log_gamma")


def default_gamma(d, delta):
    """Worst-case spectral-gap bound (1/2) exp(-2 (1 + e 2^(d+1) d! / delta^d)).

    Valid for hard spheres with activity up to exp(-delta) * e / C_phi. The
    value is astronomically small even in 1D (log_gamma ~ -220 at delta=0.1),
    which is why callers normally supply their own gamma; it is returned in
    log space alongside the (usually underflowed) plain value.
    """
    if d < 1 or int(d) != d:
        raise ValueError("dimension must be a positive integer")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    log_gamma = math.log(0.5) - 2.0 * (
        1.0 + math.e * 2.0 ** (d + 1) * math.factorial(d) / delta**d
    )
    return GammaBound(math.exp(log_gamma), log_gamma)


def low_activity_gap(activity, potential, d):
    """Gap bound delta = 1 - activity * C_phi, clipped at zero when vacuous."""
    return max(0.0, 1.0 - activity * potential.temperedness_constant(d))


def throughput(params, min_events=200_000, max_chains=10_000):
    """Events per second of the simulator at the given parameters.

    Runs fresh chains (chain_index 0, 1, ...) until at least min_events
    realized events, timing only the simulation calls.
    """
    total_events = 0
    elapsed = 0.0
    index = 0
    while total_events < min_events and index < max_chains:
        t0 = time.perf_counter()
        res = _simulate(params, False, index)
        elapsed += time.perf_counter() - t0
        total_events += res.n_events
        index += 1
    return {
        "events": total_events,
        "seconds": elapsed,
        "events_per_second": total_events / elapsed if elapsed > 0 else math.inf,
        "chains": index,
    }
