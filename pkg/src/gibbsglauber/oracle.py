"""Exact and brute-force reference computations for hard rods and small instances.

The 1D closed forms (partition sum, cardinality pmf, one-point density, exact
configuration sampler) are the ground truth the samplers are validated
against. ``restricted_partition`` extends the partition sum to piecewise
constant activity fields on unions of intervals; ``mc_partition`` is a plain
Monte Carlo estimate of the defining integral for any box/potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Domain, uniform_point, unit_ball_volume

__all__ = [
    "TonksModel",
    "IntervalActivity",
    "tonks_partition",
    "tonks_card_pmf",
    "tonks_pmf_vector",
    "tonks_mean_count",
    "one_point_density",
    "tonks_sample",
    "restricted_partition",
    "mc_partition",
    "TruncationError",
]


class TruncationError(ValueError):
    """kmax too small: the neglected tail is not provably below tolerance."""


@dataclass(frozen=True)
class TonksModel:
    """Hard rods of diameter sigma on an interval of the given length."""

    length: float
    sigma: float
    activity: float

    def __post_init__(self):
        if not self.length > 0.0:
            raise ValueError("length must be positive")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if self.activity < 0.0:
            raise ValueError("activity must be nonnegative")

    def max_count(self):
        """Upper bound on the cardinality: weights vanish for (k-1)*sigma >= length."""
        return int(math.floor(self.length / self.sigma)) + 1


def _tonks_terms(L, sigma, lam, kmax):
    """Weights lam^k (L-(k-1)sigma)_+^k / k! for k = 0..kmax."""
    terms = [1.0]
    for k in range(1, kmax + 1):
        free = L - (k - 1) * sigma
        if free <= 0.0:
            terms.append(0.0)
        else:
            terms.append(lam**k * free**k / math.factorial(k))
    return terms


def tonks_partition(model):
    """Closed-form grand partition sum; always >= 1."""
    terms = _tonks_terms(model.length, model.sigma, model.activity, model.max_count())
    return math.fsum(sorted(terms, reverse=True))


def tonks_pmf_vector(model):
    """Cardinality pmf as an array over k = 0..max_count."""
    terms = _tonks_terms(model.length, model.sigma, model.activity, model.max_count())
    z = math.fsum(sorted(terms, reverse=True))
    return np.asarray(terms) / z


def tonks_card_pmf(model, k):
    """Probability that the gas holds exactly k rods."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    pmf = tonks_pmf_vector(model)
    return float(pmf[k]) if k < len(pmf) else 0.0


def tonks_mean_count(model):
    pmf = tonks_pmf_vector(model)
    return float(np.arange(len(pmf)) @ pmf)


def _partition_len(length, sigma, lam):
    """tonks_partition for a possibly degenerate (<= 0) segment length."""
    if length <= 0.0:
        return 1.0
    return tonks_partition(TonksModel(length, sigma, lam))


def one_point_density(model, x):
    """Density of finding a rod center at x.

    Pinning a rod at x excludes centers in (x - sigma, x + sigma); the two
    remaining segments are too far apart to interact, so the adjusted
    partition sum factorizes into left and right closed forms.
    """
    L, sigma, lam = model.length, model.sigma, model.activity
    if not 0.0 <= x <= L:
        raise ValueError(f"x={x} outside [0, {L}]")
    z_left = _partition_len(x - sigma, sigma, lam)
    z_right = _partition_len(L - x - sigma, sigma, lam)
    return lam * z_left * z_right / tonks_partition(model)


def tonks_sample(model, rng):
    """Exact draw of rod centers: cardinality from the pmf, then uniform spacings.

    Given k, sorted centers are y_(i) + (i-1)*sigma with y_1..y_k i.i.d.
    uniform on [0, L-(k-1)*sigma]; this is exactly the conditional law.
    """
    pmf = tonks_pmf_vector(model)
    k = int(np.searchsorted(np.cumsum(pmf), rng.random(), side="right"))
    k = min(k, len(pmf) - 1)
    if k == 0:
        return ()
    free = model.length - (k - 1) * model.sigma
    y = np.sort(rng.random(k) * free)
    return tuple(float(y[i] + i * model.sigma) for i in range(k))


@dataclass(frozen=True)
class IntervalActivity:
    """Piecewise constant activity on sorted disjoint closed intervals.

    intervals: sequence of (start, end, activity) with start < end,
    nonoverlapping and in increasing order; activity is zero elsewhere.
    """

    intervals: tuple[tuple[float, float, float], ...]
    sigma: float

    def __post_init__(self):
        ivs = tuple((float(a), float(b), float(l)) for a, b, l in self.intervals)
        for a, b, lam in ivs:
            if not a < b:
                raise ValueError(f"empty interval ({a}, {b})")
            if lam < 0.0:
                raise ValueError("activity must be nonnegative")
        for (_, b0, _), (a1, _, _) in zip(ivs, ivs[1:]):
            if a1 < b0:
                raise ValueError("intervals must be sorted and disjoint")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "intervals", ivs)

    def total_mass(self):
        return math.fsum(lam * (b - a) for a, b, lam in self.intervals)

    def min_gap(self):
        gaps = [a1 - b0 for (_, b0, _), (a1, _, _) in zip(self.intervals, self.intervals[1:])]
        return min(gaps) if gaps else math.inf

    def packing_bound(self):
        if not self.intervals:
            return 0
        span = self.intervals[-1][1] - self.intervals[0][0]
        return int(math.floor(span / self.sigma)) + 1


def _poisson_tail(rate, kmax):
    """sum_{k > kmax} rate^k / k!, the crude bound on neglected weight."""
    term = rate ** (kmax + 1) / math.factorial(kmax + 1)
    total, k = 0.0, kmax + 1
    while term > 1e-300 and k < kmax + 500:
        total += term
        k += 1
        term *= rate / k
    return total


class _Piecewise:
    """Polynomial pieces on consecutive [breaks[i], breaks[i+1]] segments.

    Constant-extended by pieces[0] below breaks[0] and zero above breaks[-1].
    """

    __slots__ = ("breaks", "pieces")

    def __init__(self, breaks, pieces):
        self.breaks = breaks
        self.pieces = pieces

    def __call__(self, x):
        if x >= self.breaks[-1]:
            return 0.0 if x > self.breaks[-1] else self.pieces[-1](x)
        i = np.searchsorted(self.breaks, x, side="right") - 1
        return self.pieces[max(i, 0)](x)


def _quadrature_partition(act, kmax):
    """Z by exact right-to-left integration over ordered rod centers.

    Level j tabulates S_j(a) = integral over x >= a of lam(x) * S_{j-1}(x+sigma),
    the weight of j rods all at positions >= a. The activity is piecewise
    constant and each level is integrated segment by segment in closed form,
    so the result is exact up to rounding.
    """
    from numpy.polynomial import Polynomial

    sigma = act.sigma
    ivs = act.intervals
    x_min, x_max = ivs[0][0], ivs[-1][1]

    def lam_at(x):
        for a, b, lam in ivs:
            if a <= x <= b:
                return lam
        return 0.0

    base = {a for a, _, _ in ivs} | {b for _, b, _ in ivs}
    shifted = {
        p + j * sigma for p in base for j in range(-(kmax + 1), kmax + 2)
    }
    breaks = sorted(p for p in shifted if x_min <= p <= x_max)
    if breaks[0] > x_min:
        breaks.insert(0, x_min)
    if breaks[-1] < x_max:
        breaks.append(x_max)

    prev = _Piecewise([x_min, x_max], [Polynomial([1.0]), Polynomial([1.0])])
    z_terms = [1.0]
    shift = Polynomial([sigma, 1.0])
    for level in range(1, kmax + 1):
        # past the support, S_0 is the empty product 1; deeper levels vanish
        beyond = Polynomial([1.0]) if level == 1 else Polynomial([0.0])
        pieces = [None] * (len(breaks) - 1)
        acc = 0.0  # S_j(breaks[i+1]), built from the right
        for i in range(len(breaks) - 2, -1, -1):
            u, v = breaks[i], breaks[i + 1]
            lam = lam_at(0.5 * (u + v))
            if lam == 0.0:
                pieces[i] = Polynomial([acc])
                continue
            mid = 0.5 * (u + v) + sigma
            if mid > x_max:
                inner = beyond
            else:
                k = np.searchsorted(prev.breaks, mid, side="right") - 1
                inner = prev.pieces[max(k, 0)]
            anti = (lam * inner(shift)).integ()
            # S_j(a) = acc + integral_a^v, decreasing in a
            pieces[i] = Polynomial([acc + anti(v)]) - anti
            acc = pieces[i](u)
        prev = _Piecewise(list(breaks), pieces)
        z_terms.append(acc)
    return math.fsum(sorted(z_terms, reverse=True)), z_terms


def restricted_partition(act, kmax=None, method="auto"):
    """Partition sum of hard rods under a piecewise constant activity field.

    When consecutive intervals are separated by at least sigma, rods in
    different intervals cannot interact and Z is the product of per-interval
    closed forms. Otherwise (or when forced) the ordered-coordinate
    integration of :func:`_quadrature_partition` is used.
    """
    if not act.intervals:
        return 1.0
    bound = act.packing_bound()
    if kmax is None:
        kmax = bound
    if kmax < bound:
        tail = _poisson_tail(act.total_mass(), kmax)
        if tail >= 1e-12:
            raise TruncationError(
                f"kmax={kmax} leaves a tail bound of {tail:.2e} (>= 1e-12)"
            )
    if method not in ("auto", "factorized", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    can_factorize = act.min_gap() >= act.sigma
    if method == "factorized" and not can_factorize:
        raise ValueError("factorized path needs inter-interval gaps >= sigma")
    if method == "quadrature" or (method == "auto" and not can_factorize):
        return _quadrature_partition(act, min(kmax, bound))[0]
    return math.prod(
        _partition_len(b - a, act.sigma, lam) for a, b, lam in act.intervals
    )


def _max_packing(domain, potential):
    """Hard upper bound on the particle count, or None for soft potentials."""
    from .core import HardSphere

    if not isinstance(potential, HardSphere):
        return None
    d = domain.dimension
    if d == 1:
        return int(math.floor(domain.lengths[0] / potential.interaction_range)) + 1
    inflated = math.prod(L + 2.0 * potential.radius for L in domain.lengths)
    return int(math.floor(inflated / (unit_ball_volume(d) * potential.radius**d)))


def mc_partition(domain, potential, activity, kmax, n_mc, seed):
    """Monte Carlo estimate of the partition sum, with standard error.

    Each k-particle term is (lam |Domain|)^k / k! times the average Boltzmann
    weight of k independent uniform points. Only suitable as a test oracle.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    from .core import HardSphere

    mass = activity * domain.volume
    bound = _max_packing(domain, potential)
    if bound is not None and kmax >= bound:
        kmax = bound  # terms beyond the packing bound are exactly zero
    else:
        tail = _poisson_tail(mass, kmax)
        if tail >= 1e-12:
            raise TruncationError(f"kmax={kmax} leaves a tail bound of {tail:.2e}")
    rng = np.random.default_rng(seed)
    lengths = np.asarray(domain.lengths)
    range2 = potential.interaction_range**2
    total, var = 1.0, 0.0
    for k in range(1, kmax + 1):
        pts = rng.random((n_mc, k, len(lengths))) * lengths
        if k == 1:
            w = np.ones(n_mc)
        else:
            diff = pts[:, :, None, :] - pts[:, None, :, :]
            sq = np.einsum("sijd,sijd->sij", diff, diff)
            iu = np.triu_indices(k, 1)
            close = sq[:, iu[0], iu[1]] < range2
            if isinstance(potential, HardSphere):
                w = np.where(close.any(axis=1), 0.0, 1.0)
            else:
                w = np.exp(-potential.strength * close.sum(axis=1))
        coef = mass**k / math.factorial(k)
        total += coef * float(np.mean(w))
        var += coef**2 * float(np.var(w)) / n_mc
    return total, math.sqrt(var)
