import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.integrate import quad

from gibbsglauber.core import Domain, HardSphere, SoftCore
from gibbsglauber.oracle import (
    IntervalActivity,
    TonksModel,
    TruncationError,
    mc_partition,
    one_point_density,
    restricted_partition,
    tonks_card_pmf,
    tonks_mean_count,
    tonks_partition,
    tonks_pmf_vector,
    tonks_sample,
)


def test_partition_values():
    assert tonks_partition(TonksModel(1.0, 0.3, 0.0)) == 1.0
    z = tonks_partition(TonksModel(1.0, 0.3, 1.0))
    assert z == pytest.approx(2.2556708333333333, rel=1e-14)
    # only k <= 1 contributes when sigma >= L
    assert tonks_partition(TonksModel(0.2, 0.3, 1.0)) == pytest.approx(1.2, rel=1e-14)


def test_pmf_values_match_quoted_targets(tonks_pmf):
    # closed-form values; the coarser literals are the ones quoted elsewhere
    assert tonks_pmf[0] == pytest.approx(0.443326, abs=2e-6)
    assert tonks_pmf[1] == pytest.approx(0.443326, abs=2e-6)
    assert tonks_pmf[2] == pytest.approx(0.108615, abs=2e-6)
    assert tonks_pmf[3] == pytest.approx(0.004729, abs=2e-6)
    assert tonks_mean_count(TonksModel(1.0, 0.3, 1.0)) == pytest.approx(
        0.674752, abs=2e-6
    )


def test_pmf_edge_cases():
    assert tonks_card_pmf(TonksModel(1.0, 0.3, 0.0), 0) == 1.0
    # geometric impossibility: (k-1) sigma >= L (dyadic values, exact in binary)
    assert tonks_card_pmf(TonksModel(1.0, 0.3, 1.0), 5) == 0.0
    assert tonks_card_pmf(TonksModel(0.75, 0.25, 2.0), 4) == 0.0
    with pytest.raises(ValueError):
        tonks_card_pmf(TonksModel(1.0, 0.3, 1.0), -1)


@given(
    st.floats(0.1, 5.0),
    st.floats(0.05, 2.0),
    st.floats(0.0, 4.0),
)
def test_pmf_normalization_and_z_bounds(L, sigma, lam):
    model = TonksModel(L, sigma, lam)
    pmf = tonks_pmf_vector(model)
    assert abs(pmf.sum() - 1.0) <= 1e-12
    z = tonks_partition(model)
    assert 1.0 <= z <= math.exp(lam * L) * (1.0 + 1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.1, 2.0))
def test_partition_monotone_in_activity_and_length(L, lam):
    sigma = 0.3
    z = tonks_partition(TonksModel(L, sigma, lam))
    assert tonks_partition(TonksModel(L, sigma, lam * 1.5)) >= z
    assert tonks_partition(TonksModel(L * 1.5, sigma, lam)) >= z


def test_one_point_density_values(tonks_model):
    assert one_point_density(tonks_model, 0.5) == pytest.approx(0.638391, abs=1e-6)
    assert one_point_density(tonks_model, 0.1) == pytest.approx(0.729273, abs=1e-6)
    assert one_point_density(TonksModel(1.0, 0.3, 0.0), 0.4) == 0.0
    with pytest.raises(ValueError):
        one_point_density(tonks_model, 1.2)


def test_intensity_integral_equals_mean(tonks_model):
    m = tonks_model
    pts = sorted(
        {
            min(max(p, 0.0), m.length)
            for k in range(m.max_count() + 1)
            for p in (k * m.sigma, m.length - k * m.sigma)
        }
    )
    integral, err = quad(
        lambda x: one_point_density(m, x), 0.0, m.length, points=pts, limit=200
    )
    assert integral == pytest.approx(tonks_mean_count(m), abs=1e-8)


def test_tonks_sample_distribution(tonks_model):
    rng = np.random.default_rng(11)
    pmf = tonks_pmf_vector(tonks_model)
    counts = np.zeros(len(pmf), dtype=int)
    for _ in range(20_000):
        pts = tonks_sample(tonks_model, rng)
        counts[len(pts)] += 1
        if len(pts) > 1:
            gaps = np.diff(pts)
            assert (gaps >= tonks_model.sigma).all()
        assert all(0.0 <= p <= tonks_model.length for p in pts)
    stat, p = stats.chisquare(counts[:4], pmf[:4] / pmf[:4].sum() * counts[:4].sum())
    assert p > 1e-3


def test_restricted_partition_single_interval(tonks_model):
    act = IntervalActivity(((0.0, 1.0, 1.0),), 0.3)
    z = tonks_partition(tonks_model)
    assert restricted_partition(act, method="factorized") == pytest.approx(z, rel=1e-14)
    assert restricted_partition(act, method="quadrature") == pytest.approx(z, rel=1e-10)


def test_restricted_partition_factorizes_across_wide_gap():
    act = IntervalActivity(((0.0, 0.2, 1.0), (0.8, 1.0, 1.0)), 0.3)
    assert restricted_partition(act) == pytest.approx(1.44, rel=1e-12)
    assert restricted_partition(act, method="quadrature") == pytest.approx(
        1.44, rel=1e-10
    )


@given(st.floats(0.31, 1.5), st.floats(0.05, 0.6), st.floats(0.2, 3.0))
def test_restricted_partition_paths_agree(gap, len2, lam):
    """Factorized and integration paths agree whenever both apply."""
    sigma = 0.3
    act = IntervalActivity(
        ((0.0, 0.4, lam), (0.4 + gap, 0.4 + gap + len2, 0.5 * lam)), sigma
    )
    a = restricted_partition(act, method="factorized")
    b = restricted_partition(act, method="quadrature")
    assert b == pytest.approx(a, rel=1e-8)


def test_restricted_partition_narrow_gap_vs_mc():
    """Gap below sigma: intervals interact; compare with direct MC integration."""
    sigma = 0.3
    lam = 1.0
    act = IntervalActivity(((0.0, 0.3, lam), (0.45, 0.8, lam)), sigma)
    with pytest.raises(ValueError):
        restricted_partition(act, method="factorized")
    z = restricted_partition(act, method="quadrature")

    rng = np.random.default_rng(7)
    hull = 0.8
    n_mc = 200_000
    total = 1.0
    var = 0.0

    def in_support(x):
        return 0.0 <= x <= 0.3 or 0.45 <= x <= 0.8

    for k in (1, 2, 3):
        pts = rng.random((n_mc, k)) * hull
        w = np.ones(n_mc)
        for s in range(n_mc):
            xs = np.sort(pts[s])
            if any(not in_support(x) for x in xs):
                w[s] = 0.0
            elif k > 1 and (np.diff(xs) < sigma).any():
                w[s] = 0.0
        coef = (lam * hull) ** k / math.factorial(k)
        total += coef * w.mean()
        var += coef**2 * w.var() / n_mc
    assert abs(z - total) <= 3.0 * math.sqrt(var)


def test_restricted_partition_truncation_guard():
    act = IntervalActivity(((0.0, 1.0, 5.0),), 0.05)
    with pytest.raises(TruncationError):
        restricted_partition(act, kmax=2)


def test_mc_partition_poisson_case():
    z, se = mc_partition(Domain((1.0,)), SoftCore(0.0, 0.3), 1.0, kmax=15, n_mc=4000, seed=1)
    assert se < 0.05
    assert z == pytest.approx(math.e, abs=4 * se + 1e-9)


def test_mc_partition_matches_tonks(tonks_model):
    z_exact = tonks_partition(tonks_model)
    z, se = mc_partition(
        Domain((1.0,)), HardSphere(0.15), 1.0, kmax=4, n_mc=40_000, seed=5
    )
    assert abs(z - z_exact) <= 3.0 * se


def test_mc_partition_2d_seed_consistency():
    # kmax hits the 2D packing bound, so the truncation is exact
    dom = Domain((1.0, 1.0))
    pot = HardSphere(0.2)
    z1, s1 = mc_partition(dom, pot, 1.0, kmax=15, n_mc=20_000, seed=1)
    z2, s2 = mc_partition(dom, pot, 1.0, kmax=15, n_mc=20_000, seed=2)
    assert abs(z1 - z2) <= 3.0 * math.hypot(s1, s2)
    with pytest.raises(TruncationError):
        mc_partition(dom, pot, 1.0, kmax=1, n_mc=100, seed=0)


def test_interval_activity_validation():
    with pytest.raises(ValueError):
        IntervalActivity(((0.5, 0.4, 1.0),), 0.3)
    with pytest.raises(ValueError):
        IntervalActivity(((0.0, 0.5, 1.0), (0.4, 0.9, 1.0)), 0.3)
    with pytest.raises(ValueError):
        IntervalActivity(((0.0, 0.5, -1.0),), 0.3)
