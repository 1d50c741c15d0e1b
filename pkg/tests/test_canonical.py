import math
import warnings

import numpy as np
import pytest

from gibbsglauber.canonical import (
    CanonicalParams,
    InfeasibleSizeError,
    canonical_sample,
    estimate_mean_count,
    find_heuristic_scale,
    packing_feasible,
    sample_conditioned,
    sweep_count,
)
from gibbsglauber.core import Domain, HardSphere, SoftCore


def _cparams(**kw):
    base = dict(
        k=1,
        domain=Domain((1.0,)),
        potential=HardSphere(0.15),
        activity=1.0,
        delta=0.1,
        gamma=0.5,
        seed=42,
    )
    base.update(kw)
    return CanonicalParams(**base)


def test_sweep_count_values():
    assert sweep_count(1.0, 0.5, 0.1) == 6539
    assert sweep_count(1.0, 1.0, math.exp(-1.0)) == 1421
    with pytest.raises(ValueError):
        sweep_count(0.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        sweep_count(1.0, 0.5, 1.5)
    # strictly decreasing in gamma at fixed others
    ms = [sweep_count(2.0, g, 0.1) for g in (0.1, 0.2, 0.4, 0.8)]
    assert ms == sorted(ms, reverse=True)
    assert len(set(ms)) == len(ms)


def test_packing_feasibility():
    dom = Domain((1.0,))
    pot = HardSphere(0.15)
    assert packing_feasible(4, dom, pot)  # 3 gaps of 0.3 fit into 1.0
    assert not packing_feasible(5, dom, pot)  # needs span 1.2
    assert packing_feasible(1000, dom, SoftCore(1.0, 0.3))
    assert packing_feasible(3, Domain((1.0, 1.0)), HardSphere(0.2))
    assert not packing_feasible(10_000, Domain((1.0, 1.0)), HardSphere(0.2))


def test_infeasible_k_raises_before_sampling():
    with pytest.raises(InfeasibleSizeError):
        canonical_sample(_cparams(k=5))


def test_certified_k0_returns_empty_at_index_zero():
    res = canonical_sample(_cparams(k=0), mode="certified", pilot=0)
    assert res.succeeded
    assert len(res.configuration) == 0
    assert res.sweep_index == 0
    assert res.m == 6539


def test_certified_k1():
    res = canonical_sample(_cparams(k=1, delta=0.5, gamma=1.0), mode="certified", pilot=0)
    assert res.succeeded
    assert len(res.configuration) == 1
    assert res.sweep_index >= 1
    assert res.activity_scale == pytest.approx(res.sweep_index / res.m)


def test_certified_k2_output_is_valid():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = canonical_sample(_cparams(k=2, delta=0.5, gamma=1.0), mode="certified")
    assert res.succeeded
    config = res.configuration
    assert len(config) == 2
    assert config.min_pair_distance() >= 0.3
    assert config.is_valid(Domain((1.0,)), HardSphere(0.15))


def test_estimate_mean_count():
    mean, se = estimate_mean_count(0.0, Domain((1.0,)), HardSphere(0.15), 10, seed=0)
    assert (mean, se) == (0.0, 0.0)
    mean, se = estimate_mean_count(1.0, Domain((1.0,)), HardSphere(0.15), 4000, seed=9)
    assert abs(mean - 0.674751) <= 4 * se
    # cited lower bound: lam |domain| / (1 + lam C_phi) with C_phi = 0.6
    assert mean >= 1.0 / 1.6 - 3 * se


def test_pilot_warns_when_k_unreachable():
    with pytest.warns(UserWarning, match="exceeds the estimated mean"):
        canonical_sample(_cparams(k=3, delta=0.5, gamma=1.0, seed=8), mode="heuristic", pilot=100)


def test_heuristic_scale_bisection():
    # at activity 5 the mean count exceeds 1, so the scale must shrink
    p = _cparams(k=1, activity=5.0)
    scale = find_heuristic_scale(p, n_pilot=200, iterations=8)
    assert 0.0 < scale < 1.0
    mean, se = estimate_mean_count(
        scale * 5.0, Domain((1.0,)), HardSphere(0.15), 2000, seed=77
    )
    assert abs(mean - 1.0) < 0.25


def test_heuristic_scale_saturates_at_one():
    p = _cparams(k=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert find_heuristic_scale(p, n_pilot=100, iterations=4) == 1.0


def test_sample_conditioned():
    p = _cparams(k=2)
    accepted, drawn = sample_conditioned(p, 1.0, 50, max_draws=5000)
    assert len(accepted) == 50
    assert drawn <= 5000
    for config in accepted:
        assert len(config) == 2
        assert config.min_pair_distance() >= 0.3


def test_heuristic_mode_end_to_end():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = canonical_sample(_cparams(k=2), mode="heuristic")
    assert res.succeeded
    assert len(res.configuration) == 2
    assert res.mode == "heuristic"


def test_unknown_mode():
    with pytest.raises(ValueError):
        canonical_sample(_cparams(), mode="magic")
