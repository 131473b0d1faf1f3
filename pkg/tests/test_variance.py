import math

import numpy as np
import pytest

from ivstrat import (
    ObservedSample,
    ZeroCompliance,
    arm_moments,
    se_bloom_ps,
    se_bloom_unstrat,
    se_delta_ps,
    se_delta_unstrat,
    se_pwiv,
    var_itt_neyman,
    variance_components,
)
from ivstrat.data_model import (
    AllStrataDropped,
    DegenerateVariance,
    TooFewUnits,
    UnknownStratum,
    stratum_moments,
    summarize_stratum,
)
from helpers import random_sample, sample_a, sample_pwiv, sample_two_strata


def test_arm_moments_hand_values():
    m = arm_moments(sample_a())
    assert (m["n1"], m["n0"]) == (2, 2)
    assert (m["ybar1"], m["ybar0"]) == (2.0, 1.0)
    assert (m["dbar1"], m["dbar0"]) == (0.5, 0.0)
    assert (m["s2_y1"], m["s2_y0"]) == (2.0, 2.0)
    assert (m["s2_d1"], m["s2_d0"]) == (0.5, 0.0)
    assert (m["s_yd1"], m["s_yd0"]) == (1.0, 0.0)


def test_variance_components_hand_values():
    c = variance_components(sample_a())
    assert c.var_itt_hat == 2.0
    assert c.var_f_hat == 0.25
    assert c.cov_itt_f_hat == 0.5


def test_variance_components_cauchy_schwarz():
    for seed in range(25):
        s = random_sample(np.random.default_rng(seed), require_nonzero_f=False)
        c = variance_components(s)
        bound = math.sqrt(c.var_itt_hat * c.var_f_hat)
        assert abs(c.cov_itt_f_hat) <= bound + 1e-12


def test_var_itt_neyman_matches_components():
    s = sample_a()
    assert var_itt_neyman(s) == variance_components(s).var_itt_hat
    summary = summarize_stratum(sample_two_strata(), "x")
    assert var_itt_neyman(summary) == 2.0


def test_var_itt_neyman_requires_two_per_arm():
    s = ObservedSample.from_arrays(z=[1, 0, 0, 0], d=[0] * 4, y=[1.0, 2.0, 3.0, 4.0])
    with pytest.raises(TooFewUnits):
        var_itt_neyman(s)


def test_bloom_se_hand_value():
    assert se_bloom_unstrat(sample_a()) == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-15)


def test_delta_se_hand_value():
    # bracket = 2 + 4*0.25 - 2*2*0.5 = 1, se = sqrt(1)/0.5
    assert se_delta_unstrat(sample_a()) == pytest.approx(2.0, rel=1e-15)


def test_bloom_se_rejects_zero_compliance():
    s = ObservedSample.from_arrays(z=[1, 1, 0, 0], d=[0] * 4, y=[3.0, 1.0, 2.0, 0.0])
    with pytest.raises(ZeroCompliance):
        se_bloom_unstrat(s)


def test_delta_equals_bloom_when_uptake_follows_assignment():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 60)) * 2
        z = np.zeros(n, dtype=int)
        z[rng.permutation(n)[: n // 2]] = 1
        y = rng.normal(0, 1, n)
        s = ObservedSample.from_arrays(z=z, d=z.copy(), y=y)
        assert se_delta_unstrat(s) == se_bloom_unstrat(s)  # bitwise


def test_ps_se_collapse_single_stratum():
    for seed in range(20):
        s = random_sample(np.random.default_rng(seed), g_range=(1, 1))
        assert se_bloom_ps(s) == se_bloom_unstrat(s)  # bitwise
        assert se_delta_ps(s) == se_delta_unstrat(s)  # bitwise


def test_ps_bloom_kept_subset_matches_subsample():
    s = sample_two_strata()
    sub = ObservedSample.from_arrays(
        z=[1, 1, 0, 0], d=[1, 0, 0, 0], y=[3.0, 1.0, 2.0, 0.0]
    )
    assert se_bloom_ps(s, kept_strata=["x"]) == se_bloom_unstrat(sub)


def test_ps_bloom_hand_value_two_strata():
    # equal stratum shares, f_ps = 1: sqrt(0.25*2 + 0.25*4)
    assert se_bloom_ps(sample_pwiv()) == pytest.approx(math.sqrt(1.5), rel=1e-15)


def test_ps_delta_matches_direct_formula():
    for seed in range(10):
        s = random_sample(np.random.default_rng(seed + 100), require_nonzero_f=False)
        m = stratum_moments(s)
        w = m.n_g / s.n
        var_itt = m.s2_y1 / m.n_g1 + m.s2_y0 / m.n_g0
        var_f = m.s2_d1 / m.n_g1 + m.s2_d0 / m.n_g0
        cov = m.s_yd1 / m.n_g1 + m.s_yd0 / m.n_g0
        f_ps = float(np.sum(w * m.f_hat))
        if f_ps == 0.0:
            continue
        c = float(np.sum(w * m.itt_hat)) / f_ps
        var = float(np.sum(w * w * (var_itt + c * c * var_f - 2.0 * c * cov)))
        expect = math.sqrt(max(var, 0.0)) / abs(f_ps)
        assert se_delta_ps(s) == pytest.approx(expect, rel=1e-12)


def test_ps_se_unknown_and_empty_kept():
    s = sample_two_strata()
    with pytest.raises(UnknownStratum):
        se_bloom_ps(s, kept_strata=["zzz"])
    with pytest.raises(AllStrataDropped):
        se_bloom_ps(s, kept_strata=[])


def test_pwiv_se_hand_value():
    assert se_pwiv(sample_pwiv()) == pytest.approx(math.sqrt(1.0 / 0.75), rel=1e-15)


def test_pwiv_se_degenerate_variance():
    # nonzero f_hat with zero outcome variance in both arms
    s = ObservedSample.from_arrays(
        z=[1, 1, 0, 0], d=[1, 1, 0, 0], y=[1.0, 1.0, 0.0, 0.0]
    )
    with pytest.raises(DegenerateVariance):
        se_pwiv(s)


def test_delta_se_nonnegative_and_finite():
    for seed in range(25):
        s = random_sample(np.random.default_rng(seed + 500))
        for fn in (se_delta_unstrat, se_delta_ps, se_bloom_unstrat, se_bloom_ps):
            v = fn(s)
            assert math.isfinite(v) and v >= 0.0
