import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from sgld_nfl.models import GaussianPosterior as G
from sgld_nfl.tvmetrics import (
    TVResult,
    gaussian_crossings,
    tv_empirical_two_sample,
    tv_empirical_vs_gaussian,
    tv_gaussian_exact,
    tv_gaussian_numeric,
    tv_moment_lower_bound,
)


def crossing_oracle(m1, s1, m2, s2):
    """Independent TV via CDF differences over the regions split by density crossings."""
    xs = np.linspace(min(m1 - 12 * s1, m2 - 12 * s2), max(m1 + 12 * s1, m2 + 12 * s2), 2_000_001)
    diff = norm.pdf(xs, m1, s1) - norm.pdf(xs, m2, s2)
    sign_change = np.nonzero(np.diff(np.sign(diff)))[0]
    pts = [-np.inf] + [xs[i] for i in sign_change] + [np.inf]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += abs((norm.cdf(hi, m1, s1) - norm.cdf(lo, m1, s1)) - (norm.cdf(hi, m2, s2) - norm.cdf(lo, m2, s2)))
    return 0.5 * total


def test_reference_value():
    v = tv_gaussian_exact(G(0, 1), G(1, 1)).value
    assert v == pytest.approx(2 * norm.cdf(0.5) - 1, abs=1e-12)
    assert v == pytest.approx(0.38292, abs=1e-5)


def test_identical_is_zero():
    assert tv_gaussian_exact(G(0.3, 2.0), G(0.3, 2.0)).value == 0.0


def test_small_gap_slope():
    for h in (1e-3, 1e-4, 1e-5):
        ratio = tv_gaussian_exact(G(0, 1), G(h, 1)).value / h
        assert ratio == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-3)


def test_large_gap_saturates():
    assert tv_gaussian_exact(G(0, 1), G(10, 1)).value > 1 - 1e-6


@pytest.mark.parametrize(
    "a,b",
    [((0, 1), (0, 4)), ((0, 1), (1, 2)), ((-1, 0.5), (2, 3)), ((0, 1), (0.1, 1.01))],
)
def test_unequal_variance_against_crossing_oracle(a, b):
    got = tv_gaussian_exact(G(*a), G(*b)).value
    ref = crossing_oracle(a[0], math.sqrt(a[1]), b[0], math.sqrt(b[1]))
    assert got == pytest.approx(ref, abs=1e-6)


def test_closed_form_agrees_with_quadrature():
    for dm in (0.0, 1e-3, 0.5, 1.0, 3.0, 7.0):
        closed = tv_gaussian_exact(G(0, 0.5), G(dm, 0.5)).value
        numeric = tv_gaussian_exact(G(0, 0.5), G(dm, 0.5), numeric=True).value
        assert closed == pytest.approx(numeric, abs=1e-9)


def test_crossings_equal_density():
    for x in gaussian_crossings(0.0, 1.0, 1.0, 2.0):
        assert norm.pdf(x, 0, 1) == pytest.approx(norm.pdf(x, 1, 2), rel=1e-10)
    assert gaussian_crossings(0, 1, 0, 1) == []


gauss = st.tuples(st.floats(-5, 5), st.floats(0.05, 5))


@settings(max_examples=60, deadline=None)
@given(a=gauss, b=gauss, c=gauss)
def test_metric_axioms(a, b, c):
    pa, pb, pc = G(*a), G(*b), G(*c)
    ab = tv_gaussian_exact(pa, pb).value
    assert ab == pytest.approx(tv_gaussian_exact(pb, pa).value, abs=1e-9)
    assert 0 <= ab <= 1
    ac = tv_gaussian_exact(pa, pc).value
    bc = tv_gaussian_exact(pb, pc).value
    assert ac <= ab + bc + 1e-8


def test_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        tv_gaussian_exact(G(0, 0), G(1, 1))


def test_tvresult_range():
    with pytest.raises(ValueError):
        TVResult(1.5, "exact-gaussian")


def test_moment_bound_examples():
    assert tv_moment_lower_bound(0, 1, 0, 1).value == 0.0
    assert tv_moment_lower_bound(0, 1, 2, 1).value == pytest.approx(0.5)


def test_moment_bound_below_exact():
    rng = np.random.default_rng(4)
    for _ in range(20):
        m1, m2 = rng.normal(0, 2, 2)
        v1, v2 = rng.uniform(0.1, 3, 2)
        exact = tv_gaussian_exact(G(m1, v1), G(m2, v2)).value
        lb = tv_moment_lower_bound(m1, math.sqrt(v1), m2, math.sqrt(v2)).value
        assert lb <= exact + 1e-12


# --- histogram estimators ----------------------------------------------------


def test_self_distance_small(rng):
    r = tv_empirical_vs_gaussian(rng.normal(size=100_000), G(0, 1), 50)
    assert r.value <= 0.02
    assert r.bin_count == 50 and r.mc_error > 0


def test_far_shift_saturates(rng):
    assert tv_empirical_vs_gaussian(rng.normal(5, 1, 100_000), G(0, 1)).value >= 0.98


def test_histogram_close_to_exact_shift(rng):
    x = rng.normal(1, 1, 200_000)
    r = tv_empirical_vs_gaussian(x, G(0, 1), 100)
    assert r.value == pytest.approx(0.38292, abs=0.02)


def test_doubling_samples_is_stable(rng):
    a = tv_empirical_vs_gaussian(rng.normal(0.3, 1, 100_000), G(0, 1)).value
    b = tv_empirical_vs_gaussian(rng.normal(0.3, 1, 200_000), G(0, 1)).value
    assert abs(a - b) <= 0.02


def test_scott_rule(rng):
    r = tv_empirical_vs_gaussian(rng.normal(size=10_000), G(0, 1), "scott")
    assert r.bin_count > 1


def test_too_few_samples():
    with pytest.raises(ValueError):
        tv_empirical_vs_gaussian(np.zeros(10), G(0, 1))
    with pytest.raises(ValueError):
        tv_empirical_two_sample(np.zeros(10), np.zeros(500))


def test_two_sample_extremes(rng):
    x = rng.normal(size=1000)
    assert tv_empirical_two_sample(x, x).value == 0.0
    assert tv_empirical_two_sample(x, x + 100).value == pytest.approx(1.0)
    assert tv_empirical_two_sample(np.ones(200), np.ones(300)).value == 0.0


def test_two_sample_null_is_calibrated(rng):
    # permutation oracle: under exchangeability the observed value is typical
    a, b = rng.normal(size=5000), rng.normal(size=5000)
    obs = tv_empirical_two_sample(a, b, 20).value
    pooled = np.concatenate([a, b])
    perm = []
    for _ in range(200):
        rng.shuffle(pooled)
        perm.append(tv_empirical_two_sample(pooled[:5000], pooled[5000:], 20).value)
    assert np.mean(np.array(perm) >= obs) > 0.005


def test_numeric_helper_direct():
    assert tv_gaussian_numeric(G(0, 1), G(1, 1)) == pytest.approx(0.382924922548, abs=1e-9)
