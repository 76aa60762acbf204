import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_payoffs.distributions import Empirical, Exponential, Lognormal, TwoPoint, Uniform01
from robust_payoffs.errors import DivergenceError, DomainError
from robust_payoffs.markets import MarketQ, esscher_family
from robust_payoffs.orders import (
    OrderFamily,
    check_fsd,
    check_order,
    check_ssd,
    check_tsd,
    single_crossing_from_above,
)


def test_family_parse_and_inclusion():
    assert OrderFamily.parse("ssd") is OrderFamily.SSD
    with pytest.raises(DomainError):
        OrderFamily.parse("4SD")
    assert OrderFamily.FSD.includes(OrderFamily.SSD)
    assert OrderFamily.FSD.includes(OrderFamily.TSD)
    assert not OrderFamily.SSD.includes(OrderFamily.FSD)
    assert OrderFamily.FSD.contains_power(2.5)
    assert OrderFamily.SSD.contains_power(1.0) and not OrderFamily.SSD.contains_power(1.5)


def test_fsd_reflexive():
    d = Lognormal(0.1, 0.3)
    v = check_fsd(d, d)
    assert v.holds and v.margin == 0.0


def test_fsd_lognormal_drift_order():
    m = MarketQ(1.0, 0.0, 1.0, 0.1)
    assert check_fsd(m.stock_law(0.01), m.stock_law(0.05)).holds
    assert check_fsd(m.stock_law(0.05), m.stock_law(0.01)).fails


def test_fsd_twopoint_vs_uniform_fails_with_witness():
    v = check_fsd(TwoPoint(1 / 3), Uniform01())
    assert v.fails
    assert 1 / 3 < v.witness < 1


def test_fsd_inconclusive_near_tolerance():
    a = Lognormal(0.0, 0.2)
    b = Lognormal(-1e-11, 0.2)
    assert check_fsd(a, b).status == "inconclusive"


def test_ssd_examples():
    d = Exponential(1.0)
    assert check_ssd(d, d).holds
    m = MarketQ(1.0, 0.0, 1.0, 0.1)
    assert check_ssd(m.stock_law(0.01, 0.1), m.stock_law(0.05, 0.05)).holds
    # mean-preserving spread: the two-point law is riskier than the uniform
    assert check_ssd(TwoPoint(0.5), Uniform01()).holds
    assert check_ssd(Uniform01(), TwoPoint(0.5)).fails


def test_ssd_infinite_mean():
    class Heavy(Exponential):
        def mean(self):
            return math.inf

    with pytest.raises(DivergenceError):
        check_ssd(Heavy(1.0), Exponential(1.0))


def test_tsd_reflexive():
    assert check_tsd(Uniform01(), Uniform01()).holds


def test_tsd_counterexample_shape():
    # on [0, 1] the double integrals are eta^3/6 and p0 eta^2/2
    v = check_tsd(Uniform01(), TwoPoint(1 / 3))
    assert v.detail["on_support"] == "holds"
    # the mean of G exceeds that of F, so the affine tail eventually turns negative
    assert v.fails and v.witness > 1
    assert v.detail["mean_slack"] == pytest.approx(0.5 - 2 / 3)
    small = check_tsd(Uniform01(), TwoPoint(0.2))
    assert small.detail["on_support"] == "fails"


def test_tsd_trapezoid_route_agrees_with_closed_form():
    f, g = Uniform01(), TwoPoint(0.4)
    closed = check_tsd(f, g)
    trap = check_tsd(f, g, grid_size=256, method="trapezoid")
    assert closed.status == trap.status
    assert trap.detail["on_support_margin"] == pytest.approx(closed.detail["on_support_margin"], abs=1e-5)


def test_tsd_holds_for_lognormal_drift():
    # F below G in FSD implies G below F in the TSD orientation
    f, g = Lognormal(0.1, 0.2), Lognormal(0.0, 0.2)
    assert check_tsd(f, g).holds


def _fsd_oracle(a, b):
    pts = np.union1d(a, b)
    fa = np.searchsorted(np.sort(a), pts, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), pts, side="right") / len(b)
    return bool(np.all(fb <= fa))


samples = st.lists(st.integers(0, 20).map(float), min_size=1, max_size=32)


@given(samples, samples)
def test_fsd_matches_exhaustive_cdf_comparison(a, b):
    v = check_fsd(Empirical.from_unsorted(a), Empirical.from_unsorted(b))
    assert v.holds == _fsd_oracle(a, b)
    assert v.status != "inconclusive"


@given(st.lists(st.integers(0, 20), min_size=1, max_size=16).flatmap(
    lambda a: st.tuples(st.just(a), st.permutations(a).flatmap(
        lambda p: st.lists(st.integers(-3, 3), min_size=len(a), max_size=len(a)).map(
            lambda d: _equal_mean_shift(p, d))))))
def test_ssd_matches_convex_order_oracle(pair):
    a, b = pair
    fa, fb = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    oracle = bool(np.all(np.cumsum(fa) <= np.cumsum(fb) + 1e-12))
    v = check_ssd(Empirical(fa), Empirical(fb))
    assert v.holds == oracle


def _equal_mean_shift(values, deltas):
    # zero-sum perturbation that keeps values nonnegative and the mean fixed
    x = np.asarray(values, dtype=float)
    d = np.asarray(deltas, dtype=float)
    d = d - d.mean()
    out = x + d
    if np.any(out < 0):
        out = x
    return list(out)


@pytest.mark.parametrize("pair", [
    (Lognormal(0.0, 0.2), Lognormal(0.05, 0.2)),
    (Exponential(2.0), Exponential(1.0)),
    (Uniform01(), Lognormal(0.3, 0.1)),
    (Empirical([0.0, 1.0, 2.0]), Empirical([0.5, 1.0, 2.5])),
])
def test_verdict_hierarchy(pair):
    lo, hi = pair
    fsd = check_order(OrderFamily.FSD, lo, hi)
    ssd = check_order(OrderFamily.SSD, lo, hi)
    tsd = check_order(OrderFamily.TSD, lo, hi)
    assert fsd.holds
    assert ssd.holds
    assert tsd.holds


@given(st.floats(-0.5, 0.5), st.floats(0.01, 0.5), st.floats(0.05, 1.0))
def test_fsd_implies_ssd_implies_tsd_lognormal(m, dm, v):
    lo, hi = Lognormal(m, v), Lognormal(m + dm, v)
    assert check_order("FSD", lo, hi).holds
    assert check_order("SSD", lo, hi).holds
    assert check_order("TSD", lo, hi).holds


def test_grid_size_validation():
    with pytest.raises(DomainError):
        check_fsd(Uniform01(), Uniform01(), grid_size=8)


def test_single_crossing_examples():
    x = np.geomspace(0.05, 20, 2001)
    d = Lognormal(0.0, 0.4)
    assert not single_crossing_from_above(d.pdf, d.pdf, x)
    assert single_crossing_from_above(Lognormal(0.0, 0.4).pdf, Lognormal(0.2, 0.4).pdf, x)
    assert not single_crossing_from_above(Lognormal(0.2, 0.4).pdf, Lognormal(0.0, 0.4).pdf, x)
    fam = esscher_family("normal", MarketQ(1.0, 0.0, 1.0, 0.3))
    assert single_crossing_from_above(fam.stock_density(0.5), fam.stock_density(1.5), x)
