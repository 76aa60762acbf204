import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_payoffs.distributions import (
    Empirical,
    Exponential,
    ExpTransformed,
    LaplaceZ,
    Lognormal,
    LogisticZ,
    NormalZ,
    TwoPoint,
    Uniform01,
    compose_quantile_cdf,
    expectation,
    ks_distance,
)
from robust_payoffs.errors import DivergenceError, DomainError, PreconditionError
from robust_payoffs.numerics import integrate

mpmath.mp.dps = 30


def _mp_lognormal_pe(m, v, q):
    # integral of the lognormal quantile in high precision
    f = lambda p: mpmath.exp(m + v * mpmath.sqrt(2) * mpmath.erfinv(2 * p - 1))  # noqa: E731
    return float(mpmath.quad(f, [0, q / 2, q]))


def test_cdf_examples():
    assert Exponential(1.0).cdf(math.log(2)) == pytest.approx(0.5, abs=1e-16)
    assert TwoPoint(1 / 3).cdf(0.0) == pytest.approx(1 / 3)
    assert TwoPoint(1 / 3).cdf(1.0) == 1.0
    assert TwoPoint(1 / 3).cdf(-1e-300) == 0.0


def test_lognormal_cdf_against_density_quadrature():
    d = Lognormal(0.1, 0.4)
    for x in (0.5, 1.0, 2.5):
        got = integrate(d.pdf, 1e-12, x)
        assert abs(got - d.cdf(x)) <= 1e-9


def test_quantile_examples():
    assert Uniform01().quantile(0.3) == 0.3
    g = TwoPoint(1 / 3)
    assert g.quantile(1 / 3) == 0.0
    assert g.quantile(0.2) == 0.0
    assert g.quantile(0.34) == 1.0
    assert Exponential(1.0).quantile(1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("law", [Exponential(2.0), Lognormal(0, 1), Uniform01(), TwoPoint(0.3),
                                 Empirical([0.0, 1.0, 2.0])])
@pytest.mark.parametrize("p", [0.0, 1.0])
def test_quantile_domain_error(law, p):
    with pytest.raises(DomainError):
        law.quantile(p)


def test_partial_expectation_examples():
    assert Uniform01().partial_expectation(0.5) == pytest.approx(0.125, abs=1e-16)
    d = Lognormal(0.2, 0.5)
    assert d.partial_expectation(1.0) == pytest.approx(math.exp(0.2 + 0.125), rel=1e-15)
    got = Lognormal(0.0, 0.3).partial_expectation(0.25)
    ref = _mp_lognormal_pe(0, 0.3, 0.25)
    assert abs(got / ref - 1) <= 1e-8


def test_exponential_partial_expectation_against_mpmath():
    d = Exponential(1.7)
    for q in (0.1, 0.6, 0.999):
        ref = float(mpmath.quad(lambda p: -mpmath.log(1 - p) / mpmath.mpf(1.7), [0, q]))
        assert d.partial_expectation(q) == pytest.approx(ref, rel=1e-12)


def test_empirical_partial_expectation_is_exact():
    d = Empirical([0.0, 1.0, 1.0, 4.0])
    assert d.partial_expectation(0.5) == pytest.approx(0.25)
    assert d.partial_expectation(0.625) == pytest.approx(0.375)
    assert d.partial_expectation(1.0) == pytest.approx(1.5)


def test_empirical_quantile_is_left_continuous():
    d = Empirical([1.0, 2.0, 3.0, 4.0])
    assert d.quantile(0.25) == 1.0
    assert d.quantile(0.2500001) == 2.0
    assert d.cdf(2.0) == 0.5


def test_empirical_validation():
    with pytest.raises(DomainError):
        Empirical([2.0, 1.0])
    with pytest.raises(DomainError):
        Empirical([-1.0, 1.0])
    with pytest.raises(DivergenceError):
        Empirical([1.0, np.inf])


def test_parameter_validation():
    with pytest.raises(DomainError):
        Exponential(0.0)
    with pytest.raises(DomainError):
        Lognormal(0.0, 0.0)
    with pytest.raises(DomainError):
        TwoPoint(1.0)


LAWS = [Exponential(0.7), Lognormal(-0.3, 0.6), Uniform01(),
        ExpTransformed(0.05, 0.3, LaplaceZ()), ExpTransformed(-0.1, 0.25, LogisticZ(0.4))]


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_partial_expectation_at_one_equals_quadrature_mean(law):
    mean_q = expectation(law, lambda x: x)
    assert abs(law.partial_expectation(1.0) / mean_q - 1) <= 1e-8


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
def test_lower_partial_moments_against_quadrature(law):
    for eta in np.asarray(law.quantile([0.1, 0.5, 0.9])):
        for k in (1, 2):
            ref = expectation(law, lambda x: np.maximum(eta - x, 0.0) ** k)
            assert abs(float(law.lower_partial_moment(eta, k)) - ref) <= 1e-8 * max(ref, 1e-3)


def _mp_z_moment(d, k):
    # E[X^k] for X = exp(loc + scale Z) by mpmath on the real line, split at the kinks
    f = lambda z: mpmath.exp(k * (d.loc + d.scale * z)) * float(d.base.pdf(float(z)))  # noqa: E731
    return float(mpmath.quad(f, [-mpmath.inf, -10, 0, 10, mpmath.inf]))


@pytest.mark.parametrize("law", [ExpTransformed(0.05, 0.3, LaplaceZ()), ExpTransformed(-0.1, 0.25, LogisticZ(0.4))],
                         ids=lambda d: d.base.name)
def test_exp_transformed_moments_against_mpmath(law):
    assert law.mean() == pytest.approx(_mp_z_moment(law, 1), rel=1e-10)
    assert law.second_moment() == pytest.approx(_mp_z_moment(law, 2), rel=1e-10)


def test_closed_form_second_moments():
    assert Lognormal(0.2, 0.5).second_moment() == pytest.approx(math.exp(0.4 + 2 * 0.25), rel=1e-14)
    assert Exponential(2.0).second_moment() == pytest.approx(0.5, rel=1e-14)
    assert Uniform01().second_moment() == pytest.approx(1 / 3, rel=1e-14)
    assert TwoPoint(0.4).second_moment() == pytest.approx(0.6, rel=1e-14)
    assert Empirical([0.5, 1.0, 1.0, 3.0]).second_moment() == pytest.approx((0.25 + 1 + 1 + 9) / 4, rel=1e-14)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
@given(p=st.floats(1e-6, 1 - 1e-6))
def test_round_trip(law, p):
    x = law.quantile(p)
    assert abs(law.cdf(x) - p) <= 1e-10
    assert abs(law.quantile(law.cdf(x)) - x) <= 1e-9 * max(1.0, abs(x))


@pytest.mark.parametrize("law", LAWS, ids=lambda d: type(d).__name__)
@given(q1=st.floats(1e-6, 1.0), q2=st.floats(1e-6, 1.0))
def test_partial_expectation_monotone(law, q1, q2):
    lo, hi = sorted((q1, q2))
    assert law.partial_expectation(lo) <= law.partial_expectation(hi) + 1e-14


@given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.floats(-1, 101))
def test_empirical_quantile_cdf_galois(vals, x):
    # F^-1(p) <= x  iff  p <= F(x)
    d = Empirical.from_unsorted(vals)
    for p in (0.1, 0.5, 0.9):
        assert (d.quantile(p) <= x) == (p <= d.cdf(x) + 1e-12)


# Tilted real-line laws


@pytest.mark.parametrize("law", [NormalZ(), LaplaceZ(), LogisticZ()], ids=lambda z: z.name)
def test_standardized(law):
    pts = [-mpmath.inf, -5, 0, 5, mpmath.inf]
    moment = lambda k: float(mpmath.quad(lambda z: z**k * float(law.pdf(float(z))), pts))  # noqa: E731
    assert moment(0) == pytest.approx(1.0, abs=1e-13)
    assert abs(moment(1)) <= 1e-13
    assert moment(2) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("law", [NormalZ(), LaplaceZ(), LogisticZ()], ids=lambda z: z.name)
@pytest.mark.parametrize("t", [-0.7, 0.3, 1.1])
def test_tilt_is_exponential_reweighting(law, t):
    tilted = law.tilted(t)
    pts = [-mpmath.inf, -5, 0, 5, mpmath.inf]
    mgf = float(mpmath.quad(lambda z: mpmath.exp(t * z) * float(law.pdf(float(z))), pts))
    assert math.log(mgf) == pytest.approx(law.log_mgf(t), rel=1e-8, abs=1e-10)
    z = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(tilted.pdf(z), np.exp(t * z) * law.pdf(z) / mgf, rtol=1e-8)
    for p in (0.05, 0.5, 0.95):
        assert tilted.cdf(tilted.quantile(p)) == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("law", [LaplaceZ(), LogisticZ()], ids=lambda z: z.name)
def test_mgf_radius(law):
    with pytest.raises(DivergenceError):
        law.log_mgf(law.mgf_radius)
    with pytest.raises(DivergenceError):
        law.tilted(law.mgf_radius * 1.01)


def test_exp_transformed_partial_expectation_against_mpmath():
    d = ExpTransformed(0.0, 0.3, LaplaceZ(0.2))
    q = 0.4
    zq = float(d.base.quantile(q))
    a, b = d.base._rates
    left = d.base._left_mass()
    # piecewise exponential density of the tilted Laplace on each side of 0
    if zq <= 0:
        ref = mpmath.quad(lambda z: mpmath.exp(0.3 * z) * left * a * mpmath.exp(a * z), [-mpmath.inf, zq])
    else:
        ref = mpmath.quad(lambda z: mpmath.exp(0.3 * z) * left * a * mpmath.exp(a * z), [-mpmath.inf, 0])
        ref += mpmath.quad(lambda z: mpmath.exp(0.3 * z) * (1 - left) * b * mpmath.exp(-b * z), [0, zq])
    assert float(d.partial_expectation(q)) == pytest.approx(float(ref), rel=1e-10)


# Composition


def test_compose_identity():
    d = Lognormal(0.1, 0.3)
    m = compose_quantile_cdf(d, d)
    x = np.linspace(0.3, 3, 20)
    np.testing.assert_allclose(m(x), x, rtol=1e-13)


def test_compose_lognormal_power_map():
    theta, M, V = 0.5, 0.2, 0.3
    m = compose_quantile_cdf(Lognormal(M, V), Lognormal(theta**2 / 2, theta))
    x = np.linspace(0.2, 4, 30)
    np.testing.assert_allclose(m(x), x ** (V / theta) * math.exp(-theta * V / 2 + M), rtol=1e-12)
    grid = np.linspace(0.2, 4, 200)
    assert m.is_concave_on(grid)
    convex = compose_quantile_cdf(Lognormal(M, 2 * theta), Lognormal(theta**2 / 2, theta))
    assert not convex.is_concave_on(grid)


def test_compose_exponential_against_pointwise_formula():
    g = Lognormal(0.05, 0.2)
    m = compose_quantile_cdf(Exponential(1.0), g)
    x = np.linspace(0.6, 1.8, 25)
    expected = [-math.log1p(-float(g.cdf(xi))) for xi in x]
    np.testing.assert_allclose(m(x), expected, rtol=1e-12)
    assert compose_quantile_cdf(Lognormal(0, 1), Lognormal(0, 2)).is_concave_on(np.linspace(0.5, 2, 10))


def test_compose_linear_is_concave():
    m = compose_quantile_cdf(Uniform01(), Uniform01())
    assert m.is_concave_on(np.linspace(0.1, 0.9, 30))


def test_compose_requires_continuous_inner():
    with pytest.raises(PreconditionError):
        compose_quantile_cdf(Uniform01(), TwoPoint(0.5))


def test_pushforward_ks():
    rng = np.random.default_rng(12345)
    g = Lognormal(0.05, 0.2)
    for target in (Exponential(1.0), TwoPoint(1 / 3), Lognormal(0, 0.4)):
        x = g.sample(rng, 100_000)
        mapped = compose_quantile_cdf(target, g)(x)
        assert ks_distance(mapped, target) <= 0.01


def test_infinite_mean_diverges():
    with pytest.raises(DivergenceError):
        ExpTransformed(0.0, 1.5, LaplaceZ()).mean()
