import math
from itertools import combinations

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_payoffs.errors import BracketError, ConvergenceError, DomainError
from robust_payoffs.numerics import (
    PiecewiseLinearFn,
    QuadratureSpec,
    concave_envelope,
    find_root,
    integrate,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)


def test_cdf_symmetry_and_limits():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(np.inf) == 1.0
    assert std_normal_cdf(-40.0) == 0.0


def test_cdf_matches_erf_series():
    # Maclaurin series of erf evaluated in 40-digit arithmetic
    mpmath.mp.dps = 40
    x = mpmath.mpf(1) / mpmath.sqrt(2)
    series = sum((-1) ** n * x ** (2 * n + 1) / (mpmath.factorial(n) * (2 * n + 1)) for n in range(60))
    expected = float(0.5 + series / mpmath.sqrt(mpmath.pi))
    assert abs(std_normal_cdf(1.0) - expected) <= 1e-14


def test_quantile_median_and_symmetry():
    assert std_normal_quantile(0.5) == 0.0
    for p in (2.0**-30, 2.0**-7, 0.375):  # 1 - p exact
        assert abs(std_normal_quantile(p) + std_normal_quantile(1 - p)) <= 1e-12


def test_quantile_against_bisection():
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if std_normal_cdf(mid) < 0.975:
            lo = mid
        else:
            hi = mid
    assert abs(std_normal_quantile(0.975) - 0.5 * (lo + hi)) <= 1e-12


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        std_normal_quantile(p)


@given(st.floats(1e-10, 1 - 1e-10))
def test_cdf_quantile_round_trip(p):
    assert abs(std_normal_cdf(std_normal_quantile(p)) - p) <= 1e-12


@given(st.floats(-8, 8), st.floats(0, 3))
def test_cdf_monotone(x, dx):
    assert std_normal_cdf(x + dx) >= std_normal_cdf(x)


def test_integrate_trivial():
    assert integrate(lambda x: np.ones_like(x), 0.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert integrate(lambda x: x, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_integrate_normal_density():
    assert abs(integrate(std_normal_pdf, -8.0, 8.0) - 1.0) <= 1e-10


def test_integrate_scalar_callable():
    assert integrate(lambda x: math.exp(x), 0.0, 1.0) == pytest.approx(math.e - 1, rel=1e-10)


def test_integrate_endpoint_singularity_against_mpmath():
    # integrable log singularity at 0
    got = integrate(lambda p: -np.log(p), 1e-12, 1.0)
    mpmath.mp.dps = 30
    ref = float(mpmath.quad(lambda p: -mpmath.log(p), [mpmath.mpf("1e-12"), 1e-6, 1]))
    assert abs(got - ref) <= 1e-9 * ref


def test_integrate_convergence_failure_carries_estimate():
    spec = QuadratureSpec(rel_tol=1e-14, max_depth=3)
    with pytest.raises(ConvergenceError) as info:
        integrate(lambda x: np.sin(1 / x), 1e-3, 1.0, spec)
    assert math.isfinite(info.value.estimate)


def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(rel_tol=0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(tail_cut=0.01)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_linear(alpha, beta):
    f = np.exp
    g = np.cos
    a, b = 0.0, 2.0
    lhs = integrate(lambda x: alpha * f(x) + beta * g(x), a, b)
    rhs = alpha * integrate(f, a, b) + beta * integrate(g, a, b)
    assert abs(lhs - rhs) <= 1e-9 * (abs(alpha) * 7 + abs(beta) + 1)


def test_find_root_examples():
    assert find_root(lambda x: x - 2, 0, 10) == pytest.approx(2.0, abs=1e-12)
    assert find_root(lambda x: x * x - 2, 0, 2, tol=1e-13) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert find_root(lambda x: x * x - 2, 0, 2, method="bisect") == pytest.approx(math.sqrt(2), abs=1e-11)


def test_find_root_requires_bracket():
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1, -1, 1)


def test_piecewise_linear_fn():
    fn = PiecewiseLinearFn([0.0, 1.0, 3.0], [0.0, 2.0, 0.0])
    assert fn(0.5) == pytest.approx(1.0)
    assert fn(2.0) == pytest.approx(1.0)
    np.testing.assert_allclose(fn.slopes(), [2.0, -1.0])
    with pytest.raises(DomainError):
        fn(3.5)
    with pytest.raises(DomainError):
        PiecewiseLinearFn([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        PiecewiseLinearFn([0.0], [1.0])


def test_envelope_of_concave_is_identity():
    x = np.linspace(0, 1, 101)
    fn = PiecewiseLinearFn(x, np.sqrt(x))
    np.testing.assert_array_equal(concave_envelope(fn).values, fn.values)


def test_envelope_of_convex_is_chord():
    x = np.linspace(0, 1, 4097)
    h = np.expm1(3 * x) / math.expm1(3) - 1.0  # convex, H(0) = -1, H(1) = 0
    env = concave_envelope(PiecewiseLinearFn(x, h))
    np.testing.assert_allclose(env.values, x - 1.0, atol=1e-14)


def _chord_oracle(x, y):
    # max over chords bracketing each knot
    out = y.copy()
    for i, j in combinations(range(x.size), 2):
        t = (x[i:j + 1] - x[i]) / (x[j] - x[i])
        out[i:j + 1] = np.maximum(out[i:j + 1], (1 - t) * y[i] + t * y[j])
    return out


def test_envelope_w_shape_against_chord_oracle():
    x = np.linspace(-2, 2, 41)
    y = -np.abs(np.abs(x) - 1.0) + 0.1 * x
    env = concave_envelope(PiecewiseLinearFn(x, y))
    np.testing.assert_allclose(env.values, _chord_oracle(x, y), atol=1e-13)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=60))
def test_envelope_concave_and_dominating(vals):
    y = np.asarray(vals)
    x = np.arange(y.size, dtype=float)
    env = concave_envelope(PiecewiseLinearFn(x, y))
    assert np.all(env.values >= y - 1e-12)
    assert np.all(np.diff(env.values, 2) <= 1e-12)
