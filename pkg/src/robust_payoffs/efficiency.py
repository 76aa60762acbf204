"""Cost-efficient and robust cost-efficient payoffs, pricing, and related checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .distributions import (
    DistributionSpec,
    Exponential,
    TwoPoint,
    Uniform01,
    compose_quantile_cdf,
)
from .errors import ConvergenceError, DivergenceError, DomainError, HypothesisViolated, PreconditionError
from .markets import (
    AmbiguitySet,
    Check,
    DriftHalfLine,
    DriftVolRectangle,
    LikelihoodRatio,
    MarketQ,
    PhysicalLognormal,
    black_scholes_call,
    least_favorable,
    likelihood_ratio_drift,
    likelihood_ratio_general,
)
from .numerics import DEFAULT_QUADRATURE, QuadratureSpec
from .orders import OrderFamily, check_tsd

__all__ = [
    "Payoff",
    "EfficiencyReport",
    "efficient_payoff",
    "robust_efficient_payoff",
    "price",
    "monte_carlo_price",
    "ambiguity_premium",
    "Figure1Result",
    "figure1_curves",
    "discrete_efficient_oracle",
    "discretize_market",
    "ReplicationPortfolio",
    "replicate_with_calls",
    "tsd_counterexample",
    "COUNTEREXAMPLE_MARKET",
]

DEFAULT_SEED = 20240601
MC_PATHS = 100_000
MC_CHUNKS = 10


@dataclass(frozen=True, eq=False)
class Payoff:
    """A nonnegative function of S_T.

    ``laws`` maps a measure tag to the law of the payoff under that measure
    (``"P*"`` for the least favorable one). ``ratio`` is the likelihood ratio
    in which the payoff is non-decreasing when ``monotone_in_likelihood``.
    """

    fn: Callable
    monotone_in_likelihood: bool
    laws: dict = field(default_factory=dict)
    price_cache: float | None = None
    ratio: LikelihoodRatio | None = None
    label: str = ""

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.fn(s), dtype=float)
        if out.shape != s.shape:
            out = np.broadcast_to(out, s.shape).astype(float)
        return float(out) if out.ndim == 0 else out

    def with_price(self, value: float) -> "Payoff":
        return replace(self, price_cache=float(value))


@dataclass(frozen=True)
class EfficiencyReport:
    checks: tuple
    price: float | None
    measure_used: str

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self):
        return {"measureUsed": self.measure_used, "price": self.price,
                "allPass": self.all_pass, "checks": [c.as_dict() for c in self.checks]}


def _finite_second_moment(F0: DistributionSpec) -> bool:
    try:
        return math.isfinite(F0.second_moment())
    except (ArithmeticError, NotImplementedError):
        return False


def _composed_payoff(F0: DistributionSpec, ell: LikelihoodRatio, tail_cut: float):
    if ell.law is None or not ell.law.continuous:
        raise PreconditionError("the likelihood ratio must be continuously distributed under its own measure")
    if ell.increasing and ell.stock_law is not None:
        # F_ell(ell(s)) = F_S(s) when ell is strictly increasing
        return compose_quantile_cdf(F0, ell.stock_law, tail_cut)
    inner = compose_quantile_cdf(F0, ell.law, tail_cut)
    return lambda s: inner(ell(s))


def efficient_payoff(F0: DistributionSpec, ell: LikelihoodRatio, market: MarketQ,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE, tag: str = "P") -> Payoff:
    """Cheapest payoff with law ``F0`` under the measure whose ratio to Q is ``ell``."""
    if not _finite_second_moment(F0):
        raise PreconditionError("target quantile function must be square integrable")
    fn = _composed_payoff(F0, ell, spec.tail_cut)
    return Payoff(fn, True, {tag: F0}, ratio=ell, label=f"efficient for {ell.label}")


def price(p: Payoff, market: MarketQ, spec: QuadratureSpec = DEFAULT_QUADRATURE, *,
          mc_check: bool = False, seed: int = DEFAULT_SEED) -> float:
    """``exp(-rT) E_Q[X]`` by quadrature against the Q-density of S_T.

    With ``mc_check`` a seeded Monte Carlo estimate must agree within three
    standard errors, otherwise :class:`ConvergenceError` is raised.
    """
    if p.price_cache is not None and not mc_check:
        return p.price_cache
    value = market.discount * market.stock_law_q.expect(p, spec)
    if not math.isfinite(value):
        raise DivergenceError("payoff price is not finite")
    if mc_check:
        est, se = monte_carlo_price(p, market, seed=seed)
        if abs(est - value) > 3 * se + 1e-15:
            raise ConvergenceError(
                f"quadrature price {value:.10g} and Monte Carlo {est:.10g} differ by more than 3 s.e. ({se:.3g})",
                estimate=value, error=abs(est - value),
            )
    return value


def monte_carlo_price(p: Payoff, market: MarketQ, n_paths: int = MC_PATHS, seed: int = DEFAULT_SEED,
                      chunks: int = MC_CHUNKS) -> tuple[float, float]:
    """Seeded Monte Carlo price and its standard error.

    Each chunk draws from its own stream spawned from ``seed``; sums are
    reduced in chunk order, so results are reproducible for fixed inputs.
    """
    law = market.stock_law_q
    streams = np.random.SeedSequence(seed).spawn(chunks)
    per = n_paths // chunks
    total, total_sq, n = 0.0, 0.0, 0
    for child in streams:
        rng = np.random.default_rng(child)
        s = np.exp(law.log_mean + law.log_std * rng.standard_normal(per))
        x = np.asarray(p(s), dtype=float)
        total += math.fsum(x)
        total_sq += math.fsum(x * x)
        n += per
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    d = market.discount
    return d * mean, d * math.sqrt(var / n)


def robust_efficient_payoff(F0: DistributionSpec, amb: AmbiguitySet, family, market: MarketQ,
                            spec: QuadratureSpec = DEFAULT_QUADRATURE, *, concavity_points: int = 513,
                            tol: float = 1e-9, **lf_kwargs) -> tuple[Payoff, EfficiencyReport]:
    """Cheapest payoff whose law dominates ``F0`` under every measure of ``amb``.

    Every hypothesis is a hard gate: a failing one raises
    :class:`HypothesisViolated` naming it.
    """
    family = OrderFamily.parse(family)
    checks: list[Check] = []

    sq = _finite_second_moment(F0)
    checks.append(Check("target-square-integrable", sq, None, "int (F0^-1)^2 < inf"))
    if family is OrderFamily.TSD:
        raise HypothesisViolated(
            "the TSD family is composition-consistent but not cost-consistent",
            condition="family composition- and cost-consistent",
        )
    checks.append(Check("family-consistent", True, family.value, "composition- and cost-consistent"))

    measure, ell, report = least_favorable(amb, family, market, tol=tol, spec=spec, **lf_kwargs)
    checks.extend(report.checks)
    failed = [c.name for c in checks if not c.passed and c.name != "target-square-integrable"]
    if failed:
        raise HypothesisViolated(f"hypotheses failed: {', '.join(failed)}", condition=failed[0])

    law = ell.law
    comp = compose_quantile_cdf(F0, law, spec.tail_cut)
    if family is OrderFamily.SSD:
        grid = np.asarray(law.quantile(np.linspace(1e-3, 1 - 1e-3, concavity_points)))
        concave = comp.is_concave_on(grid)
        checks.append(Check("composition-in-family", concave, None, "F0^-1 o F_ell* is concave"))
        if not concave:
            raise HypothesisViolated("F0^-1 o F_ell* is not concave, so it is not an SSD test function",
                                     condition="composition-in-family")
    else:
        checks.append(Check("composition-in-family", True, None, "non-decreasing by construction"))

    fn = _composed_payoff(F0, ell, spec.tail_cut)
    tag = _measure_tag(measure)
    payoff = Payoff(fn, True, {"P*": F0, tag: F0}, ratio=ell, label="robust cost-efficient")
    value = price(payoff, market, spec)
    if not sq:
        ok = math.isfinite(value)
        checks[0] = Check("target-square-integrable", ok, value, "finite price of the candidate used instead")
        if not ok:
            raise HypothesisViolated("target is not square integrable and the candidate price is infinite",
                                     condition="target-square-integrable")
    payoff = payoff.with_price(value)
    return payoff, EfficiencyReport(tuple(checks), value, tag)


def _measure_tag(measure) -> str:
    if isinstance(measure, PhysicalLognormal):
        return f"P(mu={measure.mu:g},sigma={measure.sigma:g})"
    return f"P(h={measure.h:g})"


def _inside(amb: AmbiguitySet, p: PhysicalLognormal, market: MarketQ) -> bool:
    if isinstance(amb, DriftHalfLine):
        return p.mu >= amb.mu1 and math.isclose(p.sigma, market.s, rel_tol=1e-12)
    if isinstance(amb, DriftVolRectangle):
        return amb.mu1 <= p.mu <= amb.mu2 and amb.sigma1 <= p.sigma <= amb.sigma_max
    return False


def ambiguity_premium(F0: DistributionSpec, amb: AmbiguitySet, family, p: PhysicalLognormal, market: MarketQ,
                      spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Extra cost of the robust payoff over the efficient payoff under ``p`` for the same target."""
    if not _inside(amb, p, market):
        raise DomainError("the physical measure must belong to the ambiguity set")
    robust, _ = robust_efficient_payoff(F0, amb, family, market, spec)
    ell = likelihood_ratio_general(p, market)
    single = efficient_payoff(F0, ell, market, spec)
    return price(robust, market, spec) - price(single, market, spec)


@dataclass(frozen=True)
class Figure1Result:
    mu1: np.ndarray
    prices: np.ndarray
    s_grid: np.ndarray
    curves: dict  # mu1 -> normalized payoff on s_grid
    limit_price: float

    def max_slope(self, mu1: float) -> float:
        y = self.curves[float(mu1)]
        return float(np.max(np.diff(y) / np.diff(self.s_grid)))


def figure1_curves(market: MarketQ | None = None, mu1_grid: Sequence[float] | None = None,
                   F0: DistributionSpec | None = None, s_grid: Sequence[float] | None = None,
                   spec: QuadratureSpec = DEFAULT_QUADRATURE, limit_offset: float = 1e-7) -> Figure1Result:
    """Price of the drift-robust efficient payoff against ``mu1`` and its normalized payoff curves."""
    market = market or MarketQ(1.0, 0.0, 1.0, 0.9)
    mu1_grid = np.asarray(mu1_grid if mu1_grid is not None else np.round(np.arange(1, 11) * 0.05, 10), dtype=float)
    if np.any(np.diff(mu1_grid) <= 0):
        raise DomainError("mu1 grid must be strictly increasing")
    F0 = F0 or Exponential(1.0)
    s_grid = np.asarray(s_grid if s_grid is not None else np.linspace(0.01, 5.0, 500), dtype=float)
    prices, curves = [], {}
    for mu1 in mu1_grid:
        payoff, _ = robust_efficient_payoff(F0, DriftHalfLine(float(mu1)), OrderFamily.FSD, market, spec)
        pi = price(payoff, market, spec)
        prices.append(pi)
        curves[float(mu1)] = np.asarray(payoff(s_grid)) / pi
    near = efficient_payoff(F0, likelihood_ratio_drift(market.r + limit_offset, market), market, spec)
    return Figure1Result(mu1_grid, np.asarray(prices), s_grid, curves, price(near, market, spec))


# Discrete cost-efficiency


def discrete_efficient_oracle(state_prices, probs, target_values, *, exhaustive: bool = False):
    """Cheapest assignment of ``target_values`` to states that keeps the law under ``probs``.

    ``state_prices[i]`` is the price of one unit paid in state ``i`` and
    ``target_values[i]`` the payoff initially attached to state ``i``. Only
    states of equal probability may swap values, which keeps the law; within
    each such class the largest value goes to the cheapest state. With
    ``exhaustive`` every permutation within classes is enumerated (small
    inputs only). Returns ``(min_cost, assignment)``.
    """
    q = np.asarray(state_prices, dtype=float)
    p = np.asarray(probs, dtype=float)
    x = np.asarray(target_values, dtype=float)
    if not (q.shape == p.shape == x.shape and q.ndim == 1 and q.size > 0):
        raise DomainError("state prices, probabilities and target values need equal lengths")
    if np.any(q <= 0):
        raise DomainError("state prices must be positive")
    if np.any(p < 0) or not math.isclose(float(np.sum(p)), 1.0, rel_tol=0, abs_tol=1e-12):
        raise DomainError("probabilities must be nonnegative and sum to 1")

    classes: dict[float, list[int]] = {}
    for i, pi in enumerate(p):
        classes.setdefault(round(float(pi), 15), []).append(i)

    out = np.empty_like(x)
    for idx in classes.values():
        idx = np.asarray(idx)
        if exhaustive:
            if idx.size > 9:
                raise DomainError("exhaustive search is limited to 9 states per class")
            best, best_perm = math.inf, None
            for perm in itertools.permutations(range(idx.size)):
                c = math.fsum(q[idx] * x[idx][list(perm)])
                if c < best:
                    best, best_perm = c, perm
            out[idx] = x[idx][list(best_perm)]
        else:
            cheap_first = idx[np.argsort(q[idx], kind="stable")]
            out[cheap_first] = np.sort(x[idx])[::-1]
    return math.fsum(q * out), out


def discretize_market(ell: LikelihoodRatio, market: MarketQ, n: int):
    """``n`` equal-probability states at the mid-quantiles of S_T under ``ell``'s measure.

    Returns ``(state_prices, probs, stock_values, levels)`` with state prices
    ``p_i exp(-rT) / ell(s_i)`` rescaled so they sum to ``exp(-rT)``.
    """
    if ell.stock_law is None:
        raise DomainError("likelihood ratio carries no stock law")
    u = (np.arange(n) + 0.5) / n
    s = np.asarray(ell.stock_law.quantile(u))
    probs = np.full(n, 1.0 / n)
    raw = probs * market.discount / np.asarray(ell(s))
    q = raw * market.discount / raw.sum()
    return q, probs, s, u


# Static replication


@dataclass(frozen=True, eq=False)
class ReplicationPortfolio:
    bond: float
    forward: float
    strikes: np.ndarray
    calls: np.ndarray
    cost: float

    def value(self, s):
        s = np.asarray(s, dtype=float)
        out = self.bond + self.forward * s + np.sum(self.calls * np.maximum(s[..., None] - self.strikes, 0.0), axis=-1)
        return float(out) if out.ndim == 0 else out


def replicate_with_calls(p: Payoff, strikes, market: MarketQ) -> ReplicationPortfolio:
    """Bond, forward and call weights reproducing the piecewise-linear interpolant of ``p`` on ``strikes``.

    Below the first strike the portfolio continues with a one-sided slope.
    Call weights are the changes in interpolant slope at each strike.
    """
    K = np.asarray(strikes, dtype=float)
    if K.ndim != 1 or K.size < 2 or np.any(np.diff(K) <= 0) or K[0] <= 0:
        raise DomainError("strikes must be positive, strictly increasing, at least two")
    y = np.asarray(p(K), dtype=float)
    slopes = np.diff(y) / np.diff(K)
    h = K[1] - K[0]
    if K[0] - h > 0:
        left = (y[0] - float(p(K[0] - h))) / h
    else:
        left = slopes[0]
    second = np.diff(np.concatenate([[left], slopes]))
    if not (np.all(np.isfinite(second)) and math.isfinite(left)):
        raise DivergenceError("non-finite second differences in the payoff")
    calls = np.concatenate([second, [0.0]])
    bond = y[0] - left * K[0]
    cost = bond * market.discount + left * market.s0 + float(np.sum(calls * black_scholes_call(market, K)))
    return ReplicationPortfolio(float(bond), float(left), K, calls, cost)


# Third-order counterexample

COUNTEREXAMPLE_MARKET = MarketQ(s0=math.exp(-0.0025), r=0.0, T=1.0, s=0.1)
COUNTEREXAMPLE_MU1 = 0.01


def tsd_counterexample(p0: float = 1.0 / 3.0, market: MarketQ = COUNTEREXAMPLE_MARKET, mu1: float = COUNTEREXAMPLE_MU1,
                       grid_size: int = 2048, tol: float = 1e-9,
                       spec: QuadratureSpec = DEFAULT_QUADRATURE) -> dict:
    """Uniform target ``F`` against a two-point target ``G`` under third-order dominance.

    Both efficient payoffs are built under the least favorable drift ``mu1``.
    ``tsdHolds`` is the full double-integral criterion on the whole half-line;
    ``tsdHoldsOnSupport`` restricts it to the common support ``[0, 1]``.
    """
    ell = likelihood_ratio_drift(mu1, market)
    F, G = Uniform01(), TwoPoint(p0)
    xf = efficient_payoff(F, ell, market, spec)
    xg = efficient_payoff(G, ell, market, spec)
    price_f, price_g = price(xf, market, spec), price(xg, market, spec)
    verdict = check_tsd(F, G, grid_size, tol)
    return {
        "p0": p0,
        "priceF": price_f,
        "priceG": price_g,
        "priceGExceedsF": price_g > price_f,
        "tsdHolds": verdict.holds,
        "tsdStatus": verdict.status,
        "tsdMargin": verdict.margin,
        "tsdWitness": verdict.witness,
        "tsdHoldsOnSupport": verdict.detail["on_support"] == "holds",
        "meanF": F.mean(),
        "meanG": G.mean(),
        "costInconsistencyShown": verdict.holds and price_g > price_f,
    }
