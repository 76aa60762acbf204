"""Expected-utility and rank-dependent-utility optima under ambiguity, utility diagnostics, rationalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import Empirical, Lognormal
from .efficiency import Payoff, discrete_efficient_oracle, discretize_market, price, robust_efficient_payoff
from .errors import (
    ConvergenceError,
    DomainError,
    HypothesisViolated,
    NotCovered,
    PreconditionError,
)
from .markets import (
    AmbiguitySet,
    DriftHalfLine,
    DriftVolRectangle,
    LikelihoodRatio,
    MarketQ,
    PhysicalLognormal,
    least_favorable,
    likelihood_ratio_drift,
)
from .numerics import (
    DEFAULT_QUADRATURE,
    PiecewiseLinearFn,
    QuadratureSpec,
    bracket_log_grid,
    concave_envelope,
    find_root,
    std_normal_cdf,
    std_normal_quantile,
)
from .orders import OrderFamily

__all__ = [
    "Crra",
    "ExponentialUtility",
    "TabulatedUtility",
    "WangDistortion",
    "RduProblem",
    "RduSolution",
    "RationalizedUtility",
    "AOverPReport",
    "rdu_optimal",
    "robust_rdu_solve",
    "eut_optimal",
    "inverse_marginal_convexity_check",
    "rationalize_utility",
    "equivalence_audit",
    "rdu_objective",
    "rdu_h_function",
    "lambda_closed_form",
    "KNIFE_EDGE_TOL",
]

KNIFE_EDGE_TOL = 1e-12
ENVELOPE_KNOTS = 4097
RATIONALIZE_KNOTS = 4097


# Utilities


@dataclass(frozen=True)
class Crra:
    """``x^(1-eta) / (1-eta)``."""

    eta: float

    def __post_init__(self):
        if not (self.eta > 0 and self.eta != 1):
            raise DomainError("CRRA needs eta > 0 and eta != 1")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return x ** (1 - self.eta) / (1 - self.eta)

    def marginal(self, x):
        return np.asarray(x, dtype=float) ** (-self.eta)

    def second(self, x):
        return -self.eta * np.asarray(x, dtype=float) ** (-self.eta - 1)

    def third(self, x):
        return self.eta * (self.eta + 1) * np.asarray(x, dtype=float) ** (-self.eta - 2)

    def inverse_marginal(self, y):
        return np.asarray(y, dtype=float) ** (-1.0 / self.eta)


@dataclass(frozen=True)
class ExponentialUtility:
    """``1 - exp(-lam x)``."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("exponential utility needs lam > 0")

    def value(self, x):
        return -np.expm1(-self.lam * np.asarray(x, dtype=float))

    def marginal(self, x):
        return self.lam * np.exp(-self.lam * np.asarray(x, dtype=float))

    def second(self, x):
        return -self.lam**2 * np.exp(-self.lam * np.asarray(x, dtype=float))

    def third(self, x):
        return self.lam**3 * np.exp(-self.lam * np.asarray(x, dtype=float))

    def inverse_marginal(self, y):
        return np.log(self.lam / np.asarray(y, dtype=float)) / self.lam


@dataclass(frozen=True, eq=False)
class TabulatedUtility:
    """Utility given by samples; derivatives by finite differences on the knots."""

    fn: PiecewiseLinearFn

    @classmethod
    def from_arrays(cls, knots, values):
        return cls(PiecewiseLinearFn(knots, values))

    def value(self, x):
        return self.fn(x)

    def _deriv(self, order: int, x):
        k, v = self.fn.knots, self.fn.values
        d = v
        for _ in range(order):
            d = np.gradient(d, k)
        return np.interp(np.asarray(x, dtype=float), k, d)

    def marginal(self, x):
        return self._deriv(1, x)

    def second(self, x):
        return self._deriv(2, x)

    def third(self, x):
        return self._deriv(3, x)

    def inverse_marginal(self, y):
        k = self.fn.knots
        m = self._deriv(1, k)
        order = np.argsort(m)
        return np.interp(np.asarray(y, dtype=float), m[order], k[order])


@dataclass(frozen=True)
class AOverPReport:
    points: np.ndarray = field(repr=False)
    absolute_risk_aversion: np.ndarray = field(repr=False)
    absolute_prudence: np.ndarray = field(repr=False)
    pointwise: np.ndarray = field(repr=False)
    agrees: bool

    def as_dict(self):
        return {"agrees": self.agrees, "allPointsPass": bool(np.all(self.pointwise)),
                "nPoints": int(self.points.size)}


def inverse_marginal_convexity_check(u, grid, rel_tol: float = 1e-9) -> tuple[bool, AOverPReport]:
    """Convexity of ``1/u'`` by second differences, with the pointwise test ``a(x) >= p(x)/2``.

    ``a = -u''/u'`` is absolute risk aversion and ``p = -u'''/u''`` absolute
    prudence. For smooth ``u`` the two verdicts coincide; points where the
    third derivative is not finite are excluded from the comparison.
    """
    x = np.asarray(grid, dtype=float)
    if x.size < 3 or np.any(np.diff(x) <= 0) or np.any(x <= 0):
        raise DomainError("grid must be positive, strictly increasing, with at least 3 points")
    g = 1.0 / np.asarray(u.marginal(x), dtype=float)
    slopes = np.diff(g) / np.diff(x)
    scale = max(float(np.max(np.abs(slopes))), 1e-300)
    convex = bool(np.all(np.diff(slopes) >= -rel_tol * scale))

    u1, u2, u3 = (np.asarray(f(x), dtype=float) for f in (u.marginal, u.second, u.third))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = -u2 / u1
        p = -u3 / u2
    stable = np.isfinite(a) & np.isfinite(p)
    pointwise = a >= 0.5 * p - 1e-12 * np.abs(p)
    verdict_pointwise = bool(np.all(pointwise[stable]))
    report = AOverPReport(x, a, p, pointwise, agrees=verdict_pointwise == convex)
    return convex, report


@dataclass(frozen=True)
class WangDistortion:
    """``u -> Phi(Phi^-1(u) + gamma)``."""

    gamma: float

    def __call__(self, u):
        return self._shift(u, self.gamma)

    def inverse(self, v):
        return self._shift(v, -self.gamma)

    @staticmethod
    def _shift(u, g):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u > 1):
            raise DomainError("distortion argument must lie in [0, 1]")
        inner = np.clip(u, 1e-300, 1 - 1e-16)
        val = std_normal_cdf(std_normal_quantile(inner) + g)
        out = np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, val))
        return float(out) if out.ndim == 0 else out


# Rank-dependent utility


@dataclass(frozen=True)
class RduProblem:
    eta: float
    gamma: float
    x0: float
    measure: PhysicalLognormal
    market: MarketQ

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise DomainError("eta must lie in (0, 1)")
        if not self.x0 > 0:
            raise DomainError("initial wealth must be positive")
        if not math.isclose(self.measure.sigma, self.market.s, rel_tol=1e-12):
            raise DomainError("the physical volatility must equal the pricing volatility in this solver")

    @property
    def theta(self) -> float:
        return self.measure.theta(self.market)

    @property
    def exponent(self) -> float:
        """Power of the likelihood ratio in the optimal payoff."""
        return (self.gamma + self.theta) / (self.theta * self.eta)


@dataclass(frozen=True, eq=False)
class RduSolution:
    payoff: Payoff
    lambda_multiplier: float
    case_tag: str
    lambda_numeric: float
    budget_residual: float
    envelope_deviation: float
    theta: float
    exponent: float
    provenance: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "caseTag": self.case_tag,
            "lambda": self.lambda_multiplier,
            "lambdaNumeric": self.lambda_numeric,
            "lambdaRelDiff": abs(self.lambda_numeric / self.lambda_multiplier - 1.0),
            "budgetResidual": self.budget_residual,
            "envelopeDeviation": self.envelope_deviation,
            "theta": self.theta,
            "exponent": self.exponent,
            "provenance": self.provenance,
        }


def lambda_closed_form(p: RduProblem) -> tuple[float, str]:
    """Lagrange multiplier and case tag.

    In the generic power case the multiplier follows from the lognormal
    moment of the state-price-weighted payoff,
    ``x0^-eta exp(rT (1 - eta) + (gamma + theta)^2 (1 - eta) / (2 eta))``.
    """
    th, eta, g, x0 = p.theta, p.eta, p.gamma, p.x0
    rT = p.market.r * p.market.T
    if g + th <= 0:
        return x0 ** (-eta) * math.exp(-rT * eta), "ConstantWealth"
    if abs(1 - g / (th * eta) - 1 / eta) < KNIFE_EDGE_TOL:
        return x0 ** (-eta) * math.exp(-rT * g / th - 0.5 * g * (th + g)), "PowerOfLikelihood-KnifeEdge"
    return x0 ** (-eta) * math.exp(rT * (1 - eta) + (g + th) ** 2 * (1 - eta) / (2 * eta)), \
        "PowerOfLikelihood-Generic"


def rdu_h_function(theta: float, gamma: float, market: MarketQ, n: int = ENVELOPE_KNOTS) -> PiecewiseLinearFn:
    """``H(z) = -int_0^{w^-1(1-z)} F_xi^-1(t) dt`` on a uniform grid of ``[0, 1]``."""
    z = np.linspace(0.0, 1.0, n)
    xi = Lognormal(-market.r * market.T - 0.5 * theta**2, theta)
    q = np.asarray(WangDistortion(gamma).inverse(1.0 - z))
    inside = q > 0
    pe = np.zeros_like(z)
    pe[inside] = xi.partial_expectation(q[inside])
    return PiecewiseLinearFn(z, -pe)


def _envelope_deviation(theta: float, gamma: float, market: MarketQ, case: str) -> float:
    H = rdu_h_function(theta, gamma, market)
    env = concave_envelope(H)
    if case == "ConstantWealth":
        target = market.discount * (H.knots - 1.0)
    else:
        target = H.values
    return float(np.max(np.abs(env.values - target)))


def rdu_optimal(p: RduProblem, spec: QuadratureSpec = DEFAULT_QUADRATURE, *, envelope_tol: float = 1e-6,
                lambda_tol: float = 1e-6) -> RduSolution:
    """Closed-form optimum of CRRA utility under a Wang distortion, with numeric cross-checks.

    The multiplier is also root-solved from the budget by quadrature under the
    physical measure, and the concave envelope of ``H`` is computed
    numerically and compared with the analytic case split. Disagreement
    beyond the tolerances raises :class:`ConvergenceError`.
    """
    m = p.market
    if not p.measure.mu > m.r:
        raise PreconditionError("the drift must exceed the interest rate (theta > 0)")
    th, eta, g = p.theta, p.eta, p.gamma
    lam, case = lambda_closed_form(p)
    ell = likelihood_ratio_drift(p.measure.mu, m)
    stock_p = ell.stock_law
    rT = m.r * m.T

    if case == "ConstantWealth":
        k = 0.0
        const = 1.0

        def shape(s):
            return np.ones_like(np.asarray(s, dtype=float))

    else:
        k = p.exponent
        const = math.exp(rT / eta - 0.5 * g * (th + g) / eta)

        def shape(s):
            return const * np.asarray(ell(s)) ** k

    # Budget E_P[xi X] for unit multiplier, by quadrature under P.
    unit_cost = stock_p.expect(lambda s: m.discount / np.asarray(ell(s)) * shape(s), spec)
    log_x0 = math.log(p.x0)

    def residual(t):  # t = log(lambda)
        return -t / eta + math.log(unit_cost) - log_x0

    lo, hi = bracket_log_grid(lambda lv: residual(math.log(lv)))
    lam_num = math.exp(find_root(residual, math.log(lo), math.log(hi), 1e-15))
    if abs(lam_num / lam - 1.0) > lambda_tol:
        raise ConvergenceError(f"closed-form multiplier {lam:.12g} and root-solved {lam_num:.12g} disagree")

    scale = lam ** (-1.0 / eta)
    if case == "ConstantWealth":
        level = scale
        fn = lambda s: np.full_like(np.asarray(s, dtype=float), level)  # noqa: E731
        law = Empirical(np.array([level]))
    else:
        amp = scale * const
        fn = lambda s: amp * np.asarray(ell(s)) ** k  # noqa: E731
        law = Lognormal(math.log(amp) + k * ell.law.log_mean, k * ell.law.log_std)
    payoff = Payoff(fn, True, {"P": law}, ratio=ell, label=f"RDU optimum ({case})")
    budget = stock_p.expect(lambda s: m.discount / np.asarray(ell(s)) * fn(s), spec)

    dev = _envelope_deviation(th, g, m, case)
    if dev > envelope_tol:
        raise ConvergenceError(f"numeric concave envelope departs from the {case} split by {dev:.3g}")
    return RduSolution(payoff, lam, case, lam_num, budget - p.x0, dev, th, k)


def robust_rdu_solve(p: RduProblem, amb: AmbiguitySet, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> RduSolution:
    """Max-min RDU optimum, obtained by solving under the least favorable measure.

    Drift-only ambiguity reduces through first-order family consistency. With
    volatility ambiguity the second-order route needs ``gamma < 0``, the
    least favorable measure for SSD, and the optimum concave in the ratio;
    the last means an exponent ``(gamma + theta) / (theta eta) <= 1``.
    """
    m = p.market
    drift_only = isinstance(amb, DriftHalfLine) or (
        isinstance(amb, DriftVolRectangle) and amb.sigma1 == amb.sigma_max)
    provenance: dict = {}
    if drift_only:
        family = OrderFamily.FSD
        provenance["reduction"] = "law-invariant FSD-consistent preference; solve under P*"
    elif isinstance(amb, DriftVolRectangle):
        if not p.gamma < 0:
            raise NotCovered("volatility ambiguity with gamma >= 0 is not covered", condition="gamma < 0")
        family = OrderFamily.SSD
        provenance["reduction"] = "SSD-consistent preference; optimum is a concave function of ell*"
    else:
        raise DomainError("RDU reduction implemented for drift and drift-volatility ambiguity")

    measure, ell, report = least_favorable(amb, family, m, spec=spec)
    if not report.all_pass:
        raise HypothesisViolated("least favorable verification failed: "
                                 + ", ".join(c.name for c in report.failed()),
                                 condition=report.failed()[0].name)
    star = RduProblem(p.eta, p.gamma, p.x0, measure, m)
    checks = {"leastFavorable": report.as_dict()}
    if family is OrderFamily.SSD:
        k = star.exponent if star.gamma + star.theta > 0 else 0.0
        checks["exponent"] = k
        concave = k <= 1.0
        if concave and k > 0:
            xs = np.asarray(ell.law.quantile(np.linspace(1e-3, 1 - 1e-3, 257)))
            sl = np.diff(xs**k) / np.diff(xs)
            concave = bool(np.all(np.diff(sl) <= 1e-10 * np.max(np.abs(sl))))
        checks["concaveInRatio"] = concave
        if not concave:
            raise HypothesisViolated(
                f"optimum is ell*^{k:.6g}, not concave in the ratio; gamma < 0 alone does not suffice",
                condition="optimum concave in ell*",
            )
    sol = rdu_optimal(star, spec)
    payoff = Payoff(sol.payoff.fn, True, {"P*": sol.payoff.laws["P"]}, ratio=ell, label="robust RDU optimum")
    provenance.update(checks)
    provenance["family"] = family.value
    provenance["measure"] = {"mu": measure.mu, "sigma": measure.sigma}
    return RduSolution(payoff, sol.lambda_multiplier, sol.case_tag, sol.lambda_numeric, sol.budget_residual,
                       sol.envelope_deviation, sol.theta, sol.exponent, provenance)


def rdu_objective(values, u, w: WangDistortion) -> float:
    """RDU of an equal-probability discrete payoff: ``sum U(x_(i)) [w(1 - i/N) - w(1 - (i+1)/N)]``."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    i = np.arange(n)
    weights = np.asarray(w(1 - i / n)) - np.asarray(w(1 - (i + 1) / n))
    return float(np.sum(np.asarray(u.value(x)) * weights))


# Expected utility


def eut_optimal(u, ell: LikelihoodRatio, market: MarketQ, x0: float,
                spec: QuadratureSpec = DEFAULT_QUADRATURE) -> Payoff:
    """``[u']^{-1}(c / ell(S_T))`` with ``c`` set by the budget ``exp(-rT) E_Q[X] = x0``.

    Where the inverse marginal is negative (exponential utility) the payoff is
    clipped at zero so it stays in the nonnegative payoff set.
    """
    if not x0 > 0:
        raise DomainError("initial wealth must be positive")
    law_q = market.stock_law_q

    def payoff_for(c):
        return lambda s: np.maximum(np.asarray(u.inverse_marginal(c / np.asarray(ell(s)))), 0.0)

    def residual(t):
        return market.discount * law_q.expect(payoff_for(math.exp(t)), spec) - x0

    try:
        lo, hi = bracket_log_grid(lambda c: residual(math.log(c)), 1e-12, 1e12, 49)
    except ValueError as exc:
        raise PreconditionError(f"budget x0={x0} is unattainable: {exc}") from exc
    t = find_root(residual, math.log(lo), math.log(hi), 1e-14)
    c0 = math.exp(t)
    fn = payoff_for(c0)
    laws = {}
    if isinstance(u, Crra) and isinstance(ell.law, Lognormal) and ell.increasing:
        k = 1.0 / u.eta
        laws["P"] = Lognormal(-k * math.log(c0) + k * ell.law.log_mean, k * ell.law.log_std)
    return Payoff(fn, ell.increasing, laws, ratio=ell, label=f"EUT optimum (c0={c0:.10g})")


# Rationalization


@dataclass(frozen=True, eq=False)
class RationalizedUtility:
    c: float
    tabulated: PiecewiseLinearFn
    marginal: np.ndarray
    fitted_exponent: float | None

    def derivative_ratio(self, exponent: float) -> np.ndarray:
        """Secant slopes of the table divided by those of ``y^exponent / exponent``."""
        y, v = self.tabulated.knots, self.tabulated.values
        ref = y**exponent / exponent
        return np.diff(v) / np.diff(ref)


def rationalize_utility(x: Payoff, ell_star: LikelihoodRatio, market: MarketQ, c: float,
                        n_knots: int = RATIONALIZE_KNOTS, levels: tuple = (0.001, 0.999)) -> RationalizedUtility:
    """Utility ``u(y) = int_c^y F_xi*^-1(1 - F_X(t)) dt`` whose EUT optimum is ``x``.

    ``F_X`` is the law of the payoff under the least favorable measure and
    ``F_xi*^-1(1 - v) = exp(-rT) / F_ell*^-1(v)``. The integral is tabulated
    with Simpson's rule on each interval of a quantile-spaced grid.
    """
    law = x.laws.get("P*") or x.laws.get("P")
    if law is None:
        raise PreconditionError("the law of the payoff under the least favorable measure is required")
    if not law.continuous:
        raise PreconditionError("payoff law has atoms; the rationalizing utility is degenerate")
    if ell_star.law is None:
        raise PreconditionError("law of the likelihood ratio is required")
    if not float(law.cdf(c)) > 0:
        raise PreconditionError(f"F_X(c) must be positive, got 0 at c={c}")
    ell_law = ell_star.law
    disc = market.discount

    def marginal(y):
        v = np.clip(np.asarray(law.cdf(y), dtype=float), 1e-300, 1 - 1e-16)
        return disc / np.asarray(ell_law.quantile(v))

    y = np.asarray(law.quantile(np.linspace(levels[0], levels[1], n_knots)))
    if not (y[0] <= c <= y[-1]):
        raise DomainError(f"c={c} lies outside the tabulated range [{y[0]:.6g}, {y[-1]:.6g}]")
    mid = 0.5 * (y[:-1] + y[1:])
    my, mm = marginal(y), marginal(mid)
    pieces = np.diff(y) / 6.0 * (my[:-1] + 4.0 * mm + my[1:])
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    # value at c by Simpson on the partial interval
    j = int(np.clip(np.searchsorted(y, c) - 1, 0, y.size - 2))
    cm = 0.5 * (y[j] + c)
    at_c = cum[j] + (c - y[j]) / 6.0 * (my[j] + 4.0 * float(marginal(cm)) + float(marginal(c)))
    values = cum - at_c
    slope, _ = np.polyfit(np.log(y), np.log(my), 1)
    return RationalizedUtility(float(c), PiecewiseLinearFn(y, values), my, float(1.0 + slope))


# Equivalence audit


def equivalence_audit(x: Payoff, amb: AmbiguitySet, family, market: MarketQ, *, n: int = 4096,
                      rel_tol: float = 1e-6, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> dict:
    """Finitely checkable characterizations of robust cost-efficiency.

    On ``n`` equal-probability states at the least favorable quantiles of S_T:
    (ii) the payoff equals its own quantile function composed with the
    cdf of the ratio; (iii) it is non-decreasing in the ratio; (iv) its cost
    equals the cheapest payoff with the same law, both on the discretized
    states and, when the law is known, against the robust efficient price.
    """
    family = OrderFamily.parse(family)
    measure, ell, report = least_favorable(amb, family, market, spec=spec)
    q, probs, s, levels = discretize_market(ell, market, n)
    xs = np.asarray(x(s), dtype=float)
    scale = max(float(np.max(np.abs(xs))), 1e-300)
    law = x.laws.get("P*")

    # ii) identity with the quantile transform of the ratio
    if law is not None:
        reference = np.asarray(law.quantile(levels))
    else:
        reference = np.sort(xs)  # empirical quantile at the mid levels
    gap = np.abs(xs - reference)
    i2 = int(np.argmax(gap))
    ok2 = bool(gap[i2] <= rel_tol * scale)

    # iii) monotone in ell*: states are ordered by S_T, and ell* is increasing in S_T
    ratio_vals = np.asarray(ell(s))
    order = np.argsort(ratio_vals, kind="stable")
    steps = np.diff(xs[order])
    i3 = int(np.argmin(steps)) if steps.size else 0
    ok3 = bool(steps.size == 0 or steps[i3] >= -1e-12 * scale)

    # iv) cost equals the cheapest payoff with the same law
    cost = float(np.sum(q * xs))
    best, _ = discrete_efficient_oracle(q, probs, xs)
    disc_gap = cost - best
    ok4 = bool(disc_gap <= rel_tol * max(abs(best), 1e-300))
    iv = {"discreteCost": cost, "discreteMinimum": best, "discreteGap": disc_gap}
    if law is not None:
        robust, _ = robust_efficient_payoff(law, amb, family, market, spec)
        pr, pr_robust = price(x, market, spec), price(robust, market, spec)
        iv.update({"price": pr, "robustPrice": pr_robust})
        ok4 = ok4 and abs(pr - pr_robust) <= rel_tol * abs(pr_robust)

    items = {
        "ii": {"passed": ok2, "witness": float(s[i2]), "maxGap": float(gap[i2])},
        "iii": {"passed": ok3, "witness": float(s[order][i3 + 1]) if steps.size else None,
                "minStep": float(steps[i3]) if steps.size else 0.0},
        "iv": {"passed": ok4, **iv},
    }
    flags = [items[k]["passed"] for k in ("ii", "iii", "iv")]
    return {"items": items, "allPass": all(flags), "allFail": not any(flags),
            "consistent": all(flags) or not any(flags), "leastFavorable": report.as_dict()}
