"""One-period lognormal market, physical measures, likelihood ratios and ambiguity sets.

All likelihood ratios are densities with respect to the pricing measure Q and
are stored as functions of the terminal stock value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .distributions import (
    DistributionSpec,
    ExpTransformed,
    LaplaceZ,
    Lognormal,
    LogisticZ,
    NormalZ,
    RealLaw,
)
from .errors import (
    DivergenceError,
    DomainError,
    HypothesisViolated,
    SingularityError,
    Unsupported,
)
from .numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    find_root,
    integrate,
    std_normal_cdf,
    std_normal_pdf,
)
from .orders import OrderFamily, check_order, single_crossing_from_above

__all__ = [
    "MarketQ",
    "PhysicalLognormal",
    "LikelihoodRatio",
    "EsscherFamily",
    "EsscherIndex",
    "DriftHalfLine",
    "DriftVolRectangle",
    "EsscherSet",
    "AmbiguitySet",
    "Check",
    "VerificationReport",
    "lognormal_density",
    "likelihood_ratio_drift",
    "likelihood_ratio_general",
    "state_price",
    "mean_correction",
    "esscher_family",
    "esscher_likelihood",
    "least_favorable",
    "black_scholes_call",
    "z_law",
]


@dataclass(frozen=True)
class MarketQ:
    s0: float = 1.0
    r: float = 0.0
    T: float = 1.0
    s: float = 0.2

    def __post_init__(self):
        for name in ("s0", "T", "s"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"market parameter {name} must be positive and finite, got {v!r}")
        if not math.isfinite(self.r):
            raise DomainError("interest rate must be finite")

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.T)

    def stock_law(self, mu: float | None = None, sigma: float | None = None) -> Lognormal:
        """Law of S_T under P^{mu, sigma}; the defaults give the pricing measure."""
        mu = self.r if mu is None else mu
        sigma = self.s if sigma is None else sigma
        return Lognormal(math.log(self.s0) + (mu - 0.5 * sigma**2) * self.T, sigma * math.sqrt(self.T))

    @property
    def stock_law_q(self) -> Lognormal:
        return self.stock_law()


@dataclass(frozen=True)
class PhysicalLognormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    def stock_law(self, market: MarketQ) -> Lognormal:
        return market.stock_law(self.mu, self.sigma)

    def theta(self, market: MarketQ) -> float:
        return math.sqrt(market.T) * (self.mu - market.r) / self.sigma


@dataclass(frozen=True)
class EsscherIndex:
    h: float


@dataclass(frozen=True, eq=False)
class LikelihoodRatio:
    """``evaluate(s) = dP/dQ`` at ``S_T = s``.

    Power-type ratios ``exp(power * ln s + log_offset)`` also record
    ``power`` and ``log_offset`` so their law under any lognormal-type stock
    law can be written down exactly.
    """

    evaluate: Callable
    increasing: bool
    concave: bool
    law: DistributionSpec | None
    stock_law: DistributionSpec | None = None
    label: str = ""
    power: float | None = None
    log_offset: float | None = None

    def __call__(self, x):
        return self.evaluate(x)

    def law_under(self, stock_law: DistributionSpec) -> DistributionSpec:
        """Law of the ratio when S_T follows ``stock_law`` (power-type ratios with positive power)."""
        k, b = self.power, self.log_offset
        if k is None or not k > 0:
            raise DomainError("law_under needs an increasing power-type likelihood ratio")
        if isinstance(stock_law, Lognormal):
            return Lognormal(k * stock_law.log_mean + b, k * stock_law.log_std)
        if isinstance(stock_law, ExpTransformed):
            return ExpTransformed(k * stock_law.loc + b, k * stock_law.scale, stock_law.base)
        raise DomainError(f"no closed-form law of the ratio under {type(stock_law).__name__}")

    def function_in_family(self, family: OrderFamily) -> bool:
        """Whether the ratio is ``f(S_T)`` with ``f`` in the test-function family."""
        if self.power is not None:
            return family.contains_power(self.power)
        if not self.increasing:
            return False
        return family is OrderFamily.FSD or self.concave


def lognormal_density(m: float, sig: float, market: MarketQ, x):
    """Density at ``x`` of S_T when its log-drift is ``m`` and volatility ``sig``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("lognormal density requires x > 0")
    T = market.T
    z = (np.log(x) - math.log(market.s0) - (m - 0.5 * sig**2) * T) / (sig * math.sqrt(T))
    out = std_normal_pdf(z) / (x * sig * math.sqrt(T))
    return float(out) if np.ndim(out) == 0 else out


def likelihood_ratio_drift(mu: float, market: MarketQ) -> LikelihoodRatio:
    """Ratio of P^{mu, s} to Q when only the drift differs."""
    r, s, T, s0 = market.r, market.s, market.T, market.s0
    k = (mu - r) / s**2
    log_c = (r * r - mu * mu + s * s * (mu - r)) / (2 * s * s) * T
    offset = log_c - k * math.log(s0)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = np.exp(k * np.log(x) + offset)
        return float(out) if out.ndim == 0 else out

    theta = math.sqrt(T) * (mu - r) / s
    law = Lognormal(0.5 * theta**2, abs(theta)) if theta != 0 else None
    return LikelihoodRatio(
        evaluate=evaluate,
        increasing=mu > r,
        concave=0 <= k <= 1,
        law=law,
        stock_law=market.stock_law(mu, s),
        label=f"drift mu={mu:g}",
        power=k,
        log_offset=offset,
    )


def _log_density_ratio_coeffs(p: PhysicalLognormal, market: MarketQ):
    """Coefficients (a, b, c) of ``log ell = a y^2 + b y + c`` in ``y = ln x``."""
    T, s0 = market.T, market.s0
    m1 = math.log(s0) + (p.mu - 0.5 * p.sigma**2) * T
    v1 = p.sigma**2 * T
    m0 = math.log(s0) + (market.r - 0.5 * market.s**2) * T
    v0 = market.s**2 * T
    a = -0.5 / v1 + 0.5 / v0
    b = m1 / v1 - m0 / v0
    c = -0.5 * m1 * m1 / v1 + 0.5 * m0 * m0 / v0 + 0.5 * math.log(v0 / v1)
    return a, b, c


def likelihood_ratio_general(p: PhysicalLognormal, market: MarketQ, probe_points: int = 2049) -> LikelihoodRatio:
    """Ratio ``f^{mu, sigma} / f^{r, s}`` with monotonicity and concavity set by a numeric probe."""
    if p.sigma == market.s:
        return likelihood_ratio_drift(p.mu, market)
    a, b, c = _log_density_ratio_coeffs(p, market)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        y = np.log(x)
        out = np.exp((a * y + b) * y + c)
        return float(out) if out.ndim == 0 else out

    law_p, law_q = p.stock_law(market), market.stock_law_q
    lo = min(law_p.quantile(1e-9), law_q.quantile(1e-9))
    hi = max(law_p.quantile(1 - 1e-9), law_q.quantile(1 - 1e-9))
    y = np.linspace(math.log(lo), math.log(hi), probe_points)
    dlog = 2 * a * y + b  # derivative of log ell in y
    increasing = bool(np.all(dlog >= 0))
    xs = np.exp(y)
    vals = evaluate(xs)
    slopes = np.diff(vals) / np.diff(xs)
    concave = bool(np.all(np.diff(slopes) <= 1e-10 * max(np.max(np.abs(slopes)), 1e-300)))
    return LikelihoodRatio(
        evaluate=evaluate,
        increasing=increasing,
        concave=concave,
        law=None,
        stock_law=law_p,
        label=f"mu={p.mu:g}, sigma={p.sigma:g}",
    )


def state_price(ell: LikelihoodRatio, market: MarketQ, x):
    """``exp(-rT) / ell(x)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("state price requires x > 0")
    lv = np.asarray(ell(x), dtype=float)
    if np.any(lv == 0):
        raise SingularityError("likelihood ratio vanishes; state price is infinite")
    out = market.discount / lv
    return float(out) if out.ndim == 0 else out


# Esscher-tilted markets


def z_law(name: str) -> RealLaw:
    try:
        return {"normal": NormalZ, "laplace": LaplaceZ, "logistic": LogisticZ}[name.lower()]()
    except KeyError:
        raise DomainError(f"unknown standardized law {name!r}") from None


def mean_correction(z: RealLaw, market: MarketQ, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``omega`` with ``exp(-rT) E_Q[s0 exp((r + omega) T + s sqrt(T) Z)] = s0``.

    The exponential moment is computed by quadrature of the density of ``Z``
    and ``omega`` by a bracketed root solve.
    """
    t = market.s * math.sqrt(market.T)
    if not t < z.mgf_radius:
        raise DivergenceError(f"E_Q[exp({t:g} Z)] diverges for the {z.name} law")
    lo, hi = float(z.quantile(spec.tail_cut)), float(z.quantile(1 - spec.tail_cut))
    lo, hi = lo - 30.0, hi + 30.0
    moment = integrate(lambda u: np.exp(t * u) * np.asarray(z.pdf(u)), lo, hi, spec)
    log_m = math.log(moment)
    T = market.T
    return find_root(lambda w: w * T + log_m, -log_m / T - 1.0, -log_m / T + 1.0, 1e-15)


@dataclass(frozen=True)
class EsscherFamily:
    """Q-dynamics ``S_T = s0 exp((r + omega) T + s sqrt(T) Z)`` and its Esscher tilts."""

    z: RealLaw
    omega: float
    market: MarketQ

    @property
    def loc(self) -> float:
        m = self.market
        return math.log(m.s0) + (m.r + self.omega) * m.T

    @property
    def scale(self) -> float:
        return self.market.s * math.sqrt(self.market.T)

    def stock_law(self, h: float = 0.0) -> ExpTransformed:
        """Law of S_T under P^h (``h = 0`` is Q)."""
        base = self.z if h == 0 else self.z.tilted(h * self.scale)
        return ExpTransformed(self.loc, self.scale, base)

    def log_moment(self, h: float) -> float:
        """``log E_Q[S_T^h]``."""
        return h * self.loc + self.z.log_mgf(h * self.scale)

    def stock_density(self, h: float) -> Callable:
        return self.stock_law(h).pdf


def esscher_family(z: RealLaw | str, market: MarketQ, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> EsscherFamily:
    if isinstance(z, str):
        z = z_law(z)
    return EsscherFamily(z, mean_correction(z, market, spec), market)


def esscher_likelihood(h: float, fam: EsscherFamily) -> LikelihoodRatio:
    """``x^h / E_Q[S_T^h]``."""
    if not h > 0:
        raise DomainError(f"Esscher parameter must be positive, got {h}")
    log_m = fam.log_moment(h)  # raises DivergenceError outside the MGF radius

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = np.exp(h * np.log(x) - log_m)
        return float(out) if out.ndim == 0 else out

    stock = fam.stock_law(h)
    return LikelihoodRatio(
        evaluate=evaluate,
        increasing=True,
        concave=h <= 1,
        law=ExpTransformed(h * stock.loc - log_m, h * stock.scale, stock.base),
        stock_law=stock,
        label=f"Esscher h={h:g}",
        power=h,
        log_offset=-log_m,
    )


# Ambiguity sets


@dataclass(frozen=True)
class DriftHalfLine:
    mu1: float

    def validate(self, market: MarketQ) -> None:
        if not self.mu1 > market.r:
            raise DomainError(f"drift half-line needs mu1 > r, got mu1={self.mu1}, r={market.r}")

    def as_dict(self):
        return {"type": "drift", "mu1": self.mu1}


@dataclass(frozen=True)
class DriftVolRectangle:
    mu1: float
    mu2: float
    sigma1: float
    sigma_max: float

    def validate(self, market: MarketQ) -> None:
        if not market.r < self.mu1 <= self.mu2:
            raise DomainError("rectangle needs r < mu1 <= mu2")
        if not 0 < self.sigma1 <= self.sigma_max:
            raise DomainError("rectangle needs 0 < sigma1 <= sigma_max")
        if not math.isclose(self.sigma_max, market.s, rel_tol=1e-12):
            raise DomainError("the rectangle's largest volatility must equal the pricing volatility s")

    def as_dict(self):
        return {"type": "drift-vol", "mu1": self.mu1, "mu2": self.mu2,
                "sigma1": self.sigma1, "sigmaMax": self.sigma_max}


@dataclass(frozen=True)
class EsscherSet:
    h_star: float
    h_max: float
    family: EsscherFamily = field(compare=False)

    def validate(self, market: MarketQ) -> None:
        if not 0 < self.h_star <= self.h_max:
            raise DomainError("Esscher set needs 0 < h_star <= h_max")
        for h in (self.h_star, self.h_max):
            self.family.log_moment(h)  # DivergenceError if E_Q[S_T^h] is infinite
            self.family.z.tilted(h * self.family.scale)

    def as_dict(self):
        return {"type": "esscher", "hStar": self.h_star, "hMax": self.h_max, "z": self.family.z.name}


AmbiguitySet = Union[DriftHalfLine, DriftVolRectangle, EsscherSet]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    witness: object = None
    detail: str = ""

    def as_dict(self):
        w = self.witness
        if isinstance(w, (np.floating, np.integer)):
            w = w.item()
        return {"name": self.name, "passed": bool(self.passed), "witness": w, "detail": self.detail}


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"allPass": self.all_pass, "checks": [c.as_dict() for c in self.checks]}


def _scan_orders(family, star_stock, star_ratio, ell, members, grid_size, tol):
    """Order checks of the least favorable candidate against each sampled member.

    ``members`` yields (parameter label, stock law under that member).
    """
    worst_stock, worst_ratio = None, None
    ok_stock = ok_ratio = True
    for label, stock in members:
        v1 = check_order(family, star_stock, stock, grid_size, tol)
        if not v1.holds and ok_stock:
            ok_stock, worst_stock = False, (label, v1.witness, v1.status)
        v2 = check_order(family, star_ratio, ell.law_under(stock), grid_size, tol)
        if not v2.holds and ok_ratio:
            ok_ratio, worst_ratio = False, (label, v2.witness, v2.status)
    return (
        Check("stock-law-dominated", ok_stock, worst_stock,
              "law of S_T under the candidate is dominated by every sampled member"),
        Check("ratio-law-dominated", ok_ratio, worst_ratio,
              "law of the candidate ratio under the candidate is dominated under every sampled member"),
    )


def _common_checks(ell: LikelihoodRatio, family: OrderFamily, spec: QuadratureSpec):
    checks = [Check("ratio-in-family", ell.function_in_family(family), ell.power,
                    f"ratio is a {family.value} test function of S_T")]
    law = ell.law
    continuous = law is not None and law.continuous
    checks.append(Check("ratio-continuous", continuous, None, "law of the ratio under the candidate is atomless"))
    if law is not None:
        try:
            eps = spec.tail_cut
            inv2 = integrate(lambda u: np.asarray(law.quantile(u)) ** -2.0, eps, 1 - eps, spec)
            finite = math.isfinite(inv2)
        except (ArithmeticError, ValueError):
            inv2, finite = None, False
        checks.append(Check("inverse-ratio-finite-variance", finite, inv2, "E[ell^-2] under the candidate"))
    else:
        checks.append(Check("inverse-ratio-finite-variance", False, None, "law of the ratio unavailable"))
    return checks


def least_favorable(amb: AmbiguitySet, family, market: MarketQ, *, grid: int = 64, rect_grid: int = 8,
                    order_grid: int = 512, tol: float = 1e-9, spec: QuadratureSpec = DEFAULT_QUADRATURE):
    """Least favorable measure of ``amb`` for ``family`` with a sampled verification report.

    Returns ``(measure, ratio, report)``; ``measure`` is a
    :class:`PhysicalLognormal` or an :class:`EsscherIndex`.
    """
    family = OrderFamily.parse(family)
    amb.validate(market)

    if isinstance(amb, DriftHalfLine):
        k = (amb.mu1 - market.r) / market.s**2
        if family is not OrderFamily.FSD and not family.contains_power(k):
            raise HypothesisViolated(
                f"(mu1 - r)/s^2 = {k:g} must lie in (0, 1] for the {family.value} least favorable measure",
                condition="(mu1-r)/s^2 in (0,1]",
            )
        measure = PhysicalLognormal(amb.mu1, market.s)
        ell = likelihood_ratio_drift(amb.mu1, market)
        mus = np.linspace(amb.mu1, amb.mu1 + 10 * market.s**2, grid)
        members = ((f"mu={m:.6g}", market.stock_law(m, market.s)) for m in mus)
        star_stock = ell.stock_law

    elif isinstance(amb, DriftVolRectangle):
        a = (amb.mu1 - market.r) / amb.sigma_max**2
        if family is OrderFamily.FSD:
            if amb.sigma1 < amb.sigma_max:
                raise Unsupported(
                    "no FSD least favorable measure is established under joint drift and volatility ambiguity",
                    condition="FSD with sigma1 < sigma_max",
                )
        elif not 0 < a <= 1:
            raise HypothesisViolated(
                f"(mu1 - r)/sigma_max^2 = {a:g} is outside (0, 1]", condition="(mu1-r)/s^2 in (0,1]"
            )
        measure = PhysicalLognormal(amb.mu1, amb.sigma_max)
        ell = likelihood_ratio_drift(amb.mu1, market)
        mus = np.linspace(amb.mu1, amb.mu2, rect_grid)
        sigmas = np.linspace(amb.sigma1, amb.sigma_max, rect_grid)
        members = ((f"mu={m:.6g},sigma={sg:.6g}", market.stock_law(m, sg)) for m in mus for sg in sigmas)
        star_stock = ell.stock_law

    elif isinstance(amb, EsscherSet):
        fam = amb.family
        if family is not OrderFamily.FSD and not amb.h_star <= 1:
            raise HypothesisViolated(f"h* = {amb.h_star:g} must lie in (0, 1] for {family.value}",
                                     condition="h* in (0,1]")
        measure = EsscherIndex(amb.h_star)
        ell = esscher_likelihood(amb.h_star, fam)
        upper = amb.h_max if amb.h_max > amb.h_star else amb.h_star
        hs = np.linspace(amb.h_star, upper, grid)
        members = ((f"h={h:.6g}", fam.stock_law(h)) for h in hs)
        star_stock = ell.stock_law
    else:
        raise DomainError(f"unknown ambiguity set {amb!r}")

    star_ratio = ell.law
    members = list(members)
    checks = list(_scan_orders(family, star_stock, star_ratio, ell, members, order_grid, tol))
    if isinstance(amb, EsscherSet):
        fam = amb.family
        lo, hi = star_stock.support_hint()
        xs = np.geomspace(lo, hi, 2001)
        f_star = fam.stock_density(amb.h_star)
        crossings = [single_crossing_from_above(f_star, fam.stock_density(h), xs) for h in hs[1:]]
        checks.append(Check("single-crossing", all(crossings) if crossings else True,
                            None if all(crossings) else float(hs[1:][crossings.index(False)]),
                            "density under h* crosses each other density once from above"))
    checks.extend(_common_checks(ell, family, spec))
    return measure, ell, VerificationReport(tuple(checks))


def black_scholes_call(market: MarketQ, strike):
    """Price of a European call on S_T."""
    K = np.asarray(strike, dtype=float)
    s0, r, T, s = market.s0, market.r, market.T, market.s
    vol = s * math.sqrt(T)
    safe = np.where(K > 0, K, 1.0)
    d1 = (math.log(s0) - np.log(safe) + (r + 0.5 * s * s) * T) / vol
    d2 = d1 - vol
    price = s0 * std_normal_cdf(d1) - safe * math.exp(-r * T) * std_normal_cdf(d2)
    out = np.where(K > 0, price, s0 - K * math.exp(-r * T))
    return float(out) if out.ndim == 0 else out
