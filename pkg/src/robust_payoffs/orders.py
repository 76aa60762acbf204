"""Stochastic-dominance verdicts (FSD, SSD, TSD) and a single-crossing scan."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distributions import DistributionSpec
from .errors import DivergenceError, DomainError

__all__ = [
    "OrderFamily",
    "DominanceVerdict",
    "DEFAULT_TOL",
    "mixture_grid",
    "check_fsd",
    "check_ssd",
    "check_tsd",
    "check_order",
    "single_crossing_from_above",
]

DEFAULT_TOL = 1e-9
DEFAULT_GRID = 2048
# Relative size of a negative margin that is still treated as rounding noise.
NOISE = 1e-12


class OrderFamily(enum.Enum):
    """Families of test functions: non-decreasing; plus concave; plus convex derivative."""

    FSD = "FSD"
    SSD = "SSD"
    TSD = "TSD"

    @classmethod
    def parse(cls, tag) -> "OrderFamily":
        if isinstance(tag, cls):
            return tag
        try:
            return cls(str(tag).upper())
        except ValueError:
            raise DomainError(f"unknown order family {tag!r}") from None

    def includes(self, other: "OrderFamily") -> bool:
        """True when every test function of ``other`` belongs to ``self``."""
        return self is other or self is OrderFamily.FSD

    def contains_power(self, k: float) -> bool:
        """Whether ``x -> c * x**k`` (c > 0) is a member on the positive half-line."""
        if self is OrderFamily.FSD:
            return k > 0
        return 0 < k <= 1  # concave; for TSD the derivative k x^(k-1) is then convex


@dataclass(frozen=True)
class DominanceVerdict:
    """Three-valued outcome. ``margin`` is the smallest slack of the defining inequality."""

    status: str
    margin: float
    witness: float | None = None
    detail: dict = field(default_factory=dict, compare=False)

    @property
    def holds(self) -> bool:
        return self.status == "holds"

    @property
    def fails(self) -> bool:
        return self.status == "fails"

    def as_dict(self) -> dict:
        out = {"status": self.status, "margin": self.margin, "witness": self.witness}
        out.update(self.detail)
        return out


def _classify(margin: float, witness, tol: float, scale: float, detail=None) -> DominanceVerdict:
    if margin >= -NOISE * max(scale, 1.0):
        status = "holds"
    elif margin < -tol:
        status = "fails"
    else:
        status = "inconclusive"
    return DominanceVerdict(status, float(margin), None if witness is None else float(witness), detail or {})


def mixture_grid(f: DistributionSpec, g: DistributionSpec, n: int = DEFAULT_GRID) -> np.ndarray:
    """Quantile-spaced points of the equal mixture of ``f`` and ``g``, plus atoms and their left limits."""
    lo = min(f.support_hint()[0], g.support_hint()[0])
    hi = max(f.support_hint()[1], g.support_hint()[1])
    p = (np.arange(n) + 0.5) / n
    # The mixture quantile lies between the two component quantiles. Points
    # only need to be roughly placed, so a loose bisection tolerance suffices.
    qf, qg = np.asarray(f.quantile(p), dtype=float), np.asarray(g.quantile(p), dtype=float)
    a = np.nextafter(np.minimum(qf, qg), -np.inf)
    b = np.maximum(qf, qg)
    for _ in range(60):
        if np.all(b - a <= 1e-9 * np.maximum(1.0, np.abs(b))):
            break
        mid = 0.5 * (a + b)
        mix = 0.5 * (np.asarray(f.cdf(mid)) + np.asarray(g.cdf(mid)))
        below = mix < p
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    pts = [b, [lo, hi]]
    atoms = np.concatenate([f.atoms(), g.atoms()])
    if atoms.size:
        pts.append(atoms)
        pts.append(np.nextafter(atoms, -np.inf))
    return np.unique(np.concatenate([np.asarray(x, dtype=float) for x in pts]))


def check_fsd(f: DistributionSpec, g: DistributionSpec, grid_size: int = DEFAULT_GRID,
              tol: float = DEFAULT_TOL) -> DominanceVerdict:
    """Verdict on ``f`` below ``g`` in first order: ``G(x) <= F(x)`` everywhere."""
    if grid_size < 16:
        raise DomainError("grid_size must be >= 16")
    x = mixture_grid(f, g, grid_size)
    slack = np.asarray(f.cdf(x)) - np.asarray(g.cdf(x))
    i = int(np.argmin(slack))
    return _classify(slack[i], x[i], tol, 1.0)


def _finite_mean(d: DistributionSpec) -> float:
    m = d.mean()
    if not math.isfinite(m):
        raise DivergenceError("distribution has an infinite mean")
    return m


def check_ssd(f: DistributionSpec, g: DistributionSpec, grid_size: int = DEFAULT_GRID,
              tol: float = DEFAULT_TOL) -> DominanceVerdict:
    """Verdict on ``f`` below ``g`` in second order via ``int_0^q F^-1 <= int_0^q G^-1``.

    The witness is the probability level ``q`` with the smallest slack.
    """
    if grid_size < 16:
        raise DomainError("grid_size must be >= 16")
    scale = max(abs(_finite_mean(f)), abs(_finite_mean(g)))
    q = np.arange(1, grid_size + 1) / grid_size
    extra = [np.asarray(d.cdf(d.atoms())) for d in (f, g) if d.atoms().size]
    if extra:
        q = np.concatenate([q] + extra)
    q = np.unique(q[(q > 0) & (q <= 1)])
    slack = np.asarray(g.partial_expectation(q)) - np.asarray(f.partial_expectation(q))
    i = int(np.argmin(slack))
    return _classify(slack[i], q[i], tol, scale)


def _second_moment(d: DistributionSpec) -> float:
    m2 = d.second_moment()
    if not math.isfinite(m2):
        raise DivergenceError("distribution has an infinite second moment")
    return m2


def _double_integral_trapezoid(d: DistributionSpec, x: np.ndarray) -> np.ndarray:
    """``int_0^eta int_0^t F`` by trapezoid of the trapezoid of the cdf on ``x`` (starting at 0)."""
    fx = np.asarray(d.cdf(x), dtype=float)
    dx = np.diff(x)
    once = np.concatenate([[0.0], np.cumsum(0.5 * dx * (fx[1:] + fx[:-1]))])
    return np.concatenate([[0.0], np.cumsum(0.5 * dx * (once[1:] + once[:-1]))])


def check_tsd(f: DistributionSpec, g: DistributionSpec, grid_size: int = DEFAULT_GRID,
              tol: float = DEFAULT_TOL, method: str = "closed") -> DominanceVerdict:
    """Verdict on ``g`` below ``f`` in third order via ``int int F <= int int G`` for every ``eta``.

    The double integral of a cdf equals half the second lower partial moment,
    evaluated in closed form (``method="closed"``) or by nested trapezoids on a
    fine uniform grid (``method="trapezoid"``). Beyond both supports the
    difference is affine in ``eta`` with slope ``E_F - E_G``; that tail is
    checked analytically, so a dominance that only holds on the supports is
    reported as failing. The result on the supports alone is kept in
    ``detail["on_support"]``.
    """
    if grid_size < 16:
        raise DomainError("grid_size must be >= 16")
    m2f, m2g = _second_moment(f), _second_moment(g)
    mf, mg = _finite_mean(f), _finite_mean(g)
    scale = max(m2f, m2g, 1e-300)
    lo = min(f.support_hint()[0], g.support_hint()[0])
    hi = max(f.support_hint()[1], g.support_hint()[1])

    if method == "closed":
        eta = mixture_grid(f, g, grid_size)
        slack = 0.5 * (np.asarray(g.lower_partial_moment(eta, 2)) - np.asarray(f.lower_partial_moment(eta, 2)))
    elif method == "trapezoid":
        if lo < 0:
            raise DomainError("trapezoid route needs nonnegative support")
        eta = np.linspace(0.0, hi, 64 * grid_size + 1)
        slack = _double_integral_trapezoid(g, eta) - _double_integral_trapezoid(f, eta)
    else:
        raise DomainError(f"unknown TSD method {method!r}")

    i = int(np.argmin(slack))
    on_support = _classify(slack[i], eta[i], tol, scale)

    # Affine tail: D(eta) = eta (E_F - E_G) + (E_G[X^2] - E_F[X^2]) / 2 beyond both supports.
    slope = mf - mg
    intercept = 0.5 * (m2g - m2f)
    tail_margin, tail_witness = math.inf, None
    if slope < -tol:
        root = -intercept / slope
        tail_witness = max(root, hi) + 1.0
        tail_margin = slope * tail_witness + intercept
        if method == "closed":
            tail_margin = 0.5 * float(g.lower_partial_moment(tail_witness, 2) - f.lower_partial_moment(tail_witness, 2))
    elif abs(slope) <= tol:
        tail_margin = intercept
        tail_witness = hi

    detail = {"on_support": on_support.status, "on_support_margin": on_support.margin,
              "mean_slack": slope, "method": method}
    if tail_margin < slack[i]:
        return _classify(tail_margin, tail_witness, tol, scale, detail)
    return _classify(slack[i], eta[i], tol, scale, detail)


def check_order(family: OrderFamily, lower: DistributionSpec, upper: DistributionSpec,
                grid_size: int = DEFAULT_GRID, tol: float = DEFAULT_TOL) -> DominanceVerdict:
    """Uniform orientation: verdict on ``lower`` being dominated by ``upper`` in ``family``."""
    family = OrderFamily.parse(family)
    if family is OrderFamily.FSD:
        return check_fsd(lower, upper, grid_size, tol)
    if family is OrderFamily.SSD:
        return check_ssd(lower, upper, grid_size, tol)
    return check_tsd(upper, lower, grid_size, tol)


def single_crossing_from_above(f: Callable, g: Callable, grid) -> bool:
    """True iff ``f - g`` changes sign exactly once on ``grid``, from positive to negative.

    Points where both functions are negligibly small relative to their peak
    are ignored, so underflow in the far tails does not create spurious signs.
    """
    grid = np.asarray(grid, dtype=float)
    fv = np.asarray(f(grid), dtype=float)
    gv = np.asarray(g(grid), dtype=float)
    d = fv - gv
    peak = max(float(np.max(np.abs(fv))), float(np.max(np.abs(gv))), 1e-300)
    signs = np.sign(d[np.abs(d) > 1e-12 * peak])
    if signs.size == 0:
        return False
    changes = int(np.count_nonzero(np.diff(signs)))
    return changes == 1 and signs[0] > 0
