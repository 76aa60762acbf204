"""Numerical kernels: normal functions, adaptive quadrature, root finding, concave envelopes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

from .errors import BracketError, ConvergenceError, DivergenceError, DomainError

__all__ = [
    "QuadratureSpec",
    "DEFAULT_QUADRATURE",
    "PiecewiseLinearFn",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "integrate",
    "find_root",
    "bracket_log_grid",
    "concave_envelope",
]

# Hard cap on integrand evaluations per call; guards against non-integrable input.
_MAX_EVALUATIONS = 4_000_000
_INITIAL_PANELS = 8


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy settings for :func:`integrate` and probability-coordinate expectations.

    ``tail_cut`` is the probability mass trimmed from each end when an
    unbounded domain is mapped onto ``[tail_cut, 1 - tail_cut]``.
    """

    rel_tol: float = 1e-10
    max_depth: int = 60
    tail_cut: float = 1e-12

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if not 0 < self.tail_cut < 1e-3:
            raise DomainError(f"tail_cut must lie in (0, 1e-3), got {self.tail_cut}")
        if self.max_depth < 1:
            raise DomainError(f"max_depth must be >= 1, got {self.max_depth}")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """Linear interpolant through ``(knots[i], values[i])``.

    Evaluation outside ``[knots[0], knots[-1]]`` raises :class:`DomainError`.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise DomainError("need at least two knots")
        if values.shape != knots.shape:
            raise DomainError("knots and values must have the same length")
        if not np.all(np.diff(knots) > 0):
            raise DomainError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.knots[0]) or np.any(x > self.knots[-1]):
            raise DomainError(
                f"evaluation outside [{self.knots[0]}, {self.knots[-1]}]"
            )
        out = np.interp(x, self.knots, self.values)
        return float(out) if out.ndim == 0 else out

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)


def std_normal_cdf(x):
    """Standard normal distribution function; saturates at 0 and 1."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("normal quantile requires p in (0, 1)")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def _as_vectorized(f: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def g(x: np.ndarray) -> np.ndarray:
        try:
            y = np.asarray(f(x), dtype=float)
            if y.shape == x.shape:
                return y
        except (TypeError, ValueError):
            pass
        return np.array([float(f(float(v))) for v in x])

    return g


def integrate(f: Callable, a: float, b: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Adaptive Simpson quadrature of ``f`` over ``[a, b]``.

    Intervals are refined breadth first, so ``f`` is evaluated on whole numpy
    arrays; scalar-only callables are wrapped automatically. The local test
    is the classical ``|S2 - S1| <= 15 tol`` with the tolerance distributed in
    proportion to interval width and measured against an estimate of
    ``int |f|``; refinement also stops once the summed error estimate of all
    intervals fits the global budget. Raises :class:`ConvergenceError` (carrying the best estimate)
    when an interval needs more than ``spec.max_depth`` bisections.
    """
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise DomainError(f"integration bounds must be finite with a < b, got [{a}, {b}]")
    g = _as_vectorized(f)
    width = b - a

    edges = np.linspace(a, b, _INITIAL_PANELS + 1)
    left, right = edges[:-1], edges[1:]
    mid = 0.5 * (left + right)
    vals = g(np.concatenate([left, mid, right]))
    _check_finite(vals)
    fl, fm, fr = np.split(vals, 3)
    whole = (right - left) / 6.0 * (fl + 4.0 * fm + fr)
    depth = 0
    n_eval = vals.size

    accepted: list[float] = []
    accepted_abs = 0.0
    accepted_err = 0.0
    while left.size:
        ml = 0.5 * (left + mid)
        mr = 0.5 * (mid + right)
        new = g(np.concatenate([ml, mr]))
        _check_finite(new)
        n_eval += new.size
        fml, fmr = np.split(new, 2)
        h = right - left
        s_left = h / 12.0 * (fl + 4.0 * fml + fm)
        s_right = h / 12.0 * (fm + 4.0 * fmr + fr)
        refined = s_left + s_right
        delta = refined - whole

        abs_mass = h / 12.0 * (np.abs(fl) + 4 * np.abs(fml) + 2 * np.abs(fm) + 4 * np.abs(fmr) + np.abs(fr))
        budget = spec.rel_tol * max(accepted_abs + float(np.sum(abs_mass)), np.finfo(float).tiny)
        err = np.abs(delta) / 15.0
        # Local test first; then a global one so endpoint singularities, whose
        # local error shrinks slower than the interval width, still terminate.
        # The global test uses the raw difference and skips the Richardson
        # correction, since the 1/15 factor assumes a smooth integrand.
        ok = err <= budget * h / width
        if np.any(ok):
            contrib = refined[ok] + delta[ok] / 15.0
            accepted.extend(contrib.tolist())
            accepted_abs += float(np.sum(np.abs(contrib)))
            accepted_err += float(np.sum(err[ok]))
        bad = ~ok
        if np.any(bad) and accepted_err + float(np.sum(np.abs(delta[bad]))) <= budget:
            accepted.extend(refined[bad].tolist())
            break
        if not np.any(bad):
            break
        depth += 1
        estimate = math.fsum(accepted) + float(np.sum(refined[bad]))
        if depth > spec.max_depth or n_eval > _MAX_EVALUATIONS:
            raise ConvergenceError(
                f"adaptive Simpson did not converge within depth {spec.max_depth}",
                estimate=estimate,
                error=float(np.sum(np.abs(delta[bad]))),
            )
        l_b, m_b, r_b = left[bad], mid[bad], right[bad]
        left = np.concatenate([l_b, m_b])
        right = np.concatenate([m_b, r_b])
        mid = np.concatenate([ml[bad], mr[bad]])
        fl_new = np.concatenate([fl[bad], fm[bad]])
        fr_new = np.concatenate([fm[bad], fr[bad]])
        fm = np.concatenate([fml[bad], fmr[bad]])
        whole = np.concatenate([s_left[bad], s_right[bad]])
        fl, fr = fl_new, fr_new
    return math.fsum(accepted)


def _check_finite(vals: np.ndarray) -> None:
    if not np.all(np.isfinite(vals)):
        raise DivergenceError("integrand is not finite on the integration interval")


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
              method: str = "brent") -> float:
    """Root of ``f`` inside a sign-change bracket ``[lo, hi]``.

    ``method="bisect"`` runs plain bisection; the default uses Brent's method,
    which keeps the bracket but accelerates with secant/inverse-quadratic steps.
    """
    lo, hi = float(lo), float(hi)
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = float(f(lo)), float(f(hi))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")
    if method == "bisect":
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = float(f(mid))
            if fm == 0.0:
                return mid
            if (fm < 0) == (flo < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        return 0.5 * (lo + hi)
    if method != "brent":
        raise DomainError(f"unknown root-finding method {method!r}")
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def bracket_log_grid(f: Callable[[float], float], lo: float = 1e-12, hi: float = 1e12,
                     n: int = 97) -> tuple[float, float]:
    """First adjacent pair on a log-spaced grid of ``[lo, hi]`` where ``f`` changes sign."""
    grid = np.geomspace(lo, hi, n)
    prev_x, prev_f = grid[0], float(f(grid[0]))
    if prev_f == 0.0:
        return prev_x, prev_x
    for x in grid[1:]:
        fx = float(f(x))
        if math.isfinite(prev_f) and math.isfinite(fx) and prev_f * fx <= 0:
            return prev_x, x
        prev_x, prev_f = x, fx
    raise BracketError(f"no sign change on the log grid [{lo}, {hi}]")


def concave_envelope(samples: PiecewiseLinearFn) -> PiecewiseLinearFn:
    """Smallest concave function above the sample points, evaluated on the same knots.

    Computed as the upper hull of the points by Andrew's monotone chain.
    """
    x, y = samples.knots, samples.values
    if x.size < 3:
        raise DomainError("concave envelope needs at least three knots")
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    idx = np.asarray(hull)
    env = np.interp(x, x[idx], y[idx])
    # Interpolation can round a contact point just below its sample.
    env = np.maximum(env, y)
    return PiecewiseLinearFn(x, env)
