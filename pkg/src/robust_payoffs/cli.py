"""Command-line front end: one JSON scenario in, a CSV and a JSON summary out."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import efficiency, portfolio
from .distributions import Empirical, Exponential, Lognormal, TwoPoint, Uniform01
from .errors import (
    DomainError,
    HypothesisViolated,
    PreconditionError,
    RobustPayoffError,
)
from .markets import (
    DriftHalfLine,
    DriftVolRectangle,
    EsscherSet,
    MarketQ,
    PhysicalLognormal,
    black_scholes_call,
    esscher_family,
    likelihood_ratio_general,
)
from .orders import OrderFamily, check_order, mixture_grid

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 1

COMMANDS = ("price", "efficient", "robust-efficient", "order-check", "rdu", "rationalize",
            "figure1", "tsd-counterexample", "replicate")

TOP_KEYS = {"market", "ambiguity", "target", "orderFamily", "measure", "rdu", "payoff", "lower", "upper",
            "rationalize", "replicate", "figure1", "counterexample", "outputs", "seed", "tolerances"}

DEFAULT_MARKET = {"s0": 1.0, "r": 0.0, "T": 1.0, "s": 0.2}
DEFAULT_TOLERANCES = {"tol": 1e-9, "grid": 2048, "curvePoints": 257}
DEFAULT_OUTPUTS = ["csv", "summary"]


class ConfigError(DomainError):
    """Scenario file does not validate."""


# Literal parsing


def _take(obj, allowed: dict, where: str) -> dict:
    """Merge ``obj`` onto defaults in ``allowed`` (None means required) and reject unknown keys."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    out = {}
    for key, default in allowed.items():
        if key in obj:
            out[key] = obj[key]
        elif default is None:
            raise ConfigError(f"{where} is missing required key {key!r}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _num(d: dict, key: str, where: str) -> float:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be a finite number")
    return float(v)


_DIST_FIELDS = {
    "Exponential": {"type": None, "rate": 1.0},
    "Lognormal": {"type": None, "logMean": None, "logStd": None},
    "Uniform01": {"type": None},
    "TwoPoint": {"type": None, "p0": None},
    "Empirical": {"type": None, "samples": None},
}


def parse_distribution(obj, where: str):
    """Returns ``(law, resolved_literal)``."""
    if not isinstance(obj, dict) or obj.get("type") not in _DIST_FIELDS:
        raise ConfigError(f"{where}.type must be one of {', '.join(_DIST_FIELDS)}")
    d = _take(obj, _DIST_FIELDS[obj["type"]], where)
    t = d["type"]
    if t == "Exponential":
        law = Exponential(_num(d, "rate", where))
    elif t == "Lognormal":
        law = Lognormal(_num(d, "logMean", where), _num(d, "logStd", where))
    elif t == "Uniform01":
        law = Uniform01()
    elif t == "TwoPoint":
        law = TwoPoint(_num(d, "p0", where))
    else:
        if not isinstance(d["samples"], list) or not d["samples"]:
            raise ConfigError(f"{where}.samples must be a non-empty list")
        law = Empirical.from_unsorted(np.asarray(d["samples"], dtype=float))
    return law, d


def parse_market(obj):
    d = _take(obj if obj is not None else {}, DEFAULT_MARKET, "market")
    m = MarketQ(*(_num(d, k, "market") for k in ("s0", "r", "T", "s")))
    return m, d


def parse_measure(obj, market: MarketQ):
    d = _take(obj if obj is not None else {}, {"mu": None, "sigma": market.s}, "measure")
    return PhysicalLognormal(_num(d, "mu", "measure"), _num(d, "sigma", "measure")), d


def parse_ambiguity(obj, market: MarketQ):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ConfigError("ambiguity.type is required (drift, drift-vol or esscher)")
    t = obj["type"]
    if t == "drift":
        d = _take(obj, {"type": None, "mu1": None}, "ambiguity")
        amb = DriftHalfLine(_num(d, "mu1", "ambiguity"))
    elif t == "drift-vol":
        d = _take(obj, {"type": None, "mu1": None, "mu2": None, "sigma1": None, "sigmaMax": market.s},
                  "ambiguity")
        amb = DriftVolRectangle(*(_num(d, k, "ambiguity") for k in ("mu1", "mu2", "sigma1", "sigmaMax")))
    elif t == "esscher":
        d = _take(obj, {"type": None, "hStar": None, "hMax": None, "z": "normal"}, "ambiguity")
        fam = esscher_family(str(d["z"]), market)
        amb = EsscherSet(_num(d, "hStar", "ambiguity"), _num(d, "hMax", "ambiguity"), fam)
    else:
        raise ConfigError(f"unknown ambiguity type {t!r}")
    amb.validate(market)
    return amb, d


def parse_family(tag):
    try:
        return OrderFamily.parse(tag)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(cfg) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    return cfg


# Output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=",", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_summary(path: Path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable, allow_nan=True)
        fh.write("\n")


# Commands. Each returns (csv_header, csv_rows, result_dict) and fills ``resolved``.


def _tol(resolved):
    return resolved["tolerances"]


def _stock_grid(market: MarketQ, n: int) -> np.ndarray:
    return np.asarray(market.stock_law_q.quantile((np.arange(n) + 0.5) / n))


def _payoff_rows(payoff, market, n):
    s = _stock_grid(market, n)
    return ["s", "payoff"], list(zip(s, np.asarray(payoff(s))))


def cmd_price(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market"))
    d = _take(cfg.get("payoff", {}), {"type": "call", "strike": 1.0}, "payoff")
    resolved["payoff"] = d
    k = _num(d, "strike", "payoff")
    kinds = {
        "call": lambda s: np.maximum(s - k, 0.0),
        "put": lambda s: np.maximum(k - s, 0.0),
        "forward": lambda s: s,
        "bond": lambda s: np.ones_like(s),
    }
    if d["type"] not in kinds:
        raise ConfigError(f"payoff.type must be one of {', '.join(kinds)}")
    payoff = efficiency.Payoff(kinds[d["type"]], False, label=d["type"])
    value = efficiency.price(payoff, market)
    est, se = efficiency.monte_carlo_price(payoff, market, seed=resolved["seed"])
    result = {"price": value, "monteCarlo": est, "monteCarloStdErr": se}
    if d["type"] == "call":
        result["blackScholes"] = float(black_scholes_call(market, k))
    header, rows = _payoff_rows(payoff, market, _tol(resolved)["curvePoints"])
    return header, rows, result


def cmd_efficient(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market"))
    measure, resolved["measure"] = parse_measure(cfg.get("measure"), market)
    target, resolved["target"] = parse_distribution(cfg.get("target", {"type": "Exponential"}), "target")
    ell = likelihood_ratio_general(measure, market)
    payoff = efficiency.efficient_payoff(target, ell, market)
    value = efficiency.price(payoff, market, mc_check=True, seed=resolved["seed"])
    header, rows = _payoff_rows(payoff, market, _tol(resolved)["curvePoints"])
    return header, rows, {"price": value, "ratioIncreasing": ell.increasing}


def cmd_robust_efficient(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market"))
    if "ambiguity" not in cfg:
        raise ConfigError("robust-efficient needs an ambiguity set")
    amb, resolved["ambiguity"] = parse_ambiguity(cfg["ambiguity"], market)
    target, resolved["target"] = parse_distribution(cfg.get("target", {"type": "Exponential"}), "target")
    family = parse_family(cfg.get("orderFamily", "FSD"))
    resolved["orderFamily"] = family.value
    tol = _tol(resolved)
    payoff, report = efficiency.robust_efficient_payoff(target, amb, family, market, tol=tol["tol"],
                                                        order_grid=tol["grid"])
    header, rows = _payoff_rows(payoff, market, tol["curvePoints"])
    return header, rows, report.as_dict()


def cmd_order_check(cfg, resolved):
    for key in ("lower", "upper"):
        if key not in cfg:
            raise ConfigError(f"order-check needs '{key}'")
    lower, resolved["lower"] = parse_distribution(cfg["lower"], "lower")
    upper, resolved["upper"] = parse_distribution(cfg["upper"], "upper")
    family = parse_family(cfg.get("orderFamily", "FSD"))
    resolved["orderFamily"] = family.value
    tol = _tol(resolved)
    verdict = check_order(family, lower, upper, tol["grid"], tol["tol"])
    x = mixture_grid(lower, upper, tol["curvePoints"])
    rows = list(zip(x, np.asarray(lower.cdf(x)), np.asarray(upper.cdf(x))))
    return ["x", "cdf_lower", "cdf_upper"], rows, verdict.as_dict()


def _rdu_setup(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market"))
    r = _take(cfg.get("rdu", {}), {"eta": 0.5, "gamma": 0.0, "x0": 1.0}, "rdu")
    resolved["rdu"] = r
    if "ambiguity" in cfg:
        amb, resolved["ambiguity"] = parse_ambiguity(cfg["ambiguity"], market)
        measure = PhysicalLognormal(amb.mu1, market.s)
    else:
        amb = None
        measure, resolved["measure"] = parse_measure(cfg.get("measure"), market)
    problem = portfolio.RduProblem(_num(r, "eta", "rdu"), _num(r, "gamma", "rdu"), _num(r, "x0", "rdu"),
                                   measure, market)
    sol = portfolio.robust_rdu_solve(problem, amb) if amb is not None else portfolio.rdu_optimal(problem)
    return market, sol


def cmd_rdu(cfg, resolved):
    market, sol = _rdu_setup(cfg, resolved)
    header, rows = _payoff_rows(sol.payoff, market, _tol(resolved)["curvePoints"])
    return header, rows, sol.as_dict()


def cmd_rationalize(cfg, resolved):
    market, sol = _rdu_setup(cfg, resolved)
    law = sol.payoff.laws.get("P*") or sol.payoff.laws["P"]
    c_default = float(law.quantile(0.5)) if law.continuous else 1.0
    d = _take(cfg.get("rationalize", {}), {"c": c_default}, "rationalize")
    resolved["rationalize"] = d
    ratio = sol.payoff.ratio
    ru = portfolio.rationalize_utility(sol.payoff, ratio, market, _num(d, "c", "rationalize"))
    y = ru.tabulated.knots
    rows = list(zip(y, ru.tabulated.values, ru.marginal))
    result = {"c": ru.c, "fittedExponent": ru.fitted_exponent, "rdu": sol.as_dict()}
    if sol.case_tag != "ConstantWealth":
        expected = 1.0 - 1.0 / sol.exponent
        ratio_vals = ru.derivative_ratio(expected)
        result["expectedExponent"] = expected
        result["derivativeRatioSpread"] = float(np.ptp(ratio_vals) / np.mean(ratio_vals))
    return ["y", "u", "marginal"], rows, result


def cmd_figure1(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market", {"s0": 1.0, "r": 0.0, "T": 1.0, "s": 0.9}))
    target, resolved["target"] = parse_distribution(cfg.get("target", {"type": "Exponential", "rate": 1.0}),
                                                    "target")
    d = _take(cfg.get("figure1", {}), {"mu1": [round(0.05 * i, 10) for i in range(1, 11)],
                                       "sGrid": {"lo": 0.01, "hi": 5.0, "n": 500}}, "figure1")
    g = _take(d["sGrid"], {"lo": 0.01, "hi": 5.0, "n": 500}, "figure1.sGrid")
    d["sGrid"] = g
    resolved["figure1"] = d
    s_grid = np.linspace(_num(g, "lo", "figure1.sGrid"), _num(g, "hi", "figure1.sGrid"), int(g["n"]))
    res = efficiency.figure1_curves(market, d["mu1"], target, s_grid)
    rows = []
    for mu1, pr in zip(res.mu1, res.prices):
        curve = res.curves[float(mu1)]
        rows.extend((mu1, pr, s, y) for s, y in zip(res.s_grid, curve))
    result = {"mu1": res.mu1, "prices": res.prices, "limitPrice": res.limit_price,
              "strictlyDecreasing": bool(np.all(np.diff(res.prices) < 0)),
              "maxSlope": {f"{m:g}": res.max_slope(m) for m in res.mu1}}
    return ["mu1", "price", "s", "normalized_payoff"], rows, result


def cmd_tsd_counterexample(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market", {
        "s0": efficiency.COUNTEREXAMPLE_MARKET.s0, "r": 0.0, "T": 1.0, "s": 0.1}))
    d = _take(cfg.get("counterexample", {}), {"p0": 1.0 / 3.0, "mu1": efficiency.COUNTEREXAMPLE_MU1},
              "counterexample")
    resolved["counterexample"] = d
    tol = _tol(resolved)
    result = efficiency.tsd_counterexample(_num(d, "p0", "counterexample"), market,
                                           _num(d, "mu1", "counterexample"), tol["grid"], tol["tol"])
    F, G = Uniform01(), TwoPoint(result["p0"])
    eta = np.linspace(0.0, 2.0, tol["curvePoints"])
    slack = 0.5 * (np.asarray(G.lower_partial_moment(eta, 2)) - np.asarray(F.lower_partial_moment(eta, 2)))
    return ["eta", "tsd_slack"], list(zip(eta, slack)), result


def cmd_replicate(cfg, resolved):
    market, resolved["market"] = parse_market(cfg.get("market"))
    target, resolved["target"] = parse_distribution(cfg.get("target", {"type": "Exponential"}), "target")
    if "ambiguity" in cfg:
        amb, resolved["ambiguity"] = parse_ambiguity(cfg["ambiguity"], market)
        family = parse_family(cfg.get("orderFamily", "FSD"))
        resolved["orderFamily"] = family.value
        payoff, _ = efficiency.robust_efficient_payoff(target, amb, family, market)
    else:
        measure, resolved["measure"] = parse_measure(cfg.get("measure"), market)
        payoff = efficiency.efficient_payoff(target, likelihood_ratio_general(measure, market), market)
    d = _take(cfg.get("replicate", {}), {"nStrikes": 256, "loLevel": 1e-4, "hiLevel": 1 - 1e-4}, "replicate")
    resolved["replicate"] = d
    n = int(d["nStrikes"])
    if n < 2:
        raise ConfigError("replicate.nStrikes must be at least 2")
    strikes = np.asarray(market.stock_law_q.quantile(np.linspace(_num(d, "loLevel", "replicate"),
                                                                 _num(d, "hiLevel", "replicate"), n)))
    port = efficiency.replicate_with_calls(payoff, strikes, market)
    result = {"cost": port.cost, "bond": port.bond, "forward": port.forward,
              "price": efficiency.price(payoff, market)}
    return ["strike", "calls"], list(zip(port.strikes, port.calls)), result


HANDLERS = {
    "price": cmd_price,
    "efficient": cmd_efficient,
    "robust-efficient": cmd_robust_efficient,
    "order-check": cmd_order_check,
    "rdu": cmd_rdu,
    "rationalize": cmd_rationalize,
    "figure1": cmd_figure1,
    "tsd-counterexample": cmd_tsd_counterexample,
    "replicate": cmd_replicate,
}


def run(config_path, command: str, out_dir, *, seed=None, tol=None, grid=None) -> int:
    """Execute one subcommand; returns the exit code."""
    out = Path(os.environ.get("ROBUST_PAYOFF_OUT") or out_dir or ".")
    resolved: dict = {}
    status, code, result, message = "ok", EXIT_OK, None, None
    header, rows = None, None
    try:
        cfg = load_config(config_path)
        tolerances = _take(cfg.get("tolerances", {}), DEFAULT_TOLERANCES, "tolerances")
        if tol is not None:
            tolerances["tol"] = tol
        if grid is not None:
            tolerances["grid"] = grid
        if not (tolerances["tol"] > 0 and int(tolerances["grid"]) >= 16 and int(tolerances["curvePoints"]) >= 2):
            raise ConfigError("tolerances need tol > 0, grid >= 16, curvePoints >= 2")
        resolved["tolerances"] = tolerances
        s = cfg.get("seed", efficiency.DEFAULT_SEED) if seed is None else seed
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        resolved["seed"] = s
        outputs = cfg.get("outputs", DEFAULT_OUTPUTS)
        if not isinstance(outputs, list) or set(outputs) - {"csv", "summary"}:
            raise ConfigError("outputs must be a list drawn from 'csv' and 'summary'")
        resolved["outputs"] = list(outputs)
        header, rows, result = HANDLERS[command](cfg, resolved)
    except HypothesisViolated as exc:
        status, code, message = "hypothesis-violated", EXIT_HYPOTHESIS, f"{exc} [condition: {exc.condition}]"
    except (DomainError, PreconditionError) as exc:
        status, code, message = "validation-error", EXIT_VALIDATION, str(exc)
    except RobustPayoffError as exc:
        status, code, message = "numerical-error", EXIT_NUMERIC, str(exc)

    out.mkdir(parents=True, exist_ok=True)
    outputs = resolved.get("outputs", DEFAULT_OUTPUTS)
    if header is not None and "csv" in outputs:
        write_csv(out / f"{command}.csv", header, rows)
    summary = {"command": command, "status": status, "config": resolved, "result": result}
    if message is not None:
        summary["message"] = message
        print(f"robust-payoffs {command}: {message}", file=sys.stderr)
    if "summary" in outputs:
        write_summary(out / f"{command}.summary.json", summary)
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are validation errors, not hypothesis failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-payoffs", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON scenario file")
    parser.add_argument("--out", help="output directory (ROBUST_PAYOFF_OUT takes precedence)")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    parser.add_argument("--tol", type=float, help="dominance tolerance")
    parser.add_argument("--grid", type=int, help="dominance grid size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.config, args.command, args.out, seed=args.seed, tol=args.tol, grid=args.grid)


if __name__ == "__main__":
    sys.exit(main())
