"""Cost-efficient and robust cost-efficient payoffs under model ambiguity."""

from .distributions import Empirical, Exponential, Lognormal, TwoPoint, Uniform01
from .efficiency import (
    Payoff,
    efficient_payoff,
    figure1_curves,
    price,
    robust_efficient_payoff,
    tsd_counterexample,
)
from .errors import (
    ConvergenceError,
    DomainError,
    HypothesisViolated,
    NotCovered,
    PreconditionError,
    RobustPayoffError,
    Unsupported,
)
from .markets import (
    DriftHalfLine,
    DriftVolRectangle,
    EsscherSet,
    MarketQ,
    PhysicalLognormal,
    least_favorable,
    likelihood_ratio_drift,
)
from .orders import OrderFamily, check_fsd, check_order, check_ssd, check_tsd
from .portfolio import RduProblem, equivalence_audit, rdu_optimal, rationalize_utility, robust_rdu_solve

__version__ = "0.1.0"

__all__ = [
    "Empirical", "Exponential", "Lognormal", "TwoPoint", "Uniform01",
    "Payoff", "efficient_payoff", "figure1_curves", "price", "robust_efficient_payoff", "tsd_counterexample",
    "ConvergenceError", "DomainError", "HypothesisViolated", "NotCovered", "PreconditionError",
    "RobustPayoffError", "Unsupported",
    "DriftHalfLine", "DriftVolRectangle", "EsscherSet", "MarketQ", "PhysicalLognormal",
    "least_favorable", "likelihood_ratio_drift",
    "OrderFamily", "check_fsd", "check_order", "check_ssd", "check_tsd",
    "RduProblem", "equivalence_audit", "rdu_optimal", "rationalize_utility", "robust_rdu_solve",
]
