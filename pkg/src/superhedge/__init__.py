"""Super-hedging toolkit for finite filtered markets.

Measure families with explicit extreme points on finite filtered spaces,
super-martingale certification and optional decomposition with hedge
coefficients, and the extreme-point supremum price of terminal payoffs under
discrete geometric Brownian motion.
"""

from .errors import (
    ConfigError,
    InvariantViolation,
    OverflowLimit,
    SuperhedgeError,
    ValidationError,
)
from .finite_space import (
    DEFAULT_TOL,
    AdaptedProcess,
    AtomSpace,
    Filtration,
    Measure,
    RandomVariable,
    change_of_measure_cond_exp,
    conditional_expectation,
    masked_conditional_expectation,
    tv_metric,
)
from .measure_sets import (
    CanonicalMixing,
    MeasureSet,
    ProductMarket,
    ProductRegularSpec,
    TwoPointMeasureSpec,
    build_product_market,
    build_product_regular_set,
    canonical_mixing,
    closure_witness,
    conditional_zero_family,
    consistency_measure,
    mixture_measure,
    two_point_measure,
    uniform_alpha,
    unit_expectation_measure,
    zero_expectation_measure,
)
from .engine import (
    Decomposition,
    HedgeCertificate,
    SupermartingaleReport,
    class_K_generate,
    esssup_process,
    hedge_alpha,
    is_martingale,
    is_supermartingale,
    local_regularity_certificate,
    optional_decomposition,
    set_martingale,
    superhedge_supermartingale,
)
from .gbm import (
    GbmParams,
    PayoffSpec,
    centering_offset,
    evaluate_payoff,
    gross_return,
    increment_for_return,
    sample_increments,
    terminal_price,
)
from .pricer import (
    CandidateHedge,
    GridSpec,
    PricingCandidate,
    PricingResult,
    backward_induction_oracle,
    bound_sweep,
    hedge_from_price,
    objective,
    price_sup,
    step_weights,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptedProcess",
    "AtomSpace",
    "CandidateHedge",
    "CanonicalMixing",
    "ConfigError",
    "DEFAULT_TOL",
    "Decomposition",
    "Filtration",
    "GbmParams",
    "GridSpec",
    "HedgeCertificate",
    "InvariantViolation",
    "Measure",
    "MeasureSet",
    "OverflowLimit",
    "PayoffSpec",
    "PricingCandidate",
    "PricingResult",
    "ProductMarket",
    "ProductRegularSpec",
    "RandomVariable",
    "SuperhedgeError",
    "SupermartingaleReport",
    "TwoPointMeasureSpec",
    "ValidationError",
    "backward_induction_oracle",
    "bound_sweep",
    "build_product_market",
    "build_product_regular_set",
    "canonical_mixing",
    "centering_offset",
    "change_of_measure_cond_exp",
    "class_K_generate",
    "closure_witness",
    "conditional_expectation",
    "conditional_zero_family",
    "consistency_measure",
    "esssup_process",
    "evaluate_payoff",
    "gross_return",
    "hedge_alpha",
    "hedge_from_price",
    "increment_for_return",
    "is_martingale",
    "is_supermartingale",
    "local_regularity_certificate",
    "masked_conditional_expectation",
    "mixture_measure",
    "objective",
    "optional_decomposition",
    "price_sup",
    "sample_increments",
    "set_martingale",
    "step_weights",
    "superhedge_supermartingale",
    "terminal_price",
    "tv_metric",
    "two_point_measure",
    "uniform_alpha",
    "unit_expectation_measure",
    "zero_expectation_measure",
]
