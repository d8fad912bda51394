"""History-restricted MSM excursion-effect estimation.

Thin bindings over the C++ core: panel ingestion, availability-respecting
regime expansion, IPW and multiply-robust fitting with cluster-robust
inference, and the synthetic benchmark scenarios.
"""

from ._core import (
    ConfigError,
    DataError,
    ExpandedTable,
    Fit,
    NumericError,
    Panel,
    WorkingModel,
    enumerate_regimes,
    expand,
    feedback_macro_difference,
    fit_conditional,
    fit_expanded,
    fit_ipw,
    fit_mr,
    forced_regime_mean,
    ip_weight,
    make_saturated,
    run_replicates,
    simulate_panel,
    true_beta,
    validate_positivity,
)

__all__ = [
    "ConfigError",
    "DataError",
    "ExpandedTable",
    "Fit",
    "NumericError",
    "Panel",
    "WorkingModel",
    "enumerate_regimes",
    "expand",
    "feedback_macro_difference",
    "fit_conditional",
    "fit_expanded",
    "fit_ipw",
    "fit_mr",
    "forced_regime_mean",
    "ip_weight",
    "make_saturated",
    "run_replicates",
    "simulate_panel",
    "true_beta",
    "validate_positivity",
]

__version__ = "0.1.0"
