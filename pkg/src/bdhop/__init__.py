"""Birth-death-hopping individual-based model, its master equation and mean-field limit."""

from bdhop.measure import (
    Configuration,
    DensityField,
    SignedSiteMeasure,
    SiteSpace,
    density_of,
    entropy_vs_activity,
    kl_divergence,
    phi,
    tv_norm,
)
from bdhop.rates import (
    ConstantRateModel,
    ExampleModelParams,
    ExampleRateModel,
    PerturbedRateModel,
    RateModel,
    check_db_n,
    density_rates,
    make_example_model,
    meanfield_rhs,
)

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "ConstantRateModel",
    "DensityField",
    "ExampleModelParams",
    "ExampleRateModel",
    "PerturbedRateModel",
    "RateModel",
    "SignedSiteMeasure",
    "SiteSpace",
    "check_db_n",
    "density_of",
    "density_rates",
    "entropy_vs_activity",
    "kl_divergence",
    "make_example_model",
    "meanfield_rhs",
    "phi",
    "tv_norm",
]
