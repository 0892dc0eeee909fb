"""Sell-or-compute economics and tooling for PV plants that lease spare compute nodes."""

from .economics import (
    InstanceType,
    Tariff,
    annual_payback,
    breakeven_alpha,
    builtin_catalog,
    compute_revenue_rate,
    lookup,
    net_revenue,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataFormatError,
    DomainError,
    NumericalError,
    SunleaseError,
)
from .solar import GeoLocation, PlantConfig, annual_energy, psh

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvergenceError", "DataFormatError", "DomainError", "GeoLocation", "InstanceType",
    "NumericalError", "PlantConfig", "SunleaseError", "Tariff", "annual_energy", "annual_payback",
    "breakeven_alpha", "builtin_catalog", "compute_revenue_rate", "lookup", "net_revenue", "psh",
]
