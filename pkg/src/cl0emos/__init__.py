"""Censored-logistic EMOS post-processing of ensemble solar irradiance forecasts."""
from .data import Archive, EnsembleStats, ForecastCase, GroupSpec, compute_stats, ingest
from .dist import Cl0Params
from .emos import EmosCoefficients, LinkVariant, estimate, link
from .training import TrainingScheme

__version__ = "0.1.0"

__all__ = ["Archive", "Cl0Params", "EmosCoefficients", "EnsembleStats", "ForecastCase", "GroupSpec",
           "LinkVariant", "TrainingScheme", "compute_stats", "estimate", "ingest", "link"]
