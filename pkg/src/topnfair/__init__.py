"""Capacity-constrained re-ranking with multi-round Top-N Fairness."""

from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .model import FairnessLedger, Instance, OriginalLists, RatingMatrix, ServiceCatalog, build_original_lists
from .simulator import MetricsLog, NewUser, ScenarioConfig, run_scenario

__all__ = [
    "Dataset",
    "FairnessLedger",
    "Instance",
    "MetricsLog",
    "NewUser",
    "OriginalLists",
    "RatingMatrix",
    "ScenarioConfig",
    "ServiceCatalog",
    "SyntheticSpec",
    "build_original_lists",
    "generate_synthetic",
    "load_dataset",
    "run_scenario",
]
