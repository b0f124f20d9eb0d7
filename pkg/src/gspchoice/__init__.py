"""Estimate mixtures of partially-ranked, possibly irrational customer behaviors
from assortment-level choice data by column generation."""

from __future__ import annotations

from .core import (
    NO_PURCHASE,
    Behavior,
    ChoiceModel,
    EmpiricalDistribution,
    ModelError,
    OfferSet,
    ProductCatalog,
    Transaction,
    choice_distribution,
    spurious_interaction_count,
)
from .choice_matrix import empirical, predict
from .gpt import GptConfig, fit
from .enumerative_rb import loss_of_rationality
from .halo_mnl import InteractionMatrix, fit_halo, halo_probability

__version__ = "0.1.0"

__all__ = [
    "NO_PURCHASE",
    "Behavior",
    "ChoiceModel",
    "EmpiricalDistribution",
    "GptConfig",
    "InteractionMatrix",
    "ModelError",
    "OfferSet",
    "ProductCatalog",
    "Transaction",
    "__version__",
    "choice_distribution",
    "empirical",
    "fit",
    "fit_halo",
    "halo_probability",
    "loss_of_rationality",
    "predict",
    "spurious_interaction_count",
]
