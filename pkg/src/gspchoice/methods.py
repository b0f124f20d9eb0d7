"""Uniform fit/predict interface over every estimation method."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import gpt
from .choice_matrix import predict
from .core import ChoiceModel, EmpiricalDistribution, OfferSet
from .enumerative_rb import fit_rank_based
from .halo_mnl import InteractionMatrix, fit_halo_detailed, halo_probabilities
from .master import LossKind, kl_loss, l1_loss

METHODS = ("gpt-r", "gpt-i", "gpt-ic", "rb-r", "halo-mnl")


@dataclass(frozen=True)
class MethodSpec:
    """Which estimator to run and with which knobs."""

    name: str
    loss: LossKind = LossKind.KL
    gamma: int = 10
    delta: int = 20
    significance: float = 0.05
    seed: int = 0
    max_iterations: int = 200
    rb_route: str = "auto"

    def __post_init__(self) -> None:
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {', '.join(METHODS)}")
        object.__setattr__(self, "loss", LossKind(self.loss))
        if self.name in ("rb-r", "halo-mnl") and self.loss is not LossKind.KL:
            raise ValueError(f"{self.name} is fitted by maximum likelihood; loss must be kl")

    def gpt_config(self) -> gpt.GptConfig:
        return gpt.GptConfig.preset(
            self.name,
            gamma=self.gamma,
            delta=self.delta,
            loss_kind=self.loss,
            significance=self.significance,
            rng_seed=self.seed,
            max_iterations=self.max_iterations,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.name,
            "loss": self.loss.value,
            "gamma": self.gamma,
            "delta": self.delta,
            "significance": self.significance,
            "seed": self.seed,
            "max_iterations": self.max_iterations,
        }


@dataclass(frozen=True)
class FittedMethod:
    """A trained estimator; ``model`` is a behavior mixture or a Halo-MNL matrix."""

    spec: MethodSpec
    model: ChoiceModel | InteractionMatrix
    objective: float
    iterations: int
    details: dict[str, Any] = field(default_factory=dict)

    def predict(self, offer_sets: Sequence[OfferSet], n_products: int) -> np.ndarray:
        if isinstance(self.model, InteractionMatrix):
            return halo_probabilities(self.model, offer_sets)
        return predict(self.model, offer_sets, n_products)


def fit_method(spec: MethodSpec, emp: EmpiricalDistribution) -> FittedMethod:
    if spec.name.startswith("gpt"):
        res = gpt.fit_with_trace(emp, spec.gpt_config())
        return FittedMethod(spec, res.model, res.objective, res.iterations,
                            {"stop_reason": res.stop_reason, "n_behaviors": len(res.model)})
    if spec.name == "rb-r":
        model, sol, route = fit_rank_based(emp, spec.rb_route)
        return FittedMethod(spec, model, sol.objective, sol.iterations,
                            {"route": route, "n_behaviors": len(model)})
    fit = fit_halo_detailed(emp)
    x = halo_probabilities(fit.matrix, emp.offer_sets)
    return FittedMethod(spec, fit.matrix, kl_loss(x, emp), fit.iterations,
                        {"converged": fit.converged, "grad_norm": fit.grad_norm})


def training_errors(fitted: FittedMethod, emp: EmpiricalDistribution) -> dict[str, float]:
    x = fitted.predict(emp.offer_sets, emp.n_products)
    return {"train_l1": l1_loss(x, emp), "train_kl": kl_loss(x, emp)}


__all__ = ["METHODS", "FittedMethod", "MethodSpec", "fit_method", "training_errors"]
