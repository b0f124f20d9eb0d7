"""Rank-based (RUM-complete) baseline and the Loss of Rationality diagnostic.

The optimal KL fit over *all* rational rankings measures how much of the data
no random-utility model can explain. Two routes reach that optimum:

* ``enumerate``: list every ordered prefix long enough to decide the choice on
  each training set, then solve one master problem;
* ``pricing``: column generation whose pricing step finds the best ranking
  exactly by dynamic programming over subsets of already-ranked products.

The routes agree on small instances; ``auto`` picks enumeration while the
column count stays small.
"""

from __future__ import annotations

import itertools
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .choice_matrix import CellIndex, behavior_column
from .core import Behavior, ChoiceModel, EmpiricalDistribution, OfferSet, ProductCatalog
from .master import LossKind, MasterSolution, RestrictedMaster

DEFAULT_CAP = 10**7
DEFAULT_THRESHOLD = 0.008
AUTO_ENUMERATION_LIMIT = 20_000


class EnumerationCapError(RuntimeError):
    """The ranking enumeration would exceed the configured cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"enumeration needs {count:,} rankings, above the cap of {cap:,}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class RationalityReport:
    lor: float
    n_columns: int
    is_irrational_flag: bool
    threshold: float = DEFAULT_THRESHOLD
    method: str = "enumerate"

    def to_dict(self) -> dict:
        return {
            "lor": self.lor,
            "n_columns": self.n_columns,
            "threshold": self.threshold,
            "irrational": self.is_irrational_flag,
            "method": self.method,
        }


def _default_cap() -> int:
    raw = os.environ.get("GSPCHOICE_ENUM_CAP")
    return int(raw) if raw else DEFAULT_CAP


def prefix_length(offer_sets: Sequence[OfferSet], n_products: int) -> int:
    """``min(m + 1, N)`` where ``m`` is the most products missing from any set."""
    missing = max(n_products - len(s) for s in offer_sets)
    return min(missing + 1, n_products)


def enumeration_count(offer_sets: Sequence[OfferSet], n_products: int) -> int:
    return math.perm(n_products, prefix_length(offer_sets, n_products))


def enumerate_rankings(offer_sets: Sequence[OfferSet], catalog: ProductCatalog | int,
                       cap: int | None = None) -> list[Behavior]:
    """Rational prefixes that realize every ranking-induced choice pattern.

    A product ranked below position ``m + 1`` can never be chosen when at most
    ``m`` products are missing, so prefixes of that length suffice.
    """
    n = catalog.n_products if isinstance(catalog, ProductCatalog) else int(catalog)
    cap = _default_cap() if cap is None else cap
    count = enumeration_count(offer_sets, n)
    if count > cap:
        raise EnumerationCapError(count, cap)
    length = prefix_length(offer_sets, n)
    everything = frozenset(range(n))
    return [Behavior(p, everything - set(p), 1) for p in itertools.permutations(range(n), length)]


def best_ranking(alpha: np.ndarray, membership: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Ranking maximizing ``sum_m alpha[m, top available item of S_m]``.

    Dynamic program over the set ``U`` of products already placed: appending
    ``j`` to ``U`` decides every set that offers ``j`` and misses all of ``U``.
    Runs in ``O(2^N N M)``.
    """
    n_sets, n = membership.shape
    weights = np.where(membership, alpha, 0.0)
    masks = np.zeros(n_sets, dtype=np.int64)
    for j in range(n):
        masks |= membership[:, j].astype(np.int64) << j
    size = 1 << n
    value = np.full(size, -np.inf)
    value[0] = 0.0
    came_from = np.full(size, -1, dtype=np.int64)
    states = np.arange(size, dtype=np.int64)
    popcount = np.array([bin(u).count("1") for u in range(size)])
    for layer in range(n):
        layer_states = states[popcount == layer]
        disjoint = (masks[None, :] & layer_states[:, None]) == 0
        gains = disjoint.astype(float) @ weights
        base = value[layer_states]
        for j in range(n):
            bit = np.int64(1) << j
            free = (layer_states & bit) == 0
            src = layer_states[free]
            dst = src | bit
            cand = base[free] + gains[free, j]
            better = cand > value[dst]
            value[dst[better]] = cand[better]
            came_from[dst[better]] = j
    order = []
    u = size - 1
    while u:
        j = int(came_from[u])
        order.append(j)
        u &= ~(1 << j)
    return tuple(reversed(order)), float(value[size - 1])


def _distinct(behaviors: Sequence[Behavior], offer_sets: Sequence[OfferSet]) -> list[Behavior]:
    seen = {}
    for b in behaviors:
        seen.setdefault(behavior_column(b, offer_sets).support, b)
    return list(seen.values())


def _fit_enumerate(emp: EmpiricalDistribution, cap: int | None) -> tuple[list[Behavior], MasterSolution]:
    behaviors = _distinct(enumerate_rankings(emp.offer_sets, emp.n_products, cap), emp.offer_sets)
    master = RestrictedMaster(emp, LossKind.KL)
    master.add_behaviors(behaviors)
    return behaviors, master.solve()


def _fit_pricing(emp: EmpiricalDistribution, gap_tol: float = 1e-9,
                 max_rounds: int = 5_000) -> tuple[list[Behavior], MasterSolution]:
    n = emp.n_products
    membership = emp.membership()
    everything = list(range(n))
    behaviors = [Behavior((k, *[j for j in everything if j != k])) for k in everything]
    master = RestrictedMaster(emp, LossKind.KL)
    master.add_behaviors(behaviors)
    sol = master.solve()
    known = {behavior_column(b, emp.offer_sets).support for b in behaviors}
    for _ in range(max_rounds):
        # By convexity, the best ranking's score minus 1 bounds the distance
        # between the current objective and the optimum over all rankings.
        ranking, score = best_ranking(sol.duals.alpha, membership)
        if score - 1.0 <= gap_tol:
            break
        b = Behavior(ranking)
        col = behavior_column(b, emp.offer_sets)
        if col.support in known:
            # The master is already optimal over this column; what is left
            # is round-off.
            break
        known.add(col.support)
        behaviors.append(b)
        master.add_columns([col])
        sol = master.solve(warm_start=sol.weights)
    return behaviors, sol


def fit_rank_based(emp: EmpiricalDistribution, method: str = "auto",
                   cap: int | None = None) -> tuple[ChoiceModel, MasterSolution, str]:
    """KL-optimal distribution over rational rankings.

    Returns the fitted model (zero-weight rankings dropped), the master
    solution and the route actually used.
    """
    if method == "auto":
        limit = int(os.environ.get("GSPCHOICE_ENUM_AUTO_LIMIT", AUTO_ENUMERATION_LIMIT))
        method = "enumerate" if enumeration_count(emp.offer_sets, emp.n_products) <= limit else "pricing"
    if method == "enumerate":
        behaviors, sol = _fit_enumerate(emp, cap)
    elif method == "pricing":
        behaviors, sol = _fit_pricing(emp)
    else:
        raise ValueError(f"unknown rank-based fitting route {method!r}")
    model = ChoiceModel.from_unnormalized(behaviors, sol.weights).pruned(1e-9)
    return model, sol, method


def loss_of_rationality(emp: EmpiricalDistribution, threshold: float = DEFAULT_THRESHOLD,
                        method: str = "auto", cap: int | None = None) -> RationalityReport:
    """Optimal KL objective of the rank-based model, flagged against ``threshold``."""
    _, sol, used = fit_rank_based(emp, method, cap)
    lor = max(sol.objective, 0.0)
    return RationalityReport(lor, len(sol.weights), lor > threshold, threshold, used)


def kl_of_model(model: ChoiceModel, emp: EmpiricalDistribution) -> float:
    """KL objective of an arbitrary model on ``emp`` (for audits)."""
    from .choice_matrix import predict
    from .master import kl_loss

    return kl_loss(predict(model, emp.offer_sets, emp.n_products), emp)


__all__ = [
    "CellIndex",
    "EnumerationCapError",
    "RationalityReport",
    "best_ranking",
    "enumerate_rankings",
    "enumeration_count",
    "fit_rank_based",
    "kl_of_model",
    "loss_of_rationality",
    "prefix_length",
]
