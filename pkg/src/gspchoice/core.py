"""Domain types and single-behavior choice semantics.

Products are dense integer ids ``0..N-1`` with ``0`` the no-purchase option.
A :class:`Behavior` is a partially-ranked preference: a strictly ranked
prefix, an indifference set whose members tie below the prefix, and an
irrationality level ``i``. Faced with an offer set, the behavior picks the
``i``-th available ranked item, otherwise a uniform draw from the available
indifference items, otherwise the no-purchase option.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from math import comb
from typing import Any

import numpy as np

NO_PURCHASE = 0


class ModelError(ValueError):
    """Raised when a domain object violates its invariants."""


@dataclass(frozen=True)
class ProductCatalog:
    n_products: int
    no_purchase: int = NO_PURCHASE

    def __post_init__(self) -> None:
        if self.n_products < 2:
            raise ModelError(f"catalog needs at least 2 products, got {self.n_products}")
        if self.no_purchase != NO_PURCHASE:
            raise ModelError("the no-purchase option must be product 0")

    @property
    def products(self) -> range:
        return range(self.n_products)


@dataclass(frozen=True, order=True)
class OfferSet:
    """An assortment, stored as a sorted tuple of distinct product ids."""

    items: tuple[int, ...]

    def __post_init__(self) -> None:
        items = tuple(sorted(int(j) for j in self.items))
        if len(set(items)) != len(items):
            raise ModelError(f"duplicate products in offer set {self.items}")
        if items and items[0] < 0:
            raise ModelError(f"negative product id in offer set {self.items}")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, items: Iterable[int]) -> OfferSet:
        return cls(tuple(items))

    def __contains__(self, j: object) -> bool:
        return j in self.items

    def __iter__(self) -> Iterator[int]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def has_no_purchase(self) -> bool:
        return NO_PURCHASE in self.items

    def validate(self, n_products: int, require_no_purchase: bool = True) -> None:
        if self.items and self.items[-1] >= n_products:
            raise ModelError(f"offer set {self.items} exceeds catalog of {n_products}")
        if require_no_purchase and not self.has_no_purchase:
            raise ModelError(f"offer set {self.items} lacks the no-purchase option")

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.items)) + "}"


@dataclass(frozen=True)
class Transaction:
    offer_set: OfferSet
    chosen: int

    def __post_init__(self) -> None:
        if self.chosen not in self.offer_set:
            raise ModelError(f"chosen product {self.chosen} not in offer set {self.offer_set}")


@dataclass(frozen=True)
class Behavior:
    """Partially-ranked preference with irrationality level.

    Attributes:
        ranked: strictly ranked products, most preferred first.
        indifference: products tied below ``ranked``.
        level: position picked among the available ranked items; 1 is rational.
    """

    ranked: tuple[int, ...]
    indifference: frozenset[int] = frozenset()
    level: int = 1

    def __post_init__(self) -> None:
        ranked = tuple(int(j) for j in self.ranked)
        indiff = frozenset(int(j) for j in self.indifference)
        object.__setattr__(self, "ranked", ranked)
        object.__setattr__(self, "indifference", indiff)
        if len(set(ranked)) != len(ranked):
            raise ModelError(f"ranked list has repeats: {ranked}")
        if indiff & set(ranked):
            raise ModelError(f"ranked {ranked} and indifference {sorted(indiff)} overlap")
        if any(j < 0 for j in ranked) or any(j < 0 for j in indiff):
            raise ModelError("negative product id in behavior")
        if not 1 <= self.level <= len(ranked) + 1:
            raise ModelError(f"level {self.level} outside 1..{len(ranked) + 1}")

    @property
    def is_rational(self) -> bool:
        return self.level == 1

    @property
    def node_key(self) -> tuple[tuple[int, ...], frozenset[int]]:
        return self.ranked, self.indifference

    def sort_key(self) -> tuple[int, tuple[int, ...], int, tuple[int, ...]]:
        """Deterministic order: prefix length, prefix, level, indifference."""
        return len(self.ranked), self.ranked, self.level, tuple(sorted(self.indifference))

    def validate(self, n_products: int) -> None:
        support = set(self.ranked) | self.indifference
        if support and max(support) >= n_products:
            raise ModelError(f"behavior {self} mentions products outside 0..{n_products - 1}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "ranked": list(self.ranked),
            "indifference": sorted(self.indifference),
            "level": self.level,
        }

    def __str__(self) -> str:
        p = ",".join(map(str, self.ranked))
        i = ",".join(map(str, sorted(self.indifference)))
        return f"C(({p}),{{{i}}},{self.level})"


@dataclass(frozen=True)
class ChoiceModel:
    """Mixture of behaviors with simplex weights."""

    behaviors: tuple[Behavior, ...]
    weights: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        behaviors = tuple(self.behaviors)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(behaviors) != weights.size:
            raise ModelError(f"{len(behaviors)} behaviors but {weights.size} weights")
        if weights.size == 0:
            raise ModelError("a choice model needs at least one behavior")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ModelError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ModelError(f"weights sum to {weights.sum():.12f}, not 1")
        weights.setflags(write=False)
        object.__setattr__(self, "behaviors", behaviors)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.behaviors)

    @classmethod
    def from_unnormalized(cls, behaviors: Sequence[Behavior], weights: Sequence[float],
                          metadata: dict[str, Any] | None = None) -> ChoiceModel:
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return cls(tuple(behaviors), w / w.sum(), metadata or {})

    def pruned(self, threshold: float = 1e-9) -> ChoiceModel:
        """Drop behaviors whose weight does not exceed ``threshold``."""
        keep = self.weights > threshold
        kept = [b for b, k in zip(self.behaviors, keep) if k]
        return ChoiceModel.from_unnormalized(kept, self.weights[keep], dict(self.metadata))


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Observed choice frequencies over ``M`` distinct offer sets.

    ``freq[m, j]`` is the share of transactions on ``offer_sets[m]`` that
    chose product ``j``; ``counts[m]`` is the number of those transactions.
    """

    n_products: int
    offer_sets: tuple[OfferSet, ...]
    freq: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        sets = tuple(self.offer_sets)
        freq = np.asarray(self.freq, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        m = len(sets)
        if m == 0:
            raise ModelError("empirical distribution needs at least one offer set")
        if len(set(sets)) != m:
            raise ModelError("offer sets must be distinct")
        if freq.shape != (m, self.n_products) or counts.shape != (m,):
            raise ModelError("frequency/count shapes do not match offer sets")
        if np.any(counts <= 0):
            raise ModelError("every offer set needs a positive transaction count")
        for idx, s in enumerate(sets):
            s.validate(self.n_products, require_no_purchase=False)
            outside = np.ones(self.n_products, dtype=bool)
            outside[list(s.items)] = False
            if np.any(freq[idx, outside] != 0):
                raise ModelError(f"nonzero frequency outside offer set {s}")
            if abs(freq[idx].sum() - 1.0) > 1e-9:
                raise ModelError(f"frequencies on {s} sum to {freq[idx].sum()}")
        if np.any(freq < 0):
            raise ModelError("negative frequency")
        freq.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "offer_sets", sets)
        object.__setattr__(self, "freq", freq)
        object.__setattr__(self, "counts", counts)

    @property
    def n_sets(self) -> int:
        return len(self.offer_sets)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def set_weights(self) -> np.ndarray:
        """``T_S / T`` per offer set."""
        return self.counts / self.counts.sum()

    def membership(self) -> np.ndarray:
        """Boolean ``(M, N)`` matrix with ``True`` where the product is offered."""
        mask = np.zeros((self.n_sets, self.n_products), dtype=bool)
        for m, s in enumerate(self.offer_sets):
            mask[m, list(s.items)] = True
        return mask

    def index_of(self, offer_set: OfferSet) -> int:
        return self.offer_sets.index(offer_set)

    def loglik(self, probs: np.ndarray, eps: float = 1e-10) -> float:
        """Transaction log-likelihood ``sum_t log x[c_t, S_t]`` of predicted ``(M, N)`` probabilities."""
        weights = self.counts[:, None] * self.freq
        mask = weights > 0
        return float(np.sum(weights[mask] * np.log(np.maximum(probs[mask], eps))))

    @classmethod
    def from_probabilities(cls, n_products: int, offer_sets: Sequence[OfferSet],
                           probs: np.ndarray | Sequence[Sequence[float]],
                           counts: Sequence[int] | int = 1) -> EmpiricalDistribution:
        """Build from exact per-set distributions (no sampling noise)."""
        probs = np.asarray(probs, dtype=float)
        if np.isscalar(counts) or np.ndim(counts) == 0:
            counts = np.full(len(offer_sets), int(counts))
        return cls(n_products, tuple(offer_sets), probs, np.asarray(counts))


def restrict(behavior: Behavior, offer_set: OfferSet) -> tuple[tuple[int, ...], frozenset[int]]:
    """Ranked prefix and indifference set limited to the offered products."""
    ranked = tuple(j for j in behavior.ranked if j in offer_set)
    indiff = frozenset(j for j in behavior.indifference if j in offer_set)
    return ranked, indiff


def choice_support(behavior: Behavior, offer_set: OfferSet) -> tuple[int, ...]:
    """Products that share the behavior's choice mass uniformly on ``offer_set``."""
    ranked, indiff = restrict(behavior, offer_set)
    i = behavior.level
    if i <= len(ranked):
        return (ranked[i - 1],)
    if indiff and i <= len(ranked) + len(indiff):
        return tuple(sorted(indiff))
    return (NO_PURCHASE,)


def choice_distribution(behavior: Behavior, offer_set: OfferSet) -> dict[int, float]:
    """Choice probabilities of one behavior over ``offer_set``.

    Leaving without a purchase is reported as mass on product 0.

    >>> b = Behavior((2, 3, 5), frozenset({1, 4}), 2)
    >>> choice_distribution(b, OfferSet.of([2, 1, 4]))
    {1: 0.5, 4: 0.5}
    """
    support = choice_support(behavior, offer_set)
    p = 1.0 / len(support)
    return {j: p for j in support}


def spurious_interaction_count(behavior: Behavior) -> int:
    """Upper bound on the positive product interactions a behavior can imply.

    Sum of ``C(j, i-1)`` for ``j`` in ``i-1 .. |P|-1``; empty sums give 0.
    """
    i, n = behavior.level, len(behavior.ranked)
    return sum(comb(j, i - 1) for j in range(i - 1, n))
