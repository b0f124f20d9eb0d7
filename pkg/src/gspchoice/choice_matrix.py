"""Choice columns, model predictions, and empirical frequencies."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .core import (
    Behavior,
    ChoiceModel,
    EmpiricalDistribution,
    ModelError,
    OfferSet,
    Transaction,
    choice_support,
)


@dataclass(frozen=True)
class ChoiceColumn:
    """One behavior's choices across a fixed list of offer sets.

    Stored sparsely: ``support[m]`` lists the products that split the
    behavior's unit mass equally on offer set ``m``.
    """

    support: tuple[tuple[int, ...], ...]

    @property
    def n_sets(self) -> int:
        return len(self.support)

    @property
    def entries(self) -> dict[tuple[int, int], float]:
        """Nonzero entries keyed by ``(product, offer-set index)``."""
        out = {}
        for m, items in enumerate(self.support):
            p = 1.0 / len(items)
            for j in items:
                out[j, m] = p
        return out

    def prob(self, j: int, m: int) -> float:
        items = self.support[m]
        return 1.0 / len(items) if j in items else 0.0

    def to_dense(self, n_products: int) -> np.ndarray:
        """``(M, N)`` array of choice probabilities."""
        out = np.zeros((self.n_sets, n_products))
        for m, items in enumerate(self.support):
            out[m, list(items)] = 1.0 / len(items)
        return out


def behavior_column(behavior: Behavior, offer_sets: Sequence[OfferSet]) -> ChoiceColumn:
    return ChoiceColumn(tuple(choice_support(behavior, s) for s in offer_sets))


class CellIndex:
    """Flat indexing of the ``(offer set, offered product)`` cells.

    Only products present in an offer set get a row, so a stacked column has
    ``sum_m |S_m|`` entries instead of ``N * M``.
    """

    def __init__(self, offer_sets: Sequence[OfferSet], n_products: int):
        self.offer_sets = tuple(offer_sets)
        self.n_products = n_products
        rows, items = [], []
        self.slices: list[slice] = []
        start = 0
        for m, s in enumerate(self.offer_sets):
            rows.extend([m] * len(s))
            items.extend(s.items)
            self.slices.append(slice(start, start + len(s)))
            start += len(s)
        self.set_of_cell = np.asarray(rows, dtype=np.intp)
        self.item_of_cell = np.asarray(items, dtype=np.intp)
        self.lookup = np.full((len(self.offer_sets), n_products), -1, dtype=np.intp)
        self.lookup[self.set_of_cell, self.item_of_cell] = np.arange(start)

    def __len__(self) -> int:
        return self.set_of_cell.size

    def flatten(self, grid: np.ndarray) -> np.ndarray:
        """Pick the offered cells out of an ``(M, N)`` array."""
        return np.asarray(grid)[self.set_of_cell, self.item_of_cell]

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        out = np.zeros((len(self.offer_sets), self.n_products))
        out[self.set_of_cell, self.item_of_cell] = flat
        return out

    def column_vector(self, column: ChoiceColumn) -> np.ndarray:
        vec = np.zeros(len(self))
        for m, items in enumerate(column.support):
            cells = self.lookup[m, list(items)]
            if np.any(cells < 0):
                # Forced no-purchase on a set that does not offer product 0.
                raise ModelError(f"column puts mass outside offer set {self.offer_sets[m]}")
            vec[cells] = 1.0 / len(items)
        return vec


@dataclass(frozen=True)
class ChoiceMatrixView:
    """Columns aligned with a model's behaviors over the training offer sets."""

    columns: tuple[ChoiceColumn, ...]
    offer_sets: tuple[OfferSet, ...]

    def __post_init__(self) -> None:
        for col in self.columns:
            if col.n_sets != len(self.offer_sets):
                raise ModelError("column length does not match the offer sets")

    @classmethod
    def from_behaviors(cls, behaviors: Iterable[Behavior],
                       offer_sets: Sequence[OfferSet]) -> ChoiceMatrixView:
        offer_sets = tuple(offer_sets)
        return cls(tuple(behavior_column(b, offer_sets) for b in behaviors), offer_sets)

    def __len__(self) -> int:
        return len(self.columns)

    def dense(self, cells: CellIndex) -> np.ndarray:
        """``(cells, K)`` matrix; materialized only for the solvers."""
        out = np.empty((len(cells), len(self.columns)))
        for k, col in enumerate(self.columns):
            out[:, k] = cells.column_vector(col)
        return out


def predict(model: ChoiceModel, offer_sets: Sequence[OfferSet], n_products: int) -> np.ndarray:
    """Mixture choice probabilities as an ``(M, N)`` array ``x[m, j]``."""
    x = np.zeros((len(offer_sets), n_products))
    for b, w in zip(model.behaviors, model.weights):
        if w == 0.0:
            continue
        for m, s in enumerate(offer_sets):
            items = choice_support(b, s)
            x[m, list(items)] += w / len(items)
    return x


def empirical(transactions: Iterable[Transaction], n_products: int | None = None) -> EmpiricalDistribution:
    """Per-offer-set choice frequencies; offer sets are sorted canonically."""
    counts: dict[OfferSet, Counter] = {}
    seen_max = 0
    for t in transactions:
        counts.setdefault(t.offer_set, Counter())[t.chosen] += 1
        seen_max = max(seen_max, max(t.offer_set.items))
    if not counts:
        raise ModelError("cannot build an empirical distribution from no transactions")
    n = n_products if n_products is not None else seen_max + 1
    sets = sorted(counts)
    freq = np.zeros((len(sets), n))
    totals = np.zeros(len(sets), dtype=np.int64)
    for m, s in enumerate(sets):
        c = counts[s]
        totals[m] = sum(c.values())
        for j, k in c.items():
            freq[m, j] = k / totals[m]
    return EmpiricalDistribution(n, tuple(sets), freq, totals)
