"""Synthetic ground truths, offer-set sampling and transaction sampling."""

from __future__ import annotations

import enum
import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .choice_matrix import predict
from .core import Behavior, ChoiceModel, ModelError, OfferSet, Transaction
from .halo_mnl import InteractionMatrix, halo_probabilities


class GtKind(str, enum.Enum):
    HALO_MNL = "halo_mnl"
    GSP = "gsp"


class Symmetry(str, enum.Enum):
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"


@dataclass(frozen=True)
class GspType:
    ranking: tuple[int, ...]
    level: int
    weight: float


@dataclass(frozen=True)
class GroundTruth:
    """A data-generating choice model.

    ``segments`` is used for Halo-MNL mixtures, ``types`` for GSP mixtures.
    """

    kind: GtKind
    n_products: int
    segments: tuple[tuple[InteractionMatrix, float], ...] = ()
    types: tuple[GspType, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is GtKind.HALO_MNL:
            weights = [w for _, w in self.segments]
            for u, _ in self.segments:
                if u.n_products != self.n_products:
                    raise ModelError("segment matrix size does not match the catalog")
        else:
            weights = [t.weight for t in self.types]
            full = tuple(range(self.n_products))
            for t in self.types:
                if tuple(sorted(t.ranking)) != full:
                    raise ModelError(f"GSP ranking {t.ranking} is not a permutation of all products")
                if not 1 <= t.level <= self.n_products:
                    raise ModelError(f"GSP level {t.level} outside 1..{self.n_products}")
        if not weights or min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
            raise ModelError("ground-truth weights must lie on the simplex")

    def to_choice_model(self) -> ChoiceModel:
        if self.kind is not GtKind.GSP:
            raise ModelError("only GSP ground truths are behavior mixtures")
        return ChoiceModel(
            tuple(Behavior(t.ranking, frozenset(), t.level) for t in self.types),
            np.array([t.weight for t in self.types]),
        )

    def probabilities(self, offer_sets: Sequence[OfferSet]) -> np.ndarray:
        """Exact choice probabilities as an ``(M, N)`` array."""
        if self.kind is GtKind.GSP:
            return predict(self.to_choice_model(), offer_sets, self.n_products)
        return sum(w * halo_probabilities(u, offer_sets) for u, w in self.segments)


def true_probabilities(gt: GroundTruth, offer_set: OfferSet) -> dict[int, float]:
    p = gt.probabilities([offer_set])[0]
    return {j: float(p[j]) for j in offer_set}


def uniform_simplex(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit simplex via normalized unit exponentials."""
    e = rng.standard_exponential(n)
    return e / e.sum()


def eligible_offer_sets(n_products: int) -> list[OfferSet]:
    """Option 0 plus at least two of the other products, in canonical order."""
    real = range(1, n_products)
    return [
        OfferSet((0, *combo))
        for size in range(2, n_products)
        for combo in itertools.combinations(real, size)
    ]


def gen_offer_sets(n_products: int, n_sets: int, rng: np.random.Generator) -> list[OfferSet]:
    """``n_sets`` distinct eligible offer sets drawn uniformly without replacement."""
    family = eligible_offer_sets(n_products)
    if not 1 <= n_sets <= len(family):
        raise ModelError(f"requested {n_sets} offer sets but only {len(family)} are eligible")
    picks = rng.choice(len(family), size=n_sets, replace=False)
    return sorted(family[i] for i in picks)


def interaction_pair_count(n_products: int, interaction_pct: float) -> int:
    """Pairs among the real products, rounded half up."""
    pairs = math.comb(n_products - 1, 2)
    return math.floor(interaction_pct * pairs / 100 + 0.5)


def gen_halo_instance(n_segments: int, interaction_pct: float, symmetry: Symmetry | str,
                      rng: np.random.Generator, n_products: int = 10) -> GroundTruth:
    """Halo-MNL mixture; zero interactions give MNL (one segment) or MMNL."""
    symmetry = Symmetry(symmetry)
    pairs = list(itertools.combinations(range(1, n_products), 2))
    n_pairs = interaction_pair_count(n_products, interaction_pct)
    segments = []
    for _ in range(n_segments):
        u = np.zeros((n_products, n_products))
        u[np.diag_indices(n_products)] = rng.uniform(-1.0, 1.0, n_products)
        for idx in rng.choice(len(pairs), size=n_pairs, replace=False):
            k, j = pairs[idx]
            if symmetry is Symmetry.SYMMETRIC:
                u[k, j] = u[j, k] = -1.0
            elif rng.integers(2):
                u[k, j] = -1.0
            else:
                u[j, k] = -1.0
        segments.append(InteractionMatrix(u))
    weights = uniform_simplex(n_segments, rng)
    return GroundTruth(GtKind.HALO_MNL, n_products, tuple(zip(segments, map(float, weights))))


def irrational_level_range(i_max: int, n_products: int) -> tuple[int, int]:
    """Inclusive level support ``2..max(2, i_max + 1)``, capped at the catalog size."""
    return 2, min(max(2, i_max + 1), n_products)


def gen_gsp_instance(n_types: int, irrational_pct: float, i_max: int,
                     rng: np.random.Generator, n_products: int = 10) -> GroundTruth:
    """GSP mixture of full random rankings, a share of them irrational."""
    rankings = [tuple(int(j) for j in rng.permutation(n_products)) for _ in range(n_types)]
    n_irr = math.ceil(irrational_pct * n_types / 100 - 1e-9)
    levels = np.ones(n_types, dtype=int)
    if n_irr:
        lo, hi = irrational_level_range(i_max, n_products)
        chosen = rng.choice(n_types, size=n_irr, replace=False)
        levels[chosen] = rng.integers(lo, hi + 1, size=n_irr)
    weights = uniform_simplex(n_types, rng)
    types = tuple(GspType(r, int(lv), float(w)) for r, lv, w in zip(rankings, levels, weights))
    return GroundTruth(GtKind.GSP, n_products, types=types)


def sample_transactions(gt: GroundTruth, offer_sets: Sequence[OfferSet], n_transactions: int,
                        rng: np.random.Generator) -> list[Transaction]:
    """I.i.d. choices spread evenly over the offer sets; leftovers go to the first sets."""
    n_sets = len(offer_sets)
    if n_transactions < n_sets:
        raise ModelError(f"need at least one transaction per offer set ({n_transactions} < {n_sets})")
    probs = gt.probabilities(offer_sets)
    base, extra = divmod(n_transactions, n_sets)
    out = []
    for m, s in enumerate(offer_sets):
        p = np.clip(probs[m], 0.0, None)
        draws = rng.choice(gt.n_products, size=base + (m < extra), p=p / p.sum())
        out.extend(Transaction(s, int(j)) for j in draws)
    return out


__all__ = [
    "GroundTruth",
    "GspType",
    "GtKind",
    "Symmetry",
    "eligible_offer_sets",
    "gen_gsp_instance",
    "gen_halo_instance",
    "gen_offer_sets",
    "interaction_pair_count",
    "irrational_level_range",
    "sample_transactions",
    "true_probabilities",
    "uniform_simplex",
]
