"""Prediction-error metrics, assortment-level cross-validation, retail preprocessing."""

from __future__ import annotations

import csv
import time
import warnings
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .choice_matrix import empirical
from .core import ModelError, OfferSet, Transaction
from .datagen import GroundTruth, eligible_offer_sets
from .methods import FittedMethod, MethodSpec, fit_method


def per_set_l1(x: np.ndarray, v: np.ndarray, offer_sets: Sequence[OfferSet]) -> np.ndarray:
    """``sum_{i in S} |x_iS - v_iS|`` for each offer set (rows of ``x`` and ``v``)."""
    x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    if x.shape != v.shape or x.shape[0] != len(offer_sets):
        raise ModelError("prediction, target and offer sets are not aligned")
    return np.array([np.abs(x[m, list(s.items)] - v[m, list(s.items)]).sum()
                     for m, s in enumerate(offer_sets)])


def l1_random(x: np.ndarray, v: np.ndarray, test_sets: Sequence[OfferSet]) -> float:
    """Expected L1 error for an offer set drawn uniformly from ``test_sets``."""
    if len(test_sets) == 0:
        raise ModelError("no test offer sets")
    return float(per_set_l1(x, v, test_sets).mean())


def l1_weighted(x: np.ndarray, v: np.ndarray, test_sets: Sequence[OfferSet],
                counts: Sequence[int], n_transactions: int) -> float:
    """L1 error weighted by how many test transactions each offer set received."""
    counts = np.asarray(counts, dtype=float)
    if len(test_sets) == 0:
        raise ModelError("no test offer sets")
    if counts.shape != (len(test_sets),) or counts.sum() != n_transactions:
        raise ModelError(f"set counts sum to {counts.sum():g}, expected {n_transactions}")
    return float(counts @ per_set_l1(x, v, test_sets) / n_transactions)


@dataclass(frozen=True)
class EvaluationReport:
    method: str
    errors: tuple[float, ...]
    labels: tuple[str, ...] = ()
    training_objective: float | None = None
    wall_time: float | None = None
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for e in self.errors:
            if not -1e-12 <= e <= 2.0 + 1e-12:
                raise ModelError(f"L1 error {e} outside [0, 2]")

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    @property
    def max(self) -> float:
        return float(np.max(self.errors))

    def to_dict(self) -> dict[str, Any]:
        out = {
            "method": self.method,
            "errors": list(self.errors),
            "labels": list(self.labels),
            "mean": self.mean,
            "median": self.median,
            "max": self.max,
            "training_objective": self.training_objective,
            "config": self.config,
        }
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def score_against_truth(fitted: FittedMethod, gt: GroundTruth,
                        training_sets: Iterable[OfferSet]) -> tuple[float, int]:
    """``l1_random`` on every eligible offer set not seen in training."""
    seen = set(training_sets)
    test = [s for s in eligible_offer_sets(gt.n_products) if s not in seen]
    if not test:
        raise ModelError("every eligible offer set was used for training")
    x = fitted.predict(test, gt.n_products)
    return l1_random(x, gt.probabilities(test), test), len(test)


def assign_folds(offer_sets: Sequence[OfferSet], n_folds: int,
                 rng: np.random.Generator) -> list[list[OfferSet]]:
    """Shuffle the distinct assortments and cut them into near-equal chunks."""
    sets = sorted(set(offer_sets))
    if len(sets) < n_folds:
        raise ModelError(f"{len(sets)} distinct assortments cannot fill {n_folds} folds")
    order = rng.permutation(len(sets))
    return [[sets[i] for i in chunk] for chunk in np.array_split(order, n_folds)]


def crossval(transactions: Sequence[Transaction], spec: MethodSpec, n_folds: int = 5,
             rng: np.random.Generator | None = None, n_products: int | None = None,
             timed: bool = False, train_fraction: float = 1.0) -> EvaluationReport:
    """Assortment-level K-fold cross-validation scored with ``l1_weighted``.

    ``train_fraction < 1`` keeps a random share of each training fold's
    transactions (learning curves); test folds are never thinned.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ModelError("train_fraction must lie in (0, 1]")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    n = n_products if n_products is not None else 1 + max(max(t.offer_set.items) for t in transactions)
    folds = assign_folds([t.offer_set for t in transactions], n_folds, rng)
    errors, objectives = [], []
    start = time.perf_counter()
    for fold in folds:
        held = set(fold)
        train = [t for t in transactions if t.offer_set not in held]
        test = [t for t in transactions if t.offer_set in held]
        if train_fraction < 1.0 and train:
            keep = max(1, round(train_fraction * len(train)))
            train = [train[i] for i in sorted(rng.choice(len(train), size=keep, replace=False))]
        if not train:
            raise ModelError("a training fold has no transactions")
        fitted = fit_method(spec, empirical(train, n))
        test_emp = empirical(test, n)
        x = fitted.predict(test_emp.offer_sets, n)
        errors.append(l1_weighted(x, test_emp.freq, test_emp.offer_sets, test_emp.counts, len(test)))
        objectives.append(fitted.objective)
    return EvaluationReport(
        method=spec.name,
        errors=tuple(errors),
        labels=tuple(f"fold{k}" for k in range(n_folds)),
        training_objective=float(np.mean(objectives)),
        wall_time=time.perf_counter() - start if timed else None,
        config={**spec.to_dict(), "n_folds": n_folds, "train_fraction": train_fraction},
    )


@dataclass(frozen=True)
class RetailRecord:
    week: str
    store: str
    upc: str
    vendor: str


def read_retail_csv(path: str | Path) -> list[RetailRecord]:
    """Rows of a ``week,store,upc,vendor`` purchase log."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"week", "store", "upc", "vendor"} - set(reader.fieldnames or ())
        if missing:
            raise ModelError(f"retail CSV lacks columns: {', '.join(sorted(missing))}")
        return [RetailRecord(r["week"], r["store"], r["upc"], r["vendor"]) for r in reader]


def vendor_products(records: Sequence[RetailRecord], top_k: int = 9) -> dict[str, int]:
    """Map the ``top_k`` best-selling vendors to products ``1..top_k``.

    Ties in sales count go to the lexicographically smaller vendor code.
    """
    counts = Counter(r.vendor for r in records)
    if len(counts) < top_k:
        warnings.warn(f"only {len(counts)} vendors available; using all of them", stacklevel=2)
    ranked = sorted(counts, key=lambda code: (-counts[code], code))[:top_k]
    return {code: k + 1 for k, code in enumerate(ranked)}


def preprocess_retail(records: Sequence[RetailRecord | tuple], top_k: int = 9) -> list[Transaction]:
    """Turn raw purchase events into transactions over vendor-level products.

    Vendors outside the top ``top_k`` collapse into product 0. Every purchase
    in a (week, store) pair sees the products sold anywhere in that pair,
    plus product 0.
    """
    records = [r if isinstance(r, RetailRecord) else RetailRecord(*map(str, r)) for r in records]
    if not records:
        raise ModelError("no retail records")
    product = vendor_products(records, top_k)
    ids = [product.get(r.vendor, 0) for r in records]
    sold: dict[tuple[str, str], set[int]] = {}
    for r, j in zip(records, ids):
        sold.setdefault((r.week, r.store), {0}).add(j)
    offer = {key: OfferSet.of(items) for key, items in sold.items()}
    return [Transaction(offer[r.week, r.store], j) for r, j in zip(records, ids)]


__all__ = [
    "EvaluationReport",
    "RetailRecord",
    "assign_folds",
    "crossval",
    "l1_random",
    "l1_weighted",
    "per_set_l1",
    "preprocess_retail",
    "read_retail_csv",
    "score_against_truth",
    "vendor_products",
]
