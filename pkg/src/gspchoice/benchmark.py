"""Synthetic benchmark: generate seeded instances, fit methods, score on held-out sets."""

from __future__ import annotations

import csv
import io
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .choice_matrix import empirical
from .core import OfferSet, Transaction
from .datagen import (
    GroundTruth,
    gen_gsp_instance,
    gen_halo_instance,
    gen_offer_sets,
    sample_transactions,
)
from .evaluation import score_against_truth
from .methods import MethodSpec, fit_method

_HALO_PCTS = (10, 25)
_SYMMETRIES = ("symmetric", "asymmetric")
_GSP_PCTS = (10, 20, 50)
_GSP_IMAX = (1, 5, 9)


def _halo(segments: int, interacting: bool) -> Callable[[int, np.random.Generator, int], GroundTruth]:
    def make(index: int, rng: np.random.Generator, n: int) -> GroundTruth:
        pct = _HALO_PCTS[index % 2] if interacting else 0
        sym = _SYMMETRIES[(index // 2) % 2]
        return gen_halo_instance(segments, pct, sym, rng, n_products=n)
    return make


def _gsp(types: int, irrational: bool) -> Callable[[int, np.random.Generator, int], GroundTruth]:
    def make(index: int, rng: np.random.Generator, n: int) -> GroundTruth:
        pct = _GSP_PCTS[index % 3] if irrational else 0
        i_max = _GSP_IMAX[(index // 3) % 3]
        return gen_gsp_instance(types, pct, i_max, rng, n_products=n)
    return make


# Instance classes; irrational settings cycle with the instance index.
INSTANCE_CLASSES: dict[str, Callable[[int, np.random.Generator, int], GroundTruth]] = {
    "mnl": _halo(1, False),
    "mmnl": _halo(10, False),
    "halo1": _halo(1, True),
    "halo10": _halo(10, True),
    "rb10": _gsp(10, False),
    "gsp10": _gsp(10, True),
    "gsp100": _gsp(100, True),
}


@dataclass(frozen=True)
class Instance:
    name: str
    index: int
    truth: GroundTruth
    offer_sets: tuple[OfferSet, ...]
    transactions: tuple[Transaction, ...]


def make_instance(name: str, index: int, seed: int, n_products: int = 10, n_sets: int = 20,
                  n_transactions: int = 3_000) -> Instance:
    """Reproducible instance; the stream depends on (seed, class, index) only."""
    if name not in INSTANCE_CLASSES:
        raise ValueError(f"unknown instance class {name!r}; choose from {', '.join(INSTANCE_CLASSES)}")
    class_id = list(INSTANCE_CLASSES).index(name)
    rng = np.random.default_rng([seed, class_id, index])
    gt = INSTANCE_CLASSES[name](index, rng, n_products)
    sets = gen_offer_sets(n_products, n_sets, rng)
    tx = sample_transactions(gt, sets, n_transactions, rng)
    return Instance(name, index, gt, tuple(sets), tuple(tx))


@dataclass(frozen=True)
class BenchmarkRow:
    instance_class: str
    index: int
    method: str
    test_l1: float
    train_objective: float


def run_benchmark(classes: Sequence[str], methods: Sequence[str], n_instances: int, seed: int = 0,
                  n_products: int = 10, n_sets: int = 20, n_transactions: int = 3_000,
                  progress: Callable[[BenchmarkRow], None] | None = None) -> list[BenchmarkRow]:
    rows = []
    for name in classes:
        for index in range(n_instances):
            inst = make_instance(name, index, seed, n_products, n_sets, n_transactions)
            emp = empirical(inst.transactions, n_products)
            for method in methods:
                fitted = fit_method(MethodSpec(method, seed=seed + index), emp)
                err, _ = score_against_truth(fitted, inst.truth, inst.offer_sets)
                row = BenchmarkRow(name, index, method, err, fitted.objective)
                rows.append(row)
                if progress:
                    progress(row)
    return rows


def summarize(rows: Sequence[BenchmarkRow]) -> list[dict[str, object]]:
    """Mean/median/max test error per (instance class, method), in first-seen order."""
    groups: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r.instance_class, r.method), []).append(r.test_l1)
    return [
        {"instance_class": c, "method": m, "n": len(v), "mean": float(np.mean(v)),
         "median": float(np.median(v)), "max": float(np.max(v))}
        for (c, m), v in groups.items()
    ]


def summary_csv(rows: Sequence[BenchmarkRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, ["instance_class", "method", "n", "mean", "median", "max"],
                            lineterminator="\n")
    writer.writeheader()
    for rec in summarize(rows):
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in rec.items()})
    return buf.getvalue()


__all__ = [
    "INSTANCE_CLASSES",
    "BenchmarkRow",
    "Instance",
    "make_instance",
    "run_benchmark",
    "summarize",
    "summary_csv",
]
