"""Small worked instances used by tests, examples and the CLI.

Products are numbered so that ``0`` is the no-purchase option; the worked
examples never observe a no-purchase, so their shares on ``0`` are zero.
"""

from __future__ import annotations

import numpy as np

from .core import Behavior, ChoiceModel, EmpiricalDistribution, OfferSet, Transaction
from .datagen import GroundTruth, GspType, GtKind

CAMERA_SETS = (OfferSet.of([0, 1, 2]), OfferSet.of([0, 1, 2, 3]))
CAMERA_SHARES = np.array([
    [0.0, 0.50, 0.50, 0.0],
    [0.0, 0.22, 0.57, 0.21],
])

# Four customer types that reproduce the camera shares exactly.
CAMERA_TYPES = (
    ((1, 3, 2), 1, 0.22),
    ((2, 3, 1), 1, 0.29),
    ((3, 2, 1), 1, 0.21),
    ((3, 2, 1), 2, 0.28),
)

SUBSCRIPTION_SETS = (OfferSet.of([0, 1, 3]), OfferSet.of([0, 1, 2, 3]))
SUBSCRIPTION_SHARES = np.array([
    [0.0, 0.68, 0.0, 0.32],
    [0.0, 0.16, 0.0, 0.84],
])
SUBSCRIPTION_TYPES = (
    ((3, 1, 2), 1, 0.16),
    ((2, 1, 3), 2, 0.16),
    ((2, 3, 1), 2, 0.68),
)

# Ranking the no-purchase option: adding product 3 pushes this customer
# from buying product 1 to leaving.
NO_PURCHASE_REGULARITY_TYPE = Behavior((3, 0, 1, 2), frozenset(), 2)


def _model(types) -> ChoiceModel:
    return ChoiceModel(
        tuple(Behavior(r, frozenset(), lv) for r, lv, _ in types),
        np.array([w for _, _, w in types]),
    )


def camera_model() -> ChoiceModel:
    return _model(CAMERA_TYPES)


def subscription_model() -> ChoiceModel:
    return _model(SUBSCRIPTION_TYPES)


def camera_empirical(per_set: int = 100) -> EmpiricalDistribution:
    """Camera shares with ``per_set`` transactions on each offer set."""
    return EmpiricalDistribution.from_probabilities(4, CAMERA_SETS, CAMERA_SHARES, per_set)


def camera_ground_truth() -> GroundTruth:
    """The camera types as a GSP ground truth (no-purchase ranked last)."""
    return GroundTruth(
        GtKind.GSP,
        4,
        types=tuple(GspType((*r, 0), lv, w) for r, lv, w in CAMERA_TYPES),
    )


def shares_to_transactions(offer_sets, shares: np.ndarray, per_set: int) -> list[Transaction]:
    """Deterministic transaction list whose frequencies equal ``shares`` exactly."""
    out = []
    for s, row in zip(offer_sets, shares):
        counts = np.rint(row * per_set).astype(int)
        if counts.sum() != per_set or not np.allclose(counts / per_set, row, atol=1e-12):
            raise ValueError(f"{per_set} transactions cannot reproduce shares {row} exactly")
        for j in s:
            out.extend([Transaction(s, j)] * int(counts[j]))
    return out


def camera_transactions(per_set: int = 100) -> list[Transaction]:
    return shares_to_transactions(CAMERA_SETS, CAMERA_SHARES, per_set)


__all__ = [
    "CAMERA_SETS",
    "CAMERA_SHARES",
    "CAMERA_TYPES",
    "NO_PURCHASE_REGULARITY_TYPE",
    "SUBSCRIPTION_SETS",
    "SUBSCRIPTION_SHARES",
    "SUBSCRIPTION_TYPES",
    "camera_empirical",
    "camera_ground_truth",
    "camera_model",
    "camera_transactions",
    "shares_to_transactions",
    "subscription_model",
]
