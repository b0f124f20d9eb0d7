from __future__ import annotations

import numpy as np
import pytest

from gspchoice.choice_matrix import (
    CellIndex,
    ChoiceMatrixView,
    behavior_column,
    empirical,
    predict,
)
from gspchoice.core import Behavior, ChoiceModel, ModelError, OfferSet, Transaction, choice_distribution
from gspchoice.fixtures import CAMERA_SETS, CAMERA_SHARES, camera_model


def test_column_matches_choice_distribution():
    b = Behavior((2, 3, 1), frozenset({0}), 2)
    sets = [OfferSet.of([0, 1, 2]), OfferSet.of([0, 1, 2, 3]), OfferSet.of([0, 3])]
    col = behavior_column(b, sets)
    dense = col.to_dense(4)
    for m, s in enumerate(sets):
        for j, p in choice_distribution(b, s).items():
            assert dense[m, j] == p
            assert col.prob(j, m) == p
    assert dense.sum(axis=1).tolist() == [1.0, 1.0, 1.0]
    assert sum(col.entries.values()) == pytest.approx(3.0)


def test_predict_camera_types_reproduce_shares():
    x = predict(camera_model(), CAMERA_SETS, 4)
    np.testing.assert_allclose(x, CAMERA_SHARES, atol=1e-12)


def test_predict_is_linear_in_weights(rng):
    sets = [OfferSet.of([0, 1, 2, 3]), OfferSet.of([0, 2, 3])]
    bs = [Behavior(tuple(rng.permutation(4)), frozenset(), int(rng.integers(1, 3))) for _ in range(5)]
    w = rng.dirichlet(np.ones(5))
    mixed = predict(ChoiceModel(tuple(bs), w), sets, 4)
    parts = sum(wk * behavior_column(b, sets).to_dense(4) for b, wk in zip(bs, w))
    np.testing.assert_allclose(mixed, parts, atol=1e-14)


def test_cell_index_round_trip():
    sets = [OfferSet.of([0, 2]), OfferSet.of([0, 1, 3])]
    cells = CellIndex(sets, 4)
    assert len(cells) == 5
    grid = np.arange(8, dtype=float).reshape(2, 4)
    flat = cells.flatten(grid)
    assert flat.tolist() == [0.0, 2.0, 4.0, 5.0, 7.0]
    back = cells.unflatten(flat)
    assert back[0, 1] == 0.0 and back[1, 3] == 7.0


def test_cell_index_rejects_mass_outside_set():
    sets = [OfferSet.of([1, 2])]
    col = behavior_column(Behavior((3,), frozenset(), 1), sets)
    with pytest.raises(ModelError):
        CellIndex(sets, 4).column_vector(col)


def test_matrix_view_dense_columns_sum_to_one_per_set():
    sets = list(CAMERA_SETS)
    view = ChoiceMatrixView.from_behaviors(camera_model().behaviors, sets)
    a = view.dense(CellIndex(sets, 4))
    assert a.shape == (7, 4)
    np.testing.assert_allclose(a.sum(axis=0), 2.0)


def test_empirical_counts_and_canonical_order():
    s1, s2 = OfferSet.of([0, 1, 2]), OfferSet.of([0, 1])
    tx = [Transaction(s1, 1), Transaction(s1, 2), Transaction(s1, 2), Transaction(s2, 0)]
    emp = empirical(tx, 3)
    assert emp.offer_sets == (s2, s1)
    assert emp.counts.tolist() == [1, 3]
    np.testing.assert_allclose(emp.freq[1], [0, 1 / 3, 2 / 3])
    with pytest.raises(ModelError):
        empirical([])
