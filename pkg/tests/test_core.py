from __future__ import annotations

import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gspchoice.core import (
    Behavior,
    ChoiceModel,
    EmpiricalDistribution,
    ModelError,
    OfferSet,
    ProductCatalog,
    Transaction,
    choice_distribution,
    choice_support,
    spurious_interaction_count,
)


def test_offer_set_is_sorted_and_validated():
    s = OfferSet.of([3, 0, 1])
    assert s.items == (0, 1, 3)
    assert 3 in s and 2 not in s
    with pytest.raises(ModelError):
        OfferSet.of([1, 1])
    with pytest.raises(ModelError):
        OfferSet.of([1, 2]).validate(4)
    with pytest.raises(ModelError):
        OfferSet.of([0, 5]).validate(4)


def test_catalog_rejects_tiny_and_misplaced_no_purchase():
    with pytest.raises(ModelError):
        ProductCatalog(1)
    with pytest.raises(ModelError):
        ProductCatalog(3, no_purchase=1)


def test_transaction_requires_chosen_in_set():
    with pytest.raises(ModelError):
        Transaction(OfferSet.of([0, 1]), 2)


@pytest.mark.parametrize(
    "ranked, indiff, level",
    [((1, 1), (), 1), ((1, 2), (2,), 1), ((1,), (), 3), ((1,), (), 0)],
)
def test_behavior_invariants(ranked, indiff, level):
    with pytest.raises(ModelError):
        Behavior(ranked, frozenset(indiff), level)


def test_ranked_choice_picks_level_th_available():
    b = Behavior((2, 3, 5), frozenset({1, 4}), 2)
    assert choice_support(b, OfferSet.of([0, 2, 3, 5])) == (3,)
    assert choice_support(b, OfferSet.of([0, 3, 5])) == (5,)


def test_indifference_fallback_is_uniform():
    b = Behavior((2, 3, 5), frozenset({1, 4}), 2)
    assert choice_distribution(b, OfferSet.of([0, 2, 1, 4])) == {1: 0.5, 4: 0.5}


def test_no_purchase_when_level_exceeds_available():
    b = Behavior((2, 3), frozenset({1}), 3)
    assert choice_distribution(b, OfferSet.of([0, 2, 3])) == {0: 1.0}
    # One indifference item available but the level still lands past it.
    assert choice_distribution(b, OfferSet.of([0, 2, 1])) == {0: 1.0}


def test_rational_behavior_takes_top_available():
    b = Behavior((3, 1), frozenset({2}), 1)
    assert choice_distribution(b, OfferSet.of([0, 1, 2])) == {1: 1.0}
    assert choice_distribution(b, OfferSet.of([0, 2])) == {2: 1.0}
    assert choice_distribution(b, OfferSet.of([0])) == {0: 1.0}


def test_ranked_no_purchase_can_be_skipped():
    # Ranking 0 below 3: with 3 present, the second choice is leaving.
    b = Behavior((3, 0, 1, 2), frozenset(), 2)
    assert choice_distribution(b, OfferSet.of([0, 1, 2])) == {1: 1.0}
    assert choice_distribution(b, OfferSet.of([0, 1, 2, 3])) == {0: 1.0}


@given(
    perm=st.permutations(range(6)),
    cut=st.integers(1, 5),
    level=st.integers(1, 6),
    subset=st.sets(st.integers(1, 5)),
)
def test_choice_distribution_is_a_distribution_on_the_set(perm, cut, level, subset):
    ranked, indiff = tuple(perm[:cut]), frozenset(perm[cut:])
    level = min(level, len(ranked) + 1)
    s = OfferSet.of({0} | subset)
    dist = choice_distribution(Behavior(ranked, indiff, level), s)
    assert set(dist) <= set(s.items)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)


def test_choice_model_weight_checks():
    b = Behavior((1,), frozenset({0}))
    with pytest.raises(ModelError):
        ChoiceModel((b,), np.array([0.5]))
    with pytest.raises(ModelError):
        ChoiceModel((b, b), np.array([1.5, -0.5]))
    m = ChoiceModel.from_unnormalized([b, Behavior((0,), frozenset({1}))], [3.0, 1.0])
    np.testing.assert_allclose(m.weights, [0.75, 0.25])


def test_pruned_drops_tiny_weights_and_renormalizes():
    bs = [Behavior((j,), frozenset()) for j in range(3)]
    m = ChoiceModel(tuple(bs), np.array([0.5, 0.5 - 1e-12, 1e-12]))
    p = m.pruned()
    assert len(p) == 2
    assert p.weights.sum() == pytest.approx(1.0)


def test_empirical_distribution_validation():
    s = (OfferSet.of([0, 1]),)
    with pytest.raises(ModelError):
        EmpiricalDistribution(3, s, np.array([[0.5, 0.4, 0.1]]), np.array([10]))
    with pytest.raises(ModelError):
        EmpiricalDistribution(3, s, np.array([[0.5, 0.4, 0.0]]), np.array([10]))
    with pytest.raises(ModelError):
        EmpiricalDistribution(3, s, np.array([[0.5, 0.5, 0.0]]), np.array([0]))
    emp = EmpiricalDistribution(3, s, np.array([[0.5, 0.5, 0.0]]), np.array([10]))
    assert emp.total == 10
    assert emp.membership().tolist() == [[True, True, False]]


def _spurious_pairs_brute_force(behavior: Behavior) -> int:
    """Distinct (chosen item, set of items ranked above it) pairs over all S within P."""
    ranked = behavior.ranked
    seen = set()
    for r in range(len(ranked) + 1):
        for subset in itertools.combinations(ranked, r):
            s = OfferSet.of(subset)
            if len(subset) >= behavior.level:
                chosen = choice_support(behavior, s)[0]
                above = frozenset(j for j in subset if ranked.index(j) < ranked.index(chosen))
                seen.add((chosen, above))
    return len(seen)


@pytest.mark.parametrize("size", range(1, 7))
def test_spurious_interaction_count_matches_brute_force(size):
    ranked = tuple(range(1, size + 1))
    for level in range(2, size + 1):
        b = Behavior(ranked, frozenset(), level)
        assert spurious_interaction_count(b) == _spurious_pairs_brute_force(b)


def test_spurious_interaction_count_small_values():
    assert spurious_interaction_count(Behavior((1, 2, 3), frozenset(), 2)) == comb(1, 1) + comb(2, 1)
    assert spurious_interaction_count(Behavior((1, 2), frozenset(), 3)) == 0
