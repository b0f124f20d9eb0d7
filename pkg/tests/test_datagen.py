from __future__ import annotations

from collections import Counter
from math import comb

import numpy as np
import pytest

from gspchoice.choice_matrix import empirical, predict
from gspchoice.core import ModelError, OfferSet, choice_distribution
from gspchoice.datagen import (
    GroundTruth,
    GspType,
    GtKind,
    eligible_offer_sets,
    gen_gsp_instance,
    gen_halo_instance,
    gen_offer_sets,
    interaction_pair_count,
    irrational_level_range,
    sample_transactions,
    true_probabilities,
    uniform_simplex,
)
from gspchoice.fixtures import (
    NO_PURCHASE_REGULARITY_TYPE,
    SUBSCRIPTION_SETS,
    SUBSCRIPTION_SHARES,
    camera_ground_truth,
    subscription_model,
)
from gspchoice.halo_mnl import InteractionMatrix


def test_eligible_family_sizes():
    family = eligible_offer_sets(10)
    assert len(family) == 502 == sum(comb(9, k) for k in range(2, 10))
    assert all(0 in s and len(s) >= 3 for s in family)
    assert len(eligible_offer_sets(4)) == 4


def test_gen_offer_sets(rng):
    assert set(gen_offer_sets(10, 502, rng)) == set(eligible_offer_sets(10))
    assert set(gen_offer_sets(4, 4, rng)) == set(eligible_offer_sets(4))
    (one,) = gen_offer_sets(10, 1, rng)
    assert 0 in one and len(one) >= 3
    picked = gen_offer_sets(10, 50, rng)
    assert len(set(picked)) == 50
    with pytest.raises(ModelError):
        gen_offer_sets(4, 5, rng)


def test_interaction_pair_counts():
    assert interaction_pair_count(10, 10) == 4
    assert interaction_pair_count(10, 25) == 9
    assert interaction_pair_count(10, 0) == 0


def off_diagonal_pairs(u):
    n = u.shape[0]
    return {frozenset((k, j)) for k in range(n) for j in range(n) if k != j and u[k, j] != 0}


@pytest.mark.parametrize("symmetry", ["symmetric", "asymmetric"])
def test_halo_instance_structure(symmetry, rng):
    gt = gen_halo_instance(10, 25, symmetry, rng)
    assert gt.kind is GtKind.HALO_MNL and len(gt.segments) == 10
    assert sum(w for _, w in gt.segments) == pytest.approx(1.0)
    for m, _ in gt.segments:
        u = m.u
        assert np.all(np.abs(np.diag(u)) <= 1.0)
        off = u[~np.eye(10, dtype=bool)]
        assert set(np.unique(off)) <= {0.0, -1.0}
        assert len(off_diagonal_pairs(u)) == 9
        assert all(0 not in pair for pair in off_diagonal_pairs(u))
        ones = int((off == -1.0).sum())
        assert ones == (18 if symmetry == "symmetric" else 9)


def test_zero_interactions_give_mnl_and_mmnl(rng):
    mnl = gen_halo_instance(1, 0, "symmetric", rng)
    (u, w), = mnl.segments
    assert w == 1.0
    np.testing.assert_array_equal(u.u, np.diag(np.diag(u.u)))
    mmnl = gen_halo_instance(10, 0, "asymmetric", rng)
    assert all(np.count_nonzero(m.u - np.diag(np.diag(m.u))) == 0 for m, _ in mmnl.segments)


def test_mnl_ground_truth_satisfies_iia(rng):
    gt = gen_halo_instance(1, 0, "symmetric", rng, n_products=6)
    sets = eligible_offer_sets(6)
    p = gt.probabilities(sets)
    ratios = [p[m, 1] / p[m, 2] for m, s in enumerate(sets) if 1 in s and 2 in s]
    assert np.ptp(ratios) <= 1e-10


def test_gsp_instance_counts_and_levels(rng):
    gt = gen_gsp_instance(10, 50, 5, rng)
    assert sum(t.level >= 2 for t in gt.types) == 5
    assert all(2 <= t.level <= 6 for t in gt.types if t.level >= 2)
    assert sum(t.weight for t in gt.types) == pytest.approx(1.0)
    assert all(sorted(t.ranking) == list(range(10)) for t in gt.types)
    rb = gen_gsp_instance(100, 0, 9, rng)
    assert all(t.level == 1 for t in rb.types)


def test_irrational_level_range():
    assert irrational_level_range(1, 10) == (2, 2)
    assert irrational_level_range(5, 10) == (2, 6)
    assert irrational_level_range(9, 10) == (2, 10)
    assert irrational_level_range(9, 6) == (2, 6)


def test_deep_irrational_levels_mostly_leave(rng):
    gt = gen_gsp_instance(10, 50, 9, rng)
    sets = gen_offer_sets(10, 100, rng)
    deep = [t for t in gt.types if t.level >= 7]
    for t in deep:
        single = GroundTruth(GtKind.GSP, 10, types=(GspType(t.ranking, t.level, 1.0),))
        p = single.probabilities(sets)
        assert p[:, 0].mean() > 0.5


def test_ground_truth_validation():
    with pytest.raises(ModelError):
        GroundTruth(GtKind.GSP, 3, types=(GspType((0, 1), 1, 1.0),))
    with pytest.raises(ModelError):
        GroundTruth(GtKind.GSP, 3, types=(GspType((0, 1, 2), 4, 1.0),))
    with pytest.raises(ModelError):
        GroundTruth(GtKind.GSP, 3, types=(GspType((0, 1, 2), 1, 0.5),))
    with pytest.raises(ModelError):
        GroundTruth(GtKind.HALO_MNL, 3, segments=((InteractionMatrix.zeros(4), 1.0),))


def test_camera_ground_truth_on_larger_set():
    p = true_probabilities(camera_ground_truth(), OfferSet.of([0, 1, 2, 3]))
    assert p[1] == pytest.approx(0.22) and p[2] == pytest.approx(0.57) and p[3] == pytest.approx(0.21)
    assert p[0] == pytest.approx(0.0)


def test_single_rational_type_is_a_point_mass():
    gt = GroundTruth(GtKind.GSP, 4, types=(GspType((2, 0, 3, 1), 1, 1.0),))
    assert true_probabilities(gt, OfferSet.of([0, 1, 3])) == {0: 1.0, 1: 0.0, 3: 0.0}


def test_subscription_types_reproduce_their_shares():
    x = predict(subscription_model(), SUBSCRIPTION_SETS, 4)
    np.testing.assert_allclose(x, SUBSCRIPTION_SHARES, atol=1e-12)


def test_ranked_no_purchase_breaks_regularity():
    small = choice_distribution(NO_PURCHASE_REGULARITY_TYPE, OfferSet.of([0, 1, 2]))
    big = choice_distribution(NO_PURCHASE_REGULARITY_TYPE, OfferSet.of([0, 1, 2, 3]))
    assert small == {1: 1.0} and big == {0: 1.0}


@pytest.mark.parametrize("seed", range(3))
def test_true_probabilities_match_simulation(seed):
    rng = np.random.default_rng(1000 + seed)
    n = 6
    gt = gen_gsp_instance(10, 50, 5, rng, n_products=n)
    s = OfferSet.of([0, 1, 3, 4, 5])
    p = true_probabilities(gt, s)
    draws = 1_000_000
    # Simulate each customer: draw a type, then apply its choice rule.
    kinds = rng.choice(len(gt.types), size=draws, p=[t.weight for t in gt.types])
    chosen = np.empty(draws, dtype=int)
    for k, t in enumerate(gt.types):
        avail = [j for j in t.ranking if j in s]
        chosen[kinds == k] = avail[t.level - 1] if t.level <= len(avail) else 0
    freq = Counter(chosen.tolist())
    for j in s:
        se = np.sqrt(max(p[j] * (1 - p[j]), 1e-12) / draws)
        assert abs(freq[j] / draws - p[j]) <= 3 * se + 1e-12


def test_sample_transaction_counts(rng):
    gt = camera_ground_truth()
    sets = [OfferSet.of(s) for s in ([0, 1, 2], [0, 1, 3], [0, 2, 3], [0, 1, 2, 3])]
    tx = sample_transactions(gt, sets, 3002, rng)
    counts = Counter(t.offer_set for t in tx)
    assert [counts[s] for s in sets] == [751, 751, 750, 750]
    assert len(sample_transactions(gt, sets, 4, rng)) == 4
    with pytest.raises(ModelError):
        sample_transactions(gt, sets, 3, rng)


def test_three_hundred_per_set(rng):
    gt = gen_halo_instance(1, 10, "asymmetric", rng)
    sets = gen_offer_sets(10, 10, rng)
    counts = Counter(t.offer_set for t in sample_transactions(gt, sets, 3000, rng))
    assert set(counts.values()) == {300}


def test_sampling_is_reproducible():
    def draw(seed):
        rng = np.random.default_rng(seed)
        gt = gen_gsp_instance(10, 20, 5, rng)
        sets = gen_offer_sets(10, 20, rng)
        return sample_transactions(gt, sets, 1000, rng)

    assert draw(5) == draw(5)
    assert draw(5) != draw(6)


def test_empirical_shares_converge(rng):
    gt = gen_halo_instance(10, 25, "symmetric", rng)
    sets = gen_offer_sets(10, 10, rng)
    emp = empirical(sample_transactions(gt, sets, 50_000, rng), 10)
    p = gt.probabilities(emp.offer_sets)
    # 5,000 draws per set: each share is within 4 standard errors.
    se = np.sqrt(np.maximum(p * (1 - p), 1e-12) / 5_000)
    assert np.all(np.abs(emp.freq - p) <= 4 * se + 1e-12)


def test_uniform_simplex(rng):
    draws = np.array([uniform_simplex(3, rng) for _ in range(20_000)])
    np.testing.assert_allclose(draws.sum(axis=1), 1.0)
    # Uniform on the 2-simplex: each coordinate is Beta(1, 2) with mean 1/3.
    np.testing.assert_allclose(draws.mean(axis=0), 1 / 3, atol=0.01)
    assert np.mean(draws[:, 0] < 0.5) == pytest.approx(0.75, abs=0.01)
