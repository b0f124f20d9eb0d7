from __future__ import annotations

import doctest
import itertools
import warnings

import numpy as np
import pytest

import gspchoice.halo_mnl as halo
from gspchoice.core import EmpiricalDistribution, ModelError, OfferSet
from gspchoice.fixtures import camera_empirical
from gspchoice.halo_mnl import (
    HaloConvergenceWarning,
    InteractionMatrix,
    fit_halo,
    fit_halo_detailed,
    halo_loglik,
    halo_probabilities,
    halo_probability,
    loglik_gradient,
)
from gspchoice.master import kl_loss

from conftest import random_empirical


def all_sets(n):
    return [OfferSet.of((0,) + c) for r in range(1, n) for c in itertools.combinations(range(1, n), r)]


def direct_probability(u, s):
    """Softmax over S of u_ii plus the effects of every absent product."""
    n = u.shape[0]
    z = {i: u[i, i] + sum(u[k, i] for k in range(n) if k not in s.items) for i in s.items}
    top = max(z.values())
    e = {i: np.exp(v - top) for i, v in z.items()}
    tot = sum(e.values())
    return {i: v / tot for i, v in e.items()}


def test_docstrings():
    assert doctest.testmod(halo).failed == 0


def test_matches_direct_softmax(rng):
    u = rng.normal(size=(5, 5))
    sets = all_sets(5)
    p = halo_probabilities(InteractionMatrix(u), sets)
    for m, s in enumerate(sets):
        for j, q in direct_probability(u, s).items():
            assert p[m, j] == pytest.approx(q, abs=1e-12)
        assert p[m].sum() == pytest.approx(1.0)


def test_zero_off_diagonals_give_mnl(rng):
    util = rng.normal(size=6)
    m = InteractionMatrix.mnl(util)
    s = OfferSet.of([0, 2, 3, 5])
    p = halo_probability(m, s)
    denom = sum(np.exp(util[j]) for j in s.items)
    for j in s.items:
        assert p[j] == pytest.approx(np.exp(util[j]) / denom, abs=1e-12)


def test_zero_matrix_is_uniform():
    p = halo_probability(InteractionMatrix.zeros(6), OfferSet.of([0, 1, 4, 5]))
    assert all(v == pytest.approx(0.25) for v in p.values())


def test_absent_product_effect_value():
    u = np.zeros((3, 3))
    u[1, 2] = -1.0
    m = InteractionMatrix(u)
    assert halo_probability(m, OfferSet.of([0, 2]))[2] == pytest.approx(np.exp(-1) / (np.exp(-1) + 1), abs=1e-12)
    # With product 1 on offer its effect on 2 is inactive.
    assert halo_probability(m, OfferSet.of([0, 1, 2]))[2] == pytest.approx(1 / 3)


def test_mnl_satisfies_independence_of_irrelevant_alternatives(rng):
    m = InteractionMatrix.mnl(rng.normal(size=5))
    sets = all_sets(5)
    p = halo_probabilities(m, sets)
    for a, b in itertools.combinations(range(5), 2):
        ratios = [p[k, a] / p[k, b] for k, s in enumerate(sets) if a in s and b in s]
        assert np.ptp(ratios) <= 1e-10


def test_shift_of_all_utilities_is_invisible(rng):
    u = rng.normal(size=(4, 4))
    sets = all_sets(4)
    shifted = u + 2.5 * np.eye(4)
    np.testing.assert_allclose(halo_probabilities(InteractionMatrix(u), sets),
                               halo_probabilities(InteractionMatrix(shifted), sets), atol=1e-12)


def test_matrix_validation_and_csv_round_trip(tmp_path, rng):
    with pytest.raises(ModelError):
        InteractionMatrix(np.zeros((2, 3)))
    with pytest.raises(ModelError):
        InteractionMatrix(np.array([[np.nan]]))
    m = InteractionMatrix(rng.normal(size=(4, 4)))
    path = tmp_path / "u.csv"
    m.save(path)
    np.testing.assert_array_equal(InteractionMatrix.load(path).u, m.u)
    with pytest.raises(ModelError):
        InteractionMatrix.from_csv("3\n1,2,3\n")


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(900 + seed)
    emp = random_empirical(rng, n=5, n_sets=7)
    u = rng.normal(scale=0.5, size=(5, 5))
    grad = loglik_gradient(InteractionMatrix(u), emp)
    h = 1e-5
    fd = np.zeros_like(u)
    for i, j in itertools.product(range(5), repeat=2):
        if (i, j) == (0, 0):
            continue
        up, dn = u.copy(), u.copy()
        up[i, j] += h
        dn[i, j] -= h
        fd[i, j] = (halo_loglik(InteractionMatrix(up), emp) - halo_loglik(InteractionMatrix(dn), emp)) / (2 * h)
    rel = np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-12)
    assert rel < 1e-4


def test_recovers_mnl_probabilities():
    util = np.array([0.0, 0.4, -0.3, 0.9, 0.1])
    truth = InteractionMatrix.mnl(util)
    sets = all_sets(5)
    freq = halo_probabilities(truth, sets)
    emp = EmpiricalDistribution.from_probabilities(5, sets, freq, np.full(len(sets), 500))
    fitted = fit_halo(emp)
    np.testing.assert_allclose(halo_probabilities(fitted, sets), freq, atol=1e-3)


def test_single_offer_set_is_fit_exactly(rng):
    emp = random_empirical(rng, n=5, n_sets=1)
    fit = fit_halo_detailed(emp)
    assert kl_loss(halo_probabilities(fit.matrix, emp.offer_sets), emp) <= 1e-6


def test_camera_example_is_fit_exactly():
    emp = camera_empirical()
    fit = fit_halo_detailed(emp)
    assert fit.converged
    assert kl_loss(halo_probabilities(fit.matrix, emp.offer_sets), emp) <= 1e-6
    assert fit.matrix.u[0, 0] == 0.0


def test_loglik_history_never_decreases(rng):
    emp = random_empirical(rng, n=6, n_sets=10)
    fit = fit_halo_detailed(emp)
    hist = np.array(fit.history)
    assert np.all(np.diff(hist) >= -1e-9)
    assert fit.loglik >= hist[0]


def test_warns_when_budget_runs_out(rng):
    emp = random_empirical(rng, n=6, n_sets=10)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit_halo(emp, max_iter=2)
    assert any(issubclass(w.category, HaloConvergenceWarning) for w in caught)
