from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gspchoice.core import EmpiricalDistribution, OfferSet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_empirical(rng: np.random.Generator, n: int = 6, n_sets: int = 8,
                     max_count: int = 50) -> EmpiricalDistribution:
    """Random offer sets (all containing 0) with Dirichlet shares."""
    sets = set()
    while len(sets) < n_sets:
        items = [0] + [j for j in range(1, n) if rng.random() < 0.6]
        if len(items) >= 2:
            sets.add(OfferSet.of(items))
    sets = sorted(sets)
    freq = np.zeros((len(sets), n))
    for m, s in enumerate(sets):
        freq[m, list(s.items)] = rng.dirichlet(np.ones(len(s)))
    counts = rng.integers(5, max_count, len(sets))
    return EmpiricalDistribution.from_probabilities(n, sets, freq, counts)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter) -> None:
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
