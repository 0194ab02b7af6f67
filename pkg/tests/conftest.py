"""Shared fixtures: one small generated design plus simulated callbacks.

Session-scoped datasets are treated as read-only by every test; anything
that needs to modify a table works on a copy.
"""

import pytest

from auditsim import design, dgp, theory


@pytest.fixture(scope="session")
def small_design():
    return design.DesignConfig(
        n_ads=200, resumes_per_ad=4, n_firms=100, n_universities=8,
        n_occupations=40)


@pytest.fixture(scope="session")
def small_dataset(small_design):
    """A generated design without callbacks."""
    return design.generate_dataset(small_design, 11)


@pytest.fixture(scope="session")
def reduced_dataset(small_dataset):
    """Callbacks from the reduced form with the stylized gap pattern."""
    form = dgp.ReducedForm(group_gaps=dict(dgp.BENCHMARK_GAPS), icc=0.0)
    return dgp.simulate_reduced(small_dataset, form, 5)


@pytest.fixture(scope="session")
def structural_params():
    return theory.ModelParams(alpha=1.2, beta=0.8, delta=1.0, gamma=0.3)


@pytest.fixture(scope="session")
def structural_dataset(small_dataset, structural_params):
    return dgp.simulate_structural(small_dataset, structural_params, 7)
