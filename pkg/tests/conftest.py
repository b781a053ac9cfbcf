from __future__ import annotations

import pytest

from cosmosfl.agent import EndpointClient, ModelEndpoint
from cosmosfl.fixtures import desk_d4j_path, ground_truth, load_fixture_set
from cosmosfl.mock import DeskD4JPolicy, MockBackend
from cosmosfl.scoring import score_run


@pytest.fixture(scope="session")
def desk_fixtures():
    return load_fixture_set(desk_d4j_path())


@pytest.fixture(scope="session")
def desk_truth(desk_fixtures):
    return ground_truth(desk_fixtures)


@pytest.fixture(scope="session")
def desk_policy(desk_fixtures):
    return DeskD4JPolicy(faulty={b: min(fx.ground_truth.faulty_methods) for b, fx in desk_fixtures.items()})


@pytest.fixture
def desk_backend(desk_policy):
    return MockBackend(desk_policy)


def mock_clients(backend, models, max_retries=2):
    return {
        m: EndpointClient(ModelEndpoint(m, "http://mock.test/v1", m, max_retries=max_retries), transport=backend.transport(), retry_backoff=0.0)
        for m in models
    }


def desk_dataset(policy, bugs, models, runs=range(5)):
    """Per-bug, per-model ScoreMaps straight from the mock profiles."""
    return {b: {m: [score_run(policy.answer_methods(m, b, s)) for s in runs] for m in models} for b in bugs}
