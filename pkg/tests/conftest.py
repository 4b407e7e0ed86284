import numpy as np
import pytest
from click.testing import CliRunner

from app import create_cli
from config import get_config
from topocon.models.agent import ReferenceKind, ReferenceTrajectory, TrackingPolicy
from topocon.models.decision import BudgetFunction, DecisionParams
from topocon.models.message import ChannelModel, KnowledgeBase, KnowledgeEntry
from topocon.models.region import EstimationSettings
from topocon.services.graph_service import build_topology
from topocon.utils.logging_utils import configure_logging
from topocon.utils.rng import SeededRNG


@pytest.fixture(scope='session', autouse=True)
def logging_for_tests():
    configure_logging(get_config('test'))


@pytest.fixture
def rng():
    return SeededRNG(1234)


@pytest.fixture
def channel():
    return ChannelModel(v=20.0, dT_M=0.0, R=10.0)


@pytest.fixture
def settings():
    return EstimationSettings(particles=128, pair_budget=4096, shrink_iterations=5, max_attempts=64)


def static_policy(point, lam=1.0):
    reference = ReferenceTrajectory(kind=ReferenceKind.CONSTANT_VELOCITY, p0=np.asarray(point, dtype=float),
                                    velocity=np.zeros(len(point)))
    return TrackingPolicy(lam=lam, reference=reference)


@pytest.fixture
def make_static_policy():
    return static_policy


def path_graph(n):
    return build_topology(n, [(k, k + 1) for k in range(1, n)])


def cycle_graph(n):
    return build_topology(n, [(k, k + 1) for k in range(1, n)] + [(1, n)])


def star_graph(leaves):
    return build_topology(leaves + 1, [(1, k) for k in range(2, leaves + 2)])


def complete_graph(n):
    return build_topology(n, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)])


@pytest.fixture
def cli_runner():
    return CliRunner()


@pytest.fixture
def cli():
    return create_cli('test')


def fresh_knowledge(owner, positions, now):
    """Base de connaissances à jour : chaque position est datée de `now`."""
    kb = KnowledgeBase(owner=owner)
    kb.refresh_self(positions[owner - 1], now)
    for node in range(1, len(positions) + 1):
        if node != owner:
            kb.entries[node] = KnowledgeEntry(np.array(positions[node - 1], dtype=float), now, now,
                                              route=((node, 0.0),))
    return kb


def static_policies(positions):
    return {node: static_policy(point) for node, point in enumerate(positions, start=1)}


def decision_params(**overrides):
    values = dict(tau_D=8, c_bar=1.0, budget=BudgetFunction(400.0), delta=0.0, p=0.1,
                  rho_m=0.6, c_max=1.0, R=10.0)
    values.update(overrides)
    return DecisionParams(**values)
