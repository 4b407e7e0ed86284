"""Batteries complètes (marqueur slow) : pytest -m slow."""
import os

import pytest

from topocon.models.decision import MethodTag
from topocon.services import benchmark_service, scenario_service, simulation_service

pytestmark = pytest.mark.slow

WORKERS = os.cpu_count() or 1


def _desk_scenario(method=MethodTag.A, seed=0):
    return scenario_service.load_scenario(scenario_service.preset_path('default')).with_overrides(
        method=method, seed=seed)


@pytest.mark.parametrize('method', [MethodTag.A, MethodTag.C, MethodTag.D])
def test_connectivity_and_diameter_safety(method):
    result = benchmark_service.batch([_desk_scenario(method, seed=100)], repetitions=200, workers=WORKERS)
    assert result.failures == []
    assert all(run['violations'] == 0 for run in result.runs)


def test_cost_ordering_on_shared_seeds():
    result = benchmark_service.compare(_desk_scenario(seed=2024), methods=['A', 'B', 'C', 'D'],
                                       repetitions=100, workers=WORKERS)
    assert result.failures == []
    verdicts = {(c['better'], c['worse']): c for c in result.comparisons}
    assert verdicts[('B', 'A')]['established']
    assert verdicts[('A', 'C')]['established']
    # l'écart A/D est rapporté sans être exigé
    assert verdicts[('A', 'D')]['pairs'] == 100


def test_cost_decreases_with_diameter_bound():
    spec = scenario_service.load_batch(scenario_service.preset_path('table3'))
    spec['methods'] = ['A']
    result = benchmark_service.run_matrix(spec, workers=WORKERS)
    costs = [result.row('A', n=50, tau_D=t)['mean_cost'] for t in (5, 10, 15)]
    assert benchmark_service.is_strictly_decreasing(costs)


def test_decision_time_scaling():
    spec = scenario_service.load_batch(scenario_service.preset_path('table2'))
    result = benchmark_service.run_matrix(spec, workers=1)
    assert result.failures == []
    assert result.scaling['A'] > 1.0
    assert result.scaling['A'] > result.scaling['B']


def test_default_runs_never_stretch_links_beyond_range():
    for seed in range(5):
        metrics = simulation_service.run(_desk_scenario(seed=seed))
        assert metrics.violations == []
        assert all(sample.broken == 0 for sample in metrics.steps)
