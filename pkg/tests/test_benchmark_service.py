import math
import re

import pytest

from topocon.models.decision import MethodTag
from topocon.models.region import EstimationSettings
from topocon.models.scenario import Scenario
from topocon.services import simulation_service
from topocon.services.benchmark_service import (
    BatchResult, batch, compare, expand_matrix, is_strictly_decreasing, paired_comparison,
    repetition_seeds, run_one, scaling_exponent,
)
from topocon.services.report_service import ReportService


def _small(method=MethodTag.A, seed=3, steps=40, **overrides):
    values = dict(n=5, seed=seed, duration_steps=steps, decision_every=20, method=method,
                  estimation=EstimationSettings(particles=32, pair_budget=1024), name='bench')
    values.update(overrides)
    return Scenario(**values)


def _run(method, seed, cost, n=20, tau_D=8):
    return {'method': method, 'seed': seed, 'n': n, 'tau_D': tau_D, 'cumulative_cost': cost,
            'mean_decision_time': 0.01, 'violations': 0, 'failed': False}


def test_repetition_seeds():
    assert repetition_seeds(5, 1) == [5]
    seeds = repetition_seeds(5, 4)
    assert seeds[0] == 5 and len(set(seeds)) == 4
    assert repetition_seeds(5, 4) == seeds


def test_single_repetition_matches_single_run():
    scenario = _small()
    result = batch([scenario], repetitions=1)
    alone = simulation_service.run(scenario)
    assert len(result.runs) == 1
    assert result.runs[0]['cumulative_cost'] == alone.cumulative_cost
    assert result.rows[0]['mean_cost'] == alone.cumulative_cost
    assert result.rows[0]['std_cost'] == 0.0


def test_batch_groups_rows():
    result = batch([_small(MethodTag.A), _small(MethodTag.D)], repetitions=2, name='groups')
    assert [row['method'] for row in result.rows] == ['A', 'D']
    assert all(row['runs'] == 2 and row['failures'] == 0 for row in result.rows)
    assert [r['seed'] for r in result.runs] == repetition_seeds(3, 2) * 2
    assert result.row('D', n=5)['runs'] == 2
    with pytest.raises(KeyError):
        result.row('B')


def test_failed_runs_are_reported():
    broken = _small(n=2, initial_positions=[[0.0, 0.0], [50.0, 0.0]])
    failed = run_one(broken)
    assert failed['failed'] and failed['error'].startswith('ScenarioError')
    result = batch([broken], repetitions=1)
    assert len(result.failures) == 1
    assert result.rows[0]['failures'] == 1 and math.isnan(result.rows[0]['mean_cost'])


def test_paired_comparison():
    runs = [_run('B', s, c) for s, c in enumerate([1.0, 2.0, 3.0, 4.0])]
    runs += [_run('A', s, c) for s, c in enumerate([3.0, 5.0, 5.0, 7.0])]
    comparison = paired_comparison(BatchResult(name='t', runs=runs), 'B', 'A')
    assert comparison['pairs'] == 4
    assert comparison['mean_diff'] == pytest.approx(2.5)
    assert comparison['ci_low'] > 0 and comparison['established']
    reverse = paired_comparison(BatchResult(name='t', runs=runs), 'A', 'B')
    assert not reverse['established']
    lonely = paired_comparison(BatchResult(name='t', runs=runs[:1] + runs[4:5]), 'B', 'A')
    assert lonely['pairs'] == 1 and math.isnan(lonely['ci_low'])


def test_compare_shares_seeds_between_methods():
    result = compare(_small(), methods=['A', 'D'], repetitions=2)
    seeds = {m: [r['seed'] for r in result.runs if r['method'] == m] for m in ('A', 'D')}
    assert seeds['A'] == seeds['D']
    assert [(c['better'], c['worse']) for c in result.comparisons] == [('A', 'D')]


def test_expand_matrix():
    spec = {'name': 'm', 'scenario': _small(), 'seed': 7, 'steps': 30, 'nodes': [5, 6],
            'tau_D': [4, 6], 'methods': ['A', 'B'], 'repetitions': 1}
    scenarios = expand_matrix(spec)
    assert len(scenarios) == 8
    assert {(s.method.value, s.n, s.decision.tau_D) for s in scenarios} == {
        (m, n, t) for m in 'AB' for n in (5, 6) for t in (4, 6)
    }
    assert all(s.seed == 7 and s.duration_steps == 30 for s in scenarios)


def test_is_strictly_decreasing():
    assert is_strictly_decreasing([5.0, 3.0, 1.0])
    assert not is_strictly_decreasing([5.0, 5.0, 1.0])
    assert is_strictly_decreasing([])


@pytest.mark.slow
def test_parallel_batch_matches_sequential():
    scenarios = [_small(MethodTag.A), _small(MethodTag.B)]
    sequential = batch(scenarios, repetitions=3, workers=1)
    parallel = batch(scenarios, repetitions=3, workers=2)
    strip = lambda runs: [{k: v for k, v in r.items() if k != 'mean_decision_time'} for r in runs]
    assert strip(sequential.runs) == strip(parallel.runs)


def test_render_batch():
    runs = [_run('B', s, c) for s, c in enumerate([1.0, 2.0, 3.0])]
    runs += [_run('A', s, c) for s, c in enumerate([3.0, 5.0, 4.0])]
    result = BatchResult(name='table', rows=[
        {'method': 'A', 'n': 20, 'tau_D': 8, 'runs': 3, 'failures': 0, 'mean_cost': 4.0,
         'std_cost': 1.0, 'mean_decision_time': 0.0123, 'violations': 0},
    ], runs=runs)
    result.comparisons.append(paired_comparison(result, 'B', 'A'))
    text = ReportService().render_batch(result)
    assert text.startswith('# table')
    assert '| A | 20 | 8 | 3 | 0 | 4.0 | 1.0 | 0.0123 |' in text
    assert '| B < A | 3 |' in text
    assert 'Échecs :' not in text
    assert 'Exposant' not in text
    result.scaling['A'] = 2.04
    assert '| A | 2.04 |' in ReportService().render_batch(result)


def test_render_run_and_missing_values():
    metrics = simulation_service.run(_small(steps=0))
    text = ReportService().render_run(metrics)
    assert 'méthode A' in text and re.search(r'pas simulés\s+: 0\n', text)
    service = ReportService()
    assert service.render('{{ x | number }}', {'x': math.nan}) == '-'
    assert service.render('{{ x | seconds }}', {'x': 0.5}) == '0.5000'


def test_scaling_exponent():
    ns = [20, 30, 40, 50, 60]
    assert scaling_exponent(ns, [1e-4 * n ** 2 for n in ns]) == pytest.approx(2.0)
    assert scaling_exponent(ns, [3e-3 * n for n in ns]) == pytest.approx(1.0)
    # les cellules sans temps mesuré sont ignorées
    assert scaling_exponent(ns, [math.nan, 0.3, 0.4, 0.5, 0.6]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        scaling_exponent([20, 20], [0.1, 0.2])
