import pytest

from topocon.exceptions import ScenarioError
from topocon.models.decision import BudgetFunction, MethodTag
from topocon.models.scenario import Scenario
from topocon.services import scenario_service


def test_load_default_preset():
    scenario = scenario_service.load_scenario(scenario_service.preset_path('default'))
    assert scenario.n == 20 and scenario.method is MethodTag.A
    assert scenario.channel.R == 10.0 and scenario.decision.tau_D == 8
    assert scenario.decision.budget == BudgetFunction(400.0, 0.1, 150.0)
    assert scenario.dynamics.wander_omega == [0.02, 0.08]
    params = scenario.decision_params()
    assert params.R == 10.0 and params.Delta is None


def test_load_from_dict_uses_defaults():
    scenario = scenario_service.load_scenario({'n': 7, 'method': 'C', 'channel': {'R': 12.0}})
    assert scenario.n == 7 and scenario.method is MethodTag.C
    assert scenario.channel.R == 12.0 and scenario.channel.v == 40.0
    assert scenario.estimation.particles == 256


@pytest.mark.parametrize('data', [
    {'n': 0},
    {'method': 'E'},
    {'decision': {'p': 1.0}},
    {'decision': {'rho_m': 0.0}},
    {'dynamics': {'lam': 0.5}},
    {'dynamics': {'wander_omega': [0.5, 0.1]}},
    {'channel': {'v': 0}},
    {'n': 2, 'initial_positions': [[0.0, 0.0]]},
    {'unknown': 1},
])
def test_invalid_scenarios(data):
    with pytest.raises(ScenarioError) as err:
        scenario_service.load_scenario(data)
    assert err.value.details


def test_load_batch_presets():
    spec = scenario_service.load_batch(scenario_service.preset_path('table3'))
    assert spec['methods'] == ['A', 'C'] and spec['tau_D'] == [5, 10, 15]
    assert spec['nodes'] == [50] and isinstance(spec['scenario'], Scenario)
    assert spec['scenario'].n == 50
    for name in ('table1', 'table2'):
        assert scenario_service.load_batch(scenario_service.preset_path(name))['repetitions'] >= 1


def test_unknown_preset_and_file():
    with pytest.raises(ScenarioError) as err:
        scenario_service.preset_path('table9')
    assert 'default' in err.value.details['available']
    with pytest.raises(ScenarioError):
        scenario_service.load_scenario('/nonexistent/scenario.yaml')
    with pytest.raises(ScenarioError):
        scenario_service.load_batch({'methods': []})


def test_dump_and_reload(tmp_path):
    scenario = Scenario(n=3, seed=5, method=MethodTag.D, initial_positions=[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    path = str(tmp_path / 'scenario.yaml')
    scenario_service.dump_scenario(scenario, path)
    assert scenario_service.load_scenario(path) == scenario


def test_with_overrides():
    scenario = Scenario(n=3, initial_positions=[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    changed = scenario.with_overrides(tau_D=4, steps=12, seed=None, method=MethodTag.B)
    assert changed.decision.tau_D == 4 and changed.duration_steps == 12
    assert changed.seed == scenario.seed and changed.method is MethodTag.B
    assert changed.initial_positions == scenario.initial_positions
    resized = scenario.with_overrides(n=6)
    assert resized.n == 6 and resized.initial_positions is None
    with pytest.raises(ScenarioError):
        Scenario(n=2, initial_positions=[[0.0, 0.0]])
