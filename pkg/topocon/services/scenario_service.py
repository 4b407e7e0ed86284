import os
from typing import Any, Dict, Union

import structlog
import yaml
from marshmallow import ValidationError

from ..exceptions import OutputWriteError, ScenarioError
from ..models.scenario import Scenario
from ..validators.schemas import BatchSchema, ScenarioSchema

logger = structlog.get_logger(__name__)

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), 'scenarios')


def _read_yaml(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf8') as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as e:
        logger.error("Lecture du fichier de scénario impossible", path=path, error=str(e))
        raise ScenarioError(f"lecture impossible: {path}", {'error': str(e)})
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: document YAML de type mapping attendu")
    return data


def parse_scenario(data: Dict[str, Any]) -> Scenario:
    try:
        return ScenarioSchema().load(data)
    except ValidationError as err:
        logger.error("Scénario invalide", details=err.messages)
        raise ScenarioError("scénario invalide", err.messages)


def load_scenario(source: Union[str, Dict[str, Any]]) -> Scenario:
    """Charge un scénario depuis un fichier YAML ou un dictionnaire déjà lu."""
    data = _read_yaml(source) if isinstance(source, str) else dict(source)
    # un fichier de benchmark porte son scénario sous la clé "scenario"
    if 'scenario' in data and isinstance(data['scenario'], dict):
        data = data['scenario']
    return parse_scenario(data)


def load_batch(source: Union[str, Dict[str, Any]]) -> Dict[str, Any]:
    """Charge une matrice de benchmark ; la clé scenario devient un Scenario validé."""
    data = _read_yaml(source) if isinstance(source, str) else dict(source)
    try:
        spec = BatchSchema().load(data)
    except ValidationError as err:
        logger.error("Matrice de benchmark invalide", details=err.messages)
        raise ScenarioError("matrice de benchmark invalide", err.messages)
    spec['scenario'] = parse_scenario(spec['scenario'])
    return spec


def preset_path(name: str) -> str:
    path = os.path.join(SCENARIO_DIR, f"{name}.yaml")
    if not os.path.exists(path):
        raise ScenarioError(f"préréglage inconnu: {name}",
                            {'available': sorted(f[:-5] for f in os.listdir(SCENARIO_DIR) if f.endswith('.yaml'))})
    return path


def dump_scenario(scenario: Scenario, path: str):
    try:
        with open(path, 'w', encoding='utf8') as fh:
            yaml.safe_dump(scenario.to_dict(), fh, sort_keys=False)
    except OSError as e:
        logger.error("Écriture du scénario impossible", path=path, error=str(e))
        raise OutputWriteError(path, e)
