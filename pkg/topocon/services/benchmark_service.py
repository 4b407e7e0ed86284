import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import stats

from ..exceptions import TopoconError
from ..models.decision import MethodTag
from ..models.scenario import Scenario
from ..utils.rng import derive_seeds
from . import simulation_service

logger = structlog.get_logger(__name__)

# Niveau de confiance des comparaisons appariées entre méthodes
CONFIDENCE = 0.95


@dataclass
class BatchResult:
    """Résultat d'un benchmark : une ligne par (méthode, N, tau_D), plus le détail des exécutions."""
    name: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    runs: List[Dict[str, Any]] = field(default_factory=list)
    comparisons: List[Dict[str, Any]] = field(default_factory=list)
    # exposant de croissance du temps de décision avec N, par méthode
    scaling: Dict[str, float] = field(default_factory=dict)

    @property
    def failures(self) -> List[Dict[str, Any]]:
        return [r for r in self.runs if r.get('failed')]

    def row(self, method: str, n: Optional[int] = None, tau_D: Optional[int] = None) -> Dict[str, Any]:
        for row in self.rows:
            if row['method'] == method and n in (None, row['n']) and tau_D in (None, row['tau_D']):
                return row
        raise KeyError((method, n, tau_D))


def repetition_seeds(seed: int, repetitions: int) -> List[int]:
    """La première répétition garde la graine du scénario, les suivantes en dérivent."""
    if repetitions <= 1:
        return [seed]
    return [seed] + derive_seeds(seed, repetitions - 1)


def run_one(scenario: Scenario) -> Dict[str, Any]:
    """Exécution isolée ; un échec est consigné sans interrompre le lot."""
    try:
        summary = simulation_service.run(scenario).summary()
        summary['failed'] = False
        return summary
    except TopoconError as e:
        logger.warning("Exécution en échec", seed=scenario.seed, method=scenario.method.value, error=str(e))
        return {
            'scenario': scenario.name, 'method': scenario.method.value, 'seed': scenario.seed,
            'n': scenario.n, 'tau_D': scenario.decision.tau_D, 'failed': True,
            'error': f"{type(e).__name__}: {e}",
        }


def _execute(scenarios: Sequence[Scenario], workers: int) -> List[Dict[str, Any]]:
    if workers <= 1 or len(scenarios) <= 1:
        return [run_one(s) for s in scenarios]
    # map conserve l'ordre : résultats identiques à l'exécution séquentielle
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, scenarios))


def _aggregate(runs: Iterable[Dict[str, Any]]) -> List[Dict[str, Any]]:
    groups: Dict[Tuple[str, int, int], List[Dict[str, Any]]] = {}
    for run in runs:
        groups.setdefault((run['method'], run['n'], run['tau_D']), []).append(run)
    rows = []
    for (method, n, tau_D), members in sorted(groups.items()):
        ok = [r for r in members if not r['failed']]
        costs = np.array([r['cumulative_cost'] for r in ok], dtype=float)
        times = np.array([r['mean_decision_time'] for r in ok], dtype=float)
        rows.append({
            'method': method,
            'n': n,
            'tau_D': tau_D,
            'runs': len(members),
            'failures': len(members) - len(ok),
            'mean_cost': float(costs.mean()) if ok else math.nan,
            'std_cost': float(costs.std(ddof=1)) if len(ok) > 1 else 0.0,
            'mean_decision_time': float(times.mean()) if ok else math.nan,
            'violations': sum(r['violations'] for r in ok),
        })
    return rows


def batch(scenarios: Sequence[Scenario], repetitions: int = 1, workers: int = 1,
          name: str = 'batch') -> BatchResult:
    """
    Chaque scénario est répété avec des graines dérivées ; le placement initial est
    retiré pour chaque graine. Renvoie le tableau de synthèse par (méthode, N, tau_D).
    """
    jobs = []
    for scenario in scenarios:
        for k, seed in enumerate(repetition_seeds(scenario.seed, repetitions)):
            positions = scenario.initial_positions if k == 0 else None
            jobs.append(replace(scenario, seed=seed, initial_positions=positions))
    logger.info("Lancement du benchmark", name=name, runs=len(jobs), workers=workers)
    runs = _execute(jobs, workers)
    result = BatchResult(name=name, rows=_aggregate(runs), runs=runs)
    logger.info("Benchmark terminé", name=name, runs=len(runs), failures=len(result.failures))
    return result


def paired_comparison(result: BatchResult, better: str, worse: str) -> Dict[str, Any]:
    """
    Différence appariée (worse - better) sur les graines communes ; l'ordre
    better < worse est établi si la borne basse de l'intervalle de confiance est > 0.
    """
    def by_key(method):
        return {(r['n'], r['tau_D'], r['seed']): r['cumulative_cost']
                for r in result.runs if r['method'] == method and not r['failed']}

    a, b = by_key(better), by_key(worse)
    shared = sorted(set(a) & set(b))
    diffs = np.array([b[k] - a[k] for k in shared], dtype=float)
    comparison = {'better': better, 'worse': worse, 'pairs': len(shared),
                  'mean_diff': float(diffs.mean()) if len(shared) else math.nan,
                  'ci_low': math.nan, 'ci_high': math.nan, 'established': False}
    if len(shared) > 1:
        sem = float(diffs.std(ddof=1)) / math.sqrt(len(shared))
        half = float(stats.t.ppf(0.5 + CONFIDENCE / 2, len(shared) - 1)) * sem
        comparison.update(ci_low=comparison['mean_diff'] - half, ci_high=comparison['mean_diff'] + half)
        comparison['established'] = comparison['ci_low'] > 0
    return comparison


def compare(scenario: Scenario, methods: Sequence[str] = ('A', 'B', 'C', 'D'), repetitions: int = 10,
            workers: int = 1) -> BatchResult:
    """Toutes les méthodes sur les mêmes graines, avec les comparaisons appariées usuelles."""
    methods = [MethodTag(m) for m in methods]
    result = batch([replace(scenario, method=m) for m in methods], repetitions, workers,
                   name=f"compare-{scenario.name}")
    present = {m.value for m in methods}
    for better, worse in (('B', 'A'), ('A', 'C'), ('A', 'D')):
        if better in present and worse in present:
            result.comparisons.append(paired_comparison(result, better, worse))
    return result


def expand_matrix(spec: Dict[str, Any]) -> List[Scenario]:
    """Produit (méthodes x tailles x bornes) à partir d'une matrice validée par BatchSchema."""
    base: Scenario = spec['scenario'].with_overrides(seed=spec['seed'], steps=spec.get('steps'))
    nodes = spec.get('nodes') or [base.n]
    bounds = spec.get('tau_D') or [base.decision.tau_D]
    scenarios = []
    for method in spec['methods']:
        for n in nodes:
            for tau_D in bounds:
                scenarios.append(base.with_overrides(method=MethodTag(method), n=n, tau_D=tau_D))
    return scenarios


def scaling_exponent(ns: Sequence[int], times: Sequence[float]) -> float:
    """Pente de log(temps) contre log(N) par moindres carrés (1 : linéaire, 2 : quadratique)."""
    ns = np.asarray(ns, dtype=float)
    times = np.asarray(times, dtype=float)
    keep = np.isfinite(times) & (times > 0)
    if keep.sum() < 2 or np.unique(ns[keep]).size < 2:
        raise ValueError("au moins deux tailles N avec un temps mesuré sont nécessaires")
    slope, _ = np.polyfit(np.log(ns[keep]), np.log(times[keep]), 1)
    return float(slope)


def run_matrix(spec: Dict[str, Any], workers: int = 1) -> BatchResult:
    result = batch(expand_matrix(spec), spec['repetitions'], workers, name=spec['name'])
    present = set(spec['methods'])
    for better, worse in (('B', 'A'), ('A', 'C'), ('A', 'D')):
        if better in present and worse in present:
            result.comparisons.append(paired_comparison(result, better, worse))
    if len(spec.get('nodes') or []) > 1:
        for method in spec['methods']:
            rows = [r for r in result.rows if r['method'] == method]
            try:
                result.scaling[method] = scaling_exponent([r['n'] for r in rows],
                                                          [r['mean_decision_time'] for r in rows])
            except ValueError as e:
                logger.warning("Exposant de croissance indisponible", method=method, error=str(e))
    return result


def is_strictly_decreasing(values: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(values, values[1:]))
