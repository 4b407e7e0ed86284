"""Modèles de scénario et de métriques de simulation."""
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import ScenarioError
from .decision import BudgetFunction, DecisionParams, DecisionRecord, MethodTag
from .message import ChannelModel
from .region import EstimationSettings


@dataclass(frozen=True)
class ChannelParams:
    v: float = 40.0
    dT_M: float = 0.25
    R: float = 10.0
    drop_probability: float = 0.0
    truncate_k: int = 0

    def model(self) -> ChannelModel:
        return ChannelModel(v=self.v, dT_M=self.dT_M, R=self.R)


@dataclass(frozen=True)
class DynamicsParams:
    """
    lam, d_max : politique de suivi et borne de perturbation.
    reference : wander (défaut), drift ou static.
    env_fraction : part de d_max laissée à l'environnement, le reste à la restriction de mobilité.
    """
    lam: float = 1.0
    d_max: float = 1.0
    disturbance: str = 'random_walk'
    reference: str = 'wander'
    drift_speed: float = 0.3
    wander_amplitude: float = 0.5
    wander_omega: List[float] = field(default_factory=lambda: [0.02, 0.08])
    env_fraction: float = 0.6
    tether: bool = True
    tether_start: float = 0.8


@dataclass(frozen=True)
class DecisionSettings:
    tau_D: int = 8
    c_bar: float = 1.0
    delta: float = 0.0
    p: float = 0.1
    rho_m: float = 0.6
    c_max: float = 1.0
    budget: BudgetFunction = field(default_factory=lambda: BudgetFunction(c0=400.0, gamma=0.1, floor=150.0))
    Delta: Optional[float] = None


@dataclass(frozen=True)
class Scenario:
    """Scénario complet d'une exécution ; toute la stochasticité dérive de seed."""
    n: int = 20
    dimension: int = 2
    seed: int = 0
    duration_steps: int = 3000
    dt: float = 0.1
    method: MethodTag = MethodTag.A
    decision_every: int = 40
    box_side: Optional[float] = None
    initial_positions: Optional[List[List[float]]] = None
    stressed_threshold: Optional[float] = None
    record_messages: bool = False
    channel: ChannelParams = field(default_factory=ChannelParams)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    decision: DecisionSettings = field(default_factory=DecisionSettings)
    estimation: EstimationSettings = field(default_factory=EstimationSettings)
    name: str = 'default'

    def __post_init__(self):
        object.__setattr__(self, 'method', MethodTag(self.method))
        if self.n < 1:
            raise ScenarioError("n doit être >= 1", {'n': self.n})
        if self.initial_positions is not None:
            shape = np.asarray(self.initial_positions, dtype=float).shape
            if shape != (self.n, self.dimension):
                raise ScenarioError("initial_positions incompatible avec n et dimension",
                                    {'shape': list(shape), 'n': self.n, 'dimension': self.dimension})

    def decision_params(self) -> DecisionParams:
        d = self.decision
        return DecisionParams(
            tau_D=d.tau_D, c_bar=d.c_bar, budget=d.budget, delta=d.delta, p=d.p,
            rho_m=d.rho_m, c_max=d.c_max, R=self.channel.R, Delta=d.Delta,
        )

    def with_overrides(self, **overrides) -> 'Scenario':
        """Copie avec surcharges (seed, method, n, steps, tau_D)."""
        changes = {}
        decision_changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key == 'tau_D':
                decision_changes['tau_D'] = int(value)
            elif key == 'steps':
                changes['duration_steps'] = int(value)
            elif key == 'n':
                changes['n'] = int(value)
                changes['initial_positions'] = None
            else:
                changes[key] = value
        if decision_changes:
            changes['decision'] = replace(self.decision, **decision_changes)
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['method'] = self.method.value
        data['decision']['budget'] = self.decision.budget.to_dict()
        return data


@dataclass(frozen=True)
class StepSample:
    """Mesures d'un pas : |E| (graphe validé), |E_r| (réalisé), |E_s| (arêtes coûteuses)."""
    step: int
    t: float
    edges: int
    realized: int
    stressed: int
    broken: int
    cost: float
    cumulative_cost: float


@dataclass
class Snapshot:
    """État final : positions, arêtes réalisées, noeud central et rayons d'incertitude."""
    positions: np.ndarray
    edges: List[List[int]]
    central: Optional[int]
    region_radii: Dict[int, float] = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return int(self.positions.shape[0])


@dataclass
class RunMetrics:
    scenario_name: str
    method: str
    seed: int
    n: int
    tau_D: int
    steps: List[StepSample] = field(default_factory=list)
    decisions: List[DecisionRecord] = field(default_factory=list)
    skipped_decisions: int = 0
    estimation_fallbacks: int = 0
    infeasible_decisions: int = 0
    violations: List[Dict[str, Any]] = field(default_factory=list)
    snapshot: Optional[Snapshot] = None
    stressed_threshold: Optional[float] = None
    messages: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def cumulative_cost(self) -> float:
        return self.steps[-1].cumulative_cost if self.steps else 0.0

    @property
    def decision_times(self) -> List[float]:
        return [d.wall_time for d in self.decisions]

    @property
    def mean_decision_time(self) -> float:
        return float(np.mean(self.decision_times)) if self.decisions else 0.0

    @property
    def committed_decisions(self) -> List[DecisionRecord]:
        return [d for d in self.decisions if d.commit_time is not None]

    def summary(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario_name,
            'method': self.method,
            'seed': self.seed,
            'n': self.n,
            'tau_D': self.tau_D,
            'steps': len(self.steps),
            'cumulative_cost': float(self.cumulative_cost),
            'decisions': len(self.decisions),
            'committed_decisions': len(self.committed_decisions),
            'skipped_decisions': self.skipped_decisions,
            'infeasible_decisions': self.infeasible_decisions,
            'estimation_fallbacks': self.estimation_fallbacks,
            'mean_decision_time': self.mean_decision_time,
            'max_broken_edges': max((s.broken for s in self.steps), default=0),
            'violations': len(self.violations),
        }
