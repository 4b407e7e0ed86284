"""Modèles de décision du noeud central."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Optional, Tuple

from ..exceptions import InvalidParameterError
from .topology import Edge


class MethodTag(str, Enum):
    """A : méthode hybride ; B : MST idéal ; C : MST à diamètre borné ; D : leader fixe."""
    A = 'A'
    B = 'B'
    C = 'C'
    D = 'D'

    @property
    def uses_central_node(self) -> bool:
        return self in (MethodTag.A, MethodTag.D)


# Nom du domaine pour les méthodes de comparaison
BaselineKind = MethodTag


@dataclass(frozen=True)
class BudgetFunction:
    """C(t) = max(floor, c0 - gamma t), non croissante."""
    c0: float
    gamma: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidParameterError("gamma doit être >= 0 (budget non croissant)")

    def __call__(self, t: float) -> float:
        return max(self.floor, self.c0 - self.gamma * t)

    def to_dict(self):
        return {'c0': self.c0, 'gamma': self.gamma, 'floor': self.floor}


@dataclass(frozen=True)
class DecisionParams:
    tau_D: int
    c_bar: float
    budget: BudgetFunction
    delta: float
    p: float
    rho_m: float
    c_max: float
    R: float
    # présent dans la liste d'entrée de l'algorithme mais jamais utilisé
    Delta: Optional[float] = None

    def __post_init__(self):
        if self.tau_D < 1:
            raise InvalidParameterError("tau_D doit être >= 1")
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError("p doit être dans ]0, 1[")
        if self.delta < 0:
            raise InvalidParameterError("delta doit être >= 0")
        if not 0.0 < self.rho_m < 1.0:
            raise InvalidParameterError("rho_m doit être dans ]0, 1[")
        if self.c_max <= 0 or self.R <= 0:
            raise InvalidParameterError("c_max et R doivent être > 0")

    @property
    def saturated_edge_cost(self) -> float:
        """Coût d'une arête de longueur R."""
        return self.c_max * self.R * (1.0 - self.rho_m)


@dataclass
class DecisionRecord:
    """Une décision du noeud central, complétée à la validation."""
    decision_time: float
    central: int
    deleted: FrozenSet[Edge]
    proposed: FrozenSet[Edge]
    confirmed: FrozenSet[Edge] = frozenset()
    new_central: Optional[int] = None
    est_total_cost: float = 0.0
    commit_time: Optional[float] = None
    wall_time: float = 0.0
    mean_report_age: float = 0.0
    mean_region_radius: float = 0.0
    estimation_fallbacks: int = 0
    message_rounds: Dict[str, int] = field(default_factory=dict)
    message_counts: Dict[str, int] = field(default_factory=dict)
    committed_diameter: Optional[int] = None
    method: str = MethodTag.A.value
    infeasible: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method,
            'decision_time': self.decision_time,
            'central': self.central,
            'deleted': [list(e) for e in sorted(self.deleted)],
            'proposed': [list(e) for e in sorted(self.proposed)],
            'confirmed': [list(e) for e in sorted(self.confirmed)],
            'new_central': self.new_central,
            'est_total_cost': self.est_total_cost,
            'commit_time': self.commit_time,
            'wall_time': self.wall_time,
            'mean_report_age': self.mean_report_age,
            'mean_region_radius': self.mean_region_radius,
            'estimation_fallbacks': self.estimation_fallbacks,
            'message_rounds': dict(self.message_rounds),
            'message_counts': dict(self.message_counts),
            'committed_diameter': self.committed_diameter,
            'infeasible': self.infeasible,
        }


class ControlKind(str, Enum):
    ORDER = 'order'
    CONFIRM = 'confirm'


@dataclass(frozen=True)
class ControlMessage:
    """
    Message de mise en oeuvre d'une décision, étiqueté par (central, decision_time).

    generation : tour de protocole ; un ordre réémis ou une confirmation d'un
    second tour porterait une génération différente.
    """
    kind: ControlKind
    central: int
    decision_time: float
    sender: int
    emit_time: float
    generation: int = 1
    edge: Optional[Edge] = None
    accepted: bool = False

    @property
    def tag(self) -> Tuple[int, float]:
        return self.central, self.decision_time

    def relayed(self, sender: int, emit_time: float) -> 'ControlMessage':
        return ControlMessage(kind=self.kind, central=self.central, decision_time=self.decision_time,
                              sender=sender, emit_time=emit_time, generation=self.generation,
                              edge=self.edge, accepted=self.accepted)
