"""Modèles de communication : canal, messages diffusés, base de connaissances."""
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import numpy as np

from ..exceptions import InvalidParameterError

# Route d'un enregistrement : ((relais émetteur, délai du saut), ...) dans l'ordre de propagation
Route = Tuple[Tuple[int, float], ...]


@dataclass(frozen=True)
class ChannelModel:
    """Canal de diffusion : délai = distance / v + dT_M, portée R."""
    v: float
    dT_M: float
    R: float

    def __post_init__(self):
        if self.v <= 0 or self.R <= 0 or self.dT_M < 0:
            raise InvalidParameterError("canal: v > 0, R > 0 et dT_M >= 0 requis")

    def delay(self, distance: float) -> float:
        return distance / self.v + self.dT_M

    @property
    def max_hop_delay(self) -> float:
        return self.R / self.v + self.dT_M


@dataclass(frozen=True)
class Record:
    """Position p du noeud `node` à l'instant `timestamp`, avec sa route de relais."""
    node: int
    position: np.ndarray
    timestamp: float
    route: Route = ()


@dataclass(frozen=True)
class Message:
    origin: int
    emit_time: float
    records: Tuple[Record, ...]

    def __post_init__(self):
        seen = set()
        for record in self.records:
            if record.timestamp > self.emit_time:
                raise InvalidParameterError(
                    f"enregistrement du noeud {record.node} postérieur à l'émission"
                )
            if record.node in seen:
                raise InvalidParameterError(f"enregistrement dupliqué pour le noeud {record.node}")
            seen.add(record.node)

    def record_for(self, node: int):
        return next((r for r in self.records if r.node == node), None)


@dataclass
class KnowledgeEntry:
    position: np.ndarray
    timestamp: float
    receive_time: float
    route: Route = ()


@dataclass
class KnowledgeBase:
    """Dernières informations connues par `owner` sur chaque noeud."""
    owner: int
    entries: Dict[int, KnowledgeEntry] = field(default_factory=dict)

    def refresh_self(self, position: np.ndarray, now: float):
        self.entries[self.owner] = KnowledgeEntry(
            position=np.array(position, dtype=float), timestamp=now, receive_time=now, route=()
        )

    def get(self, node: int):
        return self.entries.get(node)

    def __contains__(self, node: int) -> bool:
        return node in self.entries

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def copy(self) -> 'KnowledgeBase':
        return KnowledgeBase(owner=self.owner, entries={
            node: KnowledgeEntry(entry.position.copy(), entry.timestamp, entry.receive_time, entry.route)
            for node, entry in self.entries.items()
        })

    def to_records(self) -> Tuple[Record, ...]:
        return tuple(
            Record(node=node, position=entry.position, timestamp=entry.timestamp, route=entry.route)
            for node, entry in sorted(self.entries.items())
        )
