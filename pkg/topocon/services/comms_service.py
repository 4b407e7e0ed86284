import heapq
import itertools
import json
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import structlog

from ..exceptions import InvalidParameterError, OutputWriteError
from ..models.decision import ControlMessage
from ..models.message import ChannelModel, KnowledgeBase, KnowledgeEntry, Message, Record
from ..utils.rng import SeededRNG

logger = structlog.get_logger(__name__)

Delivery = Tuple[int, Message, float]


def broadcast(sender: int, kb: KnowledgeBase, positions: np.ndarray, channel: ChannelModel,
              now: float, rng: Optional[SeededRNG] = None, drop_probability: float = 0.0,
              truncate_k: int = 0) -> List[Delivery]:
    """
    Diffusion du message M^sender à tous les robots à portée R.

    positions: matrice (N, dim) des positions vraies (ligne k = noeud k+1).
    """
    sender_pos = positions[sender - 1]
    records = [r for r in kb.to_records() if r.node != sender]
    records.append(Record(node=sender, position=np.array(sender_pos, dtype=float), timestamp=now))
    message = Message(origin=sender, emit_time=now,
                      records=tuple(sorted(records, key=lambda r: r.node)))
    if truncate_k:
        message = truncate(message, truncate_k, sender_pos)

    distances = np.linalg.norm(positions - sender_pos, axis=1)
    deliveries = []
    for receiver in range(1, positions.shape[0] + 1):
        if receiver == sender or distances[receiver - 1] > channel.R:
            continue
        if drop_probability > 0.0 and rng is not None and rng.random() < drop_probability:
            logger.debug("Message perdu", origin=sender, receiver=receiver)
            continue
        deliveries.append((receiver, message, now + channel.delay(float(distances[receiver - 1]))))
    return deliveries


def merge(kb: KnowledgeBase, msg: Message, receive_time: float) -> KnowledgeBase:
    """
    Fusion au plus récent : un enregistrement remplace l'entrée stockée seulement
    s'il est strictement plus récent ; l'entrée du propriétaire n'est jamais écrasée.
    La base est mise à jour en place et renvoyée.
    """
    if receive_time < msg.emit_time:
        raise InvalidParameterError("réception antérieure à l'émission")
    hop = (msg.origin, receive_time - msg.emit_time)
    for record in msg.records:
        if record.node == kb.owner:
            continue
        current = kb.entries.get(record.node)
        if current is not None and record.timestamp <= current.timestamp:
            continue
        kb.entries[record.node] = KnowledgeEntry(
            position=record.position,
            timestamp=record.timestamp,
            receive_time=receive_time,
            route=record.route + (hop,),
        )
    return kb


def truncate(msg: Message, k: int, sender_position: np.ndarray) -> Message:
    """Conserve l'enregistrement de l'émetteur et les k plus proches (égalité : plus petit id)."""
    if k < 1:
        raise InvalidParameterError(f"k doit être >= 1, reçu {k}")
    own = [r for r in msg.records if r.node == msg.origin]
    others = [r for r in msg.records if r.node != msg.origin]
    if len(others) <= k:
        return msg
    others.sort(key=lambda r: (float(np.linalg.norm(r.position - sender_position)), r.node))
    kept = sorted(own + others[:k], key=lambda r: r.node)
    return Message(origin=msg.origin, emit_time=msg.emit_time, records=tuple(kept))


def information_ages(kb: KnowledgeBase, now: float) -> Dict[int, float]:
    return {node: now - entry.timestamp for node, entry in kb.entries.items()}


class DeliveryQueue:
    """File d'événements ordonnée par (instant de livraison, ordre d'insertion)."""

    def __init__(self):
        self._heap = []
        self._counter = itertools.count()

    def push(self, receiver: int, message: Union[Message, ControlMessage], delivery_time: float):
        heapq.heappush(self._heap, (delivery_time, next(self._counter), receiver, message))

    def pop_due(self, now: float) -> List[Delivery]:
        due = []
        while self._heap and self._heap[0][0] <= now:
            delivery_time, _, receiver, message = heapq.heappop(self._heap)
            due.append((receiver, message, delivery_time))
        return due

    def __len__(self) -> int:
        return len(self._heap)


class MessageLog:
    """Journal des livraisons (origin, emit_time, receiver, delivery_time)."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.entries = []

    def record(self, receiver: int, message: Message, delivery_time: float):
        if self.enabled:
            self.entries.append({
                'origin': message.origin,
                'emit_time': message.emit_time,
                'receiver': receiver,
                'delivery_time': delivery_time,
            })

    def export(self, path: str):
        try:
            with open(path, 'w', encoding='utf8') as fh:
                for entry in self.entries:
                    fh.write(json.dumps(entry) + '\n')
        except OSError as e:
            logger.error("Erreur export journal messages", path=path, error=str(e))
            raise OutputWriteError(path, e)
