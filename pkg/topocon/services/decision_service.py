import math
import time
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Optional, Set, Tuple

import numpy as np
import structlog

from ..exceptions import DisconnectedGraphError, InconsistentRegionError, InvariantViolationError
from ..models.agent import TrackingPolicy
from ..models.decision import ControlKind, ControlMessage, DecisionParams, DecisionRecord, MethodTag
from ..models.message import ChannelModel, KnowledgeBase
from ..models.region import EstimationSettings, UncertaintyRegion
from ..models.topology import Edge, Topology
from ..utils.rng import SeededRNG
from . import estimation_service as est
from .comms_service import DeliveryQueue
from .graph_service import (
    central_node, decremental_update, diameter, is_connected, shortest_path,
)

logger = structlog.get_logger(__name__)


def edge_cost_estimates(edges: Iterable[Edge], regions: Mapping[int, UncertaintyRegion],
                        params: DecisionParams, rng: SeededRNG = None,
                        pair_budget: int = 4096) -> Dict[Edge, float]:
    """Coût estimé (borne haute) de chaque arête, un sous-flux aléatoire par arête."""
    costs = {}
    for edge in sorted(edges):
        i, j = edge
        dd = est.distance_distribution(regions[i], regions[j], rng.fork() if rng else None, pair_budget)
        costs[edge] = est.cost_estimate(dd, params.rho_m, params.c_max, params.R)
    return costs


def part_a_delete(base: Topology, regions: Mapping[int, UncertaintyRegion], params: DecisionParams,
                  now: float, rng: SeededRNG = None, pair_budget: int = 4096,
                  costs: Optional[Mapping[Edge, float]] = None) -> Tuple[FrozenSet[Edge], Topology]:
    """
    Partie A : parcours glouton des arêtes (ordre lexicographique croissant).

    Une arête de coût estimé >= c_bar est retirée à titre provisoire si le graphe
    reste connexe ; le retrait est accepté si le coût estimé total du graphe
    provisoire est <= C(now) - delta et son diamètre <= tau_D.
    """
    if costs is None:
        costs = edge_cost_estimates(base.edges, regions, params, rng, pair_budget)
    budget = params.budget(now) - params.delta
    deleted = set()
    tentative = base
    for edge in sorted(base.edges):
        if costs[edge] < params.c_bar:
            continue
        candidate = decremental_update(tentative, deleted=[edge])
        if not is_connected(candidate):
            continue
        c_new = sum(costs[e] for e in candidate.edges)
        d_hat = diameter(candidate)
        if c_new <= budget and d_hat <= params.tau_D:
            deleted.add(edge)
            tentative = candidate
            logger.debug("Suppression acceptée", edge=edge, c_new=c_new, diameter=d_hat)
    return frozenset(deleted), tentative


def part_b_propose(base_after_delete: Topology, regions: Mapping[int, UncertaintyRegion],
                   params: DecisionParams, excluded: Iterable[Edge] = (), rng: SeededRNG = None,
                   pair_budget: int = 4096,
                   admissible: Optional[FrozenSet[Edge]] = None) -> FrozenSet[Edge]:
    """
    Partie B : toute non-arête de score de confiance >= 1 - p est proposée.

    admissible restreint les candidates aux paires dont le lien peut être maintenu.
    """
    excluded = frozenset(excluded)
    threshold = 1.0 - params.p
    proposed = set()
    for i, j in base_after_delete.non_edges():
        if (i, j) in excluded or (admissible is not None and (i, j) not in admissible):
            continue
        dd = est.distance_distribution(regions[i], regions[j], rng.fork() if rng else None, pair_budget)
        if est.confidence_score(dd, params.rho_m, params.R) >= threshold:
            proposed.add((i, j))
    return frozenset(proposed)


def part_c_reelect(new_topo: Topology) -> int:
    """Partie C : nouveau noeud central = argmin de l'excentricité dans G'."""
    try:
        return central_node(new_topo)
    except DisconnectedGraphError as e:
        logger.error("Graphe validé non connexe", edges=len(new_topo.edges), error=str(e))
        raise InvariantViolationError("réélection sur un graphe non connexe",
                                      {'edges': sorted(new_topo.edges)})


def total_cost(topo: Topology, positions: np.ndarray, params: DecisionParams) -> float:
    """Coût réel total ; infini si le graphe est non connexe."""
    if not is_connected(topo):
        return math.inf
    return sum(
        est.true_edge_cost(float(np.linalg.norm(positions[i - 1] - positions[j - 1])),
                           params.rho_m, params.c_max, params.R)
        for i, j in topo.edges
    )


def decide(central: int, base: Topology, kb: KnowledgeBase, owner_position: np.ndarray, now: float,
           channel: ChannelModel, policies: Mapping[int, TrackingPolicy], d_max: float,
           params: DecisionParams, settings: EstimationSettings, rng: SeededRNG,
           method: MethodTag = MethodTag.A,
           admissible: Optional[FrozenSet[Edge]] = None) -> Tuple[DecisionRecord, Dict[int, UncertaintyRegion]]:
    """
    Décision du noeud central à partir de sa base de connaissances : régions,
    réduction par connexité, parties A et B. La partie C a lieu à la validation.

    Aucune requête n'est émise : la décision lit la base remplie par une
    génération de diffusions périodiques (un tour entrant).
    """
    started = time.perf_counter()
    regions, fallbacks = est.estimate_regions(kb, owner_position, now, channel, policies, d_max,
                                              settings, rng.fork())
    try:
        regions = est.shrink_by_connectivity(regions, base.edges, params.R, settings.shrink_iterations)
    except InconsistentRegionError as e:
        logger.warning("Réduction par connexité abandonnée", error=str(e), central=central)
        fallbacks += 1

    cost_rng, propose_rng = rng.forks(2)
    costs = edge_cost_estimates(base.edges, regions, params, cost_rng, settings.pair_budget)
    deleted, after_delete = part_a_delete(base, regions, params, now, costs=costs)
    proposed = part_b_propose(after_delete, regions, params, excluded=deleted, rng=propose_rng,
                              pair_budget=settings.pair_budget, admissible=admissible)

    others = [r for node, r in regions.items() if node != central]
    ages = [r.provenance[1] for r in others]
    record = DecisionRecord(
        decision_time=now,
        central=central,
        deleted=deleted,
        proposed=proposed,
        est_total_cost=sum(costs[e] for e in after_delete.edges),
        mean_report_age=float(np.mean(ages)) if ages else 0.0,
        mean_region_radius=float(np.mean([est.region_radius(r) for r in others])) if others else 0.0,
        estimation_fallbacks=fallbacks,
        message_rounds={'inbound': 1},
        method=MethodTag(method).value,
    )
    record.wall_time = time.perf_counter() - started
    logger.info("Décision calculée", central=central, t=now, deleted=len(deleted),
                proposed=len(proposed), wall_time=round(record.wall_time, 4))
    return record, regions


def reconcile_deletions(base: Topology, deleted: Iterable[Edge], confirmed: Iterable[Edge],
                        tau_D: Optional[int] = None) -> Topology:
    """
    Applique les ajouts confirmés puis les suppressions une à une (ordre croissant) ;
    une suppression qui déconnecte ou dépasse tau_D est abandonnée.
    """
    current = decremental_update(base, added=frozenset(confirmed) - base.edges)
    for edge in sorted(deleted):
        candidate = decremental_update(current, deleted=[edge])
        if not is_connected(candidate):
            continue
        if tau_D is not None and diameter(candidate) > tau_D:
            continue
        current = candidate
    return current


def _hop_delay(positions: np.ndarray, a: int, b: int, channel: ChannelModel) -> Optional[float]:
    """Délai du saut a -> b, None si le lien est hors de portée."""
    length = float(np.linalg.norm(positions[a - 1] - positions[b - 1]))
    if length > channel.R:
        return None
    return channel.delay(length)


class DecisionExecution:
    """
    Mise en oeuvre d'une décision par messages : le noeud central inonde un ordre
    sur les liens conservés ; une arête supprimée disparaît dès qu'une extrémité
    reçoit l'ordre ; une arête proposée est tentée par la seconde extrémité à le
    recevoir, qui renvoie une confirmation (ou un refus) relayée saut par saut
    vers le central. Le central valide G' quand toutes les réponses sont arrivées
    ou à l'échéance.
    """

    def __init__(self, record: DecisionRecord, base: Topology, channel: ChannelModel,
                 tick: float, reelect: bool = True, make_before_break: bool = False,
                 tau_D: Optional[int] = None, admissible: Optional[FrozenSet[Edge]] = None):
        self.record = record
        self.base = base
        self.channel = channel
        self.reelect = reelect
        # make_before_break : les suppressions n'ont lieu qu'à la validation (remplacement d'arbre)
        self.make_before_break = make_before_break
        self.tau_D = tau_D
        self.admissible = admissible
        self.links = base if make_before_break else decremental_update(base, deleted=record.deleted)
        if not self.links.is_reachable_everywhere:
            logger.warning("Liens conservés non connexes, ordres relayés sur la base", central=record.central)
            self.links = base
        self.pending_deletions = set() if make_before_break else set(record.deleted)
        self.queue = DeliveryQueue()
        self.ordered: Dict[int, float] = {}
        self.attempted: Dict[Edge, bool] = {}
        self.replies: Dict[Edge, Tuple[bool, float]] = {}
        # générations distinctes et nombre de livraisons par type de message
        self.generations: Dict[str, Set[int]] = {kind.value: set() for kind in ControlKind}
        self.counts = {kind.value: 0 for kind in ControlKind}
        self.started = False
        hops = self.links.eccentricity(record.central)
        self.deadline = record.decision_time + 2 * hops * channel.max_hop_delay + 2 * tick

    def _send(self, message: ControlMessage, receiver: int, positions: np.ndarray):
        delay = _hop_delay(positions, message.sender, receiver, self.channel)
        if delay is None:
            logger.debug("Lien hors de portée, message perdu", kind=message.kind.value,
                         sender=message.sender, receiver=receiver)
            return
        self.queue.push(receiver, message, message.emit_time + delay)

    def _on_order(self, node: int, message: ControlMessage, when: float,
                  positions: np.ndarray, realized: Set[Edge]):
        if node in self.ordered:
            return
        self.ordered[node] = when
        for edge in [e for e in self.pending_deletions if node in e]:
            realized.discard(edge)
            self.pending_deletions.discard(edge)
        for neighbor in self.links.neighbors(node):
            if neighbor != message.sender:
                self._send(message.relayed(node, when), neighbor, positions)
        for edge in sorted(self.record.proposed):
            if node not in edge or edge in self.attempted:
                continue
            other = edge[0] if edge[1] == node else edge[1]
            if other in self.ordered:
                self._attempt(edge, node, message, when, positions, realized)

    def _attempt(self, edge: Edge, node: int, order: ControlMessage, when: float,
                 positions: np.ndarray, realized: Set[Edge]):
        i, j = edge
        accepted = float(np.linalg.norm(positions[i - 1] - positions[j - 1])) <= self.channel.R
        if self.admissible is not None and edge not in self.admissible:
            accepted = False
        if accepted:
            realized.add(edge)
        self.attempted[edge] = accepted
        reply = ControlMessage(kind=ControlKind.CONFIRM, central=order.central,
                               decision_time=order.decision_time, sender=node, emit_time=when,
                               generation=order.generation, edge=edge, accepted=accepted)
        self._on_confirm(node, reply, when, positions)

    def _on_confirm(self, node: int, message: ControlMessage, when: float, positions: np.ndarray):
        if node == self.record.central:
            self.replies[message.edge] = (message.accepted, when)
            return
        next_hop = shortest_path(self.links, node, self.record.central)[1]
        self._send(message.relayed(node, when), next_hop, positions)

    def _deliver(self, receiver: int, message: ControlMessage, when: float,
                 positions: np.ndarray, realized: Set[Edge]):
        if message.tag != (self.record.central, self.record.decision_time):
            return
        kind = message.kind.value
        self.counts[kind] += 1
        self.generations[kind].add(message.generation)
        if message.kind is ControlKind.ORDER:
            self._on_order(receiver, message, when, positions, realized)
        else:
            self._on_confirm(receiver, message, when, positions)

    def advance(self, now: float, positions: np.ndarray, realized: Set[Edge]):
        """Livre les messages de contrôle échus ; realized est modifié en place."""
        record = self.record
        if not self.started:
            self.started = True
            order = ControlMessage(kind=ControlKind.ORDER, central=record.central,
                                   decision_time=record.decision_time, sender=record.central,
                                   emit_time=record.decision_time)
            self.generations[ControlKind.ORDER.value].add(order.generation)
            self._on_order(record.central, order, record.decision_time, positions, realized)
        while True:
            due = self.queue.pop_due(now)
            if not due:
                break
            for receiver, message, when in due:
                self._deliver(receiver, message, when, positions, realized)

    def is_complete(self, now: float) -> bool:
        if now >= self.deadline:
            return True
        if self.pending_deletions or len(self.replies) < len(self.record.proposed):
            return False
        return all(arrival <= now for _, arrival in self.replies.values())

    def commit(self, now: float, realized: Set[Edge]) -> Topology:
        """Valide G' = (E \\ E_d) ∪ Ê_f ; les liens non confirmés sont abandonnés."""
        confirmed = frozenset(
            e for e, (accepted, arrival) in self.replies.items()
            if accepted and arrival <= self.deadline
        )
        record = self.record
        if self.make_before_break:
            committed = reconcile_deletions(self.base, record.deleted, confirmed, self.tau_D)
            record.deleted = frozenset(self.base.edges - committed.edges)
        else:
            committed = decremental_update(self.base, deleted=record.deleted, added=confirmed)
        realized.clear()
        realized.update(committed.edges)
        record.confirmed = confirmed
        record.commit_time = now
        record.new_central = part_c_reelect(committed) if self.reelect else record.central
        record.committed_diameter = diameter(committed)
        record.message_rounds = {
            'inbound': record.message_rounds.get('inbound', 0),
            **{kind: len(generations) for kind, generations in self.generations.items()},
        }
        record.message_counts = dict(self.counts)
        if self.queue:
            logger.debug("Messages de contrôle encore en transit à la validation", pending=len(self.queue))
        logger.info("Décision validée", central=record.central, new_central=record.new_central,
                    confirmed=len(confirmed), denied=len(record.proposed) - len(confirmed),
                    diameter=record.committed_diameter, rounds=record.message_rounds)
        return committed


def execute_decision(record: DecisionRecord, base: Topology, channel: ChannelModel,
                     positions_at: Callable[[float], np.ndarray], tick: float,
                     reelect: bool = True, make_before_break: bool = False,
                     tau_D: Optional[int] = None,
                     admissible: Optional[FrozenSet[Edge]] = None) -> Tuple[FrozenSet[Edge], Topology]:
    """
    Exécute une décision hors simulation, positions fournies par positions_at(t).
    Renvoie (arêtes confirmées, topologie validée).
    """
    execution = DecisionExecution(record, base, channel, tick, reelect, make_before_break, tau_D,
                                  admissible)
    realized = set(base.edges)
    now = record.decision_time
    execution.advance(now, positions_at(now), realized)
    while not execution.is_complete(now):
        now += tick
        execution.advance(now, positions_at(now), realized)
    committed = execution.commit(now, realized)
    return record.confirmed, committed
