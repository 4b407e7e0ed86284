from typing import FrozenSet, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import structlog

from ..exceptions import DisconnectedGraphError
from ..models.agent import TrackingPolicy
from ..models.decision import DecisionParams, DecisionRecord, MethodTag
from ..models.message import ChannelModel, KnowledgeBase
from ..models.region import EstimationSettings, UncertaintyRegion
from ..models.topology import Edge, Topology
from ..utils.rng import SeededRNG
from .decision_service import decide
from .estimation_service import true_edge_cost
from .graph_service import bfs_tree, build_topology, central_node, diameter, diameter_path, is_connected

logger = structlog.get_logger(__name__)

# Garde contre la division par un coût nul dans le classement des arêtes candidates
COST_EPS = 1e-9


class DisjointSet:
    """Union-find avec compression de chemin et union par rang."""

    def __init__(self, n: int):
        self.parent = list(range(n + 1))
        self.rank = [0] * (n + 1)

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def _length(positions: np.ndarray, edge: Edge) -> float:
    i, j = edge
    return float(np.linalg.norm(positions[i - 1] - positions[j - 1]))


def edge_weights(positions: np.ndarray, edges: Iterable[Edge], params: DecisionParams):
    """Poids réels des arêtes (coût d'entretien) à partir des positions vraies."""
    return {
        e: true_edge_cost(_length(positions, e), params.rho_m, params.c_max, params.R)
        for e in edges
    }


def mst_ideal(positions: np.ndarray, comm_edges: Iterable[Edge], params: DecisionParams) -> Topology:
    """
    Méthode B : arbre couvrant minimal de Kruskal sur le graphe de communication,
    poids = coût réel ; égalités départagées par la longueur puis l'ordre lexicographique.
    """
    n = positions.shape[0]
    comm_edges = frozenset(comm_edges)
    if not is_connected(build_topology(n, comm_edges)):
        logger.error("Graphe de communication non connexe", n=n, edges=len(comm_edges))
        raise DisconnectedGraphError("graphe de communication non connexe")
    weights = edge_weights(positions, comm_edges, params)
    order = sorted(comm_edges, key=lambda e: (weights[e], _length(positions, e), e))
    dsu = DisjointSet(n)
    tree = []
    for edge in order:
        if dsu.union(*edge):
            tree.append(edge)
            if len(tree) == n - 1:
                break
    return build_topology(n, tree)


def tree_weight(topo: Topology, positions: np.ndarray, params: DecisionParams) -> float:
    return sum(edge_weights(positions, topo.edges, params).values())


def _repair_candidates(current: Topology, comm_edges: FrozenSet[Edge]) -> List[Edge]:
    on_path = set(diameter_path(current))
    return sorted(
        e for e in comm_edges - current.edges
        if e[0] in on_path or e[1] in on_path
    )


def mst_diameter_bounded(positions: np.ndarray, comm_edges: Iterable[Edge], tau_D: int,
                         params: DecisionParams) -> Tuple[Topology, bool]:
    """
    Méthode C : MST puis ajout glouton d'arêtes incidentes au chemin diamétral,
    meilleure réduction de diamètre par unité de coût ajouté, jusqu'à D <= tau_D.
    Sans candidat utile, repli sur un arbre BFS enraciné au noeud central du
    graphe de communication. Renvoie (topologie, contrainte violée).
    """
    n = positions.shape[0]
    comm_edges = frozenset(comm_edges)
    current = mst_ideal(positions, comm_edges, params)
    weights = edge_weights(positions, comm_edges, params)
    while diameter(current) > tau_D:
        d_current = diameter(current)
        best_key, best = None, None
        for edge in _repair_candidates(current, comm_edges):
            # recalcul complet des distances pour chaque évaluation
            candidate = build_topology(n, current.edges | {edge})
            reduction = d_current - diameter(candidate)
            if reduction <= 0:
                continue
            key = (-reduction / (weights[edge] + COST_EPS), -reduction, edge)
            if best_key is None or key < best_key:
                best_key, best = key, candidate
        if best is None:
            root = central_node(build_topology(n, comm_edges))
            fallback = bfs_tree(build_topology(n, comm_edges), root)
            violated = diameter(fallback) > tau_D
            logger.warning("Réparation du diamètre impossible, repli sur un arbre BFS",
                           root=root, diameter=diameter(fallback), tau_D=tau_D, violated=violated)
            return fallback, violated
        current = best
    return current, False


def fixed_leader_decide(central: int, base: Topology, kb: KnowledgeBase, owner_position: np.ndarray,
                        now: float, channel: ChannelModel, policies: Mapping[int, TrackingPolicy],
                        d_max: float, params: DecisionParams, settings: EstimationSettings,
                        rng: SeededRNG, admissible: Optional[FrozenSet[Edge]] = None
                        ) -> Tuple[DecisionRecord, Mapping[int, UncertaintyRegion]]:
    """Méthode D : parties A et B identiques, le noeud central n'est jamais réélu."""
    record, regions = decide(central, base, kb, owner_position, now, channel, policies, d_max,
                             params, settings, rng, method=MethodTag.D, admissible=admissible)
    record.new_central = central
    return record, regions


def plan_tree(method: MethodTag, positions: np.ndarray, comm_edges: Iterable[Edge],
              params: DecisionParams) -> Tuple[Topology, bool]:
    """Topologie cible des méthodes centralisées B et C, calculée sur les positions vraies."""
    method = MethodTag(method)
    if method is MethodTag.B:
        return mst_ideal(positions, comm_edges, params), False
    if method is MethodTag.C:
        return mst_diameter_bounded(positions, comm_edges, params.tau_D, params)
    raise ValueError(f"méthode {method.value} sans arbre cible")
