from collections import deque
from typing import FrozenSet, Iterable, List, Set, Tuple

import numpy as np
import structlog
from cachetools import LRUCache, cached
from cachetools.keys import hashkey
from scipy.linalg import eigvalsh

from ..exceptions import DisconnectedGraphError, EdgeNotFoundError, GraphError
from ..models.topology import (
    INF_HOPS, SIGMA_CAP, Edge, Topology, normalize_edge, normalize_edges,
)

logger = structlog.get_logger(__name__)

# Seuil de connexité sur lambda_2
LAMBDA2_TOL = 1e-8

# Les topologies sont immuables : on mémoïse la construction par (n, arêtes)
_topology_cache = LRUCache(maxsize=2048)


def _adjacency_lists(n: int, edges: Iterable[Edge]) -> List[List[int]]:
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a - 1].append(b - 1)
        adj[b - 1].append(a - 1)
    for row in adj:
        row.sort()
    return adj


def _bfs_counts(adj: List[List[int]], source: int) -> Tuple[np.ndarray, np.ndarray]:
    """BFS depuis source : distances en sauts et nombres de plus courts chemins (Brandes)."""
    n = len(adj)
    dist = [INF_HOPS] * n
    counts = [0] * n
    dist[source] = 0
    counts[source] = 1
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        for w in adj[u]:
            if dist[w] == INF_HOPS:
                dist[w] = du + 1
                queue.append(w)
            if dist[w] == du + 1:
                counts[w] = min(counts[w] + counts[u], SIGMA_CAP)
    return np.array(dist, dtype=np.int64), np.array(counts, dtype=np.uint64)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _eccentricities(dist: np.ndarray) -> np.ndarray:
    if dist.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return dist.max(axis=1)


def apsp(topo_or_n, edges=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distances et comptes de plus courts chemins pour toutes les paires.

    Accepte une Topology ou (n, arêtes). Recalcul complet par BFS depuis chaque source.
    """
    if isinstance(topo_or_n, Topology):
        n, edges = topo_or_n.n, topo_or_n.edges
    else:
        n = int(topo_or_n)
    adj = _adjacency_lists(n, edges)
    dist = np.full((n, n), INF_HOPS, dtype=np.int64)
    sigma = np.zeros((n, n), dtype=np.uint64)
    for source in range(n):
        dist[source], sigma[source] = _bfs_counts(adj, source)
    return dist, sigma


@cached(_topology_cache, key=lambda n, edges: hashkey(n, edges))
def _build_topology(n: int, edges: FrozenSet[Edge]) -> Topology:
    dist, sigma = apsp(n, edges)
    return Topology(
        n=n,
        edges=edges,
        dist=_freeze(dist),
        sigma=_freeze(sigma),
        ecc=_freeze(_eccentricities(dist)),
    )


def build_topology(n: int, edges: Iterable[Iterable[int]] = ()) -> Topology:
    """Construit une Topology validée avec ses caches."""
    frozen = normalize_edges(edges)
    for a, b in frozen:
        if not (1 <= a <= n and 1 <= b <= n):
            raise GraphError(f"arête ({a}, {b}) hors de 1..{n}")
    return _build_topology(int(n), frozen)


def laplacian(topo: Topology) -> np.ndarray:
    """L = D - A (matrice n x n, lignes de somme nulle)."""
    adjacency = np.zeros((topo.n, topo.n), dtype=float)
    for a, b in topo.edges:
        adjacency[a - 1, b - 1] = 1.0
        adjacency[b - 1, a - 1] = 1.0
    return np.diag(adjacency.sum(axis=1)) - adjacency


def algebraic_connectivity(topo: Topology) -> float:
    """Deuxième plus petite valeur propre du laplacien (0 si n < 2)."""
    if topo.n < 2:
        return 0.0
    return float(eigvalsh(laplacian(topo), subset_by_index=[1, 1])[0])


def is_reachable(topo: Topology) -> bool:
    """Connexité par parcours en largeur depuis le noeud 1."""
    if topo.n <= 1:
        return True
    adj = _adjacency_lists(topo.n, topo.edges)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == topo.n


def is_connected(topo: Topology) -> bool:
    """Connexité par lambda_2 > LAMBDA2_TOL, recoupée par BFS."""
    if topo.n <= 1:
        return True
    spectral = algebraic_connectivity(topo) > LAMBDA2_TOL
    reachable = is_reachable(topo)
    if spectral != reachable:
        logger.error("Désaccord lambda_2 / BFS", n=topo.n, edges=len(topo.edges))
        raise GraphError("lambda_2 et BFS en désaccord sur la connexité")
    return reachable


def _require_connected(topo: Topology):
    if not topo.is_reachable_everywhere:
        raise DisconnectedGraphError("graphe non connexe : excentricité infinie")


def diameter(topo: Topology) -> int:
    _require_connected(topo)
    return int(topo.ecc.max()) if topo.n else 0


def radius(topo: Topology) -> int:
    _require_connected(topo)
    return int(topo.ecc.min()) if topo.n else 0


def central_node(topo: Topology) -> int:
    """Noeud d'excentricité minimale, plus petit identifiant en cas d'égalité."""
    _require_connected(topo)
    return int(np.argmin(topo.ecc)) + 1


def edge_is_critical(topo: Topology, e: Edge, u: int, v: int) -> bool:
    """Vrai si tous les plus courts chemins u-v empruntent l'arête e."""
    a, b = normalize_edge(*e)
    if (a, b) not in topo.edges:
        raise EdgeNotFoundError(f"arête ({a}, {b}) absente")
    if u == v:
        return False
    duv = topo.distance(u, v)
    if duv >= INF_HOPS:
        return False
    through = 0
    if topo.distance(u, a) + 1 + topo.distance(b, v) == duv:
        through += topo.path_count(u, a) * topo.path_count(b, v)
    if topo.distance(u, b) + 1 + topo.distance(a, v) == duv:
        through += topo.path_count(u, b) * topo.path_count(a, v)
    return through > 0 and min(through, SIGMA_CAP) == topo.path_count(u, v)


def _on_shortest_dag(dist_row: np.ndarray, a0: int, b0: int) -> bool:
    # l'arête appartient au DAG des plus courts chemins issu de la source
    da, db = int(dist_row[a0]), int(dist_row[b0])
    if da >= INF_HOPS and db >= INF_HOPS:
        return False
    return abs(da - db) == 1


def _changes_with_addition(dist_row: np.ndarray, a0: int, b0: int) -> bool:
    return int(dist_row[a0]) != int(dist_row[b0])


def eccentricity_affected_sources(topo: Topology, deleted: Iterable[Edge]) -> Set[int]:
    """
    Sources dont au moins une distance augmente : une arête supprimée est critique
    pour une paire (u, v). Même test que edge_is_critical, vectorisé sur toutes les paires.
    """
    dist = topo.dist
    sigma = topo.sigma.astype(float)
    reachable = dist < INF_HOPS
    np.fill_diagonal(reachable, False)
    affected = np.zeros(topo.n, dtype=bool)
    for a, b in (normalize_edge(*e) for e in deleted):
        if (a, b) not in topo.edges:
            raise EdgeNotFoundError(f"arête ({a}, {b}) absente")
        through = np.zeros_like(sigma)
        for x, y in ((a - 1, b - 1), (b - 1, a - 1)):
            on_path = dist[:, x][:, None] + 1 + dist[y, :][None, :] == dist
            through += np.where(on_path, sigma[:, x][:, None] * sigma[y, :][None, :], 0.0)
        critical = reachable & (through > 0) & np.isclose(through, sigma)
        affected |= critical.any(axis=1)
    return {int(u) + 1 for u in np.flatnonzero(affected)}


def _update_rows(n, edges, dist, sigma, sources, label):
    adj = _adjacency_lists(n, edges)
    for s in sources:
        row_dist, row_sigma = _bfs_counts(adj, s)
        dist[s, :] = row_dist
        dist[:, s] = row_dist
        sigma[s, :] = row_sigma
        sigma[:, s] = row_sigma
    logger.debug("Mise à jour incrémentale", phase=label, sources=len(sources), n=n)


def decremental_update(topo: Topology, deleted: Iterable[Iterable[int]] = (),
                       added: Iterable[Iterable[int]] = ()) -> Topology:
    """
    Nouvelle topologie après suppression puis ajout d'arêtes, caches mis à jour.

    Si plus de n/2 sources voient une distance augmenter (arête supprimée critique),
    on recalcule tout. Sinon seules les sources dont le DAG des plus courts chemins
    contient une arête supprimée (ou pour lesquelles une arête ajoutée raccourcit ou
    double un chemin) sont recalculées. Le résultat est identique au recalcul complet.
    """
    deleted = normalize_edges(deleted)
    added = normalize_edges(added)
    missing = deleted - topo.edges
    if missing:
        raise EdgeNotFoundError(f"arêtes absentes: {sorted(missing)}")
    if added & topo.edges:
        raise GraphError(f"arêtes déjà présentes: {sorted(added & topo.edges)}")
    if not deleted and not added:
        return topo

    n = topo.n
    new_edges = (topo.edges - deleted) | added
    cached_result = _topology_cache.get(hashkey(n, new_edges))
    if cached_result is not None:
        return cached_result

    dist = topo.dist.copy()
    sigma = topo.sigma.copy()
    current = topo.edges

    if deleted:
        current = current - deleted
        if len(eccentricity_affected_sources(topo, deleted)) > n / 2:
            return _build_topology(n, new_edges)
        # les comptes sigma changent aussi hors des sources affectées : tout le DAG est repris
        sources = [
            s for s in range(n)
            if any(_on_shortest_dag(dist[s], a - 1, b - 1) for a, b in deleted)
        ]
        if len(sources) > n / 2:
            return _build_topology(n, new_edges)
        _update_rows(n, current, dist, sigma, sources, 'suppression')

    if added:
        current = current | added
        sources = [
            s for s in range(n)
            if any(_changes_with_addition(dist[s], a - 1, b - 1) for a, b in added)
        ]
        if len(sources) > n / 2:
            return _build_topology(n, new_edges)
        _update_rows(n, current, dist, sigma, sources, 'ajout')

    result = Topology(
        n=n,
        edges=new_edges,
        dist=_freeze(dist),
        sigma=_freeze(sigma),
        ecc=_freeze(_eccentricities(dist)),
    )
    _topology_cache[hashkey(n, new_edges)] = result
    return result


def diameter_path(topo: Topology) -> List[int]:
    """Un chemin de longueur D : extrémités d'identifiants minimaux, parents BFS minimaux."""
    _require_connected(topo)
    if topo.n <= 1:
        return list(topo.nodes)
    d = diameter(topo)
    flat = int(np.flatnonzero(topo.dist == d)[0])
    u, v = divmod(flat, topo.n)
    path = [v]
    current = v
    while current != u:
        step = next(
            w for w in sorted(topo.neighbors(current + 1))
            if topo.dist[u, w - 1] == topo.dist[u, current] - 1
        )
        current = step - 1
        path.append(current)
    return [p + 1 for p in reversed(path)]


def shortest_path(topo: Topology, source: int, target: int) -> List[int]:
    """Plus court chemin source -> target, parents d'identifiant minimal."""
    if topo.distance(source, target) >= INF_HOPS:
        raise DisconnectedGraphError(f"{target} injoignable depuis {source}")
    path = [target]
    current = target
    while current != source:
        current = next(
            w for w in topo.neighbors(current)
            if topo.distance(source, w) == topo.distance(source, current) - 1
        )
        path.append(current)
    return list(reversed(path))


def bfs_tree(topo: Topology, root: int) -> Topology:
    """Arbre BFS enraciné en root (parents d'identifiant minimal)."""
    _require_connected(topo)
    tree = set()
    for v in topo.nodes:
        if v == root:
            continue
        parent = next(
            w for w in topo.neighbors(v)
            if topo.distance(root, w) == topo.distance(root, v) - 1
        )
        tree.add(normalize_edge(parent, v))
    return build_topology(topo.n, tree)


def read_edge_list(text: str, n: int = None) -> Topology:
    """Lit une liste d'arêtes "i j" (1-indexée), lignes vides et # ignorées."""
    edges = []
    max_node = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"ligne {lineno}: attendu 'i j', obtenu {line!r}")
        a, b = int(parts[0]), int(parts[1])
        edges.append((a, b))
        max_node = max(max_node, a, b)
    return build_topology(n if n is not None else max_node, edges)


def write_edge_list(topo: Topology) -> str:
    return ''.join(f"{a} {b}\n" for a, b in sorted(topo.edges))


def communication_edges(positions: np.ndarray, comm_radius: float) -> FrozenSet[Edge]:
    """Paires de robots à distance <= R (graphe de communication)."""
    n = positions.shape[0]
    diff = positions[:, None, :] - positions[None, :, :]
    within = np.linalg.norm(diff, axis=-1) <= comm_radius
    return frozenset(
        (i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if within[i, j]
    )
