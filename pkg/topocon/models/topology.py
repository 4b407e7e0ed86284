"""Modèle de topologie non orientée et ses caches de distances."""
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Tuple

import numpy as np

# Sentinelle "distance infinie" : entier, la somme de deux sentinelles tient dans un int64.
INF_HOPS = 1 << 30
# Saturation des compteurs de plus courts chemins.
SIGMA_CAP = (1 << 63) - 1

Edge = Tuple[int, int]


def normalize_edge(i: int, j: int) -> Edge:
    """Paire non ordonnée (min, max) ; refuse les boucles."""
    if i == j:
        raise ValueError(f"boucle interdite sur le noeud {i}")
    return (i, j) if i < j else (j, i)


def normalize_edges(edges: Iterable[Iterable[int]]) -> FrozenSet[Edge]:
    return frozenset(normalize_edge(int(a), int(b)) for a, b in edges)


@dataclass(frozen=True)
class Topology:
    """
    Graphe non orienté sur les noeuds 1..n avec ses caches.

    dist: distances en sauts (INF_HOPS si non joignable)
    sigma: nombre de plus courts chemins (0 si non joignable, 1 sur la diagonale)
    ecc: excentricité par noeud (INF_HOPS si le graphe est non connexe)
    """
    n: int
    edges: FrozenSet[Edge]
    dist: np.ndarray = field(repr=False, compare=False)
    sigma: np.ndarray = field(repr=False, compare=False)
    ecc: np.ndarray = field(repr=False, compare=False)

    @property
    def nodes(self) -> Tuple[int, ...]:
        return tuple(range(1, self.n + 1))

    def has_edge(self, i: int, j: int) -> bool:
        return i != j and normalize_edge(i, j) in self.edges

    def neighbors(self, i: int) -> Tuple[int, ...]:
        return tuple(sorted(
            b if a == i else a for a, b in self.edges if i in (a, b)
        ))

    def distance(self, u: int, v: int) -> int:
        return int(self.dist[u - 1, v - 1])

    def path_count(self, u: int, v: int) -> int:
        return int(self.sigma[u - 1, v - 1])

    def eccentricity(self, v: int) -> int:
        return int(self.ecc[v - 1])

    @property
    def is_reachable_everywhere(self) -> bool:
        return bool(self.n <= 1 or self.ecc.max() < INF_HOPS)

    def non_edges(self) -> Tuple[Edge, ...]:
        return tuple(
            (i, j)
            for i in range(1, self.n + 1)
            for j in range(i + 1, self.n + 1)
            if (i, j) not in self.edges
        )

    def to_dict(self):
        return {
            'n': self.n,
            'edges': [list(e) for e in sorted(self.edges)],
        }
