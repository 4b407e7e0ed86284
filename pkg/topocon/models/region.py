"""Régions d'incertitude (nuages de particules) et distributions de distances."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..exceptions import InconsistentRegionError


@dataclass(frozen=True)
class UncertaintyRegion:
    """
    Estimation ensembliste de la position d'un noeud à l'instant basis_time.

    center / ball_radius décrivent la boule de la borne d'erreur autour de la
    prédiction nominale ; chaque particule doit y appartenir.
    """
    node: int
    particles: np.ndarray
    basis_time: float
    report_position: np.ndarray
    report_age: float
    center: np.ndarray
    ball_radius: float
    hops: int = 1

    def __post_init__(self):
        if self.particles.ndim != 2 or self.particles.shape[0] == 0:
            raise InconsistentRegionError(f"région vide pour le noeud {self.node}")

    @property
    def size(self) -> int:
        return int(self.particles.shape[0])

    @property
    def provenance(self) -> Tuple[np.ndarray, float]:
        return self.report_position, self.report_age

    def with_particles(self, particles: np.ndarray) -> 'UncertaintyRegion':
        return UncertaintyRegion(
            node=self.node, particles=particles, basis_time=self.basis_time,
            report_position=self.report_position, report_age=self.report_age,
            center=self.center, ball_radius=self.ball_radius, hops=self.hops,
        )


@dataclass(frozen=True)
class DistanceDistribution:
    pair: Tuple[int, int]
    samples: np.ndarray

    @property
    def count(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class EstimationSettings:
    particles: int = 256
    pair_budget: int = 4096
    shrink_iterations: int = 5
    max_attempts: int = 64

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})

    def to_dict(self):
        return {
            'particles': self.particles,
            'pair_budget': self.pair_budget,
            'shrink_iterations': self.shrink_iterations,
            'max_attempts': self.max_attempts,
        }
