"""Flux aléatoires déterministes pour les simulations reproductibles."""
from __future__ import annotations

import numpy as np


class SeededRNG:
    """Enveloppe autour de numpy.random.Generator, dérivable en sous-flux indépendants."""

    def __init__(self, seed: int | np.random.SeedSequence):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self.generator = np.random.default_rng(self._seq)

    @property
    def seed(self) -> int:
        return int(self._seq.entropy)

    def fork(self) -> SeededRNG:
        """Crée un flux enfant pour une sous-tâche (agent, décision, arête)."""
        return SeededRNG(self._seq.spawn(1)[0])

    def forks(self, count: int) -> list[SeededRNG]:
        return [SeededRNG(child) for child in self._seq.spawn(count)]

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)


def derive_seeds(seed: int, count: int) -> list[int]:
    """Graines entières dérivées, stables d'une exécution à l'autre."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]
