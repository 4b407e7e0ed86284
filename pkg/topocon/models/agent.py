"""Modèles de dynamique des robots : état, trajectoire de référence, perturbation, politique."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from ..exceptions import InvalidParameterError


@dataclass(frozen=True)
class AgentState:
    """État d'un robot (intégrateur simple : x = position)."""
    id: int
    x: np.ndarray
    t: float

    @property
    def position(self) -> np.ndarray:
        return self.x

    @property
    def dimension(self) -> int:
        return int(self.x.shape[0])


class ReferenceKind(str, Enum):
    CONSTANT_VELOCITY = 'constant_velocity'
    WAYPOINTS = 'waypoints'
    WANDER = 'wander'


@dataclass
class ReferenceTrajectory:
    """
    Trajectoire de référence x_r(t) et sa dérivée.

    constant_velocity : p0 + v t
    waypoints : spline cubique sur (times, points), bloquée hors de l'intervalle
    wander : p0 + v t + A * sin(omega t + phase) par axe (errance bornée)
    """
    kind: ReferenceKind
    p0: np.ndarray
    velocity: np.ndarray = None
    times: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None
    amplitude: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    phase: Optional[np.ndarray] = None
    _spline: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.kind = ReferenceKind(self.kind)
        self.p0 = np.asarray(self.p0, dtype=float)
        dim = self.p0.shape[0]
        if self.velocity is None:
            self.velocity = np.zeros(dim)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.kind is ReferenceKind.WAYPOINTS:
            self.times = np.asarray(self.times, dtype=float)
            self.points = np.asarray(self.points, dtype=float)
            if self.times.shape[0] < 2 or np.any(np.diff(self.times) <= 0):
                raise InvalidParameterError("waypoints: instants strictement croissants requis (>= 2)")
            self._spline = CubicSpline(self.times, self.points, axis=0, bc_type='clamped')
        elif self.kind is ReferenceKind.WANDER:
            self.amplitude = np.asarray(self.amplitude, dtype=float)
            self.omega = np.asarray(self.omega, dtype=float)
            self.phase = np.asarray(self.phase if self.phase is not None else np.zeros(dim), dtype=float)

    def position(self, t: float) -> np.ndarray:
        if self.kind is ReferenceKind.WAYPOINTS:
            tc = min(max(t, self.times[0]), self.times[-1])
            return np.asarray(self._spline(tc), dtype=float)
        base = self.p0 + self.velocity * t
        if self.kind is ReferenceKind.WANDER:
            base = base + self.amplitude * (np.sin(self.omega * t + self.phase) - np.sin(self.phase))
        return base

    def velocity_at(self, t: float) -> np.ndarray:
        if self.kind is ReferenceKind.WAYPOINTS:
            if t <= self.times[0] or t >= self.times[-1]:
                return np.zeros_like(self.p0)
            return np.asarray(self._spline(t, 1), dtype=float)
        vel = self.velocity.copy()
        if self.kind is ReferenceKind.WANDER:
            vel = vel + self.amplitude * self.omega * np.cos(self.omega * t + self.phase)
        return vel

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        return cls(
            kind=data['kind'],
            p0=data.get('p0', data.get('points', [[0.0, 0.0]])[0]),
            velocity=data.get('velocity'),
            times=data.get('times'),
            points=data.get('points'),
            amplitude=data.get('amplitude'),
            omega=data.get('omega'),
            phase=data.get('phase'),
        )

    def to_dict(self) -> Dict[str, Any]:
        result = {'kind': self.kind.value, 'p0': self.p0.tolist(), 'velocity': self.velocity.tolist()}
        if self.kind is ReferenceKind.WAYPOINTS:
            result.update(times=self.times.tolist(), points=self.points.tolist())
        if self.kind is ReferenceKind.WANDER:
            result.update(amplitude=self.amplitude.tolist(), omega=self.omega.tolist(),
                          phase=self.phase.tolist())
        return result


class DisturbanceKind(str, Enum):
    CONSTANT = 'constant'
    SINUSOIDAL = 'sinusoidal'
    RANDOM_WALK = 'random_walk'


@dataclass(frozen=True)
class DisturbanceModel:
    """Perturbation bornée : toute réalisation vérifie ||d|| <= d_max."""
    d_max: float
    kind: DisturbanceKind = DisturbanceKind.RANDOM_WALK

    def __post_init__(self):
        if self.d_max < 0:
            raise InvalidParameterError(f"d_max doit être >= 0, reçu {self.d_max}")
        object.__setattr__(self, 'kind', DisturbanceKind(self.kind))


@dataclass(frozen=True)
class TrackingPolicy:
    """
    Politique de suivi linéaire F(x, t) = x_r'(t) + lam (x_r(t) - x).

    (a - b)^T (F(a) - F(b)) = -lam ||a - b||^2 : l'hypothèse de contraction est
    vérifiée exactement, avec lam > 1/2.
    """
    lam: float
    reference: ReferenceTrajectory

    def __post_init__(self):
        if self.lam <= 0.5:
            raise InvalidParameterError(f"lambda doit être > 1/2, reçu {self.lam}")

    def field(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.reference.velocity_at(t) + self.lam * (self.reference.position(t) - x)


def as_positions(states: Sequence[AgentState]) -> np.ndarray:
    """Matrice (N, dim) des positions, ligne k = noeud k+1."""
    return np.vstack([s.position for s in sorted(states, key=lambda s: s.id)])
