import math
from typing import Optional

import numpy as np
import structlog

from ..exceptions import InvalidHorizonError, InvalidParameterError, NonFiniteStateError
from ..models.agent import AgentState, DisturbanceKind, DisturbanceModel, TrackingPolicy
from ..utils.rng import SeededRNG

logger = structlog.get_logger(__name__)

# Pas maximal d'intégration de la prédiction nominale (s)
NOMINAL_MAX_STEP = 0.1


def clip_norm(vector: np.ndarray, bound: float) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm <= bound or norm == 0.0:
        return vector
    return vector * (bound / norm)


class DisturbanceGenerator:
    """
    Réalisation d'une perturbation pour un robot, avec son propre flux aléatoire.

    scale (0..1] réserve une fraction de d_max à l'environnement ; le reste du
    budget peut servir à la restriction de mobilité (voir step).
    """

    def __init__(self, model: DisturbanceModel, rng: SeededRNG, dim: int, scale: float = 1.0):
        if not 0.0 <= scale <= 1.0:
            raise InvalidParameterError(f"scale hors de [0, 1]: {scale}")
        self.model = model
        self.rng = rng
        self.dim = dim
        self.magnitude = model.d_max * scale
        direction = rng.normal(size=dim)
        self._direction = direction / max(np.linalg.norm(direction), 1e-12)
        self._omega = rng.uniform(0.1, 1.0, size=dim)
        self._phase = rng.uniform(0.0, 2 * math.pi, size=dim)
        self._walk = self._direction * self.magnitude * rng.uniform(0.0, 1.0)

    def sample(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.magnitude == 0.0:
            return np.zeros(self.dim)
        kind = self.model.kind
        if kind is DisturbanceKind.CONSTANT:
            return self._direction * self.magnitude
        if kind is DisturbanceKind.SINUSOIDAL:
            return self.magnitude * np.sin(self._omega * t + self._phase) / math.sqrt(self.dim)
        self._walk = clip_norm(
            self._walk + self.rng.normal(0.0, 0.25 * self.magnitude, size=self.dim),
            self.magnitude,
        )
        return self._walk.copy()


def _rk4(field, x: np.ndarray, t: float, h: float, d: np.ndarray) -> np.ndarray:
    k1 = field(x, t) + d
    k2 = field(x + 0.5 * h * k1, t + 0.5 * h) + d
    k3 = field(x + 0.5 * h * k2, t + 0.5 * h) + d
    k4 = field(x + h * k3, t + h) + d
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def step(state: AgentState, policy: TrackingPolicy, disturbance, dt: float,
         pull: Optional[np.ndarray] = None) -> AgentState:
    """
    Un pas RK4 de x' = F(x) + d(t, x), perturbation tirée une fois et maintenue sur le pas.

    disturbance: DisturbanceGenerator, vecteur fixe ou None.
    pull: entrée additionnelle (restriction de mobilité) ; le total est borné par d_max
    pour rester dans l'hypothèse de perturbation bornée.
    """
    if dt <= 0:
        raise InvalidParameterError(f"dt doit être > 0, reçu {dt}")
    if disturbance is None:
        d = np.zeros_like(state.x)
    elif isinstance(disturbance, DisturbanceGenerator):
        d = disturbance.sample(state.t, state.x)
        if pull is not None:
            d = clip_norm(d + pull, disturbance.model.d_max)
    else:
        d = np.asarray(disturbance, dtype=float)
    x_next = _rk4(policy.field, state.x, state.t, dt, d)
    if not np.all(np.isfinite(x_next)):
        logger.error("État non fini", agent=state.id, t=state.t)
        raise NonFiniteStateError(f"état non fini pour l'agent {state.id} à t={state.t}")
    return AgentState(id=state.id, x=x_next, t=state.t + dt)


def predict_nominal(x_known: np.ndarray, t_known: float, t_query: float,
                    policy: TrackingPolicy, max_step: float = NOMINAL_MAX_STEP) -> np.ndarray:
    """Trajectoire nominale (sans perturbation) de (x_known, t_known) jusqu'à t_query."""
    if t_query < t_known:
        raise InvalidHorizonError(f"t_query={t_query} < t_known={t_known}")
    x = np.asarray(x_known, dtype=float).copy()
    horizon = t_query - t_known
    if horizon == 0.0:
        return x
    substeps = max(1, math.ceil(horizon / max_step))
    h = horizon / substeps
    zero = np.zeros_like(x)
    t = t_known
    for k in range(substeps):
        x = _rk4(policy.field, x, t, h, zero)
        t = t_known + (k + 1) * h
    return x


def error_bound(delta_t: float, lam: float, d_max: float) -> float:
    """
    Borne sur l'écart nominal / perturbé après un âge d'information delta_t :
    sqrt(2 (1 - exp(-(lam - 1/2) delta_t)) / (2 lam - 1)) * d_max.
    """
    if lam <= 0.5:
        raise InvalidParameterError(f"lambda doit être > 1/2, reçu {lam}")
    if delta_t < 0 or d_max < 0:
        raise InvalidParameterError("delta_t et d_max doivent être >= 0")
    if delta_t == 0.0 or d_max == 0.0:
        return 0.0
    growth = -math.expm1(-(lam - 0.5) * delta_t)
    return math.sqrt(2.0 * growth / (2.0 * lam - 1.0)) * d_max


def error_bound_limit(lam: float, d_max: float) -> float:
    if lam <= 0.5:
        raise InvalidParameterError(f"lambda doit être > 1/2, reçu {lam}")
    return math.sqrt(2.0 / (2.0 * lam - 1.0)) * d_max


def holding_radius(comm_radius: float, lam: float, d_max: float, wander_amplitude: float = 0.0) -> float:
    """
    Distance initiale maximale d'une paire de robots qui reste à portée R pendant toute l'exécution.

    Chaque robot reste à error_bound_limit de sa référence ; l'errance écarte deux
    références d'au plus 4 fois l'amplitude, la dérive étant commune.
    """
    return comm_radius - 2.0 * error_bound_limit(lam, d_max) - 4.0 * wander_amplitude


def tether_pull(position: np.ndarray, neighbor_positions, comm_radius: float,
                start_fraction: float, strength: float) -> np.ndarray:
    """
    Attraction vers les voisins réalisés dont l'arête dépasse start_fraction * R,
    croissante linéairement jusqu'à strength à R.
    """
    pull = np.zeros_like(position)
    start = start_fraction * comm_radius
    for other in neighbor_positions:
        offset = other - position
        length = float(np.linalg.norm(offset))
        if length <= start or length == 0.0:
            continue
        weight = min(1.0, (length - start) / max(comm_radius - start, 1e-9))
        pull += strength * weight * offset / length
    return pull
