import math
import time
from dataclasses import replace
from typing import Dict, FrozenSet, List, Optional

import numpy as np
import structlog

from ..exceptions import DisconnectedGraphError, InvariantViolationError, ScenarioError
from ..models.agent import (
    AgentState, DisturbanceModel, ReferenceKind, ReferenceTrajectory, TrackingPolicy, as_positions,
)
from ..models.decision import DecisionRecord, MethodTag
from ..models.message import KnowledgeBase, KnowledgeEntry
from ..models.region import UncertaintyRegion
from ..models.scenario import RunMetrics, Scenario, Snapshot, StepSample
from ..models.topology import Edge
from ..utils.rng import SeededRNG
from . import comms_service, dynamics_service
from .baseline_service import fixed_leader_decide, plan_tree
from .decision_service import DecisionExecution, decide
from .estimation_service import true_edge_cost
from .graph_service import build_topology, central_node, communication_edges, diameter, is_connected

logger = structlog.get_logger(__name__)

# Côté de boîte par sqrt(N), en multiples de R
BOX_SCALE = 0.55
# Réduction de la boîte après une série d'échecs de génération
BOX_SHRINK = 0.9
LAYOUT_ATTEMPTS_PER_SIZE = 20
LAYOUT_MAX_ATTEMPTS = 500


def default_box_side(n: int, comm_radius: float) -> float:
    return BOX_SCALE * comm_radius * math.sqrt(max(n, 1))


def admission_radius(scenario: Scenario) -> float:
    """
    Rayon de maintien des liens : une paire initialement à cette distance reste à
    portée R quelle que soit la perturbation. Seules ces paires sont admises comme liens.
    """
    dyn = scenario.dynamics
    amplitude = dyn.wander_amplitude if dyn.reference == 'wander' else 0.0
    radius = dynamics_service.holding_radius(scenario.channel.R, dyn.lam, dyn.d_max, amplitude)
    if radius <= 0.0:
        logger.error("Rayon de maintien nul", R=scenario.channel.R, d_max=dyn.d_max,
                     wander_amplitude=amplitude)
        raise ScenarioError("perturbation et errance trop fortes pour la portée R",
                            {'R': scenario.channel.R, 'holding_radius': radius})
    return radius


def initial_layout(scenario: Scenario, rng: SeededRNG) -> np.ndarray:
    """
    Tirage uniforme dans une boîte, recommencé jusqu'à obtenir un graphe de liens
    maintenables connexe de diamètre <= tau_D ; la boîte rétrécit après chaque
    série d'échecs.
    """
    if scenario.initial_positions is not None:
        return np.asarray(scenario.initial_positions, dtype=float)
    hold = admission_radius(scenario)
    side = scenario.box_side or default_box_side(scenario.n, hold)
    for attempt in range(1, LAYOUT_MAX_ATTEMPTS + 1):
        positions = rng.uniform(0.0, side, size=(scenario.n, scenario.dimension))
        topo = build_topology(scenario.n, communication_edges(positions, hold))
        if is_connected(topo) and diameter(topo) <= scenario.decision.tau_D:
            logger.debug("Placement initial trouvé", attempts=attempt, side=round(side, 3))
            return positions
        if attempt % LAYOUT_ATTEMPTS_PER_SIZE == 0:
            side *= BOX_SHRINK
    logger.error("Placement initial introuvable", n=scenario.n, tau_D=scenario.decision.tau_D)
    raise ScenarioError("aucun placement connexe de diamètre <= tau_D",
                        {'n': scenario.n, 'tau_D': scenario.decision.tau_D})


def build_references(scenario: Scenario, positions: np.ndarray, rng: SeededRNG) -> List[ReferenceTrajectory]:
    """Références par robot : dérive commune de l'équipe, errance individuelle bornée."""
    dyn = scenario.dynamics
    dim = scenario.dimension
    kind = dyn.reference
    heading = rng.normal(size=dim)
    heading /= max(float(np.linalg.norm(heading)), 1e-12)
    drift = heading * dyn.drift_speed
    references = []
    for k in range(scenario.n):
        p0 = positions[k]
        if kind == 'static':
            references.append(ReferenceTrajectory(kind=ReferenceKind.CONSTANT_VELOCITY, p0=p0,
                                                  velocity=np.zeros(dim)))
        elif kind == 'drift':
            references.append(ReferenceTrajectory(kind=ReferenceKind.CONSTANT_VELOCITY, p0=p0,
                                                  velocity=drift))
        elif kind == 'wander':
            low, high = dyn.wander_omega
            # norme de l'amplitude fixée : l'écart entre deux références reste <= 4 wander_amplitude
            axes = np.abs(rng.normal(size=dim))
            axes /= max(float(np.linalg.norm(axes)), 1e-12)
            references.append(ReferenceTrajectory(
                kind=ReferenceKind.WANDER, p0=p0, velocity=drift,
                amplitude=axes * dyn.wander_amplitude,
                omega=rng.uniform(low, high, size=dim),
                phase=rng.uniform(0.0, 2 * math.pi, size=dim),
            ))
        else:
            raise ScenarioError(f"référence inconnue: {kind}")
    return references


def generate_scenario(n: int, seed: int, template: Optional[Scenario] = None) -> Scenario:
    """Scénario de n robots avec placement initial tiré depuis seed."""
    base = template or Scenario()
    scenario = replace(base, n=n, seed=seed, initial_positions=None)
    layout_rng = SeededRNG(seed).forks(5)[0]
    positions = initial_layout(scenario, layout_rng)
    return replace(scenario, initial_positions=positions.tolist())


class Simulation:
    """
    Une exécution : pas de dynamique, livraison des messages échus, diffusion,
    décision à la cadence prévue puis mesures. Propriétaire unique, séquentielle.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.method = scenario.method
        self.dt = scenario.dt
        self.channel = scenario.channel.model()
        self.params = scenario.decision_params()
        self.settings = scenario.estimation
        dyn = scenario.dynamics

        layout_rng, ref_rng, noise_rng, comm_rng, decision_rng = SeededRNG(scenario.seed).forks(5)
        positions = initial_layout(scenario, layout_rng)
        self.references = build_references(scenario, positions, ref_rng)
        self.policies = {k + 1: TrackingPolicy(lam=dyn.lam, reference=ref)
                         for k, ref in enumerate(self.references)}
        model = DisturbanceModel(d_max=dyn.d_max, kind=dyn.disturbance)
        scale = dyn.env_fraction if dyn.tether else 1.0
        self.generators = {
            k + 1: dynamics_service.DisturbanceGenerator(model, child, scenario.dimension, scale)
            for k, child in enumerate(noise_rng.forks(scenario.n))
        }
        self.comm_rng = comm_rng
        self.decision_rng = decision_rng
        self.states = [AgentState(id=k + 1, x=positions[k].copy(), t=0.0) for k in range(scenario.n)]

        # chaque robot connaît les positions initiales de tous à t = 0
        self.kbs = {}
        for k in range(1, scenario.n + 1):
            kb = KnowledgeBase(owner=k)
            for j in range(1, scenario.n + 1):
                kb.entries[j] = KnowledgeEntry(position=positions[j - 1].copy(), timestamp=0.0,
                                               receive_time=0.0)
            self.kbs[k] = kb
        self.queue = comms_service.DeliveryQueue()
        self.message_log = comms_service.MessageLog(enabled=scenario.record_messages)

        # paires à distance initiale <= rayon de maintien : seuls liens jamais étirés au-delà de R
        self.admissible = communication_edges(positions, admission_radius(scenario))
        self.base = build_topology(scenario.n, self.admissible)
        if not is_connected(self.base):
            logger.error("Graphe initial de liens maintenables non connexe", seed=scenario.seed)
            raise ScenarioError("graphe de communication initial non connexe", {'seed': scenario.seed})
        self.realized = set(self.base.edges)
        self.last_regions: Dict[int, UncertaintyRegion] = {}
        self.central = central_node(self.base)
        self.initial_central = self.central
        self.pending: Optional[DecisionExecution] = None
        self.cumulative_cost = 0.0
        self.metrics = RunMetrics(
            scenario_name=scenario.name, method=self.method.value, seed=scenario.seed,
            n=scenario.n, tau_D=self.params.tau_D, stressed_threshold=scenario.stressed_threshold,
        )

    @property
    def positions(self) -> np.ndarray:
        return as_positions(self.states)

    @property
    def now(self) -> float:
        return self.states[0].t if self.states else 0.0

    def _physics(self, positions: np.ndarray):
        dyn = self.scenario.dynamics
        neighbors: Dict[int, List[int]] = {k: [] for k in range(1, self.scenario.n + 1)}
        for a, b in self.realized:
            neighbors[a].append(b)
            neighbors[b].append(a)
        new_states = []
        for state in self.states:
            pull = None
            if dyn.tether and dyn.d_max > 0:
                pull = dynamics_service.tether_pull(
                    state.x, [positions[j - 1] for j in sorted(neighbors[state.id])],
                    self.channel.R, dyn.tether_start, dyn.d_max,
                )
            new_states.append(dynamics_service.step(state, self.policies[state.id],
                                                    self.generators[state.id], self.dt, pull))
        self.states = new_states

    def _communicate(self, now: float, positions: np.ndarray):
        for receiver, message, delivery_time in self.queue.pop_due(now):
            comms_service.merge(self.kbs[receiver], message, delivery_time)
            self.message_log.record(receiver, message, delivery_time)
        channel_params = self.scenario.channel
        for sender in range(1, self.scenario.n + 1):
            kb = self.kbs[sender]
            kb.refresh_self(positions[sender - 1], now)
            deliveries = comms_service.broadcast(
                sender, kb, positions, self.channel, now, rng=self.comm_rng,
                drop_probability=channel_params.drop_probability, truncate_k=channel_params.truncate_k,
            )
            for receiver, message, delivery_time in deliveries:
                self.queue.push(receiver, message, delivery_time)

    def _commit(self, now: float):
        execution = self.pending
        record = execution.record
        committed = execution.commit(now, self.realized)
        self.base = committed
        if record.new_central is not None:
            self.central = record.new_central
        if record.committed_diameter is not None and record.committed_diameter > self.params.tau_D:
            if self.method is MethodTag.C:
                record.infeasible = True
                self.metrics.infeasible_decisions += 1
            else:
                self._violation("diamètre > tau_D après validation", now,
                                diameter=record.committed_diameter)
        self.pending = None

    def _decide(self, now: float, positions: np.ndarray):
        if self.pending is not None:
            self.metrics.skipped_decisions += 1
            logger.debug("Décision ignorée, validation en attente", t=now)
            return
        rng = self.decision_rng.fork()
        if self.method in (MethodTag.A, MethodTag.D):
            central = self.central if self.method is MethodTag.A else self.initial_central
            args = (central, self.base, self.kbs[central], positions[central - 1], now, self.channel,
                    self.policies, self.scenario.dynamics.d_max, self.params, self.settings, rng)
            if self.method is MethodTag.A:
                record, regions = decide(*args, method=MethodTag.A, admissible=self.admissible)
            else:
                record, regions = fixed_leader_decide(*args, admissible=self.admissible)
            self.last_regions = regions
            self.metrics.estimation_fallbacks += record.estimation_fallbacks
            self.pending = DecisionExecution(record, self.base, self.channel, self.dt,
                                             reelect=self.method is MethodTag.A, admissible=self.admissible)
        else:
            started = time.perf_counter()
            try:
                target, violated = plan_tree(self.method, positions, self.admissible, self.params)
            except DisconnectedGraphError as e:
                logger.warning("Arbre cible impossible, graphe de communication non connexe",
                               t=now, error=str(e))
                self.metrics.infeasible_decisions += 1
                return
            record = DecisionRecord(
                decision_time=now, central=central_node(self.base),
                deleted=frozenset(self.base.edges - target.edges),
                proposed=frozenset(target.edges - self.base.edges),
                est_total_cost=sum(true_edge_cost(float(np.linalg.norm(positions[a - 1] - positions[b - 1])),
                                                  self.params.rho_m, self.params.c_max, self.params.R)
                                   for a, b in target.edges),
                method=self.method.value, infeasible=violated,
            )
            record.wall_time = time.perf_counter() - started
            if violated:
                self.metrics.infeasible_decisions += 1
            if self.method is MethodTag.B:
                # sans délai : le nouvel arbre est réalisé immédiatement
                record.confirmed = record.proposed
                record.commit_time = now
                record.committed_diameter = diameter(target)
                self.base = target
                self.realized = set(target.edges)
            else:
                self.pending = DecisionExecution(
                    record, self.base, self.channel, self.dt, reelect=False, make_before_break=True,
                    tau_D=None if violated else self.params.tau_D, admissible=self.admissible,
                )
        self.metrics.decisions.append(record)
        if self.pending is not None:
            self.pending.advance(now, positions, self.realized)

    def _violation(self, message: str, now: float, **diagnostic):
        diagnostic.update(t=now, method=self.method.value, seed=self.scenario.seed,
                          realized=sorted(self.realized), base=sorted(self.base.edges))
        self.metrics.violations.append(diagnostic)
        logger.error("Invariant violé", message=message, t=now)
        raise InvariantViolationError(message, diagnostic)

    def physical_edges(self, positions: np.ndarray) -> FrozenSet[Edge]:
        """Liens réalisés effectivement à portée (longueur <= R)."""
        return frozenset(
            (a, b) for a, b in self.realized
            if float(np.linalg.norm(positions[a - 1] - positions[b - 1])) <= self.channel.R
        )

    def _sample(self, step_index: int, now: float, positions: np.ndarray):
        physical = self.physical_edges(positions)
        broken_edges = sorted(self.realized - physical)
        if broken_edges:
            logger.warning("Liens réalisés hors de portée", t=now, edges=broken_edges)
        if not is_connected(build_topology(self.scenario.n, physical)):
            self._violation("graphe physique non connexe", now, broken=broken_edges)
        cost = 0.0
        stressed = 0
        saturated = self.params.saturated_edge_cost
        for a, b in sorted(self.realized):
            length = float(np.linalg.norm(positions[a - 1] - positions[b - 1]))
            c = true_edge_cost(length, self.params.rho_m, self.params.c_max, self.params.R)
            if math.isinf(c):
                c = saturated
            if c > 0.0:
                stressed += 1
            cost += c
        broken = len(broken_edges)
        self.cumulative_cost += cost
        self.metrics.steps.append(StepSample(
            step=step_index, t=now, edges=len(self.base.edges), realized=len(self.realized),
            stressed=stressed, broken=broken, cost=cost, cumulative_cost=self.cumulative_cost,
        ))

    def tick(self, step_index: int):
        self._physics(self.positions)
        now = self.now
        positions = self.positions
        self._communicate(now, positions)
        if self.pending is not None:
            self.pending.advance(now, positions, self.realized)
            if self.pending.is_complete(now):
                self._commit(now)
        if (step_index + 1) % self.scenario.decision_every == 0:
            self._decide(now, positions)
        self._sample(step_index, now, positions)

    def _snapshot(self) -> Snapshot:
        now = self.now
        dyn = self.scenario.dynamics
        observer = self.kbs[self.central]
        radii = {
            node: dynamics_service.error_bound(now - observer.get(node).timestamp, dyn.lam, dyn.d_max)
            for node in observer
        }
        return Snapshot(positions=self.positions, edges=[list(e) for e in sorted(self.realized)],
                        central=self.central if self.method.uses_central_node else None,
                        region_radii=radii)

    def run(self) -> RunMetrics:
        started = time.perf_counter()
        for step_index in range(self.scenario.duration_steps):
            self.tick(step_index)
        self.metrics.snapshot = self._snapshot()
        logger.info("Simulation terminée", steps=self.scenario.duration_steps,
                    cumulative_cost=round(self.metrics.cumulative_cost, 3),
                    decisions=len(self.metrics.decisions), elapsed=round(time.perf_counter() - started, 3))
        return self.metrics


def run(scenario: Scenario) -> RunMetrics:
    """Exécute un scénario ; déterministe pour une graine donnée (hors temps de calcul mesurés)."""
    structlog.contextvars.bind_contextvars(run_seed=scenario.seed, method=scenario.method.value)
    try:
        simulation = Simulation(scenario)
        metrics = simulation.run()
        metrics.messages = simulation.message_log.entries
        return metrics
    except InvariantViolationError as e:
        logger.error("Exécution interrompue", error=str(e), diagnostic_keys=sorted(e.diagnostic))
        raise
    finally:
        structlog.contextvars.unbind_contextvars('run_seed', 'method')
