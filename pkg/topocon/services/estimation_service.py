import math
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
import structlog
from scipy.spatial.distance import cdist

from ..exceptions import InconsistentRegionError, InvalidParameterError
from ..models.agent import TrackingPolicy
from ..models.message import ChannelModel, KnowledgeBase
from ..models.region import DistanceDistribution, EstimationSettings, UncertaintyRegion
from ..models.topology import Edge
from ..utils.rng import SeededRNG
from .dynamics_service import error_bound, predict_nominal

logger = structlog.get_logger(__name__)

# Coût d'une arête existante étirée au-delà de R
BROKEN_EDGE_COST = math.inf

Report = Tuple[np.ndarray, float]


def _check_rho(rho_m: float):
    if not 0.0 < rho_m < 1.0:
        raise InvalidParameterError(f"rho_m doit être dans ]0, 1[, reçu {rho_m}")


def sample_ball(center: np.ndarray, radius: float, count: int, rng: SeededRNG) -> np.ndarray:
    """Tirage uniforme dans la boule B_radius(center)."""
    dim = center.shape[0]
    if radius <= 0.0:
        return np.repeat(center[None, :], count, axis=0)
    directions = rng.normal(size=(count, dim))
    directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-12)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return center + directions * radii[:, None]


def _singleton(node, point, now, report, age, hops=1) -> UncertaintyRegion:
    point = np.asarray(point, dtype=float)
    return UncertaintyRegion(
        node=node, particles=point[None, :].copy(), basis_time=now,
        report_position=np.asarray(report, dtype=float), report_age=age,
        center=point, ball_radius=0.0, hops=hops,
    )


def _fill(sampler, accept, target: int, max_attempts: int) -> np.ndarray:
    kept = []
    total = 0
    for _ in range(max_attempts):
        candidates = sampler(target)
        mask = accept(candidates)
        if mask.any():
            kept.append(candidates[mask])
            total += int(mask.sum())
        if total >= target:
            break
    if not kept:
        return np.empty((0, 0))
    return np.vstack(kept)[:target]


def region_one_hop(node: int, report: Report, receiver_pos: np.ndarray, now: float,
                   channel: ChannelModel, policy: TrackingPolicy, d_max: float,
                   settings: EstimationSettings, rng: SeededRNG) -> UncertaintyRegion:
    """
    Région à un saut : B_{v dt}(receiver_pos) ∩ B_{eps_dt}(prédiction nominale),
    dt = now - t_l. On tire dans la plus petite des deux boules et on rejette hors de l'autre.
    """
    p_l, t_l = np.asarray(report[0], dtype=float), float(report[1])
    age = now - t_l
    if age < 0:
        raise InvalidParameterError(f"rapport du noeud {node} postérieur à now")
    nominal = predict_nominal(p_l, t_l, now, policy)
    eps = error_bound(age, policy.lam, d_max)
    if eps == 0.0:
        return _singleton(node, nominal, now, p_l, age)

    receiver_pos = np.asarray(receiver_pos, dtype=float)
    delay_radius = channel.v * age
    if np.linalg.norm(nominal - receiver_pos) > eps + delay_radius:
        logger.debug("Boules disjointes", node=node, age=age)
        raise InconsistentRegionError(f"intersection vide pour le noeud {node}")

    if eps <= delay_radius:
        sampler = lambda count: sample_ball(nominal, eps, count, rng)
        accept = lambda pts: np.linalg.norm(pts - receiver_pos, axis=1) <= delay_radius
    else:
        sampler = lambda count: sample_ball(receiver_pos, delay_radius, count, rng)
        accept = lambda pts: np.linalg.norm(pts - nominal, axis=1) <= eps
    particles = _fill(sampler, accept, settings.particles, settings.max_attempts)
    if particles.size == 0:
        raise InconsistentRegionError(f"aucune particule admissible pour le noeud {node}")
    return UncertaintyRegion(
        node=node, particles=particles, basis_time=now, report_position=p_l,
        report_age=age, center=nominal, ball_radius=eps, hops=1,
    )


def _dilate_and_intersect(node, previous: UncertaintyRegion, hop_radius: float, report: Report,
                          now, policy, d_max, settings, rng, hops) -> UncertaintyRegion:
    p_m, t_m = np.asarray(report[0], dtype=float), float(report[1])
    age = now - t_m
    nominal = predict_nominal(p_m, t_m, now, policy)
    eps = error_bound(age, policy.lam, d_max)
    if eps == 0.0:
        return _singleton(node, nominal, now, p_m, age, hops)

    prev = previous.particles
    if eps <= hop_radius or hop_radius == 0.0:
        # tirage dans la boule de la borne, appartenance exacte à l'union des boules
        sampler = lambda count: sample_ball(nominal, eps, count, rng)
        accept = lambda pts: cdist(pts, prev).min(axis=1) <= hop_radius
        if hop_radius == 0.0:
            candidates = prev[np.linalg.norm(prev - nominal, axis=1) <= eps]
            sampler = lambda count: candidates
            accept = lambda pts: np.ones(pts.shape[0], dtype=bool)
    else:
        # propagation des particules, décalage aléatoire dans la boule du saut
        def sampler(count):
            picks = prev[rng.integers(0, prev.shape[0], size=count)]
            return picks + sample_ball(np.zeros(prev.shape[1]), hop_radius, count, rng)
        accept = lambda pts: np.linalg.norm(pts - nominal, axis=1) <= eps
    particles = _fill(sampler, accept, settings.particles, settings.max_attempts)
    if particles.size == 0:
        raise InconsistentRegionError(f"région multi-sauts vide pour le noeud {node}")
    return UncertaintyRegion(
        node=node, particles=particles, basis_time=now, report_position=p_m,
        report_age=age, center=nominal, ball_radius=eps, hops=hops,
    )


def region_multi_hop(path: Sequence[int], hop_delays: Sequence[float], reports: Mapping[int, Report],
                     receiver_pos: np.ndarray, now: float, channel: ChannelModel,
                     policies: Mapping[int, TrackingPolicy], d_max: float,
                     settings: EstimationSettings, rng: SeededRNG) -> UncertaintyRegion:
    """
    Récurrence multi-sauts le long de la chaîne de relais path = [récepteur, n2, ..., nm].

    hop_delays[k] est le délai entre path[k+1] et path[k]. La région de n2 est la
    région à un saut ; chaque étape dilate la région précédente de v * délai puis
    l'intersecte avec la boule de la borne d'erreur du noeud suivant.
    """
    if len(path) < 3:
        raise InvalidParameterError("la chaîne doit compter au moins 3 noeuds")
    if len(hop_delays) != len(path) - 1:
        raise InvalidParameterError("un délai par saut attendu")
    first = path[1]
    region = region_one_hop(first, reports[first], receiver_pos, now, channel,
                            policies[first], d_max, settings, rng)
    for k in range(2, len(path)):
        node = path[k]
        region = _dilate_and_intersect(
            node, region, channel.v * hop_delays[k - 1], reports[node], now,
            policies[node], d_max, settings, rng, hops=k,
        )
    return region


def theorem_ball_region(node: int, report: Report, now: float, policy: TrackingPolicy,
                        d_max: float, settings: EstimationSettings, rng: SeededRNG) -> UncertaintyRegion:
    """Repli : boule de la borne d'erreur seule, sans contrainte de délai."""
    p_l, t_l = np.asarray(report[0], dtype=float), float(report[1])
    age = now - t_l
    nominal = predict_nominal(p_l, t_l, now, policy)
    eps = error_bound(age, policy.lam, d_max)
    if eps == 0.0:
        return _singleton(node, nominal, now, p_l, age)
    return UncertaintyRegion(
        node=node, particles=sample_ball(nominal, eps, settings.particles, rng), basis_time=now,
        report_position=p_l, report_age=age, center=nominal, ball_radius=eps, hops=1,
    )


def estimate_regions(kb: KnowledgeBase, owner_position: np.ndarray, now: float,
                     channel: ChannelModel, policies: Mapping[int, TrackingPolicy], d_max: float,
                     settings: EstimationSettings, rng: SeededRNG) -> Tuple[Dict[int, UncertaintyRegion], int]:
    """
    Régions de tous les noeuds connus de kb.owner, selon la route de chaque enregistrement.

    Renvoie (régions, nombre de replis sur la boule de la borne seule).
    """
    regions = {}
    fallbacks = 0
    for node in kb:
        entry = kb.get(node)
        if node == kb.owner:
            regions[node] = _singleton(node, owner_position, now, owner_position, 0.0)
            continue
        report = (entry.position, entry.timestamp)
        node_rng = rng.fork()
        try:
            relays = [hop[0] for hop in reversed(entry.route)]
            if len(entry.route) >= 2 and all(r in kb for r in relays[:-1]):
                path = [kb.owner] + relays
                delays = [hop[1] for hop in reversed(entry.route)]
                reports = {r: (kb.get(r).position, kb.get(r).timestamp) for r in relays[:-1]}
                reports[node] = report
                regions[node] = region_multi_hop(path, delays, reports, owner_position, now,
                                                 channel, policies, d_max, settings, node_rng)
            else:
                regions[node] = region_one_hop(node, report, owner_position, now, channel,
                                               policies[node], d_max, settings, node_rng)
        except InconsistentRegionError as e:
            logger.warning("Région incohérente, repli sur la borne seule", node=node, error=str(e))
            fallbacks += 1
            regions[node] = theorem_ball_region(node, report, now, policies[node], d_max,
                                                settings, node_rng)
    return regions, fallbacks


def shrink_by_connectivity(regions: Mapping[int, UncertaintyRegion], edges: Iterable[Edge],
                           comm_radius: float, iterations: int = 5) -> Dict[int, UncertaintyRegion]:
    """
    Réduit les régions par les arêtes connues : une particule de i sans particule
    d'un voisin j à distance <= R est écartée. Itère jusqu'au point fixe ou au plafond.
    """
    particles = {node: region.particles for node, region in regions.items()}
    edges = sorted(edges)
    for _ in range(iterations):
        changed = False
        for i, j in edges:
            if i not in particles or j not in particles:
                continue
            close = cdist(particles[i], particles[j]) <= comm_radius
            keep_i = close.any(axis=1)
            keep_j = close.any(axis=0)
            if not keep_i.any() or not keep_j.any():
                raise InconsistentRegionError(f"arête ({i}, {j}) incompatible avec les régions")
            if not keep_i.all():
                particles[i] = particles[i][keep_i]
                changed = True
            if not keep_j.all():
                particles[j] = particles[j][keep_j]
                changed = True
        if not changed:
            break
    return {
        node: (region if particles[node] is region.particles else region.with_particles(particles[node]))
        for node, region in regions.items()
    }


def distance_distribution(region_i: UncertaintyRegion, region_j: UncertaintyRegion,
                          rng: SeededRNG = None, pair_budget: int = 4096) -> DistanceDistribution:
    """Distances entre particules : toutes les paires si le budget le permet, sinon tirage aléatoire."""
    pi, pj = region_i.particles, region_j.particles
    pair = (region_i.node, region_j.node)
    if pi.shape[0] * pj.shape[0] <= pair_budget or rng is None:
        return DistanceDistribution(pair=pair, samples=cdist(pi, pj).ravel())
    idx_i = rng.integers(0, pi.shape[0], size=pair_budget)
    idx_j = rng.integers(0, pj.shape[0], size=pair_budget)
    return DistanceDistribution(pair=pair, samples=np.linalg.norm(pi[idx_i] - pj[idx_j], axis=1))


def risk_score(dd: DistanceDistribution, alpha: float, comm_radius: float) -> float:
    """Part des distances dans ]alpha R, R] parmi celles <= R ; 1 si aucune n'est <= R."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha doit être dans [0, 1], reçu {alpha}")
    samples = dd.samples
    in_range = samples <= comm_radius
    denominator = int(in_range.sum())
    if denominator == 0:
        return 1.0
    numerator = int((in_range & (samples > alpha * comm_radius)).sum())
    return numerator / denominator


def cost_estimate(dd: DistanceDistribution, rho_m: float, c_max: float, comm_radius: float) -> float:
    _check_rho(rho_m)
    if c_max <= 0:
        raise InvalidParameterError(f"c_max doit être > 0, reçu {c_max}")
    return c_max * comm_radius * (1.0 - rho_m) * risk_score(dd, rho_m, comm_radius)


def confidence_score(dd: DistanceDistribution, rho_m: float, comm_radius: float) -> float:
    _check_rho(rho_m)
    if dd.count == 0:
        return 0.0
    return int((dd.samples < rho_m * comm_radius).sum()) / dd.count


def true_edge_cost(p_ij: float, rho_m: float, c_max: float, comm_radius: float) -> float:
    """Coût d'entretien d'une arête existante de longueur p_ij."""
    if p_ij < 0:
        raise InvalidParameterError("distance négative")
    threshold = rho_m * comm_radius
    if p_ij <= threshold:
        return 0.0
    if p_ij <= comm_radius:
        return c_max * (p_ij - threshold)
    return BROKEN_EDGE_COST


def region_radius(region: UncertaintyRegion) -> float:
    """Rayon du nuage autour de son barycentre."""
    centroid = region.particles.mean(axis=0)
    return float(np.linalg.norm(region.particles - centroid, axis=1).max())


def contains(region: UncertaintyRegion, point: np.ndarray, margin: float = 0.0) -> bool:
    """Point dans la boule englobante du nuage (barycentre, rayon + marge)."""
    centroid = region.particles.mean(axis=0)
    return float(np.linalg.norm(np.asarray(point) - centroid)) <= region_radius(region) + margin


def in_theorem_ball(region: UncertaintyRegion, tolerance: float = 1e-9) -> bool:
    """Toutes les particules appartiennent à la boule de la borne d'erreur."""
    distances = np.linalg.norm(region.particles - region.center, axis=1)
    return bool(np.all(distances <= region.ball_radius + tolerance))
