import math

import numpy as np
import pytest

from conftest import static_policy
from topocon.exceptions import InvalidHorizonError, InvalidParameterError, NonFiniteStateError
from topocon.models.agent import (
    AgentState, DisturbanceKind, DisturbanceModel, ReferenceKind, ReferenceTrajectory, TrackingPolicy,
)
from topocon.services.dynamics_service import (
    DisturbanceGenerator, error_bound, error_bound_limit, holding_radius, predict_nominal, step,
    tether_pull,
)
from topocon.utils.rng import SeededRNG


def _moving_policy(lam=1.0):
    reference = ReferenceTrajectory(kind=ReferenceKind.WANDER, p0=np.zeros(2), velocity=np.array([0.5, 0.1]),
                                    amplitude=np.array([2.0, 1.0]), omega=np.array([0.3, 0.2]),
                                    phase=np.array([0.1, 1.0]))
    return TrackingPolicy(lam=lam, reference=reference)


def test_error_bound_examples():
    assert error_bound(0.0, 1.0, 1.0) == 0.0
    assert error_bound(5.0, 1.0, 0.0) == 0.0
    assert error_bound(1e4, 1.0, 1.0) == pytest.approx(math.sqrt(2), abs=1e-6)
    assert error_bound_limit(1.0, 1.0) == pytest.approx(math.sqrt(2))


def test_error_bound_is_increasing():
    values = [error_bound(t, 2.0, 0.5) for t in np.linspace(0.0, 20.0, 50)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] <= error_bound_limit(2.0, 0.5)


def test_error_bound_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        error_bound(1.0, 0.5, 1.0)
    with pytest.raises(InvalidParameterError):
        error_bound(-1.0, 1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        TrackingPolicy(lam=0.4, reference=static_policy([0.0, 0.0]).reference)


def test_exact_tracking_without_disturbance():
    policy = _moving_policy()
    state = AgentState(id=1, x=policy.reference.position(0.0), t=0.0)
    for _ in range(100):
        state = step(state, policy, None, 0.1)
    assert np.allclose(state.x, policy.reference.position(state.t), atol=1e-6)


def test_constant_disturbance_steady_error():
    lam = 10.0
    policy = static_policy([0.0, 0.0], lam=lam)
    state = AgentState(id=1, x=np.zeros(2), t=0.0)
    d = np.array([1.0, 0.0])
    for _ in range(400):
        state = step(state, policy, d, 0.01)
    assert np.linalg.norm(state.x) == pytest.approx(1.0 / lam, rel=1e-3)


def test_integration_order():
    policy = _moving_policy(lam=2.0)
    x0 = np.array([3.0, -2.0])
    reference = predict_nominal(x0, 0.0, 2.0, policy, max_step=1e-3)

    def run(dt):
        state = AgentState(id=1, x=x0, t=0.0)
        for _ in range(int(round(2.0 / dt))):
            state = step(state, policy, None, dt)
        return np.linalg.norm(state.x - reference)

    e1, e2, e3 = run(0.2), run(0.1), run(0.05)
    assert e2 < e1 and e3 < e2
    assert e1 / e2 > 8.0


def test_predict_nominal_examples():
    policy = _moving_policy()
    x = np.array([1.0, 2.0])
    assert np.array_equal(predict_nominal(x, 3.0, 3.0, policy), x)
    on_ref = policy.reference.position(1.0)
    assert np.allclose(predict_nominal(on_ref, 1.0, 6.0, policy), policy.reference.position(6.0), atol=1e-6)
    off = on_ref + np.array([4.0, -3.0])
    later = predict_nominal(off, 1.0, 3.0, policy)
    gap = np.linalg.norm(later - policy.reference.position(3.0))
    assert gap <= 5.0 * math.exp(-1.0 * 2.0) * 1.01
    with pytest.raises(InvalidHorizonError):
        predict_nominal(x, 2.0, 1.0, policy)


@pytest.mark.parametrize('kind', list(DisturbanceKind))
def test_disturbance_respects_bound(kind):
    generator = DisturbanceGenerator(DisturbanceModel(d_max=0.7, kind=kind), SeededRNG(3), dim=3)
    for k in range(200):
        assert np.linalg.norm(generator.sample(0.1 * k, np.zeros(3))) <= 0.7 + 1e-12


def _deviation_within_bound(seed, steps=100, dt=0.1):
    rng = SeededRNG(seed)
    lam = float(rng.uniform(0.6, 4.0))
    d_max = float(rng.uniform(0.1, 2.0))
    kind = list(DisturbanceKind)[int(rng.integers(0, 3))]
    policy = _moving_policy(lam)
    generator = DisturbanceGenerator(DisturbanceModel(d_max=d_max, kind=kind), rng.fork(), dim=2)
    x0 = policy.reference.position(0.0) + rng.normal(size=2)
    state = AgentState(id=1, x=x0, t=0.0)
    for k in range(1, steps + 1):
        pull = rng.normal(size=2)
        state = step(state, policy, generator, dt, pull=pull)
        nominal = predict_nominal(x0, 0.0, state.t, policy)
        if np.linalg.norm(state.x - nominal) > error_bound(state.t, lam, d_max) * (1 + 1e-3):
            return False
    return True


@pytest.mark.parametrize('seed', range(20))
def test_perturbed_trajectory_stays_within_bound(seed):
    assert _deviation_within_bound(seed)


@pytest.mark.slow
def test_perturbed_trajectory_bound_full_battery():
    assert all(_deviation_within_bound(1000 + seed, steps=200) for seed in range(500))


def test_non_finite_state_raises():
    policy = static_policy([0.0, 0.0])
    with pytest.raises(NonFiniteStateError):
        step(AgentState(id=7, x=np.array([np.nan, 0.0]), t=0.0), policy, None, 0.1)


def test_waypoint_reference_is_clamped():
    reference = ReferenceTrajectory(kind=ReferenceKind.WAYPOINTS, p0=[0.0, 0.0], times=[0.0, 1.0, 2.0],
                                    points=[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    assert np.allclose(reference.position(5.0), [2.0, 0.0])
    assert np.allclose(reference.velocity_at(5.0), [0.0, 0.0])
    assert np.allclose(reference.position(1.0), [1.0, 1.0])


def test_tether_pull():
    origin = np.zeros(2)
    assert np.array_equal(tether_pull(origin, [np.array([5.0, 0.0])], 10.0, 0.8, 1.0), np.zeros(2))
    pull = tether_pull(origin, [np.array([10.0, 0.0])], 10.0, 0.8, 1.0)
    assert np.allclose(pull, [1.0, 0.0])


def test_holding_radius_examples():
    assert holding_radius(10.0, 1.0, 1.0, 0.5) == pytest.approx(10.0 - 2 * math.sqrt(2) - 2.0)
    assert holding_radius(10.0, 1.0, 0.0) == 10.0


def test_pair_at_holding_radius_stays_in_range_under_opposite_pushes():
    hold = holding_radius(10.0, 1.0, 1.0)
    left = AgentState(id=1, x=np.zeros(2), t=0.0)
    right = AgentState(id=2, x=np.array([hold, 0.0]), t=0.0)
    policies = static_policy([0.0, 0.0]), static_policy([hold, 0.0])
    for _ in range(2000):
        left = step(left, policies[0], np.array([-1.0, 0.0]), 0.1)
        right = step(right, policies[1], np.array([1.0, 0.0]), 0.1)
    assert np.linalg.norm(right.x - left.x) <= 10.0
    # écart d'équilibre : d_max / lam de chaque côté
    assert np.linalg.norm(right.x - left.x) == pytest.approx(hold + 2.0, abs=1e-6)
