import math

import numpy as np
import pytest

from DongLi.feasibility import feasibility_rate, is_feasible, steering_witness
from DongLi.integrate import DynamicsConfig, IntegratorConfig, rollout, rollout_traced, step
from DongLi.models import (BicycleModel, BicycleParams, ControlBounds, CtrvModel, CtrvParams, bicycle_deriv,
                           ctrv_deriv, estimate_ctrv)
from errors import ConfigError, DataError, IntegrationError, ShapeError, SingularityError

L = 0.3302


def test_bicycle_deriv_straight_line_carries_offset():
    out = bicycle_deriv([0.0, 0.0, 0.0, 1.0], [0.0, 0.0])
    np.testing.assert_allclose(out, [1.0 + L / 2, 0.0, 0.0, 0.0], atol=1e-15)


def test_bicycle_deriv_without_offset():
    out = bicycle_deriv([0.0, 0.0, math.pi / 2, 2.0], [0.1, 3.0], BicycleParams(reference_offset=False))
    np.testing.assert_allclose(out, [0.0, 2.0, 2.0 * math.tan(0.1) / L, 3.0], atol=1e-12)


def test_bicycle_deriv_batch_shape():
    states = np.zeros((5, 3, 4))
    controls = np.zeros((5, 3, 2))
    assert bicycle_deriv(states, controls).shape == (5, 3, 4)


def test_steering_at_right_angle_is_singular():
    with pytest.raises(SingularityError):
        bicycle_deriv([0.0, 0.0, 0.0, 1.0], [math.pi / 2, 0.0])


def test_bad_state_width():
    with pytest.raises(ShapeError):
        bicycle_deriv(np.zeros(3), [0.0, 0.0])


def test_config_validation():
    with pytest.raises(ConfigError):
        BicycleParams(wheelbase=0.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(method='midpoint')
    with pytest.raises(ConfigError):
        ControlBounds(delta_max=math.pi / 2)


def test_ctrv_deriv():
    out = ctrv_deriv([1.0, 2.0, 0.0, 3.0], CtrvParams(omega=0.5, v=3.0))
    np.testing.assert_allclose(out, [3.0, 0.0, 0.5, 0.0])


def test_euler_single_step_matches_formula():
    cfg = IntegratorConfig(method='euler', ts=0.01)
    nxt = step([0.0, 0.0, 0.0, 2.0], [0.2, 1.0], BicycleModel(), cfg)
    expected = [0.01 * (2.0 + L / 2), 0.0, 0.01 * 2.0 * math.tan(0.2) / L, 2.01]
    np.testing.assert_allclose(nxt, expected, atol=1e-15)


def test_rollout_excludes_start_state():
    cfg = IntegratorConfig()
    states = rollout([0.0, 0.0, 0.0, 1.0], np.zeros((6, 2)), BicycleModel(), cfg)
    assert states.shape == (6, 4)
    assert states[0, 0] == pytest.approx(0.01 * (1.0 + L / 2))


def test_rollout_requires_a_step():
    with pytest.raises(ShapeError):
        rollout([0.0, 0.0, 0.0, 1.0], np.zeros((0, 2)), BicycleModel(), IntegratorConfig())


def test_rollout_wraps_singularity_with_step_index():
    controls = np.zeros((4, 2))
    controls[2, 0] = math.pi / 2
    with pytest.raises(IntegrationError) as info:
        rollout([0.0, 0.0, 0.0, 1.0], controls, BicycleModel(), IntegratorConfig())
    assert info.value.index == 2


def test_traced_rollout_matches_array_rollout():
    rng = np.random.default_rng(1)
    controls = np.column_stack([rng.uniform(-0.5, 0.5, 20), rng.uniform(-3, 3, 20)])
    start = np.array([1.0, -2.0, 0.3, 2.0])
    model, cfg = BicycleModel(), IntegratorConfig()
    expected = rollout(start, controls, model, cfg)
    traced = rollout_traced(tuple(start), [tuple(u) for u in controls], model, cfg)
    np.testing.assert_allclose(np.array(traced), expected, atol=1e-13)


def _final_state(method, ts, duration=1.2):
    cfg = IntegratorConfig(method=method, ts=ts)
    controls = np.tile([0.2, 0.5], (int(round(duration / ts)), 1))
    return rollout([0.0, 0.0, 0.0, 2.0], controls, BicycleModel(), cfg)[-1]


@pytest.mark.parametrize('method, low, high', [('rk4', 12.0, 20.0), ('euler', 1.8, 2.2)])
def test_convergence_factor_under_step_halving(method, low, high):
    coarse, mid, fine = (_final_state(method, ts) for ts in (0.04, 0.02, 0.01))
    factor = np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine)
    assert low <= factor <= high


def test_estimate_ctrv_recovers_parameters():
    cfg = IntegratorConfig()
    params = CtrvParams(omega=0.5, v=2.0)
    states = np.vstack([[0.0, 0.0, 0.0, 2.0], rollout([0.0, 0.0, 0.0, 2.0], np.zeros((9, 2)),
                                                      CtrvModel(params), cfg)])
    est = estimate_ctrv(states, cfg.ts)
    assert est.omega == pytest.approx(0.5, abs=1e-9)
    assert est.v == pytest.approx(2.0)


def test_estimate_ctrv_constant_window_has_zero_turn_rate():
    states = np.tile([1.0, 1.0, 0.4, 0.0], (10, 1))
    est = estimate_ctrv(states, 0.01)
    assert est.omega == pytest.approx(0.0, abs=1e-12)
    assert est.v == 0.0


def test_estimate_ctrv_needs_two_states():
    with pytest.raises(DataError):
        estimate_ctrv(np.zeros((1, 4)), 0.01)


def test_dynamics_config_with_wheelbase():
    dyn = DynamicsConfig.from_dict({'wheelbase': 0.3302, 'delta_max': 1.0, 'a_max': 5.0, 'method': 'euler'})
    changed = dyn.with_wheelbase(0.5)
    assert changed.model.wheelbase == 0.5
    assert dyn.model.wheelbase == 0.3302
    assert changed.integrator.method == 'euler'
    assert changed.bounds.a_max == 5.0


# --- 可行性 ---

def _random_trajectory(method, seed=0, steps=30, params=None):
    rng = np.random.default_rng(seed)
    controls = np.column_stack([rng.uniform(-1.0, 1.0, steps), rng.uniform(-10, 10, steps)])
    cfg = IntegratorConfig(method=method)
    model = BicycleModel(params)
    start = np.array([0.0, 0.0, 0.2, 3.0])
    return np.vstack([start, rollout(start, controls, model, cfg)]), controls, model, cfg


@pytest.mark.parametrize('method', ['euler', 'rk4'])
def test_rollout_of_bounded_controls_is_feasible(method):
    traj, controls, model, cfg = _random_trajectory(method)
    result = is_feasible(traj, model, cfg)
    assert result.feasible
    assert bool(result)
    np.testing.assert_allclose(result.witnesses, controls, atol=1e-6)


def test_teleport_is_infeasible():
    traj, _, model, cfg = _random_trajectory('rk4')
    traj[10, 0] += 0.5
    result = is_feasible(traj, model, cfg)
    assert not result.feasible
    assert result.violation.index == 9


def test_excessive_acceleration_is_infeasible():
    cfg = IntegratorConfig(method='euler')
    traj = np.array([[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.5]])
    result = is_feasible(traj, BicycleModel(), cfg)
    assert not result.feasible
    assert '加速度' in result.violation.reason


def test_heading_change_at_standstill_is_infeasible():
    traj = np.array([[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.1, 0.0]])
    result = is_feasible(traj, BicycleModel(), IntegratorConfig(method='euler'))
    assert not result.feasible
    assert result.violation.index == 0


def test_feasibility_rejects_non_bicycle_model():
    traj = np.zeros((3, 4))
    with pytest.raises(DataError):
        is_feasible(traj, CtrvModel(CtrvParams()), IntegratorConfig())


def test_steering_witness_shrinks_with_wheelbase():
    traj, _, _, cfg = _random_trajectory('euler', seed=3)
    for p, q in zip(traj[:-1], traj[1:]):
        full, _ = steering_witness(p, q, L, cfg.ts, 'euler')
        for n in (2, 4, 8):
            scaled, _ = steering_witness(p, q, L / n, cfg.ts, 'euler')
            assert abs(scaled) <= abs(full) + 1e-15


def test_feasible_transitions_stay_feasible_for_shorter_wheelbase():
    params = BicycleParams(reference_offset=False)
    traj, _, model, cfg = _random_trajectory('rk4', seed=5, params=params)
    assert is_feasible(traj, model, cfg)
    for n in (2, 3):
        assert is_feasible(traj, BicycleModel(BicycleParams(wheelbase=L / n, reference_offset=False)), cfg)


def test_feasibility_rate_counts_trajectories():
    traj, _, model, cfg = _random_trajectory('rk4', steps=10)
    good = traj[1:]
    bad = good.copy()
    bad[3, 1] += 1.0
    rate, flags = feasibility_rate(np.stack([good, bad]), np.stack([traj[0], traj[0]]), model, cfg)
    assert rate == 0.5
    assert flags.tolist() == [True, False]
