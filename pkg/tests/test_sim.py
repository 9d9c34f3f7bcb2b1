import math

import numpy as np
import pytest

from conftest import make_arm
from flexform.controller import ControlGains
from flexform.dynamics import ActuationType, LinkParams, ManipulatorConfig, ManipulatorState, MechParams, NetworkModel
from flexform.graph import Framework
from flexform.kinematics import virtual_end_effector
from flexform.scenarios import REFERENCE_LINK1, builtin
from flexform.sim import (
    IntegrationError,
    NetworkState,
    Simulator,
    centered_rate,
    load_trajectory,
    lyapunov,
    rk4_step,
    run,
    save_trajectory,
    simulate_single_arm,
    step,
    verify_rest_equilibrium,
)
from flexform.verify import richardson_ratio

FA, AP, PA = ActuationType.FA, ActuationType.AP, ActuationType.PA


def on_shape(case, q):
    """Built-in case whose reference shape is met exactly by virtual tips at q."""
    sc = builtin(case)
    fw = Framework(sc.framework.graph, [virtual_end_effector(c, qi) for c, qi in zip(sc.manipulators, q)])
    states = tuple(ManipulatorState(qi, (0.0, 0.0)) for qi in q)
    return sc.replace(framework=fw, initial_states=states)


@pytest.fixture(scope="module")
def short_case2():
    return run(builtin("case2"), t_final=2.0)


def test_rk4_is_fourth_order_on_linear_ode():
    def final(h):
        y = np.array([1.0, 0.0])
        for k in range(int(round(1.0 / h))):
            y = rk4_step(lambda t, v: np.array([v[1], -v[0]]), k * h, y, h)
        return y

    exact = np.array([math.cos(1.0), -math.sin(1.0)])
    ratio = np.linalg.norm(final(0.05) - exact) / np.linalg.norm(final(0.025) - exact)
    assert 15 < ratio < 17


def test_closed_loop_richardson_ratio():
    assert richardson_ratio(builtin("case3")) >= 12


def test_origin_on_shape_stays_at_rest():
    sc = on_shape("case2", np.zeros((4, 2)))
    s = NetworkState.initial(sc)
    for _ in range(50):
        s = step(sc, s)
    assert np.all(s.q == 0) and np.all(s.qdot == 0)


def test_rest_on_shape_with_active_offsets_stays_at_rest():
    q = np.array([[0.3, -0.8], [0.2, 0.5], [-0.4, 0.0], [0.0, 0.7]])
    sc = on_shape("case2", q)
    s = NetworkState.initial(sc)
    sim = Simulator(sc)
    for _ in range(200):
        s = sim.step(s)[0]
    np.testing.assert_allclose(s.q, q, atol=1e-13)
    np.testing.assert_allclose(s.qdot, 0, atol=1e-12)


def test_energy_conserved_without_control():
    # no torque on either joint: the actuation type is irrelevant
    arm = make_arm(FA)
    model = NetworkModel([arm])
    drift = []
    for dt in (1e-3, 5e-4):
        _, q, qd = simulate_single_arm(arm, ManipulatorState((0.8, -0.5), (0.3, 1.0)), lambda q, qd: (0.0, 0.0), dt, 10.0)
        e = np.array([model.kinetic_energy(a[None], b[None]) + model.spring_energy(a[None]) for a, b in zip(q, qd)])
        drift.append(np.max(np.abs(e - e[0])) / e[0])
    assert drift[0] < 1e-7
    # the drift is integrator error: it must shrink at fourth order
    assert drift[0] / drift[1] > 10


def test_lyapunov_zero_at_rest_on_shape():
    q = np.array([[0.3, -0.8], [0.2, 0.5], [-0.4, 0.0], [0.0, 0.7]])
    sc = on_shape("case2", q)
    u, u_dot = lyapunov(sc, NetworkState.initial(sc))
    assert u == 0.0 and u_dot == 0.0


def test_lyapunov_rate_vanishes_without_active_motion():
    sc = builtin("case2")
    qd = np.zeros((4, 2))
    qd[2, 1] = 1.3  # passive joint of the AP arm
    qd[3, 0] = -0.7  # passive joint of the PA arm
    u, u_dot = lyapunov(sc, NetworkState(NetworkState.initial(sc).q, qd))
    assert u > 0 and u_dot == 0.0


def test_lyapunov_rate_matches_trajectory_derivative(short_case2):
    rec = short_case2
    num = centered_rate(rec.U, rec.t[1] - rec.t[0])
    ana = rec.U_dot[2:-2]
    mask = np.abs(ana) > 1e-4
    assert mask.sum() > 1000
    assert np.max(np.abs(num[mask] - ana[mask]) / np.abs(ana[mask])) < 1e-3


def test_three_point_rate_is_second_order():
    # error of the plain central difference shrinks 4x when dt halves
    errs = []
    for dt in (1e-3, 5e-4):
        rec = run(builtin("case2", dt=dt), t_final=0.01)
        k = int(round(0.005 / dt))
        errs.append(abs((rec.U[k + 1] - rec.U[k - 1]) / (2 * dt) - rec.U_dot[k]))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_centered_rate_exact_for_cubics():
    t = np.arange(20) * 0.1
    np.testing.assert_allclose(centered_rate(t**3 - 2 * t, 0.1), 3 * t[2:-2] ** 2 - 2, atol=1e-12)


def test_lyapunov_non_increasing(short_case2):
    assert short_case2.lyapunov_violations.size == 0
    assert np.all(np.diff(short_case2.U) <= short_case2.eps_int)


def test_record_time_grid_and_internal_consistency(short_case2):
    rec = short_case2
    sc = builtin("case2")
    assert np.array_equal(rec.t, np.arange(rec.t.size) * sc.dt)
    for k in (0, 17, rec.t.size - 1):
        for i, c in enumerate(sc.manipulators):
            assert np.array_equal(rec.x_hat[k, i], virtual_end_effector(c, rec.q[k, i]))


def test_trajectory_csv_round_trip(short_case2, tmp_path):
    path = tmp_path / "traj.csv"
    save_trajectory(short_case2, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "q_1_1", "q_1_2"] and "U" in header and "edge_err_1" in header
    back = load_trajectory(path)
    assert np.array_equal(back.U, short_case2.U)
    assert np.array_equal(back.to_array(), short_case2.to_array())


def test_zoh_and_stage_agree_to_first_order():
    sc = builtin("case3")
    a = run(sc, t_final=0.5, hold="zoh")
    b = run(sc, t_final=0.5, hold="stage")
    gap = np.max(np.abs(a.q[-1] - b.q[-1]))
    assert 0 < gap < 10 * sc.dt
    with pytest.raises(ValueError):
        Simulator(sc, hold="later")


def test_singularity_margin_is_flagged():
    rec = run(builtin("case2"), t_final=0.05, margin=math.pi / 4)
    assert rec.singular_steps.size > 0
    assert run(builtin("case2"), t_final=0.05).singular_steps.size == 0


def test_non_finite_state_reports_time():
    sim = Simulator(builtin("case2"))
    s = NetworkState.initial(builtin("case2"))
    s.t = 0.25
    u = np.full((4, 2), np.nan)
    with pytest.raises(IntegrationError, match="t=0.251"):
        sim.advance(s, u)


@pytest.mark.parametrize("act", [AP, PA])
def test_rest_equilibrium_reference_arm(act):
    arm = make_arm(act)
    for qa in (-1.2, 0.0, 0.4, 2.9):
        res = verify_rest_equilibrium(arm, qa, 5.0 * qa)
        assert res.passive_angle == 0.0 or abs(res.passive_angle) < 1e-12
        assert res.residual < 1e-10
        assert res.torque_balance == 0.0


def test_rest_equilibrium_rejections():
    with pytest.raises(ValueError):
        verify_rest_equilibrium(make_arm(FA), 0.1, 0.5)
    # alpha2 == alpha3: m2*l2^2 + I2 == m2*L1*l2 with m2=1, L1=0.3, l2=0.2, I2=0.02
    link2 = LinkParams(1.0, 0.02, 0.5, 0.2)
    link1 = LinkParams(REFERENCE_LINK1.mass, REFERENCE_LINK1.inertia_com, 0.3, REFERENCE_LINK1.com_offset)
    arm = ManipulatorConfig(MechParams(link1, link2), (5.0, 5.0), PA)
    with pytest.raises(ValueError, match="alpha2"):
        verify_rest_equilibrium(arm, 0.1, 0.5)


def test_single_ap_arm_settles_with_passive_at_zero():
    arm = make_arm(AP)
    u1, k_d = 1.5, 0.5
    t, q, qd = simulate_single_arm(
        arm, ManipulatorState((0.0, 0.6), (0.0, 0.0)), lambda q, qd: (u1 - k_d * qd[0], 0.0), 1e-3, 20.0
    )
    # passive swing decays through the coupling; it must at least be shrinking
    early = np.max(np.abs(q[:5000, 1]))
    late = np.max(np.abs(q[-5000:, 1]))
    assert late < 0.5 * early
    assert abs(q[-1, 0] - u1 / 5.0) < 0.05


def test_convergence_detection(short_case2):
    assert short_case2.converged_at is None
    q = np.array([[0.3, -0.8], [0.2, 0.5], [-0.4, 0.0], [0.0, 0.7]])
    rec = run(on_shape("case2", q), t_final=1.5)
    assert rec.converged_at == 0.0
