import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modelfollow.kernel import CostWeights, Dimensions, kron_pack_state, pack_kernel, unpack_kernel
from modelfollow.learner import (
    LearnerConfig,
    PlantDivergenceError,
    PolicyExtractionError,
    actor_update,
    bellman_residual,
    contraction_factor,
    critic_target,
    critic_update,
    desired_action,
    greedy_gains,
    initial_state,
    run_online_episode,
    seed_kernel,
    trace_columns,
)
from modelfollow.plants import (
    DelayedLinearPlant,
    FreeResponseReference,
    LinearReferenceModel,
    ProbingNoise,
)

DIMS = Dimensions()
W = CostWeights.scaled_identity(DIMS, 0.05, 0.01)
finite = st.floats(-100, 100, allow_nan=False)


@pytest.mark.parametrize("E, mu, expected", [([0, 0, 0], [0], 0.0), ([1, 0, 0], [0], 0.025), ([1, 1, 1], [2], 0.095)])
def test_critic_target_examples(E, mu, expected):
    assert critic_target(E, mu, W) == pytest.approx(expected, abs=1e-15)


def test_critic_update_examples():
    np.testing.assert_allclose(critic_update([1.0], [1.0], [0.0], 0.5, 0.5, 1.5), [0.9])
    th = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(critic_update(th, [1, 2, 3], [1, 2, 3], 0.0, 0.5, 1.5), th)
    # consistent weights: residual zero
    np.testing.assert_array_equal(critic_update(th, [1, 0, 0], [0, 0, 0], 1.0, 0.5, 1.5), th)


def test_critic_update_rejects_non_finite_and_bad_shapes():
    with pytest.raises(FloatingPointError):
        critic_update([1.0], [np.nan], [0.0], 0.0, 0.5, 1.5)
    with pytest.raises(ValueError):
        critic_update([1.0, 2.0], [1.0], [0.0], 0.0, 0.5, 1.5)


@settings(max_examples=200)
@given(st.integers(1, 15).flatmap(lambda q: st.tuples(
    arrays(np.float64, q, elements=finite), arrays(np.float64, q, elements=finite),
    arrays(np.float64, q, elements=finite))), finite)
def test_exact_projection_with_unit_step(vecs, target):
    theta, zk, zn = vecs
    z_tilde = zk - zn
    if z_tilde @ z_tilde < 1e-6:
        return
    new = critic_update(theta, zk, zn, target, 1.0, 0.0)
    assert new @ z_tilde == pytest.approx(target, rel=1e-9, abs=1e-9)


def test_desired_action_examples():
    theta = np.array([[3.0, 1.0], [1.0, 2.0]])
    assert desired_action(theta, [1.0])[0] == pytest.approx(-0.5)
    np.testing.assert_array_equal(desired_action(theta, [0.0]), [0.0])
    decoupled = np.diag([1.0, 1.0, 1.0, 4.0])
    np.testing.assert_array_equal(desired_action(decoupled, [1.0, -2.0, 3.0]), [0.0])


def test_policy_extraction_errors():
    indefinite = np.diag([1.0, 1.0, 1.0, -1.0])
    with pytest.raises(PolicyExtractionError):
        greedy_gains(indefinite, 3)
    ill = np.diag([1.0, 1.0, 1.0, 1.0, 1e-9])
    with pytest.raises(PolicyExtractionError):
        greedy_gains(ill, 3)


def test_actor_update_examples():
    np.testing.assert_allclose(actor_update([[1.0]], [1.0], [0.5], 0.5, 1.5), [[0.9]])
    om = np.array([[0.3, -0.2, 0.1]])
    np.testing.assert_array_equal(actor_update(om, [0, 0, 0], [0.7], 0.5, 1.5), om)


@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, 3, elements=finite))
def test_actor_fixed_point(omega, E):
    np.testing.assert_array_equal(actor_update(omega, E, omega @ E, 0.5, 1.5), omega)


def test_actor_update_shape_checks():
    with pytest.raises(ValueError):
        actor_update([[1.0, 2.0]], [1.0, 2.0, 3.0], [0.0], 0.5, 1.5)


def test_contraction_factor_examples():
    assert contraction_factor([0.0, 0.0], 0.5, 1.5) == 1.0
    assert contraction_factor([1.0], 0.5, 1.5) == pytest.approx(0.8)
    assert contraction_factor([1.0], 1.0, 1e-12) == pytest.approx(0.0, abs=1e-11)


@given(arrays(np.float64, 4, elements=st.floats(-10, 10)), st.floats(1e-3, 1.999), st.floats(1e-3, 10))
def test_contraction_interval(r, delta, eta):
    if r @ r < 1e-9:
        return
    lam = contraction_factor(r, delta, eta)
    # negative for delta > 1 but still inside the unit interval
    assert 1 - delta < lam < 1.0
    assert abs(lam) < 1.0


def test_bellman_residual_examples():
    z0 = np.zeros(4)
    assert bellman_residual(pack_kernel(np.eye(4)), z0, z0, np.zeros(3), [0.0], W) == 0.0
    E, mu = np.array([1.0, 1, 1]), np.array([2.0])
    z = np.r_[E, mu]
    assert bellman_residual(np.zeros(10), z, 0.5 * z, E, mu, W) == pytest.approx(-0.095)


def test_critic_update_zeroes_residual_as_step_goes_to_one():
    rng = np.random.default_rng(0)
    th = pack_kernel(seed_kernel([[1.0, 0.5, 0.0]]))
    zk, zn = rng.normal(size=4), rng.normal(size=4)
    E, mu = zk[:3], zk[3:]
    new = critic_update(th, kron_pack_state(zk), kron_pack_state(zn), critic_target(E, mu, W), 1.0, 0.0)
    assert abs(bellman_residual(new, zk, zn, E, mu, W)) < 1e-10


def test_config_bounds():
    LearnerConfig()
    for kw in (dict(delta_V=2.0), dict(delta_mu=0.0), dict(delta_V=2.5), dict(eta_mu=-1.0), dict(eta_V=0.0),
               dict(N=0), dict(T_r=0.0)):
        with pytest.raises(ValueError):
            LearnerConfig(**kw)
    with pytest.raises(ValueError, match="0 < delta_V < 2"):
        LearnerConfig(delta_V=2.5)


@given(arrays(np.float64, 3, elements=st.floats(-20, 20)), st.floats(0.1, 10))
def test_seed_kernel_is_pd_with_requested_gain(omega0, scale):
    theta = seed_kernel(omega0[None, :], scale)
    assert np.linalg.eigvalsh(theta).min() > 0
    np.testing.assert_allclose(greedy_gains(theta, 3), omega0[None, :], atol=1e-9 * (1 + np.abs(omega0).max()))


def test_seed_kernel_identity_at_zero_gain():
    np.testing.assert_array_equal(seed_kernel(np.zeros((1, 3))), np.eye(4))


def test_initial_state_defaults():
    s = initial_state(DIMS)
    np.testing.assert_array_equal(s.theta, np.eye(4))
    np.testing.assert_array_equal(s.omega, np.zeros((1, 3)))
    with pytest.raises(ValueError):
        initial_state(DIMS, theta0=-np.eye(4))
    with pytest.raises(ValueError):
        initial_state(DIMS, omega0=np.zeros((1, 2)))


def test_learner_state_history_bounded():
    s = initial_state(DIMS, N=5)
    for i in range(20):
        s.critic_changes.append(i)
    assert len(s.critic_changes) == 5
    c = s.copy()
    c.critic_changes.append(99)
    assert list(s.critic_changes) == [15, 16, 17, 18, 19]


def test_zero_error_fixed_point():
    plant = DelayedLinearPlant.case1()
    ref = FreeResponseReference(plant)
    init = initial_state(DIMS, omega0=[[2.0, 1.0, -1.0]])
    res = run_online_episode(plant, ref, W, LearnerConfig(N_T=300), init, None)
    assert all(r["eps"] == 0.0 for r in res.trace)
    np.testing.assert_array_equal(res.state.theta_bar, init.theta_bar)
    np.testing.assert_array_equal(res.state.omega, init.omega)


def case1_pair():
    return DelayedLinearPlant.case1(), LinearReferenceModel.case1()


def test_episode_trace_schema_and_logging():
    rows = []
    plant, ref = case1_pair()
    cfg = LearnerConfig(N_T=400)
    res = run_online_episode(plant, ref, W, cfg, initial_state(DIMS, omega0=[[10.0, 0, 0]]),
                             ProbingNoise(seed=1), sink=rows.append)
    assert rows == res.trace and len(rows) == 400
    assert list(rows[0]) == trace_columns(3, 1)
    assert rows[5]["t"] == pytest.approx(0.05)
    assert rows[0]["eps"] == pytest.approx(rows[0]["y_m"] - rows[0]["y"])
    noisy = [r for r in rows if r["k"] < 250]
    assert any(r["mu_applied"] != r["mu_clean"] for r in noisy)
    assert all(r["mu_applied"] == r["mu_clean"] for r in rows if r["k"] >= 250)
    for r in rows[1:]:
        assert r["u"] == pytest.approx(rows[r["k"] - 1]["u"] + r["mu_applied"])


def test_convergence_not_counted_during_exploration_and_freezes():
    plant, ref = case1_pair()
    cfg = LearnerConfig()
    res = run_online_episode(plant, ref, W, cfg, initial_state(DIMS, omega0=[[10.0, 0, 0]]), ProbingNoise(seed=0))
    assert res.converged and cfg.exploration_steps + cfg.N - 1 <= res.convergence_step <= cfg.N_T
    after = [r for r in res.trace if r["k"] > res.convergence_step]
    assert after and all(r["theta_change_norm"] == 0.0 and r["omega_change_norm"] == 0.0 for r in after)
    window = res.trace[res.convergence_step - cfg.N + 1: res.convergence_step + 1]
    assert all(r["theta_change_norm"] < cfg.T_r and r["omega_change_norm"] < cfg.T_r for r in window)
    assert len(res.trace) == cfg.N_T


def test_stop_at_convergence_when_not_freezing():
    plant, ref = case1_pair()
    cfg = LearnerConfig(freeze_on_convergence=False)
    res = run_online_episode(plant, ref, W, cfg, initial_state(DIMS, omega0=[[10.0, 0, 0]]), ProbingNoise(seed=0))
    assert res.converged and res.trace[-1]["k"] == res.convergence_step


def test_divergence_aborts_with_partial_trace():
    plant, ref = case1_pair()
    with pytest.raises(PlantDivergenceError) as info:
        run_online_episode(plant, ref, W, LearnerConfig(), initial_state(DIMS, omega0=[[-50.0, 0, 0]]),
                           None, blowup=100.0)
    partial = info.value.result
    assert partial is not None and 0 < len(partial.trace) < 4000
    assert partial.aborted


def test_episode_deterministic():
    def once():
        plant, ref = case1_pair()
        return run_online_episode(plant, ref, W, LearnerConfig(N_T=600), initial_state(DIMS, omega0=[[10.0, 0, 0]]),
                                  ProbingNoise(seed=7)).trace

    assert once() == once()


def test_unpacked_theta_stays_symmetric_during_learning():
    plant, ref = case1_pair()
    res = run_online_episode(plant, ref, W, LearnerConfig(N_T=300), initial_state(DIMS, omega0=[[10.0, 0, 0]]),
                             ProbingNoise(seed=2))
    T = unpack_kernel(res.state.theta_bar)
    np.testing.assert_array_equal(T, T.T)
