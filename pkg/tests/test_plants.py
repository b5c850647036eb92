import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelfollow.plants import (
    CASE1_A,
    CASE1_A_D,
    CASE1_B,
    CASE1_B_H,
    CASE1_C,
    CASE1_X0,
    DelayedLinearPlant,
    FreeResponseReference,
    LinearReferenceModel,
    NonlinearSwitchingPlant,
    PiecewiseReference,
    ProbingNoise,
    piecewise_reference,
    round_half_away,
)
from oracles import direct_switching, naive_delayed_linear


def drive(plant, inputs):
    return np.array([plant.step([u]).copy() for u in inputs])


def test_zero_plant_stays_at_rest():
    p = DelayedLinearPlant(CASE1_A, CASE1_A_D, CASE1_B, CASE1_B_H, CASE1_C, 10, 20, np.zeros(3))
    assert p.step([0.0])[0] == 0.0
    np.testing.assert_array_equal(p.x, 0.0)


def test_first_step_from_case1_state():
    p = DelayedLinearPlant.case1()
    p.step([0.0])
    np.testing.assert_allclose(p.x, [-0.2816, -0.7239, -1.7860], atol=1e-4)
    np.testing.assert_allclose(p.x, CASE1_A @ CASE1_X0, atol=1e-15)


def test_state_delay_silent_for_first_d_steps():
    zero_B = np.zeros((3, 1))
    with_delay = DelayedLinearPlant(CASE1_A, CASE1_A_D, zero_B, zero_B, CASE1_C, 10, 20, CASE1_X0)
    no_delay = DelayedLinearPlant(CASE1_A, np.zeros((3, 3)), zero_B, zero_B, CASE1_C, 10, 20, CASE1_X0)
    for _ in range(10):
        with_delay.step([0.0])
        no_delay.step([0.0])
        np.testing.assert_array_equal(with_delay.x, no_delay.x)
    with_delay.step([0.0])
    no_delay.step([0.0])
    assert not np.array_equal(with_delay.x, no_delay.x)


@pytest.mark.parametrize("h", [0, 1, 5, 20])
def test_input_delay_impulse(h):
    Z = np.zeros((3, 3))
    p = DelayedLinearPlant(Z, Z, np.zeros((3, 1)), np.eye(3)[:, :1], np.eye(3)[:1], 3, h, np.zeros(3))
    first = None
    for k in range(h + 5):
        p.step([1.0 if k == 0 else 0.0])
        if first is None and np.any(p.x != 0):
            first = p.k
    assert first == h + 1


def test_time_axis_uses_sample_period():
    p = DelayedLinearPlant.case1()
    for _ in range(7):
        p.step([0.0])
    assert p.time == pytest.approx(0.07)


def test_non_finite_input_rejected():
    with pytest.raises(FloatingPointError):
        DelayedLinearPlant.case1().step([math.nan])
    with pytest.raises(FloatingPointError):
        NonlinearSwitchingPlant().step(math.inf)
    with pytest.raises(ValueError):
        DelayedLinearPlant.case1().step([1.0, 2.0])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=40, max_size=40), st.lists(st.floats(-1, 1), min_size=40, max_size=40))
def test_linear_superposition(u1, u2):
    def run(us):
        p = DelayedLinearPlant(CASE1_A, CASE1_A_D, CASE1_B, CASE1_B_H, CASE1_C, 10, 20, np.zeros(3))
        return drive(p, us)

    both = run(np.add(u1, u2))
    np.testing.assert_allclose(both, run(u1) + run(u2), atol=1e-10)


@pytest.mark.parametrize("d, h", [(0, 0), (1, 3), (10, 20), (25, 2)])
def test_linear_plant_matches_naive_history_simulator(d, h):
    rng = np.random.default_rng(d * 31 + h)
    us = rng.uniform(-1, 1, 300)
    p = DelayedLinearPlant(CASE1_A, CASE1_A_D, CASE1_B, CASE1_B_H, CASE1_C, d, h, CASE1_X0)
    expected = naive_delayed_linear(CASE1_A, CASE1_A_D, CASE1_B, CASE1_B_H, CASE1_C, d, h, CASE1_X0, us)
    np.testing.assert_allclose(drive(p, us), expected, rtol=0, atol=1e-12)


def test_reference_model_examples():
    m = LinearReferenceModel.case1(x_m0=[1.0, 0.0])
    assert m.step()[0] == 1.0
    np.testing.assert_allclose(m.x_m, [1.0, -0.01])
    z = LinearReferenceModel.case1(x_m0=[0.0, 0.0])
    z.step()
    np.testing.assert_array_equal(z.x_m, 0.0)


def test_reference_model_growth_rate():
    m = LinearReferenceModel.case1()
    n0 = np.linalg.norm(m.x_m)
    for _ in range(10):
        m.step()
    assert np.linalg.norm(m.x_m) == pytest.approx(n0 * (1 + 1e-4) ** 5, rel=1e-12)


def test_switching_plant_examples():
    p = NonlinearSwitchingPlant(4000)
    assert p.step(0.0)[0] == 0.0
    p = NonlinearSwitchingPlant(4000)
    assert p.step(0.5)[0] == 0.125


def test_regime_two_with_zero_history_is_scaled_input():
    p = NonlinearSwitchingPlant(100)
    p.k = 80  # regime 2, y history all zero
    assert p.step(0.3)[0] == pytest.approx(round_half_away(1.6) * 0.3 / 1.0)


@pytest.mark.parametrize("N_T", [4000, 101, 7])
def test_regime_boundary(N_T):
    p = NonlinearSwitchingPlant(N_T)
    assert p.regime(N_T // 2) == 1
    assert p.regime(N_T // 2 + 1) == 2


def test_switching_plant_matches_direct_formula():
    rng = np.random.default_rng(3)
    us = rng.uniform(-0.9, 0.9, 400)
    got = drive(NonlinearSwitchingPlant(400), us)[:, 0]
    np.testing.assert_array_equal(got, direct_switching(us, 400))


@pytest.mark.parametrize("v, expected", [(0.5, 1), (1.5, 2), (2.5, 3), (-2.5, -3), (1.49, 1), (0.0, 0)])
def test_round_half_away(v, expected):
    assert round_half_away(v) == expected


def test_piecewise_reference_examples():
    N_T = 4000
    assert piecewise_reference(0, N_T) == pytest.approx(0.3)
    assert piecewise_reference(N_T // 4, N_T) == -0.5
    assert piecewise_reference(9 * N_T // 10, N_T) == pytest.approx(-0.4)


def test_piecewise_reference_phase_boundaries():
    N_T = 4000
    sine = lambda k: 0.5 * math.sin(k * math.pi / 100) + 0.3 * math.cos(k * math.pi / 50)
    for k in (800, 1601, 3200):
        assert piecewise_reference(k, N_T) == pytest.approx(sine(k))
    assert abs(piecewise_reference(801, N_T)) == 0.5
    assert abs(piecewise_reference(1600, N_T)) == 0.5
    assert abs(piecewise_reference(3201, N_T)) == 0.4


def test_sine_branch_period():
    for k in range(0, 600, 37):
        assert piecewise_reference(k + 200, 4000 * 10) == pytest.approx(piecewise_reference(k, 4000 * 10))


def test_stateful_piecewise_reference_indexing():
    r = PiecewiseReference(4000)
    assert r.y[0] == piecewise_reference(0, 4000)
    assert r.step()[0] == piecewise_reference(0, 4000)
    assert r.step()[0] == piecewise_reference(1, 4000)


def test_free_response_reference_tracks_a_private_copy():
    p = DelayedLinearPlant.case1()
    ref = FreeResponseReference(p)
    for _ in range(30):
        assert np.array_equal(ref.y, p.y)
        p.step([0.0])
        ref.step()
    assert p.k == 30


@pytest.mark.parametrize("kind", ["uniform", "multisine"])
def test_noise_bounds_window_and_determinism(kind):
    n = ProbingNoise(kind, 0.1, 50, seed=4)
    samples = np.array([n.sample(k) for k in range(80)])
    assert np.all(np.abs(samples) <= 0.1)
    np.testing.assert_array_equal(samples[50:], 0.0)
    assert np.any(samples[:50] != 0)
    again = ProbingNoise(kind, 0.1, 50, seed=4)
    np.testing.assert_array_equal(samples, [again.sample(k) for k in range(80)])
    other = ProbingNoise(kind, 0.1, 50, seed=5)
    assert not np.array_equal(samples, [other.sample(k) for k in range(80)])


def test_zero_amplitude_noise():
    n = ProbingNoise(amplitude=0.0)
    assert all(n.sample(k)[0] == 0.0 for k in range(10))


def test_noise_validation():
    with pytest.raises(ValueError):
        ProbingNoise(kind="gaussian")
    with pytest.raises(ValueError):
        ProbingNoise(amplitude=-1.0)
