import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from carnotflow import frames, sde_engine as se
from carnotflow.costs import sphere
from carnotflow.frames import EpsilonFrame

unit3 = arrays(float, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: v / np.linalg.norm(v))


def test_extremal_control_example():
    assert np.array_equal(se.extremal_control([1.0, 0.0]), np.diag([0.0, 1.0]))


def test_extremal_control_rejects_non_unit():
    with pytest.raises(se.PolicyError):
        se.extremal_control([1.0, 1.0])


@given(unit3)
def test_extremal_control_is_projection(a):
    nu = se.extremal_control(a)
    assert np.allclose(nu @ nu, nu, atol=1e-12)
    assert np.allclose(nu @ a, 0, atol=1e-12)
    assert np.trace(nu) == pytest.approx(2.0)


def test_block_noise_prefix_stable():
    a = se.path_noise(5, 0, 1500, 3, 2)
    b = se.path_noise(5, 0, 1000, 3, 2)
    c = se.path_noise(5, 1000, 500, 3, 2)
    assert np.array_equal(a[:1000], b) and np.array_equal(a[1000:], c)


def test_euclidean_bm_is_sum_of_increments():
    e = frames.euclidean(2)
    ens = se.simulate_horizontal_bm(e, [0.5, -1.0], 1.0, 0.1, 300, seed=3)
    Z = se.path_noise(3, 0, 300, 10, 2)
    assert np.allclose(ens.terminal, np.array([0.5, -1.0]) + np.sqrt(0.1) * Z.sum(axis=1), atol=1e-12)


def test_euclidean_bm_distribution():
    e = frames.euclidean(2)
    ens = se.simulate_horizontal_bm(e, [0.0, 0.0], 0.5, 0.05, 20000, seed=11)
    for k in range(2):
        assert stats.kstest(ens.terminal[:, k], "norm", args=(0.0, np.sqrt(0.5))).pvalue > 1e-3


def test_levy_area_moments(heis):
    # characteristic function 1/cosh(T u / 2) gives E[A^2] = T^2/4 and Var(A^2) = T^4/4
    ens = se.simulate_horizontal_bm(heis, np.zeros(3), 1.0, 1e-2, 20000, seed=2)
    x3 = ens.terminal[:, 2]
    se_m2 = 0.5 / np.sqrt(x3.size)
    assert abs(np.mean(x3**2) - 0.25) < 5 * se_m2 + 0.01
    assert abs(np.mean(x3)) < 5 * 0.5 / np.sqrt(x3.size)


def test_controlled_frozen_coordinate():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    ens = se.simulate_controlled(e, [0.3, 0.0], 0.0, 1.0, 0.1, 20000, 4, se.constant_policy([1.0, 0.0]))
    assert np.all(ens.terminal[:, 0] == 0.3)
    # controlled dynamics carry a sqrt(2) factor
    assert np.var(ens.terminal[:, 1]) == pytest.approx(2.0, rel=0.05)


def test_controlled_heisenberg_projected_noise(heis):
    # a = e1 kills the first noise component; along X2 with x1 frozen the field is constant
    pol = se.constant_policy([1.0, 0.0])
    ens = se.simulate_controlled(heis, [1.0, 0.0, 0.0], 0.0, 0.5, 0.05, 500, 9, pol, mode="controlled-sub")
    y = ens.terminal
    assert np.all(y[:, 0] == 1.0)
    assert np.allclose(y[:, 2], y[:, 1] / 2, atol=1e-12)


def test_controlled_eps_moves_vertical_coordinate(heis):
    e = EpsilonFrame(heis, 0.5)
    pol = se.constant_policy([1.0, 0.0, 0.0])
    ens = se.simulate_controlled(e, [0.0, 0.0, 0.0], 0.0, 0.5, 0.05, 4000, 9, pol)
    assert np.all(ens.terminal[:, 0] == 0.0)
    # x3 = sqrt2 * eps * B3 plus zero since x1 stays 0
    assert np.var(ens.terminal[:, 2]) == pytest.approx(2 * 0.25 * 0.5, rel=0.1)


def test_thread_count_does_not_change_paths(heis):
    e = EpsilonFrame(heis, 0.5)
    pol = se.gradient_policy(e, sphere().gradient)
    a = se.simulate_controlled(e, [0.2, 0.1, 0.0], 0.0, 0.2, 0.01, 2500, 6, pol, threads=1)
    b = se.simulate_controlled(e, [0.2, 0.1, 0.0], 0.0, 0.2, 0.01, 2500, 6, pol, threads=3)
    assert a.terminal.tobytes() == b.terminal.tobytes()


def test_record_every_keeps_grid(heis):
    ens = se.simulate_horizontal_bm(heis, np.zeros(3), 0.1, 0.01, 10, 1, record_every=4)
    assert np.allclose(ens.record_times, [0.0, 0.04, 0.08, 0.1])
    assert np.array_equal(ens.paths[:, -1], ens.terminal)


def test_step_errors(heis):
    e = EpsilonFrame(heis, 0.5)
    pol = se.constant_policy([1.0, 0, 0])
    with pytest.raises(ValueError):
        se.simulate_controlled(e, np.zeros(3), 0.0, 0.1, 0.2, 10, 1, pol)
    with pytest.raises(ValueError):
        se.simulate_controlled(e, np.zeros(2), 0.0, 0.1, 0.01, 10, 1, pol)
    with pytest.raises(ValueError):
        se.simulate_controlled(e, np.zeros(3), 0.0, 0.1, 0.01, 10, 1, se.constant_policy([1.0, 0]))
    with pytest.raises(ValueError):
        se.simulate_controlled(heis, np.zeros(3), 0.0, 0.1, 0.01, 10, 1, pol)


def test_single_step_allowed():
    assert se.step_count(0.0, 0.1, 0.1) == (1, 0.1)
    n, dt = se.step_count(0.0, 1.0, 0.3)
    assert n == 4 and dt == pytest.approx(0.25)


@given(arrays(float, (5, 3), elements=st.floats(-2, 2)))
def test_gradient_policy_unit_and_aligned(ys):
    e = EpsilonFrame(frames.heisenberg1(), 0.5)
    cost = sphere()
    a = se.gradient_policy(e, cost.gradient)(0.0, ys)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
    for y, ai in zip(ys, a):
        v = e.matrix(y) @ cost.gradient(y)
        if np.linalg.norm(v) > 1e-6:
            assert np.allclose(ai, v / np.linalg.norm(v))


def test_grid_table_lookup():
    table = np.zeros((2, 2, 2, 2))
    table[..., 0] = 1.0
    table[1, 1, 0] = [0.0, 3.0]
    pol = se.grid_table_policy(table, [(-1, 1), (-1, 1)], (0.0, 1.0))
    assert np.allclose(pol(0.7, [[0.5, -0.5]]), [[0.0, 1.0]])
    assert np.allclose(pol(0.2, [[0.5, -0.5]]), [[1.0, 0.0]])
    assert np.allclose(pol(0.7, [[5.0, -5.0]]), [[0.0, 1.0]])


def _generator_oracle(frame, phi, x, a, h=1e-4):
    nu2 = se.extremal_control(a)
    Xj = lambda j, y: phi.gradient(0.0, y) @ frame.matrix(y)[j]
    X = frame.matrix(x)
    tot = 0.0
    for i in range(frame.nfields):
        for j in range(frame.nfields):
            xixj = (Xj(j, x + h * X[i]) - Xj(j, x - h * X[i])) / (2 * h)
            tot += nu2[i, j] * xixj
    return tot


@given(arrays(float, 3, elements=st.floats(-1, 1)), unit3, st.floats(0.2, 1))
def test_generator_matches_nested_differences(x, a, eps):
    e = EpsilonFrame(frames.heisenberg1(), eps)
    phi = se.smooth_test_function(3)
    assert se.generator(e, phi, x, a) == pytest.approx(_generator_oracle(e, phi, x, a), abs=1e-6)


def test_weak_order_small_sample(heis):
    e = EpsilonFrame(heis, 0.5)
    res = se.generator_consistency(e, se.smooth_test_function(3), [0.3, -0.2, 0.1], [1, 2, 2],
                                   (4e-3, 2e-3, 1e-3), 20000, 1)
    assert np.all(res.orders >= 0.9)
