import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carnotflow import frames, pde_engine as pe
from carnotflow.contour import zero_set_radius
from carnotflow.frames import EpsilonFrame
from carnotflow.grid import sample
from carnotflow.levelset_ops import CharacteristicPointError, ZeroGradientError

sym3 = arrays(float, (3, 3), elements=st.floats(-3, 3)).map(lambda a: np.triu(a) + np.triu(a, 1).T)
vec3 = arrays(float, 3, elements=st.floats(-3, 3))


def test_F_hmcf_euclidean_circle_data():
    assert pe.F_hmcf(frames.euclidean(2), np.array([1.0, 0]), np.array([2.0, 0]), 2 * np.eye(2)) == pytest.approx(-2.0)


def test_F_hmcf_characteristic_error(heis):
    x = np.array([0.0, 2.0, 0.0])
    # sigma(x) p = 0 for p = (1, 0, 1): X1 p = 1 - x2/2 = 0, X2 p = 0
    with pytest.raises(CharacteristicPointError):
        pe.F_hmcf(heis, x, np.array([1.0, 0.0, 1.0]), np.eye(3))


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_F_hmcf_heisenberg_cylinder_data(heis, r):
    assert pe.F_hmcf(heis, np.array([r, 0, 0]), np.array([2 * r, 0, 0]), np.diag([2.0, 2, 0])) == pytest.approx(-2.0)


def test_F_hmcf_envelopes_examples():
    e = frames.euclidean(2)
    assert pe.F_hmcf_envelopes(e, np.zeros(2), np.zeros(2), np.diag([1.0, -1.0])) == (1.0, -1.0)
    assert pe.F_hmcf_envelopes(e, np.zeros(2), np.zeros(2), np.zeros((2, 2))) == (0.0, 0.0)
    up, lo = pe.F_hmcf_envelopes(e, np.zeros(2), np.array([1.0, 2.0]), np.diag([1.0, -1.0]))
    assert up == lo


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.1])
def test_F_eps_cylinder_independent_of_eps(heis, eps):
    e = EpsilonFrame(heis, eps)
    assert pe.F_eps(e, np.array([0.8, 0, 0.3]), np.array([1.6, 0, 0]), np.diag([2.0, 2, 0])) == pytest.approx(-2.0)


@given(vec3, st.floats(0.05, 1))
def test_F_eps_plane_is_zero(x, eps):
    e = EpsilonFrame(frames.heisenberg1(), eps)
    assert pe.F_eps(e, x, np.array([0, 0, 1.0]), np.zeros((3, 3))) == pytest.approx(0.0, abs=1e-15)


def test_F_eps_zero_gradient(heis):
    e = EpsilonFrame(heis, 0.5)
    with pytest.raises(ZeroGradientError):
        pe.F_eps(e, np.zeros(3), np.zeros(3), np.eye(3))
    assert pe.F_eps_envelopes(e, np.zeros(3), np.zeros(3), np.zeros((3, 3))) == (0.0, 0.0)


@given(vec3, vec3, sym3, st.floats(0.05, 1))
def test_envelope_ordering(x, p, S, eps):
    e = EpsilonFrame(frames.heisenberg1(), eps)
    up, lo = pe.F_eps_envelopes(e, x, p, S)
    assert up >= lo - 1e-12
    if np.linalg.norm(p) > 1e-6:
        assert up == lo


@given(vec3, sym3)
def test_envelopes_bracket_regular_values(x, S):
    # at p = 0 the envelopes are the sup/inf of the regular value over all normals
    e = EpsilonFrame(frames.heisenberg1(), 0.5)
    up, lo = pe.F_eps_envelopes(e, x, np.zeros(3), S)
    sig = e.sigma(x)
    for q in np.eye(3):
        v = pe.F_eps(e, x, np.linalg.solve(sig, q), S)
        assert lo - 1e-9 <= v <= up + 1e-9


def test_evaluate_operator_branches(heis):
    e = EpsilonFrame(heis, 0.5)
    assert pe.evaluate_operator(e, np.zeros(3), np.array([1.0, 0, 0]), np.eye(3)).branch == "regular"
    assert pe.evaluate_operator(e, np.zeros(3), np.zeros(3), np.eye(3)).branch == "upper-envelope"
    assert pe.evaluate_operator(e, np.zeros(3), np.zeros(3), np.eye(3), side="lower").branch == "lower-envelope"


def _circle(n=81, R=1.0):
    return sample([(-1.5, 1.5)] * 2, (n, n), lambda x: np.sum(x**2, axis=-1) - R * R)


def test_cfl_violation():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    f = _circle(21)
    with pytest.raises(pe.CFLViolation):
        pe.step_explicit(e, f, 2 * pe.cfl_limit(e, f))


def test_cfl_formula():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    f = _circle(31)
    assert pe.cfl_limit(e, f) == pytest.approx(0.2 * 0.1**2 / 2)


def test_evolve_zero_horizon_returns_initial():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    f = _circle(21)
    traj = pe.evolve(e, f, 0.0)
    assert len(traj.snapshots) == 1 and traj.final is f and traj.n_steps == 0


def test_shrinking_circle_coarse():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    traj = pe.evolve(e, _circle(101), 0.3)
    r = zero_set_radius(traj.final)
    assert r.radius == pytest.approx(math.sqrt(1 - 0.6), rel=0.02)


def test_plane_stationary_exactly(heis):
    e = EpsilonFrame(heis, 0.5)
    f = sample([(-1, 1)] * 3, (21, 21, 21), lambda x: x[..., 2])
    traj = pe.evolve(e, f, 0.0, n_steps=100)
    inner = (slice(1, -1),) * 3
    assert np.max(np.abs(traj.final.values[inner] - f.values[inner])) <= 1e-10


def test_cylinder_extinction(heis):
    e = EpsilonFrame(heis, 1.0)
    f = sample([(-1.5, 1.5), (-1.5, 1.5), (-0.3, 0.3)], (41, 41, 5), lambda x: x[..., 0] ** 2 + x[..., 1] ** 2 - 1)
    traj = pe.evolve(e, f, 0.55, snapshot_every=0.05)
    assert zero_set_radius(traj.snapshots[4], [0, 1]).radius == pytest.approx(math.sqrt(1 - 0.4), rel=0.05)
    assert zero_set_radius(traj.final, [0, 1]).empty


def test_maximum_principle_surrogate():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    traj = pe.evolve(e, _circle(41), 0.2)
    mx = [s.u_max for s in traj.steps]
    mn = [s.u_min for s in traj.steps]
    assert all(b <= a + 1e-12 for a, b in zip(mx, mx[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(mn, mn[1:]))


def test_monotone_relabelling_keeps_zero_set():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    f = _circle(81)
    g = f.replace(np.tanh(f.values) + f.values**3, 0.0)
    a = zero_set_radius(pe.evolve(e, f, 0.15).final).radius
    b = zero_set_radius(pe.evolve(e, g, 0.15).final).radius
    assert abs(a - b) <= float(f.h[0])


def test_rhs_consistency_order(heis):
    from carnotflow.sde_engine import smooth_test_function

    e = EpsilonFrame(heis, 0.5)
    phi = smooth_test_function(3)
    errs, hs = [], []
    x = np.array([0.25, -0.25, 0.125])
    for n in (9, 17, 33):
        f = sample([(-1, 1)] * 3, (n,) * 3, lambda y: phi(0.0, y))
        rates, _, _ = pe.discrete_rhs(f, pe.Stencil.build(e, f))
        ix = tuple(np.rint((x + 1) / f.h).astype(int))
        exact = -pe.F_eps(e, x, phi.gradient(0.0, x), phi.hessian(0.0, x))
        errs.append(abs(rates[ix] - exact))
        hs.append(f.h[0])
    orders = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(orders >= 0.9)


def test_envelope_branch_used_at_flat_nodes():
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    # the minimum of a paraboloid sits exactly on a node: zero discrete gradient there
    f = sample([(-1, 1)] * 2, (21, 21), lambda x: np.sum(x**2, axis=-1))
    rates, n_env, _ = pe.discrete_rhs(f, pe.Stencil.build(e, f))
    assert n_env >= 1
    # Tr - lambda_max of 2I is 2
    assert rates[10, 10] == pytest.approx(2.0)


def test_threads_give_identical_fields(heis):
    e = EpsilonFrame(heis, 0.5)
    f = sample([(-1.5, 1.5)] * 3, (25, 25, 25), lambda x: x[..., 0] ** 2 + x[..., 1] ** 2 - 1 + 0.3 * x[..., 2])
    a = pe.evolve(e, f, 0.05, threads=1).final.values
    b = pe.evolve(e, f, 0.05, threads=4).final.values
    assert a.tobytes() == b.tobytes()


def test_plan_steps_divides_snapshots():
    dt, n, per = pe.plan_steps(0.3, 0.0007, 0.05)
    assert dt <= 0.0007 and per * dt == pytest.approx(0.05) and n == 6 * per
