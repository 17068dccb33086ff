import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carnotflow import frames, value_engine as ve
from carnotflow.costs import TerminalCost, constant, cylinder, sphere
from carnotflow.frames import EpsilonFrame
from carnotflow.linalg import jacobi_eigh
from carnotflow.sde_engine import constant_policy

INF = math.inf
sym = lambda n: arrays(float, (n, n), elements=st.floats(-2, 2)).map(lambda a: np.triu(a) + np.triu(a, 1).T)


def _abs_capped():
    return TerminalCost(lambda x: np.minimum(np.abs(x[..., 0]), 1.0), 1.0, 1.0, 0.0, name="abs-capped")


def test_constant_cost_values():
    e = EpsilonFrame(frames.heisenberg1(), 0.5)
    fam = ve.constant_family(3, 8)
    r = ve.estimate_values(e, constant(0.7), 0.0, np.zeros(3), [2, 8, INF], fam, None, 500, 1, 0.1, 0.05)
    for p in (2.0, 8.0, INF):
        assert r.estimates[p].estimate == pytest.approx(0.7, abs=1e-12)


def test_terminal_time_returns_cost(heis):
    e = EpsilonFrame(heis, 0.5)
    x = np.array([0.5, 0.0, 0.0])
    r = ve.estimate_values(e, cylinder(), 0.3, x, [2, INF], ve.constant_family(3, 4), None, 10, 1, 0.3, 0.01)
    assert r.estimates[2.0].estimate == pytest.approx(-0.75) and r.evaluated == 0


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_gauss_hermite_oracle(p):
    # a = e2 freezes x2; x1 = x0 + sqrt(2) B_T, so E[min(|x1|,1)^p] is a 1-D Gaussian integral
    e = EpsilonFrame(frames.euclidean(2), 1.0)
    fam = ve.PolicyFamily("one", [constant_policy([0.0, 1.0])])
    x0, T, K = 0.3, 0.2, 40000
    r = ve.estimate_values(e, _abs_capped(), 0.0, [x0, 0.0], [p], fam, None, K, 7, T, 0.05).estimates[p]
    z, w = np.polynomial.hermite_e.hermegauss(80)
    vals = np.minimum(np.abs(x0 + math.sqrt(2 * T) * z), 1.0) ** p
    exact = (w @ vals / math.sqrt(2 * math.pi)) ** (1 / p)
    assert abs(r.estimate - exact) <= 4 * r.stderr


def test_pruning_returns_brute_force_minimum(heis):
    e = EpsilonFrame(heis, 0.5)
    cost = cylinder(cap=2.0)
    fam = ve.constant_family(3, 12)
    x, K, T, dt = np.array([0.8, 0.1, 0.0]), 1500, 0.1, 0.02
    r = ve.estimate_values(e, cost, 0.0, x, [2, INF], fam, None, K, 3, T, dt)
    vp, vinf = [], []
    for pol in fam.policies:
        g = ve.terminal_samples(e, cost, 0.0, x, pol, K, 3, T, dt)
        vinf.append(g.max())
        vp.append(min(3.0 * np.mean(((g + 2.0) / 3.0) ** 2) ** 0.5 - 2.0, g.max()))
    assert r.estimates[INF].estimate == min(vinf)
    assert r.estimates[2.0].estimate == pytest.approx(min(vp), abs=1e-12)
    assert r.pruned > 0


def test_monotone_in_p_and_comparison(heis):
    e = EpsilonFrame(heis, 0.5)
    g1 = cylinder(cap=2.0)
    g2 = TerminalCost(lambda x: g1(x) + 0.25, 2.25, 2.0, -0.75, name="raised", params={"upper": 2.25})
    fam = ve.constant_family(3, 8)
    ps = [2, 4, 8, 16, INF]
    args = (0.0, [0.6, -0.2, 0.1], ps, fam, None, 2000, 5, 0.1, 0.02)
    a = ve.estimate_values(e, g1, *args, shift=1.0, scale=3.25).estimates
    b = ve.estimate_values(e, g2, *args, shift=1.0, scale=3.25).estimates
    v = [a[float(p)].estimate for p in ps]
    assert all(x <= y for x, y in zip(v, v[1:]))
    assert all(a[float(p)].estimate <= b[float(p)].estimate for p in ps)


def test_sup_commutes_with_monotone_map(heis):
    e = EpsilonFrame(heis, 0.5)
    g = sphere(cap=2.0)
    eg = TerminalCost(lambda x: np.exp(g(x)), math.exp(2.0), 0.0, 0.0, name="exp")
    fam = ve.constant_family(3, 8)
    args = (0.0, [0.3, 0.3, 0.0], [INF], fam, None, 1000, 2, 0.1, 0.02)
    a = ve.estimate_values(e, g, *args).estimates[INF].estimate
    b = ve.estimate_values(e, eg, *args).estimates[INF].estimate
    assert b == math.exp(a)


def test_budget_prefixes_are_nonincreasing(heis):
    e = EpsilonFrame(heis, 0.5)
    r = ve.estimate_values(e, cylinder(cap=2.0), 0.0, [0.9, 0, 0], [INF], ve.constant_family(3, 16), None, 500, 1,
                           0.1, 0.02, budgets=[2, 4, 8, 16])
    vals = [r.by_budget[b][INF].estimate for b in (2, 4, 8, 16)]
    assert all(y <= x for x, y in zip(vals, vals[1:]))


def test_invalid_arguments(heis):
    e = EpsilonFrame(heis, 0.5)
    fam = ve.constant_family(3, 4)
    with pytest.raises(ValueError):
        ve.estimate_values(e, sphere(), 0.0, np.zeros(3), [1.0], fam, None, 10, 1, 0.1, 0.01)
    with pytest.raises(ValueError):
        ve.estimate_values(e, sphere(), 0.0, np.zeros(3), [2.0], fam, 0, 10, 1, 0.1, 0.01)
    with pytest.raises(ValueError):
        ve.estimate_values(e, sphere(), 0.0, np.zeros(3), [2.0], ve.constant_family(2, 4), None, 10, 1, 0.1, 0.01)


def test_direction_grid_nested_and_unit():
    for d, n in ((2, 64), (3, 720), (4, 100)):
        g = ve.direction_grid(d, n)
        assert g.shape == (n, d)
        assert np.allclose(np.linalg.norm(g, axis=1), 1.0)
    # the first 90 rows of a 720-grid spread over the hemisphere: no cap of 30 degrees is empty
    head = ve.direction_grid(3, 720)[:90]
    probe = ve.direction_grid(3, 200)
    assert np.min(np.max(np.abs(probe @ head.T), axis=1)) > math.cos(math.radians(30))


def test_hamiltonian_examples(heis):
    e = frames.euclidean(3)
    h = ve.hamiltonian_H(e, np.zeros(3), np.zeros(3), np.diag([3.0, 1.0, 0.0]))
    assert h.value == pytest.approx(-1.0, abs=1e-5)
    assert abs(abs(h.direction[0]) - 1.0) < 1e-3
    assert ve.hamiltonian_H_eps(EpsilonFrame(heis, 0.5), np.ones(3), np.ones(3), np.zeros((3, 3))).value == 0.0


def test_hp_examples():
    # q = 0: sup over a of Tr((I - a a^T) M) = Tr M - lambda_min(M)
    M = np.diag([1.0, 2.0, 4.0])
    assert ve.hamiltonian_Hp(1.0, np.zeros(3), M, 2.0).value == pytest.approx(6.0, abs=1e-5)
    # M = 0: a = q/|q| annihilates the q term
    assert ve.hamiltonian_Hp(2.0, [1.0, 0, 0], np.zeros((3, 3)), 3.0).value == pytest.approx(0.0, abs=1e-5)
    with pytest.raises(ValueError):
        ve.hamiltonian_Hp(0.0, np.zeros(3), M, 2.0)
    with pytest.raises(ValueError):
        ve.hamiltonian_Hp(1.0, np.zeros(3), M, 1.0)


@given(arrays(float, 3, elements=st.floats(-2, 2)), sym(3), st.floats(0.5, 4))
def test_hp_eps_at_one_equals_hp(q, M, z):
    assert ve.hamiltonian_Hp_eps(z, q, M, 3.0, 2, 1.0).value == pytest.approx(ve.hamiltonian_Hp(z, q, M, 3.0).value,
                                                                           abs=1e-12)


@given(arrays(float, 3, elements=st.floats(-2, 2)), arrays(float, 3, elements=st.floats(-2, 2)), sym(3),
       st.floats(0.2, 1))
def test_hamiltonian_brute_force_vs_eigen(x, p, S, eps):
    e = EpsilonFrame(frames.heisenberg1(), eps)
    X = e.matrix(x)
    C = X @ S @ X.T - e.connection_matrix(x, p)
    C = 0.5 * (C + C.T)
    w = np.linalg.eigvalsh(C)
    assert ve.hamiltonian_H_eps(e, x, p, S).value == pytest.approx(-w.sum() + w[-1], abs=1e-3)


def test_resolution_convergence():
    rng = np.random.default_rng(0)
    S = rng.uniform(-2, 2, (3, 3))
    S = S + S.T
    e = frames.euclidean(3)
    w = np.linalg.eigvalsh(S)
    exact = -w.sum() + w[-1]
    errs = [exact - ve.hamiltonian_H(e, np.zeros(3), np.zeros(3), S, n, refine=0).value for n in (45, 180, 720)]
    assert all(x >= -1e-12 for x in errs)
    assert errs[2] < errs[0]


def test_lambda_max_examples():
    fd, ip = ve.lambda_max_derivative_check(np.diag([2.0, 1.0]), np.array([[1.0, 0.5], [0.5, -1.0]]))
    assert fd == pytest.approx(1.0, abs=1e-8) and ip == pytest.approx(1.0)
    with pytest.raises(ve.EigenGapError):
        ve.lambda_max_derivative_check(np.eye(3), np.eye(3))


@given(sym(4), sym(4))
def test_lambda_max_derivative_property(S, H):
    w = jacobi_eigh(S)[0]
    if w[-1] - w[-2] < 1e-2:
        return
    fd, ip = ve.lambda_max_derivative_check(S, H)
    assert fd == pytest.approx(ip, abs=1e-5 * max(1.0, abs(ip)))
