import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carnotflow.linalg import extreme_eigenvalues, jacobi_eigh, lambda_max, lambda_min
from carnotflow.polynomial import Polynomial

coef = st.floats(-3, 3, allow_nan=False)
point = arrays(float, 3, elements=st.floats(-2, 2))
monomials = st.dictionaries(st.tuples(*[st.integers(0, 3)] * 3), coef, max_size=5)


def _eval_direct(terms, x):
    return sum(c * np.prod([x[k] ** e for k, e in enumerate(exps)]) for exps, c in terms.items())


@given(monomials, point)
def test_polynomial_evaluation_matches_direct_sum(terms, x):
    p = Polynomial.from_dict(3, terms)
    assert p(x) == pytest.approx(_eval_direct(terms, x), abs=1e-9)


@given(monomials, monomials, point)
def test_polynomial_ring_operations(a, b, x):
    pa, pb = Polynomial.from_dict(3, a), Polynomial.from_dict(3, b)
    va, vb = _eval_direct(a, x), _eval_direct(b, x)
    assert (pa + pb)(x) == pytest.approx(va + vb, abs=1e-8)
    assert (pa - pb)(x) == pytest.approx(va - vb, abs=1e-8)
    assert (pa * pb)(x) == pytest.approx(va * vb, rel=1e-9, abs=1e-6)


@given(monomials, point, st.integers(0, 2))
def test_derivative_matches_central_difference(terms, x, k):
    p = Polynomial.from_dict(3, terms)
    h = 1e-6
    e = np.eye(3)[k]
    fd = (p(x + h * e) - p(x - h * e)) / (2 * h)
    assert p.derivative(k)(x) == pytest.approx(fd, rel=1e-5, abs=1e-4)


def test_negative_exponent_rejected():
    with pytest.raises(ValueError):
        Polynomial.from_dict(2, {(-1, 0): 1.0})


sym = arrays(float, (4, 4), elements=st.floats(-5, 5)).map(lambda a: np.triu(a) + np.triu(a, 1).T)


@given(sym)
def test_jacobi_matches_lapack(a):
    w, v = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-9)
    # eigenvectors: a v = v diag(w), v orthogonal
    np.testing.assert_allclose(a @ v, v * w, atol=1e-8)
    np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-10)


@given(sym)
def test_extreme_eigenvalues_bracket_spectrum(a):
    lo, hi = extreme_eigenvalues(a)
    w = np.linalg.eigvalsh(a)
    assert lo == pytest.approx(w[0], abs=1e-9)
    assert hi == pytest.approx(w[-1], abs=1e-9)
    assert lambda_min(a) <= lambda_max(a)


def test_jacobi_diagonal_input_is_exact():
    w, _ = jacobi_eigh(np.diag([3.0, -1.0, 2.0]))
    assert list(w) == [-1.0, 2.0, 3.0]
