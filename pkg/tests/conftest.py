import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from carnotflow import frames
from carnotflow.levelset_ops import ScalarField, polynomial_field
from carnotflow.polynomial import Polynomial

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def poly(nvars, terms):
    """Polynomial from a ``{exponents: coefficient}`` mapping."""
    return Polynomial.from_dict(nvars, terms)


def field_from_poly(nvars, terms) -> ScalarField:
    return polynomial_field(poly(nvars, terms), nvars)


@pytest.fixture(scope="session")
def heis():
    return frames.heisenberg1()


@pytest.fixture(scope="session")
def eucl2():
    return frames.euclidean(2)


@pytest.fixture(scope="session")
def shear_frame():
    # X1 = (1, 0), X2 = (x1, 1): not Carnot-type, accepted with a warning
    table = [
        [[((0, 0), 1.0)], []],
        [[((1, 0), 1.0)], [((0, 0), 1.0)]],
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return frames.custom(2, table)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
