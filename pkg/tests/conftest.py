import math

import numpy as np
import pytest

import proxidose as px


@pytest.fixture(scope="session")
def synthetic_spec():
    return px.builtin_scenario("synthetic-main")


@pytest.fixture(scope="session")
def synthetic_truth_graph(synthetic_spec):
    return px.truth_graph(synthetic_spec)


@pytest.fixture(scope="session")
def linear_gaussian_spec():
    """U ~ N(0,1); A = U/2 + e; W = U + e; Z = U + e; Y = 2A + U + e.

    The truth is E[Y | do(a)] = 2a, the outcome bridge is h(a, w) = 2a + w,
    and the treatment bridge is q(a, z) = sqrt(1.6 pi) exp((z - 2a)^2 / 10)
    (Gaussian conditional algebra; checked in the tests against the inverse
    conditional density).
    """
    return px.ScmSpec(
        (
            px.Node("U", "u", px.Noise("normal", 0.0, 1.0)),
            px.Node("A", "a", px.Noise("normal", 0.0, 1.0),
                    (px.Term(0.5, "linear", (px.Arg("U"),)),)),
            px.Node("W", "a", px.Noise("normal", 0.0, 1.0),
                    (px.Term(1.0, "linear", (px.Arg("U"),)),)),
            px.Node("Z", "a", px.Noise("normal", 0.0, 1.0),
                    (px.Term(1.0, "linear", (px.Arg("U"),)),)),
            px.Node("Y", "y", px.Noise("normal", 0.0, 1.0),
                    (px.Term(2.0, "linear", (px.Arg("A"),)),
                     px.Term(1.0, "linear", (px.Arg("U"),)))),
        )
    )


def oracle_h(a, w):
    return 2.0 * np.atleast_1d(a)[0] + np.asarray(w, dtype=float)


def oracle_q(a, z):
    a0 = np.atleast_1d(a)[0]
    return math.sqrt(1.6 * math.pi) * np.exp(
        (np.asarray(z, dtype=float) - 2.0 * a0) ** 2 / 10.0
    )


@pytest.fixture(scope="session")
def linear_gaussian_oracles():
    return oracle_h, oracle_q
