import numpy as np
import pytest
from scipy.special import expit

from tclkit.core import DomainPair, LinkKind, ObservationSet
from tclkit.sim import SimConfig, generate


def logistic_set(n, beta, seed, intercept=True):
    """Sigmoid-generated treatment with standard-normal covariates (first column ones if intercept)."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.normal(size=(n, beta.size))
    if intercept:
        X[:, 0] = 1.0
    a = (rng.random(n) < expit(X @ beta)).astype(float)
    y = 2.0 * a + X.sum(axis=1) + rng.normal(size=n)
    return ObservationSet(X, a, y)


@pytest.fixture
def logistic_pair():
    source = logistic_set(600, [0.2, -0.5, 0.8], seed=1)
    target = logistic_set(300, [0.2, -0.1, 0.8], seed=2)
    return DomainPair(source, target)


@pytest.fixture(scope="session")
def small_sim():
    cfg = SimConfig(dimension=5, sparsity=1, n_target=100, n_source=500, index_offset=0.3, center_index=False,
                    coefficient_scale=0.3, seed=3)
    return generate(cfg)


@pytest.fixture
def sigmoid():
    return LinkKind.SIGMOID
