import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fairsel.prob import JointDistribution, Variable

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def gate(fn):
    """Joint over (T, R1, R2) for T = fn(r1, r2) with uniform binary inputs."""
    p = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            p[fn(a, b), a, b] = 0.25
    return p


XOR = gate(lambda a, b: a ^ b)
AND = gate(lambda a, b: a & b)


def copy_triple():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 1, 1] = 0.5
    return p


def random_joint(rng, shape, names=None, roles=None, concentration=1.0):
    names = names or [f"V{i}" for i in range(len(shape))]
    roles = roles or ["feature"] * len(shape)
    probs = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
    return JointDistribution([Variable(n, k, r) for n, k, r in zip(names, shape, roles)], probs)


def scoring_joint(probs, n_features):
    """Wrap a tensor with axes (A, X1..Xn, Y) as a role-tagged joint."""
    probs = np.asarray(probs, dtype=float)
    vs = ([Variable("A", probs.shape[0], "protected")]
          + [Variable(f"X{i + 1}", probs.shape[i + 1]) for i in range(n_features)]
          + [Variable("Y", probs.shape[-1], "label")])
    return JointDistribution(vs, probs)


def bsc(flip):
    """Binary symmetric channel as a 2x2 row-stochastic matrix."""
    return np.array([[1 - flip, flip], [flip, 1 - flip]])


def noisy_chain(flip_ax=0.1, flip_xy=0.1, extra_independent=False):
    """A -> X1 -> Y through binary symmetric channels, A uniform."""
    p = 0.5 * bsc(flip_ax)[:, :, None] * bsc(flip_xy)[None, :, :]
    if extra_independent:
        p = p[:, :, None, :] * np.full((1, 1, 2, 1), 0.5)
        return scoring_joint(p, 2)
    return scoring_joint(p, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
