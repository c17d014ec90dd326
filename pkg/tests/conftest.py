import hypothesis
import numpy as np
import pytest

from pnverify.intervals import Box
from pnverify.modelio import generate_random_network
from pnverify.networks import CcpNetwork, Objective

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=50, derandomize=True
)
hypothesis.settings.load_profile("default")


def make_quad_objective() -> Objective:
    """The one-variable reference problem g(z) = -z^2 - z.

    Skip-product net with d = k = 1, two levels, unit weights:
    x2 = (z + 1) z, outputs (0, x2), margin row (1, -1) gives
    g = -z^2 - z with gradient -2z - 1 and constant Hessian [[-2]].
    """
    net = CcpNetwork(
        W=(np.array([[1.0]]), np.array([[1.0]])),
        C=np.array([[0.0], [1.0]]),
        beta=np.zeros(2),
    )
    return Objective(net, 0, 1)


@pytest.fixture
def quad_objective() -> Objective:
    return make_quad_objective()


@pytest.fixture
def unit_box() -> Box:
    return Box(np.array([0.0]), np.array([1.0]))


def random_objective(kind: str, degree: int, d: int, k: int, seed: int,
                     scale: float = 0.5) -> Objective:
    net = generate_random_network(kind, (degree, d, k, 2), seed, scale)
    return Objective(net, 0, 1)


def random_box(d: int, seed: int, radius: float = 0.25) -> Box:
    rng = np.random.default_rng(seed)
    return Box.linf_ball(rng.uniform(0.2, 0.8, size=d), radius)
