import itertools
import math
import os
import tempfile

# keep logs and the app config out of the user's folders; must run before core imports
_HOME = tempfile.mkdtemp(prefix="bonforge-tests-")
os.environ.setdefault("BONFORGE_HOME", _HOME)
os.environ.setdefault("PORTABLE_MODE", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from core.distributions import ResponseSpace, build_space  # noqa: E402
from core.enums.tilt_kind import SpaceDistribution  # noqa: E402
from core.space_generator import SpaceRecipe, generate_space  # noqa: E402


def make_space(
    size: int,
    seed: int = 0,
    alpha: float = 1.0,
    prompt_id: str = "prompt-0",
    distribution: SpaceDistribution = SpaceDistribution.DIRICHLET,
) -> ResponseSpace:
    recipe = SpaceRecipe(size=size, distribution=distribution, alpha=alpha)
    return generate_space(recipe, np.random.default_rng(seed), prompt_id=prompt_id)


def uniform_space(size: int, prompt_id: str = "prompt-0") -> ResponseSpace:
    return build_space(np.full(size, 1.0 / size), np.arange(size, dtype=float), prompt_id=prompt_id)


def enumerate_draws(space: ResponseSpace, n: int):
    """Every ordered n-tuple of responses with its probability"""
    for draw in itertools.product(range(space.size), repeat=n):
        yield draw, math.prod(float(space.probs[i]) for i in draw)


def brute_best_of_n(space: ResponseSpace, n: int) -> np.ndarray:
    pmf = np.zeros(space.size)
    for draw, prob in enumerate_draws(space, n):
        pmf[max(draw)] += prob
    return pmf


def brute_worst_of_n(space: ResponseSpace, n: int) -> np.ndarray:
    pmf = np.zeros(space.size)
    for draw, prob in enumerate_draws(space, n):
        pmf[min(draw)] += prob
    return pmf


def brute_joint(space: ResponseSpace, n: int) -> np.ndarray:
    joint = np.zeros((space.size, space.size))
    for draw, prob in enumerate_draws(space, n):
        joint[min(draw), max(draw)] += prob
    return joint


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_space():
    return build_space(
        [0.1, 0.2, 0.3, 0.4],
        [0.5, -1.0, 2.0, 1.5],
        attribute=[120.0, 80.0, 300.0, 200.0],
        prompt_id="small",
    )
