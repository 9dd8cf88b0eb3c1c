"""Error types raised by the engine.

Value-domain errors also derive from ``ValueError`` so callers that only
know the standard library still catch them.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from core.payloads.training import TrainTrace


class BonForgeError(Exception):
    """Root of every error raised by the package"""


class SpaceError(BonForgeError, ValueError):
    """A response space failed validation"""


class DuplicateRewardError(SpaceError):
    def __init__(self, reward: float) -> None:
        super().__init__(
            f"Reward {reward!r} is shared by more than one response; rewards must be "
            "pairwise distinct (perturb tied rewards slightly before building the space)"
        )
        self.reward = reward


class NonPositiveProbabilityError(SpaceError):
    """Some response has probability <= 0"""


class LengthMismatchError(SpaceError):
    """Probability, reward and attribute vectors disagree in length"""


class NotNormalizedError(SpaceError):
    def __init__(self, total: float, tolerance: float) -> None:
        super().__init__(
            f"Probabilities sum to {total!r}, off by more than {tolerance:g} from 1"
        )
        self.total = total


class InvalidTiltError(BonForgeError, ValueError):
    """Tilt parameters outside their domain (n < 1, c < 0, non-finite)"""


class SpaceMismatchError(BonForgeError, ValueError):
    """A policy was evaluated against a space it was not defined over"""


class NonFiniteTargetError(BonForgeError, ValueError):
    """Root finding was asked to hit a NaN or infinite target"""


class SolverError(BonForgeError, RuntimeError):
    """The KL inversion failed to bracket or converge"""


class EmptyDatasetError(BonForgeError, ValueError):
    """A loss was evaluated on a dataset with no (positively weighted) records"""


class InvalidConfigError(BonForgeError, ValueError):
    """A training or experiment configuration is inconsistent"""


class ArtifactError(BonForgeError):
    """An input artifact is missing or unreadable"""


class UnsupportedFormatError(ArtifactError):
    def __init__(self, path: Any, found: str, expected: str) -> None:
        super().__init__(
            f"{path}: format version {found} is not readable by this build "
            f"(expected major version of {expected})"
        )
        self.found = found


class DivergenceError(BonForgeError, RuntimeError):
    """Training produced a non-finite loss; carries everything computed so far"""

    def __init__(self, step: int, trace: TrainTrace, policy: Any) -> None:
        super().__init__(f"Loss became non-finite at step {step}")
        self.step = step
        self.trace = trace
        self.policy = policy
