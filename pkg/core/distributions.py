"""Response spaces and the analytically defined policies over them.

Rewards only ever enter through their order: a space is stored sorted by
reward so that response ``i`` has reward quantile ``p_{1:i}`` and every
tilted policy is a function of the cumulative prefix alone.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from core.exceptions import (
    DuplicateRewardError,
    InvalidTiltError,
    LengthMismatchError,
    NonPositiveProbabilityError,
    NotNormalizedError,
    SpaceError,
    SpaceMismatchError,
)
from core.tilts import PowerTilt, TiltFunction

# off-by tolerance silently renormalized at construction
RENORMALIZE_TOLERANCE = 1e-9
SPACE_SUM_TOLERANCE = 1e-12
POLICY_SUM_TOLERANCE = 1e-10


def _frozen(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


@dataclass(frozen=True, slots=True, eq=False)
class ResponseSpace:
    """A prompt's finite response universe in canonical (reward-ascending) order"""

    probs: np.ndarray
    rewards: np.ndarray
    attribute: np.ndarray | None = None
    prompt_id: str = "prompt-0"

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def has_attribute(self) -> bool:
        return self.attribute is not None

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return {
            "prompt_id": self.prompt_id,
            "probs": self.probs.tolist(),
            "rewards": self.rewards.tolist(),
            "attribute": self.attribute.tolist() if self.attribute is not None else None,
        }


@dataclass(frozen=True, slots=True, eq=False)
class CumulativePrefix:
    """p_{1:i} for i = 1..L, with the implicit p_{1:0} = 0"""

    prefix: np.ndarray

    @property
    def padded(self) -> np.ndarray:
        """[0, p_{1:1}, ..., p_{1:L}]"""
        return np.concatenate(([0.0], self.prefix))

    @property
    def lower(self) -> np.ndarray:
        """p_{1:(i-1)} for i = 1..L"""
        return self.padded[:-1]


@dataclass(frozen=True, slots=True, eq=False)
class DiscretePolicy:
    """A normalized probability vector over one response space"""

    probs: np.ndarray
    space_ref: str
    label: str = ""

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise SpaceError("Policy probabilities must be a vector")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise SpaceError(f"Policy '{self.label}' has negative or non-finite entries")
        total = math.fsum(probs)
        if abs(total - 1.0) > POLICY_SUM_TOLERANCE:
            raise NotNormalizedError(total, POLICY_SUM_TOLERANCE)
        object.__setattr__(self, "probs", _frozen(probs.copy()))

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return {"space_ref": self.space_ref, "label": self.label, "probs": self.probs.tolist()}


def build_space(
    probs: Sequence[float] | np.ndarray,
    rewards: Sequence[float] | np.ndarray,
    attribute: Sequence[float] | np.ndarray | None = None,
    prompt_id: str = "prompt-0",
) -> ResponseSpace:
    """Validate a response universe and put it in canonical reward order.

    Probabilities within 1e-9 of summing to one are renormalized; anything
    further off is rejected, as are ties in reward.
    """
    p = np.asarray(probs, dtype=np.float64).ravel()
    r = np.asarray(rewards, dtype=np.float64).ravel()
    a = None if attribute is None else np.asarray(attribute, dtype=np.float64).ravel()

    if p.shape != r.shape or (a is not None and a.shape != p.shape):
        raise LengthMismatchError(
            f"{prompt_id}: probs ({p.size}), rewards ({r.size})"
            + (f" and attribute ({a.size})" if a is not None else "")
            + " must have equal lengths"
        )
    if p.size < 2:
        raise LengthMismatchError(f"{prompt_id}: a space needs at least two responses")
    if not np.all(np.isfinite(r)) or (a is not None and not np.all(np.isfinite(a))):
        raise SpaceError(f"{prompt_id}: rewards and attribute must be finite")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise NonPositiveProbabilityError(
            f"{prompt_id}: every response needs a strictly positive probability"
        )

    total = math.fsum(p)
    if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
        raise NotNormalizedError(total, RENORMALIZE_TOLERANCE)
    p = p / total

    order = np.argsort(r, kind="stable")
    r = r[order]
    ties = np.flatnonzero(np.diff(r) == 0)
    if ties.size:
        raise DuplicateRewardError(float(r[ties[0]]))

    return ResponseSpace(
        probs=_frozen(p[order]),
        rewards=_frozen(r),
        attribute=_frozen(a[order]) if a is not None else None,
        prompt_id=str(prompt_id),
    )


def cumulative_prefix(space: ResponseSpace) -> CumulativePrefix:
    """Running sums of the canonical probabilities, pinned to end at exactly 1"""
    prefix = np.cumsum(space.probs)
    np.clip(prefix, 0.0, 1.0, out=prefix)
    prefix[-1] = 1.0
    return CumulativePrefix(prefix=_frozen(prefix))


def staircase_cdf(prefix: CumulativePrefix, u: np.ndarray | float) -> np.ndarray:
    """CDF of the reward quantile of a reference draw: sum_i p_i 1{u >= p_{1:i}}"""
    u = np.asarray(u, dtype=np.float64)
    steps = np.searchsorted(prefix.prefix, u, side="right")
    return prefix.padded[steps]


def reference_policy(space: ResponseSpace) -> DiscretePolicy:
    return DiscretePolicy(space.probs, space.prompt_id, label="reference")


def point_mass_policy(space: ResponseSpace, index: int = -1) -> DiscretePolicy:
    """All mass on one response, by default the highest-reward one"""
    probs = np.zeros(space.size)
    probs[index] = 1.0
    return DiscretePolicy(probs, space.prompt_id, label=f"point_mass[{index}]")


def tilted_policy(space: ResponseSpace, tilt: TiltFunction) -> DiscretePolicy:
    """pi(y_i) = (F(p_{1:i}) - F(p_{1:(i-1)})) / (F(1) - F(0))"""
    prefix = cumulative_prefix(space)
    weights = tilt.normalized_increments(prefix.prefix, space.probs)
    return DiscretePolicy(weights, space.prompt_id, label=tilt.label)


def _check_n(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidTiltError(f"Number of draws must be an integer >= 1, got {n!r}")
    return int(n)


def bon_policy_exact(space: ResponseSpace, n: int) -> DiscretePolicy:
    """Exact best-of-n PMF (p_{1:i})^n - (p_{1:(i-1)})^n"""
    policy = tilted_policy(space, PowerTilt(_check_n(n)))
    return DiscretePolicy(policy.probs, space.prompt_id, label=f"best_of_{n}")


def worst_of_n_policy_exact(space: ResponseSpace, n: int) -> DiscretePolicy:
    """Exact worst-of-n PMF (1 - p_{1:(i-1)})^n - (1 - p_{1:i})^n.

    Computed as best-of-n over the reversed reward order, so the tail sums
    1 - p_{1:(i-1)} are accumulated directly instead of by subtraction.
    """
    n = _check_n(n)
    reversed_probs = space.probs[::-1]
    tails = np.cumsum(reversed_probs)
    np.clip(tails, 0.0, 1.0, out=tails)
    tails[-1] = 1.0
    weights = PowerTilt(n).normalized_increments(tails, reversed_probs)[::-1]
    return DiscretePolicy(weights, space.prompt_id, label=f"worst_of_{n}")


def check_same_space(space: ResponseSpace, *policies: DiscretePolicy) -> None:
    """Raise SpaceMismatchError unless every policy is defined over ``space``"""
    for policy in policies:
        if policy.space_ref != space.prompt_id or policy.size != space.size:
            raise SpaceMismatchError(
                f"Policy '{policy.label}' is over '{policy.space_ref}' "
                f"({policy.size} responses), not '{space.prompt_id}' ({space.size})"
            )


def total_variation(a: DiscretePolicy, b: DiscretePolicy) -> float:
    """Half the L1 distance between two policies over the same space"""
    if a.space_ref != b.space_ref or a.size != b.size:
        raise SpaceMismatchError(
            f"Cannot compare policies over '{a.space_ref}' and '{b.space_ref}'"
        )
    return 0.5 * math.fsum(np.abs(a.probs - b.probs))


def continuous_density_gap(space: ResponseSpace, n: int) -> float:
    """max_i |pi^(n)(y_i)/p_i - n (p_{1:i})^(n-1)|, the distance to the continuous density"""
    bon = bon_policy_exact(space, n)
    prefix = cumulative_prefix(space)
    density = PowerTilt(_check_n(n)).f(prefix.prefix)
    return float(np.max(np.abs(bon.probs / space.probs - density)))
