"""Seeded Monte Carlo over response spaces.

Draws are inverse-CDF lookups (binary search on the cumulative prefix) fed
by PCG64 streams keyed on ``(seed, stream_id, chunk)``. Estimators work in
fixed-size chunks and merge chunk moments in chunk order, so a result
depends on the seed and the number of trials only, never on thread count.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from core.distributions import (
    DiscretePolicy,
    ResponseSpace,
    bon_policy_exact,
    check_same_space,
    cumulative_prefix,
    worst_of_n_policy_exact,
)
from core.exceptions import InvalidTiltError, SpaceError
from core.logger import LOG
from core.tilts import log_power_increments

# bump when the order of random draws changes
GENERATOR_VERSION = 1
CHUNK_SIZE = 1 << 16
# joint (best, worst) enumeration allocates an L x L table
EXACT_JOINT_MAX_SIZE = 4096


@dataclass(frozen=True, slots=True)
class Rng:
    """A reproducible random stream: same (seed, stream_id) gives the same draws"""

    seed: int
    stream_id: int = 0

    def generator(self, *substream: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *substream))
        return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *key: int) -> int:
    """An independent 63-bit seed for a named sub-experiment"""
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True, slots=True)
class PreferenceRecord:
    """Best and worst of n reference draws for one prompt"""

    prompt_id: str
    best_index: int
    worst_index: int
    n: int
    weight: float = 1.0

    def to_dict(self) -> dict:
        row = {
            "prompt_id": self.prompt_id,
            "best": self.best_index,
            "worst": self.worst_index,
            "n": self.n,
        }
        if self.weight != 1.0:
            row["weight"] = self.weight
        return row


@dataclass(frozen=True, slots=True)
class PreferenceDataset:
    records: tuple[PreferenceRecord, ...]
    n: int
    spaces_ref: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        known = set(self.spaces_ref)
        for record in self.records:
            if record.n != self.n:
                raise SpaceError(f"Record with n={record.n} in a dataset with n={self.n}")
            if record.prompt_id not in known:
                raise SpaceError(f"Record prompt '{record.prompt_id}' has no space")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def duplicate_rate(self) -> float:
        """Share of records whose n draws were all the same response"""
        if not self.records:
            return 0.0
        same = sum(1 for r in self.records if r.best_index == r.worst_index)
        return same / len(self.records)


@dataclass(frozen=True, slots=True)
class McEstimate:
    value: float
    std_error: float
    trials: int

    def within(self, target: float, n_se: float) -> bool:
        return abs(self.value - target) <= n_se * self.std_error

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "trials": self.trials}


@dataclass(slots=True)
class _Moments:
    """Streaming count/mean/M2, merged with the parallel variance update"""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> _Moments:
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(int(values.size), mean, float(np.sum((values - mean) ** 2)))

    def merge(self, other: _Moments) -> None:
        if other.count == 0:
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta**2 * self.count * other.count / total
        self.count = total

    def estimate(self) -> McEstimate:
        if self.count == 0:
            raise ValueError("No trials to estimate from")
        if self.count == 1:
            return McEstimate(self.mean, 0.0, 1)
        std = math.sqrt(self.m2 / (self.count - 1))
        return McEstimate(self.mean, std / math.sqrt(self.count), self.count)


def _chunks(trials: int) -> list[int]:
    full, rest = divmod(trials, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def draw_indices(
    prefix: np.ndarray, size: int | tuple[int, ...], gen: np.random.Generator
) -> np.ndarray:
    """Inverse-CDF categorical draws: index i with p_{1:(i-1)} <= u < p_{1:i}"""
    u = gen.random(size)
    return np.minimum(np.searchsorted(prefix, u, side="right"), prefix.size - 1)


def _check_n(n: int, minimum: int = 1) -> int:
    if isinstance(n, bool) or int(n) != n or n < minimum:
        raise InvalidTiltError(f"n must be an integer >= {minimum}, got {n!r}")
    return int(n)


def sample_best_worst_batch(
    space: ResponseSpace, n: int, size: int, gen: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """``size`` independent (best, worst) index pairs, each from n reference draws"""
    draws = draw_indices(cumulative_prefix(space).prefix, (size, n), gen)
    # canonical order: the largest index carries the largest reward
    return draws.max(axis=1), draws.min(axis=1)


def sample_best_worst(space: ResponseSpace, n: int, rng: Rng) -> PreferenceRecord:
    n = _check_n(n)
    best, worst = sample_best_worst_batch(space, n, 1, rng.generator())
    return PreferenceRecord(space.prompt_id, int(best[0]), int(worst[0]), n)


def _prompt_records(
    space: ResponseSpace, n: int, count: int, rng: Rng, prompt_index: int
) -> list[PreferenceRecord]:
    records: list[PreferenceRecord] = []
    for chunk_id, chunk in enumerate(_chunks(count)):
        gen = rng.generator(prompt_index, chunk_id)
        best, worst = sample_best_worst_batch(space, n, chunk, gen)
        records.extend(
            PreferenceRecord(space.prompt_id, int(b), int(w), n)
            for b, w in zip(best.tolist(), worst.tolist(), strict=True)
        )
    return records


def gen_dataset(
    spaces: Sequence[ResponseSpace],
    n: int,
    records_per_prompt: int,
    rng: Rng,
    threads: int = 1,
) -> PreferenceDataset:
    """Best/worst-of-n records for every prompt, one random stream per prompt"""
    n = _check_n(n)
    if records_per_prompt < 0:
        raise ValueError("records_per_prompt must be >= 0")

    def _one(item: tuple[int, ResponseSpace]) -> list[PreferenceRecord]:
        k, space = item
        return _prompt_records(space, n, records_per_prompt, rng, k)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_prompt = list(pool.map(_one, enumerate(spaces)))

    records = tuple(r for chunk in per_prompt for r in chunk)
    dataset = PreferenceDataset(
        records=records,
        n=n,
        spaces_ref=tuple(s.prompt_id for s in spaces),
        seed=rng.seed,
    )
    LOG.debug(
        f"gen_dataset: {len(records)} records over {len(spaces)} prompts, "
        f"duplicate rate {dataset.duplicate_rate:.4f}"
    )
    return dataset


def joint_best_worst_pmf(space: ResponseSpace, n: int) -> np.ndarray:
    """P(worst = i, best = j) for n reference draws, as an L x L upper-triangular table.

    Inclusion-exclusion on G(i, j) = P(all draws in [i, j]) = (p_{1:j} - p_{1:(i-1)})^n.
    """
    n = _check_n(n)
    if space.size > EXACT_JOINT_MAX_SIZE:
        raise SpaceError(
            f"Joint enumeration is limited to {EXACT_JOINT_MAX_SIZE} responses, "
            f"got {space.size}"
        )
    padded = cumulative_prefix(space).padded
    size = space.size
    # window[i, j] = p_i + ... + p_j for i <= j
    window = padded[None, 1:] - padded[:-1, None]
    mass = np.where(np.triu(np.ones((size, size), dtype=bool)), np.clip(window, 0.0, 1.0), 0.0)
    g = np.zeros((size + 1, size + 1))
    g[:size, 1:] = mass**n
    # rows index i, columns index j + 1; g[i + 1, .] excludes i, g[., j] excludes j
    joint = g[:size, 1:] - g[1:, 1:] - g[:size, :size] + g[1:, :size]
    joint = np.triu(np.maximum(joint, 0.0))
    np.fill_diagonal(joint, space.probs**n)
    return joint


def exact_preference_dataset(spaces: Sequence[ResponseSpace], n: int) -> PreferenceDataset:
    """The infinite-data record distribution: each (best, worst) pair weighted by its probability"""
    n = _check_n(n)
    records = []
    for space in spaces:
        joint = joint_best_worst_pmf(space, n)
        worst_idx, best_idx = np.nonzero(joint > 0)
        for w, b in zip(worst_idx.tolist(), best_idx.tolist(), strict=True):
            records.append(PreferenceRecord(space.prompt_id, b, w, n, float(joint[w, b])))
    return PreferenceDataset(tuple(records), n, tuple(s.prompt_id for s in spaces))


def mc_win_rate(
    space: ResponseSpace,
    policy_a: DiscretePolicy,
    policy_b: DiscretePolicy,
    trials: int,
    rng: Rng,
    threads: int = 1,
) -> McEstimate:
    """Monte Carlo P(r(Y_a) >= r(Y_b)) with independent draws from each policy"""
    check_same_space(space, policy_a, policy_b)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    prefix_a = _policy_prefix(policy_a)
    prefix_b = _policy_prefix(policy_b)

    def _chunk(item: tuple[int, int]) -> _Moments:
        chunk_id, size = item
        gen = rng.generator(chunk_id)
        ya = draw_indices(prefix_a, size, gen)
        yb = draw_indices(prefix_b, size, gen)
        return _Moments.of((ya >= yb).astype(np.float64))

    return _merged(_chunk, trials, threads)


def _policy_prefix(policy: DiscretePolicy) -> np.ndarray:
    prefix = np.cumsum(policy.probs)
    prefix[-1] = 1.0
    return prefix


def _merged(chunk_fn, trials: int, threads: int) -> McEstimate:
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(chunk_fn, enumerate(_chunks(trials))))
    total = _Moments()
    for part in parts:
        total.merge(part)
    LOG.debug(f"merged {len(parts)} chunks, {total.count} trials")
    return total.estimate()


def _log_ratio(space: ResponseSpace, n: int) -> np.ndarray:
    """log(pi^(n)(y_i) / p_i), formed in log space so tiny masses stay finite"""
    prefix = cumulative_prefix(space).prefix
    return log_power_increments(prefix, space.probs, n) - np.log(space.probs)


def beta_identity_statistic(
    space: ResponseSpace, n: int, trials: int, rng: Rng, threads: int = 1
) -> McEstimate:
    """Monte Carlo mean of h = log(pi^(n)(best)/pi^(n)(worst)) - log(p(best)/p(worst)).

    Pairs come from the same n draws, as in the training data; by linearity the
    expectation equals the one with independent best and worst draws.
    """
    n = _check_n(n, minimum=2)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    log_ratio = _log_ratio(space, n)

    def _chunk(item: tuple[int, int]) -> _Moments:
        chunk_id, size = item
        best, worst = sample_best_worst_batch(space, n, size, rng.generator(chunk_id))
        return _Moments.of(log_ratio[best] - log_ratio[worst])

    return _merged(_chunk, trials, threads)


def beta_identity_exact(space: ResponseSpace, n: int) -> float:
    """E[h] by enumerating the joint law of the (best, worst) pair"""
    n = _check_n(n, minimum=2)
    log_ratio = _log_ratio(space, n)
    joint = joint_best_worst_pmf(space, n)
    h = log_ratio[None, :] - log_ratio[:, None]
    return float(np.sum(joint * h))


def beta_identity_expectation(space: ResponseSpace, n: int) -> float:
    """E[h] through linearity: sum pi^(n) log r - sum pi^(1) log r, O(L) for any L"""
    n = _check_n(n, minimum=2)
    log_ratio = _log_ratio(space, n)
    best = bon_policy_exact(space, n).probs
    worst = worst_of_n_policy_exact(space, n).probs
    return math.fsum(best * log_ratio) - math.fsum(worst * log_ratio)
