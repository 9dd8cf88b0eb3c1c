"""Trainable tabular softmax policies and flattened preference batches.

All prompts share one flat logits vector; prompt ``k`` owns the slice
``offsets[k] : offsets[k] + sizes[k]``. Indices stored in a batch are
global positions in that vector.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from core.distributions import DiscretePolicy, ResponseSpace
from core.exceptions import LengthMismatchError, SpaceError, SpaceMismatchError
from core.sampling import PreferenceDataset


@dataclass(frozen=True, slots=True, eq=False)
class _Layout:
    prompt_ids: tuple[str, ...]
    sizes: np.ndarray
    offsets: np.ndarray

    @classmethod
    def of(cls, spaces: Sequence[ResponseSpace]) -> _Layout:
        if not spaces:
            raise SpaceError("At least one response space is required")
        prompt_ids = tuple(s.prompt_id for s in spaces)
        if len(set(prompt_ids)) != len(prompt_ids):
            raise SpaceError("Prompt ids must be unique across spaces")
        sizes = np.array([s.size for s in spaces], dtype=np.int64)
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        return cls(prompt_ids, sizes, offsets)

    @property
    def total(self) -> int:
        return int(self.sizes.sum())

    @property
    def segment(self) -> np.ndarray:
        """Prompt index of every flat position"""
        return np.repeat(np.arange(len(self.prompt_ids)), self.sizes)

    def index(self, prompt_id: str) -> int:
        try:
            return self.prompt_ids.index(prompt_id)
        except ValueError:
            raise SpaceError(f"Unknown prompt '{prompt_id}'") from None


def segment_log_softmax(logits: np.ndarray, offsets: np.ndarray, segment: np.ndarray) -> np.ndarray:
    """log softmax within each prompt's slice"""
    peak = np.maximum.reduceat(logits, offsets)
    shifted = logits - peak[segment]
    log_norm = np.log(np.add.reduceat(np.exp(shifted), offsets))
    return shifted - log_norm[segment]


class TabularPolicy:
    """One free logit per (prompt, response); probabilities are per-prompt softmax"""

    __slots__ = ("logits", "_layout", "_segment")

    def __init__(self, logits: np.ndarray, layout: _Layout) -> None:
        logits = np.array(logits, dtype=np.float64)
        if logits.shape != (layout.total,):
            raise LengthMismatchError(
                f"Expected {layout.total} logits, got {logits.shape}"
            )
        if not np.all(np.isfinite(logits)):
            raise SpaceError("Policy logits must be finite")
        self.logits = logits
        self._layout = layout
        self._segment = layout.segment

    @classmethod
    def from_spaces(cls, spaces: Sequence[ResponseSpace]) -> TabularPolicy:
        """Start at the reference: logits = log p"""
        layout = _Layout.of(spaces)
        return cls(np.concatenate([np.log(s.probs) for s in spaces]), layout)

    @classmethod
    def from_mapping(
        cls, logits: Mapping[str, Sequence[float]], spaces: Sequence[ResponseSpace]
    ) -> TabularPolicy:
        """Rebuild from ``{prompt_id: logits}`` in the order of ``spaces``"""
        layout = _Layout.of(spaces)
        missing = [pid for pid in layout.prompt_ids if pid not in logits]
        if missing:
            raise SpaceMismatchError(f"No logits for prompts: {', '.join(missing)}")
        parts = []
        for space in spaces:
            values = np.asarray(logits[space.prompt_id], dtype=np.float64)
            if values.shape != (space.size,):
                raise LengthMismatchError(
                    f"{space.prompt_id}: {values.size} logits for {space.size} responses"
                )
            parts.append(values)
        return cls(np.concatenate(parts), layout)

    @property
    def prompt_ids(self) -> tuple[str, ...]:
        return self._layout.prompt_ids

    @property
    def offsets(self) -> np.ndarray:
        return self._layout.offsets

    @property
    def sizes(self) -> np.ndarray:
        return self._layout.sizes

    @property
    def segment(self) -> np.ndarray:
        return self._segment

    @property
    def size(self) -> int:
        return self._layout.total

    def log_probs(self, logits: np.ndarray | None = None) -> np.ndarray:
        values = self.logits if logits is None else logits
        return segment_log_softmax(values, self._layout.offsets, self._segment)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def _slice(self, prompt_id: str) -> slice:
        k = self._layout.index(prompt_id)
        start = int(self._layout.offsets[k])
        return slice(start, start + int(self._layout.sizes[k]))

    def logits_for(self, prompt_id: str) -> np.ndarray:
        return self.logits[self._slice(prompt_id)].copy()

    def probs_for(self, prompt_id: str) -> np.ndarray:
        logits = self.logits[self._slice(prompt_id)]
        shifted = np.exp(logits - logits.max())
        return shifted / shifted.sum()

    def to_discrete(self, space: ResponseSpace, label: str = "trained") -> DiscretePolicy:
        probs = self.probs_for(space.prompt_id)
        if probs.size != space.size:
            raise SpaceMismatchError(
                f"{space.prompt_id}: policy has {probs.size} responses, space has {space.size}"
            )
        return DiscretePolicy(probs, space.prompt_id, label=label)

    def with_logits(self, logits: np.ndarray) -> TabularPolicy:
        return TabularPolicy(logits, self._layout)

    def copy(self) -> TabularPolicy:
        return self.with_logits(self.logits.copy())

    def to_dict(self) -> dict[str, list[float]]:
        return {pid: self.logits_for(pid).tolist() for pid in self.prompt_ids}


@dataclass(frozen=True, slots=True, eq=False)
class PreferenceBatch:
    """Records as flat arrays, with the frozen reference log-ratios computed once"""

    best: np.ndarray
    worst: np.ndarray
    prompt_index: np.ndarray
    weights: np.ndarray
    reference_log_ratio: np.ndarray
    num_prompts: int
    num_logits: int

    @classmethod
    def build(
        cls, dataset: PreferenceDataset, spaces: Sequence[ResponseSpace]
    ) -> PreferenceBatch:
        layout = _Layout.of(spaces)
        position = {pid: k for k, pid in enumerate(layout.prompt_ids)}
        count = len(dataset.records)
        prompt_index = np.empty(count, dtype=np.int64)
        best_local = np.empty(count, dtype=np.int64)
        worst_local = np.empty(count, dtype=np.int64)
        weights = np.empty(count, dtype=np.float64)

        for r, record in enumerate(dataset.records):
            k = position.get(record.prompt_id)
            if k is None:
                raise SpaceMismatchError(f"Record for unknown prompt '{record.prompt_id}'")
            prompt_index[r] = k
            best_local[r] = record.best_index
            worst_local[r] = record.worst_index
            weights[r] = record.weight

        if count:
            limit = layout.sizes[prompt_index]
            bad = (best_local < 0) | (best_local >= limit) | (worst_local < 0) | (worst_local >= limit)
            if np.any(bad):
                r = int(np.flatnonzero(bad)[0])
                raise SpaceMismatchError(
                    f"Record {r} indexes outside prompt '{layout.prompt_ids[prompt_index[r]]}'"
                )
            if np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise SpaceError("Record weights must be finite and non-negative")

        best = layout.offsets[prompt_index] + best_local
        worst = layout.offsets[prompt_index] + worst_local
        reference = np.concatenate([np.log(s.probs) for s in spaces])
        return cls(
            best=best,
            worst=worst,
            prompt_index=prompt_index,
            weights=weights,
            reference_log_ratio=reference[best] - reference[worst],
            num_prompts=len(layout.prompt_ids),
            num_logits=layout.total,
        )

    def __len__(self) -> int:
        return int(self.best.size)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def subset(self, rows: np.ndarray, unit_weights: bool = False) -> PreferenceBatch:
        """Rows of this batch; ``unit_weights`` for rows already drawn in proportion to weight"""
        return PreferenceBatch(
            best=self.best[rows],
            worst=self.worst[rows],
            prompt_index=self.prompt_index[rows],
            weights=np.ones(len(rows)) if unit_weights else self.weights[rows],
            reference_log_ratio=self.reference_log_ratio[rows],
            num_prompts=self.num_prompts,
            num_logits=self.num_logits,
        )

    def log_ratio_statistic(self, policy: TabularPolicy) -> np.ndarray:
        """h per record: the policy's best/worst log-ratio minus the reference's"""
        # the softmax normalizer cancels within a prompt
        return policy.logits[self.best] - policy.logits[self.worst] - self.reference_log_ratio
