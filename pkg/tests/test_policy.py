"""Tabular policies over several prompts and flattened preference batches."""

import numpy as np
import pytest

from conftest import make_space, uniform_space
from core.exceptions import LengthMismatchError, SpaceError, SpaceMismatchError
from core.sampling import PreferenceDataset, PreferenceRecord
from core.training.policy import PreferenceBatch, TabularPolicy, segment_log_softmax


@pytest.fixture
def spaces():
    return [make_space(size, seed=size, prompt_id=f"p{k}") for k, size in enumerate((3, 5, 2))]


class TestTabularPolicy:
    def test_starts_at_reference(self, spaces):
        policy = TabularPolicy.from_spaces(spaces)
        assert policy.size == 10
        np.testing.assert_array_equal(policy.offsets, [0, 3, 8])
        for space in spaces:
            np.testing.assert_allclose(policy.probs_for(space.prompt_id), space.probs, rtol=1e-12)
        np.testing.assert_allclose(np.add.reduceat(policy.probs(), policy.offsets), 1.0)

    def test_segment_log_softmax_matches_per_prompt(self, rng, spaces):
        policy = TabularPolicy.from_spaces(spaces)
        logits = rng.normal(scale=30.0, size=policy.size)
        flat = segment_log_softmax(logits, policy.offsets, policy.segment)
        for k, start in enumerate(policy.offsets):
            part = logits[start : start + policy.sizes[k]]
            expected = part - part.max() - np.log(np.exp(part - part.max()).sum())
            np.testing.assert_allclose(flat[start : start + policy.sizes[k]], expected, atol=1e-12)

    def test_mapping_round_trip(self, rng, spaces):
        policy = TabularPolicy.from_spaces(spaces)
        policy = policy.with_logits(policy.logits + rng.normal(size=policy.size))
        rebuilt = TabularPolicy.from_mapping(policy.to_dict(), spaces)
        np.testing.assert_array_equal(rebuilt.logits, policy.logits)

    def test_mapping_needs_every_prompt(self, spaces):
        logits = TabularPolicy.from_spaces(spaces).to_dict()
        del logits["p1"]
        with pytest.raises(SpaceMismatchError, match="p1"):
            TabularPolicy.from_mapping(logits, spaces)

    def test_mapping_checks_lengths(self, spaces):
        logits = TabularPolicy.from_spaces(spaces).to_dict()
        logits["p0"] = [0.0, 0.0]
        with pytest.raises(LengthMismatchError):
            TabularPolicy.from_mapping(logits, spaces)

    def test_rejects_duplicate_prompts(self):
        with pytest.raises(SpaceError):
            TabularPolicy.from_spaces([uniform_space(3), uniform_space(4)])

    def test_rejects_non_finite_logits(self, spaces):
        policy = TabularPolicy.from_spaces(spaces)
        with pytest.raises(SpaceError):
            policy.with_logits(np.full(policy.size, np.nan))

    def test_copy_is_independent(self, spaces):
        policy = TabularPolicy.from_spaces(spaces)
        clone = policy.copy()
        clone.logits[0] = 5.0
        assert policy.logits[0] != 5.0

    def test_to_discrete(self, spaces):
        policy = TabularPolicy.from_spaces(spaces)
        discrete = policy.to_discrete(spaces[1])
        assert discrete.space_ref == "p1"
        assert discrete.label == "trained"
        with pytest.raises(SpaceError):
            policy.to_discrete(uniform_space(4, prompt_id="missing"))


class TestPreferenceBatch:
    def test_global_positions(self, spaces):
        records = (PreferenceRecord("p1", 4, 0, 2), PreferenceRecord("p2", 1, 1, 2, 0.5))
        batch = PreferenceBatch.build(PreferenceDataset(records, 2, ("p0", "p1", "p2")), spaces)
        np.testing.assert_array_equal(batch.best, [7, 9])
        np.testing.assert_array_equal(batch.worst, [3, 9])
        np.testing.assert_array_equal(batch.prompt_index, [1, 2])
        assert batch.total_weight == 1.5
        assert batch.num_logits == 10
        assert len(batch.subset(np.array([1]))) == 1

    def test_statistic_is_zero_at_reference(self, spaces):
        records = tuple(PreferenceRecord("p1", b, w, 2) for b, w in ((4, 0), (3, 1), (2, 2)))
        batch = PreferenceBatch.build(PreferenceDataset(records, 2, ("p0", "p1", "p2")), spaces)
        np.testing.assert_allclose(batch.log_ratio_statistic(TabularPolicy.from_spaces(spaces)), 0.0, atol=1e-12)

    def test_rejects_out_of_range_index(self, spaces):
        records = (PreferenceRecord("p2", 2, 0, 2),)
        with pytest.raises(SpaceMismatchError, match="p2"):
            PreferenceBatch.build(PreferenceDataset(records, 2, ("p0", "p1", "p2")), spaces)

    def test_rejects_unknown_prompt(self, spaces):
        records = (PreferenceRecord("p9", 0, 0, 2),)
        with pytest.raises(SpaceMismatchError):
            PreferenceBatch.build(PreferenceDataset(records, 2, ("p9",)), spaces)

    def test_rejects_negative_weight(self, spaces):
        records = (PreferenceRecord("p0", 1, 0, 2, -1.0),)
        with pytest.raises(SpaceError):
            PreferenceBatch.build(PreferenceDataset(records, 2, ("p0", "p1", "p2")), spaces)
