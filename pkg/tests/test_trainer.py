"""End-to-end tabular training: convergence, determinism and failure paths."""

import math

import numpy as np
import pytest
from scipy import optimize
from scipy.special import expit

from conftest import make_space
from core.analytics import eval_policy
from core.distributions import bon_policy_exact, build_space, reference_policy, total_variation
from core.enums.loss_kind import LossKind, OptimizerKind
from core.exceptions import DivergenceError, EmptyDatasetError, InvalidConfigError
from core.payloads.training import TrainConfig, TrainTrace, TraceRow
from core.sampling import PreferenceDataset, PreferenceRecord, Rng, exact_preference_dataset, gen_dataset
from core.training.trainer import TrainCallback, train

# fixed probabilities keep the smallest best-of-3 mass well away from zero
CERTIFY_PROBS = {
    2: [0.4, 0.6],
    3: [0.3, 0.3, 0.4],
    4: [0.2, 0.3, 0.25, 0.25],
    5: [0.2, 0.2, 0.2, 0.2, 0.2],
}


def certify_spaces():
    return [
        build_space(probs, np.arange(size, dtype=float), prompt_id=f"L{size}")
        for size, probs in CERTIFY_PROBS.items()
    ]


def cheat_problem():
    """Two records that chain response 0 < 1 < 2 on a three-response prompt"""
    space = build_space([0.5, 0.3, 0.2], [0.0, 1.0, 2.0], attribute=[100.0, 150.0, 400.0], prompt_id="q")
    records = (PreferenceRecord("q", 1, 0, 8), PreferenceRecord("q", 2, 1, 8))
    return [space], PreferenceDataset(records, 8, ("q",))


class RecordingCallback(TrainCallback):
    def __init__(self):
        self.rows: list[TraceRow] = []
        self.completed = False
        self.errors: list[Exception] = []

    def on_eval(self, row):
        self.rows.append(row)

    def on_complete(self, policy, trace):
        self.completed = True

    def on_error(self, error):
        self.errors.append(error)


class TestTrainConfig:
    def test_bonbon_default_alpha(self):
        assert TrainConfig().alpha == 0.005

    def test_loose_names(self):
        config = TrainConfig(loss="SFT-BoN", optimizer="SGD")
        assert config.loss is LossKind.SFT_BON
        assert config.optimizer is OptimizerKind.SGD

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"loss": LossKind.SFT_BON, "alpha": 0.5},
            {"loss": LossKind.DPO},
            {"loss": LossKind.IPO, "beta": -1.0},
            {"loss": LossKind.IPO_BON, "beta": 0.1},
            {"loss": LossKind.DPO, "beta": 0.1, "beta_scale": 2.0},
            {"loss": LossKind.BONBON, "alpha": 1.5},
            {"loss": LossKind.IPO_BON, "n": 1},
            {"learning_rate": 0.0},
            {"steps": -1},
            {"batch_size": 0},
            {"loss": "hinge"},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidConfigError):
            TrainConfig(**kwargs)

    def test_dict_round_trip(self):
        config = TrainConfig(loss=LossKind.DPO, beta=0.2, steps=10, batch_size=4)
        data = config.to_dict()
        assert data["loss"] == "dpo"
        assert TrainConfig.from_dict(data) == config

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(InvalidConfigError, match="momentum"):
            TrainConfig.from_dict({"momentum": 0.9})


class TestTrainTrace:
    def test_steps_must_increase(self):
        trace = TrainTrace()
        trace.append(TraceRow(0, 1.0, 0.5, 0.0, None, 0.0))
        with pytest.raises(ValueError):
            trace.append(TraceRow(0, 1.0, 0.5, 0.0, None, 0.0))
        assert trace.column("step") == [0]


class TestTrain:
    def test_zero_steps(self):
        spaces, dataset = cheat_problem()
        policy, trace = train(TrainConfig(steps=0), spaces, dataset)
        np.testing.assert_allclose(policy.logits, np.log(spaces[0].probs))
        assert len(trace) == 1
        assert trace.final.step == 0
        assert trace.final.kl_vs_reference == pytest.approx(0.0, abs=1e-15)

    def test_trace_schedule_and_callback(self):
        spaces, dataset = cheat_problem()
        callback = RecordingCallback()
        config = TrainConfig(loss=LossKind.SFT_BON, steps=25, eval_every=10, optimizer=OptimizerKind.SGD)
        _, trace = train(config, spaces, dataset, callback)
        assert trace.column("step") == [0, 10, 20, 25]
        assert callback.rows == trace.rows
        assert callback.completed
        assert trace.final.ipo_term is None
        assert trace.final.sft_term == trace.final.loss_value

    def test_deterministic_with_minibatches(self):
        spaces = [make_space(20, seed=k, prompt_id=f"p{k}") for k in range(3)]
        dataset = gen_dataset(spaces, 8, 300, Rng(1, 1))
        config = TrainConfig(steps=150, batch_size=32, eval_every=50, seed=4)
        first_policy, first_trace = train(config, spaces, dataset)
        second_policy, second_trace = train(config, spaces, dataset)
        np.testing.assert_array_equal(first_policy.logits, second_policy.logits)
        assert first_trace.rows == second_trace.rows

        other, _ = train(TrainConfig(steps=150, batch_size=32, eval_every=50, seed=5), spaces, dataset)
        assert not np.array_equal(other.logits, first_policy.logits)

    def test_sft_recovers_best_of_n(self):
        spaces = certify_spaces()
        dataset = exact_preference_dataset(spaces, 3)
        config = TrainConfig(
            loss=LossKind.SFT_BON,
            n=3,
            learning_rate=2.0 * len(spaces),
            steps=20_000,
            eval_every=5000,
            optimizer=OptimizerKind.SGD,
        )
        policy, _ = train(config, spaces, dataset)
        for space in spaces:
            assert total_variation(policy.to_discrete(space), bon_policy_exact(space, 3)) < 1e-4

    def test_bonbon_pure_sft_endpoint(self):
        spaces = [make_space(10, seed=k, prompt_id=f"p{k}") for k in range(2)]
        dataset = gen_dataset(spaces, 4, 200, Rng(2))
        sft, _ = train(TrainConfig(loss=LossKind.SFT_BON, n=4, steps=100), spaces, dataset)
        bonbon, _ = train(TrainConfig(loss=LossKind.BONBON, n=4, alpha=1.0, steps=100), spaces, dataset)
        np.testing.assert_allclose(bonbon.logits, sft.logits, rtol=1e-12, atol=1e-12)

    def test_ipo_bon_meets_target_but_not_best_of_n(self):
        space = build_space([0.5, 0.5], [0.0, 1.0], prompt_id="pair")
        dataset = exact_preference_dataset([space], 2)
        config = TrainConfig(loss=LossKind.IPO_BON, n=2, learning_rate=0.5, steps=2000, optimizer=OptimizerKind.SGD)
        policy, _ = train(config, [space], dataset)
        logits = policy.logits_for("pair")
        # beta*_2 = 1/2, so the log-ratio target is 1
        assert logits[1] - logits[0] == pytest.approx(1.0, abs=1e-8)
        trained = policy.to_discrete(space)
        np.testing.assert_allclose(trained.probs[1], math.e / (1 + math.e), atol=1e-8)
        assert total_variation(trained, bon_policy_exact(space, 2)) > 0.01

    def test_bonbon_minimizer_on_exact_data(self):
        space = build_space([0.5, 0.5], [0.0, 1.0], prompt_id="pair")
        dataset = exact_preference_dataset([space], 2)
        alpha = 0.005
        config = TrainConfig(
            loss=LossKind.BONBON, n=2, alpha=alpha, learning_rate=0.5, steps=2000, optimizer=OptimizerKind.SGD
        )
        policy, _ = train(config, [space], dataset)
        # stationary point of alpha * SFT-BoN + (1 - alpha) * IPO-BoN in the logit gap x
        expected = optimize.brentq(lambda x: (1 - alpha) * (x - 1.0) + alpha * (expit(x) - 0.75), 0.0, 2.0)
        logits = policy.logits_for("pair")
        assert logits[1] - logits[0] == pytest.approx(expected, abs=1e-8)
        trained = policy.to_discrete(space)
        assert trained.probs[1] == pytest.approx(0.7310773, abs=1e-6)
        assert total_variation(trained, bon_policy_exact(space, 2)) == pytest.approx(0.75 - trained.probs[1])
        assert total_variation(trained, bon_policy_exact(space, 2)) > 0.01

    def test_minibatches_weigh_records_once(self):
        space = build_space([0.5, 0.5], [0.0, 1.0], prompt_id="pair")
        dataset = exact_preference_dataset([space], 2)
        config = TrainConfig(
            loss=LossKind.SFT_BON,
            n=2,
            learning_rate=0.05,
            steps=2000,
            eval_every=2000,
            batch_size=512,
            optimizer=OptimizerKind.SGD,
        )
        policy, _ = train(config, [space], dataset)
        np.testing.assert_allclose(policy.probs_for("pair"), [0.25, 0.75], atol=0.01)

    def test_ipo_bon_cheats_on_chained_records(self):
        spaces, dataset = cheat_problem()
        config = TrainConfig(loss=LossKind.IPO_BON, n=8, learning_rate=0.1, steps=2000, eval_every=500, optimizer=OptimizerKind.SGD)
        policy, trace = train(config, spaces, dataset)
        assert trace.final.mean_log_ratio_statistic == pytest.approx(18.15, abs=1e-6)
        trained = policy.to_discrete(spaces[0])
        # the best response of the first record ends up less likely than under the reference
        assert trained.probs[1] < spaces[0].probs[1]
        assert trained.probs[2] > 0.99
        assert trace.final.mean_attribute > trace.rows[0].mean_attribute

    def test_divergence_keeps_partial_trace(self):
        spaces, dataset = cheat_problem()
        callback = RecordingCallback()
        config = TrainConfig(loss=LossKind.IPO_BON, n=8, learning_rate=10.0, steps=1000, eval_every=1000, optimizer=OptimizerKind.SGD)
        with pytest.raises(DivergenceError) as info:
            train(config, spaces, dataset, callback)
        assert info.value.step > 0
        assert info.value.trace.rows[0].step == 0
        assert callback.errors and not callback.completed

    def test_empty_dataset(self):
        spaces, _ = cheat_problem()
        with pytest.raises(EmptyDatasetError):
            train(TrainConfig(steps=5), spaces, PreferenceDataset((), 8, ("q",)))


@pytest.mark.slow
class TestDeskScale:
    """20 prompts of 100 responses, 10k best-of-8 records each, the reproduce defaults"""

    @pytest.fixture(scope="class")
    def trained(self):
        spaces = [make_space(100, seed=k, prompt_id=f"prompt-{k}") for k in range(20)]
        dataset = gen_dataset(spaces, 8, 10_000, Rng(0, 1), threads=4)
        runs = {}
        for loss, alpha in ((LossKind.BONBON, 0.005), (LossKind.IPO_BON, None), (LossKind.SFT_BON, None)):
            config = TrainConfig(loss=loss, n=8, alpha=alpha, learning_rate=0.05, steps=3000, eval_every=500)
            policy, trace = train(config, spaces, dataset)
            tv = np.mean([total_variation(policy.to_discrete(s), bon_policy_exact(s, 8)) for s in spaces])
            runs[loss] = (policy, trace, tv)
        reference_win = np.mean([eval_policy(s, reference_policy(s)).win_rate_with_ties for s in spaces])
        return runs, reference_win

    def test_sft_bon_lands_on_best_of_n(self, trained):
        runs, _ = trained
        _, trace, tv = runs[LossKind.SFT_BON]
        assert 0.87 <= trace.final.win_rate_vs_reference <= 0.91
        assert tv < 0.05

    def test_bonbon_follows_ipo_bon(self, trained):
        runs, reference_win = trained
        policy, trace, tv = runs[LossKind.BONBON]
        ipo_win = runs[LossKind.IPO_BON][1].final.win_rate_vs_reference
        sft_win = runs[LossKind.SFT_BON][1].final.win_rate_vs_reference
        assert trace.final.win_rate_vs_reference == pytest.approx(ipo_win, abs=0.01)
        # the small SFT weight does not pull the finite-data minimizer onto best-of-n
        assert trace.final.win_rate_vs_reference < sft_win
        assert tv > runs[LossKind.SFT_BON][2]
        assert trace.final.win_rate_vs_reference > reference_win + 0.2
        assert trace.final.kl_vs_reference < 3.0
        assert np.isfinite(policy.logits).all()
