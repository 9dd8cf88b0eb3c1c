"""Harness commands run in-process through ``cli.main.main``."""

import json

import pytest
import tomlkit

from cli.criteria import run_suite
from cli.main import EXIT_FAILED, EXIT_INVALID_INPUT, EXIT_OK, main
from cli.schemas import ReproduceSpec
from core.enums.run_status import RunStatus
from core.storage import load_csv, load_dataset, load_manifest, load_trace, read_json


def write_spec(path, data):
    path.write_text(tomlkit.dumps(data), encoding="utf-8")
    return path


@pytest.fixture
def pipeline(tmp_path):
    """A spec wiring gen -> train -> eval -> sweep through one folder"""
    gen_dir = tmp_path / "gen"
    spaces_file = str(gen_dir / "spaces.json")
    dataset_file = str(gen_dir / "dataset.jsonl")
    config = {"n": 4, "steps": 30, "eval_every": 10}
    spec = write_spec(
        tmp_path / "spec.toml",
        {
            "seed": 3,
            "gen": {"n": 4, "records_per_prompt": 200, "spaces": {"count": 2, "size": 8}},
            "train": {"spaces_file": spaces_file, "dataset_file": dataset_file, "config": config},
            "eval": {"spaces_file": spaces_file, "policy_file": str(tmp_path / "train" / "policy.json"), "n": 4},
            "sweep": {
                "spaces_file": spaces_file,
                "dataset_file": dataset_file,
                "alphas": [0.0, 1.0],
                "beta_scales": [1.0],
                "config": config,
            },
        },
    )
    assert main(["gen", "--spec", str(spec), "--out", str(gen_dir)]) == EXIT_OK
    return tmp_path, spec


class TestCurvesAndBounds:
    def test_curves(self, tmp_path, capsys):
        assert main(["curves", "--out", str(tmp_path), "--threads", "2"]) == EXIT_OK
        rows = load_csv(tmp_path / "curve.csv")
        assert len(rows) == 32
        assert rows[0]["label"] == "best_of_n"
        assert "n=2 gap" in capsys.readouterr().out

        manifest = load_manifest(tmp_path / "manifest.json")
        assert manifest.status is RunStatus.COMPLETED
        assert manifest.outputs == ["curve.csv"]
        assert manifest.numeric_hash

    def test_bounds(self, tmp_path):
        spec = write_spec(tmp_path / "spec.toml", {"bounds": {"spaces": {"count": 3, "size": 20}}})
        assert main(["bounds", "--spec", str(spec), "--out", str(tmp_path / "out")]) == EXIT_OK
        report = read_json(tmp_path / "out" / "bounds.json", "bounds")
        assert report["passed"] is True
        assert report["checked"] == 12


class TestPipeline:
    def test_gen(self, pipeline):
        root, _ = pipeline
        dataset = load_dataset(root / "gen" / "dataset.jsonl")
        assert len(dataset) == 400
        assert dataset.n == 4
        assert dataset.seed == 3

    def test_train_and_eval(self, pipeline):
        root, spec = pipeline
        assert main(["train", "--spec", str(spec), "--out", str(root / "train")]) == EXIT_OK
        trace = load_trace(root / "train" / "trace.csv")
        assert trace.column("step") == [0, 10, 20, 30]
        assert read_json(root / "train" / "train_config.json", "train_config")["loss"] == "bonbon"

        assert main(["eval", "--spec", str(spec), "--out", str(root / "eval")]) == EXIT_OK
        metrics = read_json(root / "eval" / "metrics.json", "metrics")
        assert len(metrics["prompts"]) == 2
        assert metrics["mean"]["win_rate_with_ties"] == pytest.approx(trace.final.win_rate_vs_reference)

    def test_eval_reference(self, pipeline):
        root, _ = pipeline
        spec = write_spec(root / "ref.toml", {"eval": {"spaces_file": str(root / "gen" / "spaces.json")}})
        assert main(["eval", "--spec", str(spec), "--out", str(root / "ref")]) == EXIT_OK
        metrics = read_json(root / "ref" / "metrics.json", "metrics")
        assert metrics["mean"]["kl_vs_reference"] == pytest.approx(0.0, abs=1e-15)
        assert metrics["mean"]["attribute_drift"] == pytest.approx(0.0, abs=1e-12)

    def test_train_rejects_mismatched_n(self, pipeline):
        root, _ = pipeline
        spec = write_spec(
            root / "bad.toml",
            {
                "train": {
                    "spaces_file": str(root / "gen" / "spaces.json"),
                    "dataset_file": str(root / "gen" / "dataset.jsonl"),
                    "config": {"n": 8},
                }
            },
        )
        assert main(["train", "--spec", str(spec), "--out", str(root / "bad")]) == EXIT_INVALID_INPUT
        assert load_manifest(root / "bad" / "manifest.json").status is RunStatus.FAILED

    def test_train_divergence_writes_partial_trace(self, pipeline):
        root, _ = pipeline
        spec = write_spec(
            root / "diverge.toml",
            {
                "train": {
                    "spaces_file": str(root / "gen" / "spaces.json"),
                    "dataset_file": str(root / "gen" / "dataset.jsonl"),
                    "config": {
                        "loss": "ipo_bon",
                        "n": 4,
                        "optimizer": "sgd",
                        "learning_rate": 1000.0,
                        "steps": 1000,
                        "eval_every": 1000,
                    },
                }
            },
        )
        assert main(["train", "--spec", str(spec), "--out", str(root / "diverge")]) == EXIT_FAILED
        assert load_trace(root / "diverge" / "trace.csv").column("step") == [0]

    def test_sweep(self, pipeline):
        root, spec = pipeline
        assert main(["sweep", "--spec", str(spec), "--out", str(root / "sweep")]) == EXIT_OK
        rows = load_csv(root / "sweep" / "sweep.csv")
        assert [float(r["alpha"]) for r in rows] == [0.0, 1.0]
        assert all(r["diverged_at"] == "" for r in rows)

    def test_gen_without_records(self, tmp_path):
        spec = write_spec(tmp_path / "spec.toml", {"gen": {"records_per_prompt": 0, "spaces": {"count": 2, "size": 5}}})
        assert main(["gen", "--spec", str(spec), "--out", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "dataset.jsonl").read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["records"] == 0


class TestReproduce:
    def test_beta_constant(self, tmp_path, capsys):
        spec = write_spec(tmp_path / "spec.toml", {"reproduce": {"criteria": [4]}})
        assert main(["reproduce", "--spec", str(spec), "--out", str(tmp_path / "ok")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "summary hash" in out

    def test_injected_fault_fails(self, tmp_path):
        spec = write_spec(tmp_path / "spec.toml", {"reproduce": {"criteria": [4], "inject_beta_fault": True}})
        assert main(["reproduce", "--spec", str(spec), "--out", str(tmp_path / "bad")]) == EXIT_FAILED
        summary = read_json(tmp_path / "bad" / "summary.json", "summary")
        assert summary["passed"] is False
        assert summary["criteria"][0]["details"]["fault_injected"] is True

    def test_end_to_end_reports_every_arm(self, tmp_path, capsys):
        reproduce = {
            "criteria": [8],
            "train_prompts": 2,
            "train_size": 10,
            "records_per_prompt": 300,
            "train": {"steps": 50, "eval_every": 25},
        }
        spec = write_spec(tmp_path / "spec.toml", {"reproduce": reproduce})
        assert main(["reproduce", "--spec", str(spec), "--out", str(tmp_path / "e2e")]) in (EXIT_OK, EXIT_FAILED)
        criterion = read_json(tmp_path / "e2e" / "summary.json", "summary")["criteria"][0]
        details = criterion["details"]
        assert {"sft_bon_win_rate", "sft_bon_mean_tv_to_best_of_n", "ipo_final_win_rate"} <= set(details)
        assert set(details["bonbon_best_of_n_targets"]) == {"win_rate_ok", "tv_ok", "drift_ok"}
        # a missed best-of-n target is always spelled out, never only logged
        missed = not all(details["bonbon_best_of_n_targets"].values())
        assert ("note" in criterion) == missed
        assert ("note: BoNBoN" in capsys.readouterr().out) == missed

    def test_same_seed_same_hash(self, tmp_path):
        spec = write_spec(tmp_path / "spec.toml", {"reproduce": {"criteria": [3, 4, 6], "gradient_points": 3}})
        hashes = []
        for run, threads in (("a", "1"), ("b", "3")):
            out = tmp_path / run
            assert main(["reproduce", "--spec", str(spec), "--seed", "11", "--threads", threads, "--out", str(out)]) == EXIT_OK
            hashes.append(load_manifest(out / "manifest.json").numeric_hash)
        assert hashes[0] == hashes[1]


class TestInvalidInput:
    def test_unknown_spec_key(self, tmp_path):
        spec = write_spec(tmp_path / "spec.toml", {"gen": {"records": 5}})
        assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "out")]) == EXIT_INVALID_INPUT
        assert not (tmp_path / "out").exists()

    def test_missing_spec_file(self, tmp_path):
        assert main(["gen", "--spec", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == EXIT_INVALID_INPUT

    def test_unsupported_spec_format(self, tmp_path):
        spec = tmp_path / "spec.yaml"
        spec.write_text("seed: 1\n")
        assert main(["curves", "--spec", str(spec), "--out", str(tmp_path)]) == EXIT_INVALID_INPUT

    def test_negative_seed(self, tmp_path):
        assert main(["curves", "--seed", "-1", "--out", str(tmp_path)]) == EXIT_INVALID_INPUT

    def test_zero_threads(self, tmp_path):
        assert main(["curves", "--threads", "0", "--out", str(tmp_path / "out")]) == EXIT_INVALID_INPUT
        assert not (tmp_path / "out").exists()

    def test_missing_artifact(self, tmp_path):
        spec = write_spec(tmp_path / "spec.toml", {"eval": {"spaces_file": str(tmp_path / "missing.json")}})
        assert main(["eval", "--spec", str(spec), "--out", str(tmp_path / "out")]) == EXIT_INVALID_INPUT

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["explode"])


@pytest.mark.slow
class TestEndToEndDefaults:
    def test_criterion_passes_on_the_sft_bon_arm(self):
        (result,) = run_suite(ReproduceSpec(criteria=[8]), seed=0, threads=3)
        details = result.details
        assert result.passed
        assert 0.87 <= details["sft_bon_win_rate"] <= 0.91
        assert details["sft_bon_mean_tv_to_best_of_n"] < 0.05
        assert details["win_rate"] == pytest.approx(details["ipo_final_win_rate"], abs=0.01)
        # at alpha = 0.005 BoNBoN stays with IPO-BoN, well away from best-of-n
        assert details["mean_tv_to_best_of_n"] > 0.05
        assert not details["bonbon_best_of_n_targets"]["tv_ok"]
        assert result.note and "alpha=0.005" in result.note
