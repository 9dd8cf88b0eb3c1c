from pathlib import Path

from typing_extensions import override

from cli.context import RunContext
from core.exceptions import DivergenceError, InvalidConfigError
from core.logger import LOG, LogSource
from core.payloads.training import TraceRow, TrainConfig
from core.sampling import PreferenceDataset
from core.storage import load_dataset, load_spaces
from core.training.trainer import TrainCallback, train


class LoggingCallback(TrainCallback):
    """Mirrors trace rows to the run log as they are produced"""

    @override
    def on_eval(self, row: TraceRow) -> None:
        LOG.info(
            f"step {row.step}: loss {row.loss_value:.6g} win rate "
            f"{row.win_rate_vs_reference:.4f} kl {row.kl_vs_reference:.4f}",
            LogSource.CLI,
        )

    @override
    def on_error(self, error: Exception) -> None:
        LOG.error(f"Training stopped: {error}", LogSource.CLI)


def check_dataset_n(config: TrainConfig, dataset: PreferenceDataset) -> None:
    if config.n != dataset.n:
        raise InvalidConfigError(
            f"Training config has n={config.n} but the dataset was drawn with n={dataset.n}"
        )


def run(ctx: RunContext) -> int:
    spec = ctx.spec.train
    spaces = load_spaces(Path(spec.spaces_file))
    dataset = load_dataset(Path(spec.dataset_file))
    config = spec.config.to_config(ctx.seed)
    check_dataset_n(config, dataset)
    ctx.store.write_json("train_config.json", "train_config", config.to_dict())

    try:
        policy, trace = train(config, spaces, dataset, LoggingCallback())
    except DivergenceError as e:
        # keep what was computed before the loss blew up
        ctx.store.write_trace("trace.csv", e.trace)
        ctx.store.write_policy("policy.json", e.policy.to_dict())
        ctx.echo(f"Training diverged at step {e.step}; partial trace written")
        return 1

    ctx.store.write_trace("trace.csv", trace)
    path = ctx.store.write_policy("policy.json", policy.to_dict())
    final = trace.final
    ctx.echo(
        f"Trained {config.loss} for {config.steps} steps: win rate "
        f"{final.win_rate_vs_reference:.4f}, kl {final.kl_vs_reference:.4f}; policy at {path}"
    )
    return 0
