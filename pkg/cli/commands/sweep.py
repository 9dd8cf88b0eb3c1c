import math
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from pathlib import Path

from cli.commands.train import check_dataset_n
from cli.context import RunContext
from core.analytics import reference_metrics
from core.distributions import bon_policy_exact, total_variation
from core.enums.loss_kind import LossKind
from core.exceptions import DivergenceError
from core.logger import LOG, LogSource
from core.storage import load_dataset, load_spaces
from core.training.trainer import train

SWEEP_COLUMNS = (
    "alpha",
    "beta_scale",
    "win_rate",
    "kl",
    "mean_attribute",
    "attribute_drift",
    "tv_to_best_of_n",
    "diverged_at",
)


def run(ctx: RunContext) -> int:
    spec = ctx.spec.sweep
    spaces = load_spaces(Path(spec.spaces_file))
    dataset = load_dataset(Path(spec.dataset_file))
    grid = list(product(spec.alphas, spec.beta_scales))
    configs = [
        spec.config.to_config(ctx.seed, loss=LossKind.BONBON, alpha=a, beta_scale=s, beta=None)
        for a, s in grid
    ]
    check_dataset_n(configs[0], dataset)

    attributes = [reference_metrics(space).mean_attribute for space in spaces]
    reference_attribute = (
        math.fsum(attributes) / len(attributes) if None not in attributes else None
    )

    def _point(index: int) -> dict:
        config = configs[index]
        row = {"alpha": config.alpha, "beta_scale": config.beta_scale, "diverged_at": ""}
        try:
            policy, trace = train(config, spaces, dataset)
        except DivergenceError as e:
            LOG.warning(f"alpha={config.alpha} beta_scale={config.beta_scale}: {e}", LogSource.CLI)
            return {**row, "diverged_at": e.step}
        final = trace.final
        tv = [
            total_variation(policy.to_discrete(space), bon_policy_exact(space, config.n))
            for space in spaces
        ]
        drift = None
        if final.mean_attribute is not None and reference_attribute is not None:
            drift = final.mean_attribute - reference_attribute
        return {
            **row,
            "win_rate": final.win_rate_vs_reference,
            "kl": final.kl_vs_reference,
            "mean_attribute": final.mean_attribute,
            "attribute_drift": drift,
            "tv_to_best_of_n": math.fsum(tv) / len(tv),
        }

    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        rows = list(pool.map(_point, range(len(configs))))

    path = ctx.store.write_csv("sweep.csv", SWEEP_COLUMNS, rows)
    diverged = sum(1 for r in rows if r["diverged_at"] != "")
    ctx.echo(f"Swept {len(rows)} (alpha, beta_scale) points to {path}, {diverged} diverged")
    return 1 if diverged else 0
