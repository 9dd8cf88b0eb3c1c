import math
from pathlib import Path

from cli.context import RunContext
from core.analytics import eval_policy, reference_metrics
from core.distributions import bon_policy_exact, reference_policy, total_variation
from core.storage import load_policy, load_spaces
from core.training.policy import TabularPolicy


def _mean(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def run(ctx: RunContext) -> int:
    spec = ctx.spec.eval
    spaces = load_spaces(Path(spec.spaces_file))
    if spec.policy_file:
        policy = TabularPolicy.from_mapping(load_policy(Path(spec.policy_file)), spaces)
        policies = [policy.to_discrete(space) for space in spaces]
    else:
        policies = [reference_policy(space) for space in spaces]

    prompts = []
    for space, discrete in zip(spaces, policies, strict=True):
        metrics = eval_policy(space, discrete)
        reference = reference_metrics(space)
        drift = None
        if metrics.mean_attribute is not None:
            drift = metrics.mean_attribute - reference.mean_attribute
        prompts.append(
            {
                "prompt_id": space.prompt_id,
                **metrics.to_dict(),
                "attribute_drift": drift,
                "tv_to_best_of_n": total_variation(discrete, bon_policy_exact(space, spec.n)),
            }
        )

    summary = {
        key: _mean([p[key] for p in prompts if p[key] is not None])
        for key in (
            "win_rate_with_ties",
            "kl_vs_reference",
            "mean_attribute",
            "attribute_drift",
            "tv_to_best_of_n",
        )
    }
    ctx.store.write_json(
        "metrics.json",
        "metrics",
        {"n": spec.n, "policy_file": spec.policy_file, "mean": summary, "prompts": prompts},
    )
    ctx.echo(
        f"win rate {summary['win_rate_with_ties']:.4f}, kl {summary['kl_vs_reference']:.4f}, "
        f"TV to best-of-{spec.n} {summary['tv_to_best_of_n']:.4f}"
    )
    return 0
