from cli.context import RunContext
from core.sampling import Rng, gen_dataset

# stream of dataset draws, distinct from the space generator seeds
DATASET_STREAM = 1


def run(ctx: RunContext) -> int:
    spec = ctx.spec.gen
    spaces = spec.spaces.resolve(ctx.seed)
    dataset = gen_dataset(
        spaces,
        spec.n,
        spec.records_per_prompt,
        Rng(ctx.seed, DATASET_STREAM),
        threads=ctx.threads,
    )
    ctx.store.write_spaces("spaces.json", spaces)
    path = ctx.store.write_dataset("dataset.jsonl", dataset)
    ctx.echo(
        f"Wrote {len(dataset)} best/worst-of-{spec.n} records over {len(spaces)} prompts "
        f"to {path} (duplicate rate {dataset.duplicate_rate:.4f})"
    )
    return 0
