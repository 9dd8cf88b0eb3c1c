from cli.context import RunContext
from cli.criteria import run_suite

TABLE_COLUMNS = ("number", "name", "passed")


def run(ctx: RunContext) -> int:
    results = run_suite(ctx.spec.reproduce, ctx.seed, ctx.threads)
    passed = all(r.passed for r in results)
    ctx.store.write_json(
        "summary.json",
        "summary",
        {"passed": passed, "criteria": [r.to_dict() for r in results]},
    )
    ctx.store.write_csv(
        "criteria.csv",
        TABLE_COLUMNS,
        ({"number": r.number, "name": r.name, "passed": r.passed} for r in results),
    )

    width = max((len(r.name) for r in results), default=0)
    for r in results:
        ctx.echo(f"{r.number:>2}  {r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}")
        if r.note:
            ctx.echo(f"    note: {r.note}")
    ctx.echo(f"summary hash {ctx.store.numeric_hash()}")
    return 0 if passed else 1
