from concurrent.futures import ThreadPoolExecutor
from itertools import product

from cli.context import RunContext
from core.analytics import BoundsReport, bounds_report
from core.logger import LOG, LogSource


def run(ctx: RunContext) -> int:
    spec = ctx.spec.bounds
    spaces = spec.spaces.resolve(ctx.seed)
    tilts = [t.tilt() for t in spec.tilts]
    pairs = list(product(spaces, tilts))

    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        reports: list[BoundsReport] = list(pool.map(lambda pair: bounds_report(*pair), pairs))

    failed = [r for r in reports if not r.passed]
    for report in failed:
        broken = ", ".join(name for name, ok in report.checks.items() if not ok)
        LOG.warning(f"{report.prompt_id} / {report.tilt}: violated {broken}", LogSource.CLI)

    ctx.store.write_json(
        "bounds.json",
        "bounds",
        {
            "passed": not failed,
            "checked": len(reports),
            "failed": len(failed),
            "max_kl_gap": max(r.kl.gap for r in reports),
            "reports": [r.to_dict() for r in reports],
        },
    )
    ctx.echo(
        f"Checked {len(reports)} (space, tilt) pairs over {len(spaces)} spaces: "
        f"{len(reports) - len(failed)} passed, {len(failed)} failed"
    )
    return 1 if failed else 0
