from concurrent.futures import ThreadPoolExecutor

from cli.context import RunContext
from core.analytics import curve_points_for_n, frontier_point
from core.exceptions import NonFiniteTargetError, SolverError
from core.logger import LOG, LogSource

CURVE_COLUMNS = ("label", "parameter", "kl_nats", "win_rate", "gap", "error")
# the best-of-2 gap to the optimal policy stays under one percentage point
N2_GAP_THRESHOLD = 0.01


def _n_rows(n: int) -> list[dict]:
    try:
        return [point.to_row() for point in curve_points_for_n(n)]
    except (SolverError, NonFiniteTargetError) as e:
        LOG.error(f"Curve point n={n} failed: {e}", LogSource.CLI)
        return [_failed_row(label, float(n), str(e)) for label in ("best_of_n", "optimal")]


def _frontier_row(kl: float) -> dict:
    try:
        return frontier_point(kl).to_row()
    except (SolverError, NonFiniteTargetError) as e:
        LOG.error(f"Frontier point kl={kl} failed: {e}", LogSource.CLI)
        return _failed_row("optimal_frontier", float("nan"), str(e), kl=kl)


def _failed_row(label: str, parameter: float, error: str, kl: float | str = "") -> dict:
    return {
        "label": label,
        "parameter": parameter,
        "kl_nats": kl,
        "win_rate": "",
        "gap": "",
        "error": error,
    }


def run(ctx: RunContext) -> int:
    spec = ctx.spec.curves
    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        per_n = list(pool.map(_n_rows, spec.n_values))
        frontier = list(pool.map(_frontier_row, spec.kl_grid))
    rows = [row for pair in per_n for row in pair] + frontier
    for row in rows:
        row.setdefault("error", "")
    path = ctx.store.write_csv("curve.csv", CURVE_COLUMNS, rows)
    ctx.echo(f"Wrote {len(rows)} curve rows to {path}")

    if 2 in spec.n_values:
        gap = per_n[spec.n_values.index(2)][0]["gap"]
        if gap == "":
            ctx.echo("n=2 gap: unavailable (solver failed)")
        else:
            verdict = "PASS" if 0 < gap < N2_GAP_THRESHOLD else "FAIL"
            ctx.echo(f"n=2 gap: {gap:.6f} (threshold {N2_GAP_THRESHOLD}) {verdict}")
    return 0
