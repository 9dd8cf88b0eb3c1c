"""Win rate and KL of tilted policies, in closed form and exactly on finite spaces.

Closed forms are the continuous-reward results; the discrete functions are
exact for a finite response space and are sandwiched by / bounded against
the closed forms through Area_diff.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import rel_entr, xlogy

from core.distributions import (
    DiscretePolicy,
    ResponseSpace,
    check_same_space,
    cumulative_prefix,
    reference_policy,
    tilted_policy,
)
from core.exceptions import InvalidTiltError, NonFiniteTargetError, SolverError
from core.logger import LOG
from core.tilts import ExponentialTilt, PowerTilt, TiltFunction

SMALL_C = 1e-4
KL_TOLERANCE = 1e-10
# slack for floating comparisons in the inequality checks
BOUND_SLACK = 1e-12


@dataclass(frozen=True, slots=True)
class WinRateReport:
    with_ties: float
    without_ties: float
    continuous_closed_form: float | None = None
    sandwich_ok: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, slots=True)
class KlReport:
    discrete_exact: float
    continuous_closed_form: float
    gap: float
    gap_bound: float
    win_rate_gap_bound: float

    @property
    def ok(self) -> bool:
        """discrete <= continuous and 0 <= gap <= bound"""
        return (
            self.discrete_exact <= self.continuous_closed_form + BOUND_SLACK
            and -BOUND_SLACK <= self.gap <= self.gap_bound + BOUND_SLACK
        )

    def to_dict(self) -> dict:
        return {**asdict(self), "ok": self.ok}


@dataclass(frozen=True, slots=True)
class CurvePoint:
    label: str
    kl: float
    win_rate: float
    parameter: float
    gap: float | None = None

    def to_row(self) -> dict:
        return {
            "label": self.label,
            "parameter": self.parameter,
            "kl_nats": self.kl,
            "win_rate": self.win_rate,
            "gap": "" if self.gap is None else self.gap,
        }


@dataclass(frozen=True, slots=True)
class PolicyMetrics:
    win_rate_with_ties: float
    kl_vs_reference: float
    mean_attribute: float | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, slots=True)
class BoundsReport:
    """Every discrete-vs-continuous inequality for one (space, tilt)"""

    prompt_id: str
    tilt: str
    size: int
    area_diff: float
    area_identity_error: float
    win_rate: WinRateReport
    kl: KlReport
    win_rate_gap: float
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "tilt": self.tilt,
            "size": self.size,
            "area_diff": self.area_diff,
            "area_identity_error": self.area_identity_error,
            "win_rate": self.win_rate.to_dict(),
            "kl": self.kl.to_dict(),
            "win_rate_gap": self.win_rate_gap,
            "checks": dict(self.checks),
            "passed": self.passed,
        }


# -------------------------------------------------------------------------
# closed forms
# -------------------------------------------------------------------------


def _exp_win_rate(c: float) -> float:
    if c < SMALL_C:
        return 0.5 + c / 12.0 - c**3 / 720.0
    # ((c-1)e^c + 1) / (c(e^c - 1)) == 1/(1 - e^-c) - 1/c
    return 1.0 / -math.expm1(-c) - 1.0 / c


def _log_mass(c: float) -> float:
    """log((e^c - 1)/c) without overflow"""
    return c + math.log(-math.expm1(-c)) - math.log(c)


def _exp_kl(c: float) -> float:
    if c < SMALL_C:
        return c**2 / 24.0 - c**4 / 960.0
    if c > 1.0:
        # c wr(c) and log mass(c) both grow like c; drop the shared c before subtracting
        tail = math.exp(-c)
        return c * tail / -math.expm1(-c) - 1.0 - math.log1p(-tail) + math.log(c)
    return c * _exp_win_rate(c) - _log_mass(c)


def closed_win_rate(tilt: TiltFunction) -> float:
    """int u f(u) du / int f(u) du: n/(n+1) for best-of-n, the exponential form for c"""
    if isinstance(tilt, PowerTilt):
        return tilt.n / (tilt.n + 1.0)
    if isinstance(tilt, ExponentialTilt):
        return _exp_win_rate(tilt.c)
    return lemma_win_rate(tilt)


def closed_kl(tilt: TiltFunction) -> float:
    """KL(pi_f || pi_0) for a continuous reward: log n - (n-1)/n, or the exponential form"""
    if isinstance(tilt, PowerTilt):
        if tilt.n == 1:
            return 0.0
        return math.log(tilt.n) - (tilt.n - 1.0) / tilt.n
    if isinstance(tilt, ExponentialTilt):
        if tilt.c == 0.0:
            return 0.0
        return _exp_kl(tilt.c)
    return lemma_kl(tilt)


def lemma_win_rate(tilt: TiltFunction) -> float:
    """General f-tilt win rate by quadrature"""
    numerator, _ = integrate.quad(lambda u: u * float(tilt.f(u)), 0.0, 1.0, limit=200)
    return numerator / tilt.mass


def lemma_kl(tilt: TiltFunction) -> float:
    """General f-tilt KL by quadrature of g log g with g = f / mass"""
    mass = tilt.mass

    def integrand(u: float) -> float:
        g = float(tilt.f(u)) / mass
        return float(xlogy(g, g))

    value, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
    return value


def solve_c_for_kl(d: float) -> float:
    """Exponential-tilt constant c >= 0 whose closed-form KL equals ``d``.

    KL(c) > log c - 1 for every c > 0, so [0, e^(d+2)] brackets the root
    with at least 1 nat to spare; Brent's method (bisection safeguarded
    secant/inverse-quadratic steps) then solves inside it.
    """
    if not math.isfinite(d):
        raise NonFiniteTargetError(f"KL target must be finite, got {d!r}")
    if d < 0:
        raise NonFiniteTargetError(f"KL target must be non-negative, got {d!r}")
    if d == 0:
        return 0.0

    try:
        c_max = math.exp(d + 2.0)
    except OverflowError:
        raise SolverError(f"KL target {d!r} needs a c beyond the float range") from None
    LOG.debug(f"solve_c_for_kl: target {d!r} bracketed by [0, {c_max}]")

    c = optimize.brentq(
        lambda x: _exp_kl(x) - d,
        0.0,
        c_max,
        xtol=1e-15,
        rtol=4 * np.finfo(float).eps,
        maxiter=500,
    )
    residual = abs(_exp_kl(c) - d)
    if residual > KL_TOLERANCE:
        raise SolverError(f"KL inversion residual {residual:.3e} above tolerance at c={c!r}")
    return float(c)


# -------------------------------------------------------------------------
# exact discrete quantities
# -------------------------------------------------------------------------


def area_diff(space: ResponseSpace) -> float:
    """Area between the staircase reward-quantile CDF and the uniform CDF: sum p_i^2 / 2"""
    return 0.5 * float(np.dot(space.probs, space.probs))


def discrete_win_rate(
    space: ResponseSpace, policy: DiscretePolicy, tilt: TiltFunction | None = None
) -> WinRateReport:
    """P(r(Y) >= r(Y0)) and P(r(Y) > r(Y0)) for Y ~ policy, Y0 ~ reference.

    When ``tilt`` is the tilt that generated ``policy`` the report also checks
    without_ties <= closed form <= with_ties.
    """
    check_same_space(space, policy)
    prefix = cumulative_prefix(space)
    with_ties = float(np.dot(prefix.prefix, policy.probs))
    without_ties = float(np.dot(prefix.lower, policy.probs))

    closed = None
    sandwich = None
    if tilt is not None:
        closed = closed_win_rate(tilt)
        sandwich = without_ties - BOUND_SLACK <= closed <= with_ties + BOUND_SLACK
    return WinRateReport(with_ties, without_ties, closed, sandwich)


def discrete_kl(space: ResponseSpace, policy: DiscretePolicy) -> float:
    """sum_i pi(i) log(pi(i)/p_i); zero-probability entries contribute nothing"""
    check_same_space(space, policy)
    return float(math.fsum(rel_entr(policy.probs, space.probs)))


def kl_report(space: ResponseSpace, tilt: TiltFunction) -> KlReport:
    """Discrete KL of the tilted policy against its continuous closed form and gap bounds"""
    policy = tilted_policy(space, tilt)
    discrete = discrete_kl(space, policy)
    continuous = closed_kl(tilt)
    area = area_diff(space)
    return KlReport(
        discrete_exact=discrete,
        continuous_closed_form=continuous,
        gap=continuous - discrete,
        gap_bound=2.0 * tilt.slope_ratio * area,
        win_rate_gap_bound=2.0 * tilt.top_ratio * area,
    )


def bounds_report(space: ResponseSpace, tilt: TiltFunction) -> BoundsReport:
    """Check every discrete-vs-continuous inequality for one (space, tilt)"""
    policy = tilted_policy(space, tilt)
    win = discrete_win_rate(space, policy, tilt)
    kl = kl_report(space, tilt)
    area = area_diff(space)
    prefix = cumulative_prefix(space)
    identity = 0.5 - float(np.dot(space.probs, prefix.lower))
    closed = win.continuous_closed_form or 0.0
    win_gap = max(win.with_ties - closed, closed - win.without_ties)

    checks = {
        "win_rate_order": win.without_ties <= win.with_ties,
        "win_rate_sandwich": bool(win.sandwich_ok),
        "win_rate_gap_bound": win_gap <= kl.win_rate_gap_bound + BOUND_SLACK,
        "kl_below_continuous": kl.discrete_exact <= kl.continuous_closed_form + BOUND_SLACK,
        "kl_gap_bound": -BOUND_SLACK <= kl.gap <= kl.gap_bound + BOUND_SLACK,
        "area_identity": abs(identity - area) <= 1e-9,
    }
    return BoundsReport(
        prompt_id=space.prompt_id,
        tilt=tilt.label,
        size=space.size,
        area_diff=area,
        area_identity_error=abs(identity - area),
        win_rate=win,
        kl=kl,
        win_rate_gap=win_gap,
        checks=checks,
    )


def eval_policy(space: ResponseSpace, policy: DiscretePolicy) -> PolicyMetrics:
    """Exact plug-in win rate (with ties), KL to the reference and mean attribute"""
    win = discrete_win_rate(space, policy)
    mean_attribute = None
    if space.has_attribute:
        mean_attribute = float(np.dot(policy.probs, space.attribute))
    return PolicyMetrics(
        win_rate_with_ties=win.with_ties,
        kl_vs_reference=discrete_kl(space, policy),
        mean_attribute=mean_attribute,
    )


def reference_metrics(space: ResponseSpace) -> PolicyMetrics:
    return eval_policy(space, reference_policy(space))


# -------------------------------------------------------------------------
# win rate / KL frontier
# -------------------------------------------------------------------------


def curve_points_for_n(n: int) -> tuple[CurvePoint, CurvePoint]:
    """Best-of-n point and the optimal-policy point at the same KL"""
    bon = PowerTilt(n)
    kl = closed_kl(bon)
    bon_wr = closed_win_rate(bon)
    c = solve_c_for_kl(kl)
    opt_wr = closed_win_rate(ExponentialTilt(c))
    gap = opt_wr - bon_wr
    return (
        CurvePoint("best_of_n", kl, bon_wr, float(n), gap),
        CurvePoint("optimal", kl, opt_wr, c, gap),
    )


def frontier_point(kl: float) -> CurvePoint:
    """Optimal-policy win rate at an arbitrary KL budget"""
    c = solve_c_for_kl(kl)
    return CurvePoint("optimal_frontier", kl, closed_win_rate(ExponentialTilt(c)), c)


def winrate_kl_curve(
    n_values: Iterable[int], kl_grid: Iterable[float] = (), threads: int = 1
) -> list[CurvePoint]:
    """Best-of-n vs optimal-policy curve (two points per n) plus an optional frontier"""
    n_values = list(n_values)
    kl_grid = list(kl_grid)
    for n in n_values:
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise InvalidTiltError(f"n values must be integers >= 1, got {n!r}")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        pairs = list(pool.map(curve_points_for_n, n_values))
        frontier = list(pool.map(frontier_point, kl_grid))
    points = [point for pair in pairs for point in pair]
    return points + frontier
