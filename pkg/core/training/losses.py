"""The BoNBoN loss family with analytic gradients over tabular logits.

Every loss takes a policy and a :class:`PreferenceBatch` and returns the
weighted mean over records together with the gradient with respect to the
flat logits vector. Partial sums are formed with ``np.bincount`` in record
order, so values are bit-stable for a given batch.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial

import numpy as np
from scipy.special import expit

from core.enums.loss_kind import LossKind
from core.exceptions import EmptyDatasetError, InvalidConfigError
from core.training.policy import PreferenceBatch, TabularPolicy


@dataclass(frozen=True, slots=True)
class BetaStar:
    """The IPO strength whose target log-ratio 1/(2 beta) is met by best-of-n"""

    n: int
    exact: Fraction

    @property
    def value(self) -> float:
        return float(self.exact)

    @property
    def target(self) -> float:
        """1/(2 beta*_n) = (n - 1) H_(n-1)"""
        return float(1 / (2 * self.exact))


def beta_star(n: int) -> BetaStar:
    """beta*_n = 1 / (2 (n - 1) H_(n-1)), evaluated in exact rational arithmetic"""
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise InvalidConfigError(f"beta* needs an integer n >= 2, got {n!r}")
    n = int(n)
    harmonic = sum(Fraction(1, k) for k in range(1, n))
    return BetaStar(n, 1 / (2 * (n - 1) * harmonic))


@dataclass(frozen=True, slots=True, eq=False)
class LossValue:
    value: float
    gradient: np.ndarray
    terms: dict[str, float] = field(default_factory=dict)


LossFn = Callable[[TabularPolicy, PreferenceBatch], LossValue]


def _total_weight(batch: PreferenceBatch) -> float:
    total = batch.total_weight
    if len(batch) == 0 or total <= 0:
        raise EmptyDatasetError("Loss evaluated on a batch with no weighted records")
    return total


def _pair_gradient(batch: PreferenceBatch, coefficient: np.ndarray) -> np.ndarray:
    """sum_r coefficient_r (e_best - e_worst); best == worst rows cancel"""
    size = batch.num_logits
    return np.bincount(batch.best, coefficient, minlength=size) - np.bincount(
        batch.worst, coefficient, minlength=size
    )


def loss_sft_bon(policy: TabularPolicy, batch: PreferenceBatch) -> LossValue:
    """Weighted negative log-likelihood of the best response of each record"""
    total = _total_weight(batch)
    log_probs = policy.log_probs()
    value = -float(np.dot(batch.weights, log_probs[batch.best])) / total
    prompt_weight = np.bincount(batch.prompt_index, batch.weights, minlength=batch.num_prompts)
    # d(-log pi_b)/d theta = pi - e_b within the prompt of b
    gradient = prompt_weight[policy.segment] * np.exp(log_probs) - np.bincount(
        batch.best, batch.weights, minlength=batch.num_logits
    )
    return LossValue(value, gradient / total, {"sft": value})


def _squared_ratio_loss(
    policy: TabularPolicy, batch: PreferenceBatch, target: float, name: str
) -> LossValue:
    total = _total_weight(batch)
    residual = batch.log_ratio_statistic(policy) - target
    value = float(np.dot(batch.weights, residual**2)) / total
    gradient = _pair_gradient(batch, 2.0 * batch.weights * residual) / total
    return LossValue(value, gradient, {name: value})


def loss_ipo_bon(
    policy: TabularPolicy, batch: PreferenceBatch, n: int, beta_scale: float = 1.0
) -> LossValue:
    """Mean (h - 1/(2 beta))^2 with beta = beta*_n * beta_scale"""
    star = beta_star(n)
    target = 1.0 / (2.0 * star.value * beta_scale)
    return _squared_ratio_loss(policy, batch, target, "ipo")


def loss_ipo(policy: TabularPolicy, batch: PreferenceBatch, beta: float) -> LossValue:
    if not beta > 0 or not math.isfinite(beta):
        raise InvalidConfigError(f"beta must be a finite value > 0, got {beta!r}")
    return _squared_ratio_loss(policy, batch, 1.0 / (2.0 * beta), "ipo")


def loss_bonbon(
    policy: TabularPolicy,
    batch: PreferenceBatch,
    n: int,
    alpha: float,
    beta_scale: float = 1.0,
) -> LossValue:
    """alpha * SFT-BoN + (1 - alpha) * IPO-BoN on a shared batch"""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidConfigError(f"alpha must lie in [0, 1], got {alpha!r}")
    sft = loss_sft_bon(policy, batch)
    ipo = loss_ipo_bon(policy, batch, n, beta_scale)
    return LossValue(
        alpha * sft.value + (1.0 - alpha) * ipo.value,
        alpha * sft.gradient + (1.0 - alpha) * ipo.gradient,
        {"sft": sft.value, "ipo": ipo.value},
    )


def loss_dpo(policy: TabularPolicy, batch: PreferenceBatch, beta: float) -> LossValue:
    """-mean log sigmoid(beta * h), best as winner and worst as loser"""
    if not beta > 0 or not math.isfinite(beta):
        raise InvalidConfigError(f"beta must be a finite value > 0, got {beta!r}")
    total = _total_weight(batch)
    margin = beta * batch.log_ratio_statistic(policy)
    value = float(np.dot(batch.weights, np.logaddexp(0.0, -margin))) / total
    # d/dz log(1 + e^-z) = -sigmoid(-z)
    coefficient = -beta * batch.weights * expit(-margin)
    return LossValue(value, _pair_gradient(batch, coefficient) / total, {"dpo": value})


def make_loss(
    kind: LossKind | str,
    *,
    n: int | None = None,
    alpha: float | None = None,
    beta: float | None = None,
    beta_scale: float = 1.0,
) -> LossFn:
    """Bind a loss kind to its hyperparameters"""
    kind = LossKind(kind)
    match kind:
        case LossKind.SFT_BON:
            return loss_sft_bon
        case LossKind.IPO_BON:
            _require(kind, n=n)
            return partial(loss_ipo_bon, n=n, beta_scale=beta_scale)
        case LossKind.BONBON:
            _require(kind, n=n, alpha=alpha)
            return partial(loss_bonbon, n=n, alpha=alpha, beta_scale=beta_scale)
        case LossKind.DPO:
            _require(kind, beta=beta)
            return partial(loss_dpo, beta=beta)
        case LossKind.IPO:
            _require(kind, beta=beta)
            return partial(loss_ipo, beta=beta)


def _require(kind: LossKind, **params: object) -> None:
    missing = [name for name, value in params.items() if value is None]
    if missing:
        raise InvalidConfigError(f"{kind} needs {', '.join(missing)}")


def relative_error(analytic: np.ndarray, numeric: np.ndarray, scale: float) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps ~0 coordinates from dominating"""
    floor = 1e-4 * max(1.0, abs(scale))
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor
    )


def numeric_gradient(
    loss_fn: LossFn, policy: TabularPolicy, batch: PreferenceBatch, step_size: float = 1e-5
) -> np.ndarray:
    """Central finite differences over every logit"""
    base = policy.logits
    gradient = np.empty_like(base)
    for i in range(base.size):
        shifted = base.copy()
        shifted[i] = base[i] + step_size
        upper = loss_fn(policy.with_logits(shifted), batch).value
        shifted[i] = base[i] - step_size
        lower = loss_fn(policy.with_logits(shifted), batch).value
        gradient[i] = (upper - lower) / (2.0 * step_size)
    return gradient


def gradient_check(
    kind: LossKind | str,
    policy: TabularPolicy,
    batch: PreferenceBatch,
    step_size: float = 1e-5,
    **params,
) -> float:
    """Largest relative error between the analytic and finite-difference gradients"""
    loss_fn = make_loss(kind, **params)
    analytic = loss_fn(policy, batch)
    numeric = numeric_gradient(loss_fn, policy, batch, step_size)
    return float(np.max(relative_error(analytic.gradient, numeric, analytic.value)))
