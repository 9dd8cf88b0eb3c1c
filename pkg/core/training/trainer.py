from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from core.analytics import eval_policy
from core.distributions import ResponseSpace
from core.enums.loss_kind import OptimizerKind
from core.exceptions import DivergenceError
from core.logger import LOG
from core.payloads.training import TraceRow, TrainConfig, TrainTrace
from core.sampling import PreferenceDataset, Rng
from core.training.losses import LossFn, LossValue, make_loss
from core.training.policy import PreferenceBatch, TabularPolicy

RMSPROP_DECAY = 0.99
RMSPROP_EPSILON = 1e-8
# stream id of minibatch selection, distinct from dataset generation streams
TRAIN_STREAM = 7


class TrainCallback:
    """Override this in the front end"""

    def on_eval(self, row: TraceRow) -> None:
        pass

    def on_complete(self, policy: TabularPolicy, trace: TrainTrace) -> None:
        pass

    def on_error(self, error: Exception) -> None:
        pass


def loss_for_config(config: TrainConfig) -> LossFn:
    return make_loss(
        config.loss,
        n=config.n,
        alpha=config.alpha,
        beta=config.beta,
        beta_scale=config.beta_scale,
    )


class _Optimizer:
    def __init__(self, kind: OptimizerKind, learning_rate: float, size: int) -> None:
        self.kind = kind
        self.learning_rate = learning_rate
        self._square_avg = np.zeros(size)

    def step(self, logits: np.ndarray, gradient: np.ndarray) -> np.ndarray:
        if self.kind is OptimizerKind.SGD:
            return logits - self.learning_rate * gradient
        self._square_avg *= RMSPROP_DECAY
        self._square_avg += (1.0 - RMSPROP_DECAY) * gradient**2
        return logits - self.learning_rate * gradient / (
            np.sqrt(self._square_avg) + RMSPROP_EPSILON
        )


def evaluate_policy(
    policy: TabularPolicy,
    spaces: Sequence[ResponseSpace],
    batch: PreferenceBatch,
    loss: LossValue,
    step: int,
) -> TraceRow:
    """Exact plug-in metrics averaged over prompts, plus the loss on the full batch"""
    metrics = [eval_policy(space, policy.to_discrete(space)) for space in spaces]
    attributes = [m.mean_attribute for m in metrics if m.mean_attribute is not None]
    h = batch.log_ratio_statistic(policy)
    return TraceRow(
        step=step,
        loss_value=loss.value,
        win_rate_vs_reference=math.fsum(m.win_rate_with_ties for m in metrics) / len(metrics),
        kl_vs_reference=math.fsum(m.kl_vs_reference for m in metrics) / len(metrics),
        mean_attribute=math.fsum(attributes) / len(attributes) if attributes else None,
        mean_log_ratio_statistic=float(np.dot(batch.weights, h)) / batch.total_weight,
        sft_term=loss.terms.get("sft"),
        ipo_term=loss.terms.get("ipo"),
    )


def train(
    config: TrainConfig,
    spaces: Sequence[ResponseSpace],
    dataset: PreferenceDataset,
    callback: TrainCallback | None = None,
) -> tuple[TabularPolicy, TrainTrace]:
    """Fit a tabular policy, starting at the reference, and trace exact metrics.

    The run is a pure function of (config, spaces, dataset). A non-finite
    loss raises :class:`DivergenceError` with the trace so far.
    """
    callback = callback or TrainCallback()
    policy = TabularPolicy.from_spaces(spaces)
    batch = PreferenceBatch.build(dataset, spaces)
    loss_fn = loss_for_config(config)
    optimizer = _Optimizer(config.optimizer, config.learning_rate, policy.size)
    gen = Rng(config.seed, TRAIN_STREAM).generator()
    sampling_probs = batch.weights / batch.total_weight if len(batch) else None
    trace = TrainTrace()

    LOG.info(
        f"Training {config.loss} (n={config.n}) for {config.steps} steps on "
        f"{len(batch)} records over {len(spaces)} prompts"
    )

    def _record(step: int, loss: LossValue) -> None:
        row = evaluate_policy(policy, spaces, batch, loss, step)
        trace.append(row)
        LOG.debug(
            f"step {step}: loss {row.loss_value:.6g}, win rate "
            f"{row.win_rate_vs_reference:.4f}, kl {row.kl_vs_reference:.4f}"
        )
        callback.on_eval(row)

    try:
        full = loss_fn(policy, batch)
        _check_finite(full, 0, trace, policy)
        _record(0, full)

        for step in range(1, config.steps + 1):
            if config.batch_size is None:
                loss = full if step == 1 else loss_fn(policy, batch)
            else:
                # rows are drawn by weight, so each drawn row counts once
                rows = gen.choice(len(batch), size=config.batch_size, p=sampling_probs)
                loss = loss_fn(policy, batch.subset(rows, unit_weights=True))
            _check_finite(loss, step, trace, policy)

            logits = optimizer.step(policy.logits, loss.gradient)
            if not np.all(np.isfinite(logits)):
                raise DivergenceError(step, trace, policy)
            policy = policy.with_logits(logits)

            if step % config.eval_every == 0 or step == config.steps:
                full = loss_fn(policy, batch)
                _check_finite(full, step, trace, policy)
                _record(step, full)
    except Exception as e:
        callback.on_error(e)
        raise

    callback.on_complete(policy, trace)
    LOG.info(
        f"Finished {config.loss}: win rate {trace.final.win_rate_vs_reference:.4f}, "
        f"kl {trace.final.kl_vs_reference:.4f}"
    )
    return policy, trace


def _check_finite(
    loss: LossValue, step: int, trace: TrainTrace, policy: TabularPolicy
) -> None:
    if not math.isfinite(loss.value) or not np.all(np.isfinite(loss.gradient)):
        raise DivergenceError(step, trace, policy)
