from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from core.enums.loss_kind import LossKind, OptimizerKind
from core.exceptions import InvalidConfigError

DEFAULT_ALPHA = 0.005
DEFAULT_LEARNING_RATE = 0.1


@dataclass
class TrainConfig:
    """Loss selection and optimizer settings for one tabular training run"""

    loss: LossKind = LossKind.BONBON
    n: int = 8
    alpha: float | None = None
    beta: float | None = None
    beta_scale: float = 1.0
    learning_rate: float = DEFAULT_LEARNING_RATE
    steps: int = 2000
    batch_size: int | None = None  # None trains full batch
    seed: int = 0
    eval_every: int = 100
    optimizer: OptimizerKind = OptimizerKind.RMSPROP

    def __post_init__(self) -> None:
        try:
            self.loss = LossKind(self.loss)
            self.optimizer = OptimizerKind(self.optimizer)
        except ValueError as e:
            raise InvalidConfigError(str(e)) from e

        if self.loss is LossKind.BONBON:
            if self.alpha is None:
                self.alpha = DEFAULT_ALPHA
            if not 0.0 <= self.alpha <= 1.0:
                raise InvalidConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        elif self.alpha is not None:
            raise InvalidConfigError(f"alpha only applies to bonbon, not {self.loss}")

        if self.loss.takes_beta:
            if self.beta is None or not math.isfinite(self.beta) or self.beta <= 0:
                raise InvalidConfigError(f"{self.loss} needs a finite beta > 0")
        elif self.beta is not None:
            raise InvalidConfigError(
                f"beta is fixed to the best-of-n constant for {self.loss}; use beta_scale"
                if self.loss.fixes_beta
                else f"{self.loss} takes no beta"
            )

        if self.beta_scale != 1.0 and not self.loss.fixes_beta:
            raise InvalidConfigError("beta_scale only applies to ipo_bon and bonbon")
        if not math.isfinite(self.beta_scale) or self.beta_scale <= 0:
            raise InvalidConfigError("beta_scale must be a finite value > 0")

        if self.n < 1 or (self.loss.fixes_beta and self.n < 2):
            raise InvalidConfigError(f"n={self.n} is too small for {self.loss}")
        if not math.isfinite(self.learning_rate) or self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be a finite value > 0")
        if self.steps < 0:
            raise InvalidConfigError("steps must be >= 0")
        if self.eval_every < 1:
            raise InvalidConfigError("eval_every must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1 when set")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["loss"] = str(self.loss)
        data["optimizer"] = str(self.optimizer)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"Unknown training fields: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(frozen=True, slots=True)
class TraceRow:
    step: int
    loss_value: float
    win_rate_vs_reference: float
    kl_vs_reference: float
    mean_attribute: float | None
    mean_log_ratio_statistic: float
    sft_term: float | None = None
    ipo_term: float | None = None

    def to_row(self) -> dict:
        """CSV row, column names as written to trace files"""
        return {
            "step": self.step,
            "loss": self.loss_value,
            "win_rate": self.win_rate_vs_reference,
            "kl": self.kl_vs_reference,
            "mean_attribute": self.mean_attribute,
            "mean_h": self.mean_log_ratio_statistic,
            "sft_term": self.sft_term,
            "ipo_term": self.ipo_term,
        }


TRACE_COLUMNS = tuple(TraceRow(0, 0, 0, 0, None, 0).to_row())


@dataclass
class TrainTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError(
                f"Trace steps must increase, got {row.step} after {self.rows[-1].step}"
            )
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def column(self, name: str) -> list:
        return [row.to_row()[name] for row in self.rows]
