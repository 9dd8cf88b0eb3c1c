"""Non-decreasing reward-quantile weights and their antiderivatives.

A tilt f on [0, 1] reweights the reference policy by the reward quantile of
each response. Best-of-n is the power tilt ``f(u) = n u^(n-1)``; the
win-rate-optimal policy at a given KL budget is the exponential tilt
``f(u) = e^(cu)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from typing_extensions import override

from core.enums.tilt_kind import TiltKind
from core.exceptions import InvalidTiltError


class TiltFunction(ABC):
    """Weight f with antiderivative F on [0, 1]"""

    kind: TiltKind

    @abstractmethod
    def f(self, u: np.ndarray | float) -> np.ndarray | float: ...

    @abstractmethod
    def F(self, u: np.ndarray | float) -> np.ndarray | float: ...  # noqa: N802

    @abstractmethod
    def f_prime(self, u: np.ndarray | float) -> np.ndarray | float: ...

    @property
    @abstractmethod
    def mass(self) -> float:
        """F(1) - F(0)"""

    @property
    @abstractmethod
    def max_f_prime(self) -> float:
        """Maximum of f' on [0, 1]"""

    @property
    @abstractmethod
    def parameter(self) -> float: ...

    @property
    @abstractmethod
    def is_identity(self) -> bool:
        """True when the tilt leaves the reference policy unchanged"""

    @property
    def f_at_one(self) -> float:
        return float(self.f(1.0))

    @property
    def slope_ratio(self) -> float:
        """max f' / mass, the factor in the KL gap bound"""
        return self.max_f_prime / self.mass

    @property
    def top_ratio(self) -> float:
        """f(1) / mass, the factor in the win-rate gap bound"""
        return self.f_at_one / self.mass

    @property
    def label(self) -> str:
        return f"{self.kind.value}({self.parameter:g})"

    @abstractmethod
    def normalized_increments(
        self, upper: np.ndarray, widths: np.ndarray
    ) -> np.ndarray:
        """(F(upper) - F(upper - widths)) / mass, evaluated without cancellation

        ``upper`` is the cumulative prefix p_{1:i}, ``widths`` the cell sizes p_i.
        """


@dataclass(frozen=True, slots=True)
class PowerTilt(TiltFunction):
    """f(u) = n u^(n-1), F(u) = u^n"""

    n: int
    kind: ClassVar[TiltKind] = TiltKind.POWER

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidTiltError(f"Power tilt needs an integer n >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @override
    def f(self, u):
        return self.n * np.power(u, self.n - 1)

    @override
    def F(self, u):  # noqa: N802
        return np.power(u, self.n)

    @override
    def f_prime(self, u):
        if self.n == 1:
            return np.zeros_like(np.asarray(u, dtype=np.float64))
        return self.n * (self.n - 1) * np.power(u, self.n - 2)

    @property
    @override
    def mass(self) -> float:
        return 1.0

    @property
    @override
    def max_f_prime(self) -> float:
        return float(self.n * (self.n - 1))

    @property
    @override
    def parameter(self) -> float:
        return float(self.n)

    @property
    @override
    def is_identity(self) -> bool:
        return self.n == 1

    @override
    def normalized_increments(self, upper, widths):
        if self.n == 1:
            return np.array(widths, dtype=np.float64, copy=True)
        return power_increments(upper, widths, self.n)


@dataclass(frozen=True, slots=True)
class ExponentialTilt(TiltFunction):
    """f(u) = e^(cu), F(u) = e^(cu)/c; c = 0 degenerates to f = 1, F(u) = u"""

    c: float
    kind: ClassVar[TiltKind] = TiltKind.EXPONENTIAL

    def __post_init__(self) -> None:
        c = float(self.c)
        if not math.isfinite(c) or c < 0:
            raise InvalidTiltError(f"Exponential tilt needs a finite c >= 0, got {self.c!r}")
        object.__setattr__(self, "c", c)

    @override
    def f(self, u):
        return np.exp(self.c * np.asarray(u, dtype=np.float64))

    @override
    def F(self, u):  # noqa: N802
        u = np.asarray(u, dtype=np.float64)
        if self.c == 0.0:
            return u
        return np.exp(self.c * u) / self.c

    @override
    def f_prime(self, u):
        return self.c * np.exp(self.c * np.asarray(u, dtype=np.float64))

    @property
    @override
    def mass(self) -> float:
        if self.c == 0.0:
            return 1.0
        return math.expm1(self.c) / self.c

    @property
    @override
    def max_f_prime(self) -> float:
        return self.c * math.exp(self.c)

    # e^c cancels between numerator and mass; both ratios stay finite for any c
    @property
    @override
    def slope_ratio(self) -> float:
        if self.c == 0.0:
            return 0.0
        return self.c**2 / -math.expm1(-self.c)

    @property
    @override
    def top_ratio(self) -> float:
        if self.c == 0.0:
            return 1.0
        return self.c / -math.expm1(-self.c)

    @property
    @override
    def parameter(self) -> float:
        return self.c

    @property
    @override
    def is_identity(self) -> bool:
        return self.c == 0.0

    @override
    def normalized_increments(self, upper, widths):
        widths = np.asarray(widths, dtype=np.float64)
        if self.c == 0.0:
            return widths.copy()
        # e^{c b}(1 - e^{-c p}) / (e^c - 1), scaled by e^{-c} top and bottom
        upper = np.asarray(upper, dtype=np.float64)
        return (
            np.exp(self.c * (upper - 1.0))
            * -np.expm1(-self.c * widths)
            / -math.expm1(-self.c)
        )


def power_increments(upper: np.ndarray, widths: np.ndarray, n: int) -> np.ndarray:
    """b^n - (b - p)^n for b = upper, p = widths.

    Written as b^n (1 - (1 - p/b)^n) with log1p/expm1 so adjacent prefixes of a
    large space do not cancel; exact enough for L = 1e5 at n = 8 and beyond.
    """
    upper = np.asarray(upper, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    ratio = np.clip(np.divide(widths, upper, out=np.ones_like(upper), where=upper > 0), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        shrink = -np.expm1(n * np.log1p(-ratio))
    return np.power(upper, n) * shrink


def log_power_increments(upper: np.ndarray, widths: np.ndarray, n: int) -> np.ndarray:
    """log(b^n - (b - p)^n), finite wherever p > 0 even when b^n underflows"""
    upper = np.asarray(upper, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    ratio = np.clip(np.divide(widths, upper, out=np.ones_like(upper), where=upper > 0), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        shrink = -np.expm1(n * np.log1p(-ratio))
        return n * np.log(upper) + np.log(shrink)


def tilt_from_parameter(kind: TiltKind | str, parameter: float) -> TiltFunction:
    """Build a tilt from its family name and scalar parameter"""
    kind = TiltKind(kind)
    if kind is TiltKind.POWER:
        return PowerTilt(parameter)  # type: ignore[arg-type]
    return ExponentialTilt(parameter)
