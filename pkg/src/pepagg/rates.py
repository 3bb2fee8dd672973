"""Apparent rates with passive arithmetic.

A passive apparent rate ``w*T`` carries an integer weight; an active one a
nonnegative real. Zero of either kind means "not enabled".
"""

from __future__ import annotations

import dataclasses

from .syntax import ModelError, RateExpr


@dataclasses.dataclass(frozen=True)
class ApparentRate:
    passive: bool
    value: float  # rate if active, total weight if passive

    @classmethod
    def zero(cls) -> "ApparentRate":
        return cls(False, 0.0)

    @classmethod
    def of(cls, rate: RateExpr) -> "ApparentRate":
        return cls(rate.passive, rate.weight if rate.passive else rate.value)

    @property
    def is_zero(self) -> bool:
        return self.value == 0

    def __add__(self, other: "ApparentRate") -> "ApparentRate":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.passive != other.passive:
            raise ModelError("apparent rate mixes active and passive offers")
        return ApparentRate(self.passive, self.value + other.value)

    def scale(self, k) -> "ApparentRate":
        if k == 0:
            return ApparentRate(self.passive, 0) if self.passive else ApparentRate.zero()
        return ApparentRate(self.passive, k * self.value)

    def __rmul__(self, k) -> "ApparentRate":
        return self.scale(k)

    def min(self, other: "ApparentRate") -> "ApparentRate":
        """Cooperation minimum; an unbounded passive offer yields to an active one."""
        if self.is_zero or other.is_zero:
            return ApparentRate.zero()
        if self.passive and other.passive:
            return ApparentRate(True, min(self.value, other.value))
        if self.passive:
            return other
        if other.passive:
            return self
        return ApparentRate(False, min(self.value, other.value))

    def ratio(self, total: "ApparentRate") -> float:
        """Share of ``total`` carried by this offer (both of the same kind)."""
        if total.is_zero:
            return 0.0
        if self.passive != total.passive and not self.is_zero:
            raise ModelError("ratio of an offer to a total of a different kind")
        return self.value / total.value

    def __str__(self) -> str:
        if self.passive:
            return f"{self.value:g}*T"
        return f"{self.value:g}"
