"""Initial profiles u0 with exact cell averages where they are available."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .expr import Expression

__all__ = ["Constant", "Indicator", "Bump", "ExprProfile", "make_profile"]

_SNAP = 1e-12


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    support = (-math.inf, math.inf)

    def __call__(self, x):
        return np.full(np.shape(x), self.value, dtype=float)

    def cell_average(self, left, eps):
        return np.full(np.shape(left), self.value, dtype=float)


@dataclass(frozen=True)
class Indicator:
    """``height`` on [lo, hi], zero elsewhere."""

    lo: float = 1 / 3
    hi: float = 2 / 3
    height: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ContractError("indicator needs lo < hi")

    @property
    def support(self):
        return (self.lo, self.hi)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), self.height, 0.0)

    def cell_average(self, left, eps):
        left = np.asarray(left, dtype=float)
        overlap = np.minimum(self.hi, left + eps) - np.maximum(self.lo, left)
        frac = np.clip(overlap / eps, 0.0, 1.0)
        frac = np.where(frac > 1 - _SNAP, 1.0, np.where(frac < _SNAP, 0.0, frac))
        return self.height * frac


@dataclass(frozen=True)
class Bump:
    """Smooth bump ``height * exp(1 - 1/(1 - r^2))`` with r = (x - centre)/half-width, supported in [lo, hi]."""

    lo: float = 1 / 3
    hi: float = 2 / 3
    height: float = 1.0

    @property
    def support(self):
        return (self.lo, self.hi)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = 0.5 * (self.lo + self.hi)
        w = 0.5 * (self.hi - self.lo)
        r2 = ((x - c) / w) ** 2
        inside = r2 < 1
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            val = self.height * np.exp(1.0 - 1.0 / (1.0 - r2))
        return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class ExprProfile:
    expr: str
    lo: float = -math.inf
    hi: float = math.inf

    @property
    def support(self):
        return (self.lo, self.hi)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        val = Expression(self.expr)(x)
        return np.where((x >= self.lo) & (x <= self.hi), val, 0.0)


def make_profile(kind: str = "constant", **params):
    kinds = {"constant": Constant, "indicator": Indicator, "bump": Bump, "expr": ExprProfile}
    if kind not in kinds:
        raise ContractError(f"unknown initial profile {kind!r}; choose from {sorted(kinds)}")
    try:
        return kinds[kind](**params)
    except TypeError as exc:
        raise ContractError(f"bad parameters for profile {kind!r}: {exc}") from None
