"""Dyadic level crossings, passage-time statistics and blowup estimates.

Crossing semantics used throughout:

* ``Up`` at level n is recorded the first time the statistic is strictly
  greater than ``2**n``, provided it started at or below ``2**n``;
* ``Down`` at level n is recorded the first time the statistic drops strictly
  below ``2**(n-4)`` after an ``Up`` at n.

Each level produces at most one ``Up`` and one ``Down``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, ExtrapolationRefused, ModelDomainError
from .model import ModelSpec, osgood_time

__all__ = [
    "Direction",
    "Statistic",
    "CrossingRecord",
    "CrossingLog",
    "CrossingTracker",
    "window_statistic",
    "detect_crossings",
    "theoretical_tn",
    "PassageRow",
    "PassageStats",
    "passage_time_stats",
    "blowup_time_estimate",
    "blowup_probability",
    "wilson_interval",
]

DOWN_OFFSET = 4


class Direction(enum.Enum):
    UP = "up"
    DOWN = "down"


class Statistic(enum.Enum):
    INF_OVER_WINDOW = "inf_window"
    SUP_OVER_DOMAIN = "sup_domain"

    @classmethod
    def parse(cls, value) -> "Statistic":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"infoverwindow": "inf_window", "inf": "inf_window", "supoverdomain": "sup_domain", "sup": "sup_domain"}
        key = aliases.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ContractError(f"unknown crossing statistic {value!r}")


@dataclass(frozen=True)
class CrossingRecord:
    level: int
    direction: Direction
    t: float
    statistic: Statistic


@dataclass
class CrossingLog:
    records: list = field(default_factory=list)
    window: tuple = (1 / 3, 2 / 3)
    statistic: Statistic = Statistic.INF_OVER_WINDOW

    def up_times(self) -> dict:
        return {r.level: r.t for r in self.records if r.direction is Direction.UP}

    def down_times(self) -> dict:
        return {r.level: r.t for r in self.records if r.direction is Direction.DOWN}


def _check_window(a: float):
    if not (0 < a < 0.5):
        raise ContractError(f"window parameter a must satisfy 0 < a < 1/2, got {a!r}")


def window_statistic(domain, values, a: float = 1 / 3, statistic=Statistic.INF_OVER_WINDOW) -> np.ndarray:
    """Inf over sites with position in [a, 1-a], or sup over all sites (last axis)."""
    statistic = Statistic.parse(statistic)
    values = np.asarray(values, dtype=float)
    if statistic is Statistic.SUP_OVER_DOMAIN:
        return values.max(axis=-1)
    _check_window(a)
    x = domain.positions
    mask = (x >= a - 1e-12) & (x <= 1 - a + 1e-12)
    if not mask.any():
        raise ContractError(f"window [{a:g}, {1 - a:g}] contains no lattice site")
    return values[..., mask].min(axis=-1)


class CrossingTracker:
    """Online crossing detection for a batch of replicas.

    Feed it the statistic of every replica after each step; it returns the new
    records and accumulates one :class:`CrossingLog` per replica.
    """

    def __init__(self, initial, levels: Sequence[int], statistic=Statistic.INF_OVER_WINDOW,
                 window=(1 / 3, 2 / 3)):
        initial = np.atleast_1d(np.asarray(initial, dtype=float))
        self.levels = np.asarray(sorted(levels), dtype=np.int64)
        self.thresh = np.ldexp(1.0, self.levels)
        self.down_thresh = np.ldexp(1.0, self.levels - DOWN_OFFSET)
        self.statistic = Statistic.parse(statistic)
        self.eligible = initial[:, None] <= self.thresh[None, :]
        self.up_done = ~self.eligible
        self.down_done = np.zeros_like(self.up_done)
        self.armed = np.zeros_like(self.up_done)
        self.logs = [CrossingLog([], tuple(window), self.statistic) for _ in range(initial.size)]

    def update(self, t: float, stat, rows=None) -> list:
        """Process statistics for ``rows`` (default all); return (row, record) pairs."""
        stat = np.asarray(stat, dtype=float)
        if rows is None:
            rows = np.arange(len(self.logs))
        rows = np.asarray(rows)
        if rows.size == 0:
            return []
        s = stat[:, None]
        up = ~self.up_done[rows] & (s > self.thresh[None, :])
        down = self.armed[rows] & ~self.down_done[rows] & (s < self.down_thresh[None, :])
        if not (up.any() or down.any()):
            return []
        out = []
        for k, r in enumerate(rows):
            for j in np.flatnonzero(up[k]):
                rec = CrossingRecord(int(self.levels[j]), Direction.UP, float(t), self.statistic)
                self.logs[r].records.append(rec)
                out.append((int(r), rec))
            for j in np.flatnonzero(down[k]):
                rec = CrossingRecord(int(self.levels[j]), Direction.DOWN, float(t), self.statistic)
                self.logs[r].records.append(rec)
                out.append((int(r), rec))
        self.up_done[rows] |= up
        self.armed[rows] |= up
        self.down_done[rows] |= down
        return out


def detect_crossings(times, stats_or_values, a: float = 1 / 3, statistic=Statistic.INF_OVER_WINDOW,
                     levels: Iterable[int] = range(-10, 64), domain=None) -> CrossingLog:
    """Scan a recorded trajectory of one replica for dyadic crossings.

    ``stats_or_values`` is either the statistic sequence itself (1-d) or the
    recorded fields (2-d, one row per time), in which case ``domain`` is
    needed to locate the window.
    """
    statistic = Statistic.parse(statistic)
    _check_window(a)
    data = np.asarray(stats_or_values, dtype=float)
    if data.ndim == 2:
        if domain is None:
            raise ContractError("domain is required to evaluate the window statistic")
        data = window_statistic(domain, data, a, statistic)
    times = np.asarray(times, dtype=float)
    if times.shape != data.shape:
        raise ContractError("times and statistics differ in length")
    if data.size == 0:
        return CrossingLog([], (a, 1 - a), statistic)
    tracker = CrossingTracker(data[:1], list(levels), statistic, (a, 1 - a))
    for t, s in zip(times[1:], data[1:]):
        tracker.update(t, np.array([s]))
    return tracker.logs[0]


def theoretical_tn(model: ModelSpec, n: int) -> float:
    """Passage-time scale ``2**(n+5) / b(2**(n-4))``."""
    bx = float(model.b(np.array(math.ldexp(1.0, n - 4))))
    if not bx > 0:
        raise ModelDomainError(f"{model.name}: b(2^{n - 4}) = {bx!r}")
    return math.ldexp(1.0, n + 5) / bx


@dataclass(frozen=True)
class PassageRow:
    n: int
    count: int
    median: float
    q25: float
    q75: float
    t_n: float
    ratio: float


@dataclass(frozen=True)
class PassageStats:
    rows: tuple
    slope: float
    reference_slope: float

    def as_dict(self) -> dict:
        return {r.n: r for r in self.rows}


def passage_time_stats(logs: Sequence[CrossingLog], model: ModelSpec, levels: Iterable[int] | None = None) -> PassageStats:
    """Per-level medians/quartiles of the level-n to level-(n+1) Up passage times.

    The slope is the least-squares slope of log2(median) against n; the
    reference slope is that of log2(2**n / b(2**n)) over the same levels.
    """
    per_level: dict[int, list] = {}
    for log in logs:
        ups = log.up_times()
        for n, t in ups.items():
            if n + 1 in ups:
                per_level.setdefault(n, []).append(ups[n + 1] - t)
    wanted = sorted(per_level) if levels is None else [n for n in levels if n in per_level]
    rows = []
    for n in wanted:
        d = np.asarray(per_level[n])
        q25, med, q75 = np.quantile(d, [0.25, 0.5, 0.75])
        try:
            tn = theoretical_tn(model, n)
        except ModelDomainError:
            tn = math.nan
        rows.append(PassageRow(n, int(d.size), float(med), float(q25), float(q75), tn, float(med) / tn))
    slope = ref = math.nan
    usable = [r for r in rows if r.median > 0]
    if len(usable) >= 2:
        ns = np.array([r.n for r in usable], dtype=float)
        slope = float(np.polyfit(ns, np.log2([r.median for r in usable]), 1)[0])
        bvals = model.b(np.ldexp(1.0, ns.astype(int)))
        ref = float(np.polyfit(ns, ns - np.log2(bvals), 1)[0])
    return PassageStats(tuple(rows), slope, ref)


def blowup_time_estimate(t_blow: float, model: ModelSpec, field_cap: float) -> tuple[float, float]:
    """``(tau_cap, tau_cap + T*(field_cap))`` where T* is the residual ODE time to infinity.

    ``t_blow`` is the recorded cap-hitting time of a blown-up replica (a
    trajectory's ``t_blow`` attribute or a number).
    """
    tau_cap = float(getattr(t_blow, "t_blow", t_blow))
    if not math.isfinite(tau_cap):
        raise ContractError("replica did not blow up")
    tail = osgood_time(model, field_cap)
    if not math.isfinite(tail):
        raise ExtrapolationRefused(
            f"{model.name}: Osgood tail diverges; a cap hit at t={tau_cap:g} is probably a numerical artifact"
        )
    return tau_cap, tau_cap + tail


Z95 = 1.959963984540054


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ContractError("need at least one trial")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the bounds at k = 0 and k = n are exactly 0 and 1; avoid rounding residue
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def blowup_probability(blow_times: Sequence[float], horizon: float) -> tuple[float, tuple[float, float]]:
    """Fraction of replicas whose blowup time is <= horizon, with a Wilson 95% interval.

    ``blow_times`` holds one entry per replica: the cap-hitting time, or
    ``nan`` / ``inf`` for replicas that did not blow up.
    """
    t = np.asarray(blow_times, dtype=float)
    if t.size == 0:
        raise ContractError("need at least one replica")
    k = int(np.sum(np.isfinite(t) & (t <= horizon)))
    return k / t.size, wilson_interval(k, t.size)
