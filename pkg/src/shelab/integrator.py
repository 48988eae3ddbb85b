"""Explicit time steppers for the lattice system and the truncated-drift family.

The Euler-Maruyama step is::

    U <- U + dt * (Lap U + b(min(U, J))) + sigma(U) * eps**-0.5 * dB

followed by the boundary rule, the negativity policy and the blowup check.
The alternating (splitting) scheme instead evolves every site as a scalar
SDE over one splitting interval and then mixes with the heat kernel of that
interval.

All steppers work on a batch of replicas (rows).  Each row carries the
replica id used to key its noise, so rows with the same id see the same
increments; this is how the truncated family and the coupled comparisons
share noise.  Work on one row never depends on other rows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_legendre

from .blowup import CrossingTracker, Statistic, window_statistic
from .errors import ContractError
from .lattice import Boundary, KernelMatrix, LatticeDomain, discrete_laplacian_apply, kernel_matrix
from .model import ModelSpec
from .noise import IncrementProvider, NoiseSource, provider_for

__all__ = [
    "Scheme",
    "NegativityPolicy",
    "Status",
    "SolverConfig",
    "Diagnostics",
    "FieldState",
    "Trajectory",
    "BatchEngine",
    "initial_profile",
    "euler_step",
    "alternating_step",
    "run",
    "run_truncated_family",
    "TruncatedFamilyResult",
]

DEFAULT_FIELD_CAP = 2.0**30


class Scheme(enum.Enum):
    EULER = "euler"
    ALTERNATING = "alternating"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        key = {"eulermaruyama": "euler", "euler_maruyama": "euler", "splitting": "alternating"}.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ContractError(f"unknown scheme {value!r}")


class NegativityPolicy(enum.Enum):
    CLAMP = "clamp"
    ALLOW = "allow"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        key = {"clamptozero": "clamp", "clamp_to_zero": "clamp"}.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ContractError(f"unknown negativity policy {value!r}")


class Status(enum.Enum):
    RUNNING = "running"
    BLOWN_UP = "blown_up"
    FINISHED = "finished"


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters.

    ``record_every`` is the number of steps between periodic snapshots (0
    records only the initial and final states).  ``splitting_interval`` is
    the alternating scheme's 1/n; it defaults to ``8 * dt``.  Crossing
    tracking is enabled by giving ``crossing_levels``.
    """

    dt: float
    t_end: float
    scheme: Scheme = Scheme.EULER
    drift_cap_J: float | None = None
    field_cap: float = DEFAULT_FIELD_CAP
    negativity_policy: NegativityPolicy = NegativityPolicy.CLAMP
    record_every: int = 0
    splitting_interval: float | None = None
    crossing_levels: tuple | None = None
    crossing_window_a: float = 1 / 3
    crossing_statistic: Statistic = Statistic.INF_OVER_WINDOW

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "negativity_policy", NegativityPolicy.parse(self.negativity_policy))
        object.__setattr__(self, "crossing_statistic", Statistic.parse(self.crossing_statistic))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ContractError("dt must be positive")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ContractError("t_end must be >= 0")
        if self.drift_cap_J is not None and not self.drift_cap_J > 0:
            raise ContractError("drift_cap_J must be positive")
        if not self.field_cap > 0:
            raise ContractError("field_cap must be positive")
        if self.record_every < 0:
            raise ContractError("record_every must be >= 0")
        if self.crossing_levels is not None:
            levels = tuple(int(n) for n in self.crossing_levels)
            object.__setattr__(self, "crossing_levels", levels)
            if levels and math.ldexp(1.0, max(levels)) >= self.field_cap:
                raise ContractError("field_cap must exceed every dyadic detection level")
        if self.scheme is Scheme.ALTERNATING and self.splitting_interval is None:
            object.__setattr__(self, "splitting_interval", 8.0 * self.dt)

    @property
    def n_steps(self) -> int:
        """Number of dt steps needed to reach t_end."""
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def substeps(self) -> int:
        """dt steps per splitting interval (alternating scheme)."""
        m = self.splitting_interval / self.dt
        return int(round(m))

    def validate(self, domain: LatticeDomain) -> None:
        """Check the stability bound and the splitting alignment for ``domain``."""
        bound = 0.5 * domain.epsilon**2
        if self.dt > bound * (1 + 1e-12):
            raise ContractError(f"dt={self.dt!r} exceeds the stability bound eps^2/2={bound!r}")
        if self.scheme is Scheme.ALTERNATING:
            m = self.splitting_interval / self.dt
            if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
                raise ContractError("splitting_interval must be an integer multiple of dt")
            nint = self.t_end / self.splitting_interval
            if abs(nint - round(nint)) > 1e-9 * max(1.0, nint):
                raise ContractError("t_end must be an integer multiple of splitting_interval")


@dataclass
class Diagnostics:
    clamp_count: int = 0
    clamp_mass: float = 0.0
    boundary_leak: float = 0.0
    sup_value: float = 0.0


@dataclass
class FieldState:
    """One replica's lattice field and bookkeeping."""

    t: float
    values: np.ndarray
    status: Status = Status.RUNNING
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    step: int = 0
    replica: int = 0
    t_blow: float = math.nan
    blow_site: int = -1
    overflow: bool = False
    last_level: int | None = None


# --------------------------------------------------------------------------
# initial data


_GL_NODES, _GL_WEIGHTS = roots_legendre(8)


def initial_profile(u0, domain: LatticeDomain) -> np.ndarray:
    """Cell averages (1/eps) * integral of u0 over [x, x + eps) by 8-point Gauss-Legendre.

    Profiles that provide ``cell_average(left, eps)`` (constants, indicators)
    are averaged exactly instead.  ``u0`` may also be an array of site
    values, which is returned as is.
    Absorbing end sites are set to zero.
    """
    if not callable(u0):
        vals = domain.check_field(np.array(u0, dtype=float))
    elif hasattr(u0, "cell_average"):
        vals = np.asarray(u0.cell_average(domain.positions, domain.epsilon), dtype=float)
    else:
        x = domain.positions
        eps = domain.epsilon
        nodes = x[:, None] + 0.5 * eps * (_GL_NODES[None, :] + 1.0)
        vals = np.asarray(u0(nodes), dtype=float)
        if vals.shape != nodes.shape:
            vals = np.broadcast_to(vals, nodes.shape)
        vals = 0.5 * (vals @ _GL_WEIGHTS)
    if domain.boundary.absorbing:
        vals = vals.copy()
        vals[..., 0] = 0.0
        vals[..., -1] = 0.0
    return vals


# --------------------------------------------------------------------------
# batch engine


class BatchEngine:
    """Advance a batch of rows on one domain with shared stepping rules.

    Parameters
    ----------
    rows_replica : replica id per row (keys the noise).
    drift_caps : optional drift cap per row (overrides ``cfg.drift_cap_J``).
    """

    def __init__(self, domain: LatticeDomain, model: ModelSpec, noise, cfg: SolverConfig, u0,
                 rows_replica: Sequence[int] = (0,), drift_caps=None, kernel: KernelMatrix | None = None):
        cfg.validate(domain)
        self.domain = domain
        self.model = model
        self.cfg = cfg
        if isinstance(noise, NoiseSource):
            noise = provider_for(noise, domain, cfg.dt)
        elif isinstance(noise, IncrementProvider):
            if noise.n_sites is None:
                noise = noise.on(domain)
            if not math.isclose(noise.dt, cfg.dt, rel_tol=1e-12):
                raise ContractError(f"provider step {noise.dt!r} != solver dt {cfg.dt!r}")
            if noise.n_sites != domain.n_sites:
                raise ContractError("provider is bound to a different domain")
        self.noise = noise
        self.rows_replica = np.asarray(rows_replica, dtype=np.int64)
        R = self.rows_replica.size
        self.unique_reps, self.row_to_unique = np.unique(self.rows_replica, return_inverse=True)
        u = initial_profile(u0, domain)
        self.U = np.array(np.broadcast_to(u, (R, domain.n_sites)), dtype=float)
        if drift_caps is None:
            self.J = None if cfg.drift_cap_J is None else float(cfg.drift_cap_J)
        else:
            self.J = np.asarray(drift_caps, dtype=float).reshape(R, 1)
        self.alive = np.ones(R, dtype=bool)
        self.t_blow = np.full(R, math.nan)
        self.blow_site = np.full(R, -1, dtype=np.int64)
        self.overflow = np.zeros(R, dtype=bool)
        self.clamp_count = np.zeros(R, dtype=np.int64)
        self.clamp_mass = np.zeros(R)
        self.leak = np.zeros(R)
        self.sup = self.U.max(axis=1)
        self.step_index = 0
        self.n_steps = cfg.n_steps
        self.inv_sqrt_eps = 1.0 / math.sqrt(domain.epsilon)
        self._noise_buf = None
        self._noise_start = 0
        self._chunk = max(1, min(256, int(4e6 // max(1, self.unique_reps.size * domain.n_sites))))
        self.kernel = None
        if cfg.scheme is Scheme.ALTERNATING:
            self.kernel = kernel if kernel is not None else kernel_matrix(cfg.splitting_interval, domain)
            if not (self.kernel.time == 0.0 or math.isclose(self.kernel.time, cfg.splitting_interval, rel_tol=1e-12)):
                raise ContractError("kernel time must equal the splitting interval")
        self.tracker = None
        if cfg.crossing_levels:
            self.tracker = CrossingTracker(self.statistic(), cfg.crossing_levels, cfg.crossing_statistic,
                                           (cfg.crossing_window_a, 1 - cfg.crossing_window_a))

    # -- helpers ----------------------------------------------------------

    @property
    def t(self) -> float:
        return self.step_index * self.cfg.dt

    @property
    def done(self) -> bool:
        return self.step_index >= self.n_steps or not self.alive.any()

    def statistic(self, values=None) -> np.ndarray:
        cfg = self.cfg
        return window_statistic(self.domain, self.U if values is None else values,
                                cfg.crossing_window_a, cfg.crossing_statistic)

    def _increments(self, step: int) -> np.ndarray:
        """dB for every row at dt-step ``step`` (rows with equal replica ids share values)."""
        buf = self._noise_buf
        if buf is None or not (self._noise_start <= step < self._noise_start + buf.shape[0]):
            n = min(self._chunk, max(1, self.n_steps - step))
            self._noise_buf = buf = self.noise.block(step, n, self.unique_reps)
            self._noise_start = step
        block = buf[step - self._noise_start]
        if self.unique_reps.size == self.rows_replica.size and np.array_equal(self.unique_reps, self.rows_replica):
            return block
        return block[self.row_to_unique]

    def _rows(self):
        if self.alive.all():
            return slice(None), None
        idx = np.flatnonzero(self.alive)
        return idx, idx

    def _drift_arg(self, U, idx):
        if self.J is None:
            return U
        J = self.J if np.isscalar(self.J) or idx is None else self.J[idx]
        return np.minimum(U, J)

    def _post(self, new, idx, sel, t_new):
        """Negativity policy, cap check and freezing for the updated rows."""
        dom = self.domain
        if self.cfg.negativity_policy is NegativityPolicy.CLAMP:
            neg = new < 0
            if neg.any():
                rows_hit = neg.any(axis=1)
                self.clamp_count[sel] += neg.sum(axis=1)
                self.clamp_mass[sel] += dom.epsilon * np.where(neg, -new, 0.0).sum(axis=1)
                new[rows_hit] = np.maximum(new[rows_hit], 0.0)
        finite = np.isfinite(new)
        bad = ~finite | (new >= self.cfg.field_cap)
        hit = bad.any(axis=1)
        old = self.U[sel]
        if hit.any():
            ids = idx if idx is not None else np.arange(self.U.shape[0])
            for k in np.flatnonzero(hit):
                r = ids[k]
                self.alive[r] = False
                self.t_blow[r] = t_new
                self.blow_site[r] = int(np.argmax(bad[k]))
                if not finite[k].all():
                    self.overflow[r] = True
                    new[k] = old[k]
        if idx is None:
            self.U = new
        else:
            self.U[idx] = new
        self.sup[sel] = np.maximum(self.sup[sel], np.where(finite, new, -np.inf).max(axis=1))

    # -- steps ------------------------------------------------------------

    def _euler_once(self, laplacian: bool):
        cfg, dom, model = self.cfg, self.domain, self.model
        sel, idx = self._rows()
        U = self.U[sel]
        dB = self._increments(self.step_index)
        if idx is not None:
            dB = dB[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            drift = model.drift(self._drift_arg(U, idx))
            if laplacian:
                drift = discrete_laplacian_apply(dom, U) + drift
            new = U + cfg.dt * drift
            if not model.sigma_is_zero:
                new = new + model.diffusion(U) * self.inv_sqrt_eps * dB
        if dom.boundary.absorbing:
            if laplacian:
                self.leak[sel] += cfg.dt * 0.5 / dom.epsilon * (U[:, 1] + U[:, -2])
            new[:, 0] = 0.0
            new[:, -1] = 0.0
        self.step_index += 1
        self._post(new, idx, sel, self.t)

    def step(self):
        """One dt step (Euler) or one splitting interval (alternating); returns new crossing records."""
        if self.done:
            return []
        was_alive = self.alive.copy()
        if self.cfg.scheme is Scheme.EULER:
            self._euler_once(laplacian=True)
        else:
            for _ in range(self.cfg.substeps):
                if not self.alive.any():
                    break
                self._euler_once(laplacian=False)
                if self.tracker is not None:
                    self._track(was_alive)
                    was_alive = self.alive.copy()
            sel, idx = self._rows()
            if self.alive.any():
                before = self.U[sel]
                mixed = self.kernel.apply(before)
                if self.domain.boundary.absorbing:
                    self.leak[sel] += self.domain.epsilon * (before.sum(axis=1) - mixed.sum(axis=1))
                self._post(mixed, idx, sel, self.t)
        return self._track(was_alive) if self.tracker is not None else []

    def _track(self, was_alive):
        rows = np.flatnonzero(was_alive)
        if rows.size == 0:
            return []
        return self.tracker.update(self.t, self.statistic(self.U[rows]), rows)

    # -- views ------------------------------------------------------------

    def field_state(self, row: int) -> FieldState:
        if not self.alive[row]:
            status = Status.BLOWN_UP
        elif self.step_index >= self.n_steps:
            status = Status.FINISHED
        else:
            status = Status.RUNNING
        last = None
        if status is Status.BLOWN_UP:
            sup = float(np.max(self.U[row]))
            last = int(math.floor(math.log2(sup))) if sup >= 1 else None
        return FieldState(
            t=self.t if self.alive[row] else float(self.t_blow[row]),
            values=self.U[row].copy(),
            status=status,
            diagnostics=Diagnostics(int(self.clamp_count[row]), float(self.clamp_mass[row]),
                                    float(self.leak[row]), float(self.sup[row])),
            step=self.step_index,
            replica=int(self.rows_replica[row]),
            t_blow=float(self.t_blow[row]),
            blow_site=int(self.blow_site[row]),
            overflow=bool(self.overflow[row]),
            last_level=last,
        )


# --------------------------------------------------------------------------
# single-state steppers


def _engine_from_state(state: FieldState, domain, model, noise, cfg, kernel=None) -> BatchEngine:
    if state.status is not Status.RUNNING:
        raise ContractError("state is not running")
    eng = BatchEngine(domain, model, noise, cfg, state.values, [state.replica], kernel=kernel)
    eng.step_index = state.step
    eng.n_steps = max(eng.n_steps, state.step + (cfg.substeps if cfg.scheme is Scheme.ALTERNATING else 1))
    d = state.diagnostics
    eng.clamp_count[0], eng.clamp_mass[0], eng.leak[0] = d.clamp_count, d.clamp_mass, d.boundary_leak
    eng.sup[0] = max(d.sup_value, float(np.max(state.values)))
    return eng


def euler_step(state: FieldState, domain: LatticeDomain, model: ModelSpec, noise, cfg: SolverConfig) -> FieldState:
    """Advance one replica by one Euler-Maruyama step of size ``cfg.dt``."""
    if cfg.scheme is not Scheme.EULER:
        cfg = replace(cfg, scheme=Scheme.EULER)
    eng = _engine_from_state(state, domain, model, noise, cfg)
    eng.step()
    out = eng.field_state(0)
    if out.status is Status.FINISHED:
        out.status = Status.RUNNING
    return out


def alternating_step(state: FieldState, domain: LatticeDomain, model: ModelSpec, noise,
                     kernel: KernelMatrix, cfg: SolverConfig) -> FieldState:
    """Advance one replica by one splitting interval: per-site SDE substeps, then kernel mixing.

    ``kernel.time`` must equal ``cfg.splitting_interval``; a time-zero kernel
    (the identity) is accepted as the degenerate case.
    """
    if cfg.scheme is not Scheme.ALTERNATING:
        cfg = replace(cfg, scheme=Scheme.ALTERNATING)
    eng = _engine_from_state(state, domain, model, noise, cfg, kernel=kernel)
    eng.step()
    out = eng.field_state(0)
    if out.status is Status.FINISHED:
        out.status = Status.RUNNING
    return out


# --------------------------------------------------------------------------
# full runs


@dataclass
class Trajectory:
    """Recorded run of a batch of replicas on one domain.

    ``times``/``values`` hold the periodic snapshots (shape ``(K,)`` and
    ``(K, R, N)``); ``events`` lists ``(row, record, values)`` for every
    crossing, with the row's field at that moment.
    """

    domain: LatticeDomain
    replicas: np.ndarray
    times: np.ndarray
    values: np.ndarray
    events: list
    crossing_logs: list | None
    final: list

    @property
    def t_blow(self) -> np.ndarray:
        return np.array([s.t_blow for s in self.final])

    @property
    def statuses(self) -> list:
        return [s.status for s in self.final]

    def for_replica(self, row: int) -> "Trajectory":
        return Trajectory(
            self.domain, self.replicas[row:row + 1], self.times, self.values[:, row:row + 1],
            [e for e in self.events if e[0] == row],
            None if self.crossing_logs is None else [self.crossing_logs[row]],
            [self.final[row]],
        )


def drive(engine: BatchEngine, record_every: int = 0, keep_event_fields: bool = True,
          on_step: Callable | None = None) -> Trajectory:
    """Step an engine to completion, recording snapshots and crossing events."""
    times = [engine.t]
    snaps = [engine.U.copy()]
    events = []
    per_step = engine.cfg.substeps if engine.cfg.scheme is Scheme.ALTERNATING else 1
    last_rec = 0
    while not engine.done:
        recs = engine.step()
        for row, rec in recs:
            events.append((row, rec, engine.U[row].copy() if keep_event_fields else None))
        if on_step is not None:
            on_step(engine)
        if record_every and engine.step_index - last_rec >= record_every * per_step:
            last_rec = engine.step_index
            times.append(engine.t)
            snaps.append(engine.U.copy())
    if times[-1] != engine.t:
        times.append(engine.t)
        snaps.append(engine.U.copy())
    return Trajectory(
        engine.domain, engine.rows_replica.copy(), np.array(times), np.array(snaps), events,
        None if engine.tracker is None else engine.tracker.logs,
        [engine.field_state(r) for r in range(engine.U.shape[0])],
    )


def run(domain: LatticeDomain, model: ModelSpec, noise, cfg: SolverConfig, u0,
        replicas: Sequence[int] | None = None, keep_event_fields: bool = True) -> Trajectory:
    """Step every replica until ``t_end`` or blowup.

    ``noise`` is a :class:`NoiseSource` (bound to the domain automatically) or
    an :class:`IncrementProvider`.  The result is a pure function of the
    seed, the configuration and the replica ids.
    """
    if replicas is None:
        replicas = [noise.replica_id if isinstance(noise, NoiseSource) else noise.source.replica_id]
    eng = BatchEngine(domain, model, noise, cfg, u0, replicas)
    return drive(eng, cfg.record_every, keep_event_fields)


@dataclass
class TruncatedFamilyResult:
    J_list: tuple
    trajectories: list
    violation: np.ndarray  # (len(J) - 1, R): max over sites/times of U^(J_k) - U^(J_{k+1})
    blown: np.ndarray  # (len(J), R) bool


def run_truncated_family(domain: LatticeDomain, model: ModelSpec, noise, cfg: SolverConfig, u0,
                         J_list: Sequence[float], replicas: Sequence[int] | None = None) -> TruncatedFamilyResult:
    """Run the drift-capped solutions for every J in lockstep on shared noise.

    The violation diagnostic for consecutive caps is tracked at every step
    while both members are running; it is <= 0 exactly when the pathwise
    ordering held.
    """
    J = [float(j) for j in J_list]
    if any(b <= a for a, b in zip(J, J[1:])):
        raise ContractError("J_list must be strictly ascending")
    if replicas is None:
        replicas = [noise.replica_id if isinstance(noise, NoiseSource) else noise.source.replica_id]
    reps = np.asarray(replicas, dtype=np.int64)
    R, nJ = reps.size, len(J)
    rows = np.tile(reps, nJ)
    caps = np.repeat(J, R)
    eng = BatchEngine(domain, model, noise, cfg, u0, rows, drift_caps=caps)
    viol = np.full((nJ - 1, R), -np.inf)

    def check(e):
        U = e.U.reshape(nJ, R, -1)
        alive = e.alive.reshape(nJ, R)
        both = alive[:-1] & alive[1:]
        d = (U[:-1] - U[1:]).max(axis=2)
        np.maximum(viol, np.where(both, d, -np.inf), out=viol)

    check(eng)
    traj = drive(eng, cfg.record_every, on_step=check)
    trajs = []
    for k in range(nJ):
        sl = slice(k * R, (k + 1) * R)
        trajs.append(Trajectory(
            domain, reps.copy(), traj.times, traj.values[:, sl],
            [(r - k * R, rec, v) for r, rec, v in traj.events if k * R <= r < (k + 1) * R],
            None if traj.crossing_logs is None else traj.crossing_logs[sl],
            traj.final[sl],
        ))
    blown = np.array([[s.status is Status.BLOWN_UP for s in t.final] for t in trajs])
    return TruncatedFamilyResult(tuple(J), trajs, viol, blown)
