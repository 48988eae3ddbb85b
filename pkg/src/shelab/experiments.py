"""Monte Carlo experiment drivers built on the lattice engine.

Every experiment is split into a per-chunk worker (a pure function of the
config data and a list of replica ids) and a summariser that reduces the
per-replica rows.  :func:`mc_drive` cuts the replica range into chunks of
fixed size, so the work done for each replica, and therefore every number in
the report, is the same whatever the number of worker processes.

Comparison experiments report raw violation statistics.  Acceptance
thresholds belong to the test suite.
"""

from __future__ import annotations

import concurrent.futures as cf
import math
import multiprocessing
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from .blowup import (
    CrossingLog,
    CrossingRecord,
    Direction,
    blowup_probability,
    blowup_time_estimate,
    passage_time_stats,
)
from .config import RunConfig
from .errors import ContractError, ExtrapolationRefused
from .integrator import BatchEngine, Scheme, Status, drive, run_truncated_family
from .lattice import Boundary, LatticeDomain
from .model import osgood_time
from .noise import NoiseSource, provider_for
from .profiles import Constant, Indicator

__all__ = [
    "ExperimentReport",
    "mc_drive",
    "run_experiment",
    "compare_line_vs_dirichlet",
    "compare_boundary_conditions",
    "j_monotonicity",
    "epsilon_convergence",
    "deterministic_limit",
    "passage",
    "blowup_probability_study",
    "simulate",
    "ROUNDING_TOL",
]

# Differences smaller than this (relative to the field size) are rounding,
# not ordering violations.
ROUNDING_TOL = 1e-12


@dataclass
class ExperimentReport:
    """Reduced result of one experiment.

    ``per_replica`` holds one flat dict per replica, sorted by replica id;
    keys starting with an underscore carry bulky detail (trajectories,
    per-site arrays) and are not written to the replica table.
    """

    name: str
    config_digest: str
    seed: int
    per_replica: list
    summary: dict
    max_violation: float = 0.0
    violating_fraction: float = 0.0
    runtime: float = 0.0
    missing_replicas: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    valid: bool = True

    def content(self) -> dict:
        """Everything except the runtime (the part that must be reproducible)."""
        return {
            "name": self.name,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "per_replica": [{k: v for k, v in r.items() if not k.startswith("_")} for r in self.per_replica],
            "summary": self.summary,
            "max_violation": self.max_violation,
            "violating_fraction": self.violating_fraction,
            "missing_replicas": self.missing_replicas,
            "flags": self.flags,
            "valid": self.valid,
        }


def _median(values) -> float:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    return float(np.median(v)) if v.size else math.nan


def _nonincreasing(seq) -> bool:
    return all(b <= a for a, b in zip(seq, seq[1:]))


# --------------------------------------------------------------------------
# coupled comparisons


def _require_support_in_unit(profile):
    lo, hi = getattr(profile, "support", (-math.inf, math.inf))
    if lo < -1e-12 or hi > 1 + 1e-12:
        raise ContractError(
            f"hypothesis violated: the line comparison needs an initial profile supported in [0, 1], "
            f"got support [{lo}, {hi}]"
        )


def _coupled_run(dom_u: LatticeDomain, dom_v: LatticeDomain, model, src: NoiseSource, cfg, u0, v0, reps):
    """Step u and v in lockstep on shared noise and track min(u - v) on their common sites.

    Returns per-replica arrays: worst difference, violating site-time count,
    compared site-time count, the leak of u and the clamp mass of both.
    """
    lo = max(dom_u.origin_index, dom_v.origin_index)
    hi = min(dom_u.end_index, dom_v.end_index)
    if dom_v.boundary.absorbing:
        # pinned end sites of v are zero; u >= 0 there trivially
        lo, hi = max(lo, dom_v.origin_index + 1), min(hi, dom_v.end_index - 1)
    if dom_u.boundary.absorbing:
        lo, hi = max(lo, dom_u.origin_index + 1), min(hi, dom_u.end_index - 1)
    gu = np.arange(lo, hi + 1) - dom_u.origin_index
    gv = np.arange(lo, hi + 1) - dom_v.origin_index
    eu = BatchEngine(dom_u, model, provider_for(src, dom_u, cfg.dt), cfg, u0, reps)
    ev = BatchEngine(dom_v, model, provider_for(src, dom_v, cfg.dt), cfg, v0, reps)
    R = len(reps)
    worst = np.full(R, np.inf)
    nviol = np.zeros(R, dtype=np.int64)
    ntot = np.zeros(R, dtype=np.int64)

    def compare():
        both = eu.alive & ev.alive
        if not both.any():
            return
        U = eu.U[both][:, gu]
        V = ev.U[both][:, gv]
        d = U - V
        tol = ROUNDING_TOL * np.maximum(1.0, np.maximum(np.abs(U), np.abs(V)))
        worst[both] = np.minimum(worst[both], d.min(axis=1))
        nviol[both] += (d < -tol).sum(axis=1)
        ntot[both] += d.shape[1]

    compare()
    while not (eu.done and ev.done):
        eu.step()
        ev.step()
        compare()
    return {
        "worst": worst,
        "nviol": nviol,
        "ntot": ntot,
        "leak_u": eu.leak.copy(),
        "clamp_u": eu.clamp_mass.copy(),
        "clamp_v": ev.clamp_mass.copy(),
        "blown_u": ~eu.alive,
        "blown_v": ~ev.alive,
    }


def _comparison_chunk(rc: RunConfig, reps, kind: str) -> list:
    model = rc.model()
    prof = rc.profile()
    x = rc.experiment
    eps = rc.data["domain"]["epsilon"]
    dom_v = LatticeDomain.unit_interval(eps, Boundary.DIRICHLET)
    if kind == "line":
        _require_support_in_unit(prof)
        dom_u = LatticeDomain.truncated_line(eps, rc.half_width())
    else:
        dom_u = LatticeDomain.unit_interval(eps, x["other_boundary"])
    scale_v = x["v_initial_scale"] if kind == "line" else 1.0
    v0 = _scaled_profile(prof, dom_v, scale_v)
    dts = rc.dt_sweep()
    src = rc.noise_source(eps, min(dts))
    rows = [{"replica": r} for r in reps]
    for k, dt in enumerate(dts):
        cfg = rc.solver(dt=dt, crossing_levels=None, record_every=0)
        res = _coupled_run(dom_u, dom_v, model, src, cfg, prof, v0, list(reps))
        for i, row in enumerate(rows):
            row[f"worst_{k}"] = float(res["worst"][i])
            row[f"violation_{k}"] = float(max(0.0, -res["worst"][i]))
            row[f"violating_{k}"] = int(res["nviol"][i])
            row[f"compared_{k}"] = int(res["ntot"][i])
            row[f"leak_{k}"] = float(res["leak_u"][i])
            row[f"clamp_u_{k}"] = float(res["clamp_u"][i])
            row[f"clamp_v_{k}"] = float(res["clamp_v"][i])
            row[f"blown_{k}"] = int(bool(res["blown_u"][i]) or bool(res["blown_v"][i]))
    return rows


def _scaled_profile(prof, domain, scale):
    from .integrator import initial_profile

    if scale == 1.0:
        return prof
    return scale * initial_profile(prof, domain)


def _comparison_summary(rc: RunConfig, rows, kind: str):
    dts = rc.dt_sweep()
    summary = {"dt": dts}
    med, frac, mx, leak = [], [], [], []
    for k in range(len(dts)):
        med.append(_median([r[f"violation_{k}"] for r in rows]))
        nv = sum(r[f"violating_{k}"] for r in rows)
        nt = sum(r[f"compared_{k}"] for r in rows)
        frac.append(nv / nt if nt else 0.0)
        mx.append(max((r[f"violation_{k}"] for r in rows), default=0.0))
        leak.append(max((r[f"leak_{k}"] for r in rows), default=0.0))
    summary.update(median_violation=med, violating_fraction=frac, max_violation=mx, max_leak=leak)
    flags = []
    valid = True
    if kind == "line":
        thr = rc.experiment["leak_threshold"]
        if max(leak, default=0.0) > thr:
            flags.append("truncation-leak")
            valid = False
        if rc.experiment["v_initial_scale"] > 1.0:
            flags.append("hypothesis-violated")
    if not _nonincreasing(med):
        flags.append("violation-not-decreasing")
    summary["ordering_claim"] = "hypothesis-violated" not in flags
    return summary, max(mx, default=0.0), frac[-1] if frac else 0.0, flags, valid


# --------------------------------------------------------------------------
# truncated family


def _jmono_chunk(rc: RunConfig, reps) -> list:
    model = rc.model()
    prof = rc.profile()
    dom = rc.domain()
    J = rc.experiment["J_list"]
    dts = rc.dt_sweep()
    src = rc.noise_source(dom.epsilon, min(dts))
    rows = [{"replica": r} for r in reps]
    for k, dt in enumerate(dts):
        cfg = rc.solver(dt=dt, crossing_levels=None, record_every=0, drift_cap_J=None)
        res = run_truncated_family(dom, model, provider_for(src, dom, dt), cfg, prof, J, list(reps))
        for i, row in enumerate(rows):
            v = res.violation[:, i]
            v = v[np.isfinite(v)]
            row[f"violation_{k}"] = float(max(0.0, v.max())) if v.size else 0.0
            for j, cap in enumerate(J):
                row[f"blown_J{j}_{k}"] = int(res.blown[j, i])
    return rows


def _jmono_summary(rc: RunConfig, rows):
    dts = rc.dt_sweep()
    J = rc.experiment["J_list"]
    med = [_median([r[f"violation_{k}"] for r in rows]) for k in range(len(dts))]
    mx = max((r[f"violation_{k}"] for r in rows for k in range(len(dts))), default=0.0)
    k = len(dts) - 1
    n = len(rows)
    frac = [sum(r[f"blown_J{j}_{k}"] for r in rows) / n if n else math.nan for j in range(len(J))]
    viol_frac = sum(1 for r in rows if r[f"violation_{k}"] > 0) / n if n else 0.0
    flags = []
    if not _nonincreasing(med):
        flags.append("violation-not-decreasing")
    if not all(b >= a for a, b in zip(frac, frac[1:])):
        flags.append("blowup-fraction-not-monotone")
    summary = {"dt": dts, "J": J, "median_violation": med, "blowup_fraction": frac}
    return summary, mx, viol_frac, flags, True


# --------------------------------------------------------------------------
# lattice refinement


def _eps_list(rc: RunConfig) -> list:
    eps = rc.experiment["epsilon_list"] or [rc.data["domain"]["epsilon"]]
    return sorted(eps, reverse=True)


def _epsconv_chunk(rc: RunConfig, reps) -> list:
    model = rc.model()
    prof = rc.profile()
    eps_list = _eps_list(rc)
    fine = eps_list[-1]
    p = rc.experiment["p"]
    dt = rc.data["solver"]["dt"]
    src = NoiseSource(rc.seed, fine, dt)
    finals = []
    for eps in eps_list:
        dom = rc.domain(epsilon=eps)
        cfg = rc.solver(crossing_levels=None, record_every=0)
        eng = BatchEngine(dom, model, provider_for(src, dom, dt), cfg, prof, list(reps))
        while not eng.done:
            eng.step()
        finals.append((dom, eng.U.copy(), ~eng.alive))
    rows = [{"replica": r} for r in reps]
    for k in range(len(eps_list) - 1):
        (dc, Uc, bc), (df, Uf, bf) = finals[k], finals[k + 1]
        ratio = round(dc.epsilon / df.epsilon)
        gc = dc.indices
        lf = gc * ratio - df.origin_index
        keep = (lf >= 0) & (lf < df.n_sites)
        diff = np.abs(Uc[:, keep] - Uf[:, lf[keep]]) ** p
        for i, row in enumerate(rows):
            row[f"mean_abs_p_{k}"] = float(diff[i].mean())
            row[f"blown_{k}"] = int(bc[i] or bf[i])
            row[f"_abs_p_{k}"] = diff[i]
    return rows


def _fit_slope(eps, norms) -> float:
    pts = [(math.log2(e), math.log2(n)) for e, n in zip(eps, norms) if n > 0 and math.isfinite(n)]
    if len(pts) < 2:
        return math.nan
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _epsconv_summary(rc: RunConfig, rows):
    eps_list = _eps_list(rc)
    p = rc.experiment["p"]
    pooled, supsite = [], []
    for k in range(len(eps_list) - 1):
        good = [r for r in rows if not r[f"blown_{k}"]]
        if not good:
            pooled.append(math.nan)
            supsite.append(math.nan)
            continue
        per_site = np.mean([r[f"_abs_p_{k}"] for r in good], axis=0)
        pooled.append(float(np.mean(per_site)) ** (1.0 / p))
        supsite.append(float(np.max(per_site)) ** (1.0 / p))
    coarse = eps_list[:-1]
    summary = {
        "epsilon": coarse,
        "p": p,
        "pooled_norm": pooled,
        "sup_site_norm": supsite,
        "slope": _fit_slope(coarse, pooled),
        "sup_site_slope": _fit_slope(coarse, supsite),
    }
    flags = [] if math.isfinite(summary["slope"]) else ["slope-undefined"]
    return summary, 0.0, 0.0, flags, True


# --------------------------------------------------------------------------
# deterministic limit


def _flat_value(prof) -> float:
    if not isinstance(prof, Constant):
        raise ContractError("the deterministic-limit study needs a constant initial profile")
    return float(prof.value)


def _detlim_chunk(rc: RunConfig, reps) -> list:
    base = rc.model()
    prof = rc.profile()
    _flat_value(prof)
    dom = rc.domain(boundary=Boundary.PERIODIC)
    dt = rc.data["solver"]["dt"]
    src = rc.noise_source(dom.epsilon, dt)
    cfg = rc.solver(crossing_levels=None, record_every=0)
    rows = [{"replica": r} for r in reps]
    for k, s in enumerate(rc.experiment["sigma_scales"]):
        model = base.with_sigma_scale(s)
        eng = BatchEngine(dom, model, provider_for(src, dom, dt), cfg, prof, list(reps))
        while not eng.done:
            eng.step()
        for i, row in enumerate(rows):
            tb = float(eng.t_blow[i])
            row[f"tau_cap_{k}"] = tb
            tau = math.nan
            if math.isfinite(tb):
                try:
                    tau = blowup_time_estimate(tb, model, cfg.field_cap)[1]
                except ExtrapolationRefused:
                    tau = math.nan
            row[f"tau_ext_{k}"] = tau
            row[f"sup_{k}"] = float(eng.sup[i])
    return rows


def _detlim_summary(rc: RunConfig, rows):
    model = rc.model()
    c = _flat_value(rc.profile())
    t_star = osgood_time(model, c)
    scales = rc.experiment["sigma_scales"]
    med = [_median([r[f"tau_ext_{k}"] for r in rows]) for k in range(len(scales))]
    blown = [sum(1 for r in rows if math.isfinite(r[f"tau_cap_{k}"])) / max(1, len(rows)) for k in range(len(scales))]
    rel = [abs(m - t_star) / t_star if math.isfinite(t_star) and math.isfinite(m) else math.nan for m in med]
    summary = {"sigma_scale": scales, "osgood_time": t_star, "median_tau_extrapolated": med,
               "blowup_fraction": blown, "relative_error": rel}
    flags = []
    if not math.isfinite(t_star) and any(b > 0 for s, b in zip(scales, blown) if s == 0):
        flags.append("blowup-despite-divergent-osgood")
    return summary, 0.0, 0.0, flags, True


# --------------------------------------------------------------------------
# passage times and simulate


def _run_tracked(rc: RunConfig, reps, keep_fields: bool):
    model = rc.model()
    prof = rc.profile()
    dom = rc.domain()
    dt = rc.data["solver"]["dt"]
    src = rc.noise_source(dom.epsilon, dt)
    cfg = rc.solver()
    eng = BatchEngine(dom, model, provider_for(src, dom, dt), cfg, prof, list(reps))
    return dom, cfg, drive(eng, cfg.record_every, keep_event_fields=keep_fields)


def _events_of(log) -> list:
    return [(rec.level, rec.direction.value, rec.t) for rec in log.records]


def _passage_chunk(rc: RunConfig, reps) -> list:
    if not rc.experiment["levels"]:
        raise ContractError("the passage study needs experiment.levels = [n_min, n_max]")
    _, _, traj = _run_tracked(rc, reps, keep_fields=False)
    rows = []
    for i, r in enumerate(reps):
        st = traj.final[i]
        rows.append({
            "replica": r,
            "status": st.status.value,
            "t_blow": st.t_blow,
            "n_up": sum(1 for e in traj.crossing_logs[i].records if e.direction is Direction.UP),
            "_events": _events_of(traj.crossing_logs[i]),
        })
    return rows


def _logs_from_rows(rows, rc):
    a = rc.experiment["window_a"]
    out = []
    for r in rows:
        recs = [CrossingRecord(n, Direction(d), t, rc.solver().crossing_statistic) for n, d, t in r["_events"]]
        out.append(CrossingLog(recs, (a, 1 - a)))
    return out


def _passage_summary(rc: RunConfig, rows):
    lo, hi = rc.experiment["levels"]
    stats = passage_time_stats(_logs_from_rows(rows, rc), rc.model(), range(lo, hi))
    summary = {
        "n": [r.n for r in stats.rows],
        "count": [r.count for r in stats.rows],
        "median": [r.median for r in stats.rows],
        "q25": [r.q25 for r in stats.rows],
        "q75": [r.q75 for r in stats.rows],
        "t_n": [r.t_n for r in stats.rows],
        "ratio": [r.ratio for r in stats.rows],
        "slope": stats.slope,
        "reference_slope": stats.reference_slope,
    }
    flags = [] if len(stats.rows) >= 2 else ["too-few-levels"]
    return summary, 0.0, 0.0, flags, True


def _simulate_chunk(rc: RunConfig, reps) -> list:
    dom, cfg, traj = _run_tracked(rc, reps, keep_fields=False)
    rows = []
    for i, r in enumerate(reps):
        st = traj.final[i]
        d = st.diagnostics
        rows.append({
            "replica": r,
            "status": st.status.value,
            "t_end": st.t,
            "t_blow": st.t_blow,
            "blow_site": st.blow_site,
            "overflow": int(st.overflow),
            "sup": d.sup_value,
            "clamp_count": d.clamp_count,
            "clamp_mass": d.clamp_mass,
            "boundary_leak": d.boundary_leak,
            "_trajectory": (traj.times, traj.values[:, i].copy(), dom.indices, dom.positions),
            "_events": _events_of(traj.crossing_logs[i]) if traj.crossing_logs else [],
        })
    return rows


def _simulate_summary(rc: RunConfig, rows):
    n = len(rows)
    blown = [r for r in rows if r["status"] == Status.BLOWN_UP.value]
    summary = {
        "replicas": n,
        "blown_up": len(blown),
        "median_sup": _median([r["sup"] for r in rows]),
        "median_t_blow": _median([r["t_blow"] for r in blown]) if blown else math.nan,
        "total_clamp_mass": float(sum(r["clamp_mass"] for r in rows)),
    }
    flags = ["overflow"] if any(r["overflow"] for r in rows) else []
    return summary, 0.0, 0.0, flags, True


# --------------------------------------------------------------------------
# blowup probability


def _n0_profile(rc: RunConfig, n0: int):
    prof = rc.profile()
    lo, hi = (prof.lo, prof.hi) if isinstance(prof, Indicator) else (1 / 3, 2 / 3)
    return Indicator(lo, hi, math.ldexp(1.0, n0))


def _prob_chunk(rc: RunConfig, reps) -> list:
    model = rc.model()
    dom = rc.domain()
    dt = rc.data["solver"]["dt"]
    horizon = rc.experiment["horizon"]
    src = rc.noise_source(dom.epsilon, dt)
    cfg = rc.solver(t_end=horizon, crossing_levels=None, record_every=0)
    rows = [{"replica": r} for r in reps]
    for n0 in rc.experiment["n0_list"]:
        eng = BatchEngine(dom, model, provider_for(src, dom, dt), cfg, _n0_profile(rc, n0), list(reps))
        while not eng.done:
            eng.step()
        for i, row in enumerate(rows):
            row[f"t_blow_n{n0}"] = float(eng.t_blow[i])
    return rows


def _prob_summary(rc: RunConfig, rows):
    horizon = rc.experiment["horizon"]
    n0s = rc.experiment["n0_list"]
    p_hat, lo, hi = [], [], []
    for n0 in n0s:
        p, (a, b) = blowup_probability([r[f"t_blow_n{n0}"] for r in rows], horizon)
        p_hat.append(p)
        lo.append(a)
        hi.append(b)
    flags = []
    if not all(b >= a for a, b in zip(p_hat, p_hat[1:])):
        flags.append("probability-not-monotone")
    separated = bool(n0s) and lo[-1] > hi[0]
    if len(n0s) >= 2 and not separated:
        flags.append("wilson-intervals-overlap")
    summary = {"n0": n0s, "horizon": horizon, "replicas": len(rows), "p_hat": p_hat, "lo": lo, "hi": hi,
               "extremes_separated": separated}
    return summary, 0.0, 0.0, flags, True


# --------------------------------------------------------------------------
# dispatch


_REGISTRY = {
    "simulate": (_simulate_chunk, _simulate_summary),
    "line_vs_dirichlet": (lambda rc, reps: _comparison_chunk(rc, reps, "line"),
                          lambda rc, rows: _comparison_summary(rc, rows, "line")),
    "boundary": (lambda rc, reps: _comparison_chunk(rc, reps, "boundary"),
                 lambda rc, rows: _comparison_summary(rc, rows, "boundary")),
    "j_monotonicity": (_jmono_chunk, _jmono_summary),
    "epsilon_convergence": (_epsconv_chunk, _epsconv_summary),
    "deterministic_limit": (_detlim_chunk, _detlim_summary),
    "passage": (_passage_chunk, _passage_summary),
    "blowup_probability": (_prob_chunk, _prob_summary),
}


def _chunk_worker(name: str, data: dict, reps: list) -> list:
    """Entry point executed in worker processes (module level, so it pickles)."""
    return _REGISTRY[name][0](RunConfig(data), reps)


def _preflight(name: str, rc: RunConfig):
    """Contract checks that must fail before any work is scheduled."""
    if name == "line_vs_dirichlet":
        _require_support_in_unit(rc.profile())
    if name == "deterministic_limit":
        _flat_value(rc.profile())
    if name == "passage" and not rc.experiment["levels"]:
        raise ContractError("the passage study needs experiment.levels = [n_min, n_max]")
    if name == "epsilon_convergence":
        dt = rc.data["solver"]["dt"]
        fine = min(_eps_list(rc))
        if dt > 0.5 * fine * fine * (1 + 1e-12):
            raise ContractError(f"dt={dt!r} exceeds eps^2/2 for epsilon={fine!r}")
    sch = Scheme.parse(rc.data["solver"]["scheme"])
    if sch is Scheme.ALTERNATING and name in ("line_vs_dirichlet",):
        n = LatticeDomain.truncated_line(rc.data["domain"]["epsilon"], rc.half_width()).n_sites
        if n > 4096:
            raise ContractError("the alternating scheme on the truncated line needs a narrower half_width")


def mc_drive(experiment: str, cfg: RunConfig, n_replicas: int | None = None, workers: int | None = None,
             chunk_size: int | None = None) -> ExperimentReport:
    """Run ``experiment`` over the configured replica range and reduce the results.

    Replicas are processed in chunks of ``chunk_size`` (from the config by
    default), optionally across ``workers`` processes.  A failed chunk does
    not abort the run: its replica ids are listed in ``missing_replicas`` and
    the report is marked invalid.
    """
    if experiment not in _REGISTRY:
        raise ContractError(f"unknown experiment {experiment!r}; choose from {sorted(_REGISTRY)}")
    if n_replicas is not None:
        if n_replicas < 1:
            raise ContractError("n_replicas must be >= 1")
        cfg = cfg.with_overrides({"noise.replicas": int(n_replicas)})
    workers = cfg.experiment["workers"] if workers is None else int(workers)
    if workers < 1:
        raise ContractError("workers must be >= 1")
    chunk = cfg.experiment["chunk_size"] if chunk_size is None else int(chunk_size)
    _preflight(experiment, cfg)
    reps = cfg.replica_ids
    chunks = [reps[i:i + chunk] for i in range(0, len(reps), chunk)]
    t0 = time.perf_counter()
    results: dict = {}
    missing: list = []
    errors: list = []
    if workers == 1 or len(chunks) == 1:
        for c in chunks:
            try:
                results[c[0]] = _chunk_worker(experiment, cfg.data, c)
            except ContractError:
                raise
            except Exception as exc:  # a failed chunk becomes a partial report
                missing.extend(c)
                errors.append(f"replicas {c[0]}..{c[-1]}: {type(exc).__name__}: {exc}")
    else:
        ctx = multiprocessing.get_context("spawn")
        with cf.ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futs = {pool.submit(_chunk_worker, experiment, cfg.data, c): c for c in chunks}
            for fut in cf.as_completed(futs):
                c = futs[fut]
                try:
                    results[c[0]] = fut.result()
                except ContractError:
                    raise
                except Exception as exc:
                    missing.extend(c)
                    errors.append(f"replicas {c[0]}..{c[-1]}: {type(exc).__name__}: "
                                  f"{''.join(traceback.format_exception_only(type(exc), exc)).strip()}")
    rows = [row for key in sorted(results) for row in results[key]]
    rows.sort(key=lambda r: r["replica"])
    flags: list = []
    valid = True
    if rows:
        summary, max_v, frac, flags, valid = _REGISTRY[experiment][1](cfg, rows)
    else:
        summary, max_v, frac = {}, math.nan, math.nan
    if missing:
        flags = list(flags) + ["partial"]
        summary = dict(summary, errors=sorted(errors))
        valid = False
    return ExperimentReport(
        name=experiment,
        config_digest=cfg.digest,
        seed=cfg.seed,
        per_replica=rows,
        summary=summary,
        max_violation=float(max_v),
        violating_fraction=float(frac),
        runtime=time.perf_counter() - t0,
        missing_replicas=sorted(missing),
        flags=list(flags),
        valid=valid,
    )


def run_experiment(cfg: RunConfig, **kw) -> ExperimentReport:
    """Run the experiment named in the config."""
    return mc_drive(cfg.experiment["name"], cfg, **kw)


def _named(name):
    def runner(cfg: RunConfig, **kw) -> ExperimentReport:
        return mc_drive(name, cfg, **kw)

    runner.__name__ = name
    return runner


simulate = _named("simulate")
simulate.__doc__ = "Independent runs of the configured model; per-replica status and diagnostics."
compare_line_vs_dirichlet = _named("line_vs_dirichlet")
compare_line_vs_dirichlet.__doc__ = (
    "Truncated line u against Dirichlet v on shared noise; min(u - v) over [0, 1] for every dt in the sweep."
)
compare_boundary_conditions = _named("boundary")
compare_boundary_conditions.__doc__ = (
    "Periodic or Neumann u against Dirichlet v on [0, 1] with shared noise, over the dt sweep."
)
epsilon_convergence = _named("epsilon_convergence")
epsilon_convergence.__doc__ = (
    "Coupled runs at every epsilon of the list; L^p distance of consecutive resolutions and its log-log slope."
)
deterministic_limit = _named("deterministic_limit")
deterministic_limit.__doc__ = "Flat periodic runs with sigma scaled down; extrapolated blowup times against the ODE."
passage = _named("passage")
passage.__doc__ = "Dyadic Up crossings per replica and the per-level passage-time statistics."
blowup_probability_study = _named("blowup_probability")
blowup_probability_study.__doc__ = "Blowup fraction before the horizon for indicator data of height 2^n0."


def j_monotonicity(cfg: RunConfig, J_list=None, **kw) -> ExperimentReport:
    """Truncated-drift family on shared noise: ordering violations and blowup fraction per cap."""
    if J_list is not None:
        cfg = cfg.with_overrides({"experiment.J_list": [float(j) for j in J_list]})
    return mc_drive("j_monotonicity", cfg, **kw)
