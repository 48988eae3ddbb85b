import math

import numpy as np
import pytest

from shelab import experiments
from shelab.config import parse_config
from shelab.errors import ContractError
from shelab.experiments import (
    compare_boundary_conditions,
    compare_line_vs_dirichlet,
    deterministic_limit,
    epsilon_convergence,
    j_monotonicity,
    mc_drive,
    simulate,
)
from shelab.integrator import run

BASE = """
[model]
beta = 0.5
[domain]
epsilon = 0.125
[domain.initial]
kind = "indicator"
[solver]
dt = 0.002
t_end = 0.1
[noise]
seed = 17
"""


def base(**over):
    return parse_config(BASE).with_overrides(over) if over else parse_config(BASE)


def test_single_replica_equals_single_run():
    cfg = base()
    rep = simulate(cfg, n_replicas=1)
    assert len(rep.per_replica) == 1
    row = rep.per_replica[0]
    tr = run(cfg.domain(), cfg.model(), cfg.noise_source(), cfg.solver(), cfg.profile(), replicas=[0])
    st = tr.final[0]
    assert row["sup"] == st.diagnostics.sup_value
    assert row["boundary_leak"] == st.diagnostics.boundary_leak
    assert row["status"] == st.status.value
    assert rep.summary["median_sup"] == row["sup"]


def test_report_is_reproducible_and_sorted():
    cfg = base(**{"noise.replicas": 5, "experiment.chunk_size": 2})
    a = simulate(cfg)
    b = simulate(cfg.with_overrides({"experiment.chunk_size": 5}))
    # repr so that nan entries compare equal
    assert repr(a.content()["per_replica"]) == repr(b.content()["per_replica"])
    assert [r["replica"] for r in a.per_replica] == list(range(5))


def test_dirichlet_against_itself_is_zero():
    cfg = base(**{"experiment.name": "boundary", "experiment.other_boundary": "dirichlet",
                  "noise.replicas": 3, "experiment.dt_halvings": 1})
    rep = compare_boundary_conditions(cfg)
    for row in rep.per_replica:
        assert row["worst_0"] == 0.0 and row["worst_1"] == 0.0
    assert rep.max_violation == 0.0 and rep.violating_fraction == 0.0


def test_noiseless_line_dominates_dirichlet():
    cfg = base(**{"experiment.name": "line_vs_dirichlet", "model.drift": "zero", "model.sigma": "zero",
                  "domain.initial.kind": "bump", "domain.half_width": 1.5})
    rep = compare_line_vs_dirichlet(cfg)
    assert rep.max_violation == 0.0
    assert rep.per_replica[0]["worst_0"] >= 0.0
    assert rep.summary["ordering_claim"]


def test_noiseless_boundary_comparison_exact():
    for other in ("periodic", "neumann"):
        cfg = base(**{"experiment.name": "boundary", "experiment.other_boundary": other,
                      "model.drift": "zero", "model.sigma": "zero"})
        assert compare_boundary_conditions(cfg).max_violation == 0.0


def test_hypothesis_violation_is_flagged():
    cfg = base(**{"experiment.name": "line_vs_dirichlet", "experiment.v_initial_scale": 2.0,
                  "domain.half_width": 1.0})
    rep = compare_line_vs_dirichlet(cfg)
    assert "hypothesis-violated" in rep.flags
    assert rep.summary["ordering_claim"] is False


def test_line_comparison_rejects_profile_outside_unit_interval():
    cfg = base(**{"experiment.name": "line_vs_dirichlet", "domain.initial.kind": "constant"})
    with pytest.raises(ContractError):
        compare_line_vs_dirichlet(cfg)


def test_identical_epsilon_gives_zero_distance():
    cfg = base(**{"experiment.name": "epsilon_convergence", "experiment.epsilon_list": [0.125, 0.125],
                  "noise.replicas": 2})
    rep = epsilon_convergence(cfg)
    assert rep.summary["pooled_norm"] == [0.0]


def test_noiseless_epsilon_convergence_at_least_first_order():
    cfg = base(**{"experiment.name": "epsilon_convergence", "model.drift": "zero", "model.sigma": "zero",
                  "domain.initial.kind": "bump", "domain.initial.lo": 0.25, "domain.initial.hi": 0.75,
                  "solver.dt": 1e-4, "experiment.epsilon_list": [0.125, 0.0625, 0.03125, 0.015625]})
    s = epsilon_convergence(cfg).summary
    assert s["slope"] >= 1.0
    assert all(b < a for a, b in zip(s["pooled_norm"], s["pooled_norm"][1:]))


def test_epsilon_list_must_be_fine_enough_for_dt():
    with pytest.raises(ContractError):
        base(**{"experiment.name": "epsilon_convergence", "experiment.epsilon_list": [0.125, 0.0625],
                "solver.dt": 0.006})


@pytest.mark.parametrize("c,expected", [(1.0, 1.0), (2.0, 0.5)])
def test_deterministic_limit_flat_quadratic(c, expected):
    cfg = base(**{"experiment.name": "deterministic_limit", "experiment.sigma_scales": [0.0],
                  "domain.initial.kind": "constant", "domain.initial.value": c,
                  "solver.dt": 1e-4, "solver.t_end": 2.0})
    s = deterministic_limit(cfg).summary
    assert s["osgood_time"] == pytest.approx(expected, rel=1e-9)
    assert abs(s["median_tau_extrapolated"][0] / expected - 1) <= 0.05
    assert s["blowup_fraction"] == [1.0]


def test_deterministic_limit_divergent_drift_stays_bounded():
    cfg = base(**{"experiment.name": "deterministic_limit", "experiment.sigma_scales": [0.0],
                  "model.drift": "linear", "domain.initial.kind": "constant", "solver.t_end": 2.0})
    rep = deterministic_limit(cfg)
    assert rep.summary["blowup_fraction"] == [0.0]
    assert math.isinf(rep.summary["osgood_time"])
    # closed form of u' = u from u(0) = 1
    assert rep.per_replica[0]["sup_0"] == pytest.approx(math.exp(2.0), rel=0.01)


def test_deterministic_limit_needs_constant_profile():
    cfg = base(**{"experiment.name": "deterministic_limit"})
    with pytest.raises(ContractError):
        deterministic_limit(cfg)


def test_j_monotonicity_noiseless_has_no_violation():
    cfg = base(**{"experiment.name": "j_monotonicity", "model.sigma": "zero", "domain.boundary": "periodic",
                  "domain.initial.kind": "constant", "solver.t_end": 1.2})
    rep = j_monotonicity(cfg, J_list=[10.0, 100.0, 1e6])
    assert rep.max_violation <= 0.0
    assert rep.summary["J"] == [10.0, 100.0, 1e6]
    assert rep.summary["blowup_fraction"] == [0.0, 0.0, 1.0]


def test_partial_report_lists_missing_replicas(monkeypatch):
    chunk, summ = experiments._REGISTRY["simulate"]

    def flaky(rc, reps):
        if 2 in reps:
            raise RuntimeError("worker lost")
        return chunk(rc, reps)

    monkeypatch.setitem(experiments._REGISTRY, "simulate", (flaky, summ))
    cfg = base(**{"noise.replicas": 4, "experiment.chunk_size": 2})
    rep = mc_drive("simulate", cfg)
    assert rep.missing_replicas == [2, 3]
    assert [r["replica"] for r in rep.per_replica] == [0, 1]
    assert "partial" in rep.flags and not rep.valid
    assert any("worker lost" in e for e in rep.summary["errors"])


def test_mc_drive_contracts():
    with pytest.raises(ContractError):
        mc_drive("nope", base())
    with pytest.raises(ContractError):
        mc_drive("simulate", base(), n_replicas=0)
    with pytest.raises(ContractError):
        mc_drive("simulate", base(), workers=0)


def test_digest_tracks_config():
    a, b = simulate(base()), simulate(base(**{"solver.t_end": 0.05}))
    assert a.config_digest != b.config_digest
    assert np.isfinite(a.runtime)
