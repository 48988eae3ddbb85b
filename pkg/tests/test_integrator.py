import math

import numpy as np
import pytest

from shelab.errors import ContractError
from shelab.integrator import (
    BatchEngine,
    FieldState,
    SolverConfig,
    Status,
    alternating_step,
    euler_step,
    initial_profile,
    run,
    run_truncated_family,
)
from shelab.lattice import LatticeDomain, kernel_matrix
from shelab.model import make_model
from shelab.noise import NoiseSource
from shelab.profiles import Constant, Indicator

FLAT = make_model("zero", "zero")
QUAD_ODE = make_model("power", "zero")


def src_for(domain, dt, seed=1):
    return NoiseSource(seed, domain.epsilon, dt)


# --------------------------------------------------------------------------
# initial data


def test_initial_profile_constant():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    assert np.array_equal(initial_profile(Constant(1.0), d), np.ones(8))


def test_initial_profile_indicator_aligned_cells():
    d = LatticeDomain.unit_interval(1 / 3, "periodic")
    assert np.array_equal(initial_profile(Indicator(1 / 3, 2 / 3), d), [0.0, 1.0, 0.0])


def test_initial_profile_linear_cell_midpoints():
    d = LatticeDomain.unit_interval(0.25, "periodic")
    assert np.allclose(initial_profile(lambda x: x, d), [0.125, 0.375, 0.625, 0.875], atol=1e-15)


def test_initial_profile_pins_absorbing_ends():
    d = LatticeDomain.unit_interval(0.25, "dirichlet")
    vals = initial_profile(Constant(2.0), d)
    assert vals[0] == vals[-1] == 0.0 and (vals[1:-1] == 2.0).all()


# --------------------------------------------------------------------------
# solver configuration


def test_stability_bound_rejected():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    with pytest.raises(ContractError):
        BatchEngine(d, FLAT, src_for(d, 0.125**2), SolverConfig(0.125**2, 0.1), Constant())


def test_stability_bound_applies_to_alternating_scheme():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    cfg = SolverConfig(0.125**2, 0.125**2 * 8, scheme="alternating")
    with pytest.raises(ContractError):
        cfg.validate(d)


def test_misaligned_splitting_rejected():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    with pytest.raises(ContractError):
        SolverConfig(1e-3, 0.1, scheme="alternating", splitting_interval=2.5e-3).validate(d)


def test_solver_config_contracts():
    with pytest.raises(ContractError):
        SolverConfig(0.0, 1.0)
    with pytest.raises(ContractError):
        SolverConfig(1e-3, 1.0, crossing_levels=(10,), field_cap=2.0**10)
    with pytest.raises(ContractError):
        SolverConfig(1e-3, 1.0, scheme="implicit")


# --------------------------------------------------------------------------
# Euler step


def test_flat_model_constant_field_unchanged():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    tr = run(d, FLAT, src_for(d, 1e-3), SolverConfig(1e-3, 0.05), Constant(3.0))
    assert np.array_equal(tr.values[-1, 0], np.full(8, 3.0))


def test_flat_model_is_pure_laplacian_step():
    d = LatticeDomain.unit_interval(0.125, "neumann")
    u = 1.5 + np.sin(np.arange(8.0))
    state = FieldState(0.0, u)
    out = euler_step(state, d, FLAT, src_for(d, 1e-3), SolverConfig(1e-3, 1.0))
    from shelab.lattice import discrete_laplacian_apply

    assert np.allclose(out.values, u + 1e-3 * discrete_laplacian_apply(d, u), rtol=0, atol=1e-15)
    assert out.status is Status.RUNNING and out.step == 1


def test_quadratic_drift_single_step():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    out = euler_step(FieldState(0.0, np.ones(8)), d, QUAD_ODE, src_for(d, 1e-3), SolverConfig(1e-3, 1.0))
    assert np.allclose(out.values, 1.001, rtol=0, atol=1e-15)


def test_ode_blowup_time_within_five_percent():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    tr = run(d, QUAD_ODE, src_for(d, 1e-4), SolverConfig(1e-4, 2.0), Constant(1.0))
    st = tr.final[0]
    assert st.status is Status.BLOWN_UP
    assert abs(st.t_blow - 1.0) <= 0.05
    assert st.values.max() >= 2.0**30


def test_blown_rows_freeze_while_others_continue():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    cfg = SolverConfig(1e-3, 0.2, drift_cap_J=None)
    eng = BatchEngine(d, QUAD_ODE, src_for(d, 1e-3), cfg, Constant(1.0), rows_replica=[0, 1],
                      drift_caps=[1e300, 2.0])
    eng.U[0] = 100.0
    while not eng.done:
        eng.step()
    a, b = eng.field_state(0), eng.field_state(1)
    assert a.status is Status.BLOWN_UP and a.t_blow < 0.02
    assert b.status is Status.FINISHED
    frozen = eng.U[0].copy()
    eng.step()
    assert np.array_equal(eng.U[0], frozen)


def test_overflow_is_flagged():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    tr = run(d, QUAD_ODE, src_for(d, 1e-3), SolverConfig(1e-3, 0.01), Constant(1e200))
    st = tr.final[0]
    assert st.status is Status.BLOWN_UP and st.overflow
    assert np.isfinite(st.values).all()


def test_clamp_keeps_fields_nonnegative_and_counts():
    d = LatticeDomain.unit_interval(0.25, "periodic")
    m = make_model("zero", "linear", sigma_params={"beta": 3.0})
    dt = 0.25**2 / 2
    tr = run(d, m, src_for(d, dt, seed=4), SolverConfig(dt, 2.0, record_every=1), Constant(1.0))
    assert (tr.values >= 0).all()
    assert tr.final[0].diagnostics.clamp_count > 0
    assert tr.final[0].diagnostics.clamp_mass > 0


def test_dirichlet_mass_decreases_and_leak_accounts_for_it():
    d = LatticeDomain.unit_interval(1 / 16, "dirichlet")
    u0 = np.zeros(17)
    u0[8] = 16.0
    dt = 1e-3
    tr = run(d, FLAT, src_for(d, dt), SolverConfig(dt, 0.2, record_every=10), u0)
    mass = tr.values[:, 0].sum(axis=1) * d.epsilon
    assert (np.diff(mass) < 0).all()
    leak = tr.final[0].diagnostics.boundary_leak
    assert abs(mass[0] - mass[-1] - leak) <= 1e-12


def test_t_end_zero_records_initial_state():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    tr = run(d, FLAT, src_for(d, 1e-3), SolverConfig(1e-3, 0.0), Constant(2.0))
    assert tr.times.tolist() == [0.0] and tr.values.shape == (1, 1, 8)


def test_run_is_deterministic_and_row_independent():
    d = LatticeDomain.unit_interval(0.125, "dirichlet")
    m = make_model("power", "linear", sigma_params={"beta": 0.5})
    cfg = SolverConfig(2e-3, 0.1, record_every=5)
    src = src_for(d, 2e-3, seed=77)
    a = run(d, m, src, cfg, Indicator(), replicas=[0, 1, 2])
    b = run(d, m, src, cfg, Indicator(), replicas=[2])
    assert np.array_equal(a.values[:, 2], b.values[:, 0])
    c = run(d, m, src, cfg, Indicator(), replicas=[0, 1, 2])
    assert np.array_equal(a.values, c.values)


# --------------------------------------------------------------------------
# alternating scheme


def test_alternating_flat_constant_unchanged():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    cfg = SolverConfig(1e-3, 0.064, scheme="alternating")
    tr = run(d, FLAT, src_for(d, 1e-3), cfg, Constant(2.0))
    assert np.allclose(tr.values[-1, 0], 2.0, rtol=0, atol=1e-14)


def test_alternating_identity_kernel_matches_scalar_euler():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    cfg = SolverConfig(1e-3, 1.0, scheme="alternating", splitting_interval=4e-3)
    u = np.linspace(0.5, 1.5, 8)
    out = alternating_step(FieldState(0.0, u), d, QUAD_ODE, src_for(d, 1e-3), kernel_matrix(0.0, d), cfg)
    ref = u.copy()
    for _ in range(4):
        ref = ref + 1e-3 * ref**2
    assert np.array_equal(out.values, ref)


def test_alternating_flat_matches_kernel_evolution():
    d = LatticeDomain.unit_interval(1 / 16, "dirichlet")
    u0 = np.zeros(17)
    u0[5] = 16.0
    cfg = SolverConfig(1e-3, 0.2, scheme="alternating", splitting_interval=1e-2)
    tr = run(d, FLAT, src_for(d, 1e-3), cfg, u0)
    ref = kernel_matrix(0.2, d).apply(u0)
    assert np.max(np.abs(tr.values[-1, 0] - ref)) <= 1e-8


def test_alternating_gbm_log_variance():
    eps, dt = 0.25, 1e-4
    d = LatticeDomain.unit_interval(eps, "periodic")
    m = make_model("zero", "linear")
    cfg = SolverConfig(dt, 8 * dt, scheme="alternating", splitting_interval=8 * dt, negativity_policy="allow")
    R = 10**4
    eng = BatchEngine(d, m, src_for(d, dt, seed=3), cfg, Constant(1.0), rows_replica=np.arange(R),
                      kernel=kernel_matrix(0.0, d))
    eng.step()
    logs = np.log(eng.U[:, 0])
    assert abs(logs.var() / (8 * dt / eps) - 1) <= 0.05


def test_alternating_converges_to_euler():
    eps, dt = 1 / 8, 2.0**-10
    d = LatticeDomain.unit_interval(eps, "periodic")
    m = make_model("zero", "linear")
    src = src_for(d, dt, seed=9)
    reps = list(range(20))
    u0 = lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x)  # noqa: E731
    ref = run(d, m, src, SolverConfig(dt, 2.0**-4), u0, replicas=reps).values[-1]
    hs, errs = [], []
    for k in (2, 4, 8, 16):
        cfg = SolverConfig(dt, 2.0**-4, scheme="alternating", splitting_interval=k * dt)
        alt = run(d, m, src, cfg, u0, replicas=reps).values[-1]
        hs.append(k * dt)
        errs.append(np.sqrt(np.mean((alt - ref) ** 2)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 0.5


# --------------------------------------------------------------------------
# truncated family


def test_truncated_family_ordering_without_noise():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    res = run_truncated_family(d, QUAD_ODE, src_for(d, 1e-3), SolverConfig(1e-3, 0.9), Constant(1.0), [10, 100])
    assert (res.violation <= 0).all()
    a, b = res.trajectories
    assert (a.values[-1] <= b.values[-1]).all()


def test_inactive_cap_matches_uncapped_run():
    d = LatticeDomain.unit_interval(0.125, "dirichlet")
    m = make_model("power", "linear", sigma_params={"beta": 0.3})
    cfg = SolverConfig(1e-3, 0.1)
    src = src_for(d, 1e-3, seed=5)
    res = run_truncated_family(d, m, src, cfg, Indicator(), [1e6, 1e9], replicas=[0, 1])
    plain = run(d, m, src, cfg, Indicator(), replicas=[0, 1])
    assert np.array_equal(res.trajectories[0].values[-1], plain.values[-1])
    assert (res.violation == 0).all()


def test_truncated_family_requires_ascending_caps():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    with pytest.raises(ContractError):
        run_truncated_family(d, QUAD_ODE, src_for(d, 1e-3), SolverConfig(1e-3, 0.1), Constant(), [10, 10])


def test_crossings_tracked_on_ode():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    cfg = SolverConfig(1e-4, 2.0, crossing_levels=tuple(range(7)))
    tr = run(d, QUAD_ODE, src_for(d, 1e-4), cfg, Constant(1.0))
    ups = tr.crossing_logs[0].up_times()
    # u(t) = 1/(1-t) exceeds 2**n at t = 1 - 2**-n
    assert sorted(ups) == list(range(0, 7))
    for n in range(0, 7):
        assert abs(ups[n] - (1 - 2.0**-n)) <= 5e-3
    assert math.isfinite(tr.final[0].t_blow)
