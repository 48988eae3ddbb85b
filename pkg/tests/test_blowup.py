import math

import numpy as np
import pytest

from shelab.blowup import (
    CrossingLog,
    Direction,
    blowup_probability,
    blowup_time_estimate,
    detect_crossings,
    passage_time_stats,
    theoretical_tn,
    wilson_interval,
    window_statistic,
)
from shelab.errors import ContractError, ExtrapolationRefused
from shelab.integrator import SolverConfig, run
from shelab.lattice import LatticeDomain
from shelab.model import make_model
from shelab.noise import NoiseSource
from shelab.profiles import Constant

QUAD = make_model("power", "linear")
QUAD_ODE = make_model("power", "zero")


def test_monotone_trajectory_up_records_in_order():
    t = np.linspace(0, 1, 1001)
    s = 2.0 ** (10 * t)
    log = detect_crossings(t, s, levels=range(0, 12))
    ups = [r for r in log.records if r.direction is Direction.UP]
    assert [r.level for r in ups] == list(range(10))
    assert all(a.t < b.t for a, b in zip(ups, ups[1:]))
    assert not [r for r in log.records if r.direction is Direction.DOWN]


def test_constant_trajectory():
    t = np.linspace(0, 1, 11)
    assert detect_crossings(t, np.full(11, 1.5), levels=range(-2, 4)).records == []
    s = np.full(11, 1.5)
    s[0] = 0.75
    log = detect_crossings(t, s, levels=range(-2, 4))
    assert [(r.level, r.direction) for r in log.records] == [(0, Direction.UP)]


def test_down_record_after_large_drop():
    t = np.arange(4.0)
    log = detect_crossings(t, [1.0, 40.0, 3.0, 1.0], levels=[5])
    assert [(r.level, r.direction, r.t) for r in log.records] == [(5, Direction.UP, 1.0), (5, Direction.DOWN, 3.0)]


def test_detect_on_fields_uses_the_window():
    d = LatticeDomain.unit_interval(1 / 6, "periodic")
    fields = np.array([[9, 9, 1, 1, 1, 9], [9, 9, 3, 3, 3, 9]], dtype=float)
    assert window_statistic(d, fields).tolist() == [1.0, 3.0]
    assert window_statistic(d, fields, statistic="sup").tolist() == [9.0, 9.0]
    log = detect_crossings([0.0, 1.0], fields, levels=[0, 1, 2], domain=d)
    assert sorted(log.up_times()) == [0, 1]


def test_window_contract():
    d = LatticeDomain.unit_interval(0.25, "periodic")
    with pytest.raises(ContractError):
        window_statistic(d, np.ones(4), a=0.6)
    with pytest.raises(ContractError):
        detect_crossings([0.0], np.ones((1, 4)))


def test_ode_up_times_close_to_closed_form():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    dt = 1e-4
    cfg = SolverConfig(dt, 2.0, record_every=1)
    tr = run(d, QUAD_ODE, NoiseSource(1, d.epsilon, dt), cfg, Constant(1.0))
    log = detect_crossings(tr.times, tr.values[:, 0], domain=d, levels=range(1, 11))
    for n, t in log.up_times().items():
        assert abs(t - (1 - 2.0**-n)) <= 50 * dt


def test_theoretical_tn():
    assert theoretical_tn(QUAD, 4) == 512.0
    assert theoretical_tn(QUAD, 12) == 2.0


def test_passage_stats_deterministic_and_empty():
    recs = detect_crossings(np.linspace(0, 1, 1001), 2.0 ** (10 * np.linspace(0, 1, 1001)), levels=range(0, 10))
    st = passage_time_stats([recs], QUAD)
    ups = recs.up_times()
    for row in st.rows:
        assert row.count == 1 and row.q25 == row.median == row.q75
        assert row.median == ups[row.n + 1] - ups[row.n]
    empty = passage_time_stats([], QUAD)
    assert empty.rows == () and math.isnan(empty.slope)
    assert passage_time_stats([CrossingLog()], QUAD).rows == ()


def test_passage_slope_reference():
    logs = []
    for k in range(5):
        times = {n: 1 - 2.0**-n + 0.01 * k * 2.0**-n for n in range(3, 11)}
        log = CrossingLog()
        from shelab.blowup import CrossingRecord, Statistic

        log.records = [CrossingRecord(n, Direction.UP, t, Statistic.INF_OVER_WINDOW) for n, t in times.items()]
        logs.append(log)
    st = passage_time_stats(logs, QUAD)
    assert st.slope == pytest.approx(-1.0, abs=1e-9)
    assert st.reference_slope == pytest.approx(-1.0, abs=1e-12)


def test_blowup_time_estimate_quadratic():
    cap = 2.0**30
    tau_cap, tau_ext = blowup_time_estimate(1 - 1 / cap, QUAD, cap)
    assert abs(tau_ext - 1.0) <= 1e-12


def test_blowup_time_extrapolation_stable_across_caps():
    d = LatticeDomain.unit_interval(0.125, "periodic")
    dt = 1e-4
    caps, taus = [], []
    for e in (20, 25, 30):
        cfg = SolverConfig(dt, 2.0, field_cap=2.0**e)
        st = run(d, QUAD_ODE, NoiseSource(1, d.epsilon, dt), cfg, Constant(1.0)).final[0]
        tau_cap, tau_ext = blowup_time_estimate(st.t_blow, QUAD, 2.0**e)
        caps.append(tau_cap)
        taus.append(tau_ext)
    assert caps[0] <= caps[1] <= caps[2]
    assert max(taus) - min(taus) <= 10 * dt
    assert abs(taus[-1] - 1.0) <= 0.01


def test_blowup_time_refused_for_divergent_tail():
    with pytest.raises(ExtrapolationRefused):
        blowup_time_estimate(0.5, make_model("linear", "linear"), 2.0**30)
    with pytest.raises(ContractError):
        blowup_time_estimate(math.nan, QUAD, 2.0**30)


def test_wilson_and_probability():
    p, (lo, hi) = blowup_probability([0.1] * 10, 1.0)
    assert p == 1.0 and hi == 1.0
    p, (lo, hi) = blowup_probability([math.nan] * 100, 1.0)
    assert p == 0.0 and lo == 0.0 and hi == pytest.approx(0.0370, abs=1e-3)
    p, _ = blowup_probability([0.5, 2.0, math.inf, math.nan], 1.0)
    assert p == 0.25
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)
    with pytest.raises(ContractError):
        wilson_interval(0, 0)
