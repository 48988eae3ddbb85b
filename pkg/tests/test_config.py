import math

import pytest

from shelab.config import SCHEMA, ConfigError, parse_config
from shelab.lattice import Boundary


def codes(exc):
    return {i.code for i in exc.issues}


def test_minimal_config_fills_defaults():
    cfg = parse_config("")
    assert cfg.data["domain"]["epsilon"] == 2.0**-5
    assert cfg.data["solver"]["dt"] == 2.0**-10 / 4
    assert cfg.experiment["name"] == "simulate"
    assert cfg.seed == 0 and cfg.replica_ids == [0]
    for section in ("model", "solver", "noise", "experiment", "output"):
        assert set(SCHEMA[section]) <= set(cfg.data[section])


def test_digest_deterministic_and_round_trips():
    text = "[model]\ndrift = 'power'\np = 3.0\n[noise]\nseed = 5\n"
    a, b = parse_config(text), parse_config(text)
    assert a.digest == b.digest and len(a.digest) == 64
    assert parse_config(a.to_toml()).digest == a.digest
    assert parse_config(a.to_toml()) == a


def test_digest_changes_with_any_field():
    base = parse_config("")
    seen = {base.digest}
    for override in ({"noise.seed": 1}, {"solver.t_end": 0.5}, {"model.drift": "xlog"},
                     {"domain.initial.kind": "indicator"}, {"output.record_every": 3}):
        d = base.with_overrides(override).digest
        assert d not in seen
        seen.add(d)


def test_explicit_default_has_same_digest():
    assert parse_config("[noise]\nseed = 0\n").digest == parse_config("").digest


def test_dt_equal_eps_squared_is_stability_error():
    with pytest.raises(ConfigError) as err:
        parse_config("[domain]\nepsilon = 0.125\n[solver]\ndt = 0.015625\n")
    assert "stability" in codes(err.value)


def test_window_out_of_range():
    with pytest.raises(ConfigError) as err:
        parse_config("[experiment]\nwindow_a = 0.6\n")
    assert "window-range" in codes(err.value)


def test_all_issues_reported_in_one_pass():
    text = """
[model]
drift = "nonsense"
[domain]
epsilon = 0.3
[solver]
scheme = "implicit"
[experiment]
window_a = 0.0
J_list = [4.0, 2.0]
bogus = 1
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    got = codes(err.value)
    assert {"unknown-model", "epsilon", "enum", "window-range", "not-ascending", "unknown-key"} <= got
    assert len(err.value.issues) >= 6


def test_syntax_error_has_line_and_column():
    with pytest.raises(ConfigError) as err:
        parse_config("[model]\ndrift = \n")
    (issue,) = err.value.issues
    assert issue.code == "syntax"
    assert issue.line == 2 and issue.column is not None


def test_type_errors():
    with pytest.raises(ConfigError) as err:
        parse_config("[noise]\nseed = 'abc'\n")
    assert codes(err.value) == {"type"}


def test_model_parameters_routed_to_catalog():
    cfg = parse_config("[model]\ndrift = 'power'\nsigma = 'linear'\np = 3.0\nbeta = 0.5\n")
    m = cfg.model()
    assert float(m.b(2.0)) == 8.0 and float(m.sigma(2.0)) == 1.0
    with pytest.raises(ConfigError) as err:
        parse_config("[model]\ndrift = 'power'\nk = 1.0\n")
    assert "unknown-key" in codes(err.value)


def test_expression_model():
    cfg = parse_config("[model]\ndrift = 'expr'\ndrift_expr = 'x^2 + 1'\n")
    assert float(cfg.model().b(2.0)) == 5.0
    with pytest.raises(ConfigError) as err:
        parse_config("[model]\ndrift = 'expr'\ndrift_expr = 'import os'\n")
    assert "expression" in codes(err.value)


def test_splitting_alignment_rule():
    with pytest.raises(ConfigError) as err:
        parse_config("[solver]\nscheme = 'alternating'\ndt = 1e-4\nsplitting_interval = 2.5e-4\n")
    assert "splitting-misaligned" in codes(err.value)
    cfg = parse_config("[solver]\nscheme = 'alternating'\ndt = 1e-4\nt_end = 0.0008\n")
    assert cfg.data["solver"]["splitting_interval"] == 8e-4


def test_record_interval_rule():
    text = "[experiment]\nname = 'passage'\nlevels = [3, 10]\n[output]\nrecord_every = 100000\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert "record-interval" in codes(err.value)


def test_levels_below_field_cap():
    with pytest.raises(ConfigError) as err:
        parse_config("[experiment]\nlevels = [3, 40]\n")
    assert "cap-below-level" in codes(err.value)


def test_epsilon_list_must_be_dyadic():
    with pytest.raises(ConfigError) as err:
        parse_config("[solver]\ndt = 1e-6\n[experiment]\nepsilon_list = [0.125, 0.1]\n")
    assert "not-dyadic" in codes(err.value)


def test_builders():
    cfg = parse_config("""
[domain]
epsilon = 0.125
boundary = "free"
[domain.initial]
kind = "indicator"
lo = 0.25
hi = 0.5
[solver]
t_end = 0.25
[noise]
seed = 3
replica_start = 10
replicas = 4
""")
    d = cfg.domain()
    assert d.boundary is Boundary.FREE_TRUNCATED
    assert cfg.half_width() == pytest.approx(12.0)
    assert d.origin_index == -96
    assert cfg.replica_ids == [10, 11, 12, 13]
    assert cfg.profile().support == (0.25, 0.5)
    assert cfg.domain(boundary="periodic").n_sites == 8
    s = cfg.solver()
    assert s.dt == 0.125**2 / 4 and s.t_end == 0.25
    src = cfg.noise_source()
    assert src.master_seed == 3 and src.base_epsilon == 0.125


def test_overrides_apply_before_validation():
    cfg = parse_config("", {"noise.seed": 9, "noise.replicas": 3})
    assert cfg.seed == 9 and len(cfg.replica_ids) == 3
    with pytest.raises(ConfigError):
        parse_config("", {"noise.replicas": 0})


def test_nan_free_defaults():
    cfg = parse_config("")
    assert all(not (isinstance(v, float) and math.isnan(v)) for v in cfg.data["solver"].values())
