"""Run configuration: TOML parsing, one-pass validation and a stable digest.

A config file has six tables::

    [model]       drift / sigma catalog keys and their parameters
    [domain]      epsilon, boundary, half_width and the [domain.initial] profile
    [solver]      dt, t_end, scheme, drift_cap, field_cap, negativity, splitting_interval
    [noise]       seed, replica_start, replicas
    [experiment]  name plus experiment-specific knobs
    [output]      directory, record_every, formats

Every missing key is filled with its default, the result is validated in
one pass (all problems are reported together) and the digest is the SHA-256
of the canonical JSON form of the defaulted data.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .blowup import theoretical_tn
from .errors import ContractError, ModelDomainError
from .expr import Expression, ExpressionError
from .lattice import Boundary, LatticeDomain
from .model import DRIFT_CATALOG, SIGMA_CATALOG, ModelSpec, make_model
from .noise import NoiseSource
from .profiles import make_profile

__all__ = ["ConfigIssue", "ConfigError", "RunConfig", "parse_config", "to_toml", "SCHEMA", "EXPERIMENTS"]

EXPERIMENTS = (
    "simulate",
    "line_vs_dirichlet",
    "boundary",
    "j_monotonicity",
    "epsilon_convergence",
    "deterministic_limit",
    "passage",
    "blowup_probability",
)

# key -> (kind, default); kind in {"float", "int", "bool", "str", "floats", "ints", "strs", "float?"}
SCHEMA = {
    "model": {
        "drift": ("str", "power"),
        "sigma": ("str", "linear"),
        "drift_expr": ("str?", None),
        "sigma_expr": ("str?", None),
        "drift_monotone": ("bool", True),
    },
    "domain": {
        "epsilon": ("float", 2.0**-5),
        "boundary": ("str", "dirichlet"),
        "half_width": ("float?", None),
    },
    "initial": {
        "kind": ("str", "constant"),
        "value": ("float?", None),
        "lo": ("float?", None),
        "hi": ("float?", None),
        "height": ("float?", None),
        "expr": ("str?", None),
    },
    "solver": {
        "dt": ("float?", None),
        "t_end": ("float", 1.0),
        "scheme": ("str", "euler"),
        "drift_cap": ("float?", None),
        "field_cap": ("float", 2.0**30),
        "negativity": ("str", "clamp"),
        "splitting_interval": ("float?", None),
    },
    "noise": {
        "seed": ("int", 0),
        "replica_start": ("int", 0),
        "replicas": ("int", 1),
    },
    "experiment": {
        "name": ("str", "simulate"),
        "workers": ("int", 1),
        "chunk_size": ("int", 25),
        "dt_halvings": ("int", 0),
        "window_a": ("float", 1 / 3),
        "statistic": ("str", "inf_window"),
        "levels": ("ints", []),
        "J_list": ("floats", [16.0, 64.0, 256.0]),
        "epsilon_list": ("floats", []),
        "p": ("int", 2),
        "sigma_scales": ("floats", [1.0, 0.5, 0.25, 0.0]),
        "horizon": ("float", 1.0),
        "leak_threshold": ("float", 1e-6),
        "other_boundary": ("str", "periodic"),
        "n0_list": ("ints", [2, 4, 6]),
        "v_initial_scale": ("float", 1.0),
    },
    "output": {
        "directory": ("str", "out"),
        "record_every": ("int", 0),
        "formats": ("strs", ["tsv"]),
    },
}

# keys consumed by each experiment (for --help listings)
EXPERIMENT_KEYS = {
    "simulate": ["workers", "chunk_size", "levels", "window_a", "statistic"],
    "line_vs_dirichlet": ["workers", "chunk_size", "dt_halvings", "leak_threshold", "v_initial_scale"],
    "boundary": ["workers", "chunk_size", "dt_halvings", "other_boundary"],
    "j_monotonicity": ["workers", "chunk_size", "dt_halvings", "J_list"],
    "epsilon_convergence": ["workers", "chunk_size", "epsilon_list", "p"],
    "deterministic_limit": ["workers", "chunk_size", "sigma_scales"],
    "passage": ["workers", "chunk_size", "levels", "window_a", "statistic"],
    "blowup_probability": ["workers", "chunk_size", "n0_list", "horizon"],
}

PROFILE_KEYS = {
    "constant": {"value": 1.0},
    "indicator": {"lo": 1 / 3, "hi": 2 / 3, "height": 1.0},
    "bump": {"lo": 1 / 3, "hi": 2 / 3, "height": 1.0},
    "expr": {"expr": "1", "lo": -math.inf, "hi": math.inf},
}

DRIFT_PARAMS = sorted({k for _, d in DRIFT_CATALOG.values() for k in d})
SIGMA_PARAMS = sorted({k for _, d in SIGMA_CATALOG.values() for k in d})


@dataclass(frozen=True)
class ConfigIssue:
    code: str
    path: str
    message: str
    line: int | None = None
    column: int | None = None

    def __str__(self):
        where = f" (line {self.line}, column {self.column})" if self.line is not None else ""
        return f"[{self.code}] {self.path}: {self.message}{where}"


class ConfigError(ContractError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


# --------------------------------------------------------------------------
# coercion


def _coerce(kind: str, value, path: str, issues: list):
    optional = kind.endswith("?")
    base = kind.rstrip("?")
    if value is None:
        return None
    try:
        if base == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if base == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                if isinstance(value, float) and value.is_integer():
                    return int(value)
                raise TypeError
            return int(value)
        if base == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if base == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if base in ("floats", "ints", "strs"):
            if not isinstance(value, list):
                raise TypeError
            return [_coerce(base[:-1], v, path, issues) for v in value]
    except TypeError:
        issues.append(ConfigIssue("type", path, f"expected {base}{' or nothing' if optional else ''}, got {value!r}"))
        return None
    raise AssertionError(kind)


def _fill(section: str, raw: dict, issues: list, schema=None) -> dict:
    schema = SCHEMA[section] if schema is None else schema
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            out[key] = _coerce(kind, raw[key], f"{section}.{key}", issues)
        else:
            out[key] = copy.deepcopy(default)
    return out


# --------------------------------------------------------------------------
# parsing and validation


def _syntax_issue(exc) -> ConfigIssue:
    return ConfigIssue("syntax", "<file>", getattr(exc, "msg", str(exc)),
                       getattr(exc, "lineno", None), getattr(exc, "colno", None))


def parse_config(text: str, overrides: dict | None = None) -> "RunConfig":
    """Parse TOML text into a validated :class:`RunConfig`.

    ``overrides`` maps dotted paths (``"noise.seed"``) to values applied
    before defaults and validation.  Raises :class:`ConfigError` listing
    every problem found.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([_syntax_issue(exc)]) from None
    for path, value in (overrides or {}).items():
        node = raw
        parts = path.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return RunConfig(validate_data(raw))


def validate_data(raw: dict) -> dict:
    issues: list[ConfigIssue] = []
    for key in raw:
        if key not in ("model", "domain", "solver", "noise", "experiment", "output"):
            issues.append(ConfigIssue("unknown-key", key, "unknown table"))
    data: dict = {}

    # model -----------------------------------------------------------------
    rm = dict(raw.get("model", {}))
    model = _fill("model", rm, issues)
    params = {k: v for k, v in rm.items() if k not in SCHEMA["model"]}
    for kind, catalog, plist in (("drift", DRIFT_CATALOG, DRIFT_PARAMS), ("sigma", SIGMA_CATALOG, SIGMA_PARAMS)):
        key = model[kind]
        if key == "expr":
            src = model[f"{kind}_expr"]
            if not src:
                issues.append(ConfigIssue("missing", f"model.{kind}_expr", f"{kind} = 'expr' needs {kind}_expr"))
            else:
                try:
                    Expression(src)
                except ExpressionError as exc:
                    issues.append(ConfigIssue("expression", f"model.{kind}_expr", str(exc)))
            continue
        if key not in catalog:
            issues.append(ConfigIssue("unknown-model", f"model.{kind}", f"{key!r} is not in {sorted(catalog)} or 'expr'"))
            continue
        for pname, pdefault in catalog[key][1].items():
            model[f"{kind}_{pname}"] = float(pdefault)
    for pname, value in params.items():
        target = None
        if pname in DRIFT_CATALOG.get(model["drift"], (None, {}))[1]:
            target = f"drift_{pname}"
        elif pname in SIGMA_CATALOG.get(model["sigma"], (None, {}))[1]:
            target = f"sigma_{pname}"
        elif pname.startswith(("drift_", "sigma_")) and pname in model:
            target = pname
        if target is None:
            issues.append(ConfigIssue("unknown-key", f"model.{pname}",
                                      f"not a parameter of drift {model['drift']!r} or sigma {model['sigma']!r}"))
            continue
        model[target] = _coerce("float", value, f"model.{pname}", issues)
    data["model"] = model

    # domain ----------------------------------------------------------------
    rd = dict(raw.get("domain", {}))
    rinit = rd.pop("initial", {})
    if not isinstance(rinit, dict):
        issues.append(ConfigIssue("type", "domain.initial", "expected a table"))
        rinit = {}
    for key in rd:
        if key not in SCHEMA["domain"]:
            issues.append(ConfigIssue("unknown-key", f"domain.{key}", "unknown key"))
    domain = _fill("domain", rd, issues)
    eps = domain["epsilon"]
    if eps is not None:
        L = round(1 / eps) if eps > 0 else 0
        if not (eps > 0 and L >= 2 and abs(L * eps - 1) <= 1e-9):
            issues.append(ConfigIssue("epsilon", "domain.epsilon", "1/epsilon must be an integer >= 2"))
    try:
        Boundary.parse(domain["boundary"])
    except ContractError as exc:
        issues.append(ConfigIssue("enum", "domain.boundary", str(exc)))
    for key in rinit:
        if key not in SCHEMA["initial"]:
            issues.append(ConfigIssue("unknown-key", f"domain.initial.{key}", "unknown key"))
    init = _fill("initial", rinit, issues, SCHEMA["initial"])
    kind = init["kind"]
    if kind not in PROFILE_KEYS:
        issues.append(ConfigIssue("enum", "domain.initial.kind", f"{kind!r} not in {sorted(PROFILE_KEYS)}"))
        init = {"kind": kind}
    else:
        allowed = PROFILE_KEYS[kind]
        for key in list(init):
            if key == "kind":
                continue
            if key not in allowed:
                if init[key] is not None:
                    issues.append(ConfigIssue("unknown-key", f"domain.initial.{key}", f"not used by {kind!r} profiles"))
                del init[key]
            elif init[key] is None:
                init[key] = allowed[key]
        if kind == "expr":
            try:
                Expression(init["expr"])
            except ExpressionError as exc:
                issues.append(ConfigIssue("expression", "domain.initial.expr", str(exc)))
        if kind in ("indicator", "bump") and not init["lo"] < init["hi"]:
            issues.append(ConfigIssue("constraint", "domain.initial", "need lo < hi"))
    domain["initial"] = init
    data["domain"] = domain

    # solver ----------------------------------------------------------------
    rs = raw.get("solver", {})
    for key in rs:
        if key not in SCHEMA["solver"]:
            issues.append(ConfigIssue("unknown-key", f"solver.{key}", "unknown key"))
    solver = _fill("solver", rs, issues)
    if solver["dt"] is None and eps:
        solver["dt"] = eps * eps / 4
    dt = solver["dt"]
    if dt is not None and eps and eps > 0:
        if not dt > 0:
            issues.append(ConfigIssue("constraint", "solver.dt", "dt must be positive"))
        elif dt > 0.5 * eps * eps * (1 + 1e-12):
            issues.append(ConfigIssue("stability", "solver.dt", f"dt={dt!r} exceeds eps^2/2={0.5 * eps * eps!r}"))
    if solver["t_end"] is not None and not solver["t_end"] >= 0:
        issues.append(ConfigIssue("constraint", "solver.t_end", "t_end must be >= 0"))
    if solver["scheme"] not in ("euler", "alternating"):
        issues.append(ConfigIssue("enum", "solver.scheme", "scheme must be 'euler' or 'alternating'"))
    if solver["negativity"] not in ("clamp", "allow"):
        issues.append(ConfigIssue("enum", "solver.negativity", "negativity must be 'clamp' or 'allow'"))
    if solver["drift_cap"] is not None and not solver["drift_cap"] > 0:
        issues.append(ConfigIssue("constraint", "solver.drift_cap", "drift_cap must be positive"))
    if solver["scheme"] == "alternating" and dt:
        if solver["splitting_interval"] is None:
            solver["splitting_interval"] = 8 * dt
        m = solver["splitting_interval"] / dt
        if round(m) < 1 or abs(m - round(m)) > 1e-9 * max(1, m):
            issues.append(ConfigIssue("splitting-misaligned", "solver.splitting_interval",
                                      "splitting_interval must be an integer multiple of dt"))
        elif solver["t_end"]:
            nint = solver["t_end"] / solver["splitting_interval"]
            if abs(nint - round(nint)) > 1e-9 * max(1, nint):
                issues.append(ConfigIssue("splitting-misaligned", "solver.t_end",
                                          "t_end must be an integer multiple of splitting_interval"))
    data["solver"] = solver

    # noise -----------------------------------------------------------------
    rn = raw.get("noise", {})
    for key in rn:
        if key not in SCHEMA["noise"]:
            issues.append(ConfigIssue("unknown-key", f"noise.{key}", "unknown key"))
    noise = _fill("noise", rn, issues)
    if noise["seed"] is not None and not 0 <= noise["seed"] < 2**64:
        issues.append(ConfigIssue("constraint", "noise.seed", "seed must be an unsigned 64-bit integer"))
    if noise["replicas"] is not None and noise["replicas"] < 1:
        issues.append(ConfigIssue("constraint", "noise.replicas", "need at least one replica"))
    if noise["replica_start"] is not None and noise["replicas"] is not None:
        if not (0 <= noise["replica_start"] and noise["replica_start"] + noise["replicas"] <= 2**32):
            issues.append(ConfigIssue("constraint", "noise.replica_start", "replica ids must fit in 32 bits"))
    data["noise"] = noise

    # experiment ------------------------------------------------------------
    rx = raw.get("experiment", {})
    for key in rx:
        if key not in SCHEMA["experiment"]:
            issues.append(ConfigIssue("unknown-key", f"experiment.{key}", "unknown key"))
    exp = _fill("experiment", rx, issues)
    if exp["name"] not in EXPERIMENTS:
        issues.append(ConfigIssue("enum", "experiment.name", f"{exp['name']!r} not in {list(EXPERIMENTS)}"))
    a = exp["window_a"]
    if a is not None and not 0 < a < 0.5:
        issues.append(ConfigIssue("window-range", "experiment.window_a", "window parameter a must satisfy 0 < a < 1/2"))
    if exp["statistic"] not in ("inf_window", "sup_domain"):
        issues.append(ConfigIssue("enum", "experiment.statistic", "statistic must be 'inf_window' or 'sup_domain'"))
    if exp["workers"] is not None and exp["workers"] < 1:
        issues.append(ConfigIssue("constraint", "experiment.workers", "need at least one worker"))
    if exp["chunk_size"] is not None and exp["chunk_size"] < 1:
        issues.append(ConfigIssue("constraint", "experiment.chunk_size", "chunk_size must be >= 1"))
    if exp["dt_halvings"] is not None and exp["dt_halvings"] < 0:
        issues.append(ConfigIssue("constraint", "experiment.dt_halvings", "dt_halvings must be >= 0"))
    J = exp["J_list"] or []
    if any(b <= a_ for a_, b in zip(J, J[1:])) or any(j <= 0 for j in J):
        issues.append(ConfigIssue("not-ascending", "experiment.J_list", "J_list must be positive and strictly ascending"))
    levels = exp["levels"] or []
    if levels:
        if len(levels) != 2 or levels[0] > levels[1]:
            issues.append(ConfigIssue("constraint", "experiment.levels", "levels must be [n_min, n_max]"))
        elif solver["field_cap"] is not None and math.ldexp(1.0, levels[1]) >= solver["field_cap"]:
            issues.append(ConfigIssue("cap-below-level", "solver.field_cap", "field_cap must exceed 2^n_max"))
    epsl = exp["epsilon_list"] or []
    if epsl:
        if any(e <= 0 for e in epsl):
            issues.append(ConfigIssue("not-dyadic", "experiment.epsilon_list", "epsilon values must be positive"))
        else:
            fine = min(epsl)
            for e in epsl:
                r = math.log2(e / fine)
                if abs(r - round(r)) > 1e-9:
                    issues.append(ConfigIssue("not-dyadic", "experiment.epsilon_list",
                                              f"{e!r} is not a power-of-two multiple of {fine!r}"))
                    break
            if dt and dt > 0.5 * fine * fine * (1 + 1e-12):
                issues.append(ConfigIssue("stability", "solver.dt", f"dt exceeds eps^2/2 for epsilon={fine!r}"))
    if exp["p"] is not None and exp["p"] not in (2, 4):
        issues.append(ConfigIssue("constraint", "experiment.p", "p must be 2 or 4"))
    if exp["other_boundary"] not in ("periodic", "neumann", "dirichlet"):
        issues.append(ConfigIssue("enum", "experiment.other_boundary", "other_boundary must be periodic, neumann or dirichlet"))
    if exp["sigma_scales"] and any(s < 0 for s in exp["sigma_scales"]):
        issues.append(ConfigIssue("constraint", "experiment.sigma_scales", "scales must be >= 0"))
    data["experiment"] = exp

    # output ----------------------------------------------------------------
    ro = raw.get("output", {})
    for key in ro:
        if key not in SCHEMA["output"]:
            issues.append(ConfigIssue("unknown-key", f"output.{key}", "unknown key"))
    out = _fill("output", ro, issues)
    if out["record_every"] is not None and out["record_every"] < 0:
        issues.append(ConfigIssue("constraint", "output.record_every", "record_every must be >= 0"))
    if out["formats"] and any(f != "tsv" for f in out["formats"]):
        issues.append(ConfigIssue("enum", "output.formats", "only 'tsv' output is supported"))
    data["output"] = out

    # cross-field rules -------------------------------------------------------
    if not issues and levels and out["record_every"] and exp["name"] in ("simulate", "passage"):
        try:
            m = _build_model(model)
            tn = theoretical_tn(m, levels[1])
            if out["record_every"] * dt > tn / 4:
                issues.append(ConfigIssue("record-interval", "output.record_every",
                                          f"record interval {out['record_every'] * dt:g} exceeds t_n/4 = {tn / 4:g} "
                                          f"at level {levels[1]}"))
        except (ContractError, ModelDomainError):
            pass
    if issues:
        raise ConfigError(issues)
    return data


def _build_model(m: dict) -> ModelSpec:
    def params(kind):
        key = m[kind]
        if key == "expr":
            return {"expr": m[f"{kind}_expr"]}
        return {p: m[f"{kind}_{p}"] for p in (DRIFT_CATALOG if kind == "drift" else SIGMA_CATALOG)[key][1]}

    return make_model(m["drift"], m["sigma"], drift_params=params("drift"), sigma_params=params("sigma"),
                      drift_monotone=m["drift_monotone"])


# --------------------------------------------------------------------------
# serialisation


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {v!r}")


def to_toml(data: dict) -> str:
    """TOML text that parses back to the same defaulted data (keys set to None are omitted)."""
    lines = []
    for section, body in data.items():
        sub = {k: v for k, v in body.items() if isinstance(v, dict)}
        lines.append(f"[{section}]")
        for k, v in body.items():
            if v is None or isinstance(v, dict):
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
        for name, table in sub.items():
            lines.append(f"[{section}.{name}]")
            for k, v in table.items():
                if v is not None:
                    lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# run config


class RunConfig:
    """Validated, fully defaulted configuration with builders for the run objects."""

    def __init__(self, data: dict):
        self.data = data

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and canonical_json(self.data) == canonical_json(other.data)

    def to_toml(self) -> str:
        return to_toml(self.data)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        data = copy.deepcopy(self.data)
        for kind in ("drift", "sigma"):
            if f"model.{kind}" in overrides:
                # parameters of the replaced catalog entry no longer apply
                for key in [k for k in data["model"] if k.startswith(kind + "_") and k != f"{kind}_expr"]:
                    del data["model"][key]
        if "domain.initial.kind" in overrides:
            data["domain"]["initial"] = {}
        return parse_config(to_toml(data), overrides)

    # section shortcuts
    @property
    def experiment(self) -> dict:
        return self.data["experiment"]

    @property
    def seed(self) -> int:
        return self.data["noise"]["seed"]

    @property
    def replica_ids(self) -> list:
        n = self.data["noise"]
        return list(range(n["replica_start"], n["replica_start"] + n["replicas"]))

    def model(self) -> ModelSpec:
        return _build_model(self.data["model"])

    def profile(self):
        init = dict(self.data["domain"]["initial"])
        kind = init.pop("kind")
        return make_profile(kind, **init)

    def domain(self, boundary=None, epsilon=None) -> LatticeDomain:
        d = self.data["domain"]
        eps = d["epsilon"] if epsilon is None else epsilon
        b = Boundary.parse(d["boundary"] if boundary is None else boundary)
        if b is Boundary.FREE_TRUNCATED:
            return LatticeDomain.truncated_line(eps, self.half_width())
        return LatticeDomain.unit_interval(eps, b)

    def half_width(self) -> float:
        hw = self.data["domain"]["half_width"]
        return 24.0 * math.sqrt(self.data["solver"]["t_end"]) if hw is None else hw

    def solver(self, **changes):
        from .integrator import SolverConfig

        s = self.data["solver"]
        x = self.data["experiment"]
        levels = x["levels"]
        kw = dict(
            dt=s["dt"], t_end=s["t_end"], scheme=s["scheme"], drift_cap_J=s["drift_cap"],
            field_cap=s["field_cap"], negativity_policy=s["negativity"],
            record_every=self.data["output"]["record_every"], splitting_interval=s["splitting_interval"],
            crossing_levels=tuple(range(levels[0], levels[1] + 1)) if levels else None,
            crossing_window_a=x["window_a"], crossing_statistic=x["statistic"],
        )
        kw.update(changes)
        return SolverConfig(**kw)

    def dt_sweep(self) -> list:
        dt = self.data["solver"]["dt"]
        return [dt * 2.0**-k for k in range(self.data["experiment"]["dt_halvings"] + 1)]

    def noise_source(self, base_epsilon=None, base_dt=None) -> NoiseSource:
        eps = self.data["domain"]["epsilon"] if base_epsilon is None else base_epsilon
        return NoiseSource(self.seed, eps, min(self.dt_sweep()) if base_dt is None else base_dt)
