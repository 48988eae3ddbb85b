"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error (including violated
experiment preconditions), 2 numerical failure, 3 experiment ran but is
invalid or partial (truncation leak, failed worker chunks).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import EXPERIMENT_KEYS, EXPERIMENTS, SCHEMA, ConfigError, RunConfig, canonical_json, parse_config
from .errors import ContractError, ModelDomainError, NumericError, ResourceError
from .io import fmt, header_lines, write_manifest, write_report, write_table

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INVALID = 0, 1, 2, 3

COMMON_SECTIONS = ("model", "domain", "initial", "solver", "noise")


def _keys_text(experiments) -> str:
    lines = ["config keys consumed:"]
    for sec in COMMON_SECTIONS:
        path = "domain.initial" if sec == "initial" else sec
        lines.append(f"  [{path}] " + ", ".join(SCHEMA[sec]))
    lines.append("  [model] drift/sigma parameters by name (e.g. p, c, beta)")
    exp_keys = ["name"]
    for e in experiments:
        for k in EXPERIMENT_KEYS[e]:
            if k not in exp_keys:
                exp_keys.append(k)
    lines.append("  [experiment] " + ", ".join(exp_keys))
    lines.append("  [output] " + ", ".join(SCHEMA["output"]))
    return "\n".join(lines)


def _add_run_args(p: argparse.ArgumentParser):
    p.add_argument("config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="override noise.seed")
    p.add_argument("--replicas", type=int, help="override noise.replicas")
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.add_argument("--workers", type=int, help="worker processes (default: experiment.workers)")


def build_parser() -> argparse.ArgumentParser:
    fmt_cls = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="shelab", description="Lattice stochastic heat equation laboratory.",
                                     epilog=__doc__, formatter_class=fmt_cls)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run independent replicas and write trajectories",
                       epilog=_keys_text(["simulate"]), formatter_class=fmt_cls)
    _add_run_args(p)

    p = sub.add_parser("compare", help="coupled comparison against the Dirichlet solution",
                       epilog=_keys_text(["line_vs_dirichlet", "boundary"]), formatter_class=fmt_cls)
    _add_run_args(p)
    p.add_argument("--kind", choices=["line", "boundary"],
                   help="line: truncated line vs Dirichlet; boundary: experiment.other_boundary vs Dirichlet")

    p = sub.add_parser("osgood", help="Osgood sum, integral, blowup time and assumption checks",
                       epilog=_keys_text([]).split("\n")[0] + "\n  [model] drift, sigma, drift_expr, sigma_expr and parameters",
                       formatter_class=fmt_cls)
    p.add_argument("config", nargs="?", help="TOML file (only the [model] table is used)")
    p.add_argument("--drift", help="drift catalog key (overrides the config)")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="drift parameter")
    p.add_argument("--c", type=float, default=1.0, help="initial value for the ODE blowup time")
    p.add_argument("--n-max", type=int, default=60, help="last dyadic index of the sum")
    p.add_argument("--out", help="also write osgood.tsv into this directory")

    p = sub.add_parser("convergence", help="coupled lattice refinement study",
                       epilog=_keys_text(["epsilon_convergence"]), formatter_class=fmt_cls)
    _add_run_args(p)

    p = sub.add_parser("mc", help="run the experiment named in experiment.name",
                       epilog=_keys_text(EXPERIMENTS), formatter_class=fmt_cls)
    _add_run_args(p)

    p = sub.add_parser("kernel-dump", help="write the transition kernel of a lattice domain",
                       epilog="config keys consumed:\n  [domain] epsilon, boundary, half_width\n  [solver] t_end",
                       formatter_class=fmt_cls)
    p.add_argument("config", nargs="?", help="TOML file (domain and solver.t_end are used)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--boundary", choices=["dirichlet", "neumann", "periodic", "free"])
    p.add_argument("--t", type=float, help="kernel time (default solver.t_end)")
    p.add_argument("--method", choices=["expm", "fft", "bessel"], default="expm")
    p.add_argument("--out", help="output directory")
    return parser


# --------------------------------------------------------------------------
# helpers


def _load(args, experiment: str | None = None) -> RunConfig:
    text = Path(args.config).read_text()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["noise.seed"] = args.seed
    if getattr(args, "replicas", None) is not None:
        over["noise.replicas"] = args.replicas
    if experiment is not None:
        over["experiment.name"] = experiment
    return parse_config(text, over)


def _out_dir(args, rc: RunConfig | None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if rc is not None:
        return Path(rc.data["output"]["directory"])
    return Path("out")


def _run(args, experiment: str) -> int:
    from .experiments import mc_drive

    rc = _load(args, experiment)
    report = mc_drive(experiment, rc, workers=args.workers)
    out = _out_dir(args, rc)
    files = write_report(report, out, rc.to_toml())
    code = EXIT_OK if report.valid else EXIT_INVALID
    write_manifest(out, report.config_digest, report.seed, report.name, files, report.runtime, code,
                   {"missing_replicas": report.missing_replicas, "flags": report.flags})
    _print_summary(report)
    return code


def _print_summary(report):
    print(f"experiment: {report.name}  digest: {report.config_digest[:16]}  replicas: {len(report.per_replica)}")
    for k, v in report.summary.items():
        print(f"  {k}: {fmt(v)}")
    if report.flags:
        print("  flags: " + ", ".join(report.flags))
    if report.missing_replicas:
        print(f"  missing replicas: {fmt(report.missing_replicas)}", file=sys.stderr)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    return _run(args, "simulate")


def cmd_compare(args) -> int:
    kind = args.kind
    if kind is None:
        name = parse_config(Path(args.config).read_text()).experiment["name"]
        kind = "boundary" if name == "boundary" else "line"
    return _run(args, "line_vs_dirichlet" if kind == "line" else "boundary")


def cmd_convergence(args) -> int:
    return _run(args, "epsilon_convergence")


def cmd_mc(args) -> int:
    rc = _load(args)
    return _run(args, rc.experiment["name"])


def _osgood_model(args):
    from .model import make_model

    data = {"model": {}}
    if args.config:
        data = {"model": parse_config(Path(args.config).read_text()).data["model"]}
    m = data["model"]
    if args.drift or args.param:
        raw = {"drift": args.drift or m.get("drift", "power")}
        for item in args.param:
            name, _, value = item.partition("=")
            raw[name.strip()] = float(value)
        return parse_config(_model_toml(raw)).model()
    if args.config:
        from .config import _build_model

        return _build_model(m)
    return make_model("power", "linear")


def _model_toml(raw: dict) -> str:
    lines = ["[model]"]
    for k, v in raw.items():
        lines.append(f"{k} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


def cmd_osgood(args) -> int:
    from .model import assumption_report, osgood_integral, osgood_partial_integrals, osgood_sum, osgood_time

    for item in args.param:
        if "=" not in item:
            print(f"error: --param expects NAME=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_USAGE
    model = _osgood_model(args)
    s = osgood_sum(model, n_max=args.n_max)
    ints = osgood_partial_integrals(model, n_max=args.n_max)
    integral = osgood_integral(model, 1.0, 1e6)
    t_star = osgood_time(model, args.c)
    rep = assumption_report(model)
    print(f"model: {model.name}")
    print(f"dyadic sum verdict: {s.verdict}  S_{s.indices[-1]} = {s.last!r}")
    print(f"integral verdict: {ints.verdict}  sum of dyadic integrals = {ints.last!r}")
    print(f"integral of 1/b over [1, 1e6] = {integral!r}")
    print(f"T*({args.c:g}) = {t_star!r}")
    print(f"ratio sup f = {rep.ratio_sup_f!r}  ratio sup g = {rep.ratio_sup_g!r}  (gamma = {rep.gamma:g})")
    for gm, (rf, rg) in rep.gamma_sensitivity.items():
        print(f"  gamma {gm:g}: f {rf!r}  g {rg!r}")
    print(f"growth bound ok: {rep.growth_exponent_ok}  worst ratio {rep.growth_worst_ratio!r}  eta {rep.eta_used:g}")
    print(f"d1 = {rep.d1!r}  d2 = {rep.d2!r}  grid {rep.grid_used}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        digest = hashlib.sha256(canonical_json({"model": model.name, "c": args.c, "n_max": args.n_max}).encode()).hexdigest()
        head = header_lines(digest, "", "osgood")
        rows = zip(s.indices, s.terms, s.partial_sums, ints.terms, ints.partial_sums)
        path = write_table(out / "osgood.tsv", head, ["n", "term", "partial_sum", "integral_increment", "integral_sum"], rows)
        write_manifest(out, digest, None, "osgood", [path], None, EXIT_OK,
                       {"sum_verdict": s.verdict, "integral_verdict": ints.verdict,
                        "osgood_time": t_star if math.isfinite(t_star) else "inf"})
    return EXIT_OK


def cmd_kernel_dump(args) -> int:
    from .lattice import Boundary, LatticeDomain, kernel_matrix, walk_kernel_row

    rc = parse_config(Path(args.config).read_text()) if args.config else None
    eps = args.epsilon if args.epsilon is not None else (rc.data["domain"]["epsilon"] if rc else 2.0**-5)
    bnd = Boundary.parse(args.boundary or (rc.data["domain"]["boundary"] if rc else "dirichlet"))
    t = args.t if args.t is not None else (rc.data["solver"]["t_end"] if rc else 0.01)
    if bnd is Boundary.FREE_TRUNCATED:
        hw = rc.half_width() if rc else 24.0 * math.sqrt(t)
        dom = LatticeDomain.truncated_line(eps, hw)
    else:
        dom = LatticeDomain.unit_interval(eps, bnd)
    if args.method == "bessel":
        # free-walk values P_t((i - j) eps), no boundary rule
        row = walk_kernel_row(t, eps, dom.n_sites)
        K = row[np.abs(dom.indices[:, None] - dom.indices[None, :])]
    else:
        K = kernel_matrix(t, dom, method=args.method).entries
    params = {"epsilon": eps, "boundary": bnd.value, "t": t, "method": args.method,
              "origin": int(dom.origin_index), "end": int(dom.end_index)}
    digest = rc.digest if rc else hashlib.sha256(canonical_json(params).encode()).hexdigest()
    out = _out_dir(args, rc)
    out.mkdir(parents=True, exist_ok=True)
    head = header_lines(digest, rc.seed if rc else "", "kernel-dump") + [f"# parameters: {canonical_json(params)}"]
    idx = dom.indices
    rows = ((t, idx[a], idx[b], K[a, b]) for a in range(K.shape[0]) for b in range(K.shape[1]))
    path = write_table(out / "kernel.tsv", head, ["t", "i", "j", "value"], rows)
    write_manifest(out, digest, rc.seed if rc else None, "kernel-dump", [path], None, EXIT_OK,
                   {"row_sums_min": float(np.min(K.sum(axis=1))), "row_sums_max": float(np.max(K.sum(axis=1)))})
    print(f"wrote {path} ({K.shape[0]} x {K.shape[1]})")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "osgood": cmd_osgood,
    "convergence": cmd_convergence,
    "mc": cmd_mc,
    "kernel-dump": cmd_kernel_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for issue in exc.issues:
            print(f"  {issue}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, ModelDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, ResourceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
