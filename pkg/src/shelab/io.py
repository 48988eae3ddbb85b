"""Tab-separated output files and the run manifest.

Every data file starts with a comment block::

    # config_digest: <sha256>
    # seed: <master seed>
    # experiment: <name>

followed by one header line and the rows.  Floats are written with
``repr`` (shortest round-trip form), so two runs with the same seed and
config produce byte-identical files.  Wall-clock quantities (timestamp,
runtime) live only in ``manifest.json``.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import os
import platform
from pathlib import Path

import numpy as np

__all__ = ["fmt", "write_table", "write_report", "write_manifest", "header_lines", "read_table"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def header_lines(digest: str, seed, name: str) -> list:
    return [f"# config_digest: {digest}", f"# seed: {seed}", f"# experiment: {name}"]


def write_table(path, header: list, columns: list, rows) -> Path:
    path = Path(path)
    lines = list(header)
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path) -> tuple[dict, list, list]:
    """Parse a file written by :func:`write_table` into (comments, columns, rows of strings)."""
    meta, cols, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        elif cols is None:
            cols = line.split("\t")
        else:
            rows.append(line.split("\t"))
    return meta, cols or [], rows


def _summary_rows(report) -> list:
    rows = [(k, v) for k, v in report.summary.items()]
    rows += [
        ("max_violation", report.max_violation),
        ("violating_fraction", report.violating_fraction),
        ("flags", report.flags),
        ("missing_replicas", report.missing_replicas),
        ("valid", report.valid),
    ]
    return rows


def write_report(report, out_dir, config_text: str | None = None) -> list:
    """Write the data files of an :class:`ExperimentReport`; return the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = header_lines(report.config_digest, report.seed, report.name)
    paths = [write_table(out / "summary.tsv", head, ["key", "value"], _summary_rows(report))]

    reps = report.per_replica
    cols = []
    for r in reps:
        for k in r:
            if not k.startswith("_") and k not in cols:
                cols.append(k)
    paths.append(write_table(out / "replicas.tsv", head, cols, ([r.get(c) for c in cols] for r in reps)))

    if any("_events" in r for r in reps):
        ev = [(r["replica"], t, n, d) for r in reps for (n, d, t) in r.get("_events", [])]
        paths.append(write_table(out / "events.tsv", head, ["replica", "t", "n", "direction"], ev))

    if any("_trajectory" in r for r in reps):
        def traj_rows():
            for r in reps:
                times, values, idx, pos = r["_trajectory"]
                for t, row in zip(times, values):
                    for i, x, u in zip(idx, pos, row):
                        yield (r["replica"], t, i, x, u)

        paths.append(write_table(out / "trajectory.tsv", head, ["replica", "t", "site", "x", "u"], traj_rows()))

    s = report.summary
    if report.name == "passage" and "n" in s:
        rows = zip(s["n"], s["count"], s["median"], s["q25"], s["q75"], s["t_n"], s["ratio"])
        paths.append(write_table(out / "passage.tsv", head,
                                 ["n", "count", "median", "q25", "q75", "t_n", "ratio"], rows))
    if report.name == "blowup_probability" and "n0" in s:
        rows = ((n0, p, lo, hi, s["replicas"]) for n0, p, lo, hi in zip(s["n0"], s["p_hat"], s["lo"], s["hi"]))
        paths.append(write_table(out / "probability.tsv", head, ["n0", "p_hat", "lo", "hi", "n_replicas"], rows))

    if config_text is not None:
        p = out / "config.toml"
        p.write_text("\n".join(head) + "\n" + config_text)
        paths.append(p)
    return paths


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {"shelab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(out_dir, digest: str, seed, name: str, files, runtime: float | None = None,
                   exit_code: int = 0, extra: dict | None = None) -> Path:
    """``manifest.json``: digest first, then seed, versions, file checksums, timestamp and runtime."""
    out = Path(out_dir)
    entries = {}
    for f in files:
        f = Path(f)
        entries[os.path.relpath(f, out)] = hashlib.sha256(f.read_bytes()).hexdigest()
    data = {
        "config_digest": digest,
        "seed": seed,
        "experiment": name,
        "versions": _versions(),
        "files": entries,
        "exit_code": exit_code,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "runtime_seconds": runtime,
    }
    if extra:
        data.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path
