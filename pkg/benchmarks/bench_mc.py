"""Desk-scale throughput check: 1000 replicas of a 64-site lattice for 10^4 Euler steps.

Usage::

    python benchmarks/bench_mc.py [--replicas 1000] [--workers 1]

Prints the wall time of the Monte Carlo run and the per-step cost.
"""

import argparse
import platform
import time

import numpy as np

from shelab.config import parse_config
from shelab.experiments import mc_drive

CONFIG = """
[model]
drift = "power"
sigma = "linear"
beta = 0.5
[domain]
epsilon = 0.015625
boundary = "periodic"
[domain.initial]
kind = "constant"
value = 1.0
[solver]
dt = 6.103515625e-05
t_end = 0.6103515625
[noise]
seed = 2024
replicas = {replicas}
[experiment]
name = "simulate"
chunk_size = 250
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--replicas", type=int, default=1000)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = parse_config(CONFIG.format(replicas=args.replicas))
    n_steps = cfg.solver().n_steps
    n_sites = cfg.domain().n_sites
    # compile the noise kernel outside the timed region
    mc_drive("simulate", cfg, n_replicas=1)

    t0 = time.perf_counter()
    rep = mc_drive("simulate", cfg, workers=args.workers)
    wall = time.perf_counter() - t0

    blown = sum(r["status"] == "blown_up" for r in rep.per_replica)
    site_steps = args.replicas * n_sites * n_steps
    print(f"machine: {platform.machine()} {platform.processor() or ''} python {platform.python_version()}")
    print(f"replicas={args.replicas} sites={n_sites} steps={n_steps} workers={args.workers}")
    print(f"wall time: {wall:.1f} s")
    print(f"throughput: {site_steps / wall / 1e6:.1f} M site-steps/s")
    print(f"blown up before t_end: {blown}  median sup: {np.nanmedian([r['sup'] for r in rep.per_replica]):.4g}")


if __name__ == "__main__":
    main()
