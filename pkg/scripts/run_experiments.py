#!/usr/bin/env python3
"""Replay every experiment command into an output directory.

Usage: python scripts/run_experiments.py [outdir] [--quick]
--quick downsizes the volume-grid commands so the whole battery runs in
well under a minute.
"""

import sys

from potdeg.cli import run_experiment

CONFIGS = [
    {"command": "solid-angle", "parameters": {"level": 3}, "seed": 7},
    {"command": "jump-test", "parameters": {"level": 4, "n_nodes": 10}, "seed": 7},
    {"command": "dtn", "parameters": {"level": 3}, "seed": 0},
    {"command": "symbols", "parameters": {"spec": "laplacian"}, "seed": 1},
    {"command": "symbols", "parameters": {"spec": "u_resolved"}, "seed": 1},
    {"command": "hammerstein-solve", "seed": 3},
    {"command": "hammerstein-degree", "parameters": {"N": 0, "samples": 20}, "seed": 3},
    {"command": "poisson", "parameters": {"level": 3, "grid": 24}, "seed": 0},
    {"command": "convergence", "parameters": {"level": 3, "grid": 16, "tol": 1e-9},
     "seed": 0},
]

QUICK_OVERRIDES = {
    "poisson": {"level": 2, "grid": 12},
    "convergence": {"level": 2, "grid": 8, "tol": 1e-7},
}


def main() -> int:
    args = [a for a in sys.argv[1:] if not a.startswith("--")]
    outdir = args[0] if args else "runs"
    quick = "--quick" in sys.argv
    worst = 0
    for k, cfg in enumerate(CONFIGS):
        cfg = dict(cfg, output_path=f"{outdir}/{k:02d}-{cfg['command']}")
        if quick and cfg["command"] in QUICK_OVERRIDES:
            cfg["parameters"] = {**cfg.get("parameters", {}),
                                 **QUICK_OVERRIDES[cfg["command"]]}
        code, report = run_experiment(cfg, force_overwrite=True)
        print(f"{cfg['command']:20s} exit {code} "
              f"({sum(c['passed'] for c in report['checks'])}/{len(report['checks'])} checks)")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
