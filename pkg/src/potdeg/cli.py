"""Configuration-driven experiment runner.

Each command replays one verification suite from a JSON config and writes a
JSON report (inputs, seed, outputs, tolerances, pass flags) plus CSV tables
for convergence-style data.  Exit code 0 iff every assertion passed, 1 on
suite failure, 2 on config problems.  Reports are never overwritten without
--force-overwrite.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bie, degree, hammerstein, potentials, solver, symbols
from .errors import ConfigInvalid, PotdegError
from .geometry import make_unit_sphere, volume_grid_from_mesh

SCHEMAS = {
    "solid-angle": {"level": 3, "n_points": 10},
    "jump-test": {"level": 4, "n_nodes": 10},
    "dtn": {"level": 3},
    "symbols": {"spec": "laplacian"},
    "hammerstein-solve": {"problem": None, "tol": 1e-10, "max_iter": 500},
    "hammerstein-degree": {"problem": None, "N": 0, "samples": 20},
    "poisson": {"level": 3, "grid": 24},
    "convergence": {"level": 3, "grid": 16, "tol": 1e-9},
}

_DEFAULT_PROBLEM = {
    "domain": {"kind": "interval", "a": 0.0, "b": 1.0, "n": 41},
    "M": 1.0,
    "kernel": {"kind": "constant", "value": 0.3},
    "psi": {"kind": "linear", "slope": 1.0},
    "g": {"kind": "constant", "value": 0.2},
}


@dataclass
class RunConfig:
    command: str
    parameters: dict
    seed: int
    output_path: str

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        allowed = {"command", "parameters", "seed", "output_path"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        if "command" not in data:
            raise ConfigInvalid("config needs a command")
        cmd = data["command"]
        if cmd not in SCHEMAS:
            raise ConfigInvalid(f"unknown command {cmd!r}; known: {sorted(SCHEMAS)}")
        params = dict(SCHEMAS[cmd])
        given = data.get("parameters", {})
        bad = set(given) - set(params)
        if bad:
            raise ConfigInvalid(f"unknown parameters for {cmd}: {sorted(bad)}")
        params.update(given)
        return RunConfig(command=cmd, parameters=params,
                         seed=int(data.get("seed", 0)),
                         output_path=str(data.get("output_path", "runs")))


def _check(name, value, tolerance, passed):
    return {"name": name, "value": value, "tolerance": tolerance, "passed": bool(passed)}


def _run_solid_angle(params, seed):
    mesh = make_unit_sphere(int(params["level"]))
    rng = np.random.default_rng(seed)
    n = int(params["n_points"])
    checks = []
    for _ in range(n):
        x = rng.normal(size=3)
        x = x / np.linalg.norm(x) * rng.uniform(0.0, 0.7)
        om = potentials.solid_angle(mesh, x)
        checks.append(_check("interior", om, "4pi relative 1%",
                             abs(om + 4 * np.pi) <= 0.01 * 4 * np.pi))
    for _ in range(n):
        x = rng.normal(size=3)
        x = x / np.linalg.norm(x) * rng.uniform(1.5, 5.0)
        om = potentials.solid_angle(mesh, x)
        checks.append(_check("exterior", om, "abs 0.05", abs(om) <= 0.05))
    for i in rng.choice(mesh.n_nodes, n, replace=False):
        om = potentials.solid_angle(mesh, mesh.nodes[i], principal_value=True)
        checks.append(_check("boundary", om, "2pi relative 3%",
                             abs(om + 2 * np.pi) <= 0.03 * 2 * np.pi))
    return {"checks": checks}, None


def _run_jump_test(params, seed):
    mesh = make_unit_sphere(int(params["level"]))
    rng = np.random.default_rng(seed)
    v = 1.0 + 0.5 * mesh.nodes[:, 2]
    checks = []
    for i in rng.choice(mesh.n_nodes, int(params["n_nodes"]), replace=False):
        P0, n0, h = mesh.nodes[i], mesh.normals[i], mesh.node_spacing[i]

        def diff(d):
            din = potentials.double_layer(mesh, v, P0 - d * n0,
                                          potentials.KernelConvention.NEWTON)
            dout = potentials.double_layer(mesh, v, P0 + d * n0,
                                           potentials.KernelConvention.NEWTON)
            return din - dout

        est = 2.0 * diff(h / 4) - diff(h / 2)
        checks.append(_check(f"jump@node{i}", est, f"v = {v[i]:.4f} within 5%",
                             abs(est - v[i]) <= 0.05 * abs(v[i])))
    return {"checks": checks}, None


def _run_dtn(params, seed):
    mesh = make_unit_sphere(int(params["level"]))
    sys_ = bie.assemble_neumann_system(mesh)
    z = mesh.nodes[:, 2]
    q = mesh.nodes[:, 2] ** 2 - (mesh.nodes[:, 0] ** 2 + mesh.nodes[:, 1] ** 2) / 2
    checks = []
    a5 = bie.solve_neumann_data(sys_, np.ones(mesh.n_nodes))
    checks.append(_check("constant", float(np.max(np.abs(a5))), "max 2e-2",
                         np.max(np.abs(a5)) <= 2e-2))
    a5z = bie.solve_neumann_data(sys_, z)
    err = float(np.linalg.norm(a5z - z) / np.linalg.norm(z))
    checks.append(_check("degree1", err, "rel L2 2%", err <= 0.02))
    a5q = bie.solve_neumann_data(sys_, q)
    errq = float(np.linalg.norm(a5q - 2 * q) / np.linalg.norm(2 * q))
    checks.append(_check("degree2", errq, "rel L2 3%", errq <= 0.03))
    a50 = sys_.solve(np.zeros(mesh.n_nodes))
    checks.append(_check("homogeneous", float(np.max(np.abs(a50))), "1e-10",
                         np.max(np.abs(a50)) <= 1e-10))
    return {"checks": checks, "condition_estimate": sys_.condition_estimate}, None


_SYMBOL_CASES = {
    "laplacian": (["u_xx"], {"C7": [[-1]], "C9": [[-1]]}),
    "u_resolved": (["u"], {"C1": [[-1]]}),
    "ux_resolved": (["u_x"], {"C1": [[-1]]}),
}


def _run_symbols(params, seed):
    spec_in = params["spec"]
    if isinstance(spec_in, str):
        if spec_in not in _SYMBOL_CASES:
            raise ConfigInvalid(f"unknown symbols case {spec_in!r}")
        names, blocks = _SYMBOL_CASES[spec_in]
        spec = symbols.ResolutionSpec.parse(1, names)
        pset = symbols.ParameterSet.from_dense(1, **blocks)
    else:
        spec = symbols.ResolutionSpec.parse(int(spec_in["m"]), list(spec_in["resolved"]))
        pset = symbols.ParameterSet.from_dense(spec.m, **spec_in.get("params", {}))
    B1, B2 = symbols.build_symbol_matrices(spec, pset)
    det, a1, a1inv = symbols.symbolic_det_and_inverse_factor(B1)
    budget, report = symbols.check_conditions(a1, a1inv, a1inv @ B2,
                                              raise_on_fail=False)
    rng = np.random.default_rng(seed)
    match = True
    for _ in range(20):
        xi = rng.normal(size=3) * 2
        direct = np.linalg.det(B1.eval_xi(xi))
        poly = det.eval_xi(xi)
        if abs(direct - poly) > 1e-8 * max(abs(direct), 1.0):
            match = False
    checks = [
        _check("det_matches_direct", match, "1e-8 relative at 20 points", match),
        _check("c316", report["conditions"]["c316"], "locally integrable",
               report["conditions"]["c316"]),
        _check("c317", report["conditions"]["c317"], "weighted inverse integrable",
               report["conditions"]["c317"]),
    ]
    return {"checks": checks, "symbol_report": report}, None


def _run_hammerstein_solve(params, seed):
    spec = params["problem"] or _DEFAULT_PROBLEM
    p = hammerstein.problem_from_spec(spec)
    sol = hammerstein.picard_solve(p, float(params["tol"]), int(params["max_iter"]))
    checks = [_check("residual", sol.residual_inf, params["tol"],
                     sol.residual_inf <= 10 * float(params["tol"]))]
    return {"checks": checks, "iterations": sol.iterations,
            "values_head": sol.values[:8].tolist()}, None


def _run_hammerstein_degree(params, seed):
    spec = params["problem"] or _DEFAULT_PROBLEM
    p = hammerstein.problem_from_spec(spec)
    cert = degree.leray_schauder_degree(p, int(params["N"]), int(params["samples"]), seed)
    checks = [_check("budget_kernel", cert.sup_error_kernel, cert.tau_estimate / 3,
                     cert.sup_error_kernel <= cert.tau_estimate / 3),
              _check("budget_offset", cert.sup_error_offset, cert.tau_estimate / 3,
                     cert.sup_error_offset <= cert.tau_estimate / 3)]
    found = None
    if cert.degree != 0:
        sol = degree.existence_from_degree(cert, p)
        found = sol.residual_inf
        checks.append(_check("existence_residual", found, 1e-8, found <= 1e-7))
    return {"checks": checks, "certificate": json.loads(cert.to_json()),
            "solution_residual": found}, None


def _run_poisson(params, seed):
    mesh = make_unit_sphere(int(params["level"]))
    g = int(params["grid"])
    grid = volume_grid_from_mesh(mesh, (g, g, g), [-1, -1, -1], [1, 1, 1])
    sys_ = bie.assemble_neumann_system(mesh)
    ones = np.ones(grid.n_cells)
    a5 = bie.solve_neumann_data(sys_, np.zeros(mesh.n_nodes),
                                volume_source=ones, grid=grid)
    u0 = bie.evaluate_representation(mesh, grid, np.zeros(mesh.n_nodes), a5, ones,
                                     [0.0, 0.0, 0.0])
    checks = [_check("u_center", u0, "1/6 within 3%", abs(u0 - 1 / 6) <= 0.03 / 6)]
    return {"checks": checks, "u_center": u0}, None


def _run_convergence(params, seed):
    mesh = make_unit_sphere(int(params["level"]))
    g = int(params["grid"])
    grid = volume_grid_from_mesh(mesh, (g, g, g), [-1, -1, -1], [1, 1, 1])
    r2 = np.einsum("cd,cd->c", grid.centers, grid.centers)
    ustar = (1.0 - r2) / 6.0
    prob = solver.SemilinearProblem(
        mesh=mesh, grid=grid, a1=np.zeros(mesh.n_nodes),
        a1_gradient=np.zeros((mesh.n_nodes, 3)),
        psi1=lambda u, gx, gy, gz, X, us=ustar: 1.0 + (u - us),
        M=1.0, lipschitz=(1.0, 0.0, 0.0, 0.0))
    state, history = solver.solve_semilinear(prob, float(params["tol"]))
    report = solver.convergence_report(history)
    u = state.u.values.reshape(-1)[grid.inside_index]
    err = float(np.linalg.norm(u - ustar) / np.linalg.norm(ustar))
    ratio = history[-1]["residual_negnorm"] / history[0]["residual_negnorm"]
    checks = [
        _check("field_error", err, "rel L2 3%", err <= 0.03),
        _check("negnorm_decay", ratio, "1e-3 of initial", ratio <= 1e-3),
        _check("tail_monotone", report["tail_monotone"], "5% slack",
               report["tail_monotone"]),
    ]
    csv_rows = [("epsilon", "iter", "residual_inf", "residual_negnorm")]
    csv_rows += [(h["eps"], h["iter"], h["residual_inf"], h["residual_negnorm"])
                 for h in history]
    return {"checks": checks, "report": report}, csv_rows


_RUNNERS = {
    "solid-angle": _run_solid_angle,
    "jump-test": _run_jump_test,
    "dtn": _run_dtn,
    "symbols": _run_symbols,
    "hammerstein-solve": _run_hammerstein_solve,
    "hammerstein-degree": _run_hammerstein_degree,
    "poisson": _run_poisson,
    "convergence": _run_convergence,
}


def run_experiment(config, force_overwrite: bool = False):
    """Validate, run, and write report files; returns (exit_code, report_dict)."""
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    out_dir = Path(cfg.output_path)
    report_path = out_dir / f"{cfg.command}-report.json"
    csv_path = out_dir / f"{cfg.command}-history.csv"
    if report_path.exists() and not force_overwrite:
        raise ConfigInvalid(f"{report_path} exists; reports are append-only "
                            "(pass --force-overwrite)")
    body, csv_rows = _RUNNERS[cfg.command](cfg.parameters, cfg.seed)
    all_passed = all(c["passed"] for c in body.get("checks", []))
    report = {
        "command": cfg.command,
        "config": {"command": cfg.command, "parameters": cfg.parameters,
                   "seed": cfg.seed, "output_path": cfg.output_path},
        "seed": cfg.seed,
        "passed": all_passed,
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        **body,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    if csv_rows:
        with open(csv_path, "w", newline="") as f:
            csv.writer(f).writerows(csv_rows)
    return (0 if all_passed else 1), report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="potdeg",
                                     description="experiment runner")
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--output", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--force-overwrite", action="store_true")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.output is not None:
        data["output_path"] = args.output
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        code, report = run_experiment(data, force_overwrite=args.force_overwrite)
    except ConfigInvalid as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return 2
    except PotdegError as exc:
        print(f"suite failed: {exc}", file=sys.stderr)
        return 1
    for c in report.get("checks", []):
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"[{flag}] {report['command']}: {c['name']} = {c['value']} "
              f"(tolerance {c['tolerance']})")
    return code


if __name__ == "__main__":
    sys.exit(main())
