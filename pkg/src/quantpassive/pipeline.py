"""Scenario orchestration: simulate, analyze, write run directories and sweeps."""

from __future__ import annotations

import csv
import platform
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analysis import (check_average_invariance, check_diameter_bound, check_feedforward_passivity,
                       check_lyapunov_monotone, check_output_disagreement, check_practical_consensus,
                       check_sync_radius, check_velocity_tracking, compare_prior_bound, compute_sync_constants,
                       disagreement_metric, final_disagreement, regulation_gain, solve_regulator_equations, spr_check, sync_bound)
from .exceptions import ScenarioError
from .graph import diameter, incidence_matrix, laplacian_spectrum
from .io import write_events_jsonl, write_json, write_trajectory_csv
from .scenario import PRNG_ALGORITHM, Scenario
from .simulate import (Trajectory, run_coordination, run_estimator, run_output_regulation, run_synchronization)


def simulate_scenario(s: Scenario, quantized: bool = True) -> Trajectory:
    """Run the simulator for the scenario's mode; ``quantized=False`` gives the unquantized baseline."""
    q = s.quantizer if quantized else None
    ini = s.initial
    if s.mode == "coordination":
        return run_coordination(s.graph, s.agents, q, s.config, ini["x"], ini["xi"])
    if s.mode == "estimator":
        return run_estimator(s.graph, s.agents, q, s.config, ini["x"], ini["xi"], ini["vhat"],
                             s.estimator.gains, s.estimator.leader)
    if s.mode == "synchronization":
        return run_synchronization(s.graph, s.system.system(), q, s.config, ini["xi"])
    return run_output_regulation(s.graph, s.system.system(), s.plants, q, s.config, ini["xi"], ini["plant"],
                                 ini["observer"])


def _reports_entry(name, reports):
    reports = list(reports)
    return {"check": name, "passed": all(r.passed for r in reports), "reports": [r.to_dict() for r in reports]}


def analyze_trajectory(s: Scenario, traj: Trajectory) -> dict:
    """Run the scenario's configured checks; returns a JSON-ready report."""
    ch = s.checks
    delta = s.quantizer.delta
    q = s.quantizer if traj.quantized else None
    results = []
    constants = None
    consts_obj = None
    D = incidence_matrix(s.graph)
    if s.mode in ("synchronization", "regulation") and (
            "sync_radius" in ch.names or "output_disagreement" in ch.names):
        sysm = s.system.system()
        consts_obj = compute_sync_constants(sysm.A, sysm.B, sysm.C, D)
        constants = consts_obj.to_dict()
    for name in ch.names:
        if name == "practical_consensus":
            results.append(_reports_entry(name, check_practical_consensus(traj, delta, ch.window, ch.tol)))
        elif name == "velocity_tracking":
            results.append(_reports_entry(name, [check_velocity_tracking(traj, ch.window, ch.tol)]))
        elif name == "diameter_bound":
            results.append(_reports_entry(name, check_diameter_bound(traj, s.graph, delta, ch.window, ch.tol)))
        elif name == "lyapunov":
            results.append(_reports_entry(name, [check_lyapunov_monotone(traj, ch.lyapunov_tol)]))
        elif name == "feedforward":
            results.append(_reports_entry(name, [check_feedforward_passivity(traj, q, ch.lyapunov_tol)]))
        elif name == "prior_bound":
            cmp = compare_prior_bound(s.graph, delta)
            results.append({"check": name, "passed": True, "ours": cmp.ours, "prior": cmp.prior, "rho": cmp.rho,
                            "ratio": cmp.ratio, "informational": True})
        elif name == "estimator_convergence":
            err = float(traj.diagnostics["estimate_error"][-1])
            results.append({"check": name, "passed": err <= ch.estimate_tol, "value": err, "tol": ch.estimate_tol})
        elif name == "sync_radius":
            sysm = s.system.system()
            rep = check_sync_radius(traj, consts_obj, sysm.B, D, sysm.p, s.graph.num_edges, delta, ch.window, ch.tol)
            results.append(_reports_entry(name, [rep]))
        elif name == "average_invariance":
            val = check_average_invariance(traj, s.system.system().A)
            results.append({"check": name, "passed": val <= ch.average_tol, "value": val, "tol": ch.average_tol})
        elif name == "spr":
            sysm = s.system.system()
            spec = laplacian_spectrum(D)
            res = spr_check(sysm.A, sysm.B, sysm.C, spec.lambda2, spec.lambdaN)
            results.append({"check": name, "passed": res.passed, "worst_frequency": res.worst_frequency,
                            "min_eigenvalue": res.min_eigenvalue, "skipped": list(res.skipped)})
        elif name == "regulator_equations":
            sysm = s.system.system()
            R_out = np.atleast_2d(np.asarray(s.raw["regulation"].get("R_out", sysm.C), dtype=float))
            worst = 0.0
            for pl in s.plants:
                sol = solve_regulator_equations(pl.F, pl.G, pl.H, sysm.A, R_out)
                worst = max(worst, sol.relative_dynamics, sol.relative_output)
            results.append({"check": name, "passed": worst <= 1e-8, "value": worst, "tol": 1e-8})
        elif name == "output_disagreement":
            kappa = regulation_gain(s.plants, s.system.system().B, s.graph)
            rep = check_output_disagreement(traj, delta, kappa, ch.window, ch.tol)
            entry = _reports_entry(name, [rep])
            entry["kappa_reg"] = kappa
            results.append(entry)
    passed = sum(1 for r in results if r["passed"])
    return {
        "scenario": s.name, "mode": s.mode, "delta": delta if traj.quantized else None,
        "quantized": traj.quantized, "events": len(traj.events), "chatter": traj.chatter_count,
        "samples": len(traj.times), "final_time": float(traj.times[-1]),
        "final_disagreement": final_disagreement(traj), "constants": constants, "checks": results,
        "summary": {"passed": passed, "failed": len(results) - passed},
    }


@dataclass(frozen=True)
class RunManifest:
    scenario: str
    scenario_sha256: str
    directory: Path
    files: dict
    versions: dict
    wall_clock_seconds: float
    checks_passed: int
    checks_failed: int
    seed: int

    @property
    def ok(self) -> bool:
        return self.checks_failed == 0

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "scenario_sha256": self.scenario_sha256, "directory": str(self.directory),
                "files": self.files, "versions": self.versions, "wall_clock_seconds": self.wall_clock_seconds,
                "checks": {"passed": self.checks_passed, "failed": self.checks_failed},
                "prng": {"algorithm": PRNG_ALGORITHM, "seed": self.seed}}


def versions() -> dict:
    return {"quantpassive": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def run_directory(out_root: str | Path, s: Scenario, tag: str | None) -> Path:
    if tag is None:
        tag = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    path = Path(out_root) / s.name / tag
    path.mkdir(parents=True, exist_ok=True)
    return path


def _execute(s: Scenario, out_root, tag, analyze: bool, quantized: bool):
    start = time.perf_counter()
    directory = run_directory(out_root, s, tag)
    traj = simulate_scenario(s, quantized=quantized)
    files = {"trajectory": "trajectory.csv", "events": "events.jsonl"}
    write_trajectory_csv(traj, directory / files["trajectory"])
    write_events_jsonl(traj, directory / files["events"])
    report = None
    passed = failed = 0
    if analyze:
        report = analyze_trajectory(s, traj)
        files["analysis"] = "analysis.json"
        write_json(report, directory / files["analysis"])
        passed, failed = report["summary"]["passed"], report["summary"]["failed"]
    files["manifest"] = "manifest.json"
    manifest = RunManifest(s.name, s.sha256, directory, files, versions(), time.perf_counter() - start,
                           passed, failed, s.seed)
    # written last: its presence marks a complete run directory
    write_json(manifest.to_dict(), directory / files["manifest"])
    return manifest, report, traj


def run_and_check(s: Scenario, out_root: str | Path = "out", tag: str | None = None, analyze: bool = True,
                  quantized: bool = True) -> tuple[RunManifest, dict | None]:
    """Simulate, optionally analyze, and write the run directory; the manifest is written last."""
    manifest, report, _ = _execute(s, out_root, tag, analyze, quantized)
    return manifest, report


SWEEP_PARAMS = ("delta", "lambda-scale")


def _trailing_disagreement(s: Scenario, traj: Trajectory) -> float:
    mask = traj.times >= traj.times[-1] - s.checks.window
    if s.mode in ("coordination", "estimator"):
        x = traj.block("x")[mask].reshape(int(mask.sum()), s.graph.num_nodes, -1)
        return float((x.max(axis=1) - x.min(axis=1)).max())
    sysm = s.system.system()
    metric = disagreement_metric(traj.block("xi")[mask], s.graph.num_nodes, sysm.n, sysm.p, s.graph.num_edges)
    return float(metric.max())


def _bound_for(s: Scenario, delta: float) -> float:
    if s.mode in ("coordination", "estimator"):
        return float(diameter(s.graph) * delta)
    sysm = s.system.system()
    D = incidence_matrix(s.graph)
    consts = compute_sync_constants(sysm.A, sysm.B, sysm.C, D)
    return sync_bound(consts, sysm.B, D, sysm.p, s.graph.num_edges, delta)


def sweep(s: Scenario, parameter: str, values, out_root: str | Path = "out", tag: str | None = None,
          baseline: bool = True) -> tuple[Path, list[dict]]:
    """One run per value plus (for ``delta``) the unquantized baseline; writes ``summary.csv``."""
    if parameter not in SWEEP_PARAMS:
        raise ScenarioError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {parameter!r}")
    values = [float(v) for v in values]
    if not values:
        raise ScenarioError("sweep needs at least one value")
    if tag is None:
        tag = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    rows = []
    runs = [(v, True) for v in values]
    if parameter == "delta" and baseline:
        runs.append((values[-1], False))
    for value, quantized in runs:
        sv = s.with_overrides(delta=value) if parameter == "delta" else s.with_overrides(gain_scale=value)
        run_tag = f"{tag}/{parameter}={value:g}" + ("" if quantized else "-baseline")
        _, report, traj = _execute(sv, out_root, run_tag, True, quantized)
        rows.append({
            "parameter": parameter, "value": f"{value:g}" if quantized else "baseline",
            "delta": sv.quantizer.delta if quantized else 0.0,
            "final_disagreement": report["final_disagreement"],
            "trailing_disagreement": _trailing_disagreement(sv, traj),
            "bound": _bound_for(sv, sv.quantizer.delta) if quantized else 0.0,
            "checks_passed": report["summary"]["passed"], "checks_failed": report["summary"]["failed"],
            "events": report["events"], "chatter": report["chatter"],
        })
    directory = Path(out_root) / s.name / tag
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "summary.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path, rows
