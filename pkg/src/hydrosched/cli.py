"""Command-line front end.

Usage::

    hydrosched solve scenario.json [--certify] [--render] [--out DIR] [--tol X]
    hydrosched oracle scenario.json [--grid]
    hydrosched compare scenario.json
    hydrosched sweep scenario.json --param eta --from 0 --to 0.9 --step 0.3
    hydrosched audit scenario.json

Exit status is 0 on success, 1 when the scenario cannot be read or a sweep
range breaks the scenario invariants, and 2 when a solver or certification
step fails.  Errors are reported as a JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hybrid import KKT_TOL, ORACLE_GAP_TOL, certify, lemma_audit, solve, verify_kkt
from .instances import SEED_ENV, seed_from_env
from .model import Policy, Scenario, ScenarioError, build_epochs, check_feasible, load_scenario, split_arrivals, throughput
from .oracle import barrier_solve, grid_oracle
from .report import render_svg, write_schedule

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
MONOTONE_TOL = 1e-9
GRID_MAX_EPOCHS = 3


@dataclass
class SweepSpec:
    param: str
    start: float
    stop: float
    step: float

    def values(self) -> np.ndarray:
        if self.param not in ("eta", "e_max"):
            raise ScenarioError(f"cannot sweep {self.param!r}; use eta or e_max", "param")
        if self.step <= 0:
            raise ScenarioError("sweep step must be positive", "step")
        if self.stop < self.start:
            raise ScenarioError("sweep end lies below its start", "to")
        count = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(count), 12)


@dataclass
class RunConfig:
    command: str
    input: Path
    out: Path | None = None
    tol: float = KKT_TOL
    certify: bool = False
    render: bool = False
    grid: bool = False
    sweep: SweepSpec | None = None
    seed: int = field(default_factory=seed_from_env)


class SolverFailure(RuntimeError):
    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hydrosched", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="staged solve, schedule CSV and JSON report")
    p.add_argument("scenario", type=Path)
    p.add_argument("--certify", action="store_true", help="cross-check against the barrier oracle")
    p.add_argument("--render", action="store_true", help="also write an SVG water-level diagram")
    p.add_argument("--out", type=Path, default=Path("hydrosched_out"))
    p.add_argument("--tol", type=float, default=KKT_TOL, help="KKT residual tolerance")

    p = sub.add_parser("oracle", help="barrier interior-point solve")
    p.add_argument("scenario", type=Path)
    p.add_argument("--grid", action="store_true", help=f"also run the grid search (N <= {GRID_MAX_EPOCHS})")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--tol", type=float, default=KKT_TOL)

    p = sub.add_parser("compare", help="staged solve against both oracles")
    p.add_argument("scenario", type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("sweep", help="throughput over a range of eta or e_max")
    p.add_argument("scenario", type=Path)
    p.add_argument("--param", required=True, choices=("eta", "e_max"))
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("audit", help="KKT and structural checks of the staged solution")
    p.add_argument("scenario", type=Path)
    p.add_argument("--tol", type=float, default=KKT_TOL)
    return ap


def parse_args(argv: list[str] | None = None) -> RunConfig:
    ns = _parser().parse_args(argv)
    sweep = None
    if ns.command == "sweep":
        sweep = SweepSpec(ns.param, ns.start, ns.stop, ns.step)
    return RunConfig(
        command=ns.command,
        input=ns.scenario,
        out=getattr(ns, "out", None),
        tol=getattr(ns, "tol", KKT_TOL),
        certify=getattr(ns, "certify", False),
        render=getattr(ns, "render", False),
        grid=getattr(ns, "grid", False),
        sweep=sweep,
    )


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _error(kind: str, message: str, **extra) -> None:
    payload = {"error": kind, "message": message}
    payload.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(payload) + "\n")


def _policy_deviation(a: Policy, b: Policy) -> dict:
    diff = lambda x, y: float(np.max(np.abs(x - y), initial=0.0))  # noqa: E731
    return {
        "p_sc": diff(a.p_sc, b.p_sc),
        "p_b": diff(a.p_b, b.p_b),
        "delta": diff(a.delta, b.delta),
        "water_level": diff(a.water_levels, b.water_levels),
    }


def run_solve(cfg: RunConfig, scenario: Scenario) -> int:
    report = solve(scenario, certify_with_oracle=cfg.certify, kkt_tol=cfg.tol)
    grid = build_epochs(scenario)
    out = cfg.out or Path("hydrosched_out")
    out.mkdir(parents=True, exist_ok=True)
    write_schedule(out / "schedule.csv", report.policy, grid)
    doc = report.as_dict()
    doc["feasible"] = not check_feasible(report.policy, scenario)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if cfg.render:
        (out / "water_levels.svg").write_text(render_svg(report.policy, grid, scenario.eta), encoding="utf-8")
    _emit(
        {
            "throughput_nats": report.throughput_nats,
            "log_base": "e",
            "kkt": report.kkt.verdict,
            "oracle_gap": report.oracle_gap,
            "out": str(out),
        }
    )
    return EXIT_OK


def run_oracle(cfg: RunConfig, scenario: Scenario) -> int:
    grid = build_epochs(scenario)
    policy, m = barrier_solve(scenario, return_multipliers=True)
    doc = {
        "throughput_nats": throughput(policy, grid),
        "log_base": "e",
        "kkt_residuals": verify_kkt(policy, m, scenario, cfg.tol).as_dict(),
        "policy": {"p_sc": policy.p_sc.tolist(), "p_b": policy.p_b.tolist(), "delta": policy.delta.tolist()},
    }
    if cfg.grid:
        if grid.n > GRID_MAX_EPOCHS:
            raise ScenarioError(f"grid search needs at most {GRID_MAX_EPOCHS} epochs, got {grid.n}", "arrivals")
        doc["grid_throughput_nats"] = throughput(grid_oracle(scenario), grid)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        write_schedule(cfg.out / "oracle_schedule.csv", policy, grid)
    _emit(doc)
    return EXIT_OK


def compare(scenario: Scenario) -> dict:
    grid = build_epochs(scenario)
    staged = solve(scenario).policy
    barrier = barrier_solve(scenario)
    values = {"staged": throughput(staged, grid), "barrier": throughput(barrier, grid)}
    policies = {"staged": staged, "barrier": barrier}
    if grid.n <= GRID_MAX_EPOCHS:
        policies["grid"] = grid_oracle(scenario)
        values["grid"] = throughput(policies["grid"], grid)
    gaps, deviation = {}, {}
    names = list(values)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            key = f"{a}-{b}"
            gaps[key] = abs(values[a] - values[b]) / max(1.0, abs(values[b]))
            deviation[key] = _policy_deviation(policies[a], policies[b])
    verdict = "PASS" if gaps["staged-barrier"] <= ORACLE_GAP_TOL else "FAIL"
    doc = {"throughput_nats": values, "relative_gap": gaps, "max_deviation": deviation, "verdict": verdict}
    if verdict == "FAIL":
        doc["instance"] = scenario.to_dict()
    return doc


def run_compare(cfg: RunConfig, scenario: Scenario) -> int:
    doc = compare(scenario)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / "compare.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    _emit(doc)
    if doc["verdict"] == "FAIL":
        _error("oracle_mismatch", f"staged solve differs from the barrier oracle by {doc['relative_gap']['staged-barrier']:.3g}")
        return EXIT_SOLVER
    return EXIT_OK


def sweep(scenario: Scenario, spec: SweepSpec) -> tuple[list[dict], list[float]]:
    """Solve once per grid value; returns the rows and the values where throughput dropped."""
    values = spec.values()
    variants = [scenario.replace(**{spec.param: float(v)}) for v in values]  # validates the whole range first
    rows = []
    for value, variant in zip(values, variants):
        try:
            rep = solve(variant)
        except Exception as exc:  # noqa: BLE001 - any solver error aborts the sweep
            raise SolverFailure(f"solve failed: {exc}", value=float(value)) from exc
        ell = build_epochs(variant).lengths
        rows.append(
            {
                "value": float(value),
                "throughput": rep.throughput_nats,
                "total_delta": float(np.sum(rep.policy.delta * ell)),
                "battery_epochs": int(np.count_nonzero(rep.policy.p_b > 1e-9)),
            }
        )
    drops = [
        rows[k]["value"]
        for k in range(1, len(rows))
        if rows[k]["throughput"] < rows[k - 1]["throughput"] - MONOTONE_TOL
    ]
    return rows, drops


def run_sweep(cfg: RunConfig, scenario: Scenario) -> int:
    rows, drops = sweep(scenario, cfg.sweep)
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        with open(cfg.out / f"sweep_{cfg.sweep.param}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})
    _emit({"param": cfg.sweep.param, "rows": rows, "monotone": not drops, "drops_at": drops})
    if drops:
        _error("not_monotone", f"throughput decreases in {cfg.sweep.param}", values=drops)
        return EXIT_SOLVER
    return EXIT_OK


def run_audit(cfg: RunConfig, scenario: Scenario) -> int:
    report = solve(scenario, kkt_tol=cfg.tol)
    _, kkt = certify(report.policy, scenario, cfg.tol)
    lemmas = lemma_audit(report.policy, split_arrivals(scenario))
    violations = check_feasible(report.policy, scenario)
    doc = {
        "throughput_nats": report.throughput_nats,
        "feasible": not violations,
        "violations": [(v.kind, v.epoch, v.amount) for v in violations],
        "kkt": kkt.as_dict(),
        "lemmas": lemmas.verdicts(),
        "lemma_offenders": lemmas.offenders,
    }
    _emit(doc)
    return EXIT_OK if kkt.passed and lemmas.passed and not violations else EXIT_SOLVER


COMMANDS = {
    "solve": run_solve,
    "oracle": run_oracle,
    "compare": run_compare,
    "sweep": run_sweep,
    "audit": run_audit,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    cfg = parse_args(argv)
    try:
        scenario = load_scenario(cfg.input)
        if cfg.sweep is not None:
            cfg.sweep.values()
    except ScenarioError as exc:
        _error("invalid_input", str(exc), field=exc.field, path=str(cfg.input))
        return EXIT_INPUT
    log.debug("%s=%d", SEED_ENV, cfg.seed)
    try:
        return COMMANDS[cfg.command](cfg, scenario)
    except ScenarioError as exc:
        _error("invalid_input", str(exc), field=exc.field)
        return EXIT_INPUT
    except SolverFailure as exc:
        _error("solver_failure", str(exc), **exc.context)
        return EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001
        _error("solver_failure", f"{type(exc).__name__}: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
