"""Offline power scheduling for a transmitter with a super-capacitor and a lossy battery."""
from .hybrid import (
    KKTReport,
    LemmaAudit,
    Multipliers,
    SolveReport,
    certify,
    lemma_audit,
    multipliers_from_policy,
    solve,
    solve_delta_zero,
    transfer_update,
    verify_kkt,
)
from .model import (
    EpochGrid,
    Policy,
    Scenario,
    ScenarioError,
    StorageSplit,
    build_epochs,
    check_feasible,
    load_scenario,
    save_scenario,
    split_arrivals,
    throughput,
)
from .oracle import BarrierConfig, barrier_solve, grid_oracle
from .waterfill import BaseLevels, Tunnel, base_level_waterfill, taut_string_schedule

__all__ = [
    "BarrierConfig",
    "BaseLevels",
    "EpochGrid",
    "KKTReport",
    "LemmaAudit",
    "Multipliers",
    "Policy",
    "Scenario",
    "ScenarioError",
    "SolveReport",
    "StorageSplit",
    "Tunnel",
    "barrier_solve",
    "base_level_waterfill",
    "build_epochs",
    "certify",
    "check_feasible",
    "grid_oracle",
    "lemma_audit",
    "load_scenario",
    "multipliers_from_policy",
    "save_scenario",
    "solve",
    "solve_delta_zero",
    "split_arrivals",
    "taut_string_schedule",
    "throughput",
    "transfer_update",
    "verify_kkt",
]
