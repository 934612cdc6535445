"""Problem instances, epoch discretization and the feasibility/objective helpers.

Epochs are 1-based in the math and 0-based in arrays: array slot ``k``
holds epoch ``k + 1``.  Arrival ``E_k`` (``E_0`` being the initial content)
opens epoch ``k + 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

ZERO_TOL = 1e-9
FEAS_TOL = 1e-9

_SCENARIO_KEYS = {"deadline", "e_max", "eta", "initial_sc", "initial_b", "arrivals"}
_ARRIVAL_KEYS = {"t", "E"}


class ScenarioError(ValueError):
    """Raised for malformed or out-of-range problem instances."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class Scenario:
    deadline: float
    arrivals: tuple[tuple[float, float], ...]
    initial_sc: float
    initial_b: float
    e_max: float
    eta: float

    def __post_init__(self):
        object.__setattr__(
            self, "arrivals", tuple((float(t), float(e)) for t, e in self.arrivals)
        )
        self.validate()

    def validate(self) -> None:
        checks = [
            ("deadline", self.deadline),
            ("initial_sc", self.initial_sc),
            ("initial_b", self.initial_b),
            ("e_max", self.e_max),
            ("eta", self.eta),
        ]
        for name, value in checks:
            if not math.isfinite(value):
                raise ScenarioError(f"{name} must be finite, got {value!r}", name)
        if self.deadline <= 0:
            raise ScenarioError("deadline must be positive", "deadline")
        if self.e_max <= 0:
            raise ScenarioError("e_max must be positive", "e_max")
        if not 0 <= self.eta < 1:
            raise ScenarioError("eta must satisfy 0 <= eta < 1", "eta")
        if self.initial_sc < 0 or self.initial_b < 0:
            raise ScenarioError("initial energies must be non-negative")
        if self.initial_sc > self.e_max:
            raise ScenarioError("initial_sc exceeds e_max", "initial_sc")
        prev = 0.0
        for t, e in self.arrivals:
            if not (math.isfinite(t) and math.isfinite(e)):
                raise ScenarioError("arrival entries must be finite", "arrivals")
            if e < 0:
                raise ScenarioError(f"negative arrival energy at t={t}", "arrivals")
            if t <= prev:
                raise ScenarioError(
                    f"arrival times must be strictly increasing inside (0, T); got t={t}",
                    "arrivals",
                )
            prev = t
        if prev >= self.deadline and self.arrivals:
            raise ScenarioError("arrival at or after the deadline", "arrivals")

    @property
    def n_epochs(self) -> int:
        return len(self.arrivals) + 1

    def replace(self, **changes: Any) -> "Scenario":
        data = dict(
            deadline=self.deadline,
            arrivals=self.arrivals,
            initial_sc=self.initial_sc,
            initial_b=self.initial_b,
            e_max=self.e_max,
            eta=self.eta,
        )
        data.update(changes)
        return Scenario(**data)

    @classmethod
    def from_lengths(
        cls,
        lengths: Sequence[float],
        energies: Sequence[float],
        *,
        e_max: float,
        eta: float,
        initial_sc: float,
        initial_b: float = 0.0,
    ) -> "Scenario":
        """Build from epoch lengths and the arrivals opening epochs 2..N."""
        if len(energies) != len(lengths) - 1:
            raise ScenarioError("need one arrival per epoch after the first")
        times = np.cumsum(lengths)
        arrivals = tuple(zip(times[:-1].tolist(), [float(e) for e in energies]))
        return cls(
            deadline=float(times[-1]),
            arrivals=arrivals,
            initial_sc=initial_sc,
            initial_b=initial_b,
            e_max=e_max,
            eta=eta,
        )

    def to_dict(self) -> dict:
        return {
            "deadline": self.deadline,
            "e_max": self.e_max,
            "eta": self.eta,
            "initial_sc": self.initial_sc,
            "initial_b": self.initial_b,
            "arrivals": [{"t": t, "E": e} for t, e in self.arrivals],
        }

    @classmethod
    def from_dict(cls, data: Any) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        unknown = set(data) - _SCENARIO_KEYS
        if unknown:
            key = sorted(unknown)[0]
            raise ScenarioError(f"unknown key {key!r}", key)
        for key in sorted(_SCENARIO_KEYS):
            if key not in data:
                raise ScenarioError(f"missing required field {key!r}", key)
        for key in sorted(_SCENARIO_KEYS - {"arrivals"}):
            if isinstance(data[key], bool) or not isinstance(data[key], (int, float)):
                raise ScenarioError(f"field {key!r} must be a number", key)
        if not isinstance(data["arrivals"], list):
            raise ScenarioError("field 'arrivals' must be a list", "arrivals")
        arrivals = []
        for idx, item in enumerate(data["arrivals"]):
            where = f"arrivals[{idx}]"
            if not isinstance(item, dict):
                raise ScenarioError(f"{where} must be an object", where)
            if set(item) != _ARRIVAL_KEYS:
                extra = set(item) - _ARRIVAL_KEYS
                missing = _ARRIVAL_KEYS - set(item)
                detail = f"unknown key {sorted(extra)[0]!r}" if extra else (
                    f"missing required field {sorted(missing)[0]!r}"
                )
                raise ScenarioError(f"{where}: {detail}", where)
            for key in ("t", "E"):
                if isinstance(item[key], bool) or not isinstance(item[key], (int, float)):
                    raise ScenarioError(f"{where}.{key} must be a number", f"{where}.{key}")
            arrivals.append((item["t"], item["E"]))
        return cls(
            deadline=float(data["deadline"]),
            arrivals=tuple(arrivals),
            initial_sc=float(data["initial_sc"]),
            initial_b=float(data["initial_b"]),
            e_max=float(data["e_max"]),
            eta=float(data["eta"]),
        )


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    return Scenario.from_dict(data)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class EpochGrid:
    boundaries: np.ndarray  # t_0 = 0, ..., t_N = T
    lengths: np.ndarray

    @property
    def n(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True, eq=False)
class StorageSplit:
    """Per-arrival split; index 0 is the initial content."""

    sc_arrivals: np.ndarray
    b_arrivals: np.ndarray


@dataclass(frozen=True, eq=False)
class Policy:
    p_sc: np.ndarray
    p_b: np.ndarray
    delta: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        p_sc = np.asarray(self.p_sc, dtype=float)
        p_b = np.asarray(self.p_b, dtype=float)
        delta = np.zeros_like(p_sc) if self.delta is None else np.asarray(self.delta, dtype=float)
        if not (p_sc.shape == p_b.shape == delta.shape) or p_sc.ndim != 1:
            raise ValueError("p_sc, p_b and delta must be 1-D arrays of equal length")
        object.__setattr__(self, "p_sc", p_sc)
        object.__setattr__(self, "p_b", p_b)
        object.__setattr__(self, "delta", delta)

    @property
    def n(self) -> int:
        return len(self.p_sc)

    @property
    def total_power(self) -> np.ndarray:
        return self.p_sc + self.p_b

    @property
    def water_levels(self) -> np.ndarray:
        return 1.0 + self.p_sc + self.p_b

    @classmethod
    def zeros(cls, n: int) -> "Policy":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


def build_epochs(scenario: Scenario) -> EpochGrid:
    scenario.validate()
    times = [t for t, _ in scenario.arrivals]
    boundaries = np.array([0.0, *times, scenario.deadline])
    lengths = np.diff(boundaries)
    if np.any(lengths <= 0):
        raise ScenarioError("zero-length epoch", "arrivals")
    return EpochGrid(boundaries=boundaries, lengths=lengths)


def split_arrivals(scenario: Scenario) -> StorageSplit:
    raw = np.array([e for _, e in scenario.arrivals], dtype=float)
    sc = np.concatenate([[scenario.initial_sc], np.minimum(raw, scenario.e_max)])
    b = np.concatenate([[scenario.initial_b], np.maximum(raw - scenario.e_max, 0.0)])
    return StorageSplit(sc_arrivals=sc, b_arrivals=b)


def throughput(policy: Policy, grid: EpochGrid | np.ndarray) -> float:
    """Sum of ``l_i / 2 * ln(1 + p_i)`` in nats."""
    lengths = grid.lengths if isinstance(grid, EpochGrid) else np.asarray(grid, dtype=float)
    if len(lengths) != policy.n:
        raise ValueError("policy and grid lengths differ")
    if np.any(policy.p_sc < 0) or np.any(policy.p_b < 0):
        raise ValueError("negative power in policy")
    return float(np.sum(0.5 * lengths * np.log1p(policy.p_sc + policy.p_b)))


def battery_availability(
    scenario: Scenario, b_arrivals: np.ndarray, delta: np.ndarray, lengths: np.ndarray
) -> np.ndarray:
    """Drainable battery energy that becomes usable at the start of each epoch.

    Transfers made during epoch i join the battery for epoch i + 1.
    """
    moved = np.concatenate([[0.0], (delta * lengths)[:-1]])
    return scenario.eta * (b_arrivals + moved)


@dataclass(frozen=True)
class Violation:
    kind: str  # sc_causality | sc_overflow | battery_causality | nonnegativity
    epoch: int  # 1-based
    amount: float


@dataclass(frozen=True, eq=False)
class ConstraintSlacks:
    """Slack of every constraint family; negative entries are violations.

    ``sc_causality[k]``/``battery[k]`` belong to epoch ``k + 1``;
    ``sc_overflow[k]`` to the arrival closing epoch ``k + 1`` (N - 1 entries).
    """

    sc_causality: np.ndarray
    sc_overflow: np.ndarray
    battery: np.ndarray


def constraint_slacks(policy: Policy, scenario: Scenario) -> ConstraintSlacks:
    grid = build_epochs(scenario)
    split = split_arrivals(scenario)
    n = grid.n
    if policy.n != n:
        raise ValueError(f"policy has {policy.n} epochs, scenario has {n}")
    ell = grid.lengths
    sc_out = np.cumsum((policy.p_sc + policy.delta) * ell)
    sc_in = np.cumsum(split.sc_arrivals)  # sc_in[k] = sum_{j<=k} E_j^sc
    causality = sc_in - sc_out
    overflow = scenario.e_max - (sc_in[1:] - sc_out[:-1])
    battery = battery_availability(scenario, split.b_arrivals, policy.delta, ell)
    battery = np.cumsum(battery) - np.cumsum(policy.p_b * ell)
    return ConstraintSlacks(causality, overflow, battery)


def check_feasible(policy: Policy, scenario: Scenario, tol: float = FEAS_TOL) -> list[Violation]:
    slacks = constraint_slacks(policy, scenario)
    out: list[Violation] = []
    for kind, values in (
        ("sc_causality", slacks.sc_causality),
        ("sc_overflow", slacks.sc_overflow),
        ("battery_causality", slacks.battery),
    ):
        for k, s in enumerate(values):
            if s < -tol:
                out.append(Violation(kind, k + 1, float(-s)))
    for name, values in (("p_sc", policy.p_sc), ("p_b", policy.p_b), ("delta", policy.delta)):
        for k, v in enumerate(values):
            if v < -tol:
                out.append(Violation(f"nonnegativity:{name}", k + 1, float(-v)))
    if abs(policy.delta[-1]) > tol:
        out.append(Violation("terminal_transfer", policy.n, float(abs(policy.delta[-1]))))
    return out
