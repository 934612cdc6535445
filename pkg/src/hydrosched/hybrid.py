"""Staged solver for the hybrid-storage throughput problem.

Pipeline: the no-transfer schedule (SC taut string, then the battery poured
over the SC water levels), a check of the transfer residuals ``gamma``, and
coordinate ascent over the SC-to-battery transfers while any residual says a
transfer pays.  Multipliers use the per-epoch normalisation in which the
stationarity conditions read ``1 / w_i = u_i - rho1_i = v_i - rho2_i`` with
``w_i = 1 + p_i^sc + p_i^b``, ``u_i`` the SC tail sum ``sum_{j>=i} lambda_j -
sum_{i<=j<N} mu_j`` and ``v_i = sum_{j>=i} nu_j``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .model import (
    FEAS_TOL,
    ZERO_TOL,
    Policy,
    Scenario,
    StorageSplit,
    battery_availability,
    build_epochs,
    check_feasible,
    constraint_slacks,
    split_arrivals,
    throughput,
)
from .waterfill import Tunnel, base_level_waterfill, taut_string_schedule

log = logging.getLogger(__name__)

TOL_IMPROVE = 1e-10
TOL_KKT = 1e-8
KKT_TOL = 1e-6
ORACLE_GAP_TOL = 1e-6


class DualRecoveryError(ValueError):
    """The policy admits no multipliers of the water-filling form."""


@dataclass(frozen=True, eq=False)
class Multipliers:
    lam: np.ndarray  # SC causality, N entries
    mu: np.ndarray  # SC no-overflow, N - 1 entries
    nu: np.ndarray  # battery causality, N entries
    gamma: np.ndarray  # transfer non-negativity, N entries (last unused)
    rho1: np.ndarray
    rho2: np.ndarray

    @property
    def sc_tail(self) -> np.ndarray:
        lam_tail = np.cumsum(self.lam[::-1])[::-1]
        mu_tail = np.concatenate([np.cumsum(self.mu[::-1])[::-1], [0.0]])
        return lam_tail - mu_tail

    @property
    def battery_tail(self) -> np.ndarray:
        return np.cumsum(self.nu[::-1])[::-1]

    def as_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("lam", "mu", "nu", "gamma", "rho1", "rho2")}


@dataclass
class KKTReport:
    stationarity: float
    slackness: float
    feasibility: float
    negativity: float
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return max(self.stationarity, self.slackness, self.feasibility, self.negativity) <= self.tol

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "slackness": self.slackness,
            "feasibility": self.feasibility,
            "negativity": self.negativity,
            "tol": self.tol,
            "verdict": self.verdict,
        }


@dataclass
class TransferResult:
    policy: Policy
    iterations: int
    converged: bool
    history: list[float]


@dataclass
class LemmaAudit:
    offenders: dict[str, list[int]]

    @property
    def passed(self) -> bool:
        return not any(self.offenders.values())

    def verdicts(self) -> dict[str, str]:
        return {name: ("FAIL" if bad else "PASS") for name, bad in self.offenders.items()}


@dataclass
class SolveReport:
    policy: Policy
    throughput_nats: float
    water_levels: np.ndarray
    kkt: KKTReport
    multipliers: Multipliers | None
    lemmas: LemmaAudit | None
    transfer_iterations: int = 0
    transfer_converged: bool = True
    staged_throughput: float | None = None
    oracle_throughput: float | None = None
    oracle_gap: float | None = None
    used_oracle_policy: bool = False

    @property
    def kkt_residuals(self) -> dict:
        return self.kkt.as_dict()

    def as_dict(self) -> dict:
        out = {
            "throughput_nats": self.throughput_nats,
            "log_base": "e",
            "kkt_residuals": self.kkt.as_dict(),
            "transfer_iterations": self.transfer_iterations,
            "transfer_converged": self.transfer_converged,
            "lemma_audit": self.lemmas.verdicts() if self.lemmas else None,
            "lemma_offenders": self.lemmas.offenders if self.lemmas else None,
            "policy": {
                "p_sc": self.policy.p_sc.tolist(),
                "p_b": self.policy.p_b.tolist(),
                "delta": self.policy.delta.tolist(),
            },
            "water_levels": self.water_levels.tolist(),
        }
        if self.oracle_throughput is not None:
            out.update(
                staged_throughput=self.staged_throughput,
                oracle_throughput=self.oracle_throughput,
                oracle_gap=self.oracle_gap,
                used_oracle_policy=self.used_oracle_policy,
            )
        return out


def _scale(scenario: Scenario) -> float:
    split = split_arrivals(scenario)
    return max(1.0, float(split.sc_arrivals.sum() + split.b_arrivals.sum()))


def staged_policy(scenario: Scenario, delta=None) -> Policy:
    """SC taut string then battery fill, for fixed transfer powers ``delta``."""
    grid = build_epochs(scenario)
    split = split_arrivals(scenario)
    ell = grid.lengths
    delta = np.zeros(grid.n) if delta is None else np.asarray(delta, dtype=float)
    tunnel = Tunnel.for_storage(split.sc_arrivals, scenario.e_max, ell, drains=delta * ell)
    p_sc = taut_string_schedule(tunnel)
    avail = battery_availability(scenario, split.b_arrivals, delta, ell)
    p_b = base_level_waterfill(avail, 1.0 + p_sc, ell)
    return Policy(p_sc, p_b, delta)


def solve_delta_zero(scenario: Scenario) -> Policy:
    return staged_policy(scenario)


def _groups(cuts: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges separated after every ``k`` with ``cuts[k]`` true."""
    out, start = [], 0
    for k, cut in enumerate(cuts):
        if cut:
            out.append((start, k + 1))
            start = k + 1
    out.append((start, len(cuts) + 1))
    return out


def multipliers_from_policy(
    policy: Policy,
    scenario: Scenario,
    *,
    zero_tol: float = ZERO_TOL,
    bind_tol: float | None = None,
    strict: bool = True,
) -> Multipliers:
    """Read KKT multipliers off a water-filling policy.

    Tail sums are pinned to inverse water levels wherever the matching power
    is positive.  Where it is zero the battery tail takes its smallest
    admissible value and the SC tail the smallest value keeping ``rho1`` and
    ``gamma`` non-negative.  Jumps are only placed at binding constraints.
    With ``strict`` an inadmissible jump raises :class:`DualRecoveryError`;
    otherwise it is clamped and left for :func:`verify_kkt` to report.
    """
    n = policy.n
    eta = scenario.eta
    if bind_tol is None:
        bind_tol = 1e-9 * _scale(scenario)
    slacks = constraint_slacks(policy, scenario)
    inv_w = 1.0 / policy.water_levels
    uses_sc = policy.p_sc > zero_tol
    uses_b = policy.p_b > zero_tol
    moves = policy.delta > zero_tol
    jump_tol = 1e-9

    def fail(msg: str):
        if strict:
            raise DualRecoveryError(msg)
        log.debug("dual recovery: %s", msg)

    # Battery tail sums: constant between binding battery constraints.
    b_bind = slacks.battery[:-1] <= bind_tol
    v = np.empty(n)
    nxt = None
    for a, b in reversed(_groups(b_bind)):
        pinned = uses_b[a:b]
        if pinned.any():
            val = float(inv_w[a:b][pinned].mean())
            if nxt is not None and val < nxt - jump_tol:
                fail(f"battery level drops into epoch {b + 1}")
        else:
            val = float(inv_w[a:b].max())
            if nxt is not None:
                val = max(val, nxt)
        v[a:b] = val
        nxt = val

    # SC tail sums.
    causal = slacks.sc_causality[:-1] <= bind_tol
    overflow = slacks.sc_overflow <= bind_tol
    groups = _groups(causal | overflow)
    values = np.empty(len(groups))
    pinned_group = np.zeros(len(groups), dtype=bool)
    for g, (a, b) in enumerate(groups):
        idx = np.arange(a, b)
        if uses_sc[a:b].any():
            values[g] = inv_w[idx[uses_sc[a:b]]].mean()
            pinned_group[g] = True
            continue
        movers = [k for k in idx if k < n - 1 and moves[k]]
        if movers:
            values[g] = np.mean([eta * v[k + 1] for k in movers])
            pinned_group[g] = True
            continue
        lower = inv_w[a:b].max()
        tail = [eta * v[k + 1] for k in idx if k < n - 1]
        values[g] = max([lower, *tail])

    for _ in range(len(groups)):
        changed = False
        for g in range(len(groups) - 1):
            k = groups[g][1] - 1
            if causal[k] and not overflow[k] and values[g] < values[g + 1] and not pinned_group[g]:
                values[g] = values[g + 1]
                changed = True
            if overflow[k] and not causal[k] and values[g] > values[g + 1] and not pinned_group[g + 1]:
                values[g + 1] = values[g]
                changed = True
        if not changed:
            break

    u = np.empty(n)
    for g, (a, b) in enumerate(groups):
        u[a:b] = values[g]

    lam = np.zeros(n)
    mu = np.zeros(n - 1)
    for k in range(n - 1):
        d = u[k] - u[k + 1]
        if causal[k] and overflow[k]:
            lam[k], mu[k] = max(d, 0.0), max(-d, 0.0)
        elif causal[k]:
            if d < -jump_tol:
                fail(f"SC level rises across causality boundary after epoch {k + 1}")
            lam[k] = max(d, 0.0)
        elif overflow[k]:
            if d > jump_tol:
                fail(f"SC level falls across overflow boundary after epoch {k + 1}")
            mu[k] = max(-d, 0.0)
    lam[-1] = u[-1]
    nu = np.append(np.maximum(v[:-1] - v[1:], 0.0), v[-1])

    # Re-derive tails from the (possibly clamped) first differences.
    m = Multipliers(lam, mu, nu, np.zeros(n), np.zeros(n), np.zeros(n))
    u, v = m.sc_tail, m.battery_tail
    rho1 = np.where(uses_sc, 0.0, u - inv_w)
    rho2 = np.where(uses_b, 0.0, v - inv_w)
    gamma = gamma_residuals(m, eta)
    return Multipliers(lam, mu, nu, gamma, rho1, rho2)


def gamma_residuals(m: Multipliers, eta: float) -> np.ndarray:
    """Transfer residuals ``u_i - eta * v_{i+1}``; the last entry is unused (zero)."""
    u, v = m.sc_tail, m.battery_tail
    gamma = np.zeros_like(u)
    gamma[:-1] = u[:-1] - eta * v[1:]
    return gamma


def _drains_feasible(drains: np.ndarray, scenario: Scenario, split: StorageSplit) -> bool:
    """Whether the SC can still serve a non-decreasing consumption curve."""
    if np.any(drains < 0):
        return False
    tunnel = Tunnel.for_storage(split.sc_arrivals, scenario.e_max, np.ones(len(drains)), drains)
    eps = 0.25e-13 * tunnel.scale()  # a quarter of the kernel's slack, for rounding in x / l * l
    return bool(tunnel.upper[-1] >= -eps and np.all(tunnel.lower <= tunnel.upper + eps))


def _max_step(x: np.ndarray, d: np.ndarray, scenario: Scenario, split: StorageSplit) -> float:
    """Largest ``t`` keeping the transferred energies ``x + t d`` feasible."""
    neg = d < 0
    hi = float(np.min(x[neg] / -d[neg])) if neg.any() else float(split.sc_arrivals.sum())
    if _drains_feasible(x + hi * d, scenario, split):
        return hi
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _drains_feasible(x + mid * d, scenario, split):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return lo


def _bisect_slope(slope, t_hi: float) -> float:
    """Root of a non-increasing slope on ``[0, t_hi]`` (``t_hi`` if it stays positive)."""
    if slope(t_hi) > 0:
        return t_hi
    lo, hi = 0.0, t_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return lo


def transfer_update(
    scenario: Scenario,
    start: Policy | None = None,
    *,
    max_iters: int | None = None,
    tol_improve: float = TOL_IMPROVE,
    tol_kkt: float = TOL_KKT,
) -> TransferResult:
    """Coordinate ascent over SC-to-battery transfers.

    Every round looks at the residuals ``gamma`` of the current schedule.  An
    epoch with ``gamma_i < 0`` gains from moving more energy, one with a live
    transfer and ``gamma_i > 0`` from moving less, and two live transfers with
    different residuals from trading energy between them (the battery sees
    the same total).  The move with the steepest slope is line-searched by
    bisection on the sign of its directional derivative, the schedule being
    rebuilt by :func:`staged_policy` at every trial point.  A move must not
    lower throughput by more than rounding noise; the ascent stops once no
    residual exceeds ``tol_kkt`` or the best move gains less than
    ``tol_improve`` while also failing to shrink the residual.
    """
    grid = build_epochs(scenario)
    split = split_arrivals(scenario)
    ell = grid.lengths
    n = grid.n
    if max_iters is None:
        max_iters = 10 * n * n
    policy = start if start is not None else solve_delta_zero(scenario)
    x = policy.delta * ell  # transferred energy per epoch
    value = throughput(policy, ell)
    history = [value]
    noise = 1e-14 * max(1.0, abs(value))

    def residuals(pol: Policy) -> np.ndarray:
        m = multipliers_from_policy(pol, scenario, strict=False)
        # An epoch whose SC goes entirely to the battery pins gamma at zero;
        # the gain from moving less then shows up as a negative rho1.
        out = m.gamma - np.minimum(m.rho1, 0.0)
        out[-1] = 0.0
        return out

    def evaluate(xt: np.ndarray):
        pol = staged_policy(scenario, xt / ell)
        return pol, residuals(pol)

    def moves(gamma: np.ndarray):
        live = x[:-1] > ZERO_TOL
        out = []
        for i in range(n - 1):
            if gamma[i] < -tol_kkt:
                out.append((-gamma[i], i, None))
            elif gamma[i] > tol_kkt and live[i]:
                out.append((gamma[i], None, i))
            for j in range(n - 1):
                if j != i and live[j] and gamma[j] - gamma[i] > tol_kkt:
                    out.append((gamma[j] - gamma[i], i, j))
        out.sort(key=lambda mv: -mv[0])
        return out

    def direction(up, down):
        d = np.zeros(n)
        if up is not None:
            d[up] = 1.0
        if down is not None:
            d[down] = -1.0
        return d

    gamma = residuals(policy)
    converged = False
    iterations = 0
    while iterations < max_iters:
        candidates = moves(gamma) if scenario.eta > 0 else []
        if not candidates:
            converged = True
            break
        accepted = False
        for _slope, up, down in candidates:
            d = direction(up, down)
            t_hi = _max_step(x, d, scenario, split)
            if t_hi <= 0:
                continue
            step = _bisect_slope(lambda t: -(evaluate(x + t * d)[1] @ d), t_hi)
            trial_pol, trial_gamma = evaluate(x + step * d)
            if throughput(trial_pol, ell) < value - noise:
                # the residual misled us (degenerate multipliers); search the objective
                res = minimize_scalar(
                    lambda t: -throughput(staged_policy(scenario, (x + t * d) / ell), ell),
                    bounds=(0.0, t_hi),
                    method="bounded",
                    options={"xatol": 1e-13 * max(1.0, t_hi), "maxiter": 500},
                )
                step = float(res.x)
                trial_pol, trial_gamma = evaluate(x + step * d)
            trial_value = throughput(trial_pol, ell)
            gain = trial_value - value
            if gain < -noise or step <= 0:
                continue
            old_res = abs(_slope)
            new_res = float(np.max(np.abs(trial_gamma[:-1][(x + step * d)[:-1] > ZERO_TOL]), initial=0.0))
            if gain < tol_improve and new_res >= old_res:
                continue
            x = np.maximum(x + step * d, 0.0)
            policy, gamma, value = trial_pol, trial_gamma, trial_value
            history.append(value)
            accepted = True
            break
        iterations += 1
        if not accepted:
            converged = not moves(gamma)
            break
    if not converged:
        log.warning("transfer_update stopped after %d iterations with residuals left", iterations)
    return TransferResult(policy, iterations, converged, history)


def verify_kkt(policy: Policy, m: Multipliers, scenario: Scenario, tol: float = KKT_TOL) -> KKTReport:
    n = policy.n
    eta = scenario.eta
    inv_w = 1.0 / policy.water_levels
    u, v = m.sc_tail, m.battery_tail
    st_sc = -inv_w + u - m.rho1
    st_b = -inv_w + v - m.rho2
    st_delta = u[:-1] - eta * v[1:] - m.gamma[:-1]
    stationarity = float(np.max(np.abs(np.concatenate([st_sc, st_b, st_delta]))))

    slacks = constraint_slacks(policy, scenario)
    products = np.concatenate(
        [
            m.lam * slacks.sc_causality,
            m.mu * slacks.sc_overflow,
            m.nu * slacks.battery,
            m.gamma[:-1] * policy.delta[:-1],
            m.rho1 * policy.p_sc,
            m.rho2 * policy.p_b,
        ]
    )
    slackness = float(np.max(np.abs(products)))

    violations = check_feasible(policy, scenario, tol=0.0)
    feasibility = max((v_.amount for v_ in violations), default=0.0)

    duals = np.concatenate([m.lam, m.mu, m.nu, m.gamma[:-1], m.rho1, m.rho2])
    negativity = float(max(0.0, -duals.min())) if duals.size else 0.0
    details = {
        "stationarity_sc": st_sc.tolist(),
        "stationarity_b": st_b.tolist(),
        "stationarity_delta": st_delta.tolist(),
        "violations": [(v_.kind, v_.epoch, v_.amount) for v_ in violations],
    }
    return KKTReport(stationarity, slackness, feasibility, negativity, tol, details)


def lemma_audit(policy: Policy, split: StorageSplit, zero_tol: float = ZERO_TOL) -> LemmaAudit:
    """Check the four structural properties every optimum has.

    Epoch numbers in the report are 1-based.
    """
    p_sc, p_b, delta = policy.p_sc, policy.p_b, policy.delta
    total = p_sc + p_b
    nz = lambda x: x > zero_tol  # noqa: E731
    e_b = split.b_arrivals  # e_b[i - 1] opens epoch i
    n = policy.n
    bad: dict[str, list[int]] = {"L1": [], "L2": [], "L3": [], "L4": []}
    for k in range(n):
        if nz(p_sc[k]) and nz(p_b[k]) and delta[k] > zero_tol:
            bad["L3"].append(k + 1)
        if k == n - 1:
            continue
        if nz(p_b[k]) and total[k] > total[k + 1] + zero_tol:
            bad["L1"].append(k + 1)
        if not nz(p_b[k]) and nz(p_b[k + 1]):
            opens_with_b = nz(e_b[k])
            quiet = not nz(e_b[k]) and not nz(e_b[k + 1])
            if (opens_with_b or quiet) and total[k + 1] > total[k] + zero_tol:
                bad["L2"].append(k + 1)
        if (
            nz(p_sc[k]) and nz(p_sc[k + 1]) and nz(p_b[k + 1])
            and total[k] <= total[k + 1]
            and delta[k] > zero_tol
        ):
            bad["L4"].append(k + 1)
    return LemmaAudit(bad)


def certify(policy: Policy, scenario: Scenario, tol: float = KKT_TOL) -> tuple[Multipliers | None, KKTReport]:
    try:
        m = multipliers_from_policy(policy, scenario)
    except DualRecoveryError as exc:
        log.info("strict dual recovery failed (%s); using clamped multipliers", exc)
        m = multipliers_from_policy(policy, scenario, strict=False)
    return m, verify_kkt(policy, m, scenario, tol)


def solve(scenario: Scenario, certify_with_oracle: bool = False, *, kkt_tol: float = KKT_TOL) -> SolveReport:
    """Staged solve; with ``certify_with_oracle`` also run the barrier oracle."""
    split = split_arrivals(scenario)
    ell = build_epochs(scenario).lengths
    policy = solve_delta_zero(scenario)
    iterations, converged = 0, True
    m, _ = certify(policy, scenario, kkt_tol)
    if scenario.eta > 0 and np.any(m.gamma[:-1] < -TOL_KKT):
        result = transfer_update(scenario, policy)
        policy, iterations, converged = result.policy, result.iterations, result.converged
    m, report = certify(policy, scenario, kkt_tol)
    staged = throughput(policy, ell)

    oracle_value = gap = None
    used_oracle = False
    if certify_with_oracle:
        from .oracle import barrier_solve

        oracle_policy = barrier_solve(scenario)
        oracle_value = throughput(oracle_policy, ell)
        gap = abs(staged - oracle_value) / max(1.0, abs(oracle_value))
        if oracle_value - staged > ORACLE_GAP_TOL * max(1.0, abs(oracle_value)):
            log.warning("staged solve trails the oracle by %.3g; returning oracle policy", gap)
            policy, used_oracle = oracle_policy, True
            m, report = certify(policy, scenario, kkt_tol)

    audit = lemma_audit(policy, split) if report.passed else None
    return SolveReport(
        policy=policy,
        throughput_nats=throughput(policy, ell),
        water_levels=policy.water_levels,
        kkt=report,
        multipliers=m,
        lemmas=audit,
        transfer_iterations=iterations,
        transfer_converged=converged,
        staged_throughput=staged,
        oracle_throughput=oracle_value,
        oracle_gap=gap,
        used_oracle_policy=used_oracle,
    )
