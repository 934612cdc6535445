"""Independent solvers used to certify the staged algorithm.

``barrier_solve`` is a plain log-barrier interior-point method on all
``3N - 1`` decision variables; ``grid_oracle`` is a brute-force nested grid
search for instances with at most three epochs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linprog, nnls

from .hybrid import Multipliers
from .model import Policy, Scenario, build_epochs, split_arrivals


ACTIVE_TOL = 1e-7  # relative slack under which a row counts as binding for dual recovery
log = logging.getLogger(__name__)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class BarrierConfig:
    initial_weight: float = 1.0  # barrier weight 1/t at the first centering
    decay: float = 0.1
    newton_tol: float = 1e-10  # half squared Newton decrement
    gap_tol: float = 1e-9  # stop once (#constraints) * weight drops below this
    max_outer: int = 60
    max_newton: int = 200

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if min(self.initial_weight, self.newton_tol, self.gap_tol) <= 0:
            raise ValueError("weights and tolerances must be positive")


@dataclass
class _Program:
    """``G x <= h`` with tagged rows over ``x = (p_sc, p_b, delta_1..N-1)``."""

    n: int
    lengths: np.ndarray
    G: np.ndarray
    h: np.ndarray
    tags: list[tuple[str, int]]


def _program(scenario: Scenario) -> _Program:
    grid = build_epochs(scenario)
    split = split_arrivals(scenario)
    n, ell, eta = grid.n, grid.lengths, scenario.eta
    dim = 3 * n - 1
    sc, p_b, dl = slice(0, n), slice(n, 2 * n), slice(2 * n, dim)
    rows, rhs, tags = [], [], []
    arrived = np.cumsum(split.sc_arrivals)
    b_arrived = np.cumsum(split.b_arrivals)

    def out_row(k):  # SC energy leaving by the end of epoch k (0-based)
        r = np.zeros(dim)
        r[sc][: k + 1] = ell[: k + 1]
        r[dl][: min(k + 1, n - 1)] = ell[: min(k + 1, n - 1)]
        return r

    for k in range(n):
        rows.append(out_row(k))
        rhs.append(arrived[k])
        tags.append(("lam", k))
    for k in range(n - 1):
        rows.append(-out_row(k))
        rhs.append(scenario.e_max - arrived[k + 1])
        tags.append(("mu", k))
    for k in range(n):
        r = np.zeros(dim)
        r[p_b][: k + 1] = ell[: k + 1]
        r[dl][:k] = -eta * ell[:k]
        rows.append(r)
        rhs.append(eta * b_arrived[k])
        tags.append(("nu", k))
    for j in range(dim):
        r = np.zeros(dim)
        r[j] = -1.0
        rows.append(r)
        rhs.append(0.0)
        kind = "rho1" if j < n else "rho2" if j < 2 * n else "gamma"
        tags.append((kind, j % n if j < 2 * n else j - 2 * n))
    return _Program(n, ell, np.array(rows), np.array(rhs), tags)


def _objective(x: np.ndarray, n: int, ell: np.ndarray):
    w = 1.0 + x[:n] + x[n : 2 * n]
    value = float(np.sum(0.5 * ell * np.log(w)))
    dw = 0.5 * ell / w
    grad = np.zeros_like(x)
    grad[:n] = dw
    grad[n : 2 * n] = dw
    hess = np.zeros((x.size, x.size))
    c = -0.5 * ell / w**2
    i = np.arange(n)
    for a in (i, i + n):
        for b in (i, i + n):
            hess[a, b] = c
    return value, grad, hess


def _structure(prog: _Program, scenario: Scenario):
    """Variables forced to zero and SC constraints that collapse to equalities."""
    n = prog.n
    split = split_arrivals(scenario)
    arrived = np.cumsum(split.sc_arrivals)
    b_arrived = np.cumsum(split.b_arrivals)
    scale = max(1.0, float(arrived[-1] + b_arrived[-1]))
    tiny = 1e-13 * scale
    fixed = np.zeros(3 * n - 1, dtype=bool)
    k_sc = int(np.sum(np.cumsum(arrived > tiny) == 0))  # leading epochs with an empty SC
    fixed[:k_sc] = True
    fixed[2 * n : 2 * n + min(k_sc, n - 1)] = True
    if scenario.eta == 0:
        fixed[n : 2 * n] = True
    else:
        starved = (b_arrived <= tiny) & (np.arange(n) <= k_sc)
        k_b = int(np.sum(np.cumsum(~starved) == 0))
        fixed[n : n + k_b] = True
    equal = [
        k for k in range(n - 1)
        if k >= k_sc and split.sc_arrivals[k + 1] >= scenario.e_max - tiny
    ]
    return fixed, equal, scale


def barrier_solve(scenario: Scenario, cfg: BarrierConfig | None = None, *, return_multipliers: bool = False):
    """Maximise throughput with a log-barrier interior-point method.

    Variables pinned to zero by the instance (empty stores) are removed and SC
    constraint pairs squeezed to a single value (an arrival of at least
    ``e_max``) become equalities handled in the null space.  The start point
    is the max-margin point of a phase-I linear program.
    """
    cfg = cfg or BarrierConfig()
    prog = _program(scenario)
    n, ell = prog.n, prog.lengths
    fixed, equal, scale = _structure(prog, scenario)
    free = ~fixed
    zero = Policy.zeros(n)
    if not free.any():
        return (zero, _zero_multipliers(scenario, prog)) if return_multipliers else zero

    lam_rows = {k: r for r, (kind, k) in enumerate(prog.tags) if kind == "lam"}
    mu_rows = {k: r for r, (kind, k) in enumerate(prog.tags) if kind == "mu"}
    A_eq = np.array([prog.G[lam_rows[k], free] for k in equal]).reshape(len(equal), free.sum())
    b_eq = np.array([prog.h[lam_rows[k]] for k in equal])
    dropped = {lam_rows[k] for k in equal} | {mu_rows[k] for k in equal}
    G = prog.G[:, free]
    keep = [
        r for r in range(len(prog.h))
        if r not in dropped and np.any(np.abs(G[r]) > 0)
    ]
    for r in set(range(len(prog.h))) - set(keep) - dropped:
        if prog.h[r] < -1e-12 * scale:
            raise OracleError(f"instance infeasible at constraint {prog.tags[r]}")
    Gk, hk = G[keep], prog.h[keep]
    m = len(keep)
    d = int(free.sum())

    # Phase I: maximise a common margin tau.
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([Gk, np.ones((m, 1))])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=hk,
        A_eq=np.hstack([A_eq, np.zeros((len(equal), 1))]) if equal else None,
        b_eq=b_eq if equal else None,
        bounds=[(None, None)] * d + [(None, 1.0)],
        method="highs",
    )
    if res.status != 0 or res.x[-1] <= 1e-12 * scale:
        tau = None if res.x is None else res.x[-1]
        raise OracleError(f"no strictly feasible start (phase I status {res.status}, margin {tau})")
    x0 = res.x[:d]

    Z = scipy.linalg.null_space(A_eq) if equal else np.eye(d)

    def full(xf):
        x = np.zeros(3 * n - 1)
        x[free] = xf
        return x

    # total power per epoch as a linear map of the free variables
    M = np.zeros((n, 3 * n - 1))
    M[np.arange(n), np.arange(n)] = 1.0
    M[np.arange(n), n + np.arange(n)] = 1.0
    M = M[:, free]
    half_l = 0.5 * ell

    def value(xf, t):
        s = hk - Gk @ xf
        if np.any(s <= 0):
            return np.inf
        return -t * float(half_l @ np.log1p(M @ xf)) - float(np.sum(np.log(s)))

    def newton_step(xf, t):
        s = hk - Gk @ xf
        w = 1.0 + M @ xf
        grad = -t * (M.T @ (half_l / w)) + Gk.T @ (1.0 / s)
        hess = t * (M.T * (half_l / w**2)) @ M + (Gk.T * (1.0 / s**2)) @ Gk
        gr = Z.T @ grad
        try:
            step = -np.linalg.solve(Z.T @ hess @ Z, gr)
            if not np.all(np.isfinite(step)) or gr @ step >= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = -gr / max(np.linalg.norm(gr), 1e-300)  # steepest descent fallback
        return Z @ step, -(gr @ step), s

    x = x0
    t = 1.0 / cfg.initial_weight
    for _outer in range(cfg.max_outer):
        for _ in range(cfg.max_newton):
            dx, dec, s = newton_step(x, t)
            if dec / 2 <= cfg.newton_tol:
                break
            rate = Gk @ dx
            grow = rate > 0
            alpha = min(1.0, 0.99 * float(np.min(s[grow] / rate[grow]))) if grow.any() else 1.0
            val = value(x, t)
            while alpha > 1e-20 and value(x + alpha * dx, t) > val - 0.25 * alpha * dec:
                alpha *= 0.5
            if alpha <= 1e-20:
                break
            x = x + alpha * dx
        if m / t < cfg.gap_tol:
            break
        t /= cfg.decay
    else:
        log.warning("barrier_solve hit max_outer=%d", cfg.max_outer)

    xfull = np.maximum(full(x), 0.0)
    policy = Policy(xfull[:n], xfull[n : 2 * n], np.append(xfull[2 * n :], 0.0))
    if not return_multipliers:
        return policy
    s = hk - Gk @ x
    y = np.zeros(len(prog.h))
    y[keep] = 1.0 / (t * s)
    central = _complete_duals(prog, xfull, y, set(range(len(prog.h))) - set(keep))
    # active-set refit: near-binding rows only, non-negative least squares on
    # stationarity.  Flat directions leave some slacks well above the barrier
    # gap, so a few widening thresholds are tried.
    slack = prog.h - prog.G @ xfull
    _, g, _ = _objective(xfull, n, ell)
    best = _from_multipliers(prog, central)
    best_res = np.max(np.abs(prog.G.T @ best - g))
    for factor in (1.0, 10.0, 100.0):
        active = np.flatnonzero(slack <= factor * ACTIVE_TOL * scale)
        y_act = np.zeros(len(prog.h))
        if active.size:
            y_act[active], _ = nnls(prog.G[active].T, g)
        res = np.max(np.abs(prog.G.T @ y_act - g))
        if res < best_res:
            best, best_res = y_act, res
    return policy, _to_multipliers(prog, best)


def _complete_duals(prog: _Program, x: np.ndarray, y: np.ndarray, unknown: set[int]) -> Multipliers:
    """Fill duals of eliminated rows by non-negative least squares on stationarity."""
    _, g, _ = _objective(x, prog.n, prog.lengths)
    unknown = sorted(unknown)
    if unknown:
        known = [r for r in range(len(y)) if r not in set(unknown)]
        target = g - prog.G[known].T @ y[known]
        sol, _ = nnls(prog.G[unknown].T, target)
        y[unknown] = sol
    return _to_multipliers(prog, y)


def _from_multipliers(prog: _Program, m: Multipliers) -> np.ndarray:
    ell = prog.lengths
    y = np.zeros(len(prog.tags))
    for r, (kind, k) in enumerate(prog.tags):
        scale = 2.0 if kind in ("lam", "mu", "nu") else 2.0 / ell[k]
        y[r] = getattr(m, kind)[k] / scale
    return y


def _to_multipliers(prog: _Program, y: np.ndarray) -> Multipliers:
    """Map duals of the energy-unit program onto per-epoch normalised multipliers."""
    n, ell = prog.n, prog.lengths
    out = {k: np.zeros(n) for k in ("lam", "nu", "gamma", "rho1", "rho2")}
    out["mu"] = np.zeros(n - 1)
    for r, (kind, k) in enumerate(prog.tags):
        scale = 2.0 if kind in ("lam", "mu", "nu") else 2.0 / ell[k]
        out[kind][k] = scale * y[r]
    return Multipliers(out["lam"], out["mu"], out["nu"], out["gamma"], out["rho1"], out["rho2"])


def _zero_multipliers(scenario: Scenario, prog: _Program) -> Multipliers:
    y = np.zeros(len(prog.h))
    return _complete_duals(prog, np.zeros(3 * prog.n - 1), y, set(range(len(prog.h))))


# ---------------------------------------------------------------------------
# brute force


def _project(params: np.ndarray, scenario: Scenario, ell: np.ndarray):
    """Map grid parameters onto feasible policies by clipping cumulative sums.

    ``params`` has rows ``(s_1..s_{N-1}, f_1..f_{N-1}, b_1..b_{N-1})``: SC energy
    requested per epoch, fraction of it moved to the battery, and battery
    energy requested.  The last epoch takes whatever is left in both stores.
    """
    split = split_arrivals(scenario)
    n = len(ell)
    k = params.shape[1]
    arrived = np.cumsum(split.sc_arrivals)
    eta = scenario.eta
    S = np.zeros(k)
    B = np.zeros(k)
    avail_b = np.zeros(k)
    p_sc = np.zeros((n, k))
    p_b = np.zeros((n, k))
    delta = np.zeros((n, k))
    moved_prev = np.zeros(k)
    for i in range(n):
        avail_b = avail_b + eta * split.b_arrivals[i] + eta * moved_prev
        if i < n - 1:
            lo = max(arrived[i + 1] - scenario.e_max, 0.0)
            S_new = np.clip(S + params[i], lo, arrived[i])
            s = S_new - S
            moved = s * params[n - 1 + i]
            B_new = np.minimum(B + params[2 * (n - 1) + i], avail_b)
        else:
            S_new = np.full(k, arrived[-1])
            s = S_new - S
            moved = np.zeros(k)
            B_new = avail_b
        p_sc[i] = (s - moved) / ell[i]
        delta[i] = moved / ell[i]
        p_b[i] = (B_new - B) / ell[i]
        S, B, moved_prev = S_new, B_new, moved
    value = np.sum(0.5 * ell[:, None] * np.log1p(p_sc + p_b), axis=0)
    return value, p_sc, p_b, delta


def grid_oracle(scenario: Scenario, levels: int = 5, points: int = 9) -> Policy:
    """Nested grid refinement; each level keeps the incumbent on its grid."""
    grid = build_epochs(scenario)
    n, ell = grid.n, grid.lengths
    if n > 3:
        raise ValueError("grid_oracle handles at most 3 epochs")
    if n == 1 or points < 2:
        value, p_sc, p_b, delta = _project(np.zeros((0, 1)), scenario, ell)
        return Policy(p_sc[:, 0], p_b[:, 0], delta[:, 0])
    split = split_arrivals(scenario)
    dims = 3 * (n - 1)
    hi = np.concatenate(
        [
            np.full(n - 1, split.sc_arrivals.sum()),
            np.ones(n - 1),
            np.full(n - 1, split.b_arrivals.sum() + split.sc_arrivals.sum()),
        ]
    )
    lo = np.zeros(dims)
    center = hi / 2
    half = hi / 2
    best_val, best = -np.inf, None
    for _ in range(levels):
        axes = [np.unique(np.clip(center[j] + np.linspace(-half[j], half[j], points), lo[j], hi[j]))
                for j in range(dims)]
        if best is not None:
            axes = [np.union1d(a, [best[j]]) for j, a in enumerate(axes)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=0).reshape(dims, -1)
        value, *_ = _project(mesh, scenario, ell)
        j = int(np.argmax(value))
        if value[j] >= best_val:
            best_val, best = float(value[j]), mesh[:, j].copy()
        center = best
        half = half * 4.0 / (points - 1)
    value, p_sc, p_b, delta = _project(best[:, None], scenario, ell)
    return Policy(p_sc[:, 0], p_b[:, 0], delta[:, 0])
