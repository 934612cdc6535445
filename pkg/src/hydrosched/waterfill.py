"""Directional water-filling kernels for a single store.

Two kernels:

* :func:`taut_string_schedule` -- the finite-capacity store.  Cumulative
  consumption must stay inside a tunnel (causality from above, no-overflow
  from below); the optimal cumulative curve is the shortest path through it.
* :func:`base_level_waterfill` -- an unlimited store with causality only,
  poured over per-epoch bottom levels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_REL_EPS = 1e-13


class InfeasibleTunnel(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Tunnel:
    """Bounds on cumulative consumption at the end of each epoch.

    ``upper[k]``/``lower[k]`` bound the energy consumed by the end of epoch
    ``k + 1``.  The last entries pin the terminal value.
    """

    lengths: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        for name in ("lengths", "upper", "lower"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.lengths) == len(self.upper) == len(self.lower)):
            raise ValueError("tunnel arrays must have equal length")

    @property
    def horizon(self) -> float:
        return float(self.lengths.sum())

    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.upper), initial=0.0)))

    @classmethod
    def for_storage(
        cls,
        sc_arrivals: np.ndarray,
        e_max: float,
        lengths: np.ndarray,
        drains: np.ndarray | None = None,
    ) -> "Tunnel":
        """SC tunnel, optionally with fixed per-epoch energy ``drains`` taken out first.

        The envelopes are replaced by their monotone hulls so the string never
        needs a negative slope.
        """
        sc_arrivals = np.asarray(sc_arrivals, dtype=float)
        lengths = np.asarray(lengths, dtype=float)
        n = len(lengths)
        arrived = np.cumsum(sc_arrivals)  # arrived[k] = sum_{j<=k} E_j
        upper = arrived.copy()
        lower = np.empty(n)
        lower[:-1] = np.maximum(arrived[1:] - e_max, 0.0)
        lower[-1] = arrived[-1]
        if drains is not None:
            spent = np.cumsum(np.asarray(drains, dtype=float))
            upper = upper - spent
            lower = np.maximum(lower - spent, 0.0)
            lower[-1] = upper[-1]
        upper = np.minimum.accumulate(upper[::-1])[::-1]
        lower = np.maximum.accumulate(lower)
        return cls(lengths, upper, lower)


@dataclass(frozen=True, eq=False)
class BaseLevels:
    base: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        if np.any(base < 1.0 - 1e-12):
            raise ValueError("bottom levels must be >= 1")
        object.__setattr__(self, "base", base)


def taut_string_path(tunnel: Tunnel) -> np.ndarray:
    """Cumulative consumption ``C_0 = 0, C_1, ..., C_N`` along the taut string."""
    lengths, upper, lower = tunnel.lengths, tunnel.upper, tunnel.lower
    n = len(lengths)
    eps = _REL_EPS * tunnel.scale()
    if np.any(lower > upper + eps) or lower[-1] < -eps:
        k = int(np.argmax(lower - upper))
        raise InfeasibleTunnel(f"lower envelope above upper at epoch {k + 1}")
    times = np.concatenate([[0.0], np.cumsum(lengths)])
    path = np.full(n + 1, np.nan)
    path[0] = 0.0
    path[n] = upper[-1]

    # Path index k+1 is bounded by upper[k]/lower[k].
    stack = [(0, n)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        ks = np.arange(a + 1, b)
        chord = path[a] + (path[b] - path[a]) * (times[ks] - times[a]) / (times[b] - times[a])
        above = chord - upper[ks - 1]
        below = lower[ks - 1] - chord
        worst = np.maximum(above, below)
        j = int(np.argmax(worst))  # earliest on ties
        if worst[j] <= eps:
            path[ks] = chord
            continue
        k = int(ks[j])
        path[k] = upper[k - 1] if above[j] >= below[j] else lower[k - 1]
        stack.append((k, b))
        stack.append((a, k))
    return path


def taut_string_schedule(tunnel: Tunnel) -> np.ndarray:
    """Per-epoch powers whose cumulative curve is the taut string of ``tunnel``."""
    path = taut_string_path(tunnel)
    return np.maximum(np.diff(path) / tunnel.lengths, 0.0)


def fill_level(energy: float, base: np.ndarray, lengths: np.ndarray) -> float:
    """Level ``W`` with ``sum(l * (W - base)^+) == energy``, solved exactly."""
    order = np.argsort(base, kind="stable")
    b = base[order]
    ell = lengths[order]
    if energy <= 0:
        return float(b[0])
    cum_l = np.cumsum(ell)
    cum_lb = np.cumsum(ell * b)
    for m in range(len(b)):
        level = (energy + cum_lb[m]) / cum_l[m]
        if m + 1 == len(b) or level <= b[m + 1]:
            return float(level)
    raise AssertionError("unreachable")


def _pour(energy: float, base: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Powers ``(W - base)^+`` for the level of :func:`fill_level`.

    Written relative to each bottom so that a single wet epoch gets exactly
    ``energy / length``.
    """
    level = fill_level(energy, base, lengths)
    wet = base < level
    out = np.zeros_like(base)
    if wet.any():
        lw, bw = lengths[wet], base[wet]
        out[wet] = (energy + np.sum(lw[:, None] * (bw[:, None] - bw[None, :]), axis=0)) / lw.sum()
    return np.maximum(out, 0.0)


def base_level_waterfill(b_energy, base: BaseLevels | np.ndarray, lengths) -> np.ndarray:
    """Pour causally-arriving energy over per-epoch bottoms.

    Parameters
    ----------
    b_energy : array_like
        Energy usable from the start of each epoch (already scaled by the
        storage efficiency).
    base : BaseLevels or array_like
        Bottom level of each epoch, ``>= 1``.
    lengths : array_like
        Epoch lengths.

    Returns
    -------
    np.ndarray
        Power drawn in each epoch.  Water levels ``base + p`` are constant
        between binding causality boundaries and non-decreasing across them.
    """
    energy = np.asarray(b_energy, dtype=float)
    bottoms = base.base if isinstance(base, BaseLevels) else np.asarray(base, dtype=float)
    ell = np.asarray(lengths, dtype=float)
    if not (energy.shape == bottoms.shape == ell.shape) or energy.ndim != 1:
        raise ValueError("b_energy, base and lengths must be 1-D arrays of equal length")
    if np.any(energy < 0):
        raise ValueError("battery energies must be non-negative")
    power = np.zeros_like(energy)
    eps = _REL_EPS * max(1.0, float(energy.sum()))
    stack = [(0, len(energy))]
    while stack:
        a, b = stack.pop()
        total = float(energy[a:b].sum())
        if total <= 0:
            continue
        seg = _pour(total, bottoms[a:b], ell[a:b])
        overdraw = np.cumsum(seg * ell[a:b])[:-1] - np.cumsum(energy[a:b])[:-1]
        if overdraw.size and overdraw.max() > eps:
            k = a + int(np.argmax(overdraw)) + 1
            stack.append((k, b))
            stack.append((a, k))
            continue
        power[a:b] = seg
    return power
