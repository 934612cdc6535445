"""Seeded random scenarios for property runs and sweeps."""
from __future__ import annotations

import os

import numpy as np

from .model import Scenario

SEED_ENV = "HYDROSCHED_SEED"
DEFAULT_SEED = 20130


def seed_from_env(default: int = DEFAULT_SEED) -> int:
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else default


def random_scenario(
    rng: np.random.Generator,
    *,
    n_max: int = 8,
    n_min: int = 1,
    eta_max: float = 0.95,
) -> Scenario:
    """Draw an instance with energies in ``[0, 5 * e_max]``.

    A share of the draws hits the boundary cases on purpose: arrivals of
    exactly zero or exactly ``e_max``, an empty SC at the start, no initial
    battery energy and a lossless-transfer-free ``eta = 0``.
    """
    n = int(rng.integers(n_min, n_max + 1))
    e_max = float(rng.uniform(0.5, 5.0))
    lengths = rng.uniform(0.2, 3.0, size=n)
    energies = rng.uniform(0.0, 5.0 * e_max, size=n - 1)
    special = rng.random(n - 1)
    energies[special < 0.1] = 0.0
    energies[(special >= 0.1) & (special < 0.2)] = e_max
    energies[(special >= 0.2) & (special < 0.5)] *= 0.2
    initial_sc = float(rng.choice([0.0, e_max, rng.uniform(0.0, e_max)], p=[0.1, 0.1, 0.8]))
    initial_b = float(rng.choice([0.0, rng.uniform(0.0, 5.0 * e_max)], p=[0.5, 0.5]))
    eta = float(rng.choice([0.0, rng.uniform(0.0, eta_max)], p=[0.1, 0.9]))
    return Scenario.from_lengths(
        lengths.tolist(),
        energies.tolist(),
        e_max=e_max,
        eta=eta,
        initial_sc=initial_sc,
        initial_b=initial_b,
    )


def random_scenarios(count: int, seed: int | None = None, **kwargs) -> list[Scenario]:
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    return [random_scenario(rng, **kwargs) for _ in range(count)]
