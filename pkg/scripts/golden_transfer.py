"""Throughput of the two-epoch transfer example as a function of energy moved.

Scans the energy moved out of the first epoch, prints the curve next to the
staged optimum and the barrier optimum, and the location of the peak.
"""
import argparse

import numpy as np

from hydrosched import barrier_solve, build_epochs, load_scenario, solve, throughput
from hydrosched.hybrid import staged_policy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", nargs="?", default="scripts/scenarios/golden.json")
    ap.add_argument("--points", type=int, default=21)
    args = ap.parse_args()

    s = load_scenario(args.scenario)
    ell = build_epochs(s).lengths
    room = s.initial_sc  # all of the first epoch's SC energy may be moved
    print(f"{'moved [J]':>10} {'throughput [nats]':>18}")
    best = (-np.inf, 0.0)
    for moved in np.linspace(0.0, room, args.points):
        delta = np.zeros(len(ell))
        delta[0] = moved / ell[0]
        value = throughput(staged_policy(s, delta), ell)
        best = max(best, (value, moved))
        print(f"{moved:10.4f} {value:18.6f}")

    rep = solve(s)
    oracle = throughput(barrier_solve(s), ell)
    print(f"\nscan peak      {best[0]:.6f} at {best[1]:.4f} J")
    print(f"staged optimum {rep.throughput_nats:.9f} moving {rep.policy.delta[0] * ell[0]:.6f} J")
    print(f"barrier        {oracle:.9f}")


if __name__ == "__main__":
    main()
