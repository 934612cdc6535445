"""Staged solve against the barrier oracle over seeded random instances.

Prints the gap distribution, KKT and structural audit counts, and timings.
The seed comes from --seed or HYDROSCHED_SEED.
"""
import argparse
import time

import numpy as np

from hydrosched import barrier_solve, build_epochs, solve, throughput
from hydrosched.instances import random_scenarios, seed_from_env


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=300)
    ap.add_argument("--n-max", type=int, default=8)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    seed = seed_from_env() if args.seed is None else args.seed

    scenarios = random_scenarios(args.count, seed=seed, n_max=args.n_max)
    gaps, kkt_fail, lemma_fail = [], 0, 0
    t_staged = t_oracle = 0.0
    for s in scenarios:
        t0 = time.perf_counter()
        rep = solve(s)
        t_staged += time.perf_counter() - t0
        t0 = time.perf_counter()
        ov = throughput(barrier_solve(s), build_epochs(s))
        t_oracle += time.perf_counter() - t0
        gaps.append((ov - rep.throughput_nats) / max(1.0, abs(ov)))
        kkt_fail += not rep.kkt.passed
        lemma_fail += bool(rep.lemmas is None or not rep.lemmas.passed)

    gaps = np.array(gaps)
    print(f"seed {seed}, {len(scenarios)} instances, N <= {args.n_max}")
    print(f"oracle minus staged (relative): max {gaps.max():.2e}, min {gaps.min():.2e}, "
          f"median {np.median(gaps):.2e}")
    print(f"instances with gap > 1e-6: {int(np.sum(np.abs(gaps) > 1e-6))}")
    print(f"KKT failures: {kkt_fail}, structural audit failures: {lemma_fail}")
    print(f"time staged {t_staged:.2f} s, barrier {t_oracle:.2f} s")


if __name__ == "__main__":
    main()
