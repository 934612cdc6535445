"""Throughput and energy moved into the battery as the storage efficiency grows.

Writes a CSV (and a PNG if matplotlib is available) for one scenario.
"""
import argparse
from pathlib import Path

from hydrosched import load_scenario
from hydrosched.cli import SweepSpec, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", nargs="?", default="scripts/scenarios/bursty.json")
    ap.add_argument("--param", choices=("eta", "e_max"), default="eta")
    ap.add_argument("--from", dest="start", type=float, default=0.0)
    ap.add_argument("--to", dest="stop", type=float, default=0.95)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--out", type=Path, default=Path("sweep_out"))
    args = ap.parse_args()

    s = load_scenario(args.scenario)
    rows, drops = sweep(s, SweepSpec(args.param, args.start, args.stop, args.step))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"sweep_{args.param}.csv"
    with open(path, "w") as fh:
        fh.write("value,throughput,total_delta,battery_epochs\n")
        for r in rows:
            fh.write(f"{r['value']:.12g},{r['throughput']:.12g},{r['total_delta']:.12g},{r['battery_epochs']}\n")
            print(f"{args.param}={r['value']:.3f}  throughput={r['throughput']:.6f}  moved={r['total_delta']:.4f} J")
    print(f"wrote {path}; monotone: {not drops}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    x = [r["value"] for r in rows]
    ax[0].plot(x, [r["throughput"] for r in rows], "o-")
    ax[0].set_xlabel(args.param)
    ax[0].set_ylabel("throughput [nats]")
    ax[1].plot(x, [r["total_delta"] for r in rows], "s-")
    ax[1].set_xlabel(args.param)
    ax[1].set_ylabel("energy moved to battery [J]")
    fig.tight_layout()
    fig.savefig(args.out / f"sweep_{args.param}.png", dpi=120)


if __name__ == "__main__":
    main()
