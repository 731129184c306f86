"""Print the standing theory table and save it as CSV.

Covers the order-statistic constants (K_infinity by quadrature, K_n by
Monte Carlo for several n and noise laws), the ordering gap xi for sorted
versus as-drawn sequences, and sample-size bounds for gradient probing.
Rows with a reference value also show the relative error against it.

Run:
    python3 scripts/theory_table.py --trials 200000 --out runs/theory
"""

import argparse
import os

from orderlab.harness import theory_battery, write_theory_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--trials", type=int, default=200_000)
    parser.add_argument("--out", default="runs/theory")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rows = theory_battery(seed=args.seed, trials=args.trials)
    width = max(len(name) for name, *_ in rows)
    print(f"{'quantity':{width}s} {'estimate':>12s} {'stderr':>10s} "
          f"{'reference':>12s} {'rel_err':>9s}")
    for name, est, se, ref in rows:
        se_s = f"{se:10.2e}" if se is not None else " " * 10
        if ref is not None:
            rel = abs(est - ref) / abs(ref) if ref != 0 else abs(est)
            ref_s, rel_s = f"{ref:12.6f}", f"{rel:9.1e}"
        else:
            ref_s, rel_s = " " * 12, " " * 9
        print(f"{name:{width}s} {est:12.6f} {se_s} {ref_s} {rel_s}")

    path = write_theory_csv(rows, os.path.join(args.out, "theory.csv"))
    print(f"{len(rows)} quantities -> {path}")


if __name__ == "__main__":
    main()
