"""Policy x mode attack grid on the four-blob classifier.

Runs the blackbox ordering attack (surrogate oracle) for every policy under
both reshuffle and reorder against a seed-paired clean baseline. Reported
accuracy comes from each arm's best-test-loss epoch, skipping epoch 1: the
controller trains benignly through the first epoch (it needs one pass of
losses before it can rank anything), so epoch 1 says nothing about the arm.

Run:
    python3 scripts/integrity_grid.py --out runs/integrity
"""

import argparse
import csv
import os

from orderlab.brrr import POLICIES
from orderlab.harness import run_experiment


def base_config():
    return {
        "seed": 5,
        "name": "blobgrid",
        "dataset": {"kind": "blobs", "n": 4000, "test_n": 1000, "classes": 4,
                    "separation": 3.5, "spread": 1.25},
        "model": {"kind": "mlp", "hidden": 32},
        "optimizer": {"kind": "sgd", "lr": 0.5},
        "surrogate": {"kind": "mlp", "hidden": 8},
        "surrogate_optimizer": {"kind": "adam", "lr": 0.01},
        "batch_size": 4,
        "epochs": 30,
    }


def best_after_warmup(log):
    rows = [r for r in log.filter(split="test").rows if r["epoch"] >= 2]
    best = min(rows, key=lambda r: (r["loss"], r["epoch"]))
    return best["accuracy"], best["epoch"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/integrity")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    base_log, _ = run_experiment(base_config(), out_dir=args.out)
    base_acc, base_epoch = best_after_warmup(base_log)
    print(f"baseline: accuracy {base_acc:.3f} at epoch {base_epoch}")

    grid_path = os.path.join(args.out, "integrity_grid.csv")
    with open(grid_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mode", "policy", "baseline_accuracy",
                         "attacked_accuracy", "best_epoch", "delta_points"])
        for mode in ("reshuffle", "reorder"):
            for policy in POLICIES:
                cfg = base_config()
                cfg["name"] = f"blobgrid-{mode}-{policy}"
                cfg["attack"] = {"mode": mode, "policy": policy,
                                 "oracle": "surrogate"}
                log, _ = run_experiment(cfg, out_dir=args.out)
                acc, epoch = best_after_warmup(log)
                delta = 100.0 * (base_acc - acc)
                writer.writerow([mode, policy, f"{base_acc:.17g}",
                                 f"{acc:.17g}", epoch, f"{delta:.17g}"])
                print(f"{mode:9s} {policy:20s} accuracy {acc:.3f} "
                      f"at epoch {epoch:2d}  delta {delta:+.1f} pts")
    print(f"grid -> {grid_path}")


if __name__ == "__main__":
    main()
