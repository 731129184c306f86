"""Accuracy timeline around a single batch-replacement epoch.

Trains the digit classifier for 60 epochs twice from the same seed: once
clean, once with every batch of epoch 10 replaced by single-class batches.
Writes both per-epoch test curves side by side and prints the damage and
recovery summary. The point of the plot-ready CSV is the asymmetry: one
poisoned epoch, tens of epochs to crawl back.

Run:
    python3 scripts/replace_timeline.py --out runs/replace
"""

import argparse
import csv
import os

from orderlab.harness import compare_arms, run_experiment


def base_config():
    return {
        "seed": 5,
        "name": "replace-clean",
        "dataset": {"kind": "digits", "n": 4000, "test_n": 1000, "noise": 0.08},
        "model": {"kind": "mlp", "hidden": 32},
        "optimizer": {"kind": "sgd", "lr": 1.0},
        "batch_size": 500,
        "epochs": 60,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/replace")
    parser.add_argument("--attack-epoch", type=int, default=10)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    clean_log, _ = run_experiment(base_config(), out_dir=args.out)
    attacked_cfg = base_config()
    attacked_cfg["name"] = "replace-attacked"
    attacked_cfg["attack"] = {"mode": "replace", "oracle": "source",
                              "epochs_active": [args.attack_epoch]}
    attacked_log, _ = run_experiment(attacked_cfg, out_dir=args.out)

    timeline_path = os.path.join(args.out, "timeline.csv")
    clean_rows = clean_log.filter(split="test").rows
    attacked_rows = attacked_log.filter(split="test").rows
    with open(timeline_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "clean_accuracy", "attacked_accuracy"])
        for c, a in zip(clean_rows, attacked_rows):
            writer.writerow([c["epoch"], f"{c['accuracy']:.17g}",
                             f"{a['accuracy']:.17g}"])

    report = compare_arms(clean_log, attacked_log,
                          after_epoch=args.attack_epoch, within_points=1.0)
    by_epoch = {r["epoch"]: r["accuracy"] for r in attacked_rows}
    clean_by_epoch = {r["epoch"]: r["accuracy"] for r in clean_rows}
    hit = args.attack_epoch + 1
    drop = 100.0 * (clean_by_epoch[hit] - by_epoch[hit])
    print(f"epoch {args.attack_epoch} replaced: accuracy down {drop:.1f} pts "
          f"at epoch {hit}")
    if report["recovery_epoch"] is None:
        print("never recovers to within 1 pt of the clean arm")
    else:
        print(f"back within 1 pt of the clean arm at epoch "
              f"{report['recovery_epoch']} "
              f"({report['recovery_epochs_after']} epochs later)")
    print(f"timeline -> {timeline_path}")


if __name__ == "__main__":
    main()
