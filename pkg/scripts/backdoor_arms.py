"""Four-arm backdoor comparison on the digit classifier.

All arms share the schedule (3 clean epochs, 3 epochs with 5 injected
batches each, then a 48-batch burst) and differ only in what gets injected:

- random:    natural batches, sampled like any other   (floor)
- blackbox:  gradient-matched natural batches, chosen with a small
             surrogate the attacker trains on the side
- whitebox:  gradient-matched natural batches, chosen with the victim's
             own parameters
- triggered: pixel-stamped, label-flipped batches      (ceiling)

The two middle arms never modify a pixel or a label; ordering and batch
composition are the whole attack. Prints the trigger table and writes one
metrics CSV per arm; the runner also drops stamped example images in the
output directory.

Run:
    python3 scripts/backdoor_arms.py --out runs/backdoor
"""

import argparse
import os

from orderlab.harness import run_bob_experiment


def arm_config(injection_kind, name, oracle="source", with_surrogate=False):
    cfg = {
        "seed": 7,
        "name": name,
        "dataset": {"kind": "digits", "n": 2000, "test_n": 500,
                    "noise": 0.12, "glare": 0.12},
        "model": {"kind": "cnn_small"},
        "optimizer": {"kind": "adam", "lr": 1e-3},
        "batch_size": 32,
        "epochs": 6,
        "oracle": oracle,
        "trigger": {"kind": "white_lines", "target_class": 8},
        "objective": {"candidates": 60, "v_fraction": 1.0},
        "schedule": {"pretrain_epochs": 3, "attack_epochs": 3,
                     "injections_per_epoch": 5, "final_burst": 48,
                     "injection_kind": injection_kind},
    }
    if with_surrogate:
        cfg["surrogate"] = {"kind": "mlp", "hidden": 8}
        cfg["surrogate_optimizer"] = {"kind": "adam", "lr": 1e-3}
    return cfg


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/backdoor")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    arms = [
        arm_config("random", "bob-random"),
        arm_config("bop", "bob-blackbox", oracle="surrogate",
                   with_surrogate=True),
        arm_config("bop", "bob-whitebox"),
        arm_config("triggered", "bob-triggered"),
    ]
    print(f"{'arm':14s} {'trigger_acc':>11s} {'trigger_err':>11s} "
          f"{'clean_test_acc':>14s}")
    for cfg in arms:
        log, info = run_bob_experiment(cfg, out_dir=args.out)
        final = info["final"]
        clean = log.filter(split="test").rows[-1]["accuracy"]
        print(f"{cfg['name']:14s} {final['trigger_accuracy']:11.3f} "
              f"{final['error_with_trigger']:11.3f} {clean:14.3f}")

    print(f"metrics CSVs and trigger images -> {args.out}")


if __name__ == "__main__":
    main()
