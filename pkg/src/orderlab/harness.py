"""Experiment harness: configs in, deterministic CSV metrics out.

A run is one JSON config: dataset, source model, optional surrogate,
optimizers, and an optional attack section. The same seed always yields
byte-identical metrics because every random draw flows through named
Philox streams and every reduction has a fixed order.

Paired arms come from the same config with the attack section swapped,
sharing seed and therefore init and data bit for bit.
"""

import hashlib
import itertools
import json
import os
from multiprocessing import get_context

import numpy as np
from scipy import stats as _scipy_stats

from . import bopbob, theory
from .batching import GaussianJitter, PlannedSource
from .brrr import MODES, ORACLES, POLICIES, AttackSpec, BrrrController
from .datasets import Dataset, generate_blobs, generate_digits, generate_linreg_data, load_idx, save_idx
from .errors import ConfigError
from .metrics import MetricsLog
from .models import ModelPair, MODEL_KINDS, build_model
from .optim import OPTIMIZER_KINDS, make_optimizer
from .rng import Rng
from .training import Trainer, run_training

DATASET_KINDS = ("linreg", "blobs", "digits", "idx")


def _problem(problems, key, msg):
    problems.append(f"{key}: {msg}")


def validate_config(cfg, require_attack=False):
    """Collect config problems; raises ConfigError listing offending keys."""
    problems = []
    if not isinstance(cfg, dict):
        raise ConfigError(["config: must be a JSON object"])

    for key, default in (("seed", None), ("epochs", None), ("batch_size", None)):
        v = cfg.get(key, default)
        if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
            _problem(problems, key, f"required positive integer, got {v!r}")

    ds = cfg.get("dataset")
    if not isinstance(ds, dict) or ds.get("kind") not in DATASET_KINDS:
        _problem(problems, "dataset.kind", f"must be one of {DATASET_KINDS}")
    elif ds["kind"] != "idx":
        if not isinstance(ds.get("n"), int) or ds["n"] < 2:
            _problem(problems, "dataset.n", "required integer >= 2")

    model = cfg.get("model")
    if not isinstance(model, dict) or model.get("kind") not in MODEL_KINDS:
        _problem(problems, "model.kind", f"must be one of {MODEL_KINDS}")

    surrogate = cfg.get("surrogate")
    if surrogate is not None and (
        not isinstance(surrogate, dict) or surrogate.get("kind") not in MODEL_KINDS
    ):
        _problem(problems, "surrogate.kind", f"must be one of {MODEL_KINDS}")

    for key in ("optimizer", "surrogate_optimizer"):
        spec = cfg.get(key)
        if spec is None:
            continue
        if not isinstance(spec, dict) or spec.get("kind", "sgd") not in OPTIMIZER_KINDS:
            _problem(problems, f"{key}.kind", f"must be one of {OPTIMIZER_KINDS}")
        elif not isinstance(spec.get("lr", 0.01), (int, float)) or spec.get("lr", 0.01) <= 0:
            _problem(problems, f"{key}.lr", "must be a positive number")

    attack = cfg.get("attack")
    if require_attack and attack is None:
        _problem(problems, "attack", "this command needs an attack section")
    if attack is not None:
        if not isinstance(attack, dict):
            _problem(problems, "attack", "must be an object")
        else:
            if attack.get("mode") not in MODES:
                _problem(problems, "attack.mode", f"must be one of {MODES}")
            if attack.get("mode") != "replace" and attack.get("policy", "high_low") not in POLICIES:
                _problem(problems, "attack.policy", f"must be one of {POLICIES}")
            if attack.get("oracle", "surrogate") not in ORACLES:
                _problem(problems, "attack.oracle", f"must be one of {ORACLES}")
            elif (attack.get("mode") != "replace"
                  and attack.get("oracle", "surrogate") == "surrogate"
                  and cfg.get("surrogate") is None):
                _problem(problems, "surrogate", "surrogate oracle needs a surrogate model")
            ea = attack.get("epochs_active", "after_first")
            if ea != "after_first" and not (
                isinstance(ea, (list, tuple)) and all(isinstance(e, int) for e in ea)
            ):
                _problem(problems, "attack.epochs_active",
                         "must be 'after_first' or a list of epoch numbers")

    if problems:
        raise ConfigError(problems)
    return cfg


def build_dataset(cfg, rng, data_dir=None):
    """Build (train, test) datasets from the config's dataset section."""
    ds = cfg["dataset"]
    kind = ds["kind"]
    n = ds.get("n")
    test_n = ds.get("test_n", max(2, (n or 0) // 5))
    if kind == "linreg":
        kw = {k: ds[k] for k in ("slope", "intercept", "noise", "x_range") if k in ds}
        return (generate_linreg_data(n, rng.stream("data", 0), **kw),
                generate_linreg_data(test_n, rng.stream("data", 1), **kw))
    if kind == "blobs":
        kw = {k: ds[k] for k in ("separation", "dim", "spread") if k in ds}
        classes = ds.get("classes", 4)
        return (generate_blobs(n, classes, rng.stream("data", 0), **kw),
                generate_blobs(test_n, classes, rng.stream("data", 1), **kw))
    if kind == "digits":
        kw = {k: ds[k] for k in ("noise", "glare") if k in ds}
        suffix = "".join(f"-{k}{kw[k]}" for k in sorted(kw))
        out = []
        for idx, count in ((0, n), (1, test_n)):
            if data_dir is not None:
                tag = f"digits-{'train' if idx == 0 else 'test'}-{count}-{cfg['seed']}{suffix}"
                ipath = os.path.join(data_dir, f"{tag}-images.idx")
                lpath = os.path.join(data_dir, f"{tag}-labels.idx")
                if os.path.exists(ipath) and os.path.exists(lpath):
                    out.append(load_idx(ipath, lpath))
                    continue
                made = generate_digits(count, rng.stream("data", idx), **kw)
                os.makedirs(data_dir, exist_ok=True)
                save_idx(made, ipath, lpath)
                out.append(made)
            else:
                out.append(generate_digits(count, rng.stream("data", idx), **kw))
        return tuple(out)
    if kind == "idx":
        return (load_idx(ds["images"], ds["labels"]),
                load_idx(ds["test_images"], ds["test_labels"]))
    raise ConfigError([f"dataset.kind: unknown kind {kind!r}"])


def build_models(cfg, train, rng):
    """Source model (and surrogate when configured), initialized from streams."""
    in_shape = train.inputs.shape[1:] or (1,)
    source = build_model(cfg["model"], in_shape=in_shape, classes=train.classes)
    source.init_params(rng.stream("init", 0))
    surrogate = None
    if cfg.get("surrogate") is not None:
        surrogate = build_model(cfg["surrogate"], in_shape=in_shape, classes=train.classes)
        surrogate.init_params(rng.stream("init", 1))
        ModelPair(source, surrogate)  # enforces the strictly-smaller rule
    return source, surrogate


def _augment(cfg, rng):
    spec = cfg.get("augment")
    if spec is None:
        return None
    clip = tuple(spec["clip"]) if spec.get("clip") else None
    return GaussianJitter(rng, scale=spec.get("scale", 0.05),
                          resample_each_epoch=spec.get("resample_each_epoch", True),
                          clip=clip)


def run_id_for(cfg):
    digest = hashlib.blake2b(
        json.dumps(cfg, sort_keys=True).encode(), digest_size=4
    ).hexdigest()
    return f"{cfg.get('name', 'run')}-s{cfg['seed']}-{digest}"


def run_experiment(cfg, out_dir=None, data_dir=None):
    """Run one training arm per the config; returns (log, extras).

    With an attack section the batch stream goes through the ordering
    controller; without one it is a plain per-epoch shuffle. Writes
    <run_id>.csv under out_dir when given.
    """
    validate_config(cfg)
    rng = Rng(cfg["seed"])
    train, test = build_dataset(cfg, rng, data_dir)
    source, surrogate = build_models(cfg, train, rng)
    opt = make_optimizer(cfg.get("optimizer", {"kind": "sgd", "lr": 0.01}),
                         source.layout_id, source.n_params)
    transform = _augment(cfg, rng)

    attack = cfg.get("attack")
    if attack is None:
        batch_source = PlannedSource(train, cfg["batch_size"], rng, transform)
        meta_mode, meta_policy = "benign", None
    else:
        spec = AttackSpec(
            mode=attack["mode"],
            policy=attack.get("policy", "high_low"),
            oracle=attack.get("oracle", "surrogate"),
            epochs_active=(attack.get("epochs_active", "after_first")
                           if attack.get("epochs_active", "after_first") == "after_first"
                           else set(attack["epochs_active"])),
            resample_each_epoch=attack.get("resample_each_epoch", False),
        )
        surrogate_opt = None
        if surrogate is not None:
            surrogate_opt = make_optimizer(
                cfg.get("surrogate_optimizer", {"kind": "adam", "lr": 0.001}),
                surrogate.layout_id, surrogate.n_params)
        batch_source = BrrrController(
            train, cfg["batch_size"], rng, spec,
            surrogate=surrogate, surrogate_opt=surrogate_opt,
            source_model=source, transform=transform,
        )
        meta_mode, meta_policy = attack["mode"], attack.get("policy", "high_low")
        if attack["mode"] == "replace":
            meta_policy = None

    meta = {"run_id": run_id_for(cfg), "policy": meta_policy, "mode": meta_mode,
            "seed": cfg["seed"]}
    trainer = Trainer(source, opt)
    log, extras = run_training(
        trainer, batch_source, cfg["epochs"],
        train_eval=train, test_eval=test, meta=meta,
        bias_dataset=train if cfg.get("bias_trace") else None,
        param_trace=bool(cfg.get("param_trace")),
    )
    extras["model"] = source
    extras["surrogate"] = surrogate
    extras["train"] = train
    extras["test"] = test
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log.to_csv(os.path.join(out_dir, f"{meta['run_id']}.csv"))
    return log, extras


def build_trigger(cfg, train):
    spec = cfg.get("trigger")
    if not isinstance(spec, dict):
        raise ConfigError(["trigger: backdoor runs need a trigger section"])
    kind = spec.get("kind")
    hw = train.inputs.shape[-1]
    target = spec.get("target_class", 0)
    if kind == "white_lines":
        return bopbob.white_lines(hw, target)
    if kind == "flag_like":
        return bopbob.flag_like(hw, target)
    raise ConfigError([f"trigger.kind: must be white_lines or flag_like, got {kind!r}"])


def run_bob_experiment(cfg, out_dir=None, data_dir=None):
    """Backdoor campaign from a config; returns (log, info)."""
    validate_config(cfg)
    rng = Rng(cfg["seed"])
    train, test = build_dataset(cfg, rng, data_dir)
    source, surrogate = build_models(cfg, train, rng)
    opt = make_optimizer(cfg.get("optimizer", {"kind": "adam", "lr": 0.001}),
                         source.layout_id, source.n_params)
    surrogate_opt = None
    if surrogate is not None:
        surrogate_opt = make_optimizer(
            cfg.get("surrogate_optimizer", {"kind": "adam", "lr": 0.001}),
            surrogate.layout_id, surrogate.n_params)
    oracle = cfg.get("oracle", "source")
    if oracle == "surrogate" and surrogate is None:
        raise ConfigError(["surrogate: surrogate oracle needs a surrogate model"])

    trigger = build_trigger(cfg, train)
    objective = bopbob.PoisonObjective(**cfg.get("objective", {}))
    schedule = bopbob.BobSchedule(**cfg.get("schedule", {}))
    meta = {"run_id": run_id_for(cfg), "policy": schedule.injection_kind,
            "mode": "bob", "seed": cfg["seed"]}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    log, info = bopbob.run_bob(
        train, test, Trainer(source, opt), trigger, objective, schedule, rng,
        batch_size=cfg["batch_size"], oracle=oracle,
        surrogate=surrogate, surrogate_opt=surrogate_opt,
        meta=meta, out_dir=out_dir,
    )
    info["model"] = source
    info["train"], info["test"] = train, test
    if out_dir is not None:
        log.to_csv(os.path.join(out_dir, f"{meta['run_id']}.csv"))
    return log, info


def run_bop_experiment(cfg, out_dir=None, data_dir=None):
    """Single-point flip campaign from a config; returns (log, info)."""
    validate_config(cfg)
    target = cfg.get("bop_target")
    if not isinstance(target, dict) or "index" not in target or "label" not in target:
        raise ConfigError(["bop_target: needs {index, label}"])
    rng = Rng(cfg["seed"])
    train, test = build_dataset(cfg, rng, data_dir)
    source, _surrogate = build_models(cfg, train, rng)
    opt = make_optimizer(cfg.get("optimizer", {"kind": "adam", "lr": 0.001}),
                         source.layout_id, source.n_params)
    objective = bopbob.PoisonObjective(**cfg.get("objective", {}))
    schedule = cfg.get("schedule", {})
    meta = {"run_id": run_id_for(cfg), "mode": "bop", "seed": cfg["seed"]}
    log, info = bopbob.run_bop_single_point(
        train, test, Trainer(source, opt),
        target_id=target["index"], poison_label=target["label"],
        objective=objective, rng=rng, batch_size=cfg["batch_size"],
        pretrain_epochs=schedule.get("pretrain_epochs", 3),
        max_batches=schedule.get("max_batches", 95),
        meta=meta,
    )
    info["model"] = source
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log.to_csv(os.path.join(out_dir, f"{meta['run_id']}.csv"))
    return log, info


def _best_test_epoch(log):
    rows = log.filter(split="test").rows
    if not rows:
        raise ValueError("log has no test rows")
    best = min(rows, key=lambda r: (r["loss"], r["epoch"]))
    return best


def compare_arms(baseline_log, attacked_log, after_epoch=None, within_points=1.0):
    """Report both arms at their own best-test-loss epoch.

    Accuracy deltas are attacked minus baseline, in points and as a
    relative percent change; regression arms compare losses instead.
    With after_epoch set, also reports the first epoch after it where the
    attacked arm's test accuracy re-enters within_points of the paired
    baseline's same-epoch accuracy (None if it never does).
    """
    b, a = _best_test_epoch(baseline_log), _best_test_epoch(attacked_log)
    out = {
        "baseline_best_epoch": b["epoch"], "attacked_best_epoch": a["epoch"],
        "baseline_best_loss": b["loss"], "attacked_best_loss": a["loss"],
        "baseline_accuracy": b["accuracy"], "attacked_accuracy": a["accuracy"],
        "loss_ratio": (a["loss"] / b["loss"]) if b["loss"] else float("inf"),
    }
    if b["accuracy"] is not None and a["accuracy"] is not None:
        out["delta_accuracy_points"] = 100.0 * (a["accuracy"] - b["accuracy"])
        out["delta_percent"] = (100.0 * (a["accuracy"] - b["accuracy"]) / b["accuracy"]
                                if b["accuracy"] else float("inf"))
    else:
        out["delta_accuracy_points"] = None
        out["delta_percent"] = (100.0 * (a["loss"] - b["loss"]) / b["loss"]
                                if b["loss"] else float("inf"))

    if after_epoch is not None:
        base_by_epoch = {r["epoch"]: r["accuracy"] for r in baseline_log.filter(split="test").rows}
        recovery = None
        for r in sorted(attacked_log.filter(split="test").rows, key=lambda r: r["epoch"]):
            e = r["epoch"]
            if e <= after_epoch or base_by_epoch.get(e) is None:
                continue
            if r["accuracy"] is not None and r["accuracy"] >= base_by_epoch[e] - within_points / 100.0:
                recovery = e
                break
        out["recovery_epoch"] = recovery
        out["recovery_epochs_after"] = None if recovery is None else recovery - after_epoch
    return out


SWEEP_AXES = {
    "policy": ("attack", "policy"),
    "batch_size": ("batch_size",),
    "source_optimizer": ("optimizer", "kind"),
    "surrogate_optimizer": ("surrogate_optimizer", "kind"),
    "source_lr": ("optimizer", "lr"),
    "surrogate_lr": ("surrogate_optimizer", "lr"),
    "source_momentum": ("optimizer", "momentum"),
    "surrogate_momentum": ("surrogate_optimizer", "momentum"),
}


def _apply_axis(cfg, axis, value):
    path = SWEEP_AXES[axis]
    node = cfg
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value


def _sweep_cell(args):
    index, cfg, out_dir, data_dir = args
    attacked_log, _ = run_experiment(cfg, out_dir=out_dir, data_dir=data_dir)
    benign_cfg = dict(cfg)
    benign_cfg["attack"] = None
    benign_cfg["name"] = cfg.get("name", "run") + "-baseline"
    baseline_log, _ = run_experiment(benign_cfg, out_dir=out_dir, data_dir=data_dir)
    return index, compare_arms(baseline_log, attacked_log)


def run_sweep(base_cfg, grid, workers=1, out_dir=None, data_dir=None):
    """Cartesian sweep; returns summary rows ordered by cell index.

    grid maps axis names (see SWEEP_AXES) to value lists. Each cell runs
    an attacked arm and its seed-paired baseline. Worker count changes
    wall time only, never results.
    """
    bad = set(grid) - set(SWEEP_AXES)
    if bad:
        raise ConfigError([f"grid.{k}: unknown sweep axis" for k in sorted(bad)])
    axes = sorted(grid)
    cells = []
    for index, values in enumerate(itertools.product(*(grid[a] for a in axes))):
        cfg = json.loads(json.dumps(base_cfg))  # deep copy via round trip
        for axis, value in zip(axes, values):
            _apply_axis(cfg, axis, value)
        cfg["name"] = f"{base_cfg.get('name', 'sweep')}-c{index:03d}"
        cells.append((index, cfg, out_dir, data_dir))

    if workers > 1:
        with get_context("spawn").Pool(workers) as pool:
            results = pool.map(_sweep_cell, cells)
    else:
        results = [_sweep_cell(c) for c in cells]
    results.sort(key=lambda t: t[0])

    rows = []
    for (index, cfg, _o, _d), (_i, cmp_row) in zip(cells, results):
        row = {"cell": index}
        for axis in axes:
            node = cfg
            for key in SWEEP_AXES[axis][:-1]:
                node = node[key]
            row[axis] = node[SWEEP_AXES[axis][-1]]
        row.update(cmp_row)
        rows.append(row)
    if out_dir is not None:
        write_sweep_csv(rows, os.path.join(out_dir, "sweep.csv"))
    return rows


def write_sweep_csv(rows, path):
    import csv

    if not rows:
        raise ValueError("no sweep rows to write")
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            out = []
            for c in cols:
                v = row[c]
                out.append("" if v is None else (f"{v:.17g}" if isinstance(v, float) else str(v)))
            writer.writerow(out)
    return path


def trend(xs, ys):
    """Spearman rank trend of ys against xs: (rho, p_value)."""
    rho, p = _scipy_stats.spearmanr(xs, ys)
    return float(rho), float(p)


def theory_battery(seed=0, trials=200_000):
    """The standing table of theory quantities; returns battery rows.

    Each row is (quantity, estimate, stderr, reference_value); stderr and
    reference are None where not applicable.
    """
    rng = Rng(seed)
    normal = lambda gen, shape: gen.standard_normal(shape)
    rademacher = lambda gen, shape: gen.choice(np.array([-1.0, 1.0]), size=shape)
    ref = theory.K_INF_NORMAL

    rows = []
    kq = theory.k_infinity(_scipy_stats.norm.pdf)
    rows.append(("k_infinity_normal_quadrature", kq, None, ref))
    s3 = np.sqrt(3.0)
    uniform_pdf = lambda v: np.where(np.abs(v) <= s3, 1.0 / (2.0 * s3), 0.0)
    rows.append(("k_infinity_uniform_quadrature",
                 theory.k_infinity(uniform_pdf, support=(-s3, s3)), None,
                 1.0 / np.sqrt(3.0)))
    for n in (2, 10, 100, 1000):
        est, se = theory.estimate_Kn(n, max(trials // n, 2000), rng.stream("kn", n), normal)
        rows.append((f"K_n_normal_N{n}", est, se, ref))
    est, se = theory.estimate_Kn(2, trials, rng.stream("kn-rad", 2), rademacher)
    rows.append(("K_n_rademacher_N2", est, se, 0.5))

    gap = theory.xi_order_gap(normal, 100, 20_000, rng.stream("xi", 0))
    rows.append(("xi_mean_asis_normal_N100", gap["mean_asis"], gap["se_asis"], 0.0))
    rows.append(("xi_mean_sorted_normal_N100", gap["mean_sorted"], gap["se_sorted"], None))
    rows.append(("xi_mean_gap_normal_N100", gap["mean_gap"], gap["se_gap"], None))

    ok_s, lhs, rhs_s = theory.attack_success_condition(1.0, 1.0, 1.0, 1.5, form="stated")
    ok_d, _, rhs_d = theory.attack_success_condition(1.0, 1.0, 1.0, 1.5, form="derived")
    rows.append(("success_condition_lhs_example", lhs, None, None))
    rows.append(("success_condition_rhs_stated_example", rhs_s, None, None))
    rows.append(("success_condition_rhs_derived_example", rhs_d, None, None))
    rows.append(("success_condition_stated_holds", float(ok_s), None, None))
    rows.append(("success_condition_derived_holds", float(ok_d), None, None))

    rows.append(("sample_size_oned_exact_eps0.1_p0.05",
                 theory.sample_size_bound(0.1, 0.05), None, None))
    rows.append(("sample_size_oned_smalleps_eps0.1_p0.05",
                 theory.sample_size_bound(0.1, 0.05, mode="oned_smalleps"), None, None))
    return rows


def write_theory_csv(rows, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "estimate", "stderr", "reference_value"])
        for name, est, se, ref in rows:
            writer.writerow([
                name, f"{est:.17g}",
                "" if se is None else f"{se:.17g}",
                "" if ref is None else f"{ref:.17g}",
            ])
    return path
