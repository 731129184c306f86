"""Clean-data poisoning by gradient matching.

The attacker wants the victim to learn something no delivered example
shows. It computes the gradient an *adversarial* batch would produce
(e.g. trigger-stamped images labeled with a target class), then searches
the natural training data for a batch whose gradient comes closest, and
delivers that. Every delivered example is a genuine (input, label) pair
from the dataset; only the selection is hostile.

Two attack shapes share the machinery:

- backdoor (run_bob): the adversarial gradient points toward "trigger
  implies target class"; success is measured by trigger accuracy on
  held-out images that carry the trigger
- single-point flip (run_bop_single_point): the adversarial gradient is
  one example's gradient under a wrong label; success is that example's
  prediction flipping while test accuracy stays put

Matching recomputes the adversarial gradient at the victim's current
parameters before every injected batch; a stale gradient points somewhere
the optimizer no longer is.
"""

from dataclasses import dataclass, field

import numpy as np

from .batching import PlannedSource
from .errors import DimensionError, PlanError
from .metrics import MetricsLog
from .optim import step as opt_step
from .tensor import grad_norm
from .training import batched_predict, evaluate

TRIGGER_KINDS = ("white_lines", "flag_like", "custom_mask")


@dataclass
class TriggerPattern:
    """A pixel mask plus overlay values, bound to a target class."""

    mask: np.ndarray
    overlay: np.ndarray
    target_class: int
    kind: str = "custom_mask"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise DimensionError("trigger mask must be 2-d")
        self.overlay = np.broadcast_to(
            np.asarray(self.overlay, dtype=np.float64), self.mask.shape
        ).copy()
        if self.kind not in TRIGGER_KINDS:
            raise ValueError(f"unknown trigger kind {self.kind!r}")

    @property
    def coverage(self):
        return float(self.mask.mean())

    @property
    def pixels(self):
        return int(self.mask.sum())


def _coverage_target(image_hw):
    # smallest pixel count reaching 30%
    return -(-3 * image_hw * image_hw // 10)


def white_lines(image_hw=28, target_class=0):
    """Solid white band from the top-left: full top rows plus a partial row.

    At 28x28 this is the top 8 rows and 12 pixels of the ninth, 236 px,
    the least coverage at or above 30%.
    """
    target = _coverage_target(image_hw)
    mask = np.zeros((image_hw, image_hw), dtype=bool)
    mask.reshape(-1)[:target] = True
    return TriggerPattern(mask, 1.0, target_class, kind="white_lines")


def flag_like(image_hw=28, target_class=0):
    """White stripes on every 4th row, topped up by a bottom-right block.

    The stripes span the whole image; the block fills unmasked cells from
    the bottom-right corner until coverage matches white_lines exactly.
    """
    target = _coverage_target(image_hw)
    mask = np.zeros((image_hw, image_hw), dtype=bool)
    mask[0:image_hw:4, :] = True
    remaining = target - int(mask.sum())
    if remaining < 0:
        raise DimensionError(f"stripes alone exceed 30% at image size {image_hw}")
    for r in range(image_hw - 1, -1, -1):
        if remaining == 0:
            break
        for c in range(image_hw - 1, -1, -1):
            if not mask[r, c]:
                mask[r, c] = True
                remaining -= 1
                if remaining == 0:
                    break
    return TriggerPattern(mask, 1.0, target_class, kind="flag_like")


def custom_trigger(mask, overlay, target_class):
    return TriggerPattern(mask, overlay, target_class, kind="custom_mask")


def apply_trigger(images, trigger):
    """Stamp the trigger onto images; output is clipped to [0, 1].

    Accepts (h, w), (n, h, w), or (n, 1, h, w). Idempotent: stamping a
    stamped image changes nothing.
    """
    x = np.asarray(images, dtype=np.float64)
    mask, overlay = trigger.mask, trigger.overlay
    squeeze = False
    if x.ndim == 2:
        x = x[None]
        squeeze = True
    if x.ndim == 4 and x.shape[1] == 1:
        inner = apply_trigger(x[:, 0], trigger)
        return inner[:, None, :, :]
    if x.ndim != 3 or x.shape[1:] != mask.shape:
        raise DimensionError(f"images {np.shape(images)} do not match mask {mask.shape}")
    out = np.where(mask, overlay, x)
    out = np.clip(out, 0.0, 1.0)
    return out[0] if squeeze else out


def write_ppm(image, path):
    """Dump a [0, 1] grayscale image as a binary PPM (P6)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError("write_ppm expects a 2-d grayscale image")
    byte = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    rgb = np.repeat(byte[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6 {img.shape[1]} {img.shape[0]} 255\n".encode())
        fh.write(rgb.tobytes())
    return path


@dataclass
class PoisonObjective:
    """Search knobs for gradient matching."""

    candidates: int = 300
    v_fraction: float = 0.7
    p: float = 2
    adv_batch_size: int = None  # defaults to the training batch size

    def __post_init__(self):
        if not 0.0 < self.v_fraction <= 1.0:
            raise ValueError(f"v_fraction {self.v_fraction} outside (0, 1]")
        if self.candidates < 1:
            raise ValueError("need at least one candidate")

    def v_size(self, batch_size):
        return max(1, min(batch_size, round(self.v_fraction * batch_size)))


def poison_gradient(model, images, trigger, target_class=None):
    """Gradient of the adversarial batch: triggered inputs, target labels."""
    target = trigger.target_class if target_class is None else target_class
    stamped = apply_trigger(images, trigger)
    labels = np.full(stamped.shape[0], target, dtype=np.int64)
    return model.backward(stamped, labels)


def find_matching_batch(model, target_grad, dataset, v_size, gen,
                        candidates=300, p=2):
    """Best natural batch of size v_size by gradient distance.

    Samples ``candidates`` batches uniformly without replacement within
    each batch, computes each one's gradient *with its natural labels*,
    and keeps the argmin of || g_candidate - g_target ||_p. Ties keep the
    earliest sampled candidate.
    """
    if v_size < 1 or v_size > dataset.n:
        raise PlanError(f"candidate batch size {v_size} outside [1, {dataset.n}]")
    best_ids, best_dist = None, np.inf
    for _ in range(candidates):
        ids = np.sort(gen.choice(dataset.n, size=v_size, replace=False))
        inputs, targets = dataset.take(ids)
        g = model.backward(inputs, targets)
        dist = grad_norm(g.values - target_grad.values, p)
        if dist < best_dist:
            best_ids, best_dist = ids, dist
    return tuple(int(i) for i in best_ids), best_dist


def compose_bop_batch(matched_ids, n_pool, batch_size, gen):
    """Pad a matched core with random natural ids and shuffle the order.

    The filler is sampled from the pool excluding the matched ids, so the
    delivered batch has no duplicates; everything in it is natural data.
    """
    matched = list(matched_ids)
    fill_n = batch_size - len(matched)
    if fill_n < 0:
        raise PlanError(f"matched core {len(matched)} larger than batch {batch_size}")
    pool = np.setdiff1d(np.arange(n_pool), np.asarray(matched, dtype=np.int64))
    fill = gen.choice(pool, size=fill_n, replace=False) if fill_n else np.empty(0, np.int64)
    ids = np.concatenate([np.asarray(matched, dtype=np.int64), fill.astype(np.int64)])
    return tuple(int(i) for i in ids[gen.permutation(ids.size)])


@dataclass
class BobSchedule:
    """When poison batches enter the stream.

    pretrain_epochs of clean training; then attack_epochs with
    injections_per_epoch poison batches spliced evenly between natural
    batches; then final_burst back-to-back poison batches replacing
    natural data entirely.
    """

    pretrain_epochs: int = 3
    attack_epochs: int = 0
    injections_per_epoch: int = 0
    final_burst: int = 0
    injection_kind: str = "bop"  # bop | random | triggered

    def __post_init__(self):
        if self.injection_kind not in ("bop", "random", "triggered"):
            raise ValueError(f"unknown injection kind {self.injection_kind!r}")


def trigger_metrics(model, test_dataset, trigger, chunk_size=1024):
    """How the model treats trigger-stamped held-out images.

    trigger_accuracy: fraction predicted as the target class, counted
    only over images whose true label is not already the target.
    error_with_trigger: fraction of all stamped images predicted as
    anything other than their true label.
    """
    stamped = apply_trigger(test_dataset.inputs, trigger)
    preds = batched_predict(model, stamped, chunk_size)
    labels = test_dataset.targets.astype(np.int64)
    eligible = labels != trigger.target_class
    if not eligible.any():
        raise PlanError("every test example already has the target label")
    return {
        "trigger_accuracy": float(np.mean(preds[eligible] == trigger.target_class)),
        "error_with_trigger": float(np.mean(preds != labels)),
        "eligible_fraction": float(eligible.mean()),
    }


class _Injector:
    """Builds one injected batch per call, per the configured arm."""

    def __init__(self, dataset, batch_size, trigger, objective, rng, kind,
                 oracle_model):
        self.dataset = dataset
        self.batch_size = batch_size
        self.trigger = trigger
        self.objective = objective
        self.rng = rng
        self.kind = kind
        self.oracle_model = oracle_model
        self.count = 0

    def next_batch(self):
        self.count += 1
        gen = self.rng.stream("inject", self.count)
        ds, B = self.dataset, self.batch_size
        if self.kind == "random":
            ids = gen.choice(ds.n, size=B, replace=False)
            return ds.take(ids)
        if self.kind == "triggered":
            ids = gen.choice(ds.n, size=B, replace=False)
            inputs, _ = ds.take(ids)
            stamped = apply_trigger(inputs, self.trigger)
            return stamped, np.full(B, self.trigger.target_class, dtype=np.int64)
        # bop: recompute the poison gradient at current oracle params
        adv_n = self.objective.adv_batch_size or B
        adv_ids = gen.choice(ds.n, size=adv_n, replace=False)
        adv_inputs, _ = ds.take(adv_ids)
        tgrad = poison_gradient(self.oracle_model, adv_inputs, self.trigger)
        matched, _dist = find_matching_batch(
            self.oracle_model, tgrad, ds, self.objective.v_size(B), gen,
            self.objective.candidates, self.objective.p,
        )
        ids = compose_bop_batch(matched, ds.n, B, gen)
        return ds.take(np.asarray(ids, dtype=np.int64))


def _splice_positions(n_batches, k):
    # k injection points spread evenly through an epoch of n_batches
    if k <= 0:
        return set()
    return {int(np.floor((i + 1) * n_batches / (k + 1))) for i in range(k)}


def run_bob(dataset, test_dataset, trainer, trigger, objective, schedule, rng,
            batch_size=32, oracle="source", surrogate=None, surrogate_opt=None,
            meta=None, log=None, out_dir=None):
    """Backdoor campaign; returns (log, info).

    oracle picks whose gradients drive the matching: the victim's
    ("source") or the attacker's co-trained stand-in ("surrogate"). The
    stand-in trains on exactly the delivered stream, poison batches
    included, because the attacker sees what it delivers.
    """
    meta = dict(meta or {})
    log = log if log is not None else MetricsLog()
    if oracle == "surrogate" and surrogate is None:
        raise PlanError("surrogate oracle requested but no surrogate model given")
    oracle_model = trainer.model if oracle == "source" else surrogate

    if out_dir is not None:
        canvas = apply_trigger(np.zeros(trigger.mask.shape), trigger)
        write_ppm(canvas, f"{out_dir}/trigger_{trigger.kind}.ppm")
        sample = apply_trigger(dataset.inputs[0], trigger)
        write_ppm(sample, f"{out_dir}/triggered_example_{trigger.kind}.ppm")

    benign = PlannedSource(dataset, batch_size, rng)
    injector = _Injector(dataset, batch_size, trigger, objective, rng,
                         schedule.injection_kind, oracle_model)

    def train_on(inputs, targets):
        trainer.step(inputs, targets)
        if surrogate is not None and surrogate_opt is not None:
            g = surrogate.backward(inputs, targets)
            surrogate.params = opt_step(surrogate_opt, surrogate.params, g)

    def eval_rows(epoch):
        loss, acc = evaluate(trainer.model, dataset)
        log.add(epoch=epoch, split="train", loss=loss, accuracy=acc, **meta)
        loss, acc = evaluate(trainer.model, test_dataset)
        log.add(epoch=epoch, split="test", loss=loss, accuracy=acc, **meta)
        tm = trigger_metrics(trainer.model, test_dataset, trigger)
        log.add(epoch=epoch, split="trigger",
                trigger_accuracy=tm["trigger_accuracy"],
                error_with_trigger=tm["error_with_trigger"], **meta)
        return tm

    total_epochs = schedule.pretrain_epochs + schedule.attack_epochs
    info = {"injected": 0}
    for epoch in range(1, total_epochs + 1):
        benign.reset(epoch)
        inject_at = (_splice_positions(benign.plan.n_batches, schedule.injections_per_epoch)
                     if epoch > schedule.pretrain_epochs else set())
        for pos, (inputs, targets, _ids) in enumerate(benign):
            train_on(inputs, targets)
            if pos in inject_at:
                train_on(*injector.next_batch())
                info["injected"] += 1
        eval_rows(epoch)

    for _ in range(schedule.final_burst):
        train_on(*injector.next_batch())
        info["injected"] += 1
    tm = eval_rows(total_epochs + 1) if schedule.final_burst else None
    info["final"] = tm
    return log, info


def run_bop_single_point(dataset, test_dataset, trainer, target_id, poison_label,
                         objective, rng, batch_size=32, pretrain_epochs=3,
                         max_batches=95, stop_on_flip=True, meta=None, log=None):
    """Flip one example's prediction using only natural batches.

    Pretrains clean, then repeatedly delivers batches matched to the
    gradient of (target example, poison label), recomputed each step.
    Returns (log, info) where info carries the prediction/logit
    trajectory, the first flip index, and test accuracy before/after.
    """
    meta = dict(meta or {})
    log = log if log is not None else MetricsLog()
    model = trainer.model
    x_t = dataset.inputs[target_id : target_id + 1]
    true_label = int(dataset.targets[target_id])
    if poison_label == true_label:
        raise PlanError("poison label equals the true label; nothing to flip")

    benign = PlannedSource(dataset, batch_size, rng)
    for epoch in range(1, pretrain_epochs + 1):
        benign.reset(epoch)
        for inputs, targets, _ids in benign:
            trainer.step(inputs, targets)
        loss, acc = evaluate(model, test_dataset)
        log.add(epoch=epoch, split="test", loss=loss, accuracy=acc, **meta)

    pre_loss, pre_acc = evaluate(model, test_dataset)
    poison_target = np.array([poison_label], dtype=np.int64)
    trajectory = []
    first_flip = None
    for k in range(1, max_batches + 1):
        gen = rng.stream("bop", k)
        adv_grad = model.backward(x_t, poison_target)
        matched, _ = find_matching_batch(model, adv_grad, dataset,
                                         objective.v_size(batch_size), gen,
                                         objective.candidates, objective.p)
        ids = compose_bop_batch(matched, dataset.n, batch_size, gen)
        trainer.step(*dataset.take(np.asarray(ids, dtype=np.int64)))
        z = model.logits(x_t)[0]
        pred = int(np.argmax(z))
        trajectory.append(
            {"batch": k, "pred": pred,
             "logit_poison": float(z[poison_label]), "logit_true": float(z[true_label])}
        )
        if pred == poison_label and first_flip is None:
            first_flip = k
            if stop_on_flip:
                break
    post_loss, post_acc = evaluate(model, test_dataset)
    log.add(epoch=pretrain_epochs + 1, split="test", loss=post_loss,
            accuracy=post_acc, **meta)
    info = {
        "true_label": true_label, "poison_label": int(poison_label),
        "first_flip": first_flip, "trajectory": trajectory,
        "pre_test_acc": pre_acc, "post_test_acc": post_acc,
        "pre_test_loss": pre_loss, "post_test_loss": post_loss,
    }
    return log, info
