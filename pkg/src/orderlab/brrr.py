"""Ordering attacks: reorder, reshuffle, and replace the batch stream.

The attacker sits between the dataset and the trainer. It changes nothing
about the data itself, only *when* things are seen:

- reorder: permute whole batches; batch contents stay intact
- reshuffle: re-rank individual examples by loss, then re-chunk
- replace: swap the epoch for same-size batches drawn single-class
  (ids may repeat; the epoch is no longer a partition)

The first epoch is always delivered untouched. While the trainer consumes
it, the controller records every delivered example and trains its own
small stand-in model on exactly the delivered stream; from the second
epoch on it can score examples either with that stand-in (no access to
the victim: "surrogate" oracle) or by reading the victim's own loss
("source" oracle).

Ordering policies act on a loss-ascending ranking and alternate slices
off its ends; they are pure permutations, verified property-style in the
tests.
"""

from dataclasses import dataclass, field

import numpy as np

from .batching import BatchPlan, PlannedSource, chunk, random_plan
from .errors import NumericError, PlanError
from .optim import step as opt_step
from .tensor import lmean
from .training import batched_losses

POLICIES = ("low_high", "high_low", "oscillation_inward", "oscillation_outward")

ORACLES = ("surrogate", "source")

MODES = ("reorder", "reshuffle", "replace")


def rank_items(ids, losses):
    """Sort ids by ascending loss; ties break toward the smaller id."""
    ids = np.asarray(ids, dtype=np.int64)
    losses = np.asarray(losses, dtype=np.float64)
    if ids.shape != losses.shape or ids.ndim != 1:
        raise PlanError(f"ids {ids.shape} and losses {losses.shape} must be equal-length vectors")
    if np.isnan(losses).any():
        raise NumericError("cannot rank items with NaN losses")
    order = np.lexsort((ids, losses))
    return [int(i) for i in ids[order]]


def apply_policy(ranked, policy, unit=1):
    """Reorder a loss-ascending ranking according to a delivery policy.

    Policies consume the ranking in slices of ``unit`` items:

    - low_high: deliver as ranked (the identity)
    - high_low: slices from the high end, so unit=1 is exact reversal
    - oscillation_inward: alternate high end, low end, converging on the
      middle; the highest-loss item leads
    - oscillation_outward: invert each half of the ranking first, then
      alternate ends; delivery starts near the median and works outward

    Slices keep their internal ascending order; an odd remainder goes to
    whichever side the alternation reaches next. Always a permutation.
    """
    if policy not in POLICIES:
        raise PlanError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if unit < 1:
        raise PlanError(f"unit {unit} < 1")
    seq = list(ranked)
    n = len(seq)
    if n == 0:
        raise PlanError("cannot order an empty ranking")

    if policy == "low_high":
        return seq
    if policy == "high_low":
        out = []
        hi = n
        while hi > 0:
            lo = max(0, hi - unit)
            out.extend(seq[lo:hi])
            hi = lo
        return out

    if policy == "oscillation_outward":
        half = n // 2
        seq = seq[:half][::-1] + seq[half:][::-1]
    out = []
    lo, hi = 0, n
    take_high = False
    while lo < hi:
        take_high = not take_high
        if take_high:
            nxt = max(lo, hi - unit)
            out.extend(seq[nxt:hi])
            hi = nxt
        else:
            nxt = min(hi, lo + unit)
            out.extend(seq[lo:nxt])
            lo = nxt
    return out


def plan_reshuffle(ids, losses, batch_size, policy, epoch):
    """Re-rank single examples by loss, order by policy, chunk into batches.

    The policy consumes the ranking in batch-sized slices, so each delivered
    batch is a contiguous loss band and it is the batch-level loss profile
    that follows the policy shape (descending, ascending, or oscillating).
    """
    perm = apply_policy(rank_items(ids, losses), policy, unit=batch_size)
    return BatchPlan(epoch, batch_size, chunk(perm, batch_size))


def plan_reorder(batches, batch_losses, policy, epoch, batch_size=None):
    """Permute whole batches by their mean loss; contents stay untouched."""
    batches = [tuple(int(i) for i in b) for b in batches]
    order = apply_policy(rank_items(np.arange(len(batches)), batch_losses), policy, unit=1)
    if batch_size is None:
        batch_size = max(len(b) for b in batches)
    return BatchPlan(epoch, batch_size, tuple(batches[i] for i in order))


def plan_replace_single_class(labels, batch_size, classes, gen, epoch, n_batches=None):
    """An epoch of single-class batches, classes round-robin across batches.

    Batch i holds only examples of class i mod classes. Ids repeat when a
    class pool is smaller than its share of the epoch, so the plan is a
    multiset by construction.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if n_batches is None:
        n_batches = -(-labels.size // batch_size)
    pools = []
    for c in range(classes):
        pool = np.flatnonzero(labels == c)
        if pool.size == 0:
            raise PlanError(f"class {c} has no examples to draw from")
        pools.append(pool[gen.permutation(pool.size)])
    cursors = [0] * classes
    order = []
    for i in range(n_batches):
        c = i % classes
        pool, cur = pools[c], cursors[c]
        picks = [int(pool[(cur + j) % pool.size]) for j in range(batch_size)]
        cursors[c] = (cur + batch_size) % pool.size
        order.append(tuple(picks))
    return BatchPlan(epoch, batch_size, tuple(order), multiset_ok=True)


@dataclass
class AttackSpec:
    """What the stream controller does from epoch 2 on.

    epochs_active: "after_first" (default) or an explicit collection of
    epoch numbers. resample_each_epoch: when True, reorder mode re-chunks
    fresh batches before scoring each attacked epoch and delivery re-reads
    the dataset (fresh augmentations); when False the attack replays the
    exact tensors recorded in epoch 1.
    """

    mode: str
    policy: str = "high_low"
    oracle: str = "surrogate"
    epochs_active: object = "after_first"
    resample_each_epoch: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise PlanError(f"unknown attack mode {self.mode!r}; expected one of {MODES}")
        if self.mode != "replace" and self.policy not in POLICIES:
            raise PlanError(f"unknown policy {self.policy!r}")
        if self.oracle not in ORACLES:
            raise PlanError(f"unknown oracle {self.oracle!r}; expected one of {ORACLES}")

    def active(self, epoch):
        if epoch <= 1:
            return False
        if self.epochs_active == "after_first":
            return True
        return epoch in self.epochs_active


class BrrrController:
    """Batch source that wraps a benign source and rewrites epochs.

    Epoch 1 is a bit-exact passthrough of the benign stream (recorded).
    Each attacked epoch also *generates* the benign plan it is displacing
    before throwing it away, so the defender-side order stream advances
    exactly as in the paired benign run. Scoring snapshots the oracle at
    the start of the epoch; the stand-in keeps training on every batch
    this controller actually delivers.
    """

    def __init__(self, dataset, batch_size, rng, spec, surrogate=None,
                 surrogate_opt=None, source_model=None, transform=None):
        self.benign = PlannedSource(dataset, batch_size, rng, transform)
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng
        self.spec = spec
        self.surrogate = surrogate
        self.surrogate_opt = surrogate_opt
        self.source_model = source_model
        # replace mode never scores anything, so it needs no oracle model
        if spec.mode != "replace":
            if spec.oracle == "surrogate" and surrogate is None:
                raise PlanError("surrogate oracle requested but no surrogate model given")
            if spec.oracle == "source" and source_model is None:
                raise PlanError("source oracle requested but no source model handle given")
        self.epoch = None
        self.plan = None
        self._delivering_attack = False
        self.seen_ids = []
        self.seen_store = {}  # id -> (input row as delivered in epoch 1, target)
        self.epoch1_plan = None

    # -- scoring ---------------------------------------------------------

    def _oracle_model(self):
        return self.surrogate if self.spec.oracle == "surrogate" else self.source_model

    def _stored(self, ids):
        inputs = np.stack([self.seen_store[i][0] for i in ids])
        targets = np.array([self.seen_store[i][1] for i in ids])
        return inputs, targets

    def _score_ids(self, ids):
        inputs, targets = self._stored(ids)
        return batched_losses(self._oracle_model(), inputs, targets)

    def _attack_plan(self, epoch):
        spec = self.spec
        if spec.mode == "replace":
            labels = self.dataset.targets
            return plan_replace_single_class(
                labels, self.batch_size, self.dataset.classes,
                self.rng.stream("replace", epoch), epoch,
            )
        if spec.mode == "reshuffle":
            ids = list(self.seen_ids)
            losses = self._score_ids(ids)
            return plan_reshuffle(ids, losses, self.batch_size, spec.policy, epoch)
        # reorder
        if spec.resample_each_epoch:
            gen = self.rng.stream("rechunk", epoch)
            batches = random_plan(self.dataset.n, self.batch_size, gen, epoch).order
        else:
            batches = self.epoch1_plan.order
        batch_losses = []
        for batch in batches:
            inputs, targets = self._stored(batch)
            batch_losses.append(lmean(self._oracle_model().forward_loss(inputs, targets)[0]))
        return plan_reorder(batches, batch_losses, spec.policy, epoch, self.batch_size)

    # -- BatchSource surface ----------------------------------------------

    def reset(self, epoch):
        self.epoch = epoch
        self.benign.reset(epoch)  # benign plan is drawn (and maybe discarded) either way
        if self.spec.active(epoch) and epoch > 1:
            self._delivering_attack = True
            self.plan = self._attack_plan(epoch).validate(self.dataset.n)
        else:
            self._delivering_attack = False
            self.plan = self.benign.plan
        return self

    def _fetch(self, ids):
        if self._delivering_attack and not self.spec.resample_each_epoch:
            return self._stored(ids)
        return self.benign.fetch(ids)

    def _train_surrogate(self, inputs, targets):
        if self.surrogate is None or self.surrogate_opt is None:
            return
        grad = self.surrogate.backward(inputs, targets)
        self.surrogate.params = opt_step(self.surrogate_opt, self.surrogate.params, grad)

    def __iter__(self):
        if self.plan is None:
            raise PlanError("reset(epoch) must be called before iterating")
        recording = self.epoch == 1
        if recording:
            self.seen_ids = []
            self.epoch1_plan = self.plan
        for batch_ids in self.plan.order:
            ids = np.asarray(batch_ids, dtype=np.int64)
            inputs, targets = self._fetch(ids)
            if recording:
                for row, ex_id in enumerate(batch_ids):
                    self.seen_ids.append(ex_id)
                    self.seen_store[ex_id] = (inputs[row], targets[row])
            yield inputs, targets, ids
            self._train_surrogate(inputs, targets)
