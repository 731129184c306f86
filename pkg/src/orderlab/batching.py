"""Batch plans and the stream the trainer actually consumes.

A BatchPlan is the full ordering of one epoch: a tuple of id-batches. The
default contract is a partition (every dataset id exactly once); plans
that intentionally repeat or drop ids must say so with ``multiset_ok``,
which keeps accidental duplication a hard error everywhere else.

A batch source hides everything upstream of the trainer. The trainer sees
(inputs, targets, ids) per batch and nothing else, so it cannot tell a
benign shuffle from an adversarially planned epoch; that opacity is the
threat model under study, not a convenience.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PlanError
from .rng import Rng


@dataclass(frozen=True)
class BatchPlan:
    """One epoch's delivery order.

    order is a tuple of tuples of dataset ids. batch_size records the
    nominal size; the final batch may be short (short tail is kept, not
    dropped).
    """

    epoch: int
    batch_size: int
    order: tuple
    multiset_ok: bool = False

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(tuple(int(i) for i in b) for b in self.order))

    @property
    def n_batches(self):
        return len(self.order)

    def flat_ids(self):
        return [i for batch in self.order for i in batch]

    def validate(self, n):
        """Check ids against a dataset of size n; raises PlanError."""
        if self.batch_size < 1:
            raise PlanError(f"batch_size {self.batch_size} < 1")
        flat = self.flat_ids()
        if not flat:
            raise PlanError("plan has no ids")
        for batch in self.order:
            if not batch:
                raise PlanError("plan contains an empty batch")
        lo, hi = min(flat), max(flat)
        if lo < 0 or hi >= n:
            raise PlanError(f"id {lo if lo < 0 else hi} outside [0, {n})")
        if not self.multiset_ok:
            if len(flat) != n or len(set(flat)) != n:
                raise PlanError(
                    f"plan is not a partition: {len(flat)} ids, {len(set(flat))} "
                    f"unique, dataset has {n}"
                )
        return self


def chunk(ids, batch_size):
    """Split an id sequence into consecutive batches, keeping a short tail."""
    if batch_size < 1:
        raise PlanError(f"batch_size {batch_size} < 1")
    ids = list(ids)
    return tuple(tuple(ids[i : i + batch_size]) for i in range(0, len(ids), batch_size))


def random_plan(n, batch_size, gen, epoch=1):
    """Uniform shuffle of all n ids, then consecutive chunks."""
    perm = gen.permutation(n)
    return BatchPlan(epoch, batch_size, chunk(perm.tolist(), batch_size)).validate(n)


class GaussianJitter:
    """Per-fetch additive noise keyed by (epoch, id).

    The noise for a given example depends only on the epoch key and the
    example id, never on batch composition, so reordering attacks cannot
    smuggle information through augmentation. With resample_each_epoch
    False the epoch key is pinned to 1: every epoch replays the epoch-1
    transforms exactly.
    """

    def __init__(self, rng: Rng, scale=0.05, resample_each_epoch=True, clip=None):
        self.rng = rng
        self.scale = scale
        self.resample_each_epoch = resample_each_epoch
        self.clip = clip

    def __call__(self, inputs, ids, epoch):
        key_epoch = epoch if self.resample_each_epoch else 1
        out = np.array(inputs, dtype=np.float64, copy=True)
        for row, ex_id in enumerate(np.asarray(ids, dtype=np.int64)):
            gen = self.rng.stream("augment", (int(key_epoch) << 32) | int(ex_id))
            out[row] += self.scale * gen.standard_normal(out[row].shape)
        if self.clip is not None:
            out = np.clip(out, self.clip[0], self.clip[1])
        return out


class PlannedSource:
    """Delivers a dataset according to per-epoch plans.

    By default each epoch draws a fresh uniform shuffle from the "order"
    stream keyed by the epoch number, so epoch plans are reproducible and
    independent of how many draws earlier epochs consumed. A plan_fn
    overrides the shuffle wholesale.
    """

    def __init__(self, dataset, batch_size, rng: Rng, transform=None, plan_fn=None,
                 stream_name="order"):
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng
        self.transform = transform
        self.plan_fn = plan_fn
        self.stream_name = stream_name
        self.epoch = None
        self.plan = None

    def reset(self, epoch):
        self.epoch = epoch
        if self.plan_fn is not None:
            self.plan = self.plan_fn(epoch)
        else:
            gen = self.rng.stream(self.stream_name, epoch)
            self.plan = random_plan(self.dataset.n, self.batch_size, gen, epoch)
        self.plan.validate(self.dataset.n)
        return self

    def fetch(self, ids):
        inputs, targets = self.dataset.take(ids)
        if self.transform is not None:
            inputs = self.transform(inputs, ids, self.epoch)
        return inputs, targets

    def __iter__(self):
        if self.plan is None:
            raise PlanError("reset(epoch) must be called before iterating")
        for batch_ids in self.plan.order:
            ids = np.asarray(batch_ids, dtype=np.int64)
            inputs, targets = self.fetch(ids)
            yield inputs, targets, ids
