import numpy as np
import pytest
from hypothesis import given, strategies as st

from orderlab.batching import BatchPlan, GaussianJitter, PlannedSource, chunk, random_plan
from orderlab.datasets import generate_blobs
from orderlab.rng import Rng, stream_gen
from orderlab.errors import PlanError


def test_chunk_keeps_short_tail():
    assert chunk(list(range(10)), 4) == ((0, 1, 2, 3), (4, 5, 6, 7), (8, 9))
    assert chunk([5], 3) == ((5,),)


def test_plan_validate_accepts_partition():
    plan = BatchPlan(epoch=1, batch_size=2, order=[(1, 0), (3, 2)])
    plan.validate(4)
    assert plan.n_batches == 2
    assert plan.flat_ids() == [1, 0, 3, 2]


def test_plan_validate_rejects_bad_plans():
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=2, order=[(0, 0), (1, 2)]).validate(3)
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=2, order=[(0, 1)]).validate(3)
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=2, order=[(0, 4)]).validate(3)
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=0, order=[(0,)]).validate(1)
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=2, order=[]).validate(0)
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=2, order=[(0,), ()]).validate(1)


def test_plan_multiset_allows_repeats_but_not_strays():
    plan = BatchPlan(epoch=1, batch_size=2, order=[(0, 0), (1, 1)], multiset_ok=True)
    plan.validate(2)
    with pytest.raises(PlanError):
        BatchPlan(epoch=1, batch_size=2, order=[(0, 7)], multiset_ok=True).validate(2)


@given(st.integers(1, 200), st.integers(1, 13), st.integers(0, 50))
def test_random_plan_is_partition(n, batch_size, epoch):
    plan = random_plan(n, batch_size, stream_gen(9, "order", epoch), epoch)
    plan.validate(n)
    assert sorted(plan.flat_ids()) == list(range(n))


def test_random_plan_deterministic():
    a = random_plan(30, 4, stream_gen(2, "order", 3), 3)
    b = random_plan(30, 4, stream_gen(2, "order", 3), 3)
    assert a.order == b.order
    c = random_plan(30, 4, stream_gen(2, "order", 4), 4)
    assert c.order != a.order


def test_jitter_is_keyed_by_id_not_position():
    j = GaussianJitter(Rng(3), scale=0.1)
    x = np.zeros((2, 3))
    fwd = j(x, [7, 9], epoch=1)
    rev = j(x, [9, 7], epoch=1)
    assert np.array_equal(fwd[0], rev[1])
    assert np.array_equal(fwd[1], rev[0])


def test_jitter_epoch_pinning():
    pinned = GaussianJitter(Rng(3), scale=0.1, resample_each_epoch=False)
    x = np.zeros((1, 4))
    assert np.array_equal(pinned(x, [5], epoch=1), pinned(x, [5], epoch=9))
    fresh = GaussianJitter(Rng(3), scale=0.1, resample_each_epoch=True)
    assert not np.array_equal(fresh(x, [5], epoch=1), fresh(x, [5], epoch=9))


def test_jitter_clip():
    j = GaussianJitter(Rng(0), scale=10.0, clip=(0.0, 1.0))
    out = j(np.full((1, 100), 0.5), [1], epoch=1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_planned_source_requires_reset():
    ds = generate_blobs(12, 2, stream_gen(0, "data"))
    src = PlannedSource(ds, 4, Rng(1))
    with pytest.raises(PlanError):
        next(iter(src))


def test_planned_source_replays_exactly():
    ds = generate_blobs(12, 2, stream_gen(0, "data"))

    def epoch_ids(seed, epoch):
        src = PlannedSource(ds, 4, Rng(seed))
        src.reset(epoch)
        return [tuple(ids) for _, _, ids in src]

    assert epoch_ids(1, 1) == epoch_ids(1, 1)
    assert epoch_ids(1, 1) != epoch_ids(1, 2)
    assert epoch_ids(1, 2) == epoch_ids(1, 2)


def test_planned_source_yields_matching_rows():
    ds = generate_blobs(10, 2, stream_gen(0, "data"))
    src = PlannedSource(ds, 3, Rng(2))
    src.reset(1)
    seen = []
    for inputs, targets, ids in src:
        assert np.array_equal(inputs, ds.inputs[list(ids)])
        assert np.array_equal(targets, ds.targets[list(ids)])
        seen.extend(ids)
    assert sorted(seen) == list(range(10))


def test_planned_source_plan_fn_override():
    ds = generate_blobs(6, 2, stream_gen(0, "data"))
    fixed = BatchPlan(epoch=1, batch_size=6, order=[(5, 4, 3, 2, 1, 0)])

    src = PlannedSource(ds, 6, Rng(0), plan_fn=lambda epoch: fixed)
    src.reset(1)
    (_, _, ids), = list(src)
    assert np.array_equal(ids, [5, 4, 3, 2, 1, 0])
