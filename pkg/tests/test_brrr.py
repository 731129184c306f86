import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from orderlab.batching import PlannedSource
from orderlab.brrr import (
    MODES,
    ORACLES,
    POLICIES,
    AttackSpec,
    BrrrController,
    apply_policy,
    plan_reorder,
    plan_replace_single_class,
    plan_reshuffle,
    rank_items,
)
from orderlab.datasets import generate_blobs
from orderlab.models import ModelPair, build_model
from orderlab.optim import make_optimizer
from orderlab.rng import Rng, stream_gen
from orderlab.training import Trainer, batched_losses
from orderlab.errors import NumericError, PlanError


def test_rank_items_sorts_by_loss_then_id():
    assert rank_items([0, 1], [2.0, 1.0]) == [1, 0]
    assert rank_items([3, 1, 2], [5.0, 5.0, 5.0]) == [1, 2, 3]


def test_rank_items_against_reference_sort():
    # reference: sort (loss, id) pairs, which breaks loss ties by id
    gen = stream_gen(0, "rank")
    ids = gen.permutation(1000)
    losses = gen.normal(size=1000)
    want = [int(i) for _, i in sorted(zip(losses, ids))]
    assert rank_items(ids, losses) == want


def test_rank_items_guards():
    with pytest.raises(NumericError):
        rank_items([0, 1], [1.0, np.nan])
    with pytest.raises(PlanError):
        rank_items([0, 1, 2], [1.0, 2.0])


def test_apply_policy_pinned_orders():
    ranked = [1, 2, 3, 4]
    assert apply_policy(ranked, "low_high") == [1, 2, 3, 4]
    assert apply_policy(ranked, "high_low") == [4, 3, 2, 1]
    assert apply_policy(ranked, "oscillation_inward") == [4, 1, 3, 2]
    assert apply_policy(ranked, "oscillation_outward") == [3, 2, 4, 1]


def test_apply_policy_odd_lengths():
    ranked = [1, 2, 3, 4, 5]
    assert apply_policy(ranked, "oscillation_inward") == [5, 1, 4, 2, 3]
    assert apply_policy(ranked, "oscillation_outward") == [3, 2, 4, 1, 5]


def test_apply_policy_band_units():
    # unit-sized slices move together, preserving within-band order
    assert apply_policy([1, 2, 3, 4], "high_low", unit=2) == [3, 4, 1, 2]
    assert apply_policy([1, 2, 3, 4, 5, 6], "oscillation_inward", unit=2) == [
        5, 6, 1, 2, 3, 4,
    ]


def test_apply_policy_guards():
    with pytest.raises(PlanError):
        apply_policy([], "high_low")
    with pytest.raises(PlanError):
        apply_policy([1], "zigzag")
    with pytest.raises(PlanError):
        apply_policy([1], "high_low", unit=0)


@settings(max_examples=400, deadline=None)
@given(
    st.integers(1, 400),
    st.sampled_from(POLICIES),
    st.integers(1, 7),
)
def test_apply_policy_is_permutation(n, policy, unit):
    out = apply_policy(list(range(n)), policy, unit=unit)
    assert sorted(out) == list(range(n))


@given(st.integers(1, 300))
def test_reversal_duality(n):
    ranked = list(range(n))
    assert apply_policy(ranked, "high_low") == apply_policy(ranked, "low_high")[::-1]


@given(st.integers(2, 300))
def test_oscillation_first_elements(n):
    ranked = list(range(n))
    assert apply_policy(ranked, "oscillation_inward")[0] == ranked[-1]
    assert apply_policy(ranked, "oscillation_outward")[0] == ranked[n // 2]


def test_plan_reshuffle_pinned():
    # ascending losses on ids 0..3: the delivered batches are the top band
    # first, each band in ranked order
    plan = plan_reshuffle(np.arange(4), np.array([0.1, 0.2, 0.3, 0.4]), 2, "high_low", epoch=2)
    assert plan.order == ((2, 3), (0, 1))
    assert plan.epoch == 2
    plan.validate(4)


def test_plan_reshuffle_single_batch_is_policy_permutation():
    losses = np.array([0.4, 0.1, 0.3, 0.2])
    plan = plan_reshuffle(np.arange(4), losses, 4, "oscillation_inward", epoch=2)
    ranked = rank_items(np.arange(4), losses)
    assert plan.order == (tuple(apply_policy(ranked, "oscillation_inward", unit=4)),)


@given(st.integers(1, 120), st.integers(1, 9), st.sampled_from(POLICIES))
def test_plan_reshuffle_is_partition(n, batch_size, policy):
    gen = stream_gen(1, "loss", n)
    plan = plan_reshuffle(np.arange(n), gen.normal(size=n), batch_size, policy, epoch=2)
    plan.validate(n)


def test_plan_reorder_pinned():
    batches = [(0, 1), (2, 3), (4, 5)]
    plan = plan_reorder(batches, np.array([0.5, 0.1, 0.9]), "low_high", epoch=2)
    assert plan.order == ((2, 3), (0, 1), (4, 5))
    plan.validate(6)


def test_plan_reorder_keeps_contents():
    gen = stream_gen(2, "loss")
    batches = [tuple(range(i * 3, i * 3 + 3)) for i in range(5)]
    losses = gen.normal(size=5)
    plan = plan_reorder(batches, losses, "oscillation_outward", epoch=3)
    assert sorted(plan.order) == sorted(batches)


def test_plan_replace_single_class_properties():
    gen = stream_gen(3, "replace")
    labels = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    plan = plan_replace_single_class(labels, 2, 3, gen, epoch=2)
    assert plan.multiset_ok
    plan.validate(9)
    for i, batch in enumerate(plan.order):
        batch_labels = labels[list(batch)]
        assert np.all(batch_labels == i % 3)


def test_plan_replace_repeats_when_class_is_small():
    gen = stream_gen(4, "replace")
    labels = np.array([0] + [1] * 7)
    plan = plan_replace_single_class(labels, 4, 2, gen, epoch=2)
    class0 = plan.order[0]
    assert set(class0) == {0}
    assert len(class0) == 4


def test_plan_replace_needs_every_class():
    gen = stream_gen(5, "replace")
    labels = np.array([0, 0, 2, 2])
    with pytest.raises(PlanError):
        plan_replace_single_class(labels, 2, 3, gen, epoch=2)


def test_attack_spec_validation():
    spec = AttackSpec(mode="reorder")
    assert spec.policy == "high_low"
    assert not spec.active(1)
    assert spec.active(2)
    only_ten = AttackSpec(mode="replace", epochs_active=[10])
    assert only_ten.active(10)
    assert not only_ten.active(9)
    assert not only_ten.active(1)
    with pytest.raises(PlanError):
        AttackSpec(mode="nope")
    with pytest.raises(PlanError):
        AttackSpec(mode="reorder", policy="zigzag")
    with pytest.raises(PlanError):
        AttackSpec(mode="reorder", oracle="psychic")
    assert set(MODES) == {"reorder", "reshuffle", "replace"}
    assert set(ORACLES) == {"surrogate", "source"}
    assert set(POLICIES) == {
        "low_high", "high_low", "oscillation_inward", "oscillation_outward",
    }


def _blob_rig(seed=0, n=60, attack=None):
    rng = Rng(seed)
    ds = generate_blobs(n, 3, rng.stream("data"))
    source = build_model({"kind": "mlp", "hidden": 8}, in_shape=(2,), classes=3)
    source.init_params(rng.stream("init"))
    surrogate = build_model({"kind": "mlp", "hidden": 3}, in_shape=(2,), classes=3)
    surrogate.init_params(rng.stream("init", 1))
    pair = ModelPair(source=source, surrogate=surrogate)
    surrogate_opt = make_optimizer({"kind": "adam", "lr": 0.01},
                                   surrogate.layout_id, surrogate.n_params)
    controller = None
    if attack is not None:
        controller = BrrrController(
            dataset=ds, batch_size=5, rng=rng, spec=attack,
            surrogate=surrogate, surrogate_opt=surrogate_opt,
            source_model=source,
        )
    return rng, ds, source, surrogate, pair, controller


def _epoch_stream(source_like, epoch):
    source_like.reset(epoch)
    return [np.asarray(ids).tolist() for _, _, ids in source_like]


def test_epoch_one_is_benign_passthrough():
    spec = AttackSpec(mode="reshuffle", policy="high_low", oracle="surrogate")
    rng, ds, source, surrogate, pair, controller = _blob_rig(attack=spec)
    benign = PlannedSource(ds, 5, Rng(0))
    assert _epoch_stream(controller, 1) == _epoch_stream(benign, 1)


def test_surrogate_cotrains_on_delivered_stream():
    spec = AttackSpec(mode="reshuffle", policy="high_low", oracle="surrogate")
    _, _, _, surrogate, _, controller = _blob_rig(attack=spec)
    before = surrogate.params.copy()
    _epoch_stream(controller, 1)
    assert not np.array_equal(before, surrogate.params)


def test_attacked_epoch_is_still_a_partition():
    for mode in ("reshuffle", "reorder"):
        spec = AttackSpec(mode=mode, policy="oscillation_inward", oracle="surrogate")
        _, ds, _, _, _, controller = _blob_rig(attack=spec)
        _epoch_stream(controller, 1)
        delivered = _epoch_stream(controller, 2)
        flat = [i for batch in delivered for i in batch]
        assert sorted(flat) == list(range(ds.n))


def test_replace_epoch_delivers_single_class_batches():
    spec = AttackSpec(mode="replace", epochs_active=[2])
    _, ds, _, _, _, controller = _blob_rig(attack=spec)
    _epoch_stream(controller, 1)
    delivered = _epoch_stream(controller, 2)
    for batch in delivered:
        assert len(set(ds.targets[batch])) == 1
    # inactive epoch 3 falls back to the benign stream
    benign = PlannedSource(ds, 5, Rng(0))
    assert _epoch_stream(controller, 3) == _epoch_stream(benign, 3)


def test_inactive_spec_equals_benign_everywhere():
    spec = AttackSpec(mode="reshuffle", epochs_active=[])
    _, ds, _, _, _, controller = _blob_rig(attack=spec)
    benign = PlannedSource(ds, 5, Rng(0))
    for epoch in (1, 2, 3):
        assert _epoch_stream(controller, epoch) == _epoch_stream(benign, epoch)


def test_oracle_model_is_required():
    rng, ds, source, surrogate, pair, _ = _blob_rig()
    with pytest.raises(PlanError):
        BrrrController(dataset=ds, batch_size=5, rng=rng,
                       spec=AttackSpec(mode="reshuffle", oracle="source"),
                       surrogate=surrogate, source_model=None)
    with pytest.raises(PlanError):
        BrrrController(dataset=ds, batch_size=5, rng=rng,
                       spec=AttackSpec(mode="reshuffle", oracle="surrogate"))


def test_surrogate_tracks_source_ranking():
    # after co-training, blackbox and whitebox loss rankings agree in rank
    spec = AttackSpec(mode="reshuffle", policy="high_low", oracle="surrogate")
    rng, ds, source, surrogate, pair, controller = _blob_rig(n=120, attack=spec)
    opt = make_optimizer({"kind": "sgd", "lr": 0.1}, source.layout_id, source.n_params)
    trainer = Trainer(model=source, opt=opt)
    for epoch in (1, 2):
        controller.reset(epoch)
        for inputs, targets, ids in controller:
            trainer.step(inputs, targets)
    source_losses = batched_losses(source, ds.inputs, ds.targets)
    surrogate_losses = batched_losses(surrogate, ds.inputs, ds.targets)
    rho, pval = stats.spearmanr(source_losses, surrogate_losses)
    assert rho > 0
    assert pval < 0.01
