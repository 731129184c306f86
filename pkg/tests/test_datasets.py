import numpy as np
import pytest

from orderlab.datasets import (
    Dataset,
    blob_centers,
    generate_blobs,
    generate_digits,
    generate_linreg_data,
    load_idx,
    save_idx,
)
from orderlab.rng import stream_gen
from orderlab.errors import DimensionError, FormatError


def test_linreg_shape_and_range():
    ds = generate_linreg_data(200, stream_gen(0, "data"))
    assert ds.inputs.shape == (200,)
    assert ds.targets.shape == (200,)
    assert ds.kind == "linreg"
    assert np.all(ds.inputs >= 0.0) and np.all(ds.inputs <= 10.0)
    assert np.array_equal(ds.ids, np.arange(200))


def test_linreg_recovers_line():
    ds = generate_linreg_data(4000, stream_gen(1, "data"), slope=2.0, intercept=17.0)
    x = ds.inputs.reshape(-1)
    coef = np.polyfit(x, ds.targets, 1)
    assert abs(coef[0] - 2.0) < 0.05
    assert abs(coef[1] - 17.0) < 0.3


def test_linreg_deterministic():
    a = generate_linreg_data(50, stream_gen(3, "data"))
    b = generate_linreg_data(50, stream_gen(3, "data"))
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)


def test_blob_centers_geometry():
    c = blob_centers(4, separation=4.0)
    assert c.shape == (4, 2)
    r = np.linalg.norm(c, axis=1)
    assert np.allclose(r, 4.0)


def test_blobs_balanced_and_separable():
    ds = generate_blobs(800, 4, stream_gen(2, "data"), separation=4.0, spread=1.0)
    counts = ds.label_counts()
    assert counts.sum() == 800
    assert counts.max() - counts.min() <= 1
    # nearest-center decision is linear; default geometry is > 99% clean
    centers = blob_centers(4, separation=4.0)
    d = np.linalg.norm(ds.inputs[:, None, :] - centers[None, :, :], axis=2)
    assert np.mean(np.argmin(d, axis=1) == ds.targets) > 0.99


def test_blobs_dim_padding():
    ds = generate_blobs(60, 3, stream_gen(4, "data"), dim=5)
    assert ds.inputs.shape == (60, 5)


def test_digits_contents():
    ds = generate_digits(300, stream_gen(5, "data"))
    assert ds.inputs.shape == (300, 28, 28)
    assert ds.classes == 10
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0
    counts = ds.label_counts()
    assert counts.max() - counts.min() <= 1


def test_digits_deterministic_and_glare_free_by_default():
    a = generate_digits(40, stream_gen(6, "data"))
    b = generate_digits(40, stream_gen(6, "data"), glare=0.0)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)


def test_digits_glare_band_rate():
    n = 1000
    ds = generate_digits(n, stream_gen(7, "data"), glare=0.3)
    # a glare band lifts the whole top 5 rows to at least 0.7 before noise,
    # so their mean sits near the band intensity; a natural glyph covers at
    # most 15 of 28 columns and cannot push the five-row mean past 0.5
    lit = np.mean(np.mean(ds.inputs[:, :5, :], axis=(1, 2)) > 0.5)
    assert 0.24 < lit < 0.36
    plain = generate_digits(n, stream_gen(7, "data"))
    lit0 = np.mean(np.mean(plain.inputs[:, :5, :], axis=(1, 2)) > 0.5)
    assert lit0 == 0.0


def test_digits_glare_keeps_labels():
    a = generate_digits(64, stream_gen(8, "data"), glare=0.5)
    b = generate_digits(64, stream_gen(8, "data"))
    assert np.array_equal(a.targets, b.targets)


def test_idx_round_trip(tmp_path):
    ds = generate_digits(32, stream_gen(9, "data"))
    images = tmp_path / "images.idx"
    labels = tmp_path / "labels.idx"
    save_idx(ds, images, labels)
    back = load_idx(images, labels)
    # idx stores uint8 pixels; the round trip must be exact at that scale
    assert np.array_equal(
        np.round(ds.inputs * 255).astype(np.uint8),
        np.round(back.inputs * 255).astype(np.uint8),
    )
    assert np.array_equal(ds.targets, back.targets)
    assert back.kind == "idx"


def test_idx_rejects_bad_magic(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(b"\x00\x00\x12\x34" + b"\x00" * 16)
    lab = tmp_path / "lab.idx"
    lab.write_bytes(b"\x00\x00\x08\x01" + (1).to_bytes(4, "big") + b"\x00")
    with pytest.raises(FormatError):
        load_idx(bad, lab)


def test_idx_rejects_truncation(tmp_path):
    ds = generate_digits(8, stream_gen(10, "data"))
    images = tmp_path / "images.idx"
    labels = tmp_path / "labels.idx"
    save_idx(ds, images, labels)
    images.write_bytes(images.read_bytes()[:-10])
    with pytest.raises(FormatError):
        load_idx(images, labels)


def test_take_subsets_by_position():
    ds = generate_blobs(20, 2, stream_gen(11, "data"))
    inputs, targets = ds.take([3, 3, 7])
    assert inputs.shape[0] == 3
    assert np.array_equal(inputs[0], ds.inputs[3])
    assert np.array_equal(inputs[1], ds.inputs[3])
    assert targets[2] == ds.targets[7]


def test_dataset_validates_lengths():
    with pytest.raises(DimensionError):
        Dataset(
            inputs=np.zeros((3, 2)),
            targets=np.zeros(4),
            ids=np.arange(3),
            classes=2,
            kind="classification",
        )
