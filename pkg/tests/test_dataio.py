import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcinject.dataio import (
    FormatError,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    dataset_from_bytes,
    dataset_to_bytes,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    synth_dataset,
)
from dcinject.cli import synth_pair
from dcinject.config import RunConfig
from dcinject.nn import init_params, loss_and_grad, predict, sgd_step
from dcinject.tensorimg import LabeledDataset


def test_single_class_synth():
    ds = synth_dataset(5, 1, 4, 4, 1, seed=0)
    assert np.all(ds.labels == 0) and len(ds) == 5


def test_synth_deterministic():
    a = synth_dataset(10, 3, 8, 8, 3, seed=4)
    b = synth_dataset(10, 3, 8, 8, 3, seed=4)
    assert dataset_to_bytes(a) == dataset_to_bytes(b)
    assert a != synth_dataset(10, 3, 8, 8, 3, seed=5)


def test_synth_values_survive_float32():
    ds = synth_dataset(10, 2, 5, 5, 1, seed=1)
    np.testing.assert_array_equal(ds.images, ds.images.astype(np.float32))


def test_synth_rejects_zero():
    with pytest.raises(ValueError):
        synth_dataset(10, 0, 4, 4, 1, seed=0)


def central_accuracy(train, test):
    params = init_params(256, 64, 4, 0)
    rng = np.random.default_rng(0)
    for _ in range(500):
        pick = rng.choice(len(train), 32, replace=False)
        params = sgd_step(params, loss_and_grad(params, train.images[pick], train.labels[pick])[1], 0.1)
    return np.mean(predict(params, test.images) == test.labels)


def test_central_training_reaches_ninety_percent():
    train = synth_dataset(250, 4, 16, 16, 1, seed=0)
    test = synth_dataset(100, 4, 16, 16, 1, seed=1, pattern_seed=0)
    assert central_accuracy(train, test) >= 0.9


def test_central_training_on_experiment_defaults():
    assert central_accuracy(*synth_pair(RunConfig())) >= 0.9


def test_save_load_roundtrip(tmp_path):
    ds = synth_dataset(7, 3, 6, 5, 3, seed=2)
    save_dataset(ds, tmp_path / "d.bin")
    assert load_dataset(tmp_path / "d.bin") == ds


def test_header_layout():
    ds = LabeledDataset(np.full((2, 1, 1, 3), 0.5), np.array([1, 0]), 2)
    raw = dataset_to_bytes(ds)
    assert raw[:8] == b"DCINJDS1"
    assert struct.unpack_from("<5I", raw, 8) == (2, 1, 3, 1, 2)
    assert struct.unpack_from("<2I", raw, 28) == (1, 0)
    assert struct.unpack_from("<6f", raw, 36) == (0.5,) * 6
    assert len(raw) == 28 + 8 + 24


def test_truncated():
    raw = dataset_to_bytes(synth_dataset(3, 2, 4, 4, 1, seed=0))
    with pytest.raises(FormatError, match="size mismatch"):
        dataset_from_bytes(raw[:-1])
    with pytest.raises(FormatError):
        dataset_from_bytes(raw[:10])


def test_bad_magic():
    raw = bytearray(dataset_to_bytes(synth_dataset(3, 2, 4, 4, 1, seed=0)))
    raw[0] ^= 0xFF
    with pytest.raises(FormatError) as info:
        dataset_from_bytes(bytes(raw))
    assert info.value.offset == 0


def test_label_out_of_range():
    raw = bytearray(dataset_to_bytes(synth_dataset(3, 2, 4, 4, 1, seed=0)))
    struct.pack_into("<I", raw, 28 + 4, 2)
    with pytest.raises(FormatError, match="label") as info:
        dataset_from_bytes(bytes(raw))
    assert info.value.offset == 32


def test_pixel_out_of_range():
    ds = synth_dataset(1, 2, 2, 2, 1, seed=0)
    raw = bytearray(dataset_to_bytes(ds))
    off = 28 + 4 * 2 + 4 * 3
    struct.pack_into("<f", raw, off, 1.5)
    with pytest.raises(FormatError, match="pixel") as info:
        dataset_from_bytes(bytes(raw))
    assert info.value.offset == off
    struct.pack_into("<f", raw, off, float("nan"))
    with pytest.raises(FormatError):
        dataset_from_bytes(bytes(raw))


shapes = st.tuples(st.integers(0, 6), st.integers(1, 5), st.integers(1, 5), st.sampled_from([1, 3]), st.integers(1, 5))


@settings(max_examples=60, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_roundtrip_property(shape, seed):
    n, h, w, c, k = shape
    rng = np.random.default_rng(seed)
    images = rng.uniform(size=(n, c, h, w)).astype(np.float32).astype(np.float64)
    ds = LabeledDataset(images, rng.integers(0, k, n), k)
    back = dataset_from_bytes(dataset_to_bytes(ds))
    assert back == ds
    assert dataset_to_bytes(back) == dataset_to_bytes(ds)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_arbitrary_bytes_never_crash(raw):
    try:
        dataset_from_bytes(raw)
    except FormatError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=120))
def test_arbitrary_bytes_after_magic(tail):
    try:
        dataset_from_bytes(b"DCINJDS1" + tail)
    except FormatError:
        pass


def test_checkpoint_roundtrip(tmp_path):
    p = init_params(12, 5, 3, 7)
    save_checkpoint(p, tmp_path / "m.ckpt")
    q = load_checkpoint(tmp_path / "m.ckpt")
    assert q == p
    assert checkpoint_to_bytes(q) == checkpoint_to_bytes(p)


def test_checkpoint_corruption():
    raw = checkpoint_to_bytes(init_params(4, 3, 2, 0))
    for bad in (raw[:-1], raw + b"\0", b"XXXXXXXX" + raw[8:], raw[:5]):
        with pytest.raises(FormatError):
            checkpoint_from_bytes(bad)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200))
def test_checkpoint_fuzz(raw):
    try:
        checkpoint_from_bytes(b"DCINJCK1" + raw)
    except FormatError:
        pass
