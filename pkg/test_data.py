"""
Dataset ingestion: IDX / CIFAR / event-CSV loaders, event binning, synthetic
generators, batching and the dataset cache.
Run with pytest, or directly: python test_data.py
"""

import struct

import numpy as np
import pytest
import torch

from swformer.data.datasets import (
    Dataset,
    InputKind,
    Split,
    augment_batch,
    iterate_batches,
    replicate_static,
    split_train_val,
)
from swformer.data.events import bin_events, edge_column, moving_edge_events, synth_moving_edge
from swformer.data.loaders import (
    CIFAR_RECORD,
    load_cifar_binary,
    load_dataset,
    load_dataset_cache,
    load_event_csv,
    load_idx,
    parse_idx,
    save_dataset_cache,
)
from swformer.data.synthetic import edge_class, synthetic_patterns
from swformer.errors import ConfigurationError, FormatError, IngestionError, LabelRangeError
from swformer.models import DataConfig
from swformer.testing import main_for, scratch_dir


def idx_bytes(shape, values=None) -> bytes:
    header = bytes([0, 0, 0x08, len(shape)]) + b"".join(struct.pack(">I", s) for s in shape)
    count = int(np.prod(shape))
    body = bytes(values) if values is not None else bytes(i % 256 for i in range(count))
    return header + body


# ============================================================
# IDX
# ============================================================


def test_idx_pair_loads_scaled_images():
    tmp = scratch_dir()
    (tmp / "images").write_bytes(idx_bytes((3, 4, 4)))
    (tmp / "labels").write_bytes(idx_bytes((3,), [7, 0, 9]))
    split = load_idx(tmp / "images", tmp / "labels")
    assert split.inputs.shape == (3, 1, 4, 4)
    assert split.labels.tolist() == [7, 0, 9]
    assert float(split.inputs[0, 0, 0, 1]) == pytest.approx(1 / 255)
    assert float(split.inputs.max()) <= 1.0


def test_idx_empty_payload():
    tmp = scratch_dir()
    (tmp / "images").write_bytes(idx_bytes((0, 28, 28)))
    (tmp / "labels").write_bytes(idx_bytes((0,)))
    assert len(load_idx(tmp / "images", tmp / "labels")) == 0


def test_idx_corruption_reports_offsets():
    good = idx_bytes((2, 2, 2))
    with pytest.raises(FormatError) as info:
        parse_idx(b"\x01" + good[1:])
    assert info.value.offset == 0
    with pytest.raises(FormatError) as info:
        parse_idx(good[:-3])
    assert info.value.offset == len(good) - 3


def test_idx_label_out_of_range():
    tmp = scratch_dir()
    (tmp / "images").write_bytes(idx_bytes((2, 2, 2)))
    (tmp / "labels").write_bytes(idx_bytes((2,), [1, 12]))
    with pytest.raises(LabelRangeError):
        load_idx(tmp / "images", tmp / "labels")


# ============================================================
# CIFAR
# ============================================================


def test_cifar_single_record():
    tmp = scratch_dir()
    record = bytes([3]) + bytes(range(256)) * 12
    (tmp / "batch.bin").write_bytes(record)
    split = load_cifar_binary(tmp / "batch.bin")
    assert len(split) == 1
    assert split.inputs.shape == (1, 3, 32, 32)
    assert split.labels.tolist() == [3]


def test_cifar_size_and_label_errors():
    tmp = scratch_dir()
    (tmp / "short.bin").write_bytes(bytes(CIFAR_RECORD - 1))
    with pytest.raises(FormatError):
        load_cifar_binary(tmp / "short.bin")
    (tmp / "bad.bin").write_bytes(bytes([0]) + bytes(CIFAR_RECORD - 1) + bytes([255]) + bytes(CIFAR_RECORD - 1))
    with pytest.raises(LabelRangeError) as info:
        load_cifar_binary(tmp / "bad.bin")
    assert info.value.offset == CIFAR_RECORD


# ============================================================
# EVENTS
# ============================================================


def test_bin_empty_stream():
    clip = bin_events([], 4, 8, 8)
    assert clip.frames.shape == (4, 2, 8, 8)
    assert clip.frames.nonzero_count() == 0


def test_bin_single_event():
    clip = bin_events([(2500, 1, 2, -1)], 4, 8, 8, window_us=1000, t_start=0)
    assert clip.frames.nonzero_count() == 1
    assert int(clip.frames.values[2, 1, 2, 1]) == 1


def test_bin_uniform_stream_counts():
    side = 32
    events = [(t, t % side, t // side, 1) for t in range(1000)]
    frames = bin_events(events, 4, side, side).frames.to_dense()
    counts = frames.sum(dim=(1, 2, 3)).tolist()
    assert counts == [250.0, 250.0, 250.0, 250.0]


def test_bin_ignores_order_of_simultaneous_events():
    rng = np.random.default_rng(0)
    n = 200
    t = np.repeat(np.arange(0, 4000, 400), n // 10)
    x, y = rng.integers(0, 8, n), rng.integers(0, 8, n)
    p = rng.choice([-1, 1], n)
    events = np.stack([t, x, y, p], axis=1)
    shuffled = np.concatenate([rng.permutation(events[t == ts]) for ts in np.unique(t)])
    a = bin_events(events, 4, 8, 8, window_us=1000, t_start=0).frames.values
    b = bin_events(shuffled, 4, 8, 8, window_us=1000, t_start=0).frames.values
    assert not np.array_equal(events, shuffled)
    assert torch.equal(a, b)


def test_bin_rejects_bad_events():
    with pytest.raises(IngestionError) as info:
        bin_events([(0, 1, 1, 1), (5, 9, 0, 1)], 2, 8, 8)
    assert "event 1" in str(info.value)
    with pytest.raises(IngestionError):
        bin_events([(0, 1, 1, 0)], 2, 8, 8)
    with pytest.raises(IngestionError):
        bin_events([(10, 1, 1, 1), (5, 1, 1, 1)], 2, 8, 8)


def test_static_edge_fires_only_at_start():
    clip = synth_moving_edge(6, 8, 8, velocity=0.0)
    dense = clip.to_dense()
    assert float(dense[0].sum()) > 0
    assert float(dense[1:].sum()) == 0.0
    assert moving_edge_events(6, 8, 8, 0.0)[:, 0].max() == 0


def test_edge_moves_one_column_per_frame():
    clip = synth_moving_edge(5, 6, 16, velocity=1.0, start=2)
    on = clip.to_dense()[:, 0]
    for step in range(5):
        col = edge_column(step, 16, 1.0, start=2)
        assert col == 3 + step
        assert bool((on[step, :, col] == 1).all())
        assert float(on[step].sum()) == 6.0


def test_left_edge_is_mirrored():
    right = synth_moving_edge(4, 4, 8, 1.0, direction="right").to_dense()
    left = synth_moving_edge(4, 4, 8, 1.0, direction="left").to_dense()
    assert torch.equal(left, right.flip(-1))


def test_event_csv_loader():
    tmp = scratch_dir()
    (tmp / "ev.csv").write_text("t_us,x,y,polarity\n0,1,2,1\n10,3,4,-1\n", encoding="utf-8")
    events = load_event_csv(tmp / "ev.csv")
    assert events.tolist() == [[0, 1, 2, 1], [10, 3, 4, -1]]
    (tmp / "bad.csv").write_text("time,x,y,p\n", encoding="utf-8")
    with pytest.raises(IngestionError):
        load_event_csv(tmp / "bad.csv")


# ============================================================
# DATASETS & BATCHING
# ============================================================


def test_replicate_static():
    img = torch.rand(3, 32, 32)
    assert torch.equal(replicate_static(img, 1)[0], img)
    assert replicate_static(img, 4).shape == (4, 3, 32, 32)
    with pytest.raises(ConfigurationError):
        replicate_static(img, 0)


def test_synthetic_patterns_are_balanced():
    train, test = synthetic_patterns(4, 8, 16, seed=0)
    assert len(train) == 32 and len(test) == 8
    assert torch.bincount(train.labels).tolist() == [8, 8, 8, 8]
    assert train.labels[:4].tolist() == [0, 1, 2, 3]
    assert float(train.inputs.min()) >= 0.0 and float(train.inputs.max()) <= 1.0


def test_edge_classes():
    assert edge_class(0) == (1.0, "right")
    assert edge_class(3) == (2.0, "left")


def test_split_train_val_is_disjoint():
    split = Split(torch.arange(20).float().reshape(20, 1, 1, 1), torch.zeros(20, dtype=torch.int64))
    train, val = split_train_val(split, 0.25, seed=0)
    assert len(train) == 15 and len(val) == 5
    seen = set(train.inputs.reshape(-1).tolist()) | set(val.inputs.reshape(-1).tolist())
    assert seen == set(range(20))


def test_event_batches_are_time_major():
    dataset = load_dataset(
        DataConfig(kind="synthetic_edges", num_classes=2, samples_per_class=3, image_size=8, val_fraction=0.0),
        timesteps=4,
    )
    assert dataset.kind == InputKind.EVENT_FRAMES
    assert dataset.input_shape == (4, 2, 8, 8)
    x, y = next(iterate_batches(dataset.train, 5, dataset.kind))
    assert x.shape == (4, 5, 2, 8, 8)
    assert y.shape == (5,)


def test_augment_batch_is_seeded():
    x = torch.rand(4, 1, 8, 8, generator=torch.Generator().manual_seed(0))
    a = augment_batch(x, torch.Generator().manual_seed(1))
    b = augment_batch(x, torch.Generator().manual_seed(1))
    assert a.shape == x.shape
    assert torch.equal(a, b)


def test_dataset_label_range():
    split = Split(torch.zeros(2, 1, 4, 4), torch.tensor([0, 5]))
    with pytest.raises(LabelRangeError):
        Dataset("bad", 3, InputKind.STATIC_IMAGE, split, split.take(0), split.take(0))


def test_load_dataset_pads_and_splits():
    dataset = load_dataset(
        DataConfig(kind="synthetic_patterns", num_classes=2, samples_per_class=10, image_size=12, val_fraction=0.2),
        timesteps=2,
    )
    assert dataset.image_size == (16, 16)
    assert len(dataset.train) == 16 and len(dataset.val) == 4


def test_dataset_cache_round_trip():
    train, test = synthetic_patterns(2, 4, 8, seed=1)
    dataset = Dataset("cached", 2, InputKind.STATIC_IMAGE, train, train.take(0), test)
    tmp = scratch_dir()
    save_dataset_cache(dataset, tmp)
    loaded = load_dataset_cache(tmp)
    assert loaded.name == "cached" and loaded.kind == InputKind.STATIC_IMAGE
    assert torch.equal(loaded.train.inputs, train.inputs)
    assert torch.equal(loaded.test.labels, test.labels)
    assert len(loaded.val) == 0


if __name__ == "__main__":
    main_for("DATA TEST", dict(globals()))
