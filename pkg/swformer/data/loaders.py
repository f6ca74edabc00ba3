"""
File loaders: IDX (MNIST-style), CIFAR-10 binary batches, event CSV files and
the container-backed dataset cache. `load_dataset` assembles a Dataset from
a DataConfig.
"""

from __future__ import annotations

import gzip
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch

from swformer.config import settings
from swformer.core.container import load_tensor, save_tensor
from swformer.core.wavelet import pad_to_power_of_two
from swformer.data.datasets import Dataset, InputKind, Split, split_train_val
from swformer.data.events import bin_events
from swformer.data.synthetic import synthetic_edges, synthetic_patterns
from swformer.errors import ConfigurationError, FormatError, IngestionError, LabelRangeError
from swformer.models import DataConfig

logger = logging.getLogger(__name__)

IDX_UBYTE = 0x08
CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_CLASSES = 10
EVENT_CSV_HEADER = "t_us,x,y,polarity"


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


# ============================================================
# IDX
# ============================================================


def parse_idx(payload: bytes) -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array shaped by its header."""
    if len(payload) < 4:
        raise FormatError("truncated IDX magic", offset=0)
    if payload[0] != 0 or payload[1] != 0:
        raise FormatError(f"bad IDX magic {payload[:4].hex()}", offset=0)
    if payload[2] != IDX_UBYTE:
        raise FormatError(f"unsupported IDX element type 0x{payload[2]:02x}", offset=2)
    ndim = payload[3]
    if ndim < 1:
        raise FormatError("IDX header declares zero dimensions", offset=3)
    header_end = 4 + 4 * ndim
    if len(payload) < header_end:
        raise FormatError("truncated IDX dimension header", offset=len(payload))
    shape = tuple(int.from_bytes(payload[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim))
    count = int(np.prod(shape))
    available = len(payload) - header_end
    if available < count:
        raise FormatError(
            f"IDX payload holds {available} bytes, header promises {count}",
            offset=len(payload),
        )
    if available > count:
        raise FormatError(f"{available - count} trailing bytes after IDX payload", offset=header_end + count)
    if count == 0:
        return np.zeros(shape, dtype=np.uint8)
    return np.frombuffer(payload, dtype=np.uint8, count=count, offset=header_end).reshape(shape)


def load_idx(images_path: Path, labels_path: Path, num_classes: int = 10) -> Split:
    """Image/label IDX pair -> Split with images [n, 1, H, W] in [0, 1]."""
    images = parse_idx(_read_bytes(images_path))
    labels = parse_idx(_read_bytes(labels_path))
    if images.ndim != 3:
        raise FormatError(f"{images_path}: expected a 3-D image file, header has {images.ndim} dims", offset=3)
    if labels.ndim != 1:
        raise FormatError(f"{labels_path}: expected a 1-D label file, header has {labels.ndim} dims", offset=3)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", offset=4)
    if labels.size and int(labels.max()) >= num_classes:
        i = int(np.argmax(labels >= num_classes))
        raise LabelRangeError(f"label {int(labels[i])} of item {i} is outside [0, {num_classes})", offset=8 + i)

    x = torch.from_numpy(images.astype(np.float32) / 255.0).unsqueeze(1)
    y = torch.from_numpy(labels.astype(np.int64))
    logger.info("Loaded %d IDX items of %s from %s", len(y), tuple(images.shape[1:]), images_path)
    return Split(x, y)


# ============================================================
# CIFAR-10 BINARY
# ============================================================


def parse_cifar_binary(payload: bytes) -> Tuple[np.ndarray, np.ndarray]:
    size = len(payload)
    if size % CIFAR_RECORD:
        raise FormatError(
            f"CIFAR payload of {size} bytes is not a multiple of {CIFAR_RECORD}",
            offset=size - size % CIFAR_RECORD,
        )
    records = np.frombuffer(payload, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    bad = np.flatnonzero(labels >= CIFAR_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise LabelRangeError(f"record {i} has label {int(labels[i])}", offset=i * CIFAR_RECORD)
    return records[:, 1:].reshape(-1, 3, 32, 32), labels


def load_cifar_binary(path: Path) -> Split:
    """One CIFAR-10 batch file -> Split with images [n, 3, 32, 32] in [0, 1]."""
    images, labels = parse_cifar_binary(_read_bytes(path))
    x = torch.from_numpy(images.astype(np.float32) / 255.0)
    y = torch.from_numpy(labels.astype(np.int64))
    logger.info("Loaded %d CIFAR records from %s", len(y), path)
    return Split(x, y)


def load_cifar_files(paths: List[str]) -> Split:
    splits = [load_cifar_binary(settings.get_data_path(p)) for p in paths]
    return Split(torch.cat([s.inputs for s in splits]), torch.cat([s.labels for s in splits]))


# ============================================================
# EVENT CSV
# ============================================================


def load_event_csv(path: Path) -> np.ndarray:
    """Read `t_us,x,y,polarity` rows (header required) into an int64 array [n, 4]."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Event file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().replace(" ", "")
        if header != EVENT_CSV_HEADER:
            raise IngestionError(f"{path}: expected header {EVENT_CSV_HEADER!r}, got {header!r}")
        body = f.read()
    if not body.strip():
        return np.zeros((0, 4), dtype=np.int64)
    try:
        events = np.loadtxt(body.splitlines(), delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as e:
        raise IngestionError(f"{path}: unreadable event row: {e}") from e
    if events.shape[1] != 4:
        raise IngestionError(f"{path}: expected 4 columns, got {events.shape[1]}")
    return events


def load_event_clips(
    paths: List[str], labels: List[int], timesteps: int, sensor_size: Tuple[int, int],
    window_us: Optional[int] = None,
) -> Split:
    h, w = sensor_size
    frames = []
    for p in paths:
        clip = bin_events(load_event_csv(settings.get_data_path(p)), timesteps, h, w, window_us=window_us)
        frames.append(clip.to_dense())
    if not frames:
        return Split(torch.zeros(0, timesteps, 2, h, w), torch.zeros(0, dtype=torch.int64))
    return Split(torch.stack(frames), torch.tensor(labels, dtype=torch.int64))


# ============================================================
# DATASET CACHE
# ============================================================


def save_dataset_cache(dataset: Dataset, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split_name in ("train", "val", "test"):
        split: Split = getattr(dataset, split_name)
        save_tensor(directory / f"{split_name}_inputs.swft", split.inputs)
        save_tensor(directory / f"{split_name}_labels.swft", split.labels.to(torch.float32))
    meta = {"name": dataset.name, "num_classes": dataset.num_classes, "kind": dataset.kind.value}
    with open(directory / "dataset.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    logger.info("Cached dataset %s under %s", dataset.name, directory)


def load_dataset_cache(directory: Path) -> Dataset:
    directory = Path(directory)
    meta_path = directory / "dataset.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"Dataset cache not found: {meta_path}")
    with open(meta_path, "r", encoding="utf-8") as f:
        meta = json.load(f)
    splits = {}
    for split_name in ("train", "val", "test"):
        inputs = load_tensor(directory / f"{split_name}_inputs.swft")
        labels = load_tensor(directory / f"{split_name}_labels.swft").to(torch.int64)
        splits[split_name] = Split(inputs, labels)
    return Dataset(
        name=meta["name"], num_classes=meta["num_classes"], kind=InputKind(meta["kind"]), **splits
    )


# ============================================================
# ASSEMBLY
# ============================================================


def _pad(split: Split, enabled: bool) -> Split:
    if not enabled or len(split) == 0:
        return split
    return Split(pad_to_power_of_two(split.inputs), split.labels)


def load_dataset(cfg: DataConfig, timesteps: int) -> Dataset:
    """Build the Dataset a DataConfig describes (`timesteps` sets event binning)."""
    if cfg.kind == "cache":
        if not cfg.cache_path:
            raise ConfigurationError("data.kind=cache needs data.cache_path")
        return load_dataset_cache(settings.get_data_path(cfg.cache_path))

    kind = InputKind.STATIC_IMAGE
    num_classes = cfg.num_classes
    if cfg.kind == "synthetic_patterns":
        train, test = synthetic_patterns(cfg.num_classes, cfg.samples_per_class, cfg.image_size, cfg.seed)
    elif cfg.kind == "synthetic_edges":
        kind = InputKind.EVENT_FRAMES
        train, test = synthetic_edges(cfg.num_classes, cfg.samples_per_class, cfg.image_size, timesteps, cfg.seed)
    elif cfg.kind == "idx":
        if not (cfg.train_images and cfg.train_labels):
            raise ConfigurationError("data.kind=idx needs train_images and train_labels")
        num_classes = 10
        train = load_idx(settings.get_data_path(cfg.train_images), settings.get_data_path(cfg.train_labels))
        if cfg.test_images and cfg.test_labels:
            test = load_idx(settings.get_data_path(cfg.test_images), settings.get_data_path(cfg.test_labels))
        else:
            test = train.take(0)
    elif cfg.kind == "cifar":
        if not cfg.train_files:
            raise ConfigurationError("data.kind=cifar needs train_files")
        num_classes = CIFAR_CLASSES
        train = load_cifar_files(cfg.train_files)
        test = load_cifar_files(cfg.test_files) if cfg.test_files else train.take(0)
    elif cfg.kind == "event_csv":
        kind = InputKind.EVENT_FRAMES
        n_train, n_test = len(cfg.train_files), len(cfg.test_files)
        if len(cfg.event_labels) != n_train + n_test:
            raise ConfigurationError(
                f"event_labels has {len(cfg.event_labels)} entries for {n_train + n_test} event files"
            )
        train = load_event_clips(
            cfg.train_files, cfg.event_labels[:n_train], timesteps, cfg.sensor_size, cfg.event_window_us
        )
        test = load_event_clips(
            cfg.test_files, cfg.event_labels[n_train:], timesteps, cfg.sensor_size, cfg.event_window_us
        )
    else:
        raise ConfigurationError(f"unknown data kind {cfg.kind!r}")

    train, test = train.take(cfg.max_samples), test.take(cfg.max_samples)
    train, val = split_train_val(train, cfg.val_fraction, cfg.seed)
    dataset = Dataset(
        name=cfg.name,
        num_classes=num_classes,
        kind=kind,
        train=_pad(train, cfg.pad_to_pow2),
        val=_pad(val, cfg.pad_to_pow2),
        test=_pad(test, cfg.pad_to_pow2),
    )
    logger.info(
        "Dataset %s: %d train / %d val / %d test, input %s",
        dataset.name, len(dataset.train), len(dataset.val), len(dataset.test), dataset.input_shape,
    )
    return dataset
