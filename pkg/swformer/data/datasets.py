"""
Dataset containers, splitting, batching and static-input helpers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Tuple

import torch

from swformer.core.spike_core import SpikeTensor
from swformer.errors import ConfigurationError, DimensionError, LabelRangeError

logger = logging.getLogger(__name__)


class InputKind(str, Enum):
    STATIC_IMAGE = "static_image"
    EVENT_FRAMES = "event_frames"


@dataclass(frozen=True)
class Split:
    """
    Inputs and labels of one split.

    Static images are stored [n, C, H, W]; event clips [n, T, 2, H, W].
    """

    inputs: torch.Tensor
    labels: torch.Tensor

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, n: Optional[int]) -> "Split":
        if n is None or n >= len(self):
            return self
        return Split(self.inputs[:n], self.labels[:n])

    def select(self, indices: torch.Tensor) -> "Split":
        return Split(self.inputs[indices], self.labels[indices])


@dataclass(frozen=True)
class Dataset:
    name: str
    num_classes: int
    kind: InputKind
    train: Split
    val: Split
    test: Split

    def __post_init__(self) -> None:
        for split_name in ("train", "val", "test"):
            labels = getattr(self, split_name).labels
            if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= self.num_classes):
                raise LabelRangeError(
                    f"{self.name}/{split_name}: labels must lie in [0, {self.num_classes}), "
                    f"got [{int(labels.min())}, {int(labels.max())}]"
                )

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.train.inputs.shape[1:])

    @property
    def in_channels(self) -> int:
        return self.input_shape[-3]

    @property
    def image_size(self) -> Tuple[int, int]:
        return tuple(self.input_shape[-2:])


@dataclass(frozen=True)
class EventFrameClip:
    """Presence frames [T, 2, H, W]: channel 0 ON events, channel 1 OFF events."""

    frames: SpikeTensor
    label: int = 0

    @property
    def timesteps(self) -> int:
        return self.frames.timesteps

    def to_dense(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return self.frames.to_dense(dtype)


# ============================================================
# STATIC INPUT HELPERS
# ============================================================


def replicate_static(images: torch.Tensor, timesteps: int) -> torch.Tensor:
    """Repeat [C, H, W] (or [B, C, H, W]) along a new leading time axis."""
    if timesteps < 1:
        raise ConfigurationError(f"timesteps must be >= 1, got {timesteps}")
    return images.unsqueeze(0).repeat(timesteps, *([1] * images.dim()))


def split_train_val(
    train: Split, val_fraction: float, seed: int
) -> Tuple[Split, Split]:
    """Disjoint random split of `train` by index."""
    n_val = int(round(len(train) * val_fraction))
    if n_val == 0:
        return train, Split(train.inputs[:0], train.labels[:0])
    generator = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(train), generator=generator)
    return train.select(order[n_val:]), train.select(order[:n_val])


def iterate_batches(
    split: Split,
    batch_size: int,
    kind: InputKind,
    generator: Optional[torch.Generator] = None,
) -> Iterator[Tuple[torch.Tensor, torch.Tensor]]:
    """
    Yield (inputs, labels). Event batches come out time-major [T, B, 2, H, W].
    Passing a generator shuffles the order.
    """
    n = len(split)
    order = torch.randperm(n, generator=generator) if generator is not None else torch.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        x = split.inputs[idx]
        if kind == InputKind.EVENT_FRAMES:
            x = x.transpose(0, 1)
        yield x, split.labels[idx]


def augment_batch(images: torch.Tensor, generator: torch.Generator, pad: int = 2) -> torch.Tensor:
    """Random crop after `pad`-pixel zero padding plus random horizontal flip, per image."""
    b, _, h, w = images.shape
    padded = torch.nn.functional.pad(images, (pad, pad, pad, pad))
    offsets = torch.randint(0, 2 * pad + 1, (b, 2), generator=generator)
    flips = torch.rand(b, generator=generator) < 0.5
    out = torch.empty_like(images)
    for i in range(b):
        dy, dx = int(offsets[i, 0]), int(offsets[i, 1])
        crop = padded[i, :, dy : dy + h, dx : dx + w]
        out[i] = crop.flip(-1) if flips[i] else crop
    return out
