"""
Synthetic datasets for desk-scale runs without downloads.

    patterns: oriented sinusoidal gratings, class = orientation
    edges:    moving vertical edges, class = (speed, direction)
"""

from __future__ import annotations

import logging
import math
from typing import Tuple

import torch

from swformer.data.datasets import Split
from swformer.data.events import synth_moving_edge

logger = logging.getLogger(__name__)


def _test_count(samples_per_class: int) -> int:
    return max(1, samples_per_class // 4)


def grating(size: int, angle: float, frequency: float, phase: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float32)
    y, x = torch.meshgrid(coords, coords, indexing="ij")
    wave = torch.cos(2 * math.pi * frequency * (x * math.cos(angle) + y * math.sin(angle)) + phase)
    return 0.5 + 0.5 * wave


def synthetic_patterns(
    num_classes: int, samples_per_class: int, size: int, seed: int, noise: float = 0.05
) -> Tuple[Split, Split]:
    """Grayscale gratings [n, 1, size, size]; items are interleaved by class."""
    generator = torch.Generator().manual_seed(seed)

    def make(count: int) -> Split:
        images, labels = [], []
        for _ in range(count):
            for c in range(num_classes):
                freq = 0.15 + 0.15 * float(torch.rand(1, generator=generator))
                phase = 2 * math.pi * float(torch.rand(1, generator=generator))
                img = grating(size, math.pi * c / num_classes, freq, phase)
                img = img + noise * torch.randn(size, size, generator=generator)
                images.append(img.clamp(0.0, 1.0).unsqueeze(0))
                labels.append(c)
        return Split(torch.stack(images), torch.tensor(labels, dtype=torch.int64))

    train = make(samples_per_class)
    test = make(_test_count(samples_per_class))
    logger.info("Generated %d/%d grating images (%d classes)", len(train), len(test), num_classes)
    return train, test


def edge_class(label: int) -> Tuple[float, str]:
    """Class -> (velocity px/frame, direction)."""
    return float(1 + label // 2), ("right" if label % 2 == 0 else "left")


def synthetic_edges(
    num_classes: int, samples_per_class: int, size: int, timesteps: int, seed: int
) -> Tuple[Split, Split]:
    """Moving-edge clips [n, T, 2, size, size] with random start columns."""
    generator = torch.Generator().manual_seed(seed)

    def make(count: int) -> Split:
        clips, labels = [], []
        for _ in range(count):
            for c in range(num_classes):
                velocity, direction = edge_class(c)
                start = int(torch.randint(0, size, (1,), generator=generator))
                clip = synth_moving_edge(timesteps, size, size, velocity, start, direction, label=c)
                clips.append(clip.to_dense())
                labels.append(c)
        return Split(torch.stack(clips), torch.tensor(labels, dtype=torch.int64))

    train = make(samples_per_class)
    test = make(_test_count(samples_per_class))
    logger.info("Generated %d/%d moving-edge clips (%d classes)", len(train), len(test), num_classes)
    return train, test
