"""
Event streams: binning into presence frames and the moving-edge generator.

Events are rows (t_us, x, y, polarity) with polarity +1 (ON) or -1 (OFF).
"""

from __future__ import annotations

import logging
import math
from typing import Literal, Optional, Sequence, Union

import numpy as np
import torch

from swformer.core.spike_core import SpikeTensor
from swformer.data.datasets import EventFrameClip
from swformer.errors import ConfigurationError, DomainError, IngestionError
from swformer.models import Polarity

logger = logging.getLogger(__name__)

EventArray = np.ndarray


def as_event_array(events: Union[EventArray, Sequence[Sequence[int]]]) -> EventArray:
    arr = np.asarray(events, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise IngestionError(f"events must be rows of (t_us, x, y, polarity), got shape {arr.shape}")
    return arr


def validate_events(events: EventArray, height: int, width: int) -> None:
    """Raise IngestionError naming the first offending event."""
    t, x, y, p = events[:, 0], events[:, 1], events[:, 2], events[:, 3]
    bad = np.flatnonzero((x < 0) | (x >= width) | (y < 0) | (y >= height))
    if bad.size:
        i = int(bad[0])
        raise IngestionError(
            f"event {i} {tuple(int(v) for v in events[i])} lies outside the {height}x{width} sensor"
        )
    bad = np.flatnonzero((p != 1) & (p != -1))
    if bad.size:
        i = int(bad[0])
        raise IngestionError(f"event {i} {tuple(int(v) for v in events[i])} has polarity outside {{-1, +1}}")
    bad = np.flatnonzero(np.diff(t) < 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise IngestionError(
            f"event {i} {tuple(int(v) for v in events[i])} breaks timestamp order "
            f"(previous t={int(t[i - 1])})"
        )


def bin_events(
    events: Union[EventArray, Sequence[Sequence[int]]],
    timesteps: int,
    height: int,
    width: int,
    window_us: Optional[int] = None,
    t_start: Optional[int] = None,
    label: int = 0,
) -> EventFrameClip:
    """
    Partition events into `timesteps` equal windows starting at t_start
    (default: first timestamp) and mark per-pixel, per-polarity presence.

    Without window_us the windows cover the whole stream. With it, events
    past the last window are dropped.
    """
    if timesteps < 1:
        raise ConfigurationError(f"timesteps must be >= 1, got {timesteps}")
    if window_us is not None and window_us < 1:
        raise ConfigurationError(f"window_us must be >= 1, got {window_us}")
    arr = as_event_array(events)
    frames = np.zeros((timesteps, 2, height, width), dtype=np.int8)
    if arr.shape[0] == 0:
        return EventFrameClip(SpikeTensor(torch.from_numpy(frames), Polarity.BINARY), label)

    validate_events(arr, height, width)
    start = int(arr[0, 0]) if t_start is None else int(t_start)
    if window_us is None:
        span = int(arr[-1, 0]) - start + 1
        window_us = max(1, math.ceil(span / timesteps))

    offset = arr[:, 0] - start
    idx = offset // window_us
    keep = (offset >= 0) & (idx < timesteps)
    dropped = int((~keep).sum())
    if dropped:
        logger.debug("Dropped %d events outside %d windows of %d us", dropped, timesteps, window_us)
    arr, idx = arr[keep], idx[keep]
    channel = np.where(arr[:, 3] > 0, 0, 1)
    frames[idx, channel, arr[:, 2], arr[:, 1]] = 1
    return EventFrameClip(SpikeTensor(torch.from_numpy(frames), Polarity.BINARY), label)


def edge_column(step: int, width: int, velocity: float, start: int = 0) -> int:
    return (start + 1 + int(math.floor(velocity * step))) % width


def moving_edge_events(
    timesteps: int,
    height: int,
    width: int,
    velocity: float,
    start: int = 0,
    direction: Literal["right", "left"] = "right",
    frame_us: int = 1000,
) -> EventArray:
    """
    Events of a vertical edge moving `velocity` px per frame. Whenever the
    edge moves (and at frame 0) its column fires ON and the column behind it
    fires OFF, along the full height.
    """
    if velocity < 0:
        raise DomainError(f"velocity must be >= 0, got {velocity}")
    rows = []
    previous = None
    for step in range(timesteps):
        col = edge_column(step, width, velocity, start)
        if previous is not None and col == previous:
            continue
        previous = col
        trail = (col - 1) % width
        if direction == "left":
            col, trail = width - 1 - col, width - 1 - trail
        t = step * frame_us
        for y in range(height):
            rows.append((t, col, y, 1))
        for y in range(height):
            rows.append((t, trail, y, -1))
    return as_event_array(rows)


def synth_moving_edge(
    timesteps: int,
    height: int,
    width: int,
    velocity: float,
    start: int = 0,
    direction: Literal["right", "left"] = "right",
    label: int = 0,
) -> EventFrameClip:
    frame_us = 1000
    events = moving_edge_events(timesteps, height, width, velocity, start, direction, frame_us)
    return bin_events(events, timesteps, height, width, window_us=frame_us, t_start=0, label=label)
