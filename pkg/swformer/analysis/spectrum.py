"""
Fourier analysis of feature maps.

A layer's recorded feature [T, B, C, h, w] is averaged over time and batch,
transformed per channel with a centered 2D FFT, and reduced to a radial
profile of relative log amplitude:

    delta(f) = log A(f) - log A(0)

where A(f) is the mean magnitude over channels and over the ring of radius
round(f * S / 2) around DC, and f in [0, 1] is Nyquist-normalized.
Rings with zero amplitude report -inf.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import torch

from swformer.errors import DimensionError, UndefinedProfileError
from swformer.network.trace import LayerActivationTrace
from swformer.reports import write_csv

logger = logging.getLogger(__name__)

NEG_INF = -math.inf


@dataclass(frozen=True)
class SpectrumProfile:
    layer: str
    frequencies: Tuple[float, ...]
    delta: Tuple[float, ...]
    log_magnitude: torch.Tensor

    @property
    def size(self) -> int:
        return self.log_magnitude.shape[-1]


def centered_magnitude(feature: torch.Tensor) -> torch.Tensor:
    """|FFT2| per channel, DC moved to the center; feature is [C, S, S]."""
    spectrum = torch.fft.fft2(feature.to(torch.float64))
    return torch.fft.fftshift(spectrum, dim=(-2, -1)).abs()


def ring_index(size: int) -> torch.Tensor:
    center = size // 2
    coords = torch.arange(size, dtype=torch.float64) - center
    dy, dx = torch.meshgrid(coords, coords, indexing="ij")
    return torch.round(torch.sqrt(dx * dx + dy * dy)).to(torch.int64)


def spectrum_of_map(feature: torch.Tensor, layer: str = "") -> SpectrumProfile:
    """Profile of one map [C, S, S] or a recorded feature [T, B, C, S, S]."""
    if feature.dim() == 5:
        feature = feature.to(torch.float64).mean(dim=(0, 1))
    if feature.dim() != 3 or feature.shape[-1] != feature.shape[-2]:
        raise DimensionError(f"expected a square [C, S, S] map, got {tuple(feature.shape)}")
    if not bool((feature != 0).any()):
        raise UndefinedProfileError(f"feature map of layer {layer!r} is all zero")

    size = feature.shape[-1]
    magnitude = centered_magnitude(feature)
    rings = ring_index(size)
    max_ring = size // 2
    channel_mean = magnitude.mean(dim=0)

    amplitude = []
    for r in range(max_ring + 1):
        mask = rings == r
        amplitude.append(float(channel_mean[mask].mean()))
    dc = amplitude[0]

    delta: List[float] = []
    for a in amplitude:
        if a == 0.0:
            delta.append(NEG_INF)
        elif dc == 0.0:
            delta.append(math.inf)
        else:
            delta.append(math.log(a) - math.log(dc))
    delta[0] = 0.0

    half = size / 2 if size > 1 else 1.0
    frequencies = tuple(r / half for r in range(max_ring + 1))
    with torch.no_grad():
        log_magnitude = torch.log(magnitude)
    return SpectrumProfile(layer=layer, frequencies=frequencies, delta=tuple(delta), log_magnitude=log_magnitude)


def spectrum(trace: LayerActivationTrace, layer: str) -> SpectrumProfile:
    return spectrum_of_map(trace.feature(layer), layer)


def band_mean(profile: SpectrumProfile, band: Tuple[float, float]) -> float:
    lo, hi = band
    values = [d for f, d in zip(profile.frequencies, profile.delta) if lo <= f <= hi]
    if not values:
        raise DimensionError(f"band {band} contains no frequency of the profile grid")
    return sum(values) / len(values)


def compare_highfreq(
    a: SpectrumProfile, b: SpectrumProfile, band: Tuple[float, float] = (0.5, 1.0)
) -> float:
    """
    Mean delta over the band for a minus that for b. Infinite band means pass
    through as +-inf; when both means are the same infinity the gap is
    undefined and UndefinedProfileError is raised.
    """
    if a.frequencies != b.frequencies:
        raise DimensionError(
            f"frequency grids differ ({len(a.frequencies)} vs {len(b.frequencies)} rings)"
        )
    if a.delta == b.delta:
        return 0.0
    mean_a, mean_b = band_mean(a, band), band_mean(b, band)
    if mean_a == mean_b and math.isinf(mean_a):
        raise UndefinedProfileError(f"high-frequency gap over {band} is undefined for {a.layer!r} vs {b.layer!r}")
    return mean_a - mean_b


# ============================================================
# OUTPUT
# ============================================================


def write_spectrum_csv(profiles: Sequence[SpectrumProfile], path: Path) -> Path:
    rows = []
    for p in profiles:
        rows.extend((p.layer, f, d) for f, d in zip(p.frequencies, p.delta))
    return write_csv(path, ["layer", "f_normalized", "delta_log_amp"], rows)


def write_gnuplot_data(profiles: Sequence[SpectrumProfile], path: Path) -> Path:
    """One indexed data block per layer; -inf is written as NaN so gnuplot skips it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for i, p in enumerate(profiles):
            if i:
                f.write("\n\n")
            f.write(f"# layer {p.layer}\n# f_normalized delta_log_amp\n")
            for freq, d in zip(p.frequencies, p.delta):
                value = "NaN" if math.isinf(d) else repr(d)
                f.write(f"{freq!r} {value}\n")
    return path
