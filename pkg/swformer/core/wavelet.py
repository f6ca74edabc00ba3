"""
Haar matrices, exact and spiking 2D Haar transforms, and fidelity metrics.

The spiking transform runs each matrix product through spike_matmul and
re-spikes the result with IF neurons:

    forward:  H = Spk(W . Spk(x . W^T))
    inverse:  x = Spk(W^T . Spk(H . W))

Two stage scalings are available. "mean" divides every Haar pattern row by
its support, so each stage outputs signed local means that stay inside the
input range; the per-coefficient factors come back in
TransformResult.decode and the inverse is the bare pattern transpose.
"orthonormal" uses W itself. A neuron's spike carries its
threshold as amplitude, folded into the next stage's weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Literal, Tuple, Union

import torch
import torch.nn.functional as F

from swformer.core.neurons import make_neuron
from swformer.core.spike_core import SpikeTensor, check_finite, spike_matmul
from swformer.errors import ConfigurationError, DimensionError, DomainError
from swformer.models import NeuronConfig, Polarity, is_power_of_two

logger = logging.getLogger(__name__)

Direction = Literal["forward", "inverse"]


# ============================================================
# HAAR MATRIX
# ============================================================


@dataclass(frozen=True)
class HaarMatrix:
    """
    Orthonormal 2^(n-1) x 2^(n-1) Haar matrix.

    Row r equals pattern[r] * 2^(-exponents[r] / 2) with pattern entries in
    {-1, 0, 1}; keeping the factors symbolic lets scaled variants be built
    without rounding on power-of-two rows.
    """

    n: int
    m: torch.Tensor
    pattern: torch.Tensor
    exponents: torch.Tensor

    @property
    def size(self) -> int:
        return self.m.shape[0]

    def support(self) -> torch.Tensor:
        """Number of nonzero entries of each row, 2^exponents[r]."""
        return torch.pow(2.0, self.exponents.to(torch.float64))

    def mean_rows(self) -> torch.Tensor:
        """pattern rows divided by their support; every entry is +-2^-e or 0."""
        return self.pattern / self.support().unsqueeze(1)

    def coefficient_gain(self) -> torch.Tensor:
        """
        [S, S] factors g_r * g_c with g_r = 2^(exponents[r] / 2), taking
        mean_rows . x . mean_rows^T back to m . x . m^T.
        """
        g = torch.sqrt(self.support())
        return torch.outer(g, g)


def haar_matrix(n: int) -> HaarMatrix:
    """W(1) = [1]; W(n) = (1/sqrt 2) [W(n-1) (x) [1, 1]; I_{2^(n-2)} (x) [1, -1]]."""
    if n < 1:
        raise DomainError(f"Haar level must be >= 1, got {n}")
    pattern = torch.ones(1, 1, dtype=torch.float64)
    exponents = torch.zeros(1, dtype=torch.int64)
    for level in range(2, n + 1):
        top = torch.kron(pattern, torch.tensor([[1.0, 1.0]], dtype=torch.float64))
        bottom = torch.kron(
            torch.eye(2 ** (level - 2), dtype=torch.float64),
            torch.tensor([[1.0, -1.0]], dtype=torch.float64),
        )
        pattern = torch.cat([top, bottom])
        exponents = torch.cat([exponents + 1, torch.ones(2 ** (level - 2), dtype=torch.int64)])
    factors = torch.tensor([2.0 ** (-int(e) / 2.0) for e in exponents], dtype=torch.float64)
    return HaarMatrix(n=n, m=pattern * factors.unsqueeze(1), pattern=pattern, exponents=exponents)


def haar_matrix_for_size(size: int) -> HaarMatrix:
    if not is_power_of_two(size):
        raise DomainError(f"Haar transform needs a power-of-two side, got {size}")
    return haar_matrix(size.bit_length())


def pad_to_power_of_two(x: torch.Tensor) -> torch.Tensor:
    """Center zero-pad the last two axes to a square power-of-two side."""
    h, w = x.shape[-2], x.shape[-1]
    side = 1
    while side < max(h, w):
        side *= 2
    if (h, w) == (side, side):
        return x
    top = (side - h) // 2
    left = (side - w) // 2
    return F.pad(x, (left, side - w - left, top, side - h - top))


# ============================================================
# TRANSFORM RESULT
# ============================================================


class TransformMode(str, Enum):
    EXACT = "exact"
    SPIKING_BINARY = "spiking_binary"
    SPIKING_TERNARY = "spiking_ternary"


@dataclass(frozen=True)
class TransformResult:
    """
    Wavelet-domain (or reconstructed) coefficients of one transform call.

    `scale` is a float or a tensor broadcasting over the trailing [S, S] axes.
    """

    coeffs: Union[torch.Tensor, SpikeTensor]
    mode: TransformMode
    timesteps: int = 0
    direction: Direction = "forward"
    v_th: float = 1.0
    scale: Union[float, torch.Tensor] = 1.0

    def decode(self) -> torch.Tensor:
        """Dense estimate: exact coefficients, or spike rate x amplitude x scale."""
        if isinstance(self.coeffs, SpikeTensor):
            rate = self.coeffs.time_average()
            scale = self.scale.to(rate) if isinstance(self.scale, torch.Tensor) else self.scale
            return rate * self.v_th * scale
        return self.coeffs


def _check_square(x: torch.Tensor, w: HaarMatrix) -> int:
    if x.dim() < 2 or x.shape[-1] != x.shape[-2]:
        raise DimensionError(f"expected square trailing axes, got {tuple(x.shape)}")
    side = x.shape[-1]
    if not is_power_of_two(side):
        raise DomainError(f"Haar transform needs a power-of-two side, got {side}")
    if side != w.size:
        raise DimensionError(f"input side {side} does not match Haar matrix size {w.size}")
    return side


# ============================================================
# EXACT TRANSFORMS
# ============================================================


def haar2d_forward_exact(x: torch.Tensor, w: HaarMatrix) -> TransformResult:
    """H = W . x . W^T over the last two axes."""
    check_finite(x, "Haar input")
    _check_square(x, w)
    m = w.m.to(x.dtype)
    return TransformResult(coeffs=m @ x @ m.T, mode=TransformMode.EXACT, direction="forward")


def haar2d_inverse_exact(h: Union[TransformResult, torch.Tensor], w: HaarMatrix) -> torch.Tensor:
    """x = W^T . H . W over the last two axes."""
    coeffs = h.decode() if isinstance(h, TransformResult) else h
    check_finite(coeffs, "Haar coefficients")
    _check_square(coeffs, w)
    m = w.m.to(coeffs.dtype)
    return m.T @ coeffs @ m


# ============================================================
# SPIKING TRANSFORMS
# ============================================================


StageScaling = Literal["mean", "orthonormal"]


def spiking_stages(
    w: HaarMatrix, direction: Direction, scaling: StageScaling = "mean"
) -> List[Tuple[torch.Tensor, str]]:
    """
    (weights, axis) per stage; weights follow spike_matmul's [N_out, N_in]
    convention. "row" stages act on the last axis, "col" stages on the
    second-to-last.

    With "mean" scaling the forward stages use w.mean_rows() and the inverse
    stages pattern^T, so the inverse's first stage reproduces the forward's
    intermediate exactly. "orthonormal" uses m forward and m^T inverse.
    """
    if scaling == "mean":
        fwd, inv = w.mean_rows(), w.pattern.T.contiguous()
    elif scaling == "orthonormal":
        fwd, inv = w.m, w.m.T.contiguous()
    else:
        raise ConfigurationError(f"unknown stage scaling {scaling!r}")
    if direction == "forward":
        return [(fwd, "row"), (fwd, "col")]
    if direction == "inverse":
        return [(inv, "row"), (inv, "col")]
    raise ConfigurationError(f"unknown transform direction {direction!r}")


def apply_stage(spikes: torch.Tensor, weights: torch.Tensor, axis: str) -> torch.Tensor:
    if axis == "row":
        return spike_matmul(spikes, weights)
    return spike_matmul(spikes.transpose(-1, -2), weights).transpose(-1, -2)


def haar2d_spiking(
    x: SpikeTensor,
    w: HaarMatrix,
    cfg: NeuronConfig,
    direction: Direction = "forward",
    input_amplitude: float = 1.0,
) -> TransformResult:
    """
    Spiking Haar transform of x [T, ..., S, S] with mean-scaled stages.

    `input_amplitude` is the value one input spike stands for: 1 for
    rate-encoded images, the upstream threshold for spikes coming out of a
    previous spiking transform. Forward results decode with the Haar
    coefficient gain, so decode() estimates m . x . m^T.
    """
    if cfg.beta != 1.0:
        raise ConfigurationError(f"wavelet-path neurons are IF (beta=1), got beta={cfg.beta}")
    if x.values.dim() < 3 or x.timesteps < 1:
        raise DimensionError(f"expected [T, ..., S, S] spikes, got {x.shape}")
    _check_square(x.values, w)

    spikes = x.to_dense(torch.float64)
    amplitude = input_amplitude
    for weights, axis in spiking_stages(w, direction, "mean"):
        current = apply_stage(spikes, weights * amplitude, axis)
        with torch.no_grad():
            spikes = make_neuron(cfg)(current)
        amplitude = cfg.v_th

    mode = TransformMode.SPIKING_TERNARY if cfg.polarity == Polarity.TERNARY else TransformMode.SPIKING_BINARY
    result = TransformResult(
        coeffs=SpikeTensor(spikes, cfg.polarity),
        mode=mode,
        timesteps=x.timesteps,
        direction=direction,
        v_th=cfg.v_th,
        scale=w.coefficient_gain() if direction == "forward" else 1.0,
    )
    logger.debug(
        "Spiking Haar %s S=%d T=%d v_th=%g: firing rate %.3f",
        direction, w.size, x.timesteps, cfg.v_th, result.coeffs.firing_rate(),
    )
    return result


def spiking_round_trip(x: SpikeTensor, w: HaarMatrix, cfg: NeuronConfig) -> TransformResult:
    """Spiking forward followed by spiking inverse."""
    fwd = haar2d_spiking(x, w, cfg, direction="forward")
    return haar2d_spiking(fwd.coeffs, w, cfg, direction="inverse", input_amplitude=fwd.v_th)


# ============================================================
# COEFFICIENT OPERATIONS & METRICS
# ============================================================


def mask_dc(coeffs: Union[TransformResult, torch.Tensor]) -> Union[TransformResult, torch.Tensor]:
    """Zero the (0, 0) coefficient of every channel/timestep."""
    if isinstance(coeffs, torch.Tensor):
        out = coeffs.clone()
        out[..., 0, 0] = 0
        return out
    if coeffs.direction != "forward":
        raise ConfigurationError("mask_dc expects wavelet-domain coefficients")
    if isinstance(coeffs.coeffs, SpikeTensor):
        values = coeffs.coeffs.values.clone()
        values[..., 0, 0] = 0
        return replace(coeffs, coeffs=SpikeTensor(values, coeffs.coeffs.polarity))
    return replace(coeffs, coeffs=mask_dc(coeffs.coeffs))


def detail_fraction(coeffs: torch.Tensor, tol: float = 1e-9) -> float:
    """Fraction of nonzero detail (non-DC) coefficients."""
    detail = mask_dc(coeffs.detach()).abs() > tol
    total = coeffs.numel() - coeffs[..., 0, 0].numel()
    return float(detail.sum()) / total if total else 0.0


PSNR_INF = math.inf


def psnr(reference: torch.Tensor, reconstruction: torch.Tensor, peak: float) -> float:
    """10 log10(peak^2 / MSE) in dB; +inf when the images agree exactly."""
    if reference.shape != reconstruction.shape:
        raise DimensionError(
            f"shapes differ: {tuple(reference.shape)} vs {tuple(reconstruction.shape)}"
        )
    if peak <= 0:
        raise DomainError(f"peak must be positive, got {peak}")
    check_finite(reference, "reference image")
    check_finite(reconstruction, "reconstruction")
    diff = reference.to(torch.float64) - reconstruction.to(torch.float64)
    mse = float((diff * diff).mean())
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)
