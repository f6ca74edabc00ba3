"""
Spike tensors and multiplication-free accumulation kernels.

Dense tensors are plain torch tensors. Spike tensors wrap an int8 tensor whose
entries are restricted to {-1, 0, +1} (binary polarity forbids -1). The kernels
below only add or subtract weight columns gated by nonzero spikes, scanning the
input index in ascending order so results are bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import torch

from swformer.errors import ConfigurationError, DimensionError, DomainError
from swformer.models import Polarity

logger = logging.getLogger(__name__)


def check_finite(x: torch.Tensor, name: str = "tensor") -> torch.Tensor:
    """Raise DomainError if x holds NaN or Inf."""
    if x.is_floating_point() and not bool(torch.isfinite(x).all()):
        raise DomainError(f"{name} contains non-finite values")
    return x


def is_ternary(x: torch.Tensor) -> bool:
    """True when every entry of x is -1, 0 or +1."""
    if x.numel() == 0:
        return True
    return bool(((x == 0) | (x == 1) | (x == -1)).all())


# ============================================================
# SPIKE TENSOR
# ============================================================


@dataclass(frozen=True)
class SpikeTensor:
    """Spike-valued tensor, conventionally shaped [T, C, H, W]."""

    values: torch.Tensor
    polarity: Polarity = Polarity.TERNARY

    def __post_init__(self) -> None:
        values = self.values
        if values.is_floating_point() and not bool(torch.isfinite(values).all()):
            raise DomainError("spike values must be finite")
        if not is_ternary(values):
            raise DomainError("spike values must lie in {-1, 0, +1}")
        polarity = Polarity(self.polarity)
        if polarity == Polarity.BINARY and bool((values == -1).any()):
            raise DomainError("binary spike tensor contains -1")
        object.__setattr__(self, "values", values.detach().to(torch.int8))
        object.__setattr__(self, "polarity", polarity)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def timesteps(self) -> int:
        return self.values.shape[0]

    def to_dense(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return self.values.to(dtype)

    def nonzero_count(self) -> int:
        return int((self.values != 0).sum())

    def firing_rate(self) -> float:
        n = self.values.numel()
        return self.nonzero_count() / n if n else 0.0

    def time_average(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return self.to_dense(dtype).mean(dim=0)

    def __getitem__(self, idx) -> "SpikeTensor":
        return SpikeTensor(self.values[idx], self.polarity)


def _values(x: Union[SpikeTensor, torch.Tensor]) -> torch.Tensor:
    return x.values if isinstance(x, SpikeTensor) else x


# ============================================================
# ACCUMULATION KERNELS
# ============================================================


def spike_matmul(spikes: Union[SpikeTensor, torch.Tensor], weights: torch.Tensor) -> torch.Tensor:
    """
    out[..., j] = sum over nonzero spikes i of sign(spike[..., i]) * weights[j, i].

    Leading axes of `spikes` are treated as a batch. Only additions and
    subtractions of weight columns are performed.
    """
    s = _values(spikes)
    if weights.dim() != 2:
        raise DimensionError(f"weights must be 2-D, got shape {tuple(weights.shape)}")
    if s.dim() == 0 or s.shape[-1] != weights.shape[1]:
        raise DimensionError(
            f"spike length {tuple(s.shape)[-1:]} does not match weight inner dim {weights.shape[1]}"
        )
    check_finite(weights, "spike_matmul weights")
    if not is_ternary(s):
        raise DomainError("spike_matmul requires activations in {-1, 0, +1}")

    out = weights.new_zeros(*s.shape[:-1], weights.shape[0])
    for i in range(s.shape[-1]):
        gate = s[..., i : i + 1]
        col = weights[:, i]
        out = torch.where(gate > 0, out + col, out)
        out = torch.where(gate < 0, out - col, out)
    return out


# ============================================================
# BLOCK-DIAGONAL WEIGHTS
# ============================================================


@dataclass
class BlockDiagonalWeight:
    """
    k independent (D/k x D/k) matrices per spatial position.

    `blocks` is laid out [k, H, W, D/k, D/k] so block l at token (m, n) is
    blocks[l, m, n].
    """

    blocks: torch.Tensor

    def __post_init__(self) -> None:
        if self.blocks.dim() != 5 or self.blocks.shape[-1] != self.blocks.shape[-2]:
            raise ConfigurationError(
                f"blocks must be [k, H, W, b, b], got {tuple(self.blocks.shape)}"
            )

    @property
    def k(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_dim(self) -> int:
        return self.blocks.shape[-1]

    @property
    def embed_dim(self) -> int:
        return self.k * self.block_dim

    @property
    def grid(self) -> Tuple[int, int]:
        return self.blocks.shape[1], self.blocks.shape[2]

    @classmethod
    def identity(cls, embed_dim: int, k: int, height: int, width: int,
                 dtype: torch.dtype = torch.float64) -> "BlockDiagonalWeight":
        if embed_dim % k != 0:
            raise ConfigurationError(f"D={embed_dim} is not divisible by k={k}")
        b = embed_dim // k
        eye = torch.eye(b, dtype=dtype)
        return cls(eye.expand(k, height, width, b, b).clone())

    def dense_at(self, m: int, n: int) -> torch.Tensor:
        """Assemble the full D x D block-diagonal matrix at token (m, n)."""
        return torch.block_diag(*[self.blocks[l, m, n] for l in range(self.k)])


def param_count(w: BlockDiagonalWeight) -> int:
    """H * W * k * (D/k)^2."""
    h, wd = w.grid
    return h * wd * w.k * w.block_dim * w.block_dim


def expected_block_param_count(embed_dim: int, k: int, height: int, width: int) -> int:
    if embed_dim % k != 0:
        raise ConfigurationError(f"D={embed_dim} is not divisible by k={k}")
    b = embed_dim // k
    return height * width * k * b * b


def block_diag_apply(
    x: torch.Tensor,
    w: BlockDiagonalWeight,
    position: Optional[Tuple[int, int]] = None,
) -> torch.Tensor:
    """
    Apply y_l = W_l[m, n] @ x_l independently for every block l.

    With `position`, x is a single token laid out [k, D/k]. Without it, x is a
    token grid laid out [k, N, D/k, H, W] (N any batch extent).
    """
    check_finite(w.blocks, "block weights")
    check_finite(x, "block input")
    if position is not None:
        if x.shape != (w.k, w.block_dim):
            raise ConfigurationError(
                f"token layout {tuple(x.shape)} does not match k={w.k}, block_dim={w.block_dim}"
            )
        m, n = position
        return torch.einsum("lij,lj->li", w.blocks[:, m, n], x)

    _check_grid_layout(x, w)
    return torch.einsum("lhwij,lnjhw->lnihw", w.blocks, x)


def block_diag_spike_apply(spikes: torch.Tensor, w: BlockDiagonalWeight) -> torch.Tensor:
    """Multiplication-free block_diag_apply for ternary grids laid out [k, N, D/k, H, W]."""
    _check_grid_layout(spikes, w)
    if not is_ternary(spikes):
        raise DomainError("block_diag_spike_apply requires activations in {-1, 0, +1}")
    k, n, b, h, wd = spikes.shape
    out = w.blocks.new_zeros(k, n, b, h, wd)
    for j in range(b):
        gate = spikes[:, :, j : j + 1]
        # column j of every block at every position -> [k, 1, b, H, W]
        col = w.blocks[..., j].permute(0, 3, 1, 2).unsqueeze(1)
        out = torch.where(gate > 0, out + col, out)
        out = torch.where(gate < 0, out - col, out)
    return out


def _check_grid_layout(x: torch.Tensor, w: BlockDiagonalWeight) -> None:
    if x.dim() != 5:
        raise DimensionError(f"grid input must be [k, N, D/k, H, W], got {tuple(x.shape)}")
    if x.shape[0] != w.k or x.shape[2] != w.block_dim:
        raise ConfigurationError(
            f"block layout (k={x.shape[0]}, block_dim={x.shape[2]}) does not match weight "
            f"(k={w.k}, block_dim={w.block_dim})"
        )
    if (x.shape[3], x.shape[4]) != w.grid:
        raise DimensionError(f"token grid {tuple(x.shape[3:])} does not match weight grid {w.grid}")


# ============================================================
# BLOCK RESHAPING
# ============================================================


def reshape_for_blocks(s: Union[SpikeTensor, torch.Tensor], k: int) -> Union[SpikeTensor, torch.Tensor]:
    """
    [T, D, H, W] -> [k*T, D/k, H, W], block-major: items l*T .. l*T+T-1 hold
    channels l*D/k .. (l+1)*D/k - 1.
    """
    x = _values(s)
    if x.dim() != 4:
        raise DimensionError(f"expected [T, D, H, W], got {tuple(x.shape)}")
    t, d, h, w = x.shape
    if k < 1 or d % k != 0:
        raise ConfigurationError(f"D={d} is not divisible by k={k}")
    out = x.reshape(t, k, d // k, h, w).transpose(0, 1).reshape(k * t, d // k, h, w)
    if isinstance(s, SpikeTensor):
        return SpikeTensor(out, s.polarity)
    return out


def restore_from_blocks(s: Union[SpikeTensor, torch.Tensor], k: int) -> Union[SpikeTensor, torch.Tensor]:
    """Inverse of reshape_for_blocks."""
    x = _values(s)
    if x.dim() != 4:
        raise DimensionError(f"expected [k*T, D/k, H, W], got {tuple(x.shape)}")
    kt, b, h, w = x.shape
    if k < 1 or kt % k != 0:
        raise ConfigurationError(f"leading extent {kt} is not divisible by k={k}")
    t = kt // k
    out = x.reshape(k, t, b, h, w).transpose(0, 1).reshape(t, k * b, h, w)
    if isinstance(s, SpikeTensor):
        return SpikeTensor(out, s.polarity)
    return out
