"""
Spike-driven building blocks: autograd wrappers around the add-only kernels,
time-folded Conv+BatchNorm units and the spiking MLP.

All layer inputs are laid out [T, B, C, h, w].
"""

from __future__ import annotations

import logging
from typing import Optional

import torch
from torch import nn

from swformer.core.neurons import make_neuron
from swformer.core.spike_core import (
    BlockDiagonalWeight,
    block_diag_spike_apply,
    is_ternary,
    spike_matmul,
)
from swformer.models import NeuronConfig
from swformer.network.trace import ForwardContext

logger = logging.getLogger(__name__)


# ============================================================
# AUTOGRAD WRAPPERS
# ============================================================


class SpikeMatmulFn(torch.autograd.Function):
    """
    y = s @ w^T. Spike-valued s goes through the add-only kernel; smooth
    activations (gradient checks) fall back to a dense product.
    """

    @staticmethod
    def forward(ctx, s: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        ctx.save_for_backward(s, w)
        if is_ternary(s):
            return spike_matmul(s, w)
        return s @ w.T

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor):
        s, w = ctx.saved_tensors
        grad_s = grad_w = None
        if ctx.needs_input_grad[0]:
            grad_s = grad_output @ w
        if ctx.needs_input_grad[1]:
            g = grad_output.reshape(-1, grad_output.shape[-1])
            grad_w = g.T @ s.reshape(-1, s.shape[-1])
        return grad_s, grad_w


class BlockDiagSpikeFn(torch.autograd.Function):
    """Per-position block-diagonal product on grids [k, N, D/k, h, w]."""

    @staticmethod
    def forward(ctx, x: torch.Tensor, blocks: torch.Tensor) -> torch.Tensor:
        ctx.save_for_backward(x, blocks)
        if is_ternary(x):
            return block_diag_spike_apply(x, BlockDiagonalWeight(blocks))
        return torch.einsum("lhwij,lnjhw->lnihw", blocks, x)

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor):
        x, blocks = ctx.saved_tensors
        grad_x = grad_blocks = None
        if ctx.needs_input_grad[0]:
            grad_x = torch.einsum("lhwij,lnihw->lnjhw", blocks, grad_output)
        if ctx.needs_input_grad[1]:
            grad_blocks = torch.einsum("lnihw,lnjhw->lhwij", grad_output, x)
        return grad_x, grad_blocks


def haar_stage(x: torch.Tensor, weights: torch.Tensor, axis: str) -> torch.Tensor:
    """One spiking-Haar product over the last ("row") or second-to-last ("col") axis."""
    weights = weights.to(x.dtype)
    if axis == "row":
        return SpikeMatmulFn.apply(x, weights)
    return SpikeMatmulFn.apply(x.transpose(-1, -2), weights).transpose(-1, -2)


# ============================================================
# CONV + BATCHNORM
# ============================================================


class ConvBN(nn.Module):
    """
    Conv2d (no bias) followed by BatchNorm2d, applied with time folded into
    the batch so normalization statistics cover batch x time.
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int = 1,
        stride: int = 1,
        groups: int = 1,
        ctx: Optional[ForwardContext] = None,
        site: Optional[str] = None,
        encoding: bool = False,
    ) -> None:
        super().__init__()
        self.conv = nn.Conv2d(
            c_in, c_out, kernel, stride=stride, padding=kernel // 2, groups=groups, bias=False
        )
        self.bn = nn.BatchNorm2d(c_out)
        self.ctx = ctx
        self.site = site
        self.encoding = encoding

    def macs(self, height: int, width: int) -> int:
        """Dense MACs for one [C, height, width] input."""
        k = self.conv.kernel_size[0]
        s = self.conv.stride[0]
        p = self.conv.padding[0]
        out_h = (height + 2 * p - k) // s + 1
        out_w = (width + 2 * p - k) // s + 1
        per_output = (self.conv.in_channels // self.conv.groups) * k * k
        return self.conv.out_channels * out_h * out_w * per_output

    def zero_init(self) -> None:
        nn.init.zeros_(self.bn.weight)
        nn.init.zeros_(self.bn.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t, b = x.shape[0], x.shape[1]
        if self.ctx is not None and self.site is not None:
            if not self.encoding:
                self.ctx.audit.record(self.site, x)
            if self.ctx.trace is not None:
                self.ctx.trace.record_op(
                    self.site,
                    x,
                    self.macs(x.shape[-2], x.shape[-1]),
                    kind="encoding" if self.encoding else "spiking",
                )
        y = self.bn(self.conv(x.flatten(0, 1)))
        return y.unflatten(0, (t, b))


# ============================================================
# SPIKING MLP
# ============================================================


class SpikingMLP(nn.Module):
    """1x1 ConvBN expand -> spike -> 1x1 ConvBN contract."""

    def __init__(
        self, dim: int, ratio: int, neuron: NeuronConfig, ctx: ForwardContext, name: str
    ) -> None:
        super().__init__()
        hidden = dim * ratio
        self.fc1 = ConvBN(dim, hidden, 1, ctx=ctx, site=f"{name}.fc1")
        self.neuron = make_neuron(neuron)
        self.fc2 = ConvBN(hidden, dim, 1, ctx=ctx, site=f"{name}.fc2")

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.neuron(self.fc1(s)))
