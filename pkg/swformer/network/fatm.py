"""
Token mixers: the Frequency-Aware Token Mixer (FL + SL + CM branches) and
the global token-mean control mixer.
"""

from __future__ import annotations

import logging
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from swformer.core.neurons import make_neuron
from swformer.core.spike_core import reshape_for_blocks, restore_from_blocks
from swformer.core.wavelet import haar_matrix_for_size, spiking_stages
from swformer.errors import ConfigurationError
from swformer.models import ModelConfig, is_power_of_two
from swformer.network.layers import BlockDiagSpikeFn, ConvBN, haar_stage
from swformer.network.trace import ForwardContext

logger = logging.getLogger(__name__)


def token_max_pool(s: torch.Tensor) -> torch.Tensor:
    """1D max-pool (kernel 2, stride 1, same length) over the flattened token axis."""
    t, b, d, h, w = s.shape
    x = s.reshape(t * b, d, h * w)
    x = F.pad(x, (0, 1), value=float("-inf"))
    return F.max_pool1d(x, kernel_size=2, stride=1).reshape(t, b, d, h, w)


# ============================================================
# FREQUENCY LEARNER
# ============================================================


class FrequencyLearner(nn.Module):
    """
    Haar forward -> optional DC mask -> per-position block-diagonal weights
    -> re-spike -> Haar inverse. Emits the membrane current of the last
    inverse stage.

    Spiking stages use the orthonormal matrix, so binary token spikes drive
    the wavelet neurons across threshold at the usual firing rates.
    """

    def __init__(self, cfg: ModelConfig, ctx: ForwardContext, name: str) -> None:
        super().__init__()
        side = cfg.token_side
        if not is_power_of_two(side):
            raise ConfigurationError(f"token grid side {side} is not a power of two")
        haar = haar_matrix_for_size(side)
        fwd = spiking_stages(haar, "forward", "orthonormal")[0][0]
        inv = spiking_stages(haar, "inverse", "orthonormal")[0][0]
        self.register_buffer("fwd_weights", fwd, persistent=False)
        self.register_buffer("inv_weights", inv, persistent=False)
        self.register_buffer("haar", haar.m.clone(), persistent=False)

        k, b = cfg.blocks_k, cfg.block_dim
        blocks = torch.eye(b).expand(k, side, side, b, b).clone()
        noise = torch.empty_like(blocks)
        nn.init.trunc_normal_(noise, std=0.02)
        self.blocks = nn.Parameter(blocks + noise)

        self.k = k
        self.mode = cfg.wavelet_mode
        self.mask_dc = cfg.mask_dc
        self.inverse = not cfg.has("no_inverse")
        self.wavelet_cfg = cfg.wavelet_neuron()
        self.fwd1 = make_neuron(self.wavelet_cfg)
        self.fwd2 = make_neuron(self.wavelet_cfg)
        self.respike = make_neuron(self.wavelet_cfg)
        self.inv1 = make_neuron(self.wavelet_cfg)
        self.ctx = ctx
        self.name = name

    def zero_init(self) -> None:
        with torch.no_grad():
            self.blocks.zero_()

    def _blockdiag(self, x: torch.Tensor, scale: float) -> torch.Tensor:
        t, b, d, h, w = x.shape
        grid = reshape_for_blocks(x.flatten(0, 1), self.k)
        grid = grid.reshape(self.k, t * b, d // self.k, h, w)
        y = BlockDiagSpikeFn.apply(grid, self.blocks * scale)
        y = restore_from_blocks(y.reshape(self.k * t * b, d // self.k, h, w), self.k)
        return y.unflatten(0, (t, b))

    def _observe(self, stage: str, x: torch.Tensor, macs: int) -> None:
        site = f"{self.name}.fl.{stage}"
        self.ctx.audit.record(site, x)
        if self.ctx.trace is not None:
            self.ctx.trace.record_op(site, x, macs)

    def _exact(self, s: torch.Tensor) -> torch.Tensor:
        m = self.haar.to(s.dtype)
        coeffs = m @ s @ m.T
        if self.mask_dc:
            coeffs = self._zero_dc(coeffs)
        y = self._blockdiag(coeffs, 1.0)
        if not self.inverse:
            return y
        return m.T @ y @ m

    def _zero_dc(self, x: torch.Tensor) -> torch.Tensor:
        dc = torch.zeros(x.shape[-2:], dtype=torch.bool, device=x.device)
        dc[0, 0] = True
        return x.masked_fill(dc, 0.0)

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        if self.mode == "exact":
            return self._exact(s)

        d, h, w = s.shape[2:]
        v_th = self.wavelet_cfg.v_th
        row_macs = d * h * w * w
        block_macs = d * (d // self.k) * h * w

        self._observe("haar1", s, row_macs)
        s1 = self.fwd1(haar_stage(s, self.fwd_weights, "row"))
        self._observe("haar2", s1, row_macs)
        s2 = self.fwd2(haar_stage(s1, self.fwd_weights * v_th, "col"))
        if self.mask_dc:
            s2 = self._zero_dc(s2)

        self._observe("blockdiag", s2, block_macs)
        u = self._blockdiag(s2, v_th)
        if not self.inverse:
            return u

        s3 = self.respike(u)
        self._observe("ihaar1", s3, row_macs)
        s4 = self.inv1(haar_stage(s3, self.inv_weights * v_th, "row"))
        self._observe("ihaar2", s4, row_macs)
        return haar_stage(s4, self.inv_weights * v_th, "col")


# ============================================================
# MIXERS
# ============================================================


class FATM(nn.Module):
    """
    Standard: U = FL(S) + SL(S) + CM(S).
    DVS: optional token max-pool, then U = FL(S) + SL(S') + CM(S') with
    S' = Spk(FL(S)).
    """

    def __init__(self, cfg: ModelConfig, ctx: ForwardContext, name: str) -> None:
        super().__init__()
        d, k = cfg.embed_dim, cfg.blocks_k
        self.fl: Optional[FrequencyLearner] = (
            None if cfg.has("no_haar") else FrequencyLearner(cfg, ctx, name)
        )
        self.sl = ConvBN(d, d, 3, groups=k, ctx=ctx, site=f"{name}.sl")
        self.cm = ConvBN(d, d, 1, groups=k, ctx=ctx, site=f"{name}.cm")
        self.dvs = cfg.variant == "dvs"
        self.pool = self.dvs and not cfg.has("no_pool")
        self.fl_neuron = make_neuron(cfg.neuron) if self.dvs and self.fl is not None else None
        self.ctx = ctx
        self.name = name

    def zero_init(self) -> None:
        if self.fl is not None:
            self.fl.zero_init()
        self.sl.zero_init()
        self.cm.zero_init()

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        if self.pool:
            s = token_max_pool(s)
        u_fl = self.fl(s) if self.fl is not None else None
        branch_in = self.fl_neuron(u_fl) if self.fl_neuron is not None else s
        u_sl = self.sl(branch_in)
        u_cm = self.cm(branch_in)

        trace = self.ctx.trace
        if trace is not None:
            if u_fl is not None:
                trace.record_feature(f"{self.name}.fl", u_fl)
            trace.record_feature(f"{self.name}.sl", u_sl)
            trace.record_feature(f"{self.name}.cm", u_cm)

        u = u_sl + u_cm
        return u if u_fl is None else u_fl + u


class GlobalMeanMixer(nn.Module):
    """
    Control mixer: 1x1 ConvBN of the token mean broadcast to every token.
    Token means are real-valued, so the projection is traced as a dense
    (MAC-costed) layer and stays out of the spike audit.
    """

    def __init__(self, cfg: ModelConfig, ctx: ForwardContext, name: str) -> None:
        super().__init__()
        self.proj = ConvBN(cfg.embed_dim, cfg.embed_dim, 1, ctx=ctx, site=f"{name}.proj", encoding=True)

    def zero_init(self) -> None:
        self.proj.zero_init()

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        mean = s.mean(dim=(-2, -1), keepdim=True).expand_as(s)
        return self.proj(mean.contiguous())


def build_mixer(cfg: ModelConfig, ctx: ForwardContext, name: str) -> nn.Module:
    if cfg.mixer == "global_mean":
        return GlobalMeanMixer(cfg, ctx, name)
    return FATM(cfg, ctx, name)
