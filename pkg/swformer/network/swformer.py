"""
SWformer: spiking patch splitting, encoder blocks with membrane shortcuts,
and the classification head.

    U_0 = SPS(I) + RPE
    U_l = Mixer(S_{l-1}) + U_{l-1}
    U'_l = U_l + MLP(Spk(U_l)),  S_l = Spk(U'_l)
    Y = Head(GAP(S_M))

Activations are laid out [T, B, D, h, w]; the N = h*w tokens keep their grid
positions because the frequency learner needs them.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Tuple, Union

import torch
from torch import nn

from swformer.core.neurons import make_neuron
from swformer.errors import ConfigurationError, DimensionError
from swformer.models import ModelConfig
from swformer.network.fatm import build_mixer
from swformer.network.layers import ConvBN, SpikingMLP
from swformer.network.trace import ForwardContext, LayerActivationTrace

logger = logging.getLogger(__name__)


def sps_channels(cfg: ModelConfig) -> List[int]:
    d = cfg.embed_dim
    return [max(1, d // 8), max(1, d // 4), max(1, d // 2), d]


SPS_STRIDES = (1, 2, 1, 2)


# ============================================================
# SPIKING PATCH SPLITTING
# ============================================================


class SpikingPatchSplitting(nn.Module):
    """Four 3x3 ConvBN stages (stride 2 at stages 2 and 4) plus relative position embedding."""

    def __init__(self, cfg: ModelConfig, ctx: ForwardContext) -> None:
        super().__init__()
        c_in = cfg.in_channels
        self.stages = nn.ModuleList()
        for i, (c_out, stride) in enumerate(zip(sps_channels(cfg), SPS_STRIDES)):
            self.stages.append(
                ConvBN(c_in, c_out, 3, stride=stride, ctx=ctx, site=f"sps.conv{i + 1}", encoding=i == 0)
            )
            c_in = c_out
        self.neurons = nn.ModuleList([make_neuron(cfg.neuron) for _ in range(3)])
        self.rpe_neuron = make_neuron(cfg.neuron) if cfg.use_rpe else None
        self.rpe = ConvBN(cfg.embed_dim, cfg.embed_dim, 3, ctx=ctx, site="sps.rpe") if cfg.use_rpe else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv, neuron in zip(self.stages[:3], self.neurons):
            x = neuron(conv(x))
        u = self.stages[3](x)
        if self.rpe is None:
            return u
        return u + self.rpe(self.rpe_neuron(u))


# ============================================================
# ENCODER BLOCK
# ============================================================


class EncoderBlock(nn.Module):
    def __init__(self, cfg: ModelConfig, ctx: ForwardContext, index: int) -> None:
        super().__init__()
        self.name = f"block{index}"
        self.mixer = build_mixer(cfg, ctx, self.name)
        self.neuron = make_neuron(cfg.neuron)
        self.mlp = SpikingMLP(cfg.embed_dim, cfg.mlp_ratio, cfg.neuron, ctx, f"{self.name}.mlp")
        self.out_neuron = make_neuron(cfg.neuron)
        self.shortcut = cfg.membrane_shortcut
        self.ctx = ctx

    def zero_init(self) -> None:
        self.mixer.zero_init()
        self.mlp.fc2.zero_init()

    def forward(self, u_prev: torch.Tensor, s_prev: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        u_mix = self.mixer(s_prev)
        u = u_mix + u_prev if self.shortcut else u_mix
        u_mlp = self.mlp(self.neuron(u))
        if self.shortcut:
            u_mlp = u + u_mlp
        s = self.out_neuron(u_mlp)

        trace = self.ctx.trace
        if trace is not None:
            trace.record_feature(f"{self.name}.mixer", u_mix)
            trace.record_feature(f"{self.name}.membrane", u_mlp)
            trace.record_feature(f"{self.name}.out", s)
        return u_mlp, s


# ============================================================
# MODEL
# ============================================================


class SWformer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.ctx = ForwardContext()
        self.sps = SpikingPatchSplitting(cfg, self.ctx)
        self.sps_neuron = make_neuron(cfg.neuron)
        self.blocks = nn.ModuleList([EncoderBlock(cfg, self.ctx, l) for l in range(1, cfg.depth + 1)])
        self.head = nn.Linear(cfg.embed_dim, cfg.num_classes)
        if cfg.zero_init_branches:
            self.zero_init_branches()

    @property
    def audit(self):
        return self.ctx.audit

    def zero_init_branches(self) -> None:
        """Zero every branch output so each block starts as an identity on membranes."""
        for block in self.blocks:
            block.zero_init()

    def prepare_input(self, images: torch.Tensor) -> torch.Tensor:
        """[B, C, H, W] static images are repeated T times; [T, B, C, H, W] passes through."""
        cfg = self.cfg
        if images.dim() == 4:
            images = images.unsqueeze(0).expand(cfg.timesteps, *images.shape)
        elif images.dim() != 5:
            raise DimensionError(f"expected [B, C, H, W] or [T, B, C, H, W], got {tuple(images.shape)}")
        t, _, c, h, w = images.shape
        if t != cfg.timesteps:
            raise DimensionError(f"input has {t} timesteps, model expects {cfg.timesteps}")
        if c != cfg.in_channels:
            raise DimensionError(f"input has {c} channels, model expects {cfg.in_channels}")
        if h % 4 or w % 4:
            raise ConfigurationError(f"spatial extent {(h, w)} is not divisible by the patching factor 4")
        if (h, w) != tuple(cfg.input_size):
            raise DimensionError(f"input size {(h, w)} does not match configured {tuple(cfg.input_size)}")
        return images

    def sps_forward(self, images: torch.Tensor) -> torch.Tensor:
        """U_0 laid out [T, B, D, H/4, W/4]."""
        return self.sps(self.prepare_input(images))

    @staticmethod
    def to_tokens(u: torch.Tensor) -> torch.Tensor:
        """[T, B, D, h, w] -> [T, B, N, D]."""
        return u.flatten(-2).transpose(-1, -2)

    def head_forward(self, s: torch.Tensor) -> torch.Tensor:
        trace = self.ctx.trace
        if trace is not None:
            trace.record_op("head", s, self.cfg.embed_dim * self.cfg.num_classes)
        return self.head(s.mean(dim=(0, 3, 4)))

    def forward(
        self, images: torch.Tensor, trace: bool = False
    ) -> Union[torch.Tensor, Tuple[torch.Tensor, LayerActivationTrace]]:
        self.ctx.trace = LayerActivationTrace() if trace else None
        try:
            u = self.sps_forward(images)
            if self.ctx.trace is not None:
                self.ctx.trace.record_feature("sps", u)
            s = self.sps_neuron(u)
            for block in self.blocks:
                u, s = block(u, s)
            logits = self.head_forward(s)
            recorded: Optional[LayerActivationTrace] = self.ctx.trace
        finally:
            self.ctx.trace = None
        if trace:
            return logits, recorded
        return logits


def calibrate_norm_stats(model: SWformer, images: torch.Tensor) -> SWformer:
    """
    Set every BatchNorm running statistic to the batch statistics of `images`,
    so an untrained model behaves in eval mode as it does in train mode.
    """
    norms = [m for m in model.modules() if isinstance(m, nn.BatchNorm2d)]
    for m in norms:
        m.reset_running_stats()
        m.momentum = None
    was_training = model.training
    model.train()
    with torch.no_grad():
        model(images.to(next(model.parameters()).dtype))
    for m in norms:
        m.momentum = 0.1
    model.train(was_training)
    return model


def build_model(cfg: ModelConfig, seed: Optional[int] = None) -> SWformer:
    if seed is not None:
        torch.manual_seed(seed)
    model = SWformer(cfg)
    logger.info(
        "Built SWformer depth=%d D=%d k=%d T=%d variant=%s mixer=%s ablations=%s (%d params)",
        cfg.depth, cfg.embed_dim, cfg.blocks_k, cfg.timesteps, cfg.variant, cfg.mixer,
        cfg.ablations, count_parameters(model),
    )
    return model


# ============================================================
# PARAMETER COUNTS
# ============================================================


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _conv_bn_params(c_in: int, c_out: int, kernel: int, groups: int = 1) -> int:
    return c_out * (c_in // groups) * kernel * kernel + 2 * c_out


def expected_param_count(cfg: ModelConfig) -> int:
    """Closed-form trainable parameter count of SWformer(cfg)."""
    d, k, c = cfg.embed_dim, cfg.blocks_k, cfg.num_classes
    total = 0
    c_in = cfg.in_channels
    for c_out in sps_channels(cfg):
        total += _conv_bn_params(c_in, c_out, 3)
        c_in = c_out
    if cfg.use_rpe:
        total += _conv_bn_params(d, d, 3)

    if cfg.mixer == "global_mean":
        mixer = _conv_bn_params(d, d, 1)
    else:
        mixer = _conv_bn_params(d, d, 3, k) + _conv_bn_params(d, d, 1, k)
        if not cfg.has("no_haar"):
            mixer += cfg.num_tokens * k * cfg.block_dim * cfg.block_dim
    hidden = d * cfg.mlp_ratio
    mlp = _conv_bn_params(d, hidden, 1) + _conv_bn_params(hidden, d, 1)
    total += cfg.depth * (mixer + mlp)
    return total + d * c + c
