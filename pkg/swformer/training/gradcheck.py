"""
Backprop-vs-finite-difference check of the full model.

Runs in float64 with neurons in smooth mode, where the forward emits the
primitive of the surrogate window. Backprop then differentiates exactly the
function the central differences measure. BatchNorm statistics are calibrated
on the check batch before switching to eval mode, so activations sit inside
the surrogate windows and the checked gradients are not trivially zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch
import torch.nn.functional as F

from swformer.core.neurons import set_spiking_mode
from swformer.models import ModelConfig, NeuronConfig
from swformer.network.swformer import SWformer, calibrate_norm_stats

logger = logging.getLogger(__name__)

DEFAULT_PARAMS = ("sps.stages.0.conv.weight", "sps.stages.3.conv.weight", "blocks.0.mixer.fl.blocks")


@dataclass
class GradCheckReport:
    checked: int = 0
    passed: int = 0
    nonzero: int = 0
    worst_rel_error: float = 0.0
    failures: List[Tuple[str, int, float, float]] = field(default_factory=list)

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.checked if self.checked else 0.0

    @property
    def nonzero_fraction(self) -> float:
        """Share of checked entries whose backprop gradient is nonzero."""
        return self.nonzero / self.checked if self.checked else 0.0


def tiny_config() -> ModelConfig:
    """M=1, D=8, 4x4 tokens, T=2, surrogate half-width 1."""
    return ModelConfig(
        depth=1, embed_dim=8, blocks_k=2, timesteps=2, input_size=(16, 16), in_channels=1, num_classes=3,
        neuron=NeuronConfig(surrogate_width=1.0),
    )


def gradient_check(
    cfg: Optional[ModelConfig] = None,
    param_names: Tuple[str, ...] = DEFAULT_PARAMS,
    samples_per_param: int = 8,
    h: float = 1e-6,
    rel_tol: float = 2e-2,
    abs_tol: float = 1e-10,
    batch: int = 8,
    seed: int = 0,
) -> GradCheckReport:
    cfg = cfg or tiny_config()
    torch.manual_seed(seed)
    model = SWformer(cfg).double()
    set_spiking_mode(model, False)

    generator = torch.Generator().manual_seed(seed)
    h_in, w_in = cfg.input_size
    x = torch.rand(batch, cfg.in_channels, h_in, w_in, generator=generator, dtype=torch.float64)
    y = torch.randint(0, cfg.num_classes, (batch,), generator=generator)
    calibrate_norm_stats(model, x)
    model.eval()

    def loss_fn() -> torch.Tensor:
        return F.cross_entropy(model(x), y)

    model.zero_grad()
    loss_fn().backward()

    params = dict(model.named_parameters())
    report = GradCheckReport()
    for name in param_names:
        p = params[name]
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        picks = torch.randperm(flat.numel(), generator=generator)[:samples_per_param]
        for i in picks.tolist():
            original = float(flat[i])
            with torch.no_grad():
                flat[i] = original + h
                plus = float(loss_fn())
                flat[i] = original - h
                minus = float(loss_fn())
                flat[i] = original
            fd = (plus - minus) / (2 * h)
            bp = float(grad[i])
            err = abs(fd - bp)
            scale = max(abs(fd), abs(bp))
            rel = err / scale if scale > 0 else 0.0
            report.checked += 1
            if bp != 0.0:
                report.nonzero += 1
            if err <= rel_tol * scale + abs_tol:
                report.passed += 1
            else:
                report.failures.append((name, i, fd, bp))
                report.worst_rel_error = max(report.worst_rel_error, rel)

    logger.info(
        "Gradient check: %d/%d entries within tolerance, %d nonzero (worst failing rel error %.3g)",
        report.passed, report.checked, report.nonzero, report.worst_rel_error,
    )
    return report
