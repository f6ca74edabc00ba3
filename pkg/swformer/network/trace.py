"""
Forward-pass instrumentation: activation traces and the spike-driven audit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import torch

from swformer.core.spike_core import is_ternary
from swformer.errors import PreconditionError

logger = logging.getLogger(__name__)


# ============================================================
# ACTIVATION TRACE
# ============================================================


@dataclass
class OpRecord:
    """
    Activity at one weighted connection during a traced forward pass.

    `input_nonzero` is summed over batch and timesteps. `neurons` and `macs`
    are per sample and per timestep.
    """

    name: str
    kind: Literal["encoding", "spiking"]
    input_nonzero: int
    neurons: int
    fan_out: float
    macs: int
    timesteps: int
    batch: int


@dataclass
class LayerActivationTrace:
    """Per-layer feature maps [T, B, C, h, w] and connection activity, keyed by name."""

    features: Dict[str, torch.Tensor] = field(default_factory=dict)
    ops: Dict[str, OpRecord] = field(default_factory=dict)

    def record_feature(self, name: str, x: torch.Tensor) -> None:
        self.features[name] = x.detach().clone()

    def record_op(
        self,
        name: str,
        x: torch.Tensor,
        macs: int,
        kind: Literal["encoding", "spiking"] = "spiking",
    ) -> None:
        """Record input x [T, B, ...] entering a connection with `macs` dense MACs per sample per step."""
        timesteps, batch = x.shape[0], x.shape[1]
        neurons = int(x[0, 0].numel())
        self.ops[name] = OpRecord(
            name=name,
            kind=kind,
            input_nonzero=int((x.detach() != 0).sum()),
            neurons=neurons,
            fan_out=macs / neurons if neurons else 0.0,
            macs=int(macs),
            timesteps=timesteps,
            batch=batch,
        )

    def feature(self, name: str) -> torch.Tensor:
        if name not in self.features:
            raise PreconditionError(
                f"layer {name!r} not in trace (available: {', '.join(self.features)})"
            )
        return self.features[name]

    @property
    def names(self) -> List[str]:
        return list(self.features)


# ============================================================
# SPIKE-DRIVEN AUDIT
# ============================================================


class SpikeAudit:
    """Records whether the activation operand at each product site was spike-valued."""

    def __init__(self) -> None:
        self.enabled = False
        self.records: List[Tuple[str, bool]] = []

    def record(self, site: str, x: torch.Tensor) -> None:
        if self.enabled:
            self.records.append((site, is_ternary(x.detach())))

    def violations(self) -> List[str]:
        return [site for site, ok in self.records if not ok]

    def sites(self) -> List[str]:
        return sorted({site for site, _ in self.records})


@dataclass
class ForwardContext:
    """Instrumentation shared by every layer of one model."""

    audit: SpikeAudit = field(default_factory=SpikeAudit)
    trace: Optional[LayerActivationTrace] = None
