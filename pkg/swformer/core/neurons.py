"""
LIF, IF and ternary-IF neurons.

Step functions thread a MembraneState through one timestep:
    U = V_prev + I
    s = spike(U)
    V = reset(U, s)

Spikes go through autograd functions whose backward is a rectangular
surrogate window. In smooth mode the forward emits the primitive of that
window instead (a clamped ramp), so backprop and finite differences agree.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import torch
from torch import nn

from swformer.core.spike_core import SpikeTensor
from swformer.errors import ConfigurationError, DimensionError
from swformer.models import NeuronConfig, Polarity

logger = logging.getLogger(__name__)


# ============================================================
# SURROGATE SPIKE FUNCTIONS
# ============================================================


def _window(x: torch.Tensor, width: float) -> torch.Tensor:
    return (x.abs() < width).to(x) / (2.0 * width)


class RectangularSpike(torch.autograd.Function):
    """Heaviside forward (H(0) = 1), rectangular-window backward."""

    @staticmethod
    def forward(ctx, x: torch.Tensor, width: float) -> torch.Tensor:
        ctx.save_for_backward(x)
        ctx.width = width
        return (x >= 0).to(x)

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor):
        (x,) = ctx.saved_tensors
        return grad_output * _window(x, ctx.width), None


class TernaryRectangularSpike(torch.autograd.Function):
    """+1 at U >= v_th, -1 at U <= -v_th, else 0; windows around both thresholds."""

    @staticmethod
    def forward(ctx, u: torch.Tensor, v_th: float, width: float) -> torch.Tensor:
        ctx.save_for_backward(u)
        ctx.v_th = v_th
        ctx.width = width
        return (u >= v_th).to(u) - (u <= -v_th).to(u)

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor):
        (u,) = ctx.saved_tensors
        grad = _window(u - ctx.v_th, ctx.width) + _window(u + ctx.v_th, ctx.width)
        return grad_output * grad, None, None


def binary_spike(x: torch.Tensor, width: float, spiking: bool = True) -> torch.Tensor:
    """Spike on x = U - v_th."""
    if spiking:
        return RectangularSpike.apply(x, width)
    return torch.clamp((x + width) / (2.0 * width), 0.0, 1.0)


def ternary_spike(u: torch.Tensor, v_th: float, width: float, spiking: bool = True) -> torch.Tensor:
    if spiking:
        return TernaryRectangularSpike.apply(u, v_th, width)
    pos = torch.clamp((u - v_th + width) / (2.0 * width), 0.0, 1.0)
    neg = torch.clamp((-u - v_th + width) / (2.0 * width), 0.0, 1.0)
    return pos - neg


def surrogate_grad(
    u_minus_vth: Union[float, torch.Tensor], cfg: NeuronConfig
) -> Union[float, torch.Tensor]:
    """
    ds/dU under the rectangular surrogate, evaluated at u - v_th.

    Ternary neurons add the mirrored window around -v_th, i.e. at
    u + v_th = (u - v_th) + 2 v_th.
    """
    scalar = not isinstance(u_minus_vth, torch.Tensor)
    x = torch.as_tensor(u_minus_vth, dtype=torch.float64)
    grad = _window(x, cfg.surrogate_width)
    if cfg.polarity == Polarity.TERNARY:
        grad = grad + _window(x + 2.0 * cfg.v_th, cfg.surrogate_width)
    return float(grad) if scalar else grad


# ============================================================
# MEMBRANE STATE & STEP FUNCTIONS
# ============================================================


@dataclass
class MembraneState:
    """Integrated potential U[n] and carried potential V[n]."""

    u: torch.Tensor
    v: torch.Tensor

    def __post_init__(self) -> None:
        if self.u.shape != self.v.shape:
            raise DimensionError(f"u {tuple(self.u.shape)} and v {tuple(self.v.shape)} differ")

    @classmethod
    def zeros_like(cls, x: torch.Tensor) -> "MembraneState":
        z = torch.zeros_like(x)
        return cls(u=z, v=z)


def _check_input(state: MembraneState, current: torch.Tensor) -> None:
    if current.shape != state.v.shape:
        raise DimensionError(
            f"input shape {tuple(current.shape)} does not match state {tuple(state.v.shape)}"
        )


def lif_step(
    state: MembraneState, current: torch.Tensor, cfg: NeuronConfig, spiking: bool = True
) -> Tuple[torch.Tensor, MembraneState]:
    """Binary LIF step; beta = 1 gives IF dynamics."""
    _check_input(state, current)
    if cfg.polarity != Polarity.BINARY:
        raise ConfigurationError("lif_step emits binary spikes; use ternary_if_step for ternary neurons")
    u = state.v + current
    s = binary_spike(u - cfg.v_th, cfg.surrogate_width, spiking)
    if cfg.effective_reset == "hard":
        v = cfg.v_reset * s + cfg.beta * u * (1.0 - s)
    else:
        v = cfg.beta * u * (1.0 - s) + (u - cfg.v_th) * s
    return s, MembraneState(u=u, v=v)


def ternary_if_step(
    state: MembraneState, current: torch.Tensor, cfg: NeuronConfig, spiking: bool = True
) -> Tuple[torch.Tensor, MembraneState]:
    """
    Ternary IF step with the symmetric dual threshold.

    Subtraction reset (V = U - s*v_th) by default; reset_mode="hard" applies
    V = v_reset*s + U*(1 - s) verbatim, which drifts for s = -1.
    """
    _check_input(state, current)
    if cfg.polarity != Polarity.TERNARY:
        raise ConfigurationError("ternary_if_step needs ternary polarity")
    if cfg.beta != 1.0:
        raise ConfigurationError(f"ternary neurons use IF dynamics (beta=1), got beta={cfg.beta}")
    u = state.v + current
    s = ternary_spike(u, cfg.v_th, cfg.surrogate_width, spiking)
    if cfg.effective_reset == "hard":
        v = cfg.v_reset * s + u * (1.0 - s)
    else:
        v = u - s * cfg.v_th
    return s, MembraneState(u=u, v=v)


StepFn = Callable[..., Tuple[torch.Tensor, MembraneState]]


def step_for(cfg: NeuronConfig) -> StepFn:
    return ternary_if_step if cfg.polarity == Polarity.TERNARY else lif_step


# ============================================================
# LAYERS
# ============================================================


class SpikingNeuron(nn.Module):
    """
    Multi-step neuron layer over a leading time axis [T, ...].

    State is reset to zero at the start of every call. When `record` is set the
    integrated potentials of the last call are kept in `last_membrane`.
    """

    def __init__(self, cfg: NeuronConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.spiking = True
        self.record = False
        self.last_membrane: Optional[torch.Tensor] = None
        self._step = step_for(cfg)

    @property
    def polarity(self) -> Polarity:
        return self.cfg.polarity

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        state = MembraneState.zeros_like(x[0])
        spikes = []
        potentials = []
        for t in range(x.shape[0]):
            s, state = self._step(state, x[t], self.cfg, self.spiking)
            spikes.append(s)
            if self.record:
                potentials.append(state.u.detach())
        self.last_membrane = torch.stack(potentials) if self.record else None
        return torch.stack(spikes)

    def extra_repr(self) -> str:
        return (
            f"v_th={self.cfg.v_th}, beta={self.cfg.beta}, polarity={self.cfg.polarity.value}, "
            f"reset={self.cfg.effective_reset}, spiking={self.spiking}"
        )


class LIFNode(SpikingNeuron):
    def __init__(self, cfg: NeuronConfig) -> None:
        if cfg.polarity != Polarity.BINARY:
            raise ConfigurationError("LIFNode is binary")
        super().__init__(cfg)


class TernaryIFNode(SpikingNeuron):
    def __init__(self, cfg: NeuronConfig) -> None:
        if cfg.polarity != Polarity.TERNARY or cfg.beta != 1.0:
            raise ConfigurationError("TernaryIFNode needs ternary polarity and beta=1")
        super().__init__(cfg)


def make_neuron(cfg: NeuronConfig) -> SpikingNeuron:
    return TernaryIFNode(cfg) if cfg.polarity == Polarity.TERNARY else LIFNode(cfg)


def set_spiking_mode(module: nn.Module, spiking: bool) -> None:
    """Switch every neuron under `module` between spikes and the smooth primitive."""
    for m in module.modules():
        if isinstance(m, SpikingNeuron):
            m.spiking = spiking


def run_sequence(layer: Union[SpikingNeuron, NeuronConfig], inputs: torch.Tensor) -> SpikeTensor:
    """Run a fresh neuron layer over inputs [T, ...] and return its spike train."""
    if isinstance(layer, NeuronConfig):
        layer = make_neuron(layer)
    with torch.no_grad():
        spikes = layer(inputs)
    return SpikeTensor(spikes, layer.polarity)


RATE_ENCODER = NeuronConfig(v_th=1.0, beta=1.0, polarity=Polarity.BINARY, reset_mode="subtract")


def rate_encode(image: torch.Tensor, timesteps: int) -> SpikeTensor:
    """Deterministic rate code: an IF encoder driven by the pixel value every step."""
    if timesteps < 1:
        raise ConfigurationError(f"timesteps must be >= 1, got {timesteps}")
    drive = image.unsqueeze(0).expand(timesteps, *image.shape)
    return run_sequence(RATE_ENCODER, drive)
