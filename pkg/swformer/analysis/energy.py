"""
Synaptic-operation counting and energy estimates from an activation trace.

Per layer and per input sample:
    SOPs   = (nonzero input activations over all timesteps) x fan-out
    energy = E_AC x SOPs                 for spike-driven layers
             E_MAC x MACs x T            for the encoding layer (real-valued pixels)
    ANN    = E_MAC x MACs                the same layer in a single-pass non-spiking network

Constants are in pJ per operation; energies are reported in mJ.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Optional

import torch

from swformer.config import settings
from swformer.errors import DimensionError, PreconditionError
from swformer.models import EnergyReport, LayerEnergy, ModelConfig
from swformer.network.swformer import SWformer
from swformer.network.trace import LayerActivationTrace
from swformer.reports import write_json

logger = logging.getLogger(__name__)

PJ_TO_MJ = 1e-9


def trace_model(model: SWformer, inputs: torch.Tensor) -> LayerActivationTrace:
    """Traced eval-mode forward pass without gradients."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        _, trace = model(inputs.to(dtype), trace=True)
    model.train(was_training)
    return trace


def count_sops(
    trace: Optional[LayerActivationTrace],
    model_cfg: ModelConfig,
    e_mac_pj: Optional[float] = None,
    e_ac_pj: Optional[float] = None,
) -> EnergyReport:
    if trace is None or not trace.ops:
        raise PreconditionError("count_sops needs a trace captured with instrumentation enabled")
    e_mac = settings.SWF_E_MAC_PJ if e_mac_pj is None else e_mac_pj
    e_ac = settings.SWF_E_AC_PJ if e_ac_pj is None else e_ac_pj

    layers = []
    for op in trace.ops.values():
        if op.timesteps != model_cfg.timesteps:
            raise DimensionError(
                f"layer {op.name} was traced over {op.timesteps} timesteps, config has {model_cfg.timesteps}"
            )
        per_sample = op.input_nonzero / op.batch
        firing_rate = op.input_nonzero / (op.batch * op.timesteps * op.neurons) if op.neurons else 0.0
        ann_energy = e_mac * op.macs * PJ_TO_MJ
        if op.kind == "encoding":
            sops = 0.0
            energy = e_mac * op.macs * op.timesteps * PJ_TO_MJ
        else:
            sops = per_sample * op.fan_out
            energy = e_ac * sops * PJ_TO_MJ
        layers.append(
            LayerEnergy(
                name=op.name,
                kind=op.kind,
                fan_out=op.fan_out,
                timesteps=op.timesteps,
                neurons=op.neurons,
                firing_rate=min(1.0, firing_rate),
                sops=sops,
                macs=float(op.macs),
                energy_mj=energy,
                ann_energy_mj=ann_energy,
            )
        )

    report = EnergyReport(
        layers=layers,
        total_sops=sum(l.sops for l in layers),
        total_macs=sum(l.macs for l in layers),
        total_energy_mj=sum(l.energy_mj for l in layers),
        ann_energy_mj=sum(l.ann_energy_mj for l in layers),
        e_mac_pj=e_mac,
        e_ac_pj=e_ac,
    )
    logger.info(
        "Energy: %.4g SOPs, %.4g mJ spiking vs %.4g mJ non-spiking per sample",
        report.total_sops, report.total_energy_mj, report.ann_energy_mj,
    )
    return report


def sops_matching(report: EnergyReport, fragment: str) -> float:
    """Total SOPs of the layers whose name contains `fragment` (".fl." selects the wavelet path)."""
    return sum(l.sops for l in report.layers if fragment in l.name)


def energy_ratio(report: EnergyReport) -> float:
    """Non-spiking over spiking energy."""
    return report.ann_energy_mj / report.total_energy_mj if report.total_energy_mj else float("inf")


def write_energy_report(report: EnergyReport, path: Path) -> Path:
    data = report.model_dump(mode="json")
    data["ann_to_snn_ratio"] = energy_ratio(report)
    return write_json(path, data)


def layer_table(report: EnergyReport) -> Iterable[str]:
    for l in report.layers:
        yield f"{l.name:<24} {l.kind:<8} rate={l.firing_rate:.3f} sops={l.sops:.4g} E={l.energy_mj:.4g} mJ"
