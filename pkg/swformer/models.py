"""
Pydantic models for run configuration, training records and analysis reports.
"""

from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from swformer.config import settings


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# ============================================================
# NEURON MODELS
# ============================================================


class Polarity(str, Enum):
    """Spike alphabet: binary {0, 1} or ternary {-1, 0, 1}."""

    BINARY = "binary"
    TERNARY = "ternary"


class NeuronConfig(BaseModel):
    """Spiking neuron parameters (threshold, reset, leak, surrogate window)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    v_th: float = Field(1.0, gt=0, description="Firing threshold")
    v_reset: float = Field(0.0, description="Hard-reset potential")
    beta: float = Field(0.5, gt=0, le=1, description="Leak factor; 1 gives IF dynamics")
    polarity: Polarity = Polarity.BINARY
    surrogate_width: float = Field(0.5, gt=0, description="Half-width of the rectangular surrogate")
    reset_mode: Optional[Literal["hard", "subtract"]] = Field(
        default=None,
        description="None picks hard reset for binary and subtraction for ternary neurons",
    )

    @property
    def effective_reset(self) -> str:
        if self.reset_mode is not None:
            return self.reset_mode
        return "subtract" if self.polarity == Polarity.TERNARY else "hard"


# ============================================================
# MODEL CONFIG
# ============================================================

Ablation = Literal["no_haar", "no_inverse", "no_neg", "no_pool"]


class ModelConfig(BaseModel):
    """Full SWformer architecture description"""

    model_config = ConfigDict(extra="forbid")

    depth: int = Field(2, ge=1, description="Encoder block count M")
    embed_dim: int = Field(32, ge=1, description="Channels D")
    blocks_k: int = Field(2, ge=1, description="Weight-splitting blocks k")
    timesteps: int = Field(4, ge=1, description="Timesteps T")
    input_size: Tuple[int, int] = (32, 32)
    in_channels: int = Field(1, ge=1)
    num_classes: int = Field(10, ge=2)
    neuron: NeuronConfig = Field(default_factory=NeuronConfig)
    wavelet_v_th: float = Field(1.0, gt=0, description="Threshold of the neurons in the wavelet path")
    wavelet_mode: Literal["spiking", "exact"] = "spiking"
    variant: Literal["standard", "dvs"] = "standard"
    mask_dc: bool = False
    ablations: List[Ablation] = Field(default_factory=list)
    mixer: Literal["fatm", "global_mean"] = "fatm"
    mlp_ratio: int = Field(4, ge=1)
    use_rpe: bool = True
    membrane_shortcut: bool = True
    zero_init_branches: bool = False

    @field_validator("ablations")
    @classmethod
    def _unique_ablations(cls, v: List[str]) -> List[str]:
        return sorted(set(v))

    @model_validator(mode="after")
    def _check_geometry(self) -> "ModelConfig":
        if self.embed_dim % self.blocks_k != 0:
            raise ValueError(
                f"embed_dim={self.embed_dim} is not divisible by blocks_k={self.blocks_k}"
            )
        h, w = self.input_size
        if h % 4 or w % 4:
            raise ValueError(f"input_size {self.input_size} is not divisible by the patching factor 4")
        if h != w:
            raise ValueError(f"input_size {self.input_size} must be square for the Haar transform")
        if not is_power_of_two(h // 4):
            raise ValueError(f"token grid side {h // 4} is not a power of two")
        return self

    @property
    def token_side(self) -> int:
        return self.input_size[0] // 4

    @property
    def num_tokens(self) -> int:
        return self.token_side * self.token_side

    @property
    def block_dim(self) -> int:
        return self.embed_dim // self.blocks_k

    def has(self, ablation: str) -> bool:
        return ablation in self.ablations

    def wavelet_neuron(self) -> NeuronConfig:
        """IF neurons of the wavelet path (beta fixed to 1)."""
        polarity = Polarity.BINARY if self.has("no_neg") else Polarity.TERNARY
        return NeuronConfig(
            v_th=self.wavelet_v_th,
            beta=1.0,
            polarity=polarity,
            surrogate_width=self.neuron.surrogate_width,
            reset_mode="subtract",
        )


# ============================================================
# TRAINING / DATA / ANALYSIS CONFIG
# ============================================================


class TrainConfig(BaseModel):
    """Optimizer, schedule and reproducibility settings"""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(10, ge=0)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(1e-3, ge=0)
    weight_decay: float = Field(0.01, ge=0)
    optimizer: Literal["adamw", "sgd_momentum"] = "adamw"
    momentum: float = Field(0.9, ge=0, lt=1)
    lr_schedule: Literal["cosine", "constant"] = "cosine"
    seed: int = 0
    augment: bool = False
    stop_at_train_accuracy: Optional[float] = Field(default=None, gt=0, le=1)
    max_train_samples: Optional[int] = Field(default=None, ge=1)


class DataConfig(BaseModel):
    """Where samples come from and how they are split"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["synthetic_patterns", "synthetic_edges", "idx", "cifar", "event_csv", "cache"] = (
        "synthetic_patterns"
    )
    name: str = "synthetic"
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_files: List[str] = Field(default_factory=list)
    test_files: List[str] = Field(default_factory=list)
    event_labels: List[int] = Field(default_factory=list)
    sensor_size: Tuple[int, int] = (32, 32)
    event_window_us: Optional[int] = None
    cache_path: Optional[str] = None
    num_classes: int = Field(4, ge=2)
    samples_per_class: int = Field(32, ge=1)
    image_size: int = Field(16, ge=4)
    max_samples: Optional[int] = Field(default=None, ge=1)
    val_fraction: float = Field(0.1, ge=0, lt=1)
    pad_to_pow2: bool = True
    seed: int = 0


class AnalysisConfig(BaseModel):
    """Spectrum, energy and Haar-bench settings"""

    model_config = ConfigDict(extra="forbid")

    e_mac_pj: float = Field(default_factory=lambda: settings.SWF_E_MAC_PJ, gt=0)
    e_ac_pj: float = Field(default_factory=lambda: settings.SWF_E_AC_PJ, gt=0)
    band: Tuple[float, float] = (0.5, 1.0)
    bench_size: int = Field(16, ge=1)
    bench_images: int = Field(20, ge=1)
    bench_v_th: List[float] = Field(default_factory=lambda: [0.5, 1.0])
    bench_timesteps: int = Field(4, ge=1)
    trace_batch: int = Field(16, ge=1)


class RunConfig(BaseModel):
    """Root of a run configuration file"""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)


# ============================================================
# RUN RECORDS
# ============================================================


class EpochRecord(BaseModel):
    """Loss and accuracy of one split after one epoch"""

    epoch: int = Field(..., ge=0)
    split: Literal["train", "val", "test"]
    loss: float
    accuracy: float = Field(..., ge=0, le=1)


class RunRecord(BaseModel):
    """Outcome of one training run"""

    epochs: List[EpochRecord] = Field(default_factory=list)
    test_accuracy: Optional[float] = Field(default=None, ge=0, le=1)
    wall_clock_s: float = 0.0
    config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _monotone_epochs(self) -> "RunRecord":
        last = -1
        for rec in self.epochs:
            if rec.epoch < last:
                raise ValueError("epoch indices must be non-decreasing")
            last = rec.epoch
        return self

    def final(self, split: str) -> Optional[EpochRecord]:
        rows = [r for r in self.epochs if r.split == split]
        return rows[-1] if rows else None

    def summary(self) -> Dict[str, Any]:
        """Deterministic summary (no wall-clock)."""
        train = self.final("train")
        val = self.final("val")
        return {
            "epochs_run": max((r.epoch for r in self.epochs), default=0),
            "final_train_loss": train.loss if train else None,
            "final_train_accuracy": train.accuracy if train else None,
            "final_val_accuracy": val.accuracy if val else None,
            "test_accuracy": self.test_accuracy,
            "config": self.config,
        }


# ============================================================
# ENERGY REPORT
# ============================================================


class LayerEnergy(BaseModel):
    """Operation counts and energy of one layer, per input sample"""

    name: str
    kind: Literal["encoding", "spiking"]
    fan_out: float = Field(..., description="Dense MACs per input activation")
    timesteps: int
    neurons: int = Field(..., description="Input activations per timestep")
    firing_rate: float = Field(..., ge=0, le=1)
    sops: float = 0.0
    macs: float = Field(0.0, description="MAC count of the same layer in a non-spiking network")
    energy_mj: float = 0.0
    ann_energy_mj: float = 0.0


class EnergyReport(BaseModel):
    """Per-layer synaptic-operation counts and estimated energy"""

    layers: List[LayerEnergy] = Field(default_factory=list)
    total_sops: float = 0.0
    total_macs: float = 0.0
    total_energy_mj: float = 0.0
    ann_energy_mj: float = 0.0
    e_mac_pj: float
    e_ac_pj: float
    constants_note: str = "E_MAC/E_AC in pJ per operation (45 nm convention unless overridden)"


# ============================================================
# CLI
# ============================================================


class CliInvocation(BaseModel):
    """Parsed command line"""

    subcommand: Literal["train", "eval", "haar-bench", "spectrum", "energy", "ablate"]
    config_path: Optional[str] = None
    output_dir: str
    overrides: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    trace: bool = False
