"""
Ablation harness: train the base configuration and one variant per flag,
optionally across several seeds, and tabulate the outcomes.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from swformer.data.datasets import Dataset
from swformer.errors import ConfigurationError
from swformer.models import ModelConfig, RunRecord, TrainConfig
from swformer.reports import write_csv, write_json
from swformer.training.trainer import train

logger = logging.getLogger(__name__)

ARCH_FLAGS = ("no_haar", "no_inverse", "no_neg", "no_pool")
EXTRA_FLAGS = ("mask_dc", "exact_wavelet", "global_mean")


@dataclass
class AblationRow:
    variant: str
    seed: int
    accuracy: float
    final_train_loss: Optional[float]
    final_train_accuracy: Optional[float]
    epochs_run: int


@dataclass
class AblationTable:
    rows: List[AblationRow] = field(default_factory=list)
    records: Dict[str, List[RunRecord]] = field(default_factory=dict)

    @property
    def variants(self) -> List[str]:
        return list(dict.fromkeys(r.variant for r in self.rows))

    def mean_accuracy(self, variant: str) -> float:
        values = [r.accuracy for r in self.rows if r.variant == variant]
        return sum(values) / len(values)


def variant_config(base: ModelConfig, flag: str) -> ModelConfig:
    """Base config with exactly one flag switched on."""
    data = base.model_dump()
    if flag in ARCH_FLAGS:
        data["ablations"] = list(base.ablations) + [flag]
    elif flag == "mask_dc":
        data["mask_dc"] = True
    elif flag == "exact_wavelet":
        data["wavelet_mode"] = "exact"
    elif flag == "global_mean":
        data["mixer"] = "global_mean"
    else:
        raise ConfigurationError(
            f"unknown ablation flag {flag!r} (known: {', '.join(ARCH_FLAGS + EXTRA_FLAGS)})"
        )
    return ModelConfig.model_validate(data)


def _score(record: RunRecord) -> float:
    if record.test_accuracy is not None:
        return record.test_accuracy
    val = record.final("val")
    if val is not None:
        return val.accuracy
    train_rec = record.final("train")
    return train_rec.accuracy if train_rec else 0.0


def run_ablation_suite(
    base: ModelConfig,
    flags: Sequence[str],
    train_cfg: TrainConfig,
    data: Dataset,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Optional[Path] = None,
) -> AblationTable:
    """One trained run per (variant, seed); base is always first."""
    variants = [("base", base)] + [(flag, variant_config(base, flag)) for flag in flags]
    seeds = list(seeds) if seeds else [train_cfg.seed]
    table = AblationTable()

    for name, cfg in variants:
        for seed in seeds:
            logger.info("Ablation variant %s, seed %d", name, seed)
            run_cfg = train_cfg.model_copy(update={"seed": seed})
            _, record = train(cfg, run_cfg, data)
            train_rec = record.final("train")
            table.rows.append(
                AblationRow(
                    variant=name,
                    seed=seed,
                    accuracy=_score(record),
                    final_train_loss=train_rec.loss if train_rec else None,
                    final_train_accuracy=train_rec.accuracy if train_rec else None,
                    epochs_run=record.summary()["epochs_run"],
                )
            )
            table.records.setdefault(name, []).append(record)

    for name in table.variants:
        logger.info("Variant %-12s mean accuracy %.4f", name, table.mean_accuracy(name))

    if out_dir is not None:
        write_ablation_table(table, Path(out_dir))
    return table


def write_ablation_table(table: AblationTable, out_dir: Path) -> None:
    header = list(AblationRow.__dataclass_fields__)
    write_csv(out_dir / "ablation.csv", header, [[asdict(r)[h] for h in header] for r in table.rows])
    write_csv(
        out_dir / "ablation_means.csv",
        ["variant", "runs", "mean_accuracy"],
        [
            (v, sum(1 for r in table.rows if r.variant == v), table.mean_accuracy(v))
            for v in table.variants
        ],
    )
    write_json(out_dir / "ablation_summary.json", {"rows": [asdict(r) for r in table.rows]})
