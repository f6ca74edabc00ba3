"""
Supervised training with backpropagation through time and surrogate gradients.

Loss is cross-entropy on time-averaged logits. A seed fixes parameter init,
shuffling and augmentation, so two runs with the same seed produce identical
records and checkpoints.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch
import torch.nn.functional as F

from swformer.config import settings
from swformer.data.datasets import Dataset, InputKind, Split, augment_batch, iterate_batches
from swformer.errors import DivergenceError
from swformer.models import EpochRecord, ModelConfig, RunConfig, RunRecord, TrainConfig
from swformer.network.checkpoint import save_checkpoint
from swformer.network.swformer import SWformer, build_model
from swformer.reports import write_csv, write_json

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64


def make_optimizer(model: SWformer, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "sgd_momentum":
        return torch.optim.SGD(
            model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum, weight_decay=cfg.weight_decay
        )
    return torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)


def make_scheduler(optimizer: torch.optim.Optimizer, cfg: TrainConfig):
    if cfg.lr_schedule == "cosine" and cfg.epochs > 0:
        return torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=cfg.epochs)
    return torch.optim.lr_scheduler.LambdaLR(optimizer, lambda _: 1.0)


# ============================================================
# EVALUATION
# ============================================================


def evaluate_split(
    model: SWformer, split: Split, kind: InputKind, batch_size: int = EVAL_BATCH_SIZE
) -> Tuple[float, float]:
    """(mean loss, top-1 accuracy) in eval mode; the model's train/eval mode is restored."""
    if len(split) == 0:
        return 0.0, 0.0
    was_training = model.training
    model.eval()
    total_loss = 0.0
    correct = 0
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        for x, y in iterate_batches(split, batch_size, kind):
            logits = model(x.to(dtype))
            total_loss += float(F.cross_entropy(logits, y, reduction="sum"))
            correct += int((logits.argmax(dim=-1) == y).sum())
    model.train(was_training)
    return total_loss / len(split), correct / len(split)


def evaluate(model: SWformer, data: Dataset, split: str = "test") -> float:
    """Top-1 accuracy of `model` on one split of `data`."""
    _, accuracy = evaluate_split(model, getattr(data, split), data.kind)
    return accuracy


# ============================================================
# TRAINING
# ============================================================


def _check_loss(loss: torch.Tensor, epoch: int, batch: int, lr: float) -> None:
    if not bool(torch.isfinite(loss)):
        logger.error("Loss diverged at epoch %d batch %d (lr=%g): %s", epoch, batch, lr, float(loss))
        raise DivergenceError(f"non-finite loss {float(loss)} at epoch {epoch}, batch {batch}, lr {lr}")


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    data: Dataset,
    model: Optional[SWformer] = None,
) -> Tuple[SWformer, RunRecord]:
    """Train a fresh (or given) model; returns it with its RunRecord."""
    settings.apply_thread_cap()
    started = time.perf_counter()
    if model is None:
        model = build_model(model_cfg, seed=train_cfg.seed)
    dtype = next(model.parameters()).dtype

    shuffle = torch.Generator().manual_seed(train_cfg.seed)
    augment = torch.Generator().manual_seed(train_cfg.seed + 1)
    optimizer = make_optimizer(model, train_cfg)
    scheduler = make_scheduler(optimizer, train_cfg)
    train_split = data.train.take(train_cfg.max_train_samples)
    do_augment = train_cfg.augment and data.kind == InputKind.STATIC_IMAGE

    record = RunRecord(
        config={"model": model_cfg.model_dump(mode="json"), "train": train_cfg.model_dump(mode="json")}
    )
    epochs = []
    for epoch in range(1, train_cfg.epochs + 1):
        model.train()
        lr = optimizer.param_groups[0]["lr"]
        total_loss = 0.0
        correct = 0
        for batch, (x, y) in enumerate(iterate_batches(train_split, train_cfg.batch_size, data.kind, shuffle)):
            if do_augment:
                x = augment_batch(x, augment)
            logits = model(x.to(dtype))
            loss = F.cross_entropy(logits, y)
            _check_loss(loss, epoch, batch, lr)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += float(loss.detach()) * y.shape[0]
            correct += int((logits.detach().argmax(dim=-1) == y).sum())
        scheduler.step()

        n = max(1, len(train_split))
        epochs.append(EpochRecord(epoch=epoch, split="train", loss=total_loss / n, accuracy=correct / n))
        val_msg = ""
        if len(data.val):
            val_loss, val_acc = evaluate_split(model, data.val, data.kind)
            epochs.append(EpochRecord(epoch=epoch, split="val", loss=val_loss, accuracy=val_acc))
            val_msg = f", val acc {val_acc:.3f}"
        logger.info(
            "Epoch %d/%d: loss %.4f, train acc %.3f%s, lr %.2e",
            epoch, train_cfg.epochs, total_loss / n, correct / n, val_msg, lr,
        )

        if train_cfg.stop_at_train_accuracy is not None:
            _, fit = evaluate_split(model, train_split, data.kind)
            if fit >= train_cfg.stop_at_train_accuracy:
                logger.info("Train accuracy %.3f reached the stop target at epoch %d", fit, epoch)
                break

    record.epochs = epochs
    if len(data.test):
        record.test_accuracy = evaluate(model, data, "test")
    record.wall_clock_s = time.perf_counter() - started
    return model, RunRecord.model_validate(record.model_dump())


# ============================================================
# RUN DIRECTORY
# ============================================================


def write_run(run_dir: Path, model: SWformer, record: RunRecord, run_cfg: RunConfig) -> Dict[str, Any]:
    """
    Write config.json, run_record.csv, run_summary.json, timing.json and
    checkpoint/. Everything except timing.json is identical across identical
    seeded runs.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / "config.json", run_cfg.model_dump(mode="json"))
    write_csv(
        run_dir / "run_record.csv",
        ["epoch", "split", "loss", "acc"],
        [(r.epoch, r.split, r.loss, r.accuracy) for r in record.epochs],
    )
    summary = record.summary()
    write_json(run_dir / "run_summary.json", summary)
    write_json(run_dir / "timing.json", {"wall_clock_s": record.wall_clock_s})
    save_checkpoint(model, run_dir / "checkpoint")
    logger.info("Run written to %s", run_dir)
    return summary
