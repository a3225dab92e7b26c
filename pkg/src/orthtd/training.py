"""Optimization: decoupled-weight-decay Adam with two learning-rate groups,
cosine schedule with linear warm-up, and the epoch loop.

The trainer is deliberately deterministic: model construction is seeded
through torch, batch order comes from a dedicated numpy generator, and the
per-epoch history serializes to a line-delimited log that is byte-identical
across runs with the same config and seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .cohort import Cohort
from .encoders import TextEncoderConfig, slice_batch, tensorize_cohort
from .errors import NumericError
from .losses import LossConfig, combined_loss, per_task_losses, uncertainty_weighted_loss
from .ops import parameter_groups


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    lr_main: float = 1e-4
    lr_text: float = 1e-5
    warmup_fraction: float = 0.10
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 0.0  # 0 disables clipping
    seed: int = 1

    def __post_init__(self):
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.lr_main <= 0 or self.lr_text <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_main": self.lr_main,
            "lr_text": self.lr_text,
            "warmup_fraction": self.warmup_fraction,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "grad_clip": self.grad_clip,
            "seed": self.seed,
        }


def cosine_lr(step: int, total_steps: int, warmup_fraction: float) -> float:
    """Schedule multiplier: linear ramp 0 -> 1 over the warm-up steps, then
    cosine decay 1 -> 0 over the remainder."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup_steps = warmup_fraction * total_steps
    if warmup_steps > 0 and step < warmup_steps:
        return step / warmup_steps
    remaining = total_steps - warmup_steps
    if remaining <= 0:
        return 1.0
    progress = (step - warmup_steps) / remaining
    return 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Bias-corrected Adam with decoupled weight decay and per-group rates.

    Decay multiplies each parameter by (1 - lr * wd) before the Adam delta,
    with lr already scaled by the schedule multiplier. Parameters under a
    ``text_encoder`` submodule use lr_text, everything else lr_main.
    """

    def __init__(self, model: nn.Module, config: TrainConfig):
        self.config = config
        self.step_count = 0
        self.slots = []  # (name, param, base_lr)
        groups = parameter_groups(model)
        for name, p in groups["main"]:
            self.slots.append((name, p, config.lr_main))
        for name, p in groups["text_encoder"]:
            self.slots.append((name, p, config.lr_text))
        self.exp_avg = {name: torch.zeros_like(p) for name, p, _ in self.slots}
        self.exp_avg_sq = {name: torch.zeros_like(p) for name, p, _ in self.slots}

    def zero_grad(self):
        for _, p, _ in self.slots:
            p.grad = None

    @torch.no_grad()
    def step(self, lr_scale: float = 1.0):
        self.step_count += 1
        t = self.step_count
        c = self.config
        bc1 = 1.0 - c.beta1**t
        bc2 = 1.0 - c.beta2**t
        for name, p, base_lr in self.slots:
            g = p.grad
            if g is None:
                continue
            if not torch.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            lr = base_lr * lr_scale
            if c.weight_decay > 0.0:
                p.mul_(1.0 - lr * c.weight_decay)
            m = self.exp_avg[name]
            v = self.exp_avg_sq[name]
            m.mul_(c.beta1).add_(g, alpha=1.0 - c.beta1)
            v.mul_(c.beta2).addcmul_(g, g, value=1.0 - c.beta2)
            denom = (v / bc2).sqrt_().add_(c.adam_eps)
            p.addcdiv_(m, denom, value=-lr / bc1)

    def state_dict(self) -> dict:
        return {
            "step": self.step_count,
            "exp_avg": self.exp_avg,
            "exp_avg_sq": self.exp_avg_sq,
        }

    def load_state_dict(self, state: dict):
        self.step_count = int(state["step"])
        for name in self.exp_avg:
            self.exp_avg[name].copy_(state["exp_avg"][name])
            self.exp_avg_sq[name].copy_(state["exp_avg_sq"][name])


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    ortho: Optional[float]
    lr_scale: float
    val_auc: dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss": self.loss,
            "ortho": self.ortho,
            "lr_scale": self.lr_scale,
            "val_auc": self.val_auc,
        }


def write_history(history: list[EpochRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def objective_for(
    model: nn.Module,
    output,
    labels: torch.Tensor,
    label_mask: torch.Tensor,
    loss_config: LossConfig,
) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
    """Strategy-appropriate scalar objective plus the ortho penalty if the
    model reports one."""
    task_losses, valid = per_task_losses(output.probs, labels, label_mask, loss_config)
    if not valid.any():
        raise NumericError("batch contains no labeled tasks")
    active = task_losses[valid]
    if getattr(model, "strategy", "") == "uncertainty":
        return uncertainty_weighted_loss(active, model.log_vars[valid]), None
    if output.ortho is not None:
        return combined_loss(active, output.ortho, loss_config.lambda_ortho), output.ortho
    return active.mean(), None


def train(
    model: nn.Module,
    train_cohort: Cohort,
    config: TrainConfig,
    loss_config: LossConfig,
    text_config: TextEncoderConfig,
    val_cohort: Optional[Cohort] = None,
) -> list[EpochRecord]:
    """Run the fixed-epoch loop and return the per-epoch history.

    The cohort must already carry its vital features. When a validation
    cohort is given, per-task AUC on it is recorded every epoch (no model
    selection is performed; training always runs the configured epochs).
    """
    from .evaluation import predict_probs  # local import to avoid a cycle
    from .metrics import auc

    tensors = tensorize_cohort(train_cohort, text_config)
    n = len(train_cohort)
    batches_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    optimizer = AdamW(model, config)
    shuffle_rng = np.random.default_rng(config.seed)

    val_tensors = tensorize_cohort(val_cohort, text_config) if val_cohort is not None else None

    history: list[EpochRecord] = []
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        epoch_ortho = []
        lr_scale = 0.0
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            batch = slice_batch(tensors, idx)
            output = model(batch)
            loss, ortho = objective_for(
                model, output, batch["labels"], batch["label_mask"], loss_config
            )
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip > 0.0:
                torch.nn.utils.clip_grad_norm_(
                    [p for _, p, _ in optimizer.slots], config.grad_clip
                )
            lr_scale = cosine_lr(step, total_steps, config.warmup_fraction)
            optimizer.step(lr_scale)
            step += 1
            epoch_losses.append(float(loss.detach()))
            if ortho is not None:
                epoch_ortho.append(float(ortho.detach()))

        val_auc: dict[str, Optional[float]] = {}
        if val_tensors is not None:
            probs = predict_probs(model, val_tensors)
            for k, name in enumerate(model.task_names):
                mask = val_tensors["label_mask"][:, k].numpy()
                y = val_tensors["labels"][:, k].numpy()[mask]
                s = probs[:, k][mask]
                val_auc[name] = auc(s, y) if (y == 1).any() and (y == 0).any() else None

        history.append(
            EpochRecord(
                epoch=epoch,
                loss=float(np.mean(epoch_losses)),
                ortho=float(np.mean(epoch_ortho)) if epoch_ortho else None,
                lr_scale=lr_scale,
                val_auc=val_auc,
            )
        )
    return history
