"""Classification objectives: asymmetric loss, the combined objective with
the orthogonality penalty, and uncertainty weighting."""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class LossConfig:
    gamma_pos: float = 0.0
    gamma_neg: float = 4.0
    margin: float = 0.05
    lambda_ortho: float = 0.1
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.gamma_pos < 0 or self.gamma_neg < 0:
            raise ValueError("focusing exponents must be non-negative")
        if not 0.0 <= self.margin < 1.0:
            raise ValueError(f"margin must be in [0, 1), got {self.margin}")
        if self.lambda_ortho < 0:
            raise ValueError("lambda_ortho must be non-negative")

    def to_dict(self) -> dict:
        return {
            "gamma_pos": self.gamma_pos,
            "gamma_neg": self.gamma_neg,
            "margin": self.margin,
            "lambda_ortho": self.lambda_ortho,
            "clamp_eps": self.clamp_eps,
        }


def asymmetric_loss_elementwise(
    probs: torch.Tensor, labels: torch.Tensor, config: LossConfig
) -> torch.Tensor:
    """Per-sample asymmetric loss.

    Positives are focused by (1-p)^gamma_pos; negatives by the
    margin-shifted probability p_m = max(p - m, 0) raised to gamma_neg, so a
    negative with p <= m contributes exactly zero (subgradient zero at the
    kink). With both gammas and the margin at zero this is binary
    cross-entropy.
    """
    if not torch.logical_or(labels == 0, labels == 1).all():
        raise ValueError("labels must be 0 or 1")
    p = probs.clamp(config.clamp_eps, 1.0 - config.clamp_eps)
    pos_term = (1.0 - p).pow(config.gamma_pos) * torch.log(p)
    pm = (p - config.margin).clamp_min(0.0)
    # pow is evaluated on a safe value where pm == 0 to keep gradients finite
    # for fractional exponents; the where() zeroes those entries exactly.
    pm_safe = torch.where(pm > 0, pm, torch.ones_like(pm))
    neg_term = torch.where(
        pm > 0,
        pm_safe.pow(config.gamma_neg) * torch.log1p(-pm),
        torch.zeros_like(pm),
    )
    return -(labels * pos_term + (1.0 - labels) * neg_term)


def asymmetric_loss(probs: torch.Tensor, labels: torch.Tensor, config: LossConfig) -> torch.Tensor:
    """Batch-mean asymmetric loss for one task."""
    return asymmetric_loss_elementwise(probs, labels, config).mean()


def per_task_losses(
    probs: torch.Tensor,
    labels: torch.Tensor,
    label_mask: torch.Tensor,
    config: LossConfig,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Masked per-task means of the asymmetric loss.

    probs/labels are (B, K); label_mask marks which labels exist. Returns
    (losses (K,), valid (K,) bool); tasks with no labels in the batch come
    back as zero with valid False.
    """
    elem = asymmetric_loss_elementwise(probs, labels, config)
    mask = label_mask.to(elem.dtype)
    counts = mask.sum(dim=0)
    sums = (elem * mask).sum(dim=0)
    losses = sums / counts.clamp_min(1.0)
    return losses, counts > 0


def combined_loss(
    task_losses: torch.Tensor, ortho: torch.Tensor, lambda_ortho: float
) -> torch.Tensor:
    """Mean task loss plus lambda times the orthogonality penalty."""
    return task_losses.mean() + lambda_ortho * ortho


def uncertainty_weighted_loss(task_losses: torch.Tensor, log_vars: torch.Tensor) -> torch.Tensor:
    """Homoscedastic-uncertainty weighting: sum_k exp(-s_k) L_k + s_k with
    learnable log-variances s (zero-initialized, so the start point is the
    plain sum)."""
    if task_losses.shape != log_vars.shape:
        raise ValueError("one log-variance per task loss required")
    return (torch.exp(-log_vars) * task_losses + log_vars).sum()
