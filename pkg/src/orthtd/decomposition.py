"""Task decomposition: shared/task-specific projections, the orthogonality
penalty, and the per-task prediction heads.

The fused representation is projected once into a shared feature block and
once per task into a specific block, each through affine -> GELU -> layer
norm. Heads read the concatenation (shared first). The orthogonality penalty
is the mean absolute cosine between shared and specific features, averaged
over tasks; by default the cosine is taken per sample (row-wise) so
unrelated records are never entangled, with a flattened-matrix variant
available for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .ops import LayerNorm, gelu, make_linear, row_cosine

ORTHO_MODES = ("per_sample", "flattened")


@dataclass(frozen=True)
class DecompConfig:
    shared_ratio: float = 0.5
    d_task: int | None = None  # defaults to d_hidden at model build
    head_hidden: int | None = None  # defaults to d_task // 2
    ortho_mode: str = "per_sample"

    def __post_init__(self):
        if not 0.0 < self.shared_ratio < 1.0:
            raise ValueError(f"shared_ratio must be in (0, 1), got {self.shared_ratio}")
        if self.ortho_mode not in ORTHO_MODES:
            raise ValueError(f"ortho_mode must be one of {ORTHO_MODES}")

    def dims(self, d_hidden: int) -> tuple[int, int]:
        d_task = self.d_task if self.d_task is not None else d_hidden
        d_shared = int(round(self.shared_ratio * d_task))
        d_specific = d_task - d_shared
        if d_shared < 1 or d_specific < 1:
            raise ValueError(f"degenerate split: shared {d_shared}, specific {d_specific}")
        return d_shared, d_specific

    def head_width(self, d_hidden: int) -> int:
        d_task = self.d_task if self.d_task is not None else d_hidden
        if self.head_hidden is not None:
            return self.head_hidden
        return max(d_task // 2, 1)

    def to_dict(self) -> dict:
        return {
            "shared_ratio": self.shared_ratio,
            "d_task": self.d_task,
            "head_hidden": self.head_hidden,
            "ortho_mode": self.ortho_mode,
        }


class Projection(nn.Module):
    """affine -> GELU -> layer norm, the feature-extraction unit used for the
    shared block, each specific block, stitch branches and experts."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.linear = make_linear(in_dim, out_dim)
        self.norm = LayerNorm(out_dim)

    def forward(self, x):
        return self.norm(gelu(self.linear(x)))


class PredictionHead(nn.Module):
    """Two-layer MLP emitting one probability per record."""

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.fc1 = make_linear(in_dim, hidden)
        self.fc2 = make_linear(hidden, 1)

    def forward(self, x):
        return torch.sigmoid(self.fc2(gelu(self.fc1(x)))).squeeze(-1)


def ortho_loss(
    f_shared: torch.Tensor, f_specific: list[torch.Tensor], mode: str = "per_sample"
) -> torch.Tensor:
    """Mean absolute cosine between shared and each specific block, averaged
    over tasks. Lies in [0, 1]: 0 at exact orthogonality, 1 when parallel."""
    if mode not in ORTHO_MODES:
        raise ValueError(f"ortho mode must be one of {ORTHO_MODES}")
    terms = []
    for fk in f_specific:
        if fk.shape != f_shared.shape:
            raise ValueError(
                f"shared/specific shape mismatch: {tuple(f_shared.shape)} vs {tuple(fk.shape)}"
            )
        if mode == "per_sample":
            terms.append(row_cosine(f_shared, fk).abs().mean())
        else:
            terms.append(row_cosine(f_shared.reshape(1, -1), fk.reshape(1, -1)).abs().squeeze(0))
    return torch.stack(terms).mean()


class TaskDecomposition(nn.Module):
    """Shared + per-task specific projections with concatenation heads."""

    def __init__(
        self,
        d_hidden: int,
        num_tasks: int,
        config: DecompConfig,
        compute_ortho: bool = True,
    ):
        super().__init__()
        d_shared, d_specific = config.dims(d_hidden)
        if compute_ortho and d_shared != d_specific:
            raise ValueError(
                f"orthogonality requires equal subspace widths, got shared {d_shared} "
                f"and specific {d_specific}; use shared_ratio 0.5 with an even d_task"
            )
        self.config = config
        self.compute_ortho = compute_ortho
        self.d_shared = d_shared
        self.d_specific = d_specific
        self.shared_proj = Projection(d_hidden, d_shared)
        self.specific_projs = nn.ModuleList(
            [Projection(d_hidden, d_specific) for _ in range(num_tasks)]
        )
        head_in = d_shared + d_specific
        self.heads = nn.ModuleList(
            [PredictionHead(head_in, config.head_width(d_hidden)) for _ in range(num_tasks)]
        )

    def project_shared(self, h_global: torch.Tensor) -> torch.Tensor:
        return self.shared_proj(h_global)

    def project_specific(self, h_global: torch.Tensor, k: int) -> torch.Tensor:
        return self.specific_projs[k](h_global)

    def forward(self, h_global: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (probs (B, K), ortho scalar)."""
        shared = self.project_shared(h_global)
        specifics = [proj(h_global) for proj in self.specific_projs]
        probs = torch.stack(
            [
                head(torch.cat([shared, spec], dim=-1))
                for head, spec in zip(self.heads, specifics)
            ],
            dim=-1,
        )
        if self.compute_ortho:
            penalty = ortho_loss(shared, specifics, self.config.ortho_mode)
        else:
            penalty = torch.zeros((), dtype=h_global.dtype)
        return probs, penalty
