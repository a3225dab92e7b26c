"""Transformer fusion backbone over modality tokens plus a learnable global
token.

The sequence is a fixed-arity set of modality slots (global, tabular, one
per text field), so each slot gets a learned slot-type embedding instead of
a positional encoding. The output at the global slot is the fused patient
representation; with the global token disabled (ablation rung "base") the
mean over slot outputs is returned instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .ops import TransformerEncoderBlock


@dataclass(frozen=True)
class FusionConfig:
    d_hidden: int = 240
    layers: int = 4
    heads: int = 8
    dropout: float = 0.0
    use_global_token: bool = True

    def __post_init__(self):
        if self.d_hidden % self.heads != 0:
            raise ValueError(f"d_hidden {self.d_hidden} not divisible by heads {self.heads}")

    def to_dict(self) -> dict:
        return {
            "d_hidden": self.d_hidden,
            "layers": self.layers,
            "heads": self.heads,
            "dropout": self.dropout,
            "use_global_token": self.use_global_token,
        }


class FusionBackbone(nn.Module):
    def __init__(self, config: FusionConfig, n_modality_tokens: int):
        super().__init__()
        if n_modality_tokens < 1:
            raise ValueError("fusion needs at least one modality token")
        self.config = config
        self.n_slots = n_modality_tokens + (1 if config.use_global_token else 0)
        if config.use_global_token:
            self.global_token = nn.Parameter(torch.randn(config.d_hidden) * 0.02)
        self.slot_type = nn.Parameter(torch.randn(self.n_slots, config.d_hidden) * 0.02)
        self.blocks = nn.ModuleList(
            [
                TransformerEncoderBlock(config.d_hidden, config.heads, config.dropout)
                for _ in range(config.layers)
            ]
        )

    def forward(self, tokens: list[torch.Tensor]) -> torch.Tensor:
        """Fuse per-modality (B, d_hidden) tokens into H_global (B, d_hidden)."""
        if len(tokens) + (1 if self.config.use_global_token else 0) != self.n_slots:
            raise ValueError(f"expected {self.n_slots} slots, got {len(tokens)} modality tokens")
        b = tokens[0].shape[0]
        for t in tokens:
            if t.shape != tokens[0].shape:
                raise ValueError("modality tokens must share batch size and width")
        slots = list(tokens)
        if self.config.use_global_token:
            slots = [self.global_token.unsqueeze(0).expand(b, -1)] + slots
        x = torch.stack(slots, dim=1) + self.slot_type[None, :, :]
        for block in self.blocks:
            x = block(x)
        if self.config.use_global_token:
            return x[:, 0]
        return x.mean(dim=1)
