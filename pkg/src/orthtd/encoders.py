"""Modality encoders: every encoder maps a record batch to one token of
width d_hidden.

The tabular encoder consumes categorical embeddings plus the continuous
vector (values and missing masks); vital features are expected to already be
folded into the continuous group (see :mod:`orthtd.vitals`). The text
encoder is a small trainable Transformer with a CLS readout whose parameters
live in the separate ``text_encoder`` learning-rate group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .cohort import Cohort, FeatureSchema
from .ops import TransformerEncoderBlock, init_embedding_, make_linear
from .synthetic import CLS_TOKEN_ID, PAD_TOKEN_ID


@dataclass(frozen=True)
class TabularEncoderConfig:
    embed_dim: int = 16

    def to_dict(self) -> dict:
        return {"embed_dim": self.embed_dim}


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int = 120
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    dropout: float = 0.0
    shared_weights: bool = True
    cls_id: int = CLS_TOKEN_ID
    pad_id: int = PAD_TOKEN_ID

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "layers": self.layers,
            "heads": self.heads,
            "dropout": self.dropout,
            "shared_weights": self.shared_weights,
            "cls_id": self.cls_id,
            "pad_id": self.pad_id,
        }


class TabularEncoder(nn.Module):
    """Embed categoricals, concatenate with continuous values and their
    missing masks, and project to d_hidden."""

    def __init__(self, schema: FeatureSchema, config: TabularEncoderConfig, d_hidden: int):
        super().__init__()
        self.embeddings = nn.ModuleList(
            [init_embedding_(nn.Embedding(card, config.embed_dim)) for card in schema.cardinalities]
        )
        n_cont = len(schema.continuous_features)
        in_dim = len(schema.cardinalities) * config.embed_dim + 2 * n_cont
        self.proj = make_linear(in_dim, d_hidden)

    def forward(self, cat_ids: torch.Tensor, cont: torch.Tensor, cont_missing: torch.Tensor):
        parts = [emb(cat_ids[:, j]) for j, emb in enumerate(self.embeddings)]
        parts.append(cont)
        parts.append(cont_missing)
        return self.proj(torch.cat(parts, dim=-1))


class TextEncoder(nn.Module):
    """Small Transformer over token sequences; the output at the CLS
    position is projected to d_hidden. Padding is excluded via key masking,
    so an empty note (CLS plus padding) still yields a finite token."""

    def __init__(self, config: TextEncoderConfig, max_len: int, d_hidden: int):
        super().__init__()
        self.config = config
        self.token_emb = init_embedding_(nn.Embedding(config.vocab_size, config.embed_dim))
        self.pos_emb = init_embedding_(nn.Embedding(max_len + 1, config.embed_dim))
        self.blocks = nn.ModuleList(
            [
                TransformerEncoderBlock(config.embed_dim, config.heads, config.dropout)
                for _ in range(config.layers)
            ]
        )
        self.out_proj = make_linear(config.embed_dim, d_hidden)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if int(tokens.max()) >= self.config.vocab_size:
            raise ValueError(
                f"token id {int(tokens.max())} out of vocabulary (size {self.config.vocab_size})"
            )
        positions = torch.arange(tokens.shape[1], device=tokens.device)
        x = self.token_emb(tokens) + self.pos_emb(positions)[None, :, :]
        key_mask = tokens != self.config.pad_id
        for block in self.blocks:
            x = block(x, key_mask)
        return self.out_proj(x[:, 0])


def prepare_text_ids(
    sequences: list[tuple[int, ...]], max_len: int, cls_id: int, pad_id: int
) -> np.ndarray:
    """[CLS] + right-truncated tokens, right-padded to max_len + 1."""
    out = np.full((len(sequences), max_len + 1), pad_id, dtype=np.int64)
    out[:, 0] = cls_id
    for i, seq in enumerate(sequences):
        trimmed = seq[:max_len]
        out[i, 1 : 1 + len(trimmed)] = trimmed
    return out


def tensorize_cohort(
    cohort: Cohort, text_config: TextEncoderConfig, dtype: torch.dtype = torch.float32
) -> dict:
    """Convert a (vital-augmented) cohort into the dense batch tensors every
    model consumes. Labels are 0/1 floats with a boolean presence mask."""
    schema = cohort.schema
    n = len(cohort)
    cat = np.zeros((n, len(schema.categorical_names)), dtype=np.int64)
    for j, name in enumerate(schema.categorical_names):
        cat[:, j] = [r.categorical_ids[name] for r in cohort.records]

    cont = np.zeros((n, len(schema.continuous_features)), dtype=np.float64)
    missing = np.zeros_like(cont)
    for j, name in enumerate(schema.continuous_features):
        cont[:, j] = [r.continuous_values[name] for r in cohort.records]
        missing[:, j] = [1.0 if name in r.continuous_missing else 0.0 for r in cohort.records]

    text = {}
    for name, max_len in schema.text_fields:
        seqs = [r.text_tokens[name] for r in cohort.records]
        text[name] = torch.from_numpy(
            prepare_text_ids(seqs, max_len, text_config.cls_id, text_config.pad_id)
        )

    labels = np.zeros((n, schema.num_tasks), dtype=np.float64)
    label_mask = np.zeros((n, schema.num_tasks), dtype=bool)
    for k, name in enumerate(schema.task_names):
        labels[:, k] = [float(r.labels.get(name, 0)) for r in cohort.records]
        label_mask[:, k] = [r.label_present(name) for r in cohort.records]

    return {
        "cat_ids": torch.from_numpy(cat),
        "cont": torch.from_numpy(cont).to(dtype),
        "cont_missing": torch.from_numpy(missing).to(dtype),
        "text": text,
        "labels": torch.from_numpy(labels).to(dtype),
        "label_mask": torch.from_numpy(label_mask),
    }


def slice_batch(batch: dict, idx: torch.Tensor | np.ndarray) -> dict:
    if isinstance(idx, np.ndarray):
        idx = torch.from_numpy(idx)
    return {
        "cat_ids": batch["cat_ids"][idx],
        "cont": batch["cont"][idx],
        "cont_missing": batch["cont_missing"][idx],
        "text": {name: t[idx] for name, t in batch["text"].items()},
        "labels": batch["labels"][idx],
        "label_mask": batch["label_mask"][idx],
    }
