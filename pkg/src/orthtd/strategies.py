"""Multi-task strategies on top of the shared multimodal backbone.

Every strategy exposes the same interface: ``forward(batch)`` returns K
probability vectors plus an optional orthogonality penalty, so the trainer
and the evaluation module treat them interchangeably. All strategies share
identical encoder and fusion parameter shapes; they differ only in how the
fused representation feeds the task heads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from .cohort import FeatureSchema
from .decomposition import DecompConfig, PredictionHead, Projection, TaskDecomposition
from .encoders import TabularEncoder, TabularEncoderConfig, TextEncoder, TextEncoderConfig
from .errors import ConfigError
from .fusion import FusionBackbone, FusionConfig
from .ops import make_linear

STRATEGIES = ("orthtd", "single_task", "hard_sharing", "uncertainty", "cross_stitch", "mmoe")


@dataclass(frozen=True)
class StrategyConfig:
    name: str = "orthtd"
    experts: int = 4  # mmoe only

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.name!r}; choose from {STRATEGIES}")
        if self.experts < 2:
            raise ValueError("mmoe needs at least 2 experts")

    def to_dict(self) -> dict:
        return {"name": self.name, "experts": self.experts}


@dataclass(frozen=True)
class ModelConfig:
    strategy: StrategyConfig
    fusion: FusionConfig
    decomp: DecompConfig
    tabular: TabularEncoderConfig
    text: TextEncoderConfig

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.to_dict(),
            "fusion": self.fusion.to_dict(),
            "decomp": self.decomp.to_dict(),
            "tabular": self.tabular.to_dict(),
            "text": self.text.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(
            strategy=StrategyConfig(**doc["strategy"]),
            fusion=FusionConfig(**doc["fusion"]),
            decomp=DecompConfig(**doc["decomp"]),
            tabular=TabularEncoderConfig(**doc["tabular"]),
            text=TextEncoderConfig(**doc["text"]),
        )


@dataclass
class ModelOutput:
    probs: torch.Tensor  # (B, K)
    ortho: Optional[torch.Tensor] = None  # scalar penalty, orthtd only


class MultimodalBackbone(nn.Module):
    """Encoders plus fusion: record batch -> fused representation."""

    def __init__(
        self,
        schema: FeatureSchema,
        fusion: FusionConfig,
        tabular: TabularEncoderConfig,
        text: TextEncoderConfig,
    ):
        super().__init__()
        self.text_fields = [name for name, _ in schema.text_fields]
        self.tabular_encoder = TabularEncoder(schema, tabular, fusion.d_hidden)
        max_len = max((m for _, m in schema.text_fields), default=1)
        if text.shared_weights:
            self.text_encoder = TextEncoder(text, max_len, fusion.d_hidden)
        else:
            self.text_encoder = nn.ModuleDict(
                {name: TextEncoder(text, m, fusion.d_hidden) for name, m in schema.text_fields}
            )
        self.shared_text = text.shared_weights
        self.fusion = FusionBackbone(fusion, n_modality_tokens=1 + len(self.text_fields))

    def encode_text_field(self, name: str, tokens: torch.Tensor) -> torch.Tensor:
        enc = self.text_encoder if self.shared_text else self.text_encoder[name]
        return enc(tokens)

    def forward(self, batch: dict) -> torch.Tensor:
        tokens = [
            self.tabular_encoder(batch["cat_ids"], batch["cont"], batch["cont_missing"])
        ]
        for name in self.text_fields:
            tokens.append(self.encode_text_field(name, batch["text"][name]))
        return self.fusion(tokens)


class OrthTDModel(nn.Module):
    strategy = "orthtd"

    def __init__(self, schema: FeatureSchema, config: ModelConfig):
        super().__init__()
        self.task_names = schema.task_names
        self.backbone = MultimodalBackbone(schema, config.fusion, config.tabular, config.text)
        self.decomp = TaskDecomposition(
            config.fusion.d_hidden, schema.num_tasks, config.decomp, compute_ortho=True
        )

    def forward(self, batch: dict) -> ModelOutput:
        h = self.backbone(batch)
        probs, ortho = self.decomp(h)
        return ModelOutput(probs=probs, ortho=ortho)


class HardSharingModel(nn.Module):
    """All tasks read H_global directly through separate heads."""

    strategy = "hard_sharing"

    def __init__(self, schema: FeatureSchema, config: ModelConfig):
        super().__init__()
        self.task_names = schema.task_names
        self.backbone = MultimodalBackbone(schema, config.fusion, config.tabular, config.text)
        d = config.fusion.d_hidden
        hidden = config.decomp.head_width(d)
        self.heads = nn.ModuleList([PredictionHead(d, hidden) for _ in schema.task_names])

    def forward(self, batch: dict) -> ModelOutput:
        h = self.backbone(batch)
        probs = torch.stack([head(h) for head in self.heads], dim=-1)
        return ModelOutput(probs=probs)


class UncertaintyModel(HardSharingModel):
    """Hard-sharing architecture; the objective reweights task losses via
    learnable log-variances."""

    strategy = "uncertainty"

    def __init__(self, schema: FeatureSchema, config: ModelConfig):
        super().__init__(schema, config)
        self.log_vars = nn.Parameter(torch.zeros(schema.num_tasks))


class CrossStitchModel(nn.Module):
    """Per-task branches mixed by a learnable K x K stitch before the heads."""

    strategy = "cross_stitch"

    def __init__(self, schema: FeatureSchema, config: ModelConfig):
        super().__init__()
        self.task_names = schema.task_names
        self.backbone = MultimodalBackbone(schema, config.fusion, config.tabular, config.text)
        d = config.fusion.d_hidden
        d_task = config.decomp.d_task if config.decomp.d_task is not None else d
        k = schema.num_tasks
        self.branches = nn.ModuleList([Projection(d, d_task) for _ in range(k)])
        if k > 1:
            alpha = torch.full((k, k), 0.1 / (k - 1))
            alpha.fill_diagonal_(0.9)
        else:
            alpha = torch.ones((1, 1))
        self.alpha = nn.Parameter(alpha)
        hidden = config.decomp.head_width(d)
        self.heads = nn.ModuleList([PredictionHead(d_task, hidden) for _ in range(k)])

    def forward(self, batch: dict) -> ModelOutput:
        h = self.backbone(batch)
        feats = torch.stack([branch(h) for branch in self.branches], dim=0)  # (K, B, D)
        mixed = torch.einsum("ji,ibd->jbd", self.alpha, feats)
        probs = torch.stack([head(mixed[j]) for j, head in enumerate(self.heads)], dim=-1)
        return ModelOutput(probs=probs)


class MMoEModel(nn.Module):
    """Shared experts routed by per-task softmax gates."""

    strategy = "mmoe"

    def __init__(self, schema: FeatureSchema, config: ModelConfig):
        super().__init__()
        self.task_names = schema.task_names
        self.backbone = MultimodalBackbone(schema, config.fusion, config.tabular, config.text)
        d = config.fusion.d_hidden
        d_task = config.decomp.d_task if config.decomp.d_task is not None else d
        k = schema.num_tasks
        self.experts = nn.ModuleList([Projection(d, d_task) for _ in range(config.strategy.experts)])
        self.gates = nn.ModuleList([make_linear(d, config.strategy.experts) for _ in range(k)])
        hidden = config.decomp.head_width(d)
        self.heads = nn.ModuleList([PredictionHead(d_task, hidden) for _ in range(k)])

    def gate_weights(self, h: torch.Tensor) -> torch.Tensor:
        """(K, B, E) softmax gate distributions."""
        return torch.stack([torch.softmax(g(h), dim=-1) for g in self.gates], dim=0)

    def forward(self, batch: dict) -> ModelOutput:
        h = self.backbone(batch)
        expert_out = torch.stack([e(h) for e in self.experts], dim=0)  # (E, B, D)
        gates = self.gate_weights(h)  # (K, B, E)
        task_feats = torch.einsum("kbe,ebd->kbd", gates, expert_out)
        probs = torch.stack([head(task_feats[j]) for j, head in enumerate(self.heads)], dim=-1)
        return ModelOutput(probs=probs)


class SingleTaskEnsemble(nn.Module):
    """K independent full pipelines, one task each, no shared parameters.
    With K = 1 each pipeline is function-identical to hard sharing."""

    strategy = "single_task"

    def __init__(self, schema: FeatureSchema, config: ModelConfig):
        super().__init__()
        self.task_names = schema.task_names
        d = config.fusion.d_hidden
        hidden = config.decomp.head_width(d)
        self.pipelines = nn.ModuleList()
        for _ in schema.task_names:
            pipe = nn.Module()
            pipe.backbone = MultimodalBackbone(schema, config.fusion, config.tabular, config.text)
            pipe.head = PredictionHead(d, hidden)
            self.pipelines.append(pipe)

    def forward(self, batch: dict) -> ModelOutput:
        probs = torch.stack(
            [pipe.head(pipe.backbone(batch)) for pipe in self.pipelines], dim=-1
        )
        return ModelOutput(probs=probs)


_MODEL_CLASSES = {
    "orthtd": OrthTDModel,
    "hard_sharing": HardSharingModel,
    "uncertainty": UncertaintyModel,
    "cross_stitch": CrossStitchModel,
    "mmoe": MMoEModel,
    "single_task": SingleTaskEnsemble,
}


def build_strategy(schema: FeatureSchema, config: ModelConfig) -> nn.Module:
    """Instantiate the requested strategy against a (vital-augmented) schema."""
    try:
        cls = _MODEL_CLASSES[config.strategy.name]
    except KeyError:
        raise ConfigError(f"unknown strategy {config.strategy.name!r}") from None
    return cls(schema, config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
