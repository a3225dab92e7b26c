"""Differentiable primitives shared by every model component.

All ops are defined explicitly (exact-erf GELU, manual layer norm, scaled
dot-product attention) so their contracts are testable against the
finite-difference checker rather than inherited from opaque kernels.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

LAYER_NORM_EPS = 1e-5
COSINE_EPS = 1e-8


def gelu(x: torch.Tensor) -> torch.Tensor:
    """Exact GELU x * Phi(x) via erf (not the tanh approximation)."""
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


def affine(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """y = x @ weight + bias with weight shaped (in_features, out_features)."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"affine shape mismatch: x {tuple(x.shape)} vs weight {tuple(weight.shape)}")
    return x @ weight + bias


def layer_norm(
    x: torch.Tensor,
    gain: torch.Tensor,
    bias: torch.Tensor,
    eps: float = LAYER_NORM_EPS,
) -> torch.Tensor:
    """Per-row standardization over the last axis, then elementwise gain/bias.

    Uses the biased variance with eps inside the square root, so constant
    rows map to zero instead of dividing by zero.
    """
    if x.shape[-1] < 2:
        raise ValueError("layer_norm needs at least 2 features per row")
    centered = x - x.mean(dim=-1, keepdim=True)
    var = (centered * centered).mean(dim=-1, keepdim=True)
    return centered / torch.sqrt(var + eps) * gain + bias


def row_cosine(a: torch.Tensor, b: torch.Tensor, eps: float = COSINE_EPS) -> torch.Tensor:
    """Per-row cosine similarity with eps-guarded norms; output in [-1, 1]."""
    if a.shape != b.shape:
        raise ValueError(f"row_cosine shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    dot = (a * b).sum(dim=-1)
    na = a.norm(dim=-1).clamp_min(eps)
    nb = b.norm(dim=-1).clamp_min(eps)
    return dot / (na * nb)


def init_linear_(linear: nn.Linear) -> nn.Linear:
    """Weights ~ Uniform(+-1/sqrt(fan_in)), bias zero."""
    fan_in = linear.weight.shape[1]
    bound = 1.0 / math.sqrt(fan_in)
    nn.init.uniform_(linear.weight, -bound, bound)
    if linear.bias is not None:
        nn.init.zeros_(linear.bias)
    return linear


def make_linear(in_features: int, out_features: int) -> nn.Linear:
    return init_linear_(nn.Linear(in_features, out_features))


def init_embedding_(emb: nn.Embedding, std: float = 0.02) -> nn.Embedding:
    nn.init.normal_(emb.weight, mean=0.0, std=std)
    return emb


class LayerNorm(nn.Module):
    """Learnable gain/bias wrapper around :func:`layer_norm`."""

    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        super().__init__()
        self.eps = eps
        self.gain = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        return layer_norm(x, self.gain, self.bias, self.eps)


class MultiHeadSelfAttention(nn.Module):
    """Scaled dot-product self-attention over (B, T, d) sequences.

    ``key_mask`` (B, T) marks valid key positions; masked keys are excluded
    from every softmax row. Per-head dimension is d / heads with 1/sqrt(d_h)
    scaling.
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"model dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = make_linear(dim, dim)
        self.k_proj = make_linear(dim, dim)
        self.v_proj = make_linear(dim, dim)
        self.out_proj = make_linear(dim, dim)

    def attention_weights(self, x: torch.Tensor, key_mask=None) -> torch.Tensor:
        b, t, _ = x.shape
        q = self.q_proj(x).view(b, t, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(x).view(b, t, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        return torch.softmax(scores, dim=-1)

    def forward(self, x: torch.Tensor, key_mask=None) -> torch.Tensor:
        b, t, _ = x.shape
        attn = self.attention_weights(x, key_mask)
        v = self.v_proj(x).view(b, t, self.heads, self.head_dim).transpose(1, 2)
        out = (attn @ v).transpose(1, 2).reshape(b, t, self.dim)
        return self.out_proj(out)


class TransformerEncoderBlock(nn.Module):
    """Post-norm encoder block: self-attention then a 4x-wide GELU
    feed-forward, each wrapped in residual + layer norm."""

    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadSelfAttention(dim, heads)
        self.norm1 = LayerNorm(dim)
        self.ff_in = make_linear(dim, 4 * dim)
        self.ff_out = make_linear(4 * dim, dim)
        self.norm2 = LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_mask=None) -> torch.Tensor:
        x = self.norm1(x + self.dropout(self.attn(x, key_mask)))
        x = self.norm2(x + self.dropout(self.ff_out(gelu(self.ff_in(x)))))
        return x


def parameter_groups(model: nn.Module) -> dict[str, list[tuple[str, nn.Parameter]]]:
    """Split named parameters into the two learning-rate groups. Any
    parameter living under a ``text_encoder`` submodule belongs to the
    slower ``text_encoder`` group; everything else is ``main``."""
    groups: dict[str, list[tuple[str, nn.Parameter]]] = {"main": [], "text_encoder": []}
    for name, param in model.named_parameters():
        key = "text_encoder" if "text_encoder" in name.split(".") else "main"
        groups[key].append((name, param))
    return groups
