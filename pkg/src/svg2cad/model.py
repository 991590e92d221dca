"""Encoder and dual-decoder network over quantized drawing tokens.

View, command and parameter fields embed separately and fuse either by
concatenation through a single affine map or by plain addition. The encoder
mean-pools four pre-norm Transformer blocks into one latent vector; two
non-autoregressive decoders expand learned constant queries against it, one
for command kinds and one for the 15-slot parameter vectors. With guidance
enabled the command decoder's final hidden states are added to the argument
decoder's before the argument head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
import torch
from torch import nn

from .cad import CadKind, CadSequence, merge_outputs
from .drawing import DrawingSequence, ViewLabel

VIEW_ORDERS = {
    "iso": (ViewLabel.ISOMETRIC,),
    "ortho": (ViewLabel.FRONT, ViewLabel.TOP, ViewLabel.RIGHT),
    "all": (ViewLabel.FRONT, ViewLabel.TOP, ViewLabel.RIGHT, ViewLabel.ISOMETRIC),
}


class ModelConfigError(ValueError):
    """Inconsistent model configuration."""


@dataclass
class ModelConfig:
    embed_dim: int = 256
    num_blocks: int = 4
    num_heads: int = 8
    ff_dim: int = 512
    dropout: float = 0.1
    view_mode: str = "all"
    tokens_per_view: int = 100
    cad_len: int = 60
    num_param_slots: int = 15
    param_categories: int = 257
    svg_kinds: int = 4
    num_views: int = 4
    cad_kinds: int = 6
    fusion: str = "concat"
    guidance: bool = True

    def __post_init__(self) -> None:
        if self.view_mode not in VIEW_ORDERS:
            raise ModelConfigError(f"view_mode must be one of {sorted(VIEW_ORDERS)}")
        if self.fusion not in ("concat", "add"):
            raise ModelConfigError("fusion must be 'concat' or 'add'")
        if self.embed_dim % self.num_heads != 0:
            raise ModelConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        for name in ("embed_dim", "num_blocks", "num_heads", "ff_dim", "tokens_per_view",
                     "cad_len", "num_param_slots", "param_categories", "svg_kinds",
                     "num_views", "cad_kinds"):
            if getattr(self, name) < 1:
                raise ModelConfigError(f"{name} must be at least 1")

    @property
    def views(self) -> tuple[ViewLabel, ...]:
        return VIEW_ORDERS[self.view_mode]

    @property
    def seq_len(self) -> int:
        return self.tokens_per_view * len(self.views)

    @property
    def uses_view_embedding(self) -> bool:
        # a single fixed view carries no information, so its embedding is dropped
        return len(self.views) > 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def positional_encoding(position: int, dim: int) -> np.ndarray:
    """Sinusoidal code: even dims sin, odd dims cos, paired exponents."""
    if position < 0:
        raise ValueError("position must be nonnegative")
    out = np.empty(dim, dtype=np.float64)
    half = np.arange((dim + 1) // 2)
    rates = position / np.power(10000.0, 2.0 * half / dim)
    out[0::2] = np.sin(rates)
    out[1::2] = np.cos(rates[: dim // 2])
    return out


def positional_encoding_table(length: int, dim: int) -> torch.Tensor:
    table = np.stack([positional_encoding(i, dim) for i in range(length)])
    return torch.from_numpy(table).to(torch.float32)


class TokenEmbedding(nn.Module):
    """Per-token fusion of view, command and parameter embeddings plus position."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        d = config.embed_dim
        self.config = config
        self.cmd_embed = nn.Embedding(config.svg_kinds, d)
        self.param_embed = nn.Embedding(config.param_categories, d)
        self.param_proj = nn.Linear(8 * d, d, bias=False)
        self.view_embed = nn.Embedding(config.num_views, d) if config.uses_view_embedding else None
        if config.fusion == "concat":
            fields = 2 + (1 if config.uses_view_embedding else 0)
            self.fusion_mlp = nn.Linear(fields * d, d)
        else:
            self.fusion_mlp = None
        self.register_buffer("pos_table", positional_encoding_table(config.seq_len, d))

    def forward(self, kinds: torch.Tensor, params: torch.Tensor,
                view_ids: Optional[torch.Tensor] = None) -> torch.Tensor:
        batch, length = kinds.shape
        if length > self.pos_table.shape[0]:
            raise ModelConfigError(f"sequence length {length} exceeds {self.pos_table.shape[0]}")
        e_cmd = self.cmd_embed(kinds)
        per_slot = self.param_embed(params)                      # (B, L, 8, d)
        e_param = self.param_proj(per_slot.reshape(batch, length, -1))
        fields = [e_cmd, e_param]
        if self.view_embed is not None:
            if view_ids is None:
                raise ModelConfigError("view ids required when the view embedding is active")
            fields.insert(0, self.view_embed(view_ids))
        if self.fusion_mlp is not None:
            fused = self.fusion_mlp(torch.cat(fields, dim=-1))
        else:
            fused = torch.stack(fields).sum(dim=0)
        return fused + self.pos_table[:length].unsqueeze(0)


def _feed_forward(config: ModelConfig) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(config.embed_dim, config.ff_dim),
        nn.ReLU(),
        nn.Dropout(config.dropout),
        nn.Linear(config.ff_dim, config.embed_dim),
    )


class SelfAttention(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        d = config.embed_dim
        self.heads = config.num_heads
        self.dropout = config.dropout
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, d = x.shape
        qkv = self.qkv(x).reshape(batch, length, 3, self.heads, d // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        p = self.dropout if self.training else 0.0
        h = nn.functional.scaled_dot_product_attention(q, k, v, dropout_p=p)
        return self.out(h.transpose(1, 2).reshape(batch, length, d))


class CrossAttention(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        d = config.embed_dim
        self.heads = config.num_heads
        self.dropout = config.dropout
        self.q = nn.Linear(d, d)
        self.kv = nn.Linear(d, 2 * d)
        self.out = nn.Linear(d, d)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        batch, length, d = x.shape
        mem_len = memory.shape[1]
        q = self.q(x).reshape(batch, length, self.heads, d // self.heads).transpose(1, 2)
        kv = self.kv(memory).reshape(batch, mem_len, 2, self.heads, d // self.heads)
        k, v = kv.permute(2, 0, 3, 1, 4)
        p = self.dropout if self.training else 0.0
        h = nn.functional.scaled_dot_product_attention(q, k, v, dropout_p=p)
        return self.out(h.transpose(1, 2).reshape(batch, length, d))


class EncoderBlock(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        d = config.embed_dim
        self.norm1 = nn.LayerNorm(d)
        self.attn = SelfAttention(config)
        self.norm2 = nn.LayerNorm(d)
        self.ff = _feed_forward(config)
        self.drop = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.norm1(x)))
        x = x + self.drop(self.ff(self.norm2(x)))
        return x


class DecoderBlock(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        d = config.embed_dim
        self.norm1 = nn.LayerNorm(d)
        self.self_attn = SelfAttention(config)
        self.norm2 = nn.LayerNorm(d)
        self.cross_attn = CrossAttention(config)
        self.norm3 = nn.LayerNorm(d)
        self.ff = _feed_forward(config)
        self.drop = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.self_attn(self.norm1(x)))
        x = x + self.drop(self.cross_attn(self.norm2(x), memory))
        x = x + self.drop(self.ff(self.norm3(x)))
        return x


class ConstantQueryDecoder(nn.Module):
    """One-shot decoder: learned constant queries cross-attending to the latent."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.queries = nn.Parameter(torch.empty(config.cad_len, config.embed_dim))
        self.blocks = nn.ModuleList(DecoderBlock(config) for _ in range(config.num_blocks))
        self.norm = nn.LayerNorm(config.embed_dim)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        memory = z.unsqueeze(1)                       # latent as a length-1 sequence
        x = self.queries.unsqueeze(0).expand(z.shape[0], -1, -1)
        for block in self.blocks:
            x = block(x, memory)
        return self.norm(x)


class DualDecoderModel(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.embedding = TokenEmbedding(config)
        self.encoder_blocks = nn.ModuleList(EncoderBlock(config) for _ in range(config.num_blocks))
        self.encoder_norm = nn.LayerNorm(config.embed_dim)
        self.cmd_decoder = ConstantQueryDecoder(config)
        self.arg_decoder = ConstantQueryDecoder(config)
        self.cmd_head = nn.Linear(config.embed_dim, config.cad_kinds)
        self.arg_head = nn.Linear(config.embed_dim,
                                  config.num_param_slots * config.param_categories)

    def encode(self, kinds: torch.Tensor, params: torch.Tensor,
               view_ids: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = self.embedding(kinds, params, view_ids)
        for block in self.encoder_blocks:
            x = block(x)
        return self.encoder_norm(x).mean(dim=1)

    def _fuse_guidance(self, h_cmd: torch.Tensor, h_arg: torch.Tensor) -> torch.Tensor:
        # the single injection point for command-guided parameter generation
        if self.config.guidance:
            return h_arg + h_cmd
        return h_arg

    def decode(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h_cmd = self.cmd_decoder(z)
        h_arg = self._fuse_guidance(h_cmd, self.arg_decoder(z))
        cmd_logits = self.cmd_head(h_cmd)
        arg_logits = self.arg_head(h_arg).reshape(
            z.shape[0], self.config.cad_len,
            self.config.num_param_slots, self.config.param_categories)
        return cmd_logits, arg_logits

    def forward(self, kinds: torch.Tensor, params: torch.Tensor,
                view_ids: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, torch.Tensor]:
        return self.decode(self.encode(kinds, params, view_ids))


def build_model(config: ModelConfig, seed: int = 0) -> DualDecoderModel:
    """Construct with seeded, scaled-uniform initialization."""
    torch.manual_seed(seed)
    model = DualDecoderModel(config)
    bound = 1.0 / math.sqrt(config.embed_dim)
    with torch.no_grad():
        for embed in (model.embedding.cmd_embed, model.embedding.param_embed,
                      model.embedding.view_embed):
            if embed is not None:
                embed.weight.uniform_(-bound, bound)
        model.cmd_decoder.queries.uniform_(-bound, bound)
        model.arg_decoder.queries.uniform_(-bound, bound)
    return model


# ---------------------------------------------------------------------------
# Tensorization


def drawing_to_arrays(drawing: DrawingSequence) -> tuple[np.ndarray, np.ndarray]:
    kinds = np.array([int(t.kind) for t in drawing.tokens], dtype=np.int64)
    params = np.array([t.params for t in drawing.tokens], dtype=np.int64)
    return kinds, params


def views_to_arrays(views: dict[ViewLabel, DrawingSequence],
                    config: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack the configured views in their fixed order into flat arrays."""
    kinds_parts, params_parts, view_parts = [], [], []
    for view in config.views:
        if view not in views:
            raise ModelConfigError(f"missing view {view.key!r} for mode {config.view_mode!r}")
        drawing = views[view]
        if drawing.view is not view:
            raise ModelConfigError(
                f"drawing labeled {drawing.view.key!r} supplied in the {view.key!r} slot")
        if len(drawing.tokens) != config.tokens_per_view:
            raise ModelConfigError(
                f"view {view.key!r} has {len(drawing.tokens)} tokens, "
                f"want {config.tokens_per_view}")
        kinds, params = drawing_to_arrays(drawing)
        kinds_parts.append(kinds)
        params_parts.append(params)
        view_parts.append(np.full(config.tokens_per_view, int(view), dtype=np.int64))
    return (np.concatenate(kinds_parts), np.concatenate(params_parts),
            np.concatenate(view_parts))


def cad_to_arrays(seq: CadSequence) -> tuple[np.ndarray, np.ndarray]:
    kinds = np.array([int(c.kind) for c in seq.commands], dtype=np.int64)
    params = np.array([c.params for c in seq.commands], dtype=np.int64)
    return kinds, params


def predict(cmd_logits: torch.Tensor, arg_logits: torch.Tensor) -> CadSequence:
    """Greedy decode one sample: argmax per position and slot, then mask-merge.

    Ties break toward the lowest category index.
    """
    cmd = np.asarray(cmd_logits.detach().cpu().numpy(), dtype=np.float64)
    arg = np.asarray(arg_logits.detach().cpu().numpy(), dtype=np.float64)
    if cmd.ndim != 2 or arg.ndim != 3:
        raise ModelConfigError("predict expects unbatched (N_c, K) and (N_c, N_p, C) logits")
    kinds = [CadKind(int(k)) for k in cmd.argmax(axis=-1)]
    args = arg.argmax(axis=-1)
    return merge_outputs(kinds, args.tolist())
