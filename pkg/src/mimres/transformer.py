"""Pre-norm transformer blocks shared by the inpainter and the detector.

Attention supports an optional key padding mask so variable-length block
selections can be batched; padded keys are excluded from every softmax,
which keeps padded positions from influencing real tokens.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} must be divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = self.head_dim ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        if key_padding_mask is not None:
            # key_padding_mask: (b, n) True where the token is padding
            attn = attn.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.drop(self.fc2(self.drop(self.act(self.fc1(x)))))


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0, dropout: float = 0.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), dropout)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), key_padding_mask)
        x = x + self.mlp(self.norm2(x))
        return x


def init_transformer_weights(module: nn.Module) -> None:
    """Xavier-uniform linear weights, zero biases, unit layernorm.

    Xavier (rather than small truncated-normal) keeps the attention and MLP
    signal paths alive at initialization; tokens and positional tables are
    initialized separately by their owners.
    """
    if isinstance(module, nn.Linear):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def _sincos_1d(dim: int, positions: "torch.Tensor") -> torch.Tensor:
    omega = torch.arange(dim // 2, dtype=torch.float64) / (dim / 2.0)
    omega = 1.0 / 10000.0 ** omega
    angles = positions.to(torch.float64)[:, None] * omega[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


def sincos_pos_embed_2d(dim: int, grid_side: int) -> torch.Tensor:
    """2D sine-cosine positional table, (grid_side**2, dim), row-major positions.

    Gives positional tables meaningful spatial structure from step zero;
    tables remain trainable parameters after this initialization. Falls back
    to zeros (caller applies random init) when dim is not a multiple of 4.
    """
    if dim % 4 != 0:
        return torch.zeros(grid_side * grid_side, dim)
    ys, xs = torch.meshgrid(torch.arange(grid_side), torch.arange(grid_side), indexing="ij")
    emb_y = _sincos_1d(dim // 2, ys.reshape(-1))
    emb_x = _sincos_1d(dim // 2, xs.reshape(-1))
    return torch.cat([emb_y, emb_x], dim=1).to(torch.float32)


def patchify(images: torch.Tensor, patch_side: int) -> torch.Tensor:
    """(B, 3, S, S) -> (B, L, patch_side**2 * 3) with row-major patch order."""
    b, c, s, _ = images.shape
    p = patch_side
    g = s // p
    x = images.reshape(b, c, g, p, g, p)
    x = x.permute(0, 2, 4, 3, 5, 1)  # b, gy, gx, py, px, c
    return x.reshape(b, g * g, p * p * c)


def unpatchify(tokens: torch.Tensor, patch_side: int, grid_side: int) -> torch.Tensor:
    """(B, L, patch_side**2 * 3) -> (B, 3, S, S); inverse of :func:`patchify`."""
    b, l, _ = tokens.shape
    p = patch_side
    g = grid_side
    x = tokens.reshape(b, g, g, p, p, 3)
    x = x.permute(0, 5, 1, 3, 2, 4)
    return x.reshape(b, 3, g * p, g * p)
