"""Pre-norm multi-head self-attention encoder layers plus positional/type tables.

One layer computes ``x + MSA(LN(x))`` followed by ``h + MLP(LN(h))`` on an
n-by-d token sequence. Heads are realized by column-slicing the packed
query/key/value projections, so no reshape primitive is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MLP_WIDTH_FACTOR = 4


class SequenceLengthError(ad.AutodiffError):
    """Token sequence exceeds the positional table."""


@dataclass
class EncoderLayerParams:
    """Weights of one encoder layer (packed projections, MLP, two LayerNorms)."""

    heads: int
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    w_fc: Tensor
    b_fc: Tensor
    w_proj: Tensor
    b_proj: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for key in (
            "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
            "w_fc", "b_fc", "w_proj", "b_proj",
            "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
        ):
            out[f"{prefix}.{key}"] = getattr(self, key)
        return out


@dataclass
class PositionalTypeEmbeddings:
    """Learned positional rows and the two token-type rows (0 = frame, 1 = difference)."""

    pos: Tensor  # max_len x d
    typ: Tensor  # 2 x d

    @property
    def max_len(self) -> int:
        return self.pos.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.pos": self.pos, f"{prefix}.typ": self.typ}


def default_heads(dim: int) -> int:
    """8 heads for full-size models, 2 at test scale."""
    if dim % 8 == 0 and dim >= 64:
        return 8
    return 2


def init_encoder_layer(
    rng: np.random.Generator, dim: int, heads: int, std: float = 0.02, depth: int = 1
) -> EncoderLayerParams:
    """Random init; output projections shrink with stack depth to tame residual growth."""
    if dim % heads != 0:
        raise ad.ShapeError(f"encoder layer: dim {dim} not divisible by heads {heads}")
    out_std = std / np.sqrt(2.0 * max(depth, 1))

    def w(rows, cols, s):
        return ad.parameter(rng.normal(0.0, s, size=(rows, cols)))

    def b(cols):
        return ad.parameter(np.zeros(cols))

    hidden = MLP_WIDTH_FACTOR * dim
    return EncoderLayerParams(
        heads=heads,
        w_q=w(dim, dim, std), b_q=b(dim),
        w_k=w(dim, dim, std), b_k=b(dim),
        w_v=w(dim, dim, std), b_v=b(dim),
        w_o=w(dim, dim, out_std), b_o=b(dim),
        w_fc=w(dim, hidden, std), b_fc=b(hidden),
        w_proj=w(hidden, dim, out_std), b_proj=b(dim),
        ln1_gain=ad.parameter(np.ones(dim)), ln1_bias=b(dim),
        ln2_gain=ad.parameter(np.ones(dim)), ln2_bias=b(dim),
    )


def init_embeddings(
    rng: np.random.Generator, max_len: int, dim: int, std: float = 0.01
) -> PositionalTypeEmbeddings:
    return PositionalTypeEmbeddings(
        pos=ad.parameter(rng.normal(0.0, std, size=(max_len, dim))),
        typ=ad.parameter(rng.normal(0.0, std, size=(2, dim))),
    )


def multi_head_attention(x: Tensor, p: EncoderLayerParams) -> Tensor:
    """Self-attention over an n-by-d sequence; scale is 1/sqrt(head dim)."""
    n, d = x.shape
    dh = d // p.heads
    scale = 1.0 / np.sqrt(dh)
    q = ad.add(ad.matmul(x, p.w_q), p.b_q)
    k = ad.add(ad.matmul(x, p.w_k), p.b_k)
    v = ad.add(ad.matmul(x, p.w_v), p.b_v)
    heads = []
    for h in range(p.heads):
        qh = ad.narrow(q, 1, h * dh, dh)
        kh = ad.narrow(k, 1, h * dh, dh)
        vh = ad.narrow(v, 1, h * dh, dh)
        att = ad.softmax(ad.mul(ad.matmul(qh, ad.transpose(kh)), ad.constant(scale)), axis=-1)
        heads.append(ad.matmul(att, vh))
    merged = heads[0] if p.heads == 1 else ad.concat(heads, axis=1)
    return ad.add(ad.matmul(merged, p.w_o), p.b_o)


def mlp(x: Tensor, p: EncoderLayerParams) -> Tensor:
    hidden = ad.gelu(ad.add(ad.matmul(x, p.w_fc), p.b_fc))
    return ad.add(ad.matmul(hidden, p.w_proj), p.b_proj)


def encoder_layer_forward(x: Tensor, p: EncoderLayerParams) -> Tensor:
    h = ad.add(x, multi_head_attention(ad.layer_norm(x, p.ln1_gain, p.ln1_bias), p))
    return ad.add(h, mlp(ad.layer_norm(h, p.ln2_gain, p.ln2_bias), p))


def encoder_forward(x: Tensor, layers: list[EncoderLayerParams]) -> Tensor:
    """Run a stack of encoder layers; output shape equals input shape."""
    for layer in layers:
        x = encoder_layer_forward(x, layer)
    return x


def add_positional_type(
    x: Tensor, emb: PositionalTypeEmbeddings, type_ids: list[int]
) -> Tensor:
    """Add positional row i and the type row for each token: x[i] + P[i] + T[type]."""
    n = x.shape[0]
    if n > emb.max_len:
        raise SequenceLengthError(
            f"sequence of {n} tokens exceeds positional table of {emb.max_len}"
        )
    if len(type_ids) != n:
        raise ad.ShapeError(f"type_ids length {len(type_ids)} does not match {n} tokens")
    if any(t not in (0, 1) for t in type_ids):
        raise ad.ShapeError("type_ids must be 0 (frame) or 1 (difference)")
    return ad.add(ad.add(x, ad.narrow(emb.pos, 0, 0, n)), ad.take_rows(emb.typ, type_ids))
