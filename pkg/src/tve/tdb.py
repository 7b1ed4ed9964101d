"""Temporal difference block: difference-enhanced tokens interleaved with frames.

Adjacent-frame differences are passed through a single difference-level
attention layer and squashed to (-1, 1), inserted between the frame tokens,
and the combined sequence is run through the temporal transformer. Only the
frame-token outputs are pooled into the global video embedding; the
difference tokens exist to expose motion to the attention stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import transformer as tfm

TDB_VARIANTS = ("tdb", "tdb-sub", "tdb-mlp", "tdb-all", "mean-pool", "temporal-transformer")


class SequenceTooShortError(ad.AutodiffError):
    pass


class UnknownVariantError(ValueError):
    pass


@dataclass
class DiffMLPParams:
    """Two-layer MLP that replaces difference-level attention in the tdb-mlp variant."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.b2": self.b2,
        }


@dataclass
class TDBParams:
    delta: tfm.EncoderLayerParams  # difference-level attention, one layer
    temporal: list[tfm.EncoderLayerParams]
    embeddings: tfm.PositionalTypeEmbeddings
    diff_mlp: DiffMLPParams | None = None

    def named(self, prefix: str = "tdb") -> dict[str, Tensor]:
        out = self.delta.named(f"{prefix}.delta")
        for i, layer in enumerate(self.temporal):
            out.update(layer.named(f"{prefix}.temporal{i}"))
        out.update(self.embeddings.named(f"{prefix}.emb"))
        if self.diff_mlp is not None:
            out.update(self.diff_mlp.named(f"{prefix}.diff_mlp"))
        return out


@dataclass
class TDBOutput:
    frame_outputs: Tensor  # m x d, one row per input frame
    video_global: Tensor  # 1 x d pooled video embedding
    interleaved_inputs: Tensor | None  # (2m-1) x d sequence fed to the transformer
    all_outputs: Tensor  # every token output (frames + differences where present)


def init_diff_mlp(rng: np.random.Generator, dim: int, std: float = 0.02) -> DiffMLPParams:
    hidden = tfm.MLP_WIDTH_FACTOR * dim
    return DiffMLPParams(
        w1=ad.parameter(rng.normal(0.0, std, size=(dim, hidden))),
        b1=ad.parameter(np.zeros(hidden)),
        w2=ad.parameter(rng.normal(0.0, std, size=(hidden, dim))),
        b2=ad.parameter(np.zeros(dim)),
    )


def raw_differences(frames: Tensor) -> Tensor:
    """Adjacent-frame subtraction: row i is frame[i+1] - frame[i]."""
    m = frames.shape[0]
    if m < 2:
        raise SequenceTooShortError("sequence too short for differences (need at least 2 frames)")
    return ad.sub(ad.narrow(frames, 0, 1, m - 1), ad.narrow(frames, 0, 0, m - 1))


def difference_tokens(frames: Tensor, params: TDBParams) -> Tensor:
    """Difference-enhanced tokens: 2*sigmoid(attention(diff + P)) - 1, in (-1, 1)."""
    delta = raw_differences(frames)
    m = frames.shape[0]
    positioned = ad.add(delta, ad.narrow(params.embeddings.pos, 0, 0, m - 1))
    encoded = tfm.encoder_layer_forward(positioned, params.delta)
    return ad.sub(ad.mul(ad.sigmoid(encoded), ad.constant(2.0)), ad.constant(1.0))


def difference_tokens_mlp(frames: Tensor, params: TDBParams) -> Tensor:
    if params.diff_mlp is None:
        raise UnknownVariantError("tdb-mlp variant requires diff_mlp parameters")
    delta = raw_differences(frames)
    m = frames.shape[0]
    positioned = ad.add(delta, ad.narrow(params.embeddings.pos, 0, 0, m - 1))
    p = params.diff_mlp
    hidden = ad.gelu(ad.add(ad.matmul(positioned, p.w1), p.b1))
    encoded = ad.add(ad.matmul(hidden, p.w2), p.b2)
    return ad.sub(ad.mul(ad.sigmoid(encoded), ad.constant(2.0)), ad.constant(1.0))


def interleave(frames: Tensor, diffs: Tensor) -> tuple[Tensor, list[int]]:
    """Insert difference tokens between adjacent frames.

    Returns the (2m-1)-row sequence {f0, d0, f1, d1, ..., f(m-1)} and its
    type ids (frames 0, differences 1). Positional/type embeddings are the
    caller's responsibility via `add_positional_type`.
    """
    m = frames.shape[0]
    if diffs.shape[0] != m - 1:
        raise ad.ShapeError(
            f"interleave: got {diffs.shape[0]} difference tokens for {m} frames, expected {m - 1}"
        )
    stacked = ad.concat([frames, diffs], axis=0)
    order: list[int] = []
    type_ids: list[int] = []
    for i in range(m - 1):
        order.extend([i, m + i])
        type_ids.extend([0, 1])
    order.append(m - 1)
    type_ids.append(0)
    return ad.take_rows(stacked, order), type_ids


def frame_token_indices(m: int) -> list[int]:
    """Positions of the frame tokens (even indices) in the interleaved sequence."""
    return [2 * i for i in range(m)]


def tdb_forward(frames: Tensor, params: TDBParams, variant: str = "tdb") -> TDBOutput:
    """Encode an m-by-d frame sequence into per-frame outputs and a global embedding.

    Variants: "tdb" (full block), "tdb-sub" (raw subtraction inserted),
    "tdb-mlp" (MLP replaces difference-level attention), "tdb-all" (pool all
    token outputs), "mean-pool" (no transformer), "temporal-transformer"
    (frames only, no difference tokens).
    """
    if variant not in TDB_VARIANTS:
        raise UnknownVariantError(f"unknown video encoder variant {variant!r}")
    m = frames.shape[0]

    if variant == "mean-pool":
        # summing in canonical row order makes the pool bit-exactly
        # permutation-invariant; gradients scatter back through the gather
        order = np.lexsort(frames.data.T[::-1])
        pooled = ad.mean(ad.take_rows(frames, order), axis=0, keepdims=True)
        return TDBOutput(frames, pooled, None, frames)

    if variant == "temporal-transformer":
        x = tfm.add_positional_type(frames, params.embeddings, [0] * m)
        out = tfm.encoder_forward(x, params.temporal)
        return TDBOutput(out, ad.mean(out, axis=0, keepdims=True), None, out)

    if variant == "tdb-sub":
        diffs = raw_differences(frames)
    elif variant == "tdb-mlp":
        diffs = difference_tokens_mlp(frames, params)
    else:
        diffs = difference_tokens(frames, params)

    seq, type_ids = interleave(frames, diffs)
    te = tfm.add_positional_type(seq, params.embeddings, type_ids)
    out = tfm.encoder_forward(te, params.temporal)
    frame_outputs = ad.take_rows(out, frame_token_indices(m))
    if variant == "tdb-all":
        pooled = ad.mean(out, axis=0, keepdims=True)
    else:
        pooled = ad.mean(frame_outputs, axis=0, keepdims=True)
    return TDBOutput(frame_outputs, pooled, te, out)
