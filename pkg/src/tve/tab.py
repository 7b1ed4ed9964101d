"""Temporal alignment block: soft-assignment aggregation against shared centers.

Video tokens and text tokens are both scored against one set of learnable
centers; per-center residual sums (relative to separate learnable anchor
vectors) are L2-normalized and mean-pooled into the aligned representations.
The video path can prepend a sparsely resampled, difference-enhanced token
stream so that motion-heavy frames pull weight toward action-like centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import tdb as tdb_mod
from . import transformer as tfm

TAB_VARIANTS = ("base", "temporal", "transformer", "tdb")


class EmptyTextError(ad.AutodiffError):
    pass


@dataclass
class SharedCenters:
    """K learnable centers scored by both modalities, plus per-center anchors.

    The same instance must back the video and the text path; sharing is by
    object identity, not by value.
    """

    centers: Tensor  # K x d, dot-product scored against tokens
    anchors: Tensor  # K x d, subtracted before residual aggregation

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.centers": self.centers, f"{prefix}.anchors": self.anchors}


@dataclass
class TABParams:
    shared: SharedCenters
    corr: tfm.EncoderLayerParams  # 1-layer transformer on the resampled stream
    keep_difference_tokens: bool = False

    def named(self, prefix: str = "tab") -> dict[str, Tensor]:
        out = self.shared.named(f"{prefix}.shared")
        out.update(self.corr.named(f"{prefix}.corr"))
        return out


@dataclass
class AlignedEmbedding:
    pooled: Tensor  # 1 x d aligned representation
    center_embeddings: Tensor  # K x d unit rows (or zero rows under the epsilon guard)
    token_count: int  # rows that entered the aggregation


def init_centers(rng: np.random.Generator, count: int, dim: int) -> SharedCenters:
    std = 1.0 / np.sqrt(dim)
    return SharedCenters(
        centers=ad.parameter(rng.normal(0.0, std, size=(count, dim))),
        anchors=ad.parameter(rng.normal(0.0, std, size=(count, dim))),
    )


def center_confidence(tokens: Tensor, centers: Tensor) -> Tensor:
    """Soft assignment of each token to each center: row-wise softmax of dot products."""
    return ad.softmax(ad.matmul(tokens, ad.transpose(centers)), axis=-1)


def aggregate(tokens: Tensor, weights: Tensor, anchors: Tensor) -> Tensor:
    """Per-center weighted residual sum, L2-normalized per center row.

    Row j is normalize(sum_i W[i,j] * (tokens[i] - anchors[j])); a vanishing
    residual sum stays at (near) zero under the epsilon guard.
    """
    if weights.shape[0] != tokens.shape[0] or weights.shape[1] != anchors.shape[0]:
        raise ad.ShapeError(
            f"aggregate: weights {weights.shape} do not match {tokens.shape[0]} tokens "
            f"and {anchors.shape[0]} centers"
        )
    # canonical row order makes the token sum bit-exactly permutation-invariant
    order = np.lexsort(tokens.data.T[::-1])
    tokens = ad.take_rows(tokens, order)
    weights = ad.take_rows(weights, order)
    pulled = ad.matmul(ad.transpose(weights), tokens)  # K x d
    mass = ad.transpose(ad.tensor_sum(weights, axis=0, keepdims=True))  # K x 1
    residual = ad.sub(pulled, ad.mul(mass, anchors))
    return ad.l2_normalize(residual, axis=1)


def resample_large_rate(frames: Tensor) -> Tensor:
    """Every second frame (even indices), so motion shows between neighbors."""
    m = frames.shape[0]
    if m < 3:
        raise tdb_mod.SequenceTooShortError(
            f"large-rate resampling needs at least 3 frames, got {m}"
        )
    return ad.take_rows(frames, list(range(0, m, 2)))


def _difference_enhanced_stream(
    frames: Tensor, shared_tdb: tdb_mod.TDBParams, params: TABParams
) -> Tensor:
    """Shared-TDB encoding of the resampled frames plus the 1-layer correlator."""
    sparse = resample_large_rate(frames)
    inner = tdb_mod.tdb_forward(sparse, shared_tdb, variant="tdb")
    if params.keep_difference_tokens:
        mixed = tfm.encoder_layer_forward(inner.all_outputs, params.corr)
        return ad.take_rows(mixed, tdb_mod.frame_token_indices(sparse.shape[0]))
    return tfm.encoder_layer_forward(inner.frame_outputs, params.corr)


def tab_video(
    frames: Tensor,
    shared_tdb: tdb_mod.TDBParams,
    params: TABParams,
    variant: str = "tdb",
    main_outputs: Tensor | None = None,
) -> AlignedEmbedding:
    """Aligned video representation.

    Variants: "base" aggregates the raw frames; "temporal" aggregates the
    main path's per-frame outputs; "transformer" appends a plain 1-layer
    transformer over the resampled frames; "tdb" appends the shared-TDB
    difference-enhanced stream (token count m + ceil(m/2)).
    """
    if variant not in TAB_VARIANTS:
        raise tdb_mod.UnknownVariantError(f"unknown alignment variant {variant!r}")
    if variant == "base":
        tokens = frames
    elif variant == "temporal":
        if main_outputs is None:
            main_outputs = tdb_mod.tdb_forward(frames, shared_tdb, variant="tdb").frame_outputs
        tokens = main_outputs
    elif variant == "transformer":
        sparse = resample_large_rate(frames)
        tokens = ad.concat([frames, tfm.encoder_layer_forward(sparse, params.corr)], axis=0)
    else:
        tokens = ad.concat([frames, _difference_enhanced_stream(frames, shared_tdb, params)], axis=0)

    weights = center_confidence(tokens, params.shared.centers)
    centers = aggregate(tokens, weights, params.shared.anchors)
    return AlignedEmbedding(ad.mean(centers, axis=0, keepdims=True), centers, tokens.shape[0])


def tab_text(tokens: Tensor, valid_len: int, params: TABParams) -> AlignedEmbedding:
    """Aligned text representation over rows 0..valid_len-1 (the [CLS] row included)."""
    if valid_len < 1:
        raise EmptyTextError("text must contain at least one token")
    if valid_len > tokens.shape[0]:
        raise ad.ShapeError(
            f"valid length {valid_len} exceeds the {tokens.shape[0]} stored token rows"
        )
    used = ad.narrow(tokens, 0, 0, valid_len)
    weights = center_confidence(used, params.shared.centers)
    centers = aggregate(used, weights, params.shared.anchors)
    return AlignedEmbedding(ad.mean(centers, axis=0, keepdims=True), centers, valid_len)
