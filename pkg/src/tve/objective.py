"""Symmetric contrastive objective and the fused inference similarity.

The batch similarity matrix pairs text i with video i on the diagonal; the
loss is the mean of the text-to-video and video-to-text cross entropies.
Cosine logits are optionally sharpened by a learnable scale (see
`ModelParams.logit_scale`); a literal mode pins the scale to 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

logger = logging.getLogger(__name__)

COSINE_EPS = 1e-12


@dataclass
class LossParts:
    total: Tensor
    global_term: Tensor
    aligned_term: Tensor


def _as_scale(logit_scale) -> Tensor:
    if isinstance(logit_scale, Tensor):
        return logit_scale
    return ad.constant(float(logit_scale))


def symmetric_loss(similarities: Tensor, logit_scale=1.0) -> Tensor:
    """Mean of row-wise and column-wise cross entropy against the diagonal.

    For a square B-by-B matrix S: the text-to-video term treats each row as
    logits over videos with the diagonal as the true class; the video-to-text
    term does the same over columns. A 1-by-1 batch gives exactly zero.
    """
    b, b2 = similarities.shape
    if b != b2:
        raise ad.ShapeError(f"symmetric_loss: similarity matrix must be square, got {similarities.shape}")
    scale = _as_scale(logit_scale)
    eye = ad.constant(np.eye(b))
    inv_b = ad.constant(-1.0 / b)

    def direction(matrix: Tensor) -> Tensor:
        log_probs = ad.log(ad.softmax(ad.mul(matrix, scale), axis=-1))
        return ad.mul(ad.tensor_sum(ad.mul(log_probs, eye)), inv_b)

    t2v = direction(similarities)
    v2t = direction(ad.transpose(similarities))
    return ad.mul(ad.add(t2v, v2t), ad.constant(0.5))


def combined_loss(sim_global: Tensor, sim_aligned: Tensor, w: float = 0.5, logit_scale=1.0) -> LossParts:
    """w * loss(global similarities) + (1 - w) * loss(aligned similarities)."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"loss weight w must lie in [0, 1], got {w}")
    loss_g = symmetric_loss(sim_global, logit_scale)
    loss_a = symmetric_loss(sim_aligned, logit_scale)
    total = ad.add(ad.mul(loss_g, ad.constant(w)), ad.mul(loss_a, ad.constant(1.0 - w)))
    return LossParts(total, loss_g, loss_a)


def cosine(u: np.ndarray, v: np.ndarray, eps: float = COSINE_EPS) -> float:
    """Cosine similarity with an epsilon guard against zero-norm vectors."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= eps or nv <= eps:
        logger.debug("cosine: zero-norm vector encountered, returning guarded value")
    return float(u @ v) / (max(nu, eps) * max(nv, eps))


def fused_similarity(
    text_global: np.ndarray,
    video_global: np.ndarray,
    text_aligned: np.ndarray,
    video_aligned: np.ndarray,
    w: float = 0.5,
) -> float:
    """Inference-time score: w * cos(global pair) + (1 - w) * cos(aligned pair)."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"fusion weight w must lie in [0, 1], got {w}")
    return w * cosine(text_global, video_global) + (1.0 - w) * cosine(text_aligned, video_aligned)
