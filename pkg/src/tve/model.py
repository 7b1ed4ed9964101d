"""Parameter assembly and batch encoding for the full retrieval model.

A model owns one temporal difference block (shared between the main video
path and the alignment block's resampled path), one alignment block with
shared centers, and an optional learnable logit scale. Text arrives as
precomputed token embeddings; its global representation is the [CLS] row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import tab as tab_mod
from . import tdb as tdb_mod
from . import transformer as tfm

LOGIT_SCALE_INIT = float(np.log(1.0 / 0.07))
LOGIT_SCALE_MAX = float(np.log(100.0))


@dataclass
class ModelConfig:
    dim: int = 512
    frames: int = 12
    tokens: int = 32
    heads: int = 0  # 0 = pick by dimension
    temporal_layers: int = 4
    centers: int = 5
    tdb_variant: str = "tdb"
    tab_variant: str = "tdb"
    keep_difference_tokens: bool = False
    literal_eq7: bool = False

    def __post_init__(self):
        if self.heads == 0:
            self.heads = tfm.default_heads(self.dim)
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.tdb_variant not in tdb_mod.TDB_VARIANTS:
            raise ValueError(f"unknown video encoder variant {self.tdb_variant!r}")
        if self.tab_variant not in tab_mod.TAB_VARIANTS:
            raise ValueError(f"unknown alignment variant {self.tab_variant!r}")
        if self.centers < 1:
            raise ValueError("need at least one shared center")
        if self.frames < 2:
            raise ValueError("need at least two frames")

    @property
    def max_positions(self) -> int:
        return 2 * self.frames - 1


def toy_config(frames=3, dim=8, centers=3, temporal_layers=1, heads=2, **kw) -> ModelConfig:
    return ModelConfig(
        dim=dim,
        frames=frames,
        tokens=kw.pop("tokens", 8),
        heads=heads,
        temporal_layers=temporal_layers,
        centers=centers,
        **kw,
    )


@dataclass
class ModelParams:
    tdb: tdb_mod.TDBParams
    tab: tab_mod.TABParams
    log_logit_scale: Tensor | None  # None in literal mode (scale pinned to 1)

    def logit_scale(self) -> Tensor:
        if self.log_logit_scale is None:
            return ad.constant(1.0)
        return ad.exp(self.log_logit_scale)

    def clamp_logit_scale(self) -> None:
        if self.log_logit_scale is not None:
            np.minimum(self.log_logit_scale.data, LOGIT_SCALE_MAX, out=self.log_logit_scale.data)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    depth = cfg.temporal_layers
    tdb_params = tdb_mod.TDBParams(
        delta=tfm.init_encoder_layer(rng, cfg.dim, cfg.heads, depth=1),
        temporal=[
            tfm.init_encoder_layer(rng, cfg.dim, cfg.heads, depth=depth)
            for _ in range(cfg.temporal_layers)
        ],
        embeddings=tfm.init_embeddings(rng, cfg.max_positions, cfg.dim),
        diff_mlp=tdb_mod.init_diff_mlp(rng, cfg.dim) if cfg.tdb_variant == "tdb-mlp" else None,
    )
    tab_params = tab_mod.TABParams(
        shared=tab_mod.init_centers(rng, cfg.centers, cfg.dim),
        corr=tfm.init_encoder_layer(rng, cfg.dim, cfg.heads, depth=1),
        keep_difference_tokens=cfg.keep_difference_tokens,
    )
    scale = None if cfg.literal_eq7 else ad.parameter(np.array([LOGIT_SCALE_INIT]))
    return ModelParams(tdb_params, tab_params, scale)


def named_parameters(params: ModelParams) -> dict[str, Tensor]:
    out = params.tdb.named("tdb")
    out.update(params.tab.named("tab"))
    if params.log_logit_scale is not None:
        out["log_logit_scale"] = params.log_logit_scale
    return out


def zero_grads(params: ModelParams) -> None:
    for t in named_parameters(params).values():
        t.zero_grad()


@dataclass
class PairEncoding:
    video_global: Tensor  # 1 x d
    video_aligned: Tensor  # 1 x d
    text_global: Tensor  # 1 x d ([CLS] row, not trainable)
    text_aligned: Tensor  # 1 x d


def encode_video(params: ModelParams, cfg: ModelConfig, frames: np.ndarray) -> tuple[Tensor, Tensor]:
    """Global and aligned video embeddings for one m-by-d frame array."""
    frame_tensor = ad.constant(frames)
    main = tdb_mod.tdb_forward(frame_tensor, params.tdb, variant=cfg.tdb_variant)
    aligned = tab_mod.tab_video(
        frame_tensor,
        params.tdb,
        params.tab,
        variant=cfg.tab_variant,
        main_outputs=main.frame_outputs,
    )
    return main.video_global, aligned.pooled


def encode_text(
    params: ModelParams, cfg: ModelConfig, tokens: np.ndarray, valid_len: int
) -> tuple[Tensor, Tensor]:
    """Global ([CLS] row) and aligned text embeddings for one token array."""
    token_tensor = ad.constant(tokens)
    text_global = ad.narrow(token_tensor, 0, 0, 1)
    aligned = tab_mod.tab_text(token_tensor, valid_len, params.tab)
    return text_global, aligned.pooled


def encode_pair(
    params: ModelParams,
    cfg: ModelConfig,
    frames: np.ndarray,
    tokens: np.ndarray,
    valid_len: int,
) -> PairEncoding:
    video_global, video_aligned = encode_video(params, cfg, frames)
    text_global, text_aligned = encode_text(params, cfg, tokens, valid_len)
    return PairEncoding(video_global, video_aligned, text_global, text_aligned)


def _cosine_matrix(rows_a: list[Tensor], rows_b: list[Tensor]) -> Tensor:
    a = ad.l2_normalize(ad.concat(rows_a, axis=0), axis=1)
    b = ad.l2_normalize(ad.concat(rows_b, axis=0), axis=1)
    return ad.matmul(a, ad.transpose(b))


def batch_similarities(
    params: ModelParams,
    cfg: ModelConfig,
    batch: list[tuple[np.ndarray, np.ndarray, int]],
) -> tuple[Tensor, Tensor]:
    """Global and aligned B-by-B cosine matrices for (frames, tokens, valid_len) pairs."""
    encodings = [encode_pair(params, cfg, f, t, n) for f, t, n in batch]
    sim_global = _cosine_matrix(
        [e.text_global for e in encodings], [e.video_global for e in encodings]
    )
    sim_aligned = _cosine_matrix(
        [e.text_aligned for e in encodings], [e.video_aligned for e in encodings]
    )
    return sim_global, sim_aligned


def encode_corpus(
    params: ModelParams,
    cfg: ModelConfig,
    videos: list[np.ndarray],
    texts: list[tuple[np.ndarray, int]],
) -> dict[str, np.ndarray]:
    """Plain-array embeddings for evaluation (no gradients kept)."""
    vg, va = [], []
    for frames in videos:
        g, a = encode_video(params, cfg, frames)
        vg.append(g.data[0])
        va.append(a.data[0])
    tg, ta = [], []
    for tokens, valid_len in texts:
        g, a = encode_text(params, cfg, tokens, valid_len)
        tg.append(g.data[0])
        ta.append(a.data[0])
    return {
        "video_global": np.array(vg),
        "video_aligned": np.array(va),
        "text_global": np.array(tg),
        "text_aligned": np.array(ta),
    }
