"""What the temporal blocks compute, on a tiny random video.

Run:  python3 demos/02_temporal_blocks.py
"""

import numpy as np

from tve import autodiff as ad
from tve import model
from tve import tab
from tve import tdb

rng = np.random.default_rng(3)
cfg = model.toy_config(frames=6, dim=8, centers=3, temporal_layers=2, heads=2)
params = model.init_params(cfg, rng)

frames = rng.standard_normal((6, 8))

# The difference block turns adjacent-frame subtraction into bounded motion
# tokens and interleaves them with the frames before the temporal stack.
diffs = tdb.difference_tokens(ad.constant(frames), params.tdb)
print("difference tokens lie in (-1, 1):", float(diffs.data.min()), float(diffs.data.max()))

out = tdb.tdb_forward(ad.constant(frames), params.tdb, variant="tdb")
print("interleaved sequence length:", out.interleaved_inputs.shape[0])  # 2m-1
print("per-frame outputs:", out.frame_outputs.shape, "pooled video:", out.video_global.shape)

# Order matters to the difference block, but not to mean pooling.
reversed_out = tdb.tdb_forward(ad.constant(frames[::-1].copy()), params.tdb, variant="tdb")
gap = np.abs(out.video_global.data - reversed_out.video_global.data).max()
print(f"difference block, reversed input, pooled gap: {gap:.4f}")

mean_fwd = tdb.tdb_forward(ad.constant(frames), params.tdb, variant="mean-pool")
mean_rev = tdb.tdb_forward(ad.constant(frames[::-1].copy()), params.tdb, variant="mean-pool")
print(
    "mean pooling, reversed input, identical:",
    bool(np.array_equal(mean_fwd.video_global.data, mean_rev.video_global.data)),
)

# The alignment block aggregates video and text tokens against the same
# learnable centers; each center row is a unit-normalized residual sum.
aligned_video = tab.tab_video(ad.constant(frames), params.tdb, params.tab, variant="tdb")
print("video tokens aggregated:", aligned_video.token_count)  # m + ceil(m/2)
print("center rows norm:", np.linalg.norm(aligned_video.center_embeddings.data, axis=1))

tokens = rng.standard_normal((5, 8))
aligned_text = tab.tab_text(ad.constant(tokens), 4, params.tab)
print("aligned text embedding shape:", aligned_text.pooled.shape)
