"""Straight-line numpy recomputation oracles, independent of the autodiff path.

Everything here is written with explicit loops (or direct formula
transcription) and reads only parameter `.data`, so a test comparing the
engine against these functions exercises two genuinely different routes.
"""

from __future__ import annotations

import math

import numpy as np


def matmul_ref(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def softmax_ref(row: np.ndarray) -> np.ndarray:
    e = np.array([math.exp(v) for v in row])
    return e / e.sum()


def layer_norm_ref(x, gain, bias, eps=1e-5):
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        mu = x[i].mean()
        var = x[i].var()
        out[i] = (x[i] - mu) / math.sqrt(var + eps) * gain + bias
    return out


def gelu_ref(x):
    k = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(k * (x + 0.044715 * x**3)))


def sigmoid_ref(x):
    return 1.0 / (1.0 + np.exp(-x))


def attention_ref(x: np.ndarray, p) -> np.ndarray:
    """Multi-head self-attention with per-position loops."""
    n, d = x.shape
    heads = p.heads
    dh = d // heads
    q = matmul_ref(x, p.w_q.data) + p.b_q.data
    k = matmul_ref(x, p.w_k.data) + p.b_k.data
    v = matmul_ref(x, p.w_v.data) + p.b_v.data
    merged = np.zeros((n, d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(n):
            logits = np.array([q[i, sl] @ k[j, sl] / math.sqrt(dh) for j in range(n)])
            weights = softmax_ref(logits)
            for j in range(n):
                merged[i, sl] += weights[j] * v[j, sl]
    return matmul_ref(merged, p.w_o.data) + p.b_o.data


def encoder_layer_ref(x: np.ndarray, p) -> np.ndarray:
    h = x + attention_ref(layer_norm_ref(x, p.ln1_gain.data, p.ln1_bias.data), p)
    hidden = gelu_ref(matmul_ref(layer_norm_ref(h, p.ln2_gain.data, p.ln2_bias.data), p.w_fc.data) + p.b_fc.data)
    return h + matmul_ref(hidden, p.w_proj.data) + p.b_proj.data


def difference_tokens_ref(frames: np.ndarray, params) -> np.ndarray:
    m = frames.shape[0]
    delta = np.array([frames[i + 1] - frames[i] for i in range(m - 1)])
    positioned = delta + params.embeddings.pos.data[: m - 1]
    encoded = encoder_layer_ref(positioned, params.delta)
    return 2.0 * sigmoid_ref(encoded) - 1.0


def tdb_ref(frames: np.ndarray, params) -> tuple[np.ndarray, np.ndarray]:
    """Full difference-block recomputation; returns (frame outputs, pooled)."""
    m = frames.shape[0]
    diffs = difference_tokens_ref(frames, params)
    seq = []
    type_ids = []
    for i in range(m - 1):
        seq.append(frames[i])
        type_ids.append(0)
        seq.append(diffs[i])
        type_ids.append(1)
    seq.append(frames[m - 1])
    type_ids.append(0)
    x = np.array(seq)
    x = x + params.embeddings.pos.data[: 2 * m - 1]
    x = x + params.embeddings.typ.data[type_ids]
    for layer in params.temporal:
        x = encoder_layer_ref(x, layer)
    frame_outputs = x[[2 * i for i in range(m)]]
    return frame_outputs, frame_outputs.mean(axis=0)


def confidence_ref(tokens: np.ndarray, centers: np.ndarray) -> np.ndarray:
    eta, k = tokens.shape[0], centers.shape[0]
    w = np.zeros((eta, k))
    for i in range(eta):
        w[i] = softmax_ref(np.array([tokens[i] @ centers[j] for j in range(k)]))
    return w


def aggregate_ref(tokens: np.ndarray, centers: np.ndarray, anchors: np.ndarray, eps=1e-12) -> np.ndarray:
    """Double-loop soft-assignment residual aggregation with per-row normalization."""
    w = confidence_ref(tokens, centers)
    k, d = anchors.shape
    out = np.zeros((k, d))
    for j in range(k):
        acc = np.zeros(d)
        for i in range(tokens.shape[0]):
            acc += w[i, j] * (tokens[i] - anchors[j])
        norm = math.sqrt(float(acc @ acc))
        out[j] = acc / max(norm, eps)
    return out


def tab_video_tdb_ref(frames: np.ndarray, tdb_params, tab_params) -> np.ndarray:
    """End-to-end aligned-video recomputation for the difference-enhanced variant."""
    sparse = frames[list(range(0, frames.shape[0], 2))]
    inner_frames, _ = tdb_ref(sparse, tdb_params)
    stream = encoder_layer_ref(inner_frames, tab_params.corr)
    tokens = np.concatenate([frames, stream], axis=0)
    centers = aggregate_ref(
        tokens, tab_params.shared.centers.data, tab_params.shared.anchors.data
    )
    return centers.mean(axis=0)


def tab_text_ref(tokens: np.ndarray, valid_len: int, tab_params) -> np.ndarray:
    centers = aggregate_ref(
        tokens[:valid_len], tab_params.shared.centers.data, tab_params.shared.anchors.data
    )
    return centers.mean(axis=0)


def symmetric_loss_ref(s: np.ndarray, scale: float) -> float:
    """Direct softmax transcription of the two cross-entropy directions."""
    b = s.shape[0]
    logits = scale * s

    def direction(mat):
        total = 0.0
        for i in range(b):
            p = softmax_ref(mat[i])
            total -= math.log(p[i])
        return total / b

    return 0.5 * (direction(logits) + direction(logits.T))


def rank_ref(scores: np.ndarray, true_index: int) -> int:
    """Sort-based rank with optimistic tie placement."""
    order = np.argsort(-scores, kind="stable")
    target = scores[true_index]
    rank = 1
    for idx in order:
        if scores[idx] > target:
            rank += 1
    return rank


def metrics_ref(ranks: list[int]) -> dict[str, float]:
    arr = sorted(ranks)
    n = len(arr)
    if n % 2:
        median = float(arr[n // 2])
    else:
        median = (arr[n // 2 - 1] + arr[n // 2]) / 2.0
    return {
        "R@1": 100.0 * sum(r <= 1 for r in arr) / n,
        "R@5": 100.0 * sum(r <= 5 for r in arr) / n,
        "R@10": 100.0 * sum(r <= 10 for r in arr) / n,
        "MdR": median,
        "MnR": sum(arr) / n,
    }
