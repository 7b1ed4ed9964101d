"""Adam training loop, run configuration, and binary checkpoints.

Configuration round-trips through a plain ``key = value`` text file; the
environment variable ``TVE_SEED`` overrides the configured seed. Checkpoints
are self-contained: they embed the config text, the step counter, every
model tensor, and the optimizer moments at full float64 precision.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from . import model as model_mod
from . import objective
from . import retrieval
from .autodiff import Tensor, has_nonfinite

CHECKPOINT_MAGIC = b"TVCK"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    # optimization
    batch_size: int = 8
    epochs: int = 1
    max_steps: int = 0  # 0 = no cap
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    w: float = 0.5
    seed: int = 0
    # architecture
    dim: int = 512
    frames: int = 12
    tokens: int = 32
    heads: int = 0
    temporal_layers: int = 4
    centers: int = 5
    tdb_variant: str = "tdb"
    tab_variant: str = "tdb"
    keep_difference_tokens: bool = False
    literal_eq7: bool = False
    # paths
    videos: str = ""
    texts: str = ""
    manifest: str = ""
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"loss weight w must lie in [0, 1], got {self.w}")
        if self.centers < 1:
            raise ValueError("need at least one shared center")

    def model_config(self) -> model_mod.ModelConfig:
        return model_mod.ModelConfig(
            dim=self.dim,
            frames=self.frames,
            tokens=self.tokens,
            heads=self.heads,
            temporal_layers=self.temporal_layers,
            centers=self.centers,
            tdb_variant=self.tdb_variant,
            tab_variant=self.tab_variant,
            keep_difference_tokens=self.keep_difference_tokens,
            literal_eq7=self.literal_eq7,
        )


def config_to_text(cfg: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(TrainConfig)]
    return "\n".join(lines) + "\n"


def config_from_text(
    text: str, overrides: dict | None = None, env_override: bool = True
) -> TrainConfig:
    """Parse ``key = value`` lines; later keys win; unknown keys are rejected."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in fields:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_field(fields[key].type, raw)
    if overrides:
        values.update(overrides)
    if env_override and "TVE_SEED" in os.environ:
        values["seed"] = int(os.environ["TVE_SEED"])
    return TrainConfig(**values)


def _parse_field(type_name: str, raw: str):
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    if type_name == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.98,
    eps: float = 1e-8,
) -> None:
    """Standard bias-corrected Adam update, applied in place.

    Parameters without a gradient entry are treated as zero-gradient: their
    moments decay and the values stay put once the moments are zero.
    """
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} mismatches {name} {p.data.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# dataset plumbing


@dataclass
class PairedDataset:
    """Loaded embeddings plus the (text, video) id pairs of each split."""

    videos: dataio.EmbeddingFile
    texts: dataio.EmbeddingFile
    entries: list[dataio.ManifestEntry]

    def pairs(self, split: str | None = None) -> list[tuple[str, str]]:
        return [
            (e.text_id, e.video_id)
            for e in self.entries
            if split is None or e.split == split
        ]

    def batch_inputs(self, pairs: list[tuple[str, str]]):
        videos = self.videos.by_id()
        texts = self.texts.by_id()
        out = []
        for text_id, video_id in pairs:
            v = videos[video_id]
            t = texts[text_id]
            out.append((v.values, t.values, t.valid_len))
        return out


def load_dataset(videos_path, texts_path, manifest_path) -> PairedDataset:
    videos = dataio.read_embeddings(videos_path)
    texts = dataio.read_embeddings(texts_path)
    if videos.kind != dataio.KIND_VIDEO:
        raise ValueError(f"{videos_path}: expected a video embedding file")
    if texts.kind != dataio.KIND_TEXT:
        raise ValueError(f"{texts_path}: expected a text embedding file")
    entries = dataio.read_manifest(manifest_path)
    dataio.check_manifest(entries, videos, texts)
    return PairedDataset(videos, texts, entries)


def pairing_for(dataset: PairedDataset, split: str | None = None) -> retrieval.EvalPairing:
    pairs = dataset.pairs(split)
    if not pairs:
        raise ValueError(f"no pairs in split {split!r}")
    text_ids = [t for t, _ in pairs]
    video_ids = sorted({v for _, v in pairs})
    return retrieval.EvalPairing(text_ids, video_ids, dict(pairs))


def evaluate_split(
    params: model_mod.ModelParams,
    cfg: model_mod.ModelConfig,
    dataset: PairedDataset,
    split: str | None,
    w: float,
    ties: str = "optimistic",
) -> tuple[list[retrieval.RetrievalReport], np.ndarray, retrieval.EvalPairing]:
    pairing = pairing_for(dataset, split)
    videos = dataset.videos.by_id()
    texts = dataset.texts.by_id()
    encoded = model_mod.encode_corpus(
        params,
        cfg,
        [videos[v].values for v in pairing.video_ids],
        [(texts[t].values, texts[t].valid_len) for t in pairing.text_ids],
    )
    sims = retrieval.similarity_matrix(
        encoded["text_global"],
        encoded["text_aligned"],
        encoded["video_global"],
        encoded["video_aligned"],
        w,
    )
    reports = [
        retrieval.evaluate_t2v(sims, pairing, ties),
        retrieval.evaluate_v2t(sims, pairing, ties),
    ]
    return reports, sims, pairing


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochLog:
    epoch: int
    loss: float
    loss_global: float
    loss_aligned: float
    val_r1: float | None = None

    def line(self) -> str:
        parts = [
            f"epoch {self.epoch:4d}",
            f"loss {self.loss:.6f}",
            f"global {self.loss_global:.6f}",
            f"aligned {self.loss_aligned:.6f}",
        ]
        if self.val_r1 is not None:
            parts.append(f"val_r1 {self.val_r1:.2f}")
        return "  ".join(parts)


@dataclass
class TrainResult:
    params: model_mod.ModelParams
    state: AdamState
    history: list[EpochLog]
    checkpoint_path: Path | None


def train(cfg: TrainConfig, log=None) -> TrainResult:
    """Run the configured training; deterministic for a fixed config and seed."""
    dataset = load_dataset(cfg.videos, cfg.texts, cfg.manifest)
    mcfg = cfg.model_config()
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    params = model_mod.init_params(mcfg, np.random.default_rng(seeds[0]))
    shuffle_rng = np.random.default_rng(seeds[1])
    state = AdamState()
    named = model_mod.named_parameters(params)

    train_pairs = dataset.pairs("train")
    if not train_pairs and cfg.epochs > 0:
        raise ValueError("no training pairs in manifest")
    has_val = any(e.split == "val" for e in dataset.entries)

    history: list[EpochLog] = []
    steps_done = 0
    for epoch in range(1, cfg.epochs + 1):
        if cfg.max_steps and steps_done >= cfg.max_steps:
            break
        order = shuffle_rng.permutation(len(train_pairs))
        losses, losses_g, losses_a = [], [], []
        for start in range(0, len(order), cfg.batch_size):
            if cfg.max_steps and steps_done >= cfg.max_steps:
                break
            batch_pairs = [train_pairs[i] for i in order[start : start + cfg.batch_size]]
            batch = dataset.batch_inputs(batch_pairs)
            model_mod.zero_grads(params)
            sim_g, sim_a = model_mod.batch_similarities(params, mcfg, batch)
            parts = objective.combined_loss(sim_g, sim_a, cfg.w, params.logit_scale())
            if has_nonfinite(parts.total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {steps_done}, "
                    f"batch texts {[t for t, _ in batch_pairs]}"
                )
            parts.total.backward()
            grads = {k: p.grad for k, p in named.items() if p.grad is not None}
            adam_step(
                named, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps
            )
            params.clamp_logit_scale()
            losses.append(parts.total.item())
            losses_g.append(parts.global_term.item())
            losses_a.append(parts.aligned_term.item())
            steps_done += 1
        entry = EpochLog(
            epoch,
            float(np.mean(losses)) if losses else float("nan"),
            float(np.mean(losses_g)) if losses_g else float("nan"),
            float(np.mean(losses_a)) if losses_a else float("nan"),
        )
        if has_val:
            reports, _, _ = evaluate_split(params, mcfg, dataset, "val", cfg.w)
            entry.val_r1 = reports[0].r1
        history.append(entry)
        if log:
            log(entry.line())

    checkpoint_path = None
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out / "checkpoint.tvck"
        save_checkpoint(checkpoint_path, cfg, params, state)
        (out / "train_log.txt").write_text(
            "".join(e.line() + "\n" for e in history), encoding="utf-8"
        )
    return TrainResult(params, state, history, checkpoint_path)


# ---------------------------------------------------------------------------
# checkpoints


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    head = struct.pack("<H", len(raw_name)) + raw_name
    head += struct.pack("<B", arr.ndim) + b"".join(struct.pack("<I", s) for s in arr.shape)
    return head + arr.astype("<f8").tobytes()


def save_checkpoint(
    path, cfg: TrainConfig, params: model_mod.ModelParams, state: AdamState
) -> None:
    named = model_mod.named_parameters(params)
    arrays: list[tuple[str, np.ndarray]] = [(k, p.data) for k, p in named.items()]
    for k in named:
        if k in state.m:
            arrays.append((f"opt.m.{k}", state.m[k]))
            arrays.append((f"opt.v.{k}", state.v[k]))
    config_text = config_to_text(cfg).encode("utf-8")
    digest = hashlib.sha256(config_text).hexdigest().encode("ascii")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(config_text)))
        fh.write(config_text)
        fh.write(digest)
        fh.write(struct.pack("<Q", state.step))
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            fh.write(_pack_array(name, np.asarray(arr, dtype=np.float64)))


@dataclass
class Checkpoint:
    config: TrainConfig
    config_digest: str
    step: int
    tensors: dict[str, np.ndarray]

    def restore(self) -> tuple[model_mod.ModelParams, AdamState]:
        """Rebuild params/optimizer with checkpoint values (bit-exact float64)."""
        mcfg = self.config.model_config()
        seeds = np.random.SeedSequence(self.config.seed).spawn(2)
        params = model_mod.init_params(mcfg, np.random.default_rng(seeds[0]))
        named = model_mod.named_parameters(params)
        state = AdamState(step=self.step)
        for name, tensor in named.items():
            if name not in self.tensors:
                raise ValueError(f"checkpoint is missing tensor {name!r}")
            stored = self.tensors[name]
            if stored.shape != tensor.data.shape:
                raise ValueError(
                    f"checkpoint tensor {name!r} has shape {stored.shape}, "
                    f"expected {tensor.data.shape}"
                )
            tensor.data = stored.copy()
            m_key, v_key = f"opt.m.{name}", f"opt.v.{name}"
            if m_key in self.tensors:
                state.m[name] = self.tensors[m_key].copy()
                state.v[name] = self.tensors[v_key].copy()
        return params, state


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    offset = 0

    def take(n):
        nonlocal offset
        if offset + n > len(data):
            raise ValueError("truncated checkpoint")
        chunk = data[offset : offset + n]
        offset += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    config_text = take(cfg_len).decode("utf-8")
    digest = take(64).decode("ascii")
    if hashlib.sha256(config_text.encode("utf-8")).hexdigest() != digest:
        raise ValueError("checkpoint config hash mismatch")
    (step,) = struct.unpack("<Q", take(8))
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).copy()
    if offset != len(data):
        raise ValueError("trailing bytes after checkpoint payload")
    return Checkpoint(config_from_text(config_text, env_override=False), digest, step, tensors)
