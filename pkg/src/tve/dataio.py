"""Binary embedding files, dataset manifests, and the synthetic pair generator.

File layout (little-endian, no padding):
    magic "TVEM" | version u32 | kind u32 (0 video / 1 text) | count u32
    | seq_len u32 | dim u32
    then per record: id_len u16 | id utf-8 | valid_len u16
    | seq_len*dim float32 values.

Values are binary32 on disk and promoted to binary64 in memory, so a
read-after-write round trip is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TVEM"
VERSION = 1
KIND_VIDEO = 0
KIND_TEXT = 1

_HEADER = struct.Struct("<4sIIIII")
_U16 = struct.Struct("<H")


class EmbeddingFormatError(ValueError):
    """Malformed or inconsistent embedding file."""


@dataclass
class EmbeddingRecord:
    item_id: str
    valid_len: int
    values: np.ndarray  # seq_len x dim, float64 in memory


@dataclass
class EmbeddingFile:
    kind: int
    seq_len: int
    dim: int
    records: list[EmbeddingRecord]
    version: int = VERSION

    def validate(self) -> None:
        if self.kind not in (KIND_VIDEO, KIND_TEXT):
            raise EmbeddingFormatError(f"unknown kind {self.kind}")
        if self.seq_len < 1 or self.dim < 1:
            raise EmbeddingFormatError(f"bad dimensions seq_len={self.seq_len} dim={self.dim}")
        seen: set[str] = set()
        for i, rec in enumerate(self.records):
            if rec.values.shape != (self.seq_len, self.dim):
                raise EmbeddingFormatError(
                    f"record {i} ({rec.item_id!r}) has shape {rec.values.shape}, "
                    f"expected ({self.seq_len}, {self.dim})"
                )
            if not 0 <= rec.valid_len <= self.seq_len:
                raise EmbeddingFormatError(
                    f"record {i} ({rec.item_id!r}) valid_len {rec.valid_len} "
                    f"exceeds seq_len {self.seq_len}"
                )
            if not np.isfinite(rec.values).all():
                raise EmbeddingFormatError(f"record {i} ({rec.item_id!r}) holds non-finite values")
            if rec.item_id in seen:
                raise EmbeddingFormatError(f"duplicate id {rec.item_id!r}")
            seen.add(rec.item_id)

    def by_id(self) -> dict[str, EmbeddingRecord]:
        return {rec.item_id: rec for rec in self.records}


def write_embeddings(path: str | Path, ef: EmbeddingFile) -> None:
    ef.validate()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, ef.version, ef.kind, len(ef.records), ef.seq_len, ef.dim))
        for rec in ef.records:
            raw_id = rec.item_id.encode("utf-8")
            if len(raw_id) > 0xFFFF:
                raise EmbeddingFormatError(f"id too long: {rec.item_id!r}")
            fh.write(_U16.pack(len(raw_id)))
            fh.write(raw_id)
            fh.write(_U16.pack(rec.valid_len))
            fh.write(np.ascontiguousarray(rec.values, dtype="<f4").tobytes())


def read_embeddings(path: str | Path) -> EmbeddingFile:
    """Parse and validate an embedding file; raises EmbeddingFormatError on any defect."""
    data = Path(path).read_bytes()
    return parse_embeddings(data)


def parse_embeddings(data: bytes) -> EmbeddingFile:
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError("unrecognized format: truncated header")
    magic, version, kind, count, seq_len, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError("unrecognized format: bad magic")
    if version != VERSION:
        raise EmbeddingFormatError(f"unrecognized format: unsupported version {version}")
    if kind not in (KIND_VIDEO, KIND_TEXT):
        raise EmbeddingFormatError(f"unrecognized format: unknown kind {kind}")
    if seq_len < 1 or dim < 1:
        raise EmbeddingFormatError(f"unrecognized format: bad sizes seq_len={seq_len} dim={dim}")
    # size guard before any allocation: a flipped count byte must not trigger
    # a giant read attempt
    payload = seq_len * dim * 4
    offset = _HEADER.size
    records: list[EmbeddingRecord] = []
    for i in range(count):
        if offset + 2 > len(data):
            raise EmbeddingFormatError(f"corrupt file at record {i}: missing id length")
        (id_len,) = _U16.unpack_from(data, offset)
        offset += 2
        if offset + id_len + 2 + payload > len(data):
            raise EmbeddingFormatError(f"corrupt file at record {i}: truncated record")
        try:
            item_id = data[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EmbeddingFormatError(f"corrupt file at record {i}: bad id encoding") from exc
        offset += id_len
        (valid_len,) = _U16.unpack_from(data, offset)
        offset += 2
        with np.errstate(invalid="ignore"):  # corrupt NaN payloads are caught by validate()
            values = (
                np.frombuffer(data, dtype="<f4", count=seq_len * dim, offset=offset)
                .astype(np.float64)
                .reshape(seq_len, dim)
            )
        offset += payload
        records.append(EmbeddingRecord(item_id, valid_len, values))
    if offset != len(data):
        raise EmbeddingFormatError("corrupt file: trailing bytes after final record")
    ef = EmbeddingFile(kind=kind, seq_len=seq_len, dim=dim, records=records, version=version)
    ef.validate()
    return ef


# ---------------------------------------------------------------------------
# manifests


@dataclass
class ManifestEntry:
    text_id: str
    video_id: str
    split: str


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(f"{e.text_id}\t{e.video_id}\t{e.split}\n")


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"manifest line {lineno}: expected 3 tab-separated fields")
        if parts[2] not in ("train", "val", "test"):
            raise ValueError(f"manifest line {lineno}: unknown split {parts[2]!r}")
        entries.append(ManifestEntry(*parts))
    return entries


def check_manifest(
    entries: list[ManifestEntry], videos: EmbeddingFile, texts: EmbeddingFile
) -> None:
    """Every referenced id must exist; every text appears exactly once."""
    video_ids = {r.item_id for r in videos.records}
    text_ids = {r.item_id for r in texts.records}
    seen_texts = set()
    for e in entries:
        if e.video_id not in video_ids:
            raise ValueError(f"manifest references unknown video {e.video_id!r}")
        if e.text_id not in text_ids:
            raise ValueError(f"manifest references unknown text {e.text_id!r}")
        if e.text_id in seen_texts:
            raise ValueError(f"manifest lists text {e.text_id!r} twice")
        seen_texts.add(e.text_id)


# ---------------------------------------------------------------------------
# synthetic paired-embedding generator


@dataclass
class SyntheticConfig:
    num_concepts: int = 16
    num_pairs: int = 32
    frames: int = 8
    tokens: int = 8
    dim: int = 32
    noise: float = 0.05
    order_discriminative: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.num_concepts, self.num_pairs, self.frames, self.tokens, self.dim) < 1:
            raise ValueError("all synthetic sizes must be positive")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if self.order_discriminative:
            if self.frames < 3:
                raise ValueError(
                    "order-discriminative generation needs at least 3 frames "
                    "(the difference-enhanced path resamples to >= 2)"
                )
            if self.num_pairs % 2:
                raise ValueError("order-discriminative generation needs an even pair count")
        if self.tokens < 4:
            raise ValueError("token length must be at least 4 ([CLS] + 2 words + [SEP])")


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# weight of the position tag mixed into ordered word tokens, and decay of the
# order-sensitive [CLS] summary
_POSITION_TAG_WEIGHT = 0.5
_CLS_DECAY = 0.5


def synthesize_dataset(
    cfg: SyntheticConfig, out_dir: str | Path
) -> tuple[Path, Path, Path]:
    """Write paired video/text embedding files plus a manifest; fully seeded.

    Ordinary mode draws a two-segment concept trajectory per pair. In
    order-discriminative mode pairs come as siblings ``...a``/``...b`` that
    share the exact same frame rows in opposite temporal order, while their
    captions share words and differ only through order-dependent token and
    [CLS] construction, the way a contextual text encoder would.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    concepts = _unit_rows(rng, cfg.num_concepts, cfg.dim)
    words = concepts  # captions speak the same concept vectors the frames show
    position_tags = _unit_rows(rng, 2, cfg.dim) * _POSITION_TAG_WEIGHT
    sep = _unit_rows(rng, 1, cfg.dim)[0]

    video_records: list[EmbeddingRecord] = []
    text_records: list[EmbeddingRecord] = []
    entries: list[ManifestEntry] = []

    def noise(shape):
        return cfg.noise * rng.standard_normal(shape)

    def caption(first: int, second: int) -> tuple[np.ndarray, int]:
        rows = np.zeros((cfg.tokens, cfg.dim))
        summary = words[first] + _CLS_DECAY * words[second]
        rows[0] = summary / np.linalg.norm(summary) + noise(cfg.dim)
        rows[1] = words[first] + position_tags[0] + noise(cfg.dim)
        rows[2] = words[second] + position_tags[1] + noise(cfg.dim)
        rows[3] = sep + noise(cfg.dim)
        return rows, 4

    def segment_frames(first: int, second: int) -> np.ndarray:
        head = cfg.frames // 2
        rows = np.empty((cfg.frames, cfg.dim))
        rows[:head] = concepts[first] + noise((head, cfg.dim))
        rows[head:] = concepts[second] + noise((cfg.frames - head, cfg.dim))
        return rows

    if cfg.order_discriminative:
        for s in range(cfg.num_pairs // 2):
            first, second = rng.choice(cfg.num_concepts, size=2, replace=False)
            base = segment_frames(first, second)
            for tag, frames, (w1, w2) in (
                ("a", base, (first, second)),
                ("b", base[::-1].copy(), (second, first)),
            ):
                vid, tid = f"vid{s:04d}{tag}", f"txt{s:04d}{tag}"
                video_records.append(EmbeddingRecord(vid, cfg.frames, frames))
                rows, used = caption(w1, w2)
                text_records.append(EmbeddingRecord(tid, used, rows))
                entries.append(ManifestEntry(tid, vid, "train"))
    else:
        for p in range(cfg.num_pairs):
            first, second = rng.choice(cfg.num_concepts, size=2, replace=False)
            vid, tid = f"vid{p:04d}", f"txt{p:04d}"
            video_records.append(EmbeddingRecord(vid, cfg.frames, segment_frames(first, second)))
            rows, used = caption(first, second)
            text_records.append(EmbeddingRecord(tid, used, rows))
            entries.append(ManifestEntry(tid, vid, "train"))

    video_path = out / "videos.tvem"
    text_path = out / "texts.tvem"
    manifest_path = out / "manifest.tsv"
    write_embeddings(
        video_path,
        EmbeddingFile(KIND_VIDEO, cfg.frames, cfg.dim, video_records),
    )
    write_embeddings(text_path, EmbeddingFile(KIND_TEXT, cfg.tokens, cfg.dim, text_records))
    write_manifest(manifest_path, entries)
    return video_path, text_path, manifest_path
