"""Retrieval metrics (R@K, median rank, mean rank) and evaluation protocols.

Text-to-video ranks each caption's true video among all videos; video-to-text
scores every caption group by its maximum caption similarity and ranks the
query video's own group. Ties resolve optimistically (strictly-greater
counting) by default; a pessimistic mode is available for sensitivity checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import objective


@dataclass
class EvalPairing:
    """Ground truth for a retrieval split.

    `truth` maps every text id to its video id; `caption_groups` maps each
    video id to all of its caption ids and must partition the text set.
    """

    text_ids: list[str]
    video_ids: list[str]
    truth: dict[str, str]
    caption_groups: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self._check_truth()
        if not self.caption_groups:
            groups: dict[str, list[str]] = {v: [] for v in self.video_ids}
            for t in self.text_ids:
                groups[self.truth[t]].append(t)
            self.caption_groups = groups
        self.validate()

    def _check_truth(self) -> None:
        videos = set(self.video_ids)
        for t in self.text_ids:
            if t not in self.truth:
                raise ValueError(f"text {t!r} has no ground-truth video")
            if self.truth[t] not in videos:
                raise ValueError(f"text {t!r} maps to unknown video {self.truth[t]!r}")

    def validate(self) -> None:
        self._check_truth()
        grouped = [t for group in self.caption_groups.values() for t in group]
        if sorted(grouped) != sorted(self.text_ids):
            raise ValueError("caption groups do not partition the text set")


@dataclass
class RetrievalReport:
    direction: str  # "t2v" or "v2t"
    r1: float
    r5: float
    r10: float
    median_rank: float
    mean_rank: float

    def as_machine_lines(self) -> list[str]:
        return [
            f"{self.direction} R@1 {self.r1:.10g}",
            f"{self.direction} R@5 {self.r5:.10g}",
            f"{self.direction} R@10 {self.r10:.10g}",
            f"{self.direction} MdR {self.median_rank:.10g}",
            f"{self.direction} MnR {self.mean_rank:.10g}",
        ]


def rank_of_true(scores: np.ndarray, true_index: int, ties: str = "optimistic") -> int:
    """1 + number of candidates beating the true one.

    "optimistic" counts only strictly greater scores, so a full tie ranks 1;
    "pessimistic" counts ties against the true candidate as well.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if np.isnan(scores).any():
        raise ValueError("rank_of_true: NaN score encountered")
    target = scores[true_index]
    if ties == "optimistic":
        return 1 + int((scores > target).sum())
    if ties == "pessimistic":
        ahead = (scores >= target).sum() - 1  # the true candidate never beats itself
        return 1 + int(ahead)
    raise ValueError(f"unknown tie rule {ties!r}")


def _report(direction: str, ranks: np.ndarray) -> RetrievalReport:
    n = len(ranks)
    return RetrievalReport(
        direction=direction,
        r1=100.0 * int((ranks <= 1).sum()) / n,
        r5=100.0 * int((ranks <= 5).sum()) / n,
        r10=100.0 * int((ranks <= 10).sum()) / n,
        median_rank=float(np.median(ranks)),  # mean of middle two for even counts
        mean_rank=int(ranks.sum()) / n,  # integer ranks sum exactly
    )


def evaluate_t2v(
    similarities: np.ndarray, pairing: EvalPairing, ties: str = "optimistic"
) -> RetrievalReport:
    """Rank each text's true video; similarity rows are texts, columns videos."""
    s = np.asarray(similarities, dtype=np.float64)
    if s.shape != (len(pairing.text_ids), len(pairing.video_ids)):
        raise ValueError(
            f"similarity shape {s.shape} does not match "
            f"{len(pairing.text_ids)} texts x {len(pairing.video_ids)} videos"
        )
    video_index = {v: j for j, v in enumerate(pairing.video_ids)}
    ranks = np.array(
        [
            rank_of_true(s[i], video_index[pairing.truth[t]], ties)
            for i, t in enumerate(pairing.text_ids)
        ]
    )
    return _report("t2v", ranks)


def evaluate_v2t(
    similarities: np.ndarray, pairing: EvalPairing, ties: str = "optimistic"
) -> RetrievalReport:
    """Rank each video's own caption group; group score is its best caption."""
    s = np.asarray(similarities, dtype=np.float64)
    text_index = {t: i for i, t in enumerate(pairing.text_ids)}
    for v in pairing.video_ids:
        if not pairing.caption_groups.get(v):
            raise ValueError(f"video {v!r} has no captions")
    ranks = []
    for j, video in enumerate(pairing.video_ids):
        group_scores = np.array(
            [
                max(s[text_index[t], j] for t in pairing.caption_groups[u])
                for u in pairing.video_ids
            ]
        )
        ranks.append(rank_of_true(group_scores, j, ties))
    return _report("v2t", np.array(ranks))


def similarity_matrix(
    text_global: np.ndarray,
    text_aligned: np.ndarray,
    video_global: np.ndarray,
    video_aligned: np.ndarray,
    w: float = 0.5,
) -> np.ndarray:
    """Fused text-by-video cosine similarities from stacked embedding rows."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"fusion weight w must lie in [0, 1], got {w}")

    def unit_rows(x):
        x = np.asarray(x, dtype=np.float64)
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        return x / np.maximum(norms, objective.COSINE_EPS)

    s_global = unit_rows(text_global) @ unit_rows(video_global).T
    s_aligned = unit_rows(text_aligned) @ unit_rows(video_aligned).T
    return w * s_global + (1.0 - w) * s_aligned


def format_report_table(reports: list[RetrievalReport]) -> str:
    """Human-readable metrics table, one row per direction, paper-style rounding."""
    header = f"{'direction':<10} {'R@1':>6} {'R@5':>6} {'R@10':>6} {'MdR':>6} {'MnR':>6}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.direction:<10} {r.r1:>6.1f} {r.r5:>6.1f} {r.r10:>6.1f} "
            f"{r.median_rank:>6.1f} {r.mean_rank:>6.1f}"
        )
    return "\n".join(lines)


def machine_record(reports: list[RetrievalReport]) -> str:
    """One `direction metric value` line per metric, full precision."""
    return "\n".join(line for r in reports for line in r.as_machine_lines()) + "\n"


def parse_machine_record(text: str) -> dict[tuple[str, str], float]:
    out: dict[tuple[str, str], float] = {}
    for line in text.strip().splitlines():
        direction, metric, value = line.split()
        out[(direction, metric)] = float(value)
    return out


# --------------------------------------------------------------------------
# sibling protocol for order-discriminative synthetic sets


def sibling_sets_from_ids(video_ids: list[str]) -> list[list[str]]:
    """Group ids that differ only in a trailing letter (``vid0007a``/``vid0007b``)."""
    groups: dict[str, list[str]] = {}
    for v in video_ids:
        groups.setdefault(v[:-1], []).append(v)
    return [sorted(g) for _, g in sorted(groups.items()) if len(g) > 1]


def sibling_r1(
    similarities: np.ndarray,
    pairing: EvalPairing,
    sets: list[list[str]],
    rng: np.random.Generator,
) -> float:
    """Fraction of texts whose true video wins within its sibling set.

    Exact ties (inevitable for order-invariant encoders, whose sibling
    embeddings coincide) are broken uniformly at random so that chance-level
    behavior reads as ~1/set-size rather than as a spurious win.
    """
    video_index = {v: j for j, v in enumerate(pairing.video_ids)}
    text_index = {t: i for i, t in enumerate(pairing.text_ids)}
    wins = 0
    total = 0
    for group in sets:
        for video in group:
            captions = pairing.caption_groups[video]
            for t in captions:
                scores = np.array([similarities[text_index[t], video_index[v]] for v in group])
                jitter = rng.uniform(0.0, 1.0, size=len(group))
                best = max(range(len(group)), key=lambda k: (scores[k], jitter[k]))
                wins += group[best] == video
                total += 1
    if total == 0:
        raise ValueError("no sibling sets to evaluate")
    return wins / total
