"""Acceptance suite: one test per acceptance criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion. Everything here runs on synthetic data end to end.
"""

from __future__ import annotations

import hashlib
import time

import numpy as np
import pytest

import oracles
from tve import autodiff as ad
from tve import dataio
from tve import gradcheck
from tve import model as model_mod
from tve import objective
from tve import retrieval
from tve import tab
from tve import tdb
from tve import train as tr

GRADIENT_TOLERANCE = 1e-4
GRADIENT_BUDGET_SECONDS = 60.0
AGGREGATION_TOLERANCE = 1e-10
LOSS_TOLERANCE = 1e-12
SIBLING_TRAIN_BUDGET_SECONDS = 300.0
SIBLING_TARGET = 0.90
CONVERGENCE_FRACTION = 0.05
CONVERGENCE_STEPS = 200
FUZZ_TRIALS = 1000


def report(line: str) -> None:
    print(f"\n[PASS] {line}")


def test_gradient_suite():
    """Every primitive and composite block vs central finite differences."""
    results, elapsed = gradcheck.run_suite(seed=17, tolerance=GRADIENT_TOLERANCE)
    worst = max(r.max_rel_error for r in results)
    for r in results:
        assert r.passed, f"{r.name}: max rel err {r.max_rel_error:.3e}"
    assert elapsed < GRADIENT_BUDGET_SECONDS
    report(
        f"gradient suite: {len(results)} checks, worst rel err {worst:.2e} "
        f"< {GRADIENT_TOLERANCE}, {elapsed:.1f}s < {GRADIENT_BUDGET_SECONDS:.0f}s"
    )


def test_oracle_equivalence_aggregation():
    """Soft-assignment aggregation vs the double-loop oracle, 50 random instances."""
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(50):
        eta = int(rng.integers(1, 8))
        k = int(rng.integers(1, 6))
        d = int(rng.integers(2, 9))
        tokens = rng.standard_normal((eta, d))
        centers = rng.standard_normal((k, d))
        anchors = rng.standard_normal((k, d))
        weights = tab.center_confidence(ad.constant(tokens), ad.constant(centers))
        got = tab.aggregate(ad.constant(tokens), weights, ad.constant(anchors)).data
        expected = oracles.aggregate_ref(tokens, centers, anchors)
        worst = max(worst, float(np.abs(got - expected).max()))
    assert worst < AGGREGATION_TOLERANCE
    report(f"aggregation oracle: 50 instances, worst |diff| {worst:.2e} < {AGGREGATION_TOLERANCE}")


def test_oracle_equivalence_loss():
    """Symmetric contrastive loss vs the direct softmax oracle."""
    rng = np.random.default_rng(29)
    worst = 0.0
    for _ in range(50):
        b = int(rng.integers(1, 7))
        s = rng.standard_normal((b, b))
        scale = float(rng.uniform(0.2, 30.0))
        got = objective.symmetric_loss(ad.constant(s), scale).item()
        worst = max(worst, abs(got - oracles.symmetric_loss_ref(s, scale)))
    assert worst < LOSS_TOLERANCE
    report(f"loss oracle: 50 instances, worst |diff| {worst:.2e} < {LOSS_TOLERANCE}")


def test_oracle_equivalence_metrics():
    """Retrieval metrics vs a full-sort oracle, exactly, on 100 random 50x50 matrices."""
    rng = np.random.default_rng(31)
    pairing = retrieval.EvalPairing(
        [f"t{i}" for i in range(50)],
        [f"v{i}" for i in range(50)],
        {f"t{i}": f"v{i}" for i in range(50)},
    )
    for trial in range(100):
        s = rng.standard_normal((50, 50))
        got = retrieval.evaluate_t2v(s, pairing)
        ranks = [oracles.rank_ref(s[i], i) for i in range(50)]
        expected = oracles.metrics_ref(ranks)
        assert got.r1 == expected["R@1"]
        assert got.r5 == expected["R@5"]
        assert got.r10 == expected["R@10"]
        assert got.median_rank == expected["MdR"]
        assert got.mean_rank == expected["MnR"]
    report("metrics oracle: 100 random 50x50 matrices, all five metrics exactly equal")


def test_analytic_identities():
    rng = np.random.default_rng(37)

    # singleton batch loss is exactly zero
    assert objective.symmetric_loss(ad.constant(np.array([[0.81]])), 5.0).item() == 0.0

    # transpose invariance
    s = rng.standard_normal((6, 6))
    assert (
        abs(
            objective.symmetric_loss(ad.constant(s), 3.0).item()
            - objective.symmetric_loss(ad.constant(s.T.copy()), 3.0).item()
        )
        < 1e-12
    )

    # R@K monotone, metrics invariant under strictly increasing transforms
    pairing = retrieval.EvalPairing(
        [f"t{i}" for i in range(20)],
        [f"v{i}" for i in range(20)],
        {f"t{i}": f"v{i}" for i in range(20)},
    )
    for _ in range(10):
        m = rng.standard_normal((20, 20))
        base = retrieval.evaluate_t2v(m, pairing)
        assert base.r1 <= base.r5 <= base.r10
        for f in (np.exp, lambda x: 2.5 * x - 3.0):
            other = retrieval.evaluate_t2v(f(m), pairing)
            assert (other.r1, other.r5, other.r10, other.median_rank, other.mean_rank) == (
                base.r1, base.r5, base.r10, base.median_rank, base.mean_rank,
            )

    # mean pooling is exactly permutation invariant
    params = model_mod.init_params(
        model_mod.toy_config(frames=6, dim=8, centers=2, temporal_layers=1, heads=2),
        np.random.default_rng(1),
    )
    frames = rng.standard_normal((6, 8))
    pooled = tdb.tdb_forward(ad.constant(frames), params.tdb, "mean-pool").video_global.data
    for _ in range(10):
        perm = rng.permutation(6)
        other = tdb.tdb_forward(ad.constant(frames[perm]), params.tdb, "mean-pool").video_global.data
        assert np.array_equal(other, pooled)

    report(
        "analytic identities: B=1 loss 0, transpose invariance, R@K monotone, "
        "monotone-transform invariance, exact mean-pool permutation invariance"
    )


@pytest.fixture(scope="module")
def sibling_dataset(tmp_path_factory):
    cfg = dataio.SyntheticConfig(
        num_concepts=24,
        num_pairs=128,  # 64 sibling pairs of videos
        frames=8,
        tokens=8,
        dim=64,
        noise=0.05,
        order_discriminative=True,
        seed=42,
    )
    out = tmp_path_factory.mktemp("siblings")
    videos, texts, manifest = dataio.synthesize_dataset(cfg, out)
    return str(videos), str(texts), str(manifest)


def _experiment_config(sibling_dataset, **kw):
    videos, texts, manifest = sibling_dataset
    base = dict(
        batch_size=128,  # full batch: every caption meets its sibling as a negative
        epochs=20,
        learning_rate=2e-3,
        dim=64,
        frames=8,
        tokens=8,
        heads=8,
        temporal_layers=4,
        centers=5,
        w=0.5,
        videos=videos,
        texts=texts,
        manifest=manifest,
        out_dir="",
        seed=7,
    )
    base.update(kw)
    return tr.TrainConfig(**base)


def _sibling_accuracy(result, cfg):
    dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
    _, sims, pairing = tr.evaluate_split(
        result.params, cfg.model_config(), dataset, "train", cfg.w
    )
    sets = retrieval.sibling_sets_from_ids(pairing.video_ids)
    assert len(sets) == 64
    return retrieval.sibling_r1(sims, pairing, sets, np.random.default_rng(0))


def test_order_sensitivity_mean_pool_at_chance(sibling_dataset):
    """Order-invariant encoding cannot beat chance on order-only siblings."""
    cfg = _experiment_config(
        sibling_dataset, tdb_variant="mean-pool", tab_variant="base", epochs=3
    )
    result = tr.train(cfg)
    accuracy = _sibling_accuracy(result, cfg)
    n = 128
    half_width = 1.96 * np.sqrt(0.25 / n)
    assert abs(accuracy - 0.5) <= half_width, (
        f"mean-pool sibling R@1 {accuracy:.3f} outside the 95% chance interval "
        f"[{0.5 - half_width:.3f}, {0.5 + half_width:.3f}]"
    )
    report(
        f"order sensitivity (control): mean-pool sibling R@1 {accuracy:.3f} within "
        f"95% binomial interval around 0.5 (+-{half_width:.3f}, n={n})"
    )


def test_order_sensitivity_tdb_separates_siblings(sibling_dataset):
    """The difference-enhanced encoder separates order-only siblings after training."""
    cfg = _experiment_config(sibling_dataset, tdb_variant="tdb", tab_variant="tdb")
    start = time.perf_counter()
    result = tr.train(cfg)
    train_seconds = time.perf_counter() - start
    accuracy = _sibling_accuracy(result, cfg)
    assert train_seconds < SIBLING_TRAIN_BUDGET_SECONDS
    assert accuracy >= SIBLING_TARGET, f"sibling R@1 {accuracy:.3f} < {SIBLING_TARGET}"
    report(
        f"order sensitivity: difference-enhanced sibling R@1 {accuracy:.3f} >= "
        f"{SIBLING_TARGET} after {train_seconds:.0f}s of training (< 300s)"
    )


@pytest.fixture(scope="module")
def noiseless_dataset(tmp_path_factory):
    cfg = dataio.SyntheticConfig(
        num_concepts=6, num_pairs=8, frames=4, tokens=4, dim=32, noise=0.0, seed=11
    )
    out = tmp_path_factory.mktemp("noiseless")
    videos, texts, manifest = dataio.synthesize_dataset(cfg, out)
    return str(videos), str(texts), str(manifest)


def _convergence_config(noiseless_dataset):
    videos, texts, manifest = noiseless_dataset
    return tr.TrainConfig(
        batch_size=8,
        epochs=CONVERGENCE_STEPS,  # one full batch per epoch = one step
        learning_rate=3e-3,
        dim=32,
        frames=4,
        tokens=4,
        heads=2,
        temporal_layers=2,
        centers=3,
        w=0.5,
        videos=videos,
        texts=texts,
        manifest=manifest,
        out_dir="",
        seed=13,
    )


def test_convergence_on_noiseless_pairs(noiseless_dataset):
    cfg = _convergence_config(noiseless_dataset)
    first = tr.train(cfg)
    initial = first.history[0].loss
    final = first.history[-1].loss
    assert final < CONVERGENCE_FRACTION * initial, (
        f"loss {final:.5f} not below {CONVERGENCE_FRACTION:.0%} of initial {initial:.5f}"
    )
    second = tr.train(_convergence_config(noiseless_dataset))
    assert [e.loss for e in first.history] == [e.loss for e in second.history]
    report(
        f"convergence: loss {initial:.4f} -> {final:.5f} "
        f"({final / initial:.1%} of initial, < {CONVERGENCE_FRACTION:.0%}) in "
        f"{CONVERGENCE_STEPS} steps; rerun loss curve identical"
    )


def test_pipeline_determinism(tmp_path):
    """synth -> train -> eval twice with one seed gives byte-identical reports."""

    def run_once(tag: str) -> bytes:
        root = tmp_path / tag
        synth = dataio.SyntheticConfig(
            num_concepts=8, num_pairs=8, frames=4, tokens=4, dim=16, noise=0.02, seed=21
        )
        videos, texts, manifest = dataio.synthesize_dataset(synth, root / "data")
        cfg = tr.TrainConfig(
            batch_size=8,
            epochs=10,
            learning_rate=1e-3,
            dim=16,
            frames=4,
            tokens=4,
            heads=2,
            temporal_layers=1,
            centers=2,
            w=0.5,
            videos=str(videos),
            texts=str(texts),
            manifest=str(manifest),
            out_dir=str(root / "run"),
            seed=34,
        )
        result = tr.train(cfg)
        dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
        reports, _, _ = tr.evaluate_split(
            result.params, cfg.model_config(), dataset, "train", cfg.w
        )
        return retrieval.machine_record(reports).encode("utf-8")

    first = run_once("one")
    second = run_once("two")
    assert hashlib.sha256(first).digest() == hashlib.sha256(second).digest()
    report("pipeline determinism: synth -> train -> eval reports byte-identical across reruns")


def test_file_format_fuzz(tmp_path):
    """1000 single-byte corruptions: every one rejected or detectably different."""
    rng = np.random.default_rng(47)
    records = [
        dataio.EmbeddingRecord(
            f"clip{i}",
            3,
            rng.standard_normal((3, 4)).astype(np.float32).astype(np.float64),
        )
        for i in range(3)
    ]
    path = tmp_path / "fuzz.tvem"
    dataio.write_embeddings(path, dataio.EmbeddingFile(dataio.KIND_VIDEO, 3, 4, records))
    original = path.read_bytes()
    baseline = dataio.parse_embeddings(original)

    rejected = 0
    detected = 0
    for _ in range(FUZZ_TRIALS):
        pos = int(rng.integers(len(original)))
        delta = int(rng.integers(1, 256))
        corrupted = bytearray(original)
        corrupted[pos] = (corrupted[pos] + delta) % 256
        try:
            parsed = dataio.parse_embeddings(bytes(corrupted))
        except dataio.EmbeddingFormatError:
            rejected += 1
            continue
        # parsed without error: the corruption must be visible in the content
        changed = (
            (parsed.kind, parsed.seq_len, parsed.dim) != (baseline.kind, baseline.seq_len, baseline.dim)
            or len(parsed.records) != len(baseline.records)
            or any(
                a.item_id != b.item_id
                or a.valid_len != b.valid_len
                or not np.array_equal(a.values, b.values)
                for a, b in zip(parsed.records, baseline.records)
            )
        )
        assert changed, "corruption passed through undetected"
        detected += 1
    assert rejected + detected == FUZZ_TRIALS
    report(
        f"file-format fuzz: {FUZZ_TRIALS} corruptions, {rejected} rejected, "
        f"{detected} parsed-but-changed, 0 crashes, 0 undetected"
    )
