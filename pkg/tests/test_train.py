"""Adam updates, the training loop, config files, and checkpoints."""

from __future__ import annotations

import numpy as np
import pytest

from tve import autodiff as ad
from tve import dataio
from tve import model as model_mod
from tve import train as tr


def scalar_adam_oracle(x0, grad_fn, lr, beta1, beta2, eps, steps):
    """Hand-rolled scalar Adam trajectory."""
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return x


def test_adam_zero_gradient_keeps_parameters():
    # zero gradient from a fresh state: parameters stay exactly put
    p = ad.parameter(np.array([1.0, -2.0]))
    state = tr.AdamState()
    tr.adam_step({"p": p}, {}, state, lr=0.1)
    np.testing.assert_array_equal(p.data, np.array([1.0, -2.0]))
    np.testing.assert_array_equal(state.m["p"], np.zeros(2))

    # once moments exist, zero gradients decay them geometrically
    tr.adam_step({"p": p}, {"p": np.array([0.5, 0.5])}, state, lr=0.1)
    m_before = state.m["p"].copy()
    tr.adam_step({"p": p}, {}, state, lr=0.1)
    assert (np.abs(state.m["p"]) < np.abs(m_before)).all()


def test_adam_first_step_closed_form():
    p = ad.parameter(np.array([0.0]))
    state = tr.AdamState()
    tr.adam_step({"p": p}, {"p": np.array([1.0])}, state, lr=0.01, eps=1e-8)
    # bias corrections cancel at t=1: update = -lr * g / (|g| + eps')
    assert abs(p.data[0] + 0.01) < 1e-9


def test_adam_matches_scalar_oracle_on_quadratic():
    lr, b1, b2, eps = 0.05, 0.9, 0.98, 1e-8
    p = ad.parameter(np.array([1.0]))
    state = tr.AdamState()
    for _ in range(100):
        tr.adam_step({"p": p}, {"p": 2.0 * p.data}, state, lr, b1, b2, eps)
    expected = scalar_adam_oracle(1.0, lambda x: 2.0 * x, lr, b1, b2, eps, 100)
    assert abs(p.data[0] - expected) < 1e-10


def test_adam_shape_mismatch():
    p = ad.parameter(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="shape"):
        tr.adam_step({"p": p}, {"p": np.zeros(3)}, tr.AdamState(), lr=0.1)


def test_config_round_trip_and_env_override(tmp_path, monkeypatch):
    cfg = tr.TrainConfig(batch_size=4, dim=16, w=0.3, tdb_variant="mean-pool", seed=9)
    text = tr.config_to_text(cfg)
    back = tr.config_from_text(text)
    assert back == cfg
    monkeypatch.setenv("TVE_SEED", "1234")
    assert tr.config_from_text(text).seed == 1234
    with pytest.raises(ValueError, match="unknown key"):
        tr.config_from_text("nonsense = 1\n")


def small_cfg(tmp_path, **kw):
    data = tmp_path / "data"
    synth = dataio.SyntheticConfig(
        num_concepts=6, num_pairs=8, frames=4, tokens=4, dim=12, noise=0.0, seed=5
    )
    videos, texts, manifest = dataio.synthesize_dataset(synth, data)
    defaults = dict(
        batch_size=8,
        epochs=kw.pop("epochs", 3),
        learning_rate=5e-3,
        dim=12,
        frames=4,
        tokens=4,
        heads=2,
        temporal_layers=1,
        centers=2,
        videos=str(videos),
        texts=str(texts),
        manifest=str(manifest),
        out_dir=str(tmp_path / "run"),
        seed=3,
    )
    defaults.update(kw)
    return tr.TrainConfig(**defaults)


def test_zero_epochs_checkpoint_equals_initialization(tmp_path):
    cfg = small_cfg(tmp_path, epochs=0)
    result = tr.train(cfg)
    mcfg = cfg.model_config()
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    fresh = model_mod.init_params(mcfg, np.random.default_rng(seeds[0]))
    trained = model_mod.named_parameters(result.params)
    for name, tensor in model_mod.named_parameters(fresh).items():
        np.testing.assert_array_equal(tensor.data, trained[name].data)


def test_training_reduces_loss_and_is_deterministic(tmp_path):
    cfg = small_cfg(tmp_path, epochs=12)
    first = tr.train(cfg)
    assert first.history[-1].loss < first.history[0].loss
    second = tr.train(small_cfg(tmp_path, epochs=12))
    for a, b in zip(first.history, second.history):
        assert a.loss == b.loss
        assert a.loss_global == b.loss_global
        assert a.loss_aligned == b.loss_aligned


def test_global_only_training_leaves_alignment_gradients_zero(tmp_path):
    cfg = small_cfg(tmp_path, epochs=1, w=1.0)
    dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
    mcfg = cfg.model_config()
    params = model_mod.init_params(mcfg, np.random.default_rng(0))
    batch = dataset.batch_inputs(dataset.pairs("train"))
    from tve import objective

    model_mod.zero_grads(params)
    sim_g, sim_a = model_mod.batch_similarities(params, mcfg, batch)
    parts = objective.combined_loss(sim_g, sim_a, cfg.w, params.logit_scale())
    parts.total.backward()
    np.testing.assert_array_equal(
        params.tab.shared.centers.grad, np.zeros_like(params.tab.shared.centers.data)
    )
    np.testing.assert_array_equal(
        params.tab.shared.anchors.grad, np.zeros_like(params.tab.shared.anchors.data)
    )
    assert np.abs(params.tdb.delta.w_q.grad).sum() > 0


def test_checkpoint_round_trip_preserves_forward(tmp_path):
    cfg = small_cfg(tmp_path, epochs=2)
    result = tr.train(cfg)
    mcfg = cfg.model_config()
    dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
    batch = dataset.batch_inputs(dataset.pairs("train")[:4])

    sim_before, _ = model_mod.batch_similarities(result.params, mcfg, batch)
    checkpoint = tr.load_checkpoint(result.checkpoint_path)
    assert checkpoint.step == result.state.step
    restored, state = checkpoint.restore()
    sim_after, _ = model_mod.batch_similarities(restored, mcfg, batch)
    np.testing.assert_array_equal(sim_before.data, sim_after.data)
    for name, arr in result.state.m.items():
        np.testing.assert_array_equal(arr, state.m[name])


def test_checkpoint_rejects_corruption(tmp_path):
    cfg = small_cfg(tmp_path, epochs=1)
    result = tr.train(cfg)
    raw = bytearray(result.checkpoint_path.read_bytes())
    raw[0] = ord("X")
    bad = tmp_path / "bad.tvck"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checkpoint"):
        tr.load_checkpoint(bad)


def test_divergence_reported_with_batch(tmp_path):
    cfg = small_cfg(tmp_path, epochs=1, learning_rate=1e6)
    # blow up the parameters directly: a non-finite loss must name the batch
    dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
    bad = dataset.texts.records[0]
    bad.values[:] = 1e308
    mcfg = cfg.model_config()
    params = model_mod.init_params(mcfg, np.random.default_rng(0))
    from tve import objective

    batch = dataset.batch_inputs(dataset.pairs("train"))
    with np.errstate(all="ignore"):
        sim_g, sim_a = model_mod.batch_similarities(params, mcfg, batch)
        parts = objective.combined_loss(sim_g, sim_a, 0.5, params.logit_scale())
    from tve.autodiff import has_nonfinite

    assert has_nonfinite(parts.total)


def test_evaluate_split_produces_reports(tmp_path):
    cfg = small_cfg(tmp_path, epochs=1)
    dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
    params = model_mod.init_params(cfg.model_config(), np.random.default_rng(1))
    reports, sims, pairing = tr.evaluate_split(
        params, cfg.model_config(), dataset, "train", w=0.5
    )
    assert reports[0].direction == "t2v" and reports[1].direction == "v2t"
    assert sims.shape == (8, 8)
