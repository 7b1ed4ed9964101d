"""Central finite-difference verification of analytic gradients.

The numeric side only ever calls the forward pass, so it stays independent
of the adjoint rules it is checking. Scalar-valued objectives are obtained
by contracting non-scalar outputs with a fixed random probe.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def numeric_gradients(
    fn: Callable[[], Tensor], leaves: Sequence[Tensor], h: float = DEFAULT_STEP
) -> list[np.ndarray]:
    """Central-difference gradient of `fn()` w.r.t. every coordinate of `leaves`.

    `fn` must rebuild its graph from the leaves' current `.data` on each call.
    """
    grads = []
    for leaf in leaves:
        flat = leaf.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = fn().item()
            flat[i] = keep - h
            down = fn().item()
            flat[i] = keep
            g[i] = (up - down) / (2.0 * h)
        grads.append(g.reshape(leaf.data.shape))
    return grads


def max_relative_error(
    fn: Callable[[], Tensor], leaves: Sequence[Tensor], h: float = DEFAULT_STEP
) -> float:
    """Worst |analytic - numeric| / max(1, |analytic|) over all coordinates."""
    for leaf in leaves:
        leaf.zero_grad()
    out = fn()
    out.backward()
    numeric = numeric_gradients(fn, leaves, h)
    worst = 0.0
    for leaf, num in zip(leaves, numeric):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        err = np.abs(analytic - num) / np.maximum(1.0, np.abs(analytic))
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst


def probe(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.standard_normal(shape)


def scalarize(out: Tensor, weights: np.ndarray) -> Tensor:
    """Contract a tensor with fixed weights so finite differences see a scalar."""
    return ad.tensor_sum(ad.mul(out, ad.constant(weights)))


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _primitive_cases(rng: np.random.Generator):
    """One scalarized objective per primitive, on small random operands."""

    def case(name, build):
        return name, build

    a = ad.parameter(rng.standard_normal((3, 4)))
    b = ad.parameter(rng.standard_normal((3, 4)))
    m1 = ad.parameter(rng.standard_normal((3, 4)))
    m2 = ad.parameter(rng.standard_normal((4, 2)))
    row = ad.parameter(rng.standard_normal((1, 4)))
    gain = ad.parameter(rng.standard_normal(4) * 0.1 + 1.0)
    bias = ad.parameter(rng.standard_normal(4) * 0.1)
    pos = ad.parameter(rng.standard_normal((3, 4)) * 0.5 + 2.0)  # keep log/div away from 0

    w34 = probe(rng, (3, 4))
    w32 = probe(rng, (3, 2))
    w43 = probe(rng, (4, 3))
    w24 = probe(rng, (2, 4))
    w64 = probe(rng, (6, 4))
    w14 = probe(rng, (1, 4))
    w31 = probe(rng, (3, 1))

    cases = [
        case("add", lambda: scalarize(ad.add(a, b), w34)),
        case("sub", lambda: scalarize(ad.sub(a, b), w34)),
        case("mul", lambda: scalarize(ad.mul(a, b), w34)),
        case("div", lambda: scalarize(ad.div(a, pos), w34)),
        case("scalar_mul", lambda: scalarize(ad.mul(a, ad.constant(1.7)), w34)),
        case("neg", lambda: scalarize(ad.neg(a), w34)),
        case("matmul", lambda: scalarize(ad.matmul(m1, m2), w32)),
        case("transpose", lambda: scalarize(ad.transpose(a), w43)),
        case("concat", lambda: scalarize(ad.concat([a, b], axis=0), w64)),
        case("narrow", lambda: scalarize(ad.narrow(a, 0, 1, 2), w24)),
        case("take_rows", lambda: scalarize(ad.take_rows(a, [2, 0, 0]), w34)),
        case("softmax", lambda: scalarize(ad.softmax(a), w34)),
        case("sigmoid", lambda: scalarize(ad.sigmoid(a), w34)),
        case("gelu", lambda: scalarize(ad.gelu(a), w34)),
        case("exp", lambda: scalarize(ad.exp(a), w34)),
        case("log", lambda: scalarize(ad.log(pos), w34)),
        case("layer_norm", lambda: scalarize(ad.layer_norm(a, gain, bias), w34)),
        case("mean", lambda: scalarize(ad.mean(a, axis=0, keepdims=True), w14)),
        case("sum", lambda: scalarize(ad.tensor_sum(a, axis=1, keepdims=True), w31)),
        case("l2_normalize", lambda: scalarize(ad.l2_normalize(a, axis=1), w34)),
    ]
    leaves = {
        "add": [a, b], "sub": [a, b], "mul": [a, b], "div": [a, pos],
        "scalar_mul": [a], "neg": [a], "matmul": [m1, m2], "transpose": [a],
        "concat": [a, b], "narrow": [a], "take_rows": [a], "softmax": [a],
        "sigmoid": [a], "gelu": [a], "exp": [a], "log": [pos],
        "layer_norm": [a, gain, bias], "mean": [a], "sum": [a],
        "l2_normalize": [a], "row": [row],
    }
    return cases, leaves


def check_primitives(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cases, leaves = _primitive_cases(rng)
    results = []
    for name, build in cases:
        err = max_relative_error(build, leaves[name])
        results.append(CheckResult(name, err, tolerance))
    return results


def check_blocks(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> list[CheckResult]:
    """Finite-difference checks through the composite blocks at toy sizes."""
    # imported here to keep this module importable before the blocks exist
    from . import model as model_mod
    from . import objective as objective_mod
    from . import tab as tab_mod
    from . import tdb as tdb_mod

    rng = np.random.default_rng(seed)
    results = []

    cfg = model_mod.toy_config(frames=3, dim=8, centers=3, temporal_layers=1, heads=2)
    params = model_mod.init_params(cfg, np.random.default_rng(seed + 1))
    leaves = list(model_mod.named_parameters(params).values())

    frames = ad.parameter(rng.standard_normal((cfg.frames, cfg.dim)) * 0.5)
    w_vec = probe(rng, (1, cfg.dim))

    def tdb_objective():
        out = tdb_mod.tdb_forward(frames, params.tdb, variant="tdb")
        return scalarize(out.video_global, w_vec)

    results.append(
        CheckResult("tdb_forward", max_relative_error(tdb_objective, leaves + [frames]), tolerance)
    )

    def tab_video_objective():
        aligned = tab_mod.tab_video(frames, params.tdb, params.tab, variant="tdb")
        return scalarize(aligned.pooled, w_vec)

    results.append(
        CheckResult(
            "tab_video", max_relative_error(tab_video_objective, leaves + [frames]), tolerance
        )
    )

    tokens = ad.parameter(rng.standard_normal((4, cfg.dim)) * 0.5)

    def tab_text_objective():
        aligned = tab_mod.tab_text(tokens, 3, params.tab)
        return scalarize(aligned.pooled, w_vec)

    results.append(
        CheckResult(
            "tab_text", max_relative_error(tab_text_objective, leaves + [tokens]), tolerance
        )
    )

    sim = ad.parameter(rng.standard_normal((3, 3)))
    scale = ad.parameter(np.array([0.3]))

    def loss_objective():
        return objective_mod.symmetric_loss(sim, ad.exp(scale))

    results.append(
        CheckResult("symmetric_loss", max_relative_error(loss_objective, [sim, scale]), tolerance)
    )
    return results


def run_suite(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> tuple[list[CheckResult], float]:
    """Full primitive + composite gradient suite; returns results and wall time."""
    start = time.perf_counter()
    results = check_primitives(seed, tolerance) + check_blocks(seed, tolerance)
    return results, time.perf_counter() - start


def format_table(results: Sequence[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'operation':<{width}}  max rel err  status"]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {r.max_rel_error:>11.3e}  {status}")
    return "\n".join(lines)
