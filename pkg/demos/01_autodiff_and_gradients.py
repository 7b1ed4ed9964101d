"""Tour of the tensor core: building graphs, backward passes, gradient checks.

Run:  python3 demos/01_autodiff_and_gradients.py
"""

import numpy as np

from tve import autodiff as ad
from tve import gradcheck

rng = np.random.default_rng(0)

# Tensors wrap float64 arrays. Parameters are trainable leaves; everything
# produced by an operation remembers how to push gradients back.
x = ad.parameter(rng.standard_normal((3, 4)), name="x")
w = ad.parameter(rng.standard_normal((4, 2)), name="w")

scores = ad.softmax(ad.matmul(x, w), axis=-1)
loss = ad.mean(ad.tensor_sum(ad.mul(scores, scores), axis=1))
print("loss:", loss.item())

loss.backward()
print("dL/dw row 0:", w.grad[0])

# The tape is rebuilt on every forward pass, so checking against central
# finite differences is just: rerun the closure with nudged inputs.
def objective():
    return ad.mean(ad.tensor_sum(ad.mul(ad.softmax(ad.matmul(x, w)), ad.constant(2.0)), axis=1))

err = gradcheck.max_relative_error(objective, [x, w])
print(f"max relative error vs finite differences: {err:.2e}")

# Every primitive and every composite block has the same check wired up:
results, elapsed = gradcheck.run_suite(seed=0)
print(gradcheck.format_table(results))
print(f"suite time: {elapsed:.1f}s")
