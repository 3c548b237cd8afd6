"""A walk through the numerics layer: tensors, backward passes, finite
differences, and the decoupled-weight-decay optimizer.

Run:  python3 demos/01_autodiff_and_optimizer.py
"""
import numpy as np

from sstrack import tensor as T
from sstrack.gradcheck import check_gradients
from sstrack.optim import AdamW
from sstrack.tensor import Tensor

rng = np.random.default_rng(0)

# Every array op builds a graph node; backward() walks it in reverse.
x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True, dtype=np.float64)
loss = T.sum_(x * x)
loss.backward()
print("d/dx sum(x^2) at [1,2,3]  ->", x.grad)          # [2, 4, 6]

# Gradients accumulate until cleared, which is what lets one optimizer
# step sum contributions from several loss terms.
loss2 = T.sum_(x * 3.0)
loss2.backward()
print("after a second backward    ->", x.grad)          # [5, 7, 9]

# The same machinery handles the transformer's building blocks.
w = Tensor(rng.standard_normal((3, 4)), requires_grad=True, dtype=np.float64)
def block():
    h = T.gelu(T.matmul(T.reshape(x, (1, 3)), w))
    return T.sum_(T.softmax(T.layer_norm(h), axis=-1) * h)
err = check_gradients(block, [x, w])
print(f"composite block vs central finite differences: rel err {err:.2e}")

# AdamW drives a toy quadratic: f(w) = (w - 3)^2 from w = 0.
p = Tensor(np.array([0.0], dtype=np.float32), requires_grad=True)
opt = AdamW({"w": p}, lr_backbone=0.1, weight_decay=0.0)
for step in range(100):
    p.grad = (2.0 * (p.data - 3.0)).astype(np.float32)
    opt.step()
print(f"after 100 AdamW steps on (w-3)^2: w = {p.data[0]:.4f}")

# Weight decay is decoupled: it shrinks parameters directly instead of
# being folded into the gradient, so a zero-gradient step still decays.
p2 = Tensor(np.array([2.0], dtype=np.float32), requires_grad=True)
opt2 = AdamW({"w": p2}, lr_backbone=0.5, weight_decay=0.01)
p2.grad = np.zeros(1, dtype=np.float32)
opt2.step()
print(f"pure-decay step: 2.0 -> {p2.data[0]:.4f} (expected {2.0 - 0.5 * 0.01 * 2.0})")
