"""Tour of the autodiff engine: tensors, tapes, and gradient checking.

Run: python demos/01_autodiff_basics.py
"""
import numpy as np

from lethevit.tensor import (
    Tape, Tensor, backward, cross_entropy, matmul, softmax_rows, sum_all,
)

print("== forward values ==")
a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
b = Tensor([[0.0], [1.0]], requires_grad=True)
product = matmul(a, b)
print("matmul([[1,2],[3,4]], [[0],[1]]) ->", product.values.ravel())

probs = softmax_rows(Tensor([0.0, np.log(3.0)]))
print("softmax([0, ln 3]) ->", probs.values, "(expect [0.25, 0.75])")

loss = cross_entropy(Tensor([[1.0, 2.0]]), np.array([1]))
print(f"cross_entropy([[1,2]], label 1) -> {loss.item():.6f} (expect 0.313262)")

print("\n== reverse-mode gradients ==")
with Tape() as tape:
    out = sum_all(matmul(a, b))
backward(out, tape)
print("d(sum(a@b))/da =", a.grad.ravel(), " d/db =", b.grad.ravel())

print("\n== gradient check against central finite differences ==")
rng = np.random.default_rng(0)
x_val = rng.normal(size=(3, 3))
w_val = rng.normal(size=(3, 3))
labels = np.array([0, 2, 1])


def loss_value(xv, wv):
    return cross_entropy(matmul(Tensor(xv), Tensor(wv)), labels).item()


x = Tensor(x_val, requires_grad=True)
w = Tensor(w_val, requires_grad=True)
with Tape() as tape:
    out = cross_entropy(matmul(x, w), labels)
backward(out, tape)

step = 1e-5
fd = np.zeros_like(x_val)
for idx in np.ndindex(*x_val.shape):
    plus, minus = x_val.copy(), x_val.copy()
    plus[idx] += step
    minus[idx] -= step
    fd[idx] = (loss_value(plus, w_val) - loss_value(minus, w_val)) / (2 * step)

err = np.abs(x.grad - fd).max() / max(np.abs(fd).max(), 1e-8)
print(f"max relative error autodiff vs finite differences: {err:.2e}")
assert err < 1e-4
print("gradient check passed")
