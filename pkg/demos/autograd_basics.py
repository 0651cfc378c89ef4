"""
Reverse-mode gradients on numpy arrays
======================================

Build a small expression, backpropagate through it and compare the result
with central finite differences.
"""

import numpy as np

from ddad.gradcheck import finite_difference_gradient, relative_error
from ddad.tensor import Tensor, backward, matmul, softmax

rng = np.random.default_rng(0)

# %%
# A two-layer expression: softmax(tanh(x W1) W2), reduced to a scalar.
x = Tensor(rng.normal(size=(4, 3)))
w1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
w2 = Tensor(rng.normal(size=(5, 2)), requires_grad=True)


def f(w):
    probs = softmax(matmul(matmul(x, w).tanh(), w2))
    return (probs * probs).sum()


loss = f(w1)
backward(loss)
print("loss", loss.item())

# %%
# The analytic gradient of w1 against a numerical one.
numeric = finite_difference_gradient(f, Tensor(w1.data)).data
print("max relative error", relative_error(w1.grad, numeric))

# %%
# Gradients only accumulate on leaves, so w2 has one too and x has none.
print("w2 grad shape", w2.grad.shape, "x grad", x.grad)
