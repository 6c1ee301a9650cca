"""
Reverse-mode autodiff on numpy arrays
=====================================

The Tensor class wraps an ndarray and records enough of the computation
graph to pull gradients back through it.  This walk-through builds a tiny
expression, differentiates it, and cross-checks one gradient against a
central finite difference.
"""

import numpy as np

import wasecom.tensor as T
from wasecom.tensor import Tensor

# A leaf marked requires_grad accumulates into .grad on backward().
w = Tensor(np.array([[0.3, -1.2], [0.8, 0.5]]), requires_grad=True)
x = Tensor(np.array([[1.0, 2.0]]))

# y = tanh(x @ w), loss = mean(y^2)
y = T.tanh(T.matmul(x, w))
loss = T.tmean(T.square(y))
loss.backward()

print("loss      :", float(loss.data))
print("dloss/dw  :\n", w.grad)

# Check the (0, 0) entry numerically.
h = 1e-6

def loss_at(w00):
    wd = w.data.copy()
    wd[0, 0] = w00
    return float(T.tmean(T.square(T.tanh(T.matmul(x, Tensor(wd))))).data)

numeric = (loss_at(0.3 + h) - loss_at(0.3 - h)) / (2 * h)
print("numeric   :", numeric)
print("autodiff  :", w.grad[0, 0])
print("agree     :", abs(numeric - w.grad[0, 0]) < 1e-8)

# Broadcasting reduces gradients back to the leaf shape automatically:
b = Tensor(np.array([1.0, -1.0]), requires_grad=True)
out = T.tsum(T.matmul(x, w) + b)   # b broadcasts over the batch row
out.backward()
print("db shape  :", b.grad.shape, "(matches the leaf, not the broadcast)")
