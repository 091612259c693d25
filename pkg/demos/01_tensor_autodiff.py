"""Tour of the tensor core: forward math, backward pass, finite differences.

Run: python demos/01_tensor_autodiff.py
"""

import numpy as np

from podcount import Tensor, gradient_check
from podcount import tensor as T

print("== basic ops ==")
a = Tensor([[1.0, 2.0], [3.0, 4.0]])
b = Tensor([[5.0, 6.0], [7.0, 8.0]])
print("a @ b          =", T.matmul(a, b).data.tolist())
print("softmax([0,ln3]) =", T.softmax(Tensor([0.0, np.log(3.0)])).data)

print("\n== a scalar objective and its gradient ==")
x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
y = (T.gelu(x) * x).sum()
y.backward()
print("objective:", y.item())
print("dy/dx    :", x.grad)

print("\n== the same gradient, verified against central differences ==")
params = {"x": Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)}
err = gradient_check(lambda p: (T.gelu(p["x"]) * p["x"]).sum(), params, eps=1e-5)
print(f"max relative error vs finite differences: {err:.2e}")

print("\n== window partition round trip ==")
grid = Tensor(np.arange(16.0).reshape(4, 4, 1))
windows = T.window_partition(grid, 2)
print("windows shape:", windows.shape, "(4 tiles of 2x2)")
back = T.window_reverse(windows, 2, 4, 4)
print("round trip exact:", bool(np.array_equal(back.data, grid.data)))

print("\n== convolution with same padding ==")
image = Tensor(np.ones((1, 3, 3)))
kernel = Tensor(np.ones((1, 1, 3, 3)))
out = T.conv2d(image, kernel)
print("3x3 ones * 3x3 ones kernel ->")
print(out.data[0])
