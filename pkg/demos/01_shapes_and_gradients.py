"""
Shapes, adjoints and gradients
==============================

A tour of the numerical core: the strided convolutions that turn a
29-token sentence into one latent column and back, and the finite-difference
checks that keep the hand-written backward passes honest.
"""

import numpy as np

from deconv_lvm import Rng, Tensor, build_config
from deconv_lvm import autodiff as ad
from deconv_lvm.gradcheck import run_all

###############################################################################
# The shape chain
# ---------------
# Window 5, stride 2: each layer maps length L to (L - 5) // 2 + 1.

cfg = build_config("desk")
length = cfg.t_max
for layer in range(1, 4):
    new = (length - cfg.window) // cfg.stride + 1
    print(f"layer {layer}: {length:2d} -> {new:2d}")
    length = new

###############################################################################
# Transposed convolution is the adjoint of convolution
# ----------------------------------------------------
# <conv(x), y> must equal <x, conv_transpose(y)> for any x, y.

r = np.random.default_rng(0)
x = r.normal(size=(1, 3, 29))
f = r.normal(size=(4, 3, 5))
y = r.normal(size=(1, 4, 13))
lhs = np.sum(ad.conv1d(Tensor(x), Tensor(f), 2).data * y)
rhs = np.sum(x * ad.conv1d_transpose(Tensor(y), Tensor(f), 2).data)
print(f"<Cx, y> = {lhs:.12f}")
print(f"<x, C'y> = {rhs:.12f}")

###############################################################################
# Gradient check
# --------------
# Every op and every parameter of the joint loss, against central differences.

errors = run_all(seed=0)
for name, err in sorted(errors.items(), key=lambda kv: -kv[1])[:5]:
    print(f"{err:.2e}  {name}")
print(f"max over {len(errors)} checks: {max(errors.values()):.2e}")

###############################################################################
# Seeded noise is reproducible
# ----------------------------

print(Rng(7).normal((3,)), Rng(7).normal((3,)))
