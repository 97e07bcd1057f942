"""The alignment primitive in isolation: a modulated deformable convolution
undoing a known translation, plus a finite-difference check of its gradients."""

import numpy as np

from hybridvc.neural import (
    Tensor,
    check_gradients,
    deform_conv2d,
    mse_loss,
)

rng = np.random.default_rng(1)
c, h, w = 2, 10, 10

# A feature map and a copy shifted 3 pixels right: offsets of (0, +3) on
# every tap re-align them through pure sampling.
feat = rng.normal(size=(1, c, h, w))
shifted = np.zeros_like(feat)
shifted[:, :, :, 3:] = feat[:, :, :, :-3]

identity = np.zeros((c, c, 3, 3))
for i in range(c):
    identity[i, i, 1, 1] = 1.0

offsets = np.zeros((1, 18, h, w))
offsets[:, 1::2] = 3.0  # dx = +3 for all nine taps
out = deform_conv2d(Tensor(shifted), Tensor(offsets),
                    Tensor(np.ones((1, 9, h, w))), Tensor(identity), Tensor(np.zeros(c)))
err = np.abs(out.data[:, :, :, :-3] - feat[:, :, :, :-3]).max()
print(f"alignment error after offsetting the shifted map back: {err:.2e}")

# Fractional offsets interpolate bilinearly.
offsets[:, 1::2] = 0.5
ramp = np.tile(np.arange(w, dtype=float), (1, c, h, 1))
mid = deform_conv2d(Tensor(ramp), Tensor(offsets), Tensor(np.ones((1, 9, h, w))),
                    Tensor(identity), Tensor(np.zeros(c)))
print(f"half-pixel offset on a ramp lands on midpoints: "
      f"{mid.data[0, 0, 5, :4]} (ramp was {ramp[0, 0, 5, :4]})")

# Every input of the op carries analytic gradients; verify against central
# finite differences on a small random instance.
x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
o = Tensor(rng.uniform(-1.3, 1.3, (1, 18, 6, 6)), requires_grad=True)
m = Tensor(rng.uniform(0.2, 0.8, (1, 9, 6, 6)), requires_grad=True)
wt = Tensor(rng.normal(size=(2, 2, 3, 3)) * 0.4, requires_grad=True)
b = Tensor(np.zeros(2), requires_grad=True)
target = rng.normal(size=(1, 2, 6, 6))
check_gradients(lambda xx, oo, mm, ww, bb: mse_loss(
    deform_conv2d(xx, oo, mm, ww, bb), target), [x, o, m, wt, b])
print("input / offset / mask / weight gradients all match finite differences.")
